"""Element-level geometry for linear tetrahedra and trilinear hexahedra.

Every element contributes a symmetric matrix ``A`` (units: metres) such
that its conduction load is ``kbar * A @ T_local`` for a scalar element
conductivity ``kbar``.  For a 4-node tet the shape gradients are constant
and ``A = V * B.T @ B`` exactly.  For an 8-node hex we use one-point
integration at the reference-cube centre, ``A = 8 * det(J) * B.T @ B``,
which keeps the per-element cost flat and never produces the rank-full
stiffness of a 2x2x2 rule; the "volume" stored for a hex is the same
one-point estimate ``8 * det(J)``.

Node ordering for hexes follows the usual trilinear convention: the four
corners of the bottom face counter-clockwise (viewed from +z), then the
top face in the same order.  ``HEX_VERTEX_SIGNS`` encodes it.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DegenerateElementError


class ElemKind(Enum):
    TET4 = "tet4"
    HEX8 = "hex8"

    @property
    def n_nodes(self) -> int:
        return 4 if self is ElemKind.TET4 else 8


# Reference-cube corner signs, one row per node, columns are (xi, eta, zeta).
HEX_VERTEX_SIGNS = np.array(
    [
        [-1.0, -1.0, -1.0],
        [1.0, -1.0, -1.0],
        [1.0, 1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
        [1.0, -1.0, 1.0],
        [1.0, 1.0, 1.0],
        [-1.0, 1.0, 1.0],
    ]
)
HEX_VERTEX_SIGNS.setflags(write=False)


@dataclass(frozen=True)
class ElementPrecomp:
    """Temperature-independent per-element data.

    ``unit_conductance`` is the matrix A above: multiply by the element's
    scalar conductivity to get its conduction operator.  It is exactly
    symmetric (entries are computed once per unordered pair) and each of
    its rows sums to zero analytically, which the solver exploits to keep
    uniform fields in exact equilibrium.
    """

    kind: ElemKind
    node_ids: np.ndarray
    unit_conductance: np.ndarray
    volume: float


def _inv3(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cofactor inverse of (..., 3, 3) matrices; returns (inverse, det).

    Avoids LAPACK so the scalar and batched paths are bitwise identical.
    Division by a non-positive det is the caller's problem to detect.
    """
    a, b, c = m[..., 0, 0], m[..., 0, 1], m[..., 0, 2]
    d, e, f = m[..., 1, 0], m[..., 1, 1], m[..., 1, 2]
    g, h, i = m[..., 2, 0], m[..., 2, 1], m[..., 2, 2]

    ca = e * i - f * h
    cb = f * g - d * i
    cc = d * h - e * g
    det = a * ca + b * cb + c * cc

    inv = np.empty(m.shape, dtype=np.float64)
    inv[..., 0, 0] = ca
    inv[..., 1, 0] = cb
    inv[..., 2, 0] = cc
    inv[..., 0, 1] = c * h - b * i
    inv[..., 1, 1] = a * i - c * g
    inv[..., 2, 1] = b * g - a * h
    inv[..., 0, 2] = b * f - c * e
    inv[..., 1, 2] = c * d - a * f
    inv[..., 2, 2] = a * e - b * d
    with np.errstate(divide="ignore", invalid="ignore"):
        inv /= det[..., None, None]
    return inv, det


def batch_tet_geometry(coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Shape gradients and volumes for a stack of tets.

    coords: (E, 4, 3) vertex positions.
    Returns (B, volume) with B of shape (E, 3, 4); B[:, :, a] is the
    gradient of shape function a.  Raises on non-positive volume.
    """
    coords = np.asarray(coords, dtype=np.float64)
    edges = coords[..., 1:, :] - coords[..., :1, :]  # (E, 3, 3), rows are edges
    # x = x0 + edges.T @ xi, so grad(xi_a) is row a of inv(edges.T).
    inv, det = _inv3(np.swapaxes(edges, -1, -2))
    if np.any(det <= 0.0):
        bad = int(np.argmax(det <= 0.0))
        raise DegenerateElementError(
            f"tet has non-positive volume (6V = {det.ravel()[bad]:.6g})", element=bad
        )
    b = np.empty(coords.shape[:-2] + (3, 4), dtype=np.float64)
    b[..., 1:] = np.swapaxes(inv, -1, -2)
    b[..., 0] = -(b[..., 1] + b[..., 2] + b[..., 3])
    return b, det / 6.0


def batch_hex_geometry(coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One-point shape gradients and Jacobian determinants for hexes.

    coords: (E, 8, 3).  Returns (B, detj) with B of shape (E, 3, 8),
    evaluated at the reference-cube centre.  Raises on det(J) <= 0.
    """
    coords = np.asarray(coords, dtype=np.float64)
    dn = HEX_VERTEX_SIGNS / 8.0  # (8, 3) reference gradients at the centre
    jac = np.swapaxes(coords, -1, -2) @ dn  # (E, 3, 3)
    inv, det = _inv3(jac)
    if np.any(det <= 0.0):
        bad = int(np.argmax(det <= 0.0))
        raise DegenerateElementError(
            f"hex has non-positive Jacobian (det J = {det.ravel()[bad]:.6g})",
            element=bad,
        )
    b = np.swapaxes(inv, -1, -2) @ dn.T  # inv(J).T @ dn.T -> (E, 3, 8)
    return b, det


def tet_geometry(coords: np.ndarray) -> tuple[np.ndarray, float]:
    """Single-element convenience wrapper around batch_tet_geometry."""
    b, vol = batch_tet_geometry(np.asarray(coords, dtype=np.float64)[None])
    return b[0], float(vol[0])


def hex_geometry(coords: np.ndarray) -> tuple[np.ndarray, float]:
    """Single-element convenience wrapper around batch_hex_geometry."""
    b, det = batch_hex_geometry(np.asarray(coords, dtype=np.float64)[None])
    return b[0], float(det[0])


def _unit_conductance(b: np.ndarray, weight: np.ndarray) -> np.ndarray:
    # einsum keeps A_ij and A_ji the same float ops, so A is exactly symmetric
    a = np.einsum("eki,ekj->eij", b, b)
    a *= weight[:, None, None]
    return a


def batch_precompute(kind: ElemKind, coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(A, volume) stacks for all elements of one kind.

    coords: (E, n_nodes, 3).  A has shape (E, n, n) and is exactly
    symmetric; volume is (E,).
    """
    if kind is ElemKind.TET4:
        b, vol = batch_tet_geometry(coords)
        return _unit_conductance(b, vol), vol
    b, det = batch_hex_geometry(coords)
    weight = 8.0 * det
    return _unit_conductance(b, weight), weight


def build_precomp(kind: ElemKind, node_ids, coords: np.ndarray) -> ElementPrecomp:
    """Precompute one element given its global node ids and positions."""
    node_ids = np.asarray(node_ids, dtype=np.int64)
    if node_ids.shape != (kind.n_nodes,):
        raise ValueError(
            f"{kind.value} needs {kind.n_nodes} node ids, got shape {node_ids.shape}"
        )
    a, vol = batch_precompute(kind, np.asarray(coords, dtype=np.float64)[None])
    return ElementPrecomp(
        kind=kind, node_ids=node_ids, unit_conductance=a[0], volume=float(vol[0])
    )
