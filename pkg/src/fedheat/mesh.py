"""Unstructured meshes of 4-node tets and 8-node hexes, with named node sets.

File format (plain ASCII, ``#`` starts a comment, blank lines ignored)::

    nodes <count>
    <x> <y> <z>            # one line per node, float, metres
    elements <count>
    tet4 <i0> <i1> <i2> <i3>
    hex8 <i0> ... <i7>
    nodeset <name> <count>
    <i0> <i1> ...          # whitespace separated, may span lines

Node indices are 0-based.  Any number of ``nodeset`` blocks may follow the
element block.  Parsing validates everything: index ranges, element
orientation (positive volume / Jacobian), finite coordinates, and node-set
uniqueness.  Errors report the 1-based source line.

Internally elements are stored grouped by kind (all tets, then all hexes);
the global element index used in error messages and element-wise arrays
follows that order.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .element import ElemKind, batch_tet_geometry, batch_hex_geometry
from .errors import DegenerateElementError, MeshFormatError

_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.-]*$")


@dataclass(frozen=True)
class Mesh:
    nodes: np.ndarray
    tets: np.ndarray
    hexes: np.ndarray
    node_sets: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        nodes = np.ascontiguousarray(np.asarray(self.nodes, dtype=np.float64))
        tets = np.ascontiguousarray(np.asarray(self.tets, dtype=np.int64).reshape(-1, 4))
        hexes = np.ascontiguousarray(np.asarray(self.hexes, dtype=np.int64).reshape(-1, 8))
        sets = {
            name: np.unique(np.asarray(ids, dtype=np.int64))
            for name, ids in self.node_sets.items()
        }
        for arr in (nodes, tets, hexes, *sets.values()):
            arr.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "tets", tets)
        object.__setattr__(self, "hexes", hexes)
        object.__setattr__(self, "node_sets", sets)
        self.validate()

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.tets.shape[0] + self.hexes.shape[0]

    def iter_elements(self) -> Iterator[tuple[ElemKind, np.ndarray]]:
        """Yield (kind, node ids) in global element order: tets, then hexes."""
        for row in self.tets:
            yield ElemKind.TET4, row
        for row in self.hexes:
            yield ElemKind.HEX8, row

    def element(self, index: int) -> tuple[ElemKind, np.ndarray]:
        nt = self.tets.shape[0]
        if 0 <= index < nt:
            return ElemKind.TET4, self.tets[index]
        if nt <= index < self.n_elements:
            return ElemKind.HEX8, self.hexes[index - nt]
        raise IndexError(f"element index {index} out of range [0, {self.n_elements})")

    def validate(self) -> None:
        """Raise MeshFormatError or DegenerateElementError on any violation."""
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 3:
            raise MeshFormatError(f"nodes must be (n, 3), got {self.nodes.shape}")
        if self.n_nodes == 0:
            raise MeshFormatError("mesh has no nodes")
        if not np.all(np.isfinite(self.nodes)):
            bad = int(np.argmin(np.isfinite(self.nodes).all(axis=1)))
            raise MeshFormatError(f"node {bad} has non-finite coordinates")
        if self.n_elements == 0:
            raise MeshFormatError("mesh has no elements")

        for kind, conn in ((ElemKind.TET4, self.tets), (ElemKind.HEX8, self.hexes)):
            if conn.size == 0:
                continue
            offset = 0 if kind is ElemKind.TET4 else self.tets.shape[0]
            if conn.min() < 0 or conn.max() >= self.n_nodes:
                bad = int(np.argmax((conn < 0) | (conn >= self.n_nodes)).item() // conn.shape[1])
                raise MeshFormatError(
                    f"element {offset + bad} references a node outside [0, {self.n_nodes})"
                )
            srt = np.sort(conn, axis=1)
            dup = (srt[:, 1:] == srt[:, :-1]).any(axis=1)
            if dup.any():
                raise MeshFormatError(
                    f"element {offset + int(np.argmax(dup))} repeats a node"
                )
            geom = batch_tet_geometry if kind is ElemKind.TET4 else batch_hex_geometry
            try:
                geom(self.nodes[conn])
            except DegenerateElementError as err:
                raise DegenerateElementError(
                    str(err).split(": ", 1)[-1], element=offset + (err.element or 0)
                ) from None

        for name, ids in self.node_sets.items():
            if not _NAME_RE.match(name):
                raise MeshFormatError(f"invalid node-set name {name!r}")
            if ids.size and (ids[0] < 0 or ids[-1] >= self.n_nodes):
                raise MeshFormatError(
                    f"node set {name!r} references a node outside [0, {self.n_nodes})"
                )


def node_volume_shares(mesh: Mesh) -> np.ndarray:
    """Equal-split element volume per node: each element gives V/n to its nodes.

    The result is independent of element order: contributions are summed in
    a canonical (node, value) sort order, so two meshes that differ only in
    element arrangement get bitwise-identical shares.
    """
    idx_parts = []
    val_parts = []
    if mesh.tets.size:
        _, vol = batch_tet_geometry(mesh.nodes[mesh.tets])
        idx_parts.append(mesh.tets.ravel())
        val_parts.append(np.repeat(vol / 4.0, 4))
    if mesh.hexes.size:
        _, det = batch_hex_geometry(mesh.nodes[mesh.hexes])
        idx_parts.append(mesh.hexes.ravel())
        val_parts.append(np.repeat(8.0 * det / 8.0, 8))
    idx = np.concatenate(idx_parts)
    val = np.concatenate(val_parts)
    order = np.lexsort((val, idx))
    out = np.zeros(mesh.n_nodes, dtype=np.float64)
    np.add.at(out, idx[order], val[order])
    return out


def _tokens_with_lines(text: str) -> Iterator[tuple[str, int]]:
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        for tok in line.split():
            yield tok, lineno


class _TokenStream:
    def __init__(self, text: str):
        self._it = _tokens_with_lines(text)
        self.line = 0

    def next(self, what: str) -> str:
        for tok, lineno in self._it:
            self.line = lineno
            return tok
        raise MeshFormatError(f"unexpected end of file, expected {what}", line=self.line)

    def next_int(self, what: str) -> int:
        tok = self.next(what)
        try:
            return int(tok)
        except ValueError:
            raise MeshFormatError(f"expected integer {what}, got {tok!r}", line=self.line) from None

    def next_float(self, what: str) -> float:
        tok = self.next(what)
        try:
            return float(tok)
        except ValueError:
            raise MeshFormatError(f"expected number {what}, got {tok!r}", line=self.line) from None

    def maybe_next(self) -> str | None:
        for tok, lineno in self._it:
            self.line = lineno
            return tok
        return None


def parse_mesh_text(text: str) -> Mesh:
    """Parse mesh file content; see the module docstring for the grammar."""
    ts = _TokenStream(text)

    kw = ts.next("'nodes'")
    if kw != "nodes":
        raise MeshFormatError(f"expected 'nodes', got {kw!r}", line=ts.line)
    n_nodes = ts.next_int("node count")
    if n_nodes <= 0:
        raise MeshFormatError("node count must be positive", line=ts.line)
    nodes = np.empty((n_nodes, 3), dtype=np.float64)
    for i in range(n_nodes):
        for ax in range(3):
            nodes[i, ax] = ts.next_float(f"coordinate of node {i}")

    kw = ts.next("'elements'")
    if kw != "elements":
        raise MeshFormatError(f"expected 'elements', got {kw!r}", line=ts.line)
    n_elem = ts.next_int("element count")
    if n_elem <= 0:
        raise MeshFormatError("element count must be positive", line=ts.line)
    tets: list[list[int]] = []
    hexes: list[list[int]] = []
    for e in range(n_elem):
        tag = ts.next("element kind")
        if tag == "tet4":
            tets.append([ts.next_int(f"node of element {e}") for _ in range(4)])
        elif tag == "hex8":
            hexes.append([ts.next_int(f"node of element {e}") for _ in range(8)])
        else:
            raise MeshFormatError(
                f"unknown element kind {tag!r} (expected tet4 or hex8)", line=ts.line
            )

    node_sets: dict[str, np.ndarray] = {}
    while True:
        kw = ts.maybe_next()
        if kw is None:
            break
        if kw != "nodeset":
            raise MeshFormatError(f"expected 'nodeset' or end of file, got {kw!r}", line=ts.line)
        name = ts.next("node-set name")
        if not _NAME_RE.match(name):
            raise MeshFormatError(f"invalid node-set name {name!r}", line=ts.line)
        if name in node_sets:
            raise MeshFormatError(f"duplicate node set {name!r}", line=ts.line)
        count = ts.next_int("node-set size")
        if count < 0:
            raise MeshFormatError("node-set size must be non-negative", line=ts.line)
        ids = np.fromiter(
            (ts.next_int(f"member of set {name!r}") for _ in range(count)),
            dtype=np.int64,
            count=count,
        )
        if np.unique(ids).size != ids.size:
            raise MeshFormatError(f"node set {name!r} repeats a node", line=ts.line)
        if count and (ids.min() < 0 or ids.max() >= n_nodes):
            raise MeshFormatError(
                f"node set {name!r} references a node outside [0, {n_nodes})", line=ts.line
            )
        node_sets[name] = ids

    tets_arr = np.asarray(tets, dtype=np.int64).reshape(-1, 4)
    hexes_arr = np.asarray(hexes, dtype=np.int64).reshape(-1, 8)
    return Mesh(nodes=nodes, tets=tets_arr, hexes=hexes_arr, node_sets=node_sets)


def parse_mesh(path) -> Mesh:
    return parse_mesh_text(Path(path).read_text())


def serialize_mesh_text(mesh: Mesh) -> str:
    """Render a mesh back into file format. Coordinates keep full precision."""
    out: list[str] = [f"nodes {mesh.n_nodes}"]
    out.extend(f"{float(x)!r} {float(y)!r} {float(z)!r}" for x, y, z in mesh.nodes)
    out.append(f"elements {mesh.n_elements}")
    out.extend("tet4 " + " ".join(map(str, row)) for row in mesh.tets)
    out.extend("hex8 " + " ".join(map(str, row)) for row in mesh.hexes)
    for name in sorted(mesh.node_sets):
        ids = mesh.node_sets[name]
        out.append(f"nodeset {name} {ids.size}")
        for pos in range(0, ids.size, 8):
            out.append(" ".join(map(str, ids[pos : pos + 8])))
    return "\n".join(out) + "\n"


def serialize_mesh(mesh: Mesh, path) -> None:
    Path(path).write_text(serialize_mesh_text(mesh))
