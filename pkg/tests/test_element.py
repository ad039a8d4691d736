import numpy as np
import pytest

from fedheat.element import (
    ElemKind,
    HEX_VERTEX_SIGNS,
    batch_hex_geometry,
    batch_precompute,
    batch_tet_geometry,
    build_precomp,
    hex_geometry,
    tet_geometry,
)
from fedheat.errors import DegenerateElementError

from oracles import hex_gradients_fd, tet_gradients_crossform

UNIT_TET = np.array(
    [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
)
UNIT_CUBE = np.array(
    [
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [1.0, 1.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [1.0, 0.0, 1.0],
        [1.0, 1.0, 1.0],
        [0.0, 1.0, 1.0],
    ]
)


def random_tet(rng):
    while True:
        p = rng.uniform(-1.0, 1.0, (4, 3))
        vol6 = float(np.cross(p[1] - p[0], p[2] - p[0]) @ (p[3] - p[0]))
        if vol6 > 1e-2:
            return p


def random_hex(rng):
    # perturbed cube through a random positively-oriented affine map
    while True:
        mat = rng.uniform(-1.0, 1.0, (3, 3))
        if np.linalg.det(mat) > 0.3:
            break
    corners = UNIT_CUBE + rng.uniform(-0.12, 0.12, (8, 3))
    return corners @ mat.T + rng.uniform(-2.0, 2.0, 3)


class TestTetGeometry:
    def test_unit_tet_volume_and_gradients_exact(self):
        b, vol = tet_geometry(UNIT_TET)
        assert vol == 1.0 / 6.0
        expected = np.array(
            [[-1.0, 1.0, 0.0, 0.0], [-1.0, 0.0, 1.0, 0.0], [-1.0, 0.0, 0.0, 1.0]]
        )
        assert np.array_equal(b, expected)

    def test_unit_tet_conductance_frozen(self):
        # A = V * B^T B for the reference tet, derived by hand
        pre = build_precomp(ElemKind.TET4, np.arange(4), UNIT_TET)
        expected = (
            np.array(
                [
                    [3.0, -1.0, -1.0, -1.0],
                    [-1.0, 1.0, 0.0, 0.0],
                    [-1.0, 0.0, 1.0, 0.0],
                    [-1.0, 0.0, 0.0, 1.0],
                ]
            )
            / 6.0
        )
        assert np.allclose(pre.unit_conductance, expected, rtol=0.0, atol=1e-16)
        assert pre.volume == 1.0 / 6.0

    def test_matches_crossproduct_oracle(self, rng):
        for _ in range(50):
            p = random_tet(rng)
            b, vol = tet_geometry(p)
            b_ref, vol_ref = tet_gradients_crossform(p)
            assert vol == pytest.approx(vol_ref, rel=1e-12)
            assert np.allclose(b, b_ref, rtol=1e-10, atol=1e-12)

    def test_negative_orientation_rejected(self):
        flipped = UNIT_TET[[0, 2, 1, 3]]
        with pytest.raises(DegenerateElementError):
            tet_geometry(flipped)

    def test_coplanar_rejected(self):
        flat = UNIT_TET.copy()
        flat[3] = [0.5, 0.5, 0.0]
        with pytest.raises(DegenerateElementError):
            tet_geometry(flat)

    def test_gradient_recovers_linear_field(self, rng):
        g = np.array([1.7, -0.3, 2.2])
        for _ in range(20):
            p = random_tet(rng)
            b, _ = tet_geometry(p)
            t_local = p @ g + 5.0
            assert np.allclose(b @ t_local, g, rtol=1e-10, atol=1e-10)


class TestHexGeometry:
    def test_unit_cube_frozen(self):
        b, detj = hex_geometry(UNIT_CUBE)
        assert detj == 0.125
        assert np.array_equal(b, HEX_VERTEX_SIGNS.T / 4.0)
        pre = build_precomp(ElemKind.HEX8, np.arange(8), UNIT_CUBE)
        assert pre.volume == 1.0  # 8 * det(J)
        expected = HEX_VERTEX_SIGNS @ HEX_VERTEX_SIGNS.T / 16.0
        assert np.array_equal(pre.unit_conductance, expected)

    def test_matches_finite_difference_oracle(self, rng):
        for _ in range(50):
            p = random_hex(rng)
            b, detj = hex_geometry(p)
            b_ref, detj_ref = hex_gradients_fd(p)
            assert detj == pytest.approx(detj_ref, rel=1e-9)
            assert np.allclose(b, b_ref, rtol=1e-7, atol=1e-9)

    def test_inverted_rejected(self):
        mirrored = UNIT_CUBE.copy()
        mirrored[:, 0] *= -1.0
        with pytest.raises(DegenerateElementError):
            hex_geometry(mirrored)

    def test_gradient_recovers_linear_field(self, rng):
        g = np.array([-0.4, 1.1, 0.9])
        for _ in range(20):
            p = random_hex(rng)
            b, _ = hex_geometry(p)
            t_local = p @ g - 3.0
            assert np.allclose(b @ t_local, g, rtol=1e-9, atol=1e-9)


class TestConductanceMatrix:
    @pytest.mark.parametrize("kind", [ElemKind.TET4, ElemKind.HEX8])
    def test_exactly_symmetric_and_rows_sum_to_zero(self, rng, kind):
        for _ in range(30):
            p = random_tet(rng) if kind is ElemKind.TET4 else random_hex(rng)
            pre = build_precomp(kind, np.arange(kind.n_nodes), p)
            a = pre.unit_conductance
            assert np.array_equal(a, a.T)
            scale = np.abs(a).max()
            assert np.abs(a.sum(axis=1)).max() <= 1e-13 * scale

    @pytest.mark.parametrize("kind", [ElemKind.TET4, ElemKind.HEX8])
    def test_positive_semidefinite(self, rng, kind):
        for _ in range(30):
            p = random_tet(rng) if kind is ElemKind.TET4 else random_hex(rng)
            pre = build_precomp(kind, np.arange(kind.n_nodes), p)
            eigs = np.linalg.eigvalsh(pre.unit_conductance)
            assert eigs.min() >= -1e-12 * max(eigs.max(), 1.0)

    def test_translation_invariant(self, rng):
        p = random_tet(rng)
        a1 = build_precomp(ElemKind.TET4, np.arange(4), p).unit_conductance
        a2 = build_precomp(ElemKind.TET4, np.arange(4), p + np.array([3.0, -7.0, 11.0]))
        assert np.allclose(a1, a2.unit_conductance, rtol=1e-9, atol=1e-12)

    def test_scaling_law(self, rng):
        # uniform scaling by s multiplies A by s (conductance ~ length)
        p = random_tet(rng)
        a1 = build_precomp(ElemKind.TET4, np.arange(4), p).unit_conductance
        a2 = build_precomp(ElemKind.TET4, np.arange(4), 2.0 * p).unit_conductance
        assert np.allclose(a2, 2.0 * a1, rtol=1e-12)


class TestBatchConsistency:
    def test_batch_equals_single_tet(self, rng):
        stack = np.stack([random_tet(rng) for _ in range(10)])
        b_all, vol_all = batch_tet_geometry(stack)
        a_all, vols = batch_precompute(ElemKind.TET4, stack)
        for i in range(10):
            b_one, vol_one = tet_geometry(stack[i])
            assert np.array_equal(b_all[i], b_one)
            assert vol_all[i] == vol_one
            pre = build_precomp(ElemKind.TET4, np.arange(4), stack[i])
            assert np.array_equal(a_all[i], pre.unit_conductance)
            assert vols[i] == pre.volume

    def test_batch_equals_single_hex(self, rng):
        stack = np.stack([random_hex(rng) for _ in range(10)])
        b_all, det_all = batch_hex_geometry(stack)
        for i in range(10):
            b_one, det_one = hex_geometry(stack[i])
            assert np.array_equal(b_all[i], b_one)
            assert det_all[i] == det_one

    def test_wrong_node_count_rejected(self):
        with pytest.raises(ValueError):
            build_precomp(ElemKind.TET4, np.arange(5), np.zeros((5, 3)))
