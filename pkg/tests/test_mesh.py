import numpy as np
import pytest

from fedheat.errors import DegenerateElementError, MeshFormatError
from fedheat.mesh import (
    Mesh,
    node_volume_shares,
    parse_mesh,
    parse_mesh_text,
    serialize_mesh,
    serialize_mesh_text,
)
from fedheat.meshgen import generate_cube_mesh

from oracles import random_mixed_mesh

TWO_TET_FILE = """\
# two tets sharing a face
nodes 5
0.0 0.0 0.0
1.0 0.0 0.0
0.0 1.0 0.0
0.0 0.0 1.0
1.0 1.0 1.0   # top corner
elements 2
tet4 0 1 2 3
tet4 1 2 3 4

nodeset base 3
0 1 2
nodeset apex 1
4
"""


class TestParse:
    def test_parse_basic(self):
        mesh = parse_mesh_text(TWO_TET_FILE)
        assert mesh.n_nodes == 5
        assert mesh.n_elements == 2
        assert mesh.tets.shape == (2, 4)
        assert np.array_equal(mesh.node_sets["base"], [0, 1, 2])
        assert np.array_equal(mesh.node_sets["apex"], [4])
        assert mesh.nodes[4, 2] == 1.0

    def test_comments_and_blank_lines_ignored(self):
        noisy = "# leading comment\n\n" + TWO_TET_FILE.replace(
            "elements 2", "\n# another\nelements 2"
        )
        mesh = parse_mesh_text(noisy)
        assert mesh.n_elements == 2

    def test_hex_parse(self):
        cube = generate_cube_mesh("hex", 2, 1.0)
        text = serialize_mesh_text(cube)
        again = parse_mesh_text(text)
        assert again.hexes.shape == (8, 8)

    def test_error_reports_line_number(self):
        bad = TWO_TET_FILE.replace("1.0 1.0 1.0   # top corner", "1.0 oops 1.0")
        bad_line = bad.splitlines().index("1.0 oops 1.0") + 1
        with pytest.raises(MeshFormatError, match=f"line {bad_line}"):
            parse_mesh_text(bad)

    def test_missing_header(self):
        with pytest.raises(MeshFormatError, match="expected 'nodes'"):
            parse_mesh_text("elements 1\ntet4 0 1 2 3\n")

    def test_unknown_element_kind(self):
        bad = TWO_TET_FILE.replace("tet4 1 2 3 4", "wedge6 1 2 3 4")
        with pytest.raises(MeshFormatError, match="wedge6"):
            parse_mesh_text(bad)

    def test_out_of_range_element_node(self):
        bad = TWO_TET_FILE.replace("tet4 1 2 3 4", "tet4 1 2 3 9")
        with pytest.raises(MeshFormatError, match="outside"):
            parse_mesh_text(bad)

    def test_repeated_node_in_element(self):
        bad = TWO_TET_FILE.replace("tet4 1 2 3 4", "tet4 1 2 3 3")
        with pytest.raises(MeshFormatError, match="repeats"):
            parse_mesh_text(bad)

    def test_degenerate_element_rejected(self):
        bad = TWO_TET_FILE.replace("tet4 0 1 2 3", "tet4 0 2 1 3")
        with pytest.raises(DegenerateElementError, match="element 0"):
            parse_mesh_text(bad)

    def test_nodeset_out_of_range(self):
        bad = TWO_TET_FILE.replace("nodeset apex 1\n4", "nodeset apex 1\n40")
        with pytest.raises(MeshFormatError, match="apex"):
            parse_mesh_text(bad)

    def test_duplicate_nodeset_name(self):
        bad = TWO_TET_FILE + "nodeset base 1\n0\n"
        with pytest.raises(MeshFormatError, match="duplicate"):
            parse_mesh_text(bad)

    def test_truncated_file(self):
        lines = TWO_TET_FILE.splitlines()
        with pytest.raises(MeshFormatError, match="end of file"):
            parse_mesh_text("\n".join(lines[:4]))


class TestRoundtrip:
    @pytest.mark.parametrize("kind", ["tet", "hex"])
    def test_generated_cube_roundtrip(self, kind, tmp_path):
        mesh = generate_cube_mesh(kind, 3, 0.25)
        path = tmp_path / "cube.mesh"
        serialize_mesh(mesh, path)
        again = parse_mesh(path)
        assert np.array_equal(mesh.nodes, again.nodes)
        assert np.array_equal(mesh.tets, again.tets)
        assert np.array_equal(mesh.hexes, again.hexes)
        assert sorted(mesh.node_sets) == sorted(again.node_sets)
        for name in mesh.node_sets:
            assert np.array_equal(mesh.node_sets[name], again.node_sets[name])

    def test_mixed_mesh_roundtrip(self, rng):
        mesh = random_mixed_mesh(rng)
        again = parse_mesh_text(serialize_mesh_text(mesh))
        assert np.array_equal(mesh.nodes, again.nodes)
        assert np.array_equal(mesh.tets, again.tets)
        assert np.array_equal(mesh.hexes, again.hexes)


class TestValidation:
    def test_no_elements_rejected(self):
        with pytest.raises(MeshFormatError):
            Mesh(nodes=np.zeros((3, 3)), tets=np.empty((0, 4)), hexes=np.empty((0, 8)))

    def test_nonfinite_coordinate_rejected(self):
        nodes = np.zeros((4, 3))
        nodes[1] = [1.0, 0.0, 0.0]
        nodes[2] = [0.0, 1.0, 0.0]
        nodes[3] = [0.0, 0.0, np.nan]
        with pytest.raises(MeshFormatError, match="non-finite"):
            Mesh(nodes=nodes, tets=np.array([[0, 1, 2, 3]]), hexes=np.empty((0, 8)))

    def test_arrays_are_read_only(self):
        mesh = generate_cube_mesh("tet", 2, 1.0)
        with pytest.raises(ValueError):
            mesh.nodes[0, 0] = 99.0
        with pytest.raises(ValueError):
            mesh.tets[0, 0] = 1


class TestVolumeShares:
    def test_total_volume_of_cube(self):
        for kind in ("tet", "hex"):
            mesh = generate_cube_mesh(kind, 3, 0.3)
            shares = node_volume_shares(mesh)
            assert shares.sum() == pytest.approx(0.3**3, rel=1e-12)
            assert (shares > 0.0).all()

    def test_single_tet_equal_split(self):
        mesh = parse_mesh_text(
            "nodes 4\n0 0 0\n1 0 0\n0 1 0\n0 0 1\nelements 1\ntet4 0 1 2 3\n"
        )
        shares = node_volume_shares(mesh)
        assert np.array_equal(shares, np.full(4, (1.0 / 6.0) / 4.0))

    def test_element_order_independent(self, rng):
        mesh = random_mixed_mesh(rng)
        perm_t = rng.permutation(mesh.tets.shape[0])
        perm_h = rng.permutation(mesh.hexes.shape[0])
        shuffled = Mesh(
            nodes=mesh.nodes.copy(),
            tets=mesh.tets[perm_t],
            hexes=mesh.hexes[perm_h],
            node_sets={},
        )
        assert np.array_equal(node_volume_shares(mesh), node_volume_shares(shuffled))
