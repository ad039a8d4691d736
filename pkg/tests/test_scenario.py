import numpy as np
import pytest

from fedheat.errors import ConfigError
from fedheat.meshgen import generate_cube_mesh
from fedheat.mesh import serialize_mesh
from fedheat.scenario import load_scenario, parse_scenario_text

MINIMAL = """
[mesh.generator]
kind = "tet"
divisions = 2
size = 0.1

[material]
density = 1060.0
specific_heat = 3700.0
conductivity = 0.518

[simulation]
initial_temperature = 37.0
steps = 100
dt = 0.01
"""

FULL = """
[mesh.generator]
kind = "hex"
divisions = 3
size = 0.2

[material]
density = [[37.0, 1040.0], [65.0, 1000.0]]
specific_heat = 3600.0
conductivity = [[37.0, 0.53], [65.0, 0.57]]
perfusion_rate = 26.6
blood_specific_heat = 3617.0
arterial_temperature = 39.0
metabolic_rate = 33800.0

[simulation]
initial_temperature = 37.0
steps = 500
auto_dt_safety = 0.5
td_mode = true
workers = 2
dt_recheck_interval = 50
runaway_limit = 500.0

[[dirichlet]]
nodeset = "z0"
temperature = 37.0

[[heat_load]]
nodeset = "center"
power = 2.0
t_start = 0.0
t_end = 3.0

[output]
directory = "out/full"
probes = ["center", 0]
probe_interval = 10
snapshot_interval = 100

[bench]
workers = [1, 4]
reps = 2
steps = 50
"""


class TestParsing:
    def test_minimal(self):
        sc = parse_scenario_text(MINIMAL)
        assert sc.mesh_generator == {"kind": "tet", "divisions": 2, "size": 0.1}
        assert sc.mesh_path is None
        assert sc.material.is_constant
        assert sc.dt == 0.01 and sc.auto_dt_safety is None
        assert sc.td_mode is None and sc.workers is None
        assert sc.probes == () and sc.probe_interval == 1
        assert sc.snapshot_interval == 0
        assert sc.bench_workers == (1, 2, 4, 8) and sc.bench_reps == 3
        mesh = sc.build_mesh()
        assert mesh.n_nodes == 27

    def test_full(self):
        sc = parse_scenario_text(FULL)
        assert not sc.material.is_constant
        assert sc.material.conductivity(65.0) == 0.57
        assert sc.auto_dt_safety == 0.5 and sc.dt is None
        assert sc.td_mode is True and sc.workers == 2
        assert sc.boundary.dirichlet == (("z0", 37.0),)
        assert sc.boundary.heat_loads == (("center", 2.0, 0.0, 3.0),)
        assert sc.output_dir == "out/full"
        assert sc.probes == ("center", 0)
        assert sc.bench_workers == (1, 4)
        assert sc.bench_steps == 50

    def test_probe_expansion(self):
        sc = parse_scenario_text(FULL)
        mesh = sc.build_mesh()
        nodes = sc.probe_nodes(mesh)
        assert nodes.dtype == np.int64
        assert set(nodes) == set(mesh.node_sets["center"]) | {0}

    def test_probe_unknown_set(self):
        sc = parse_scenario_text(MINIMAL.replace("[simulation]", '[output]\nprobes = ["nope"]\n\n[simulation]'))
        with pytest.raises(ConfigError, match="nope"):
            sc.probe_nodes(sc.build_mesh())


class TestValidation:
    def test_unknown_top_key(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_scenario_text(MINIMAL + "\n[extra]\nx = 1\n")

    def test_unknown_simulation_key(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_scenario_text(MINIMAL + "time_step = 0.1\n")

    def test_dt_and_auto_exclusive(self):
        with pytest.raises(ConfigError, match="exactly one"):
            parse_scenario_text(MINIMAL + "auto_dt_safety = 0.5\n")
        with pytest.raises(ConfigError, match="exactly one"):
            parse_scenario_text(MINIMAL.replace("dt = 0.01\n", ""))

    def test_mesh_path_and_generator_exclusive(self):
        bad = MINIMAL.replace('[mesh.generator]', '[mesh]\npath = "a.mesh"\n[mesh.generator]')
        with pytest.raises(ConfigError, match="exactly one"):
            parse_scenario_text(bad)

    def test_missing_material_key(self):
        with pytest.raises(ConfigError, match="conductivity"):
            parse_scenario_text(MINIMAL.replace("conductivity = 0.518\n", ""))

    def test_bad_curve(self):
        with pytest.raises(ConfigError, match="curve"):
            parse_scenario_text(MINIMAL.replace("conductivity = 0.518", "conductivity = [[37.0], [65.0]]"))

    def test_bool_rejected_as_number(self):
        with pytest.raises(ConfigError, match="number"):
            parse_scenario_text(MINIMAL.replace("dt = 0.01", "dt = true"))

    def test_invalid_toml(self):
        with pytest.raises(ConfigError, match="invalid TOML"):
            parse_scenario_text("not = [valid")

    def test_bad_generator_kind(self):
        with pytest.raises(ConfigError, match="kind"):
            parse_scenario_text(MINIMAL.replace('kind = "tet"', 'kind = "prism"'))

    def test_heat_load_requires_t_end(self):
        bad = MINIMAL + '\n[[heat_load]]\nnodeset = "center"\npower = 1.0\n'
        with pytest.raises(ConfigError, match="t_end"):
            parse_scenario_text(bad)


class TestFiles:
    def test_load_resolves_mesh_relative_to_config(self, tmp_path):
        mesh = generate_cube_mesh("tet", 2, 0.1)
        serialize_mesh(mesh, tmp_path / "cube.mesh")
        config = MINIMAL.replace(
            '[mesh.generator]\nkind = "tet"\ndivisions = 2\nsize = 0.1',
            '[mesh]\npath = "cube.mesh"',
        )
        (tmp_path / "case.toy").write_text(config)
        sc = load_scenario(tmp_path / "case.toy")
        assert sc.name == "case"
        assert sc.mesh_path == tmp_path / "cube.mesh"
        loaded = sc.build_mesh()
        assert np.array_equal(loaded.nodes, mesh.nodes)

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_scenario(tmp_path / "ghost.toy")
