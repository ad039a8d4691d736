import pytest

from fedheat.bench import bench_modes, bench_scaling, bench_workers, format_scaling_table, format_worker_table
from fedheat.errors import ConfigError
from fedheat.scenario import parse_scenario_text

SMALL = """
[mesh.generator]
kind = "tet"
divisions = 3
size = 0.1

[material]
density = 1060.0
specific_heat = 3700.0
conductivity = 0.518

[simulation]
initial_temperature = 37.0
steps = 100
dt = 1.0

[[dirichlet]]
nodeset = "z0"
temperature = 38.0
"""


@pytest.fixture(scope="module")
def scenario():
    return parse_scenario_text(SMALL)


class TestWorkers:
    def test_fields_and_determinism(self, scenario):
        result = bench_workers(scenario, workers=[1, 2], reps=1, steps=10)
        assert result.workers == [1, 2]
        assert len(result.per_step_s) == 2
        assert all(t > 0 for t in result.per_step_s)
        assert result.deterministic
        assert result.best_speedup > 0
        assert "deterministic across worker counts: yes" in format_worker_table(result)

    def test_bad_worker_counts(self, scenario):
        with pytest.raises(ConfigError):
            bench_workers(scenario, workers=[0], reps=1, steps=5)


class TestModes:
    def test_both_modes_timed(self, scenario):
        result = bench_modes(scenario, reps=1, steps=10, workers=1)
        assert result.constant_per_step_s > 0
        assert result.td_per_step_s > 0
        assert result.overhead_ratio == pytest.approx(
            result.td_per_step_s / result.constant_per_step_s
        )


class TestScaling:
    def test_fit_in_node_count(self, scenario):
        result = bench_scaling(scenario, divisions=[2, 3, 4], reps=1, steps=10, workers=1)
        assert result.divisions == [2, 3, 4]
        assert result.n_nodes == [27, 64, 125]
        assert result.n_elements == [48, 162, 384]
        assert len(result.per_step_s) == 3
        assert "s/node" in format_scaling_table(result)

    def test_needs_generator(self, scenario, tmp_path):
        from dataclasses import replace

        file_based = replace(scenario, mesh_generator=None, mesh_path=tmp_path / "x.mesh")
        with pytest.raises(ConfigError, match="generator"):
            bench_scaling(file_based, divisions=[2, 3], reps=1, steps=5)

    def test_needs_two_sizes(self, scenario):
        with pytest.raises(ConfigError, match="two"):
            bench_scaling(scenario, divisions=[3], reps=1, steps=5)
