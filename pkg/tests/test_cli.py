import json

import pytest

from fedheat.cli import bundled_scenarios, main
from fedheat.mesh import parse_mesh

BASE = """
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
steps = 20
dt = 50.0

[[dirichlet]]
nodeset = "z0"
temperature = 39.0

[output]
probes = ["center"]
probe_interval = 5
snapshot_interval = 10
"""


@pytest.fixture
def case(tmp_path):
    def write(text: str, name: str = "case.toy"):
        path = tmp_path / name
        path.write_text(text)
        return str(path)

    return write


class TestGenMesh:
    def test_roundtrip(self, tmp_path, capsys):
        out = tmp_path / "cube.mesh"
        code = main(["gen-mesh", "--kind", "hex", "--n", "3", "--size", "0.2", "-o", str(out)])
        assert code == 0
        mesh = parse_mesh(out)
        assert mesh.n_nodes == 64
        assert mesh.hexes.shape == (27, 8)
        assert "64 nodes" in capsys.readouterr().out


class TestRun:
    def test_outputs(self, case, tmp_path, capsys):
        out_dir = tmp_path / "out"
        code = main(["run", case(BASE), "--output", str(out_dir)])
        assert code == 0

        probes = (out_dir / "probes.csv").read_text().splitlines()
        assert probes[0].startswith("time_s,node_")
        assert len(probes) == 1 + 5  # header + initial + steps 5,10,15,20

        stats_lines = (out_dir / "stats.csv").read_text().splitlines()
        assert stats_lines[0] == "min,q1,median,q3,max,rms"
        values = [float(v) for v in stats_lines[1].split(",")]
        assert values[0] >= 37.0 and values[4] <= 39.0

        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert manifest["steps"] == 20
        assert manifest["mesh"]["nodes"] == 27
        assert manifest["workers"] >= 1
        assert len(manifest["final_field_sha256"]) == 64
        assert manifest["snapshots"] == [
            "snapshot_000000.vtk",
            "snapshot_000010.vtk",
            "snapshot_000020.vtk",
        ]
        for name in manifest["snapshots"]:
            assert (out_dir / name).exists()

        console = capsys.readouterr().out
        assert "20 steps" in console
        assert "final field" in console

    def test_final_snapshot_only_when_interval_zero(self, case, tmp_path):
        text = BASE.replace("snapshot_interval = 10", "snapshot_interval = 0")
        out_dir = tmp_path / "out0"
        assert main(["run", case(text), "--output", str(out_dir)]) == 0
        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert manifest["snapshots"] == ["snapshot_000020.vtk"]

    def test_steps_override(self, case, tmp_path):
        out_dir = tmp_path / "out3"
        assert main(["run", case(BASE), "--output", str(out_dir), "--steps", "3"]) == 0
        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert manifest["steps"] == 3

    def test_deterministic_final_hash_across_workers(self, case, tmp_path):
        hashes = []
        for idx, workers in enumerate(("1", "4")):
            out_dir = tmp_path / f"det{idx}"
            code = main(
                ["run", case(BASE), "--output", str(out_dir), "--workers", workers]
            )
            assert code == 0
            manifest = json.loads((out_dir / "manifest.json").read_text())
            hashes.append(manifest["final_field_sha256"])
        assert hashes[0] == hashes[1]

    def test_bad_config_exits_1(self, case, tmp_path):
        text = BASE.replace("steps = 20", "steps = 20\nbogus_key = 1")
        assert main(["run", case(text), "--output", str(tmp_path / "x")]) == 1

    def test_unknown_scenario_exits_1(self, tmp_path):
        assert main(["run", "no-such-scenario", "--output", str(tmp_path / "x")]) == 1

    def test_unstable_run_exits_2(self, case, tmp_path):
        text = BASE.replace("dt = 50.0", "dt = 1e6").replace("steps = 20", "steps = 5000")
        assert main(["run", case(text), "--output", str(tmp_path / "boom")]) == 2


class TestCheckDt:
    def test_stable(self, case, capsys):
        assert main(["check-dt", case(BASE)]) == 0
        out = capsys.readouterr().out
        assert "critical step estimate" in out
        assert "stable" in out

    def test_unstable_flag(self, case, capsys):
        assert main(["check-dt", case(BASE), "--dt", "1e9"]) == 2
        assert "UNSTABLE" in capsys.readouterr().out

    def test_auto_dt_reported(self, case, capsys):
        text = BASE.replace("dt = 50.0", "auto_dt_safety = 0.5")
        assert main(["check-dt", case(text)]) == 0
        assert "auto step" in capsys.readouterr().out


class TestBench:
    def test_worker_bench(self, case, tmp_path, capsys):
        out_dir = tmp_path / "bench"
        code = main(
            [
                "bench",
                case(BASE),
                "--workers",
                "1,2",
                "--reps",
                "1",
                "--steps",
                "5",
                "--output",
                str(out_dir),
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "deterministic across worker counts: yes" in out
        csv = (out_dir / "bench_workers.csv").read_text().splitlines()
        assert csv[0] == "workers,per_step_s"
        assert len(csv) == 3

    def test_sweep(self, case, tmp_path, capsys):
        out_dir = tmp_path / "sweep"
        code = main(
            [
                "bench",
                case(BASE),
                "--sweep",
                "--divisions",
                "2,3,4",
                "--reps",
                "1",
                "--steps",
                "5",
                "--output",
                str(out_dir),
            ]
        )
        assert code == 0
        assert "linear fit" in capsys.readouterr().out
        csv = (out_dir / "bench_sweep.csv").read_text().splitlines()
        assert csv[0] == "divisions,nodes,elements,per_step_s"
        assert len(csv) == 5  # header + 3 sizes + fit comment
        assert csv[-1].startswith("# fit slope=")

    def test_sweep_needs_generator(self, case, tmp_path):
        mesh_path = tmp_path / "c.mesh"
        assert main(["gen-mesh", "--kind", "tet", "--n", "2", "--size", "0.1", "-o", str(mesh_path)]) == 0
        text = BASE.replace(
            '[mesh.generator]\nkind = "tet"\ndivisions = 2\nsize = 0.1',
            '[mesh]\npath = "c.mesh"',
        )
        assert main(["bench", case(text), "--sweep", "--steps", "5", "--reps", "1"]) == 1


class TestCompareOracle:
    def test_match(self, case, capsys):
        text = BASE.replace("dt = 50.0", "dt = 5.0")
        code = main(["compare-oracle", case(text), "--steps", "50", "--tol", "1e-3"])
        assert code == 0
        out = capsys.readouterr().out
        assert "relative field deviation" in out
        assert "match" in out

    def test_mismatch_exits_3(self, case, capsys):
        code = main(["compare-oracle", case(BASE), "--steps", "20", "--tol", "1e-15"])
        assert code == 3
        assert "MISMATCH" in capsys.readouterr().out


class TestResolution:
    def test_bundled_listing(self):
        names = bundled_scenarios()
        assert "conduction.toy" in names
        assert "td.toy" in names

    def test_bundled_check_dt(self, capsys):
        assert main(["check-dt", "perfusion"]) == 0
        assert "critical step estimate" in capsys.readouterr().out

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert capsys.readouterr().out.startswith("fedheat ")
