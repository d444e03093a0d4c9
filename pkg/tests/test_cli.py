from __future__ import annotations

import csv
import json

import pytest

from corn.cli import (
    EXIT_FAIL,
    EXIT_INFEASIBLE,
    EXIT_OK,
    EXIT_TIMEOUT,
    EXIT_USAGE,
    main,
)
from corn.synth import FacilitySpec


def tiny_spec(**kw):
    defaults = dict(
        rooms=6, hallway_nodes=3, hcp_groups=(("n", 4),), non_substitutable=1,
        corridor_length_m=20.0, shift_length_h=8.0, visits_per_hcp_per_day=6,
        visit_duration_min=15.0, locality=0.6, days=2, seed=3, zones=2,
    )
    defaults.update(kw)
    return FacilitySpec(**defaults)


@pytest.fixture(scope="module")
def inputs(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    spec_path = root / "spec.json"
    tiny_spec().to_json(spec_path)
    out = root / "inputs"
    rc = main(["synth", "--spec", str(spec_path), "--out", str(out)])
    assert rc == EXIT_OK
    return out


def input_args(d):
    return ["--hcps", str(d / "hcps.csv"), "--locations", str(d / "locations.csv"),
            "--visits", str(d / "visits.csv")]


class TestSynthValidate:
    def test_synth_writes_inputs(self, inputs):
        for name in ("facility.json", "hcps.csv", "locations.csv", "visits.csv",
                     "spatial.json", "manifest.json"):
            assert (inputs / name).exists()

    def test_validate_clean(self, inputs, capsys):
        rc = main(["validate", *input_args(inputs),
                   "--spatial", str(inputs / "spatial.json")])
        assert rc == EXIT_OK
        assert capsys.readouterr().out.startswith("OK:")

    def test_validate_reports_overlap(self, inputs, tmp_path, capsys):
        bad = tmp_path / "visits.csv"
        rows = (inputs / "visits.csv").read_text().splitlines()
        hcp, loc, start, end = rows[1].split(",")
        dup = [hcp, loc, str(int(start) + 60), str(int(end) + 60)]
        bad.write_text("\n".join(rows + [",".join(dup)]) + "\n")
        rc = main(["validate", "--hcps", str(inputs / "hcps.csv"),
                   "--locations", str(inputs / "locations.csv"),
                   "--visits", str(bad)])
        assert rc == EXIT_FAIL
        out = capsys.readouterr().out
        assert "VIOLATION" in out and "overlap" in out

    def test_missing_file_usage_error(self, inputs, tmp_path, capsys):
        rc = main(["validate", "--hcps", str(tmp_path / "nope.csv"),
                   "--locations", str(inputs / "locations.csv"),
                   "--visits", str(inputs / "visits.csv")])
        assert rc == EXIT_USAGE
        assert "error:" in capsys.readouterr().err

    def test_bad_flag(self, capsys):
        assert main(["validate", "--nope"]) == EXIT_USAGE
        capsys.readouterr()

    def test_version(self, capsys):
        assert main(["--version"]) == EXIT_OK
        assert capsys.readouterr().out.startswith("corn ")


class TestWeights:
    def test_weights_csv(self, inputs, tmp_path, capsys):
        out = tmp_path / "w"
        rc = main(["weights", *input_args(inputs), "--rho", "0.001",
                   "--unit-s", "60", "--out", str(out)])
        assert rc == EXIT_OK
        with open(out / "weights.csv") as f:
            rows = list(csv.DictReader(f))
        # 6 rooms -> 15 unordered pairs, zeros included
        assert len(rows) == 15
        assert all(0.0 <= float(r["weight"]) <= 1.0 for r in rows)
        assert (out / "manifest.json").exists()
        capsys.readouterr()

    def test_z_and_rho_exclusive(self, inputs, tmp_path, capsys):
        rc = main(["weights", *input_args(inputs), "--rho", "0.001",
                   "--z", "0.1", "--out", str(tmp_path / "w2")])
        assert rc == EXIT_USAGE
        capsys.readouterr()


class TestCluster:
    def test_optimal(self, inputs, tmp_path, capsys):
        out = tmp_path / "c"
        rc = main(["cluster", *input_args(inputs), "--rho", "0.001",
                   "--k", "2", "--out", str(out)])
        assert rc == EXIT_OK
        clu = json.loads((out / "clustering.json").read_text())
        assert clu["k"] == 2
        assert len(clu["location_bubble"]) == 6
        solve = json.loads((out / "solve.json").read_text())
        assert solve["status"] == "optimal"
        assert "status optimal" in capsys.readouterr().out

    def test_infeasible_exit(self, inputs, tmp_path, capsys):
        # rooms sit meters apart, so a sub-meter diameter cannot be met
        rc = main(["cluster", *input_args(inputs),
                   "--spatial", str(inputs / "spatial.json"),
                   "--rho", "0.001", "--k", "2", "--d-star-m", "0.5",
                   "--out", str(tmp_path / "c2")])
        assert rc == EXIT_INFEASIBLE
        capsys.readouterr()

    def test_diameter_needs_spatial(self, inputs, tmp_path, capsys):
        rc = main(["cluster", *input_args(inputs), "--rho", "0.001",
                   "--k", "2", "--d-star-m", "10", "--out", str(tmp_path / "c3")])
        assert rc == EXIT_USAGE
        capsys.readouterr()

    def test_timeout_exit(self, tmp_path, capsys):
        # 12 locations push past the exact-solver comfort zone instantly
        spec_path = tmp_path / "spec.json"
        tiny_spec(rooms=12, zones=3, hcp_groups=(("n", 6),)).to_json(spec_path)
        data = tmp_path / "big"
        assert main(["synth", "--spec", str(spec_path), "--out", str(data)]) == EXIT_OK
        rc = main(["cluster", *input_args(data), "--rho", "0.001", "--k", "3",
                   "--time-limit-s", "0.0", "--out", str(tmp_path / "c4")])
        assert rc == EXIT_TIMEOUT
        capsys.readouterr()


class TestExport:
    def test_lp_text(self, inputs, tmp_path, capsys):
        out = tmp_path / "m"
        rc = main(["export-model", *input_args(inputs), "--rho", "0.001",
                   "--k", "2", "--format", "lp", "--out", str(out)])
        assert rc == EXIT_OK
        text = (out / "model.lp").read_text()
        assert text.startswith("\\ bubble partition model")
        assert "Minimize" in text and "Binary" in text
        capsys.readouterr()

    def test_mps_text(self, inputs, tmp_path, capsys):
        out = tmp_path / "m2"
        rc = main(["export-model", *input_args(inputs), "--rho", "0.001",
                   "--k", "2", "--format", "mps", "--out", str(out)])
        assert rc == EXIT_OK
        text = (out / "model.mps").read_text()
        assert text.splitlines()[0].startswith("NAME")
        assert text.rstrip().endswith("ENDATA")
        capsys.readouterr()


class TestSimulate:
    def test_baseline_run(self, inputs, tmp_path, capsys):
        out = tmp_path / "s"
        rc = main(["simulate", *input_args(inputs), "--rho", "0.002",
                   "--replicates", "5", "--out", str(out)])
        assert rc == EXIT_OK
        lines = (out / "sim.csv").read_text().splitlines()
        assert lines[0] == "replicate,infections,leave,reach"
        assert len(lines) == 6
        payload = json.loads((out / "sim.json").read_text())
        assert payload["aggregates"]["replicates"] == 5
        capsys.readouterr()

    def test_clustered_rewired_run(self, inputs, tmp_path, capsys):
        clu_dir = tmp_path / "c"
        assert main(["cluster", *input_args(inputs), "--rho", "0.001",
                     "--k", "2", "--out", str(clu_dir)]) == EXIT_OK
        out = tmp_path / "s2"
        rc = main(["simulate", *input_args(inputs), "--rho", "0.002",
                   "--clustering", str(clu_dir / "clustering.json"), "--rewire",
                   "--replicates", "5", "--out", str(out)])
        assert rc == EXIT_OK
        lines = (out / "sim.csv").read_text().splitlines()
        assert all(line.split(",")[2] in ("true", "false") for line in lines[1:])
        capsys.readouterr()

    def test_rewire_needs_clustering(self, inputs, tmp_path, capsys):
        rc = main(["simulate", *input_args(inputs), "--rho", "0.002",
                   "--rewire", "--replicates", "2", "--out", str(tmp_path / "s3")])
        assert rc == EXIT_USAGE
        capsys.readouterr()


class TestExperiment:
    def test_facility_smoke(self, tmp_path, capsys):
        spec_path = tmp_path / "spec.json"
        tiny_spec(days=2).to_json(spec_path)
        out = tmp_path / "exp"
        rc = main(["experiment", "--facility", str(spec_path), "--k", "1,2",
                   "--rho", "0.002", "--replicates", "4", "--cost-rewirings", "2",
                   "--calibration-replicates", "10", "--out", str(out)])
        assert rc == EXIT_OK
        reports = out / "reports"
        assert (out / "manifest.json").exists()
        assert (reports / "metrics_all.csv").exists()
        assert (reports / "clustering_corn_k2.json").exists()
        assert (reports / "comparison.json").exists()
        text = capsys.readouterr().out
        assert "corn_k2" in text

    def test_from_manifest_reproduces(self, tmp_path, capsys):
        import subprocess

        spec_path = tmp_path / "spec.json"
        tiny_spec(days=2).to_json(spec_path)
        a, b = tmp_path / "runA", tmp_path / "runB"
        base = ["experiment", "--facility", str(spec_path), "--k", "2",
                "--rho", "0.002", "--replicates", "3", "--cost-rewirings", "2"]
        assert main([*base, "--out", str(a)]) == EXIT_OK
        rc = main(["experiment", "--from-manifest", str(a / "manifest.json"),
                   "--out", str(b)])
        assert rc == EXIT_OK
        diff = subprocess.run(
            ["diff", "-r", str(a / "reports"), str(b / "reports")],
            capture_output=True, text=True)
        assert diff.returncode == 0, diff.stdout
        capsys.readouterr()

    def test_rho_or_target_required(self, tmp_path, capsys):
        spec_path = tmp_path / "spec.json"
        tiny_spec().to_json(spec_path)
        rc = main(["experiment", "--facility", str(spec_path),
                   "--out", str(tmp_path / "x")])
        assert rc == EXIT_USAGE
        capsys.readouterr()

    def test_facility_and_inputs_exclusive(self, inputs, tmp_path, capsys):
        spec_path = tmp_path / "spec.json"
        tiny_spec().to_json(spec_path)
        rc = main(["experiment", "--facility", str(spec_path),
                   *input_args(inputs), "--spatial", str(inputs / "spatial.json"),
                   "--rho", "0.001", "--out", str(tmp_path / "y")])
        assert rc == EXIT_USAGE
        capsys.readouterr()
