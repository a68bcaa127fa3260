import json
import subprocess
import sys

import numpy as np
import pytest

import fieldbounds as fb
from fieldbounds.cli import Experiment, SpecError, render_report, run, spec_digest


def tiny_spec(kind="gaussian", **model_extra):
    model = {"kind": kind, "scale": 1.0}
    if kind == "gaussian":
        model |= {"t_length_scale": 1.5, "x_variance": [1.0] * 4}
    else:
        model |= {"x_gain": [1.0] * 4, "t_gain": [1.0, 1.2, 0.8, 1.1]}
    model |= model_extra
    return {
        "schema_version": 1,
        "root_seed": 99,
        "x_space": {"points": ["a", "b", "c", "d"], "weights": [0.25] * 4},
        "t_space": {"coords": [[0.0], [0.33], [0.66], [1.0]], "alpha": 1.0},
        "model": model,
        "p": 2.0,
        "q": 1.0,
        "q_grid": [1.5, 2.0, 3.0],
        "z_grid": [3.0, 6.0],
        "n_ladder": [1, 2],
        "replicates": {"moment": 150, "tail": 1000, "second_norm": 120},
        "norms_p": [1.0, 2.0],
    }


class TestSpecValidation:
    def test_problems_aggregated(self):
        with pytest.raises(SpecError) as err:
            Experiment({"p": 1.0})
        msg = str(err.value)
        assert "root_seed" in msg
        assert "x_space" in msg
        assert "model" in msg
        assert "p must be" in msg

    def test_missing_seed_rejected(self):
        spec = tiny_spec()
        del spec["root_seed"]
        with pytest.raises(SpecError, match="root_seed"):
            Experiment(spec)

    def test_seed_override(self):
        spec = tiny_spec()
        del spec["root_seed"]
        exp = Experiment(spec, seed_override=7)
        assert exp.root_seed == 7

    def test_every_model_kind_builds(self):
        for kind, extra in [
            ("gaussian", {}),
            ("symmetrized-uniform", {}),
            ("heavy-tail-t", {"dof": 30.0}),
            ("martingale-difference", {"modulation": 0.4}),
            ("mixingale-ar", {"ar_coeff": 0.5}),
        ]:
            exp = Experiment(tiny_spec(kind, **extra))
            assert exp.model.kind == kind

    def test_heavy_tail_insufficient_dof_rejected_at_configuration(self):
        with pytest.raises(SpecError, match="moment order"):
            Experiment(tiny_spec("heavy-tail-t", dof=5.0))

    def test_unknown_kind(self):
        with pytest.raises(SpecError, match="unknown model kind"):
            Experiment(tiny_spec("levy"))

    def test_digest_stable_under_key_order(self):
        a = {"b": 1, "a": [1, 2]}
        b = {"a": [1, 2], "b": 1}
        assert spec_digest(a) == spec_digest(b)


class TestRun:
    def test_empty_stage_list_no_outputs(self, tmp_path):
        out = tmp_path / "out"
        assert run(tiny_spec(), [], out) == 0
        assert not out.exists()

    def test_unknown_stage(self, tmp_path):
        with pytest.raises(SpecError, match="unknown stage"):
            run(tiny_spec(), ["norms", "frobnicate"], tmp_path)

    def test_norms_stage_matches_direct_computation(self, tmp_path):
        values = np.arange(16.0).reshape(4, 4) - 7.5
        csv = tmp_path / "field.csv"
        np.savetxt(csv, values, delimiter=",")
        spec = tiny_spec() | {"field_csv": str(csv)}
        assert run(spec, ["norms"], tmp_path / "out") == 0
        doc = json.loads((tmp_path / "out" / "norms.json").read_text())
        exp = Experiment(spec)
        field = fb.make_field(values, exp.x_space, exp.t_space)
        assert doc["norms"]["p=2"]["cl"] == pytest.approx(fb.cl_norm(field, 2.0))
        assert doc["norms"]["p=2"]["lc"] == pytest.approx(fb.lc_norm(field, 2.0))
        assert doc["norms"]["p=1"]["flat"] == pytest.approx(
            fb.mixed_norm(field, [("x", 1.0), ("t", 1.0)])
        )
        assert doc["spec_sha256"] == spec_digest(spec)
        assert doc["library_version"] == fb.__version__

    def test_entropy_stage_csv(self, tmp_path):
        assert run(tiny_spec(), ["entropy"], tmp_path) == 0
        lines = (tmp_path / "entropy.csv").read_text().strip().splitlines()
        assert lines[0] == "eps,cover_upper,pack_lower,entropy"
        first = lines[1].split(",")
        assert float(first[0]) == 1.0
        assert int(first[1]) == 1

    def test_bound_stage_report(self, tmp_path):
        spec = tiny_spec()
        assert run(spec, ["bound"], tmp_path) == 0
        doc = json.loads((tmp_path / "bound.json").read_text())
        assert doc["single_field"]["kind"] == "single-field"
        assert doc["normed_sums"]["kind"] == "normed-sums"
        assert doc["normed_sums"]["bound"] >= doc["single_field"]["bound"] * 0.5
        assert len(doc["psi_pow_p"]) == len(spec["q_grid"])
        assert (tmp_path / "bound_table.csv").exists()
        assert (tmp_path / "tails.csv").exists()

    def test_simulate_stage_dominates(self, tmp_path):
        assert run(tiny_spec(), ["simulate"], tmp_path) == 0
        lines = (tmp_path / "simulate.csv").read_text().strip().splitlines()
        assert lines[0] == "n,functional,estimate,ci_lo,ci_hi,bound,dominated"
        for line in lines[1:]:
            assert line.endswith("true")

    def test_validate_exit_zero_and_checks(self, tmp_path):
        assert run(tiny_spec(), ["validate"], tmp_path) == 0
        doc = json.loads((tmp_path / "validate.json").read_text())
        assert doc["all_passed"] is True
        names = {c["name"] for c in doc["checks"]}
        assert "normed-sum moment domination" in names
        assert "second-norm domination" in names

    def test_reproducible_across_runs_and_jobs(self, tmp_path):
        spec = tiny_spec()
        outs = []
        for tag, jobs in [("r1", 1), ("r2", 1), ("r8", 8)]:
            out = tmp_path / tag
            assert run(spec, ["validate", "bound"], out, jobs=jobs) == 0
            outs.append(
                {f.name: f.read_bytes() for f in sorted(out.iterdir())}
            )
        assert outs[0] == outs[1] == outs[2]

    def test_seed_override_changes_reports(self, tmp_path):
        spec = tiny_spec()
        run(spec, ["simulate"], tmp_path / "a")
        run(spec, ["simulate"], tmp_path / "b", seed_override=123456)
        assert (tmp_path / "a" / "simulate.csv").read_text() != (
            tmp_path / "b" / "simulate.csv"
        ).read_text()

    def test_quarantine_on_midrun_failure(self, tmp_path):
        spec = tiny_spec() | {"field_csv": str(tmp_path / "missing.csv")}
        out = tmp_path / "out"
        with pytest.raises(FileNotFoundError):
            run(spec, ["entropy", "norms"], out)
        assert (out / "quarantine" / "entropy.csv").exists()
        assert not (out / "entropy.csv").exists()


class TestRender:
    def test_tables_from_bound_report(self, tmp_path):
        run(tiny_spec(), ["bound"], tmp_path)
        doc = json.loads((tmp_path / "bound.json").read_text())
        tables = render_report(doc)
        assert set(tables) == {"bound_table.csv", "tails.csv"}
        header = tables["tails.csv"].splitlines()[0]
        assert header == "z,legendre,power_fit"

    def test_empty_report_gives_no_tables(self):
        assert render_report({"schema_version": 1}) == {}


def test_cli_entry_point(tmp_path):
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(tiny_spec()))
    out = tmp_path / "out"
    proc = subprocess.run(
        [
            sys.executable, "-m", "fieldbounds.cli", "run",
            "--spec", str(spec_path), "--stage", "entropy,norms",
            "--out", str(out),
        ],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (out / "entropy.csv").exists()
    assert (out / "norms.json").exists()


def test_cli_spec_error_exit_code(tmp_path):
    spec_path = tmp_path / "spec.json"
    bad = tiny_spec()
    del bad["root_seed"]
    spec_path.write_text(json.dumps(bad))
    proc = subprocess.run(
        [
            sys.executable, "-m", "fieldbounds.cli", "validate",
            "--spec", str(spec_path), "--out", str(tmp_path / "o"),
        ],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 2
    assert "root_seed" in proc.stderr
