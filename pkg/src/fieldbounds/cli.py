"""Configuration-driven experiment runner with machine-readable reports.

One JSON file describes one experiment: the two spaces, a field model, the
exponent pair, grids, replicate counts, and a mandatory root seed (no
wall-clock fallback, so identical spec + seed always produce byte-identical
reports).  Stages:

* ``norms``     -- norm table of a field (from CSV or a seeded sample);
* ``entropy``   -- covering/packing profile of the index set as CSV;
* ``bound``     -- moment-bound reports and theoretical tail tables;
* ``simulate``  -- Monte Carlo moments along the n-ladder vs. the bound;
* ``validate``  -- the full domination suite; exits non-zero on violation.

Reports embed the spec hash, the library version, and a schema version.
Validation errors are aggregated and reported together; if a stage fails
mid-run, outputs produced so far are written to ``<out>/quarantine``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import (
    field_moment_bound,
    fit_power_growth,
    legendre_tail,
    mixingale_coefficient,
    normed_sum_moment_bound,
    power_growth_tail,
    rosenthal_constant,
)
from .entropy import entropy_profile
from .norms import INF, cl_norm, lc_norm, mixed_norm
from .simulate import (
    Ar1FieldModel,
    GaussianFieldModel,
    MartingaleFieldModel,
    ScalarInnovationModel,
    ScalarLaw,
    empirical_moments_multi,
    empirical_tail,
    random_entropy_expectation,
    sample_field,
)
from .spaces import (
    build_index_space,
    build_index_space_from_matrix,
    build_measure_space,
    make_field,
)

SCHEMA_VERSION = 1
_STAGES = ("norms", "entropy", "bound", "simulate", "validate")


class SpecError(ValueError):
    """Experiment spec failed validation; carries every collected problem."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid experiment spec:\n  - " + "\n  - ".join(self.problems))


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _csv(header: list[str], rows: list[list]) -> str:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def spec_digest(spec: dict) -> str:
    canon = json.dumps(_jsonable(spec), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


class Experiment:
    """Validated experiment spec with lazily built spaces and model."""

    def __init__(self, spec: dict, seed_override: int | None = None):
        problems = []
        if not isinstance(spec, dict):
            raise SpecError(["spec must be a JSON object"])
        self.spec = spec
        self.digest = spec_digest(spec)

        seed = seed_override if seed_override is not None else spec.get("root_seed")
        if seed is None:
            problems.append("root_seed is required (no wall-clock default)")
        self.root_seed = seed

        for key in ("x_space", "t_space", "model"):
            if key not in spec:
                problems.append(f"missing section {key!r}")

        self.p = float(spec.get("p", 2.0))
        self.q = float(spec.get("q", 1.0))
        if self.p < 2.0:
            problems.append(f"p must be >= 2, got {self.p}")
        if self.q < 1.0:
            problems.append(f"q must be >= 1, got {self.q}")

        self.n_ladder = [int(n) for n in spec.get("n_ladder", [1, 2, 4, 8])]
        if not self.n_ladder or any(n < 1 for n in self.n_ladder):
            problems.append("n_ladder must be a non-empty list of n >= 1")
        self.q_grid = [float(v) for v in spec.get("q_grid", [1.25, 1.5, 2.0, 3.0, 4.0])]
        if any(v <= 1.0 for v in self.q_grid):
            problems.append("q_grid values must exceed 1")
        self.z_grid = [float(v) for v in spec.get("z_grid", [2.0, 3.0, 4.0, 6.0])]

        reps = spec.get("replicates", {})
        self.rep_moment = int(reps.get("moment", 2000))
        self.rep_tail = int(reps.get("tail", 20000))
        self.rep_second = int(reps.get("second_norm", 500))

        flags = spec.get("flags", {})
        self.literal_increment_form = bool(flags.get("literal_increment_form", False))
        self.martingale_slack = float(flags.get("martingale_slack", 2.0))
        self.symmetric_rosenthal = bool(flags.get("symmetric_rosenthal", False))

        self.x_space = None
        self.t_space = None
        self.model = None
        if not problems:
            try:
                self._build_spaces_and_model()
            except (ValueError, KeyError, TypeError) as exc:
                problems.append(str(exc))
        if problems:
            raise SpecError(problems)

    # -- construction -----------------------------------------------------

    def _build_spaces_and_model(self):
        xs = self.spec["x_space"]
        self.x_space = build_measure_space(xs["points"], xs["weights"])
        ts = self.spec["t_space"]
        if "matrix" in ts:
            self.t_space = build_index_space_from_matrix(ts["matrix"])
            self._t_coords = None
        else:
            self._t_coords = np.asarray(ts["coords"], dtype=float)
            self.t_space = build_index_space(ts["coords"], ts.get("alpha", 1.0))
        self.model = self._build_model(self.spec["model"])

    def _profile(self, desc: dict) -> np.ndarray:
        if "profile" in desc:
            return np.asarray(desc["profile"], dtype=float)
        if "x_gain" in desc and "t_gain" in desc:
            return np.outer(desc["x_gain"], desc["t_gain"])
        return np.ones((self.x_space.size, self.t_space.size))

    def _build_model(self, desc: dict):
        kind = desc.get("kind")
        scale = float(desc.get("scale", 1.0))
        if kind == "gaussian":
            if "t_kernel" in desc:
                kernel = np.asarray(desc["t_kernel"], dtype=float)
            else:
                if self._t_coords is None:
                    raise ValueError(
                        "gaussian model needs an explicit t_kernel when the "
                        "index space is matrix-built"
                    )
                ell = float(desc.get("t_length_scale", 0.5))
                d2 = ((self._t_coords[:, None, :] - self._t_coords[None, :, :]) ** 2).sum(-1)
                kernel = np.exp(-0.5 * d2 / ell**2)
            if "x_cov" in desc:
                x_cov = np.asarray(desc["x_cov"], dtype=float)
            else:
                x_cov = np.diag(np.asarray(
                    desc.get("x_variance", np.ones(self.x_space.size)), dtype=float
                ))
            return GaussianFieldModel(
                self.x_space, self.t_space, x_cov=x_cov, t_kernel=kernel, scale=scale
            )
        if kind in ("symmetrized-uniform", "heavy-tail-t"):
            if kind == "heavy-tail-t":
                law = ScalarLaw("student-t", dof=float(desc["dof"]))
                needed = self.p * max(self.q, max(self.q_grid, default=self.q))
                if law.max_order is not None and needed >= law.max_order:
                    raise ValueError(
                        f"heavy-tail model with dof={law.dof:g} cannot supply the "
                        f"requested moment order {needed:g}"
                    )
            else:
                law = ScalarLaw("uniform")
            return ScalarInnovationModel(
                self.x_space, self.t_space, self._profile(desc), law, scale=scale
            )
        if kind == "martingale-difference":
            return MartingaleFieldModel(
                self.x_space, self.t_space, self._profile(desc),
                base_scale=float(desc.get("base_scale", 1.0)),
                modulation=float(desc.get("modulation", 0.5)),
                scale=scale,
            )
        if kind == "mixingale-ar":
            return Ar1FieldModel(
                self.x_space, self.t_space, self._profile(desc),
                ar_coeff=float(desc.get("ar_coeff", 0.5)),
                beta_scale=float(desc.get("beta_scale", 1.0)),
                scale=scale,
            )
        raise ValueError(f"unknown model kind {kind!r}")

    # -- bound helpers -----------------------------------------------------

    def moment_constant(self):
        """Kind-appropriate sum/summand constant plus its descriptive name."""
        if self.model.kind == "mixingale-ar":
            decay = self.model.mixing_decay()

            def constant(u: float) -> float:
                return mixingale_coefficient(u, decay).value

            return constant, "mixingale"
        return (
            lambda u: rosenthal_constant(u, symmetric=self.symmetric_rosenthal)
        ), "rosenthal"

    def sum_bound(self, q: float | None = None):
        constant, _ = self.moment_constant()
        return normed_sum_moment_bound(
            self.model.moment_oracle(), self.p, q or self.q,
            self.x_space, self.t_space, moment_constant=constant,
        )

    def single_bound(self, q: float | None = None):
        return field_moment_bound(
            self.model.moment_oracle(), self.p, q or self.q,
            self.x_space, self.t_space, literal_form=self.literal_increment_form,
        )

    def meta(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "library_version": __version__,
            "spec_sha256": self.digest,
            "root_seed": self.root_seed,
        }


def _report_dict(report) -> dict:
    out = {
        "kind": report.kind,
        "p": report.p,
        "q": report.q,
        "scale": report.scale,
        "theta": report.theta,
        "bound": report.bound,
        "distances": _jsonable(report.distances),
        "details": _jsonable(report.details),
    }
    if report.series is not None:
        out["series"] = {
            "theta": report.series.theta,
            "terms": _jsonable(report.series.terms),
            "tail_bound": report.series.tail_bound,
            "series_total": report.series.series_total,
            "sigma_factor": report.series.sigma_factor,
            "total": report.series.total,
        }
    return out


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------


def _norm_table(field, p_list) -> dict:
    table = {}
    for p in p_list:
        table[f"p={p:g}"] = {
            "cl": cl_norm(field, p),
            "lc": lc_norm(field, p),
            "flat": mixed_norm(field, [("x", p), ("t", p)]),
        }
    return table


def stage_norms(exp: Experiment) -> dict[str, str]:
    if "field_csv" in exp.spec:
        values = np.loadtxt(exp.spec["field_csv"], delimiter=",", ndmin=2)
        field = make_field(values, exp.x_space, exp.t_space)
        source = exp.spec["field_csv"]
    else:
        field = sample_field(exp.model, (exp.root_seed, "norms"))
        source = "sampled"
    p_list = [float(p) for p in exp.spec.get("norms_p", [exp.p])]
    doc = exp.meta() | {"source": source, "norms": _norm_table(field, p_list)}
    return {"norms.json": json.dumps(doc, sort_keys=True, indent=2) + "\n"}


def stage_entropy(exp: Experiment) -> dict[str, str]:
    grid = exp.spec.get("eps_grid")
    if grid is None:
        grid = [2.0**-k for k in range(0, 11)]
    profile = entropy_profile(exp.t_space, grid)
    rows = [
        [e, int(cu), int(pl), math.log(float(cu))]
        for e, cu, pl in zip(profile.eps_grid, profile.cover_upper, profile.pack_lower)
    ]
    return {"entropy.csv": _csv(["eps", "cover_upper", "pack_lower", "entropy"], rows)}


def stage_bound(exp: Experiment) -> dict[str, str]:
    single = exp.single_bound()
    sums = exp.sum_bound()
    _, constant_name = exp.moment_constant()

    grid_rows = []
    psi_pow_p = []
    for qv in exp.q_grid:
        rep = exp.single_bound(qv)
        psi_pow_p.append(rep.bound**exp.p)
        grid_rows.append([qv, rep.scale, rep.theta, rep.bound])

    fit = _maybe_fit_growth(exp.q_grid, psi_pow_p)
    tails = [
        [
            z,
            legendre_tail(exp.q_grid, psi_pow_p, z),
            power_growth_tail(fit, z) if fit else math.nan,
        ]
        for z in exp.z_grid
    ]
    doc = exp.meta() | {
        "p": exp.p,
        "q": exp.q,
        "constant": constant_name,
        "single_field": _report_dict(single),
        "normed_sums": _report_dict(sums),
        "q_grid": exp.q_grid,
        "psi_pow_p": psi_pow_p,
        "growth_fit": None if fit is None else {
            "c1": fit.c1, "m": fit.m,
            "residual": fit.residual, "poor_fit": fit.poor_fit,
        },
        "tails": {
            "z_grid": exp.z_grid,
            "legendre": [row[1] for row in tails],
            "power_fit": [row[2] for row in tails],
        },
    }
    return {
        "bound.json": json.dumps(_jsonable(doc), sort_keys=True, indent=2) + "\n",
        "bound_table.csv": _csv(["q", "sigma", "theta", "bound"], grid_rows),
        "tails.csv": _csv(["z", "legendre", "power_fit"], tails),
    }


def _moment_name(p: float, q: float) -> str:
    return f"sup_lp_moment[p={p:g},q={q:g}]"


def _maybe_fit_growth(q_grid, values):
    """Power-growth fit, or None when the growth is not power-like.

    Bounded innovation laws give flat or decreasing moment growth, for
    which the power-growth tail route does not apply; the Legendre route
    stays valid either way.
    """
    try:
        return fit_power_growth(q_grid, values)
    except ValueError:
        return None


def stage_simulate(exp: Experiment, jobs: int = 1) -> dict[str, str]:
    p, q = exp.p, exp.q
    nu = exp.sum_bound().bound
    name = _moment_name(p, q)
    root = 1.0 / (p * q)
    rows = []
    for n in exp.n_ladder:
        est = empirical_moments_multi(
            exp.model, n, {name: lambda f: cl_norm(f, p) ** (p * q)},
            exp.rep_moment, exp.root_seed, label="simulate", jobs=jobs,
        )[name]
        rows.append([
            n, name, est.estimate**root, est.ci_low**root, est.ci_high**root,
            nu, bool(est.ci_high**root <= nu),
        ])
    return {
        "simulate.csv": _csv(
            ["n", "functional", "estimate", "ci_lo", "ci_hi", "bound", "dominated"],
            rows,
        )
    }


def stage_validate(exp: Experiment, jobs: int = 1) -> dict[str, str]:
    p, q = exp.p, exp.q
    root = 1.0 / (p * q)
    dependent_kind = exp.model.kind in ("martingale-difference", "mixingale-ar")
    slack_allowed = exp.martingale_slack if dependent_kind else 1.0
    checks = []

    # normed-sum moments along the ladder
    nu = exp.sum_bound().bound
    name = _moment_name(p, q)
    sim_rows = []
    worst = 0.0
    for n in exp.n_ladder:
        est = empirical_moments_multi(
            exp.model, n, {name: lambda f: cl_norm(f, p) ** (p * q)},
            exp.rep_moment, exp.root_seed, label="simulate", jobs=jobs,
        )[name]
        hi = est.ci_high**root
        worst = max(worst, hi / nu)
        sim_rows.append([
            n, name, est.estimate**root, est.ci_low**root, hi, nu, bool(hi <= nu)
        ])
    smallest_slack = max(1.0, worst)
    checks.append({
        "name": "normed-sum moment domination",
        "bound": nu,
        "worst_ratio": worst,
        "smallest_restoring_slack": smallest_slack,
        "slack_allowed": slack_allowed,
        "passed": bool(smallest_slack <= slack_allowed),
    })

    # single-field moment at n = 1
    psi = exp.single_bound().bound
    est1 = empirical_moments_multi(
        exp.model, 1, {name: lambda f: cl_norm(f, p) ** (p * q)},
        exp.rep_moment, exp.root_seed, label="single", jobs=jobs,
    )[name]
    checks.append({
        "name": "single-field moment domination",
        "bound": psi,
        "empirical_ci_high": est1.ci_high**root,
        "passed": bool(est1.ci_high**root <= psi),
    })

    # second norm via the per-realization random entropy bound
    cert = random_entropy_expectation(
        exp.model, p, q, exp.rep_second, exp.root_seed, jobs=jobs
    )
    checks.append({
        "name": "second-norm domination",
        "lhs_ci_high": cert.lhs_ci_high,
        "rhs_ci_low": cert.rhs_ci_low,
        "flagged": cert.flagged,
        "passed": bool(cert.dominated),
    })

    # tails of the single field's p-th power norm
    psi_pow_p = [exp.single_bound(qv).bound ** p for qv in exp.q_grid]
    fit = _maybe_fit_growth(exp.q_grid, psi_pow_p)
    tail_emp = empirical_tail(
        exp.model, 1, lambda f: cl_norm(f, p) ** p, exp.z_grid,
        exp.rep_tail, exp.root_seed, jobs=jobs,
    )
    tail_rows = []
    legendre_ok, power_ok = True, True
    for z, surv, cp in zip(exp.z_grid, tail_emp.survival, tail_emp.cp_upper):
        leg = legendre_tail(exp.q_grid, psi_pow_p, z)
        pow_t = power_growth_tail(fit, z) if fit else math.nan
        legendre_ok &= bool(cp <= leg)
        if fit is not None:
            power_ok &= bool(cp <= pow_t)
        tail_rows.append([z, leg, pow_t, surv, cp])
    checks.append({"name": "tail domination (legendre)", "passed": bool(legendre_ok)})
    checks.append({
        "name": "tail domination (power-growth)",
        "applicable": fit is not None,
        "passed": bool(power_ok),
    })

    all_passed = all(c["passed"] for c in checks)
    doc = exp.meta() | {"checks": checks, "all_passed": all_passed}
    return {
        "validate.json": json.dumps(_jsonable(doc), sort_keys=True, indent=2) + "\n",
        "simulate.csv": _csv(
            ["n", "functional", "estimate", "ci_lo", "ci_hi", "bound", "dominated"],
            sim_rows,
        ),
        "tails.csv": _csv(
            ["z", "legendre", "power_fit", "empirical", "cp_upper"], tail_rows
        ),
    }


def render_report(report: dict) -> dict[str, str]:
    """Re-derive plot-ready CSV tables from a bound report document."""
    out = {}
    if "q_grid" in report and "psi_pow_p" in report:
        rows = [
            [qv, val ** (1.0 / report["p"]), report["p"]]
            for qv, val in zip(report["q_grid"], report["psi_pow_p"])
        ]
        out["bound_table.csv"] = _csv(["q", "bound", "p"], rows)
    if "tails" in report:
        t = report["tails"]
        rows = [
            [z, leg, pw]
            for z, leg, pw in zip(t["z_grid"], t["legendre"], t["power_fit"])
        ]
        out["tails.csv"] = _csv(["z", "legendre", "power_fit"], rows)
    return out


# ---------------------------------------------------------------------------
# runner
# ---------------------------------------------------------------------------


def run(spec: dict, stages, out_dir, seed_override: int | None = None,
        jobs: int = 1) -> int:
    """Execute the requested stages; returns the process exit code.

    Unknown stages fail validation; an empty stage list succeeds with no
    outputs.  Outputs are collected in memory and written together; if a
    stage raises, whatever completed is written under ``<out>/quarantine``.
    """
    stages = list(stages)
    unknown = [s for s in stages if s not in _STAGES]
    if unknown:
        raise SpecError([f"unknown stage {s!r}" for s in unknown])
    if not stages:
        return 0
    exp = Experiment(spec, seed_override=seed_override)
    out = Path(out_dir)
    outputs: dict[str, str] = {}
    exit_code = 0
    try:
        for stage in stages:
            if stage == "norms":
                outputs.update(stage_norms(exp))
            elif stage == "entropy":
                outputs.update(stage_entropy(exp))
            elif stage == "bound":
                outputs.update(stage_bound(exp))
            elif stage == "simulate":
                outputs.update(stage_simulate(exp, jobs=jobs))
            elif stage == "validate":
                result = stage_validate(exp, jobs=jobs)
                outputs.update(result)
                if '"all_passed": false' in result["validate.json"]:
                    exit_code = 1
    except Exception:
        qdir = out / "quarantine"
        qdir.mkdir(parents=True, exist_ok=True)
        for fname, content in outputs.items():
            (qdir / fname).write_text(content)
        raise
    out.mkdir(parents=True, exist_ok=True)
    for fname, content in outputs.items():
        (out / fname).write_text(content)
    return exit_code


def _load_spec(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _add_common(sub):
    sub.add_argument("--spec", required=True, help="experiment spec JSON")
    sub.add_argument("--out", default="fieldbounds-out", help="output directory")
    sub.add_argument("--seed", type=int, default=None, help="override the spec root seed")
    sub.add_argument("--jobs", type=int, default=1, help="worker threads for replicates")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fieldbounds",
        description="entropy-series moment/tail bounds with Monte Carlo certification",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    run_p = subs.add_parser("run", help="run a list of stages from one spec")
    _add_common(run_p)
    run_p.add_argument(
        "--stage", default="",
        help=f"comma-separated stages from {', '.join(_STAGES)} (empty: none)",
    )

    for name in _STAGES:
        sp = subs.add_parser(name, help=f"run the {name} stage")
        _add_common(sp)

    render_p = subs.add_parser("render", help="re-derive CSV tables from a report JSON")
    render_p.add_argument("--report", required=True)
    render_p.add_argument("--out", default="fieldbounds-out")

    args = parser.parse_args(argv)

    try:
        if args.command == "render":
            with open(args.report) as fh:
                report = json.load(fh)
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            for fname, content in render_report(report).items():
                (out / fname).write_text(content)
            return 0
        spec = _load_spec(args.spec)
        if args.command == "run":
            stages = [s for s in args.stage.split(",") if s]
        else:
            stages = [args.command]
        return run(spec, stages, args.out, seed_override=args.seed, jobs=args.jobs)
    except SpecError as exc:
        print(str(exc), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
