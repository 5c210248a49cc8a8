"""Scenario-driven command line front end.

A scenario is a JSON file naming a Dirichlet problem symbolically (metric
matrix, density and boundary data as expression trees), a grid, a stage
pipeline, and per-stage options.  `run_scenario` executes the pipeline,
collects an `EstimateReport` with a numeric margin behind every pass/fail
flag, and emits plot-ready CSV artifacts.

Exit codes: 0 all requested stages pass, 1 a stage failed or errored,
2 the scenario could not be parsed or validated.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, barrier, calabi, symbolic
from .fields import HermitianMetricField, ScalarField
from .geometry import hessian_metric
from .grid import BallGrid
from .solver import DirichletProblem, SolveError, solve

STAGES = ("solve", "verify-interior", "verify-calabi", "check-identities",
          "lp-ladder")


class ScenarioError(ValueError):
    """Scenario file failed to parse or validate."""


@dataclass(frozen=True)
class Scenario:
    name: str
    n: int
    m: int
    omega: symbolic.ExprMatrix
    density: object          # sympy expression
    boundary: object         # sympy expression
    convention: str
    pipeline: tuple
    options: dict
    seed: int

    def problem(self, m=None) -> DirichletProblem:
        grid = BallGrid(self.n, self.m if m is None else m)
        omega = HermitianMetricField.from_matrix(grid, self.omega)
        density = ScalarField.from_expr(grid, self.density)
        boundary = ScalarField.from_expr(grid, self.boundary)
        return DirichletProblem(omega, density, boundary,
                                convention=self.convention)


@dataclass(frozen=True)
class EstimateReport:
    scenario: str
    seed: int
    grid: dict
    version: str
    stages: dict             # stage -> {"status", "margin", ...payload}
    passed: bool
    timings: dict = field(default_factory=dict)

    def to_json(self) -> str:
        body = {"scenario": self.scenario, "seed": self.seed,
                "grid": self.grid, "version": self.version,
                "stages": self.stages, "passed": self.passed,
                "timings": self.timings}
        return json.dumps(_jsonable(body), indent=2, sort_keys=True)


def scenario_from_dict(data, name_hint="<scenario>") -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object")
    try:
        name = data.get("name", name_hint)
        grid = data["grid"]
        n, m = int(grid["n"]), int(grid["m"])
        BallGrid(n, m)  # validates n, m
        problem = data["problem"]
        omega = symbolic.ExprMatrix.from_trees(problem["omega"], n=n)
        density = symbolic.entry_from_tree(problem["density"])
        boundary = symbolic.entry_from_tree(problem["boundary"])
        convention = problem.get("convention", "plain-f")
        pipeline = tuple(data.get("pipeline", ["solve"]))
        options = data.get("options", {})
        seed = int(data.get("seed", 0))
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"invalid scenario {name_hint}: {exc}") from exc
    unknown = [s for s in pipeline if s not in STAGES]
    if unknown:
        raise ScenarioError(f"unknown stages {unknown}; expected {STAGES}")
    if any(s != "solve" for s in pipeline) and "solve" not in pipeline:
        raise ScenarioError("verify stages require a preceding solve stage")
    if pipeline and "solve" in pipeline and pipeline[0] != "solve":
        raise ScenarioError("solve must come first in the pipeline")
    if len(set(pipeline)) != len(pipeline):
        raise ScenarioError("pipeline stages must be distinct")
    if not isinstance(options, dict):
        raise ScenarioError("options must be an object keyed by stage")
    return Scenario(name=name, n=n, m=m, omega=omega, density=density,
                    boundary=boundary, convention=convention,
                    pipeline=pipeline, options=options, seed=seed)


def load_scenario(source) -> Scenario:
    """Load a scenario from a path or from the bundled set by name."""
    path = Path(source)
    if path.exists():
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: malformed JSON: {exc}") from exc
        return scenario_from_dict(data, name_hint=path.stem)
    candidate = resources.files("cmaball").joinpath("scenarios",
                                                    f"{source}.json")
    if candidate.is_file():
        return scenario_from_dict(json.loads(candidate.read_text()),
                                  name_hint=str(source))
    raise ScenarioError(f"no scenario file or bundled scenario {source!r}")


def bundled_scenario_names() -> list:
    folder = resources.files("cmaball").joinpath("scenarios")
    return sorted(p.name[:-5] for p in folder.iterdir()
                  if p.name.endswith(".json"))


# ---------------------------------------------------------------------------
# stages


def _stage_solve(scenario, opts, context, tol_override=None):
    tol = tol_override if tol_override is not None else opts.get("tol", 1e-9)
    problem = scenario.problem()
    sol = solve(problem, tol=tol)
    context["problem"] = problem
    context["solution"] = sol
    u_int = sol.u.interior_values()
    payload = {
        "residual_norm": sol.residual_norm,
        "iterations": sol.iterations,
        "tol": tol,
        "min_eig": float(np.nanmin(sol.min_eig.values[sol.min_eig.valid])),
        "u_range": [float(u_int.min()), float(u_int.max())],
    }
    passed = sol.residual_norm <= tol
    margin = tol - sol.residual_norm
    artifacts = {}
    study = opts.get("convergence")
    if study:
        exact = symbolic.compile_expr(
            symbolic.entry_from_tree(study["exact"]), scenario.n)
        rows = []
        for m in study["grids"]:
            prob_m = scenario.problem(m=int(m))
            sol_m = solve(prob_m, tol=tol)
            grid = prob_m.grid
            zs = grid.complex_coords()
            pts = np.stack([np.broadcast_to(z, grid.shape) for z in zs],
                           axis=-1)
            err = np.abs(sol_m.u.values - exact(pts))
            rows.append({"m": int(m), "spacing": grid.spacing,
                         "error": float(np.nanmax(err[sol_m.u.valid])),
                         "order": np.nan})
        for prev, cur in zip(rows, rows[1:]):
            ratio = prev["error"] / max(cur["error"], 1e-300)
            cur["order"] = float(np.log(ratio) / np.log(
                prev["spacing"] / cur["spacing"]))
        payload["convergence"] = rows
        passed = passed and all(np.isfinite(r["error"]) for r in rows)
        artifacts["convergence"] = (
            ["m", "spacing", "error", "order"],
            [[r["m"], r["spacing"], r["error"], r["order"]] for r in rows])
    return passed, margin, payload, artifacts


def _stage_verify_interior(scenario, opts, context):
    sol = context["solution"]
    problem = context["problem"]
    config = barrier.make_config(
        scenario.n,
        eta=opts.get("eta", 0.2),
        pairs=opts.get("pairs", 1000),
        points=opts.get("points", 1000),
        seed=scenario.seed)
    phi = symbolic.compile_expr(scenario.boundary, scenario.n)
    cert = barrier.certify_interior_c11(
        sol.u, problem.omega, problem.density, phi, config,
        slack_coeff=opts.get("slack_coeff", 10.0),
        supersolution_samples=opts.get("supersolution_samples", 3),
        refinement=opts.get("refinement", True))
    context["certificate"] = cert
    payload = {
        "K1": cert.K1, "K2": cert.K2,
        "sup_quotient": cert.sup_quotient, "slack": cert.slack,
        "supersolution": [dataclasses.asdict(r)
                          for r in cert.details["supersolution"]],
        "comparison": cert.details["comparison"],
        "pairs": cert.details["pairs"], "points": cert.details["points"],
        "refinement_delta": cert.details.get("refinement_delta"),
    }
    table = cert.details["quotient_table"]
    artifacts = {"quotients": (
        ["offset", "h2", "max_quotient"],
        [[_offset_label(row["offset"]), row["h2"], row["max_quotient"]]
         for row in table])}
    margin = cert.K1 + cert.K2 + cert.slack - cert.sup_quotient
    return cert.passed, margin, payload, artifacts


def _offset_label(combo):
    return "+".join(f"e{p}*{s}" for p, s in combo)


def _stage_verify_calabi(scenario, opts, context):
    sol = context["solution"]
    problem = context["problem"]
    diag = calabi.diagnostics(problem.omega, sol.u,
                              slack_coeff=opts.get("slack_coeff", 10.0))
    context["calabi"] = diag
    grid = problem.grid
    slack = opts.get("slack_coeff", 10.0) * grid.spacing**2
    agreement_tol = opts.get("agreement_tol", 1e-6 + 10.0 * grid.spacing**2)
    defect_min = float(np.nanmin(diag.defect.values[diag.defect.valid])) \
        if diag.defect.valid.any() else np.nan
    s_max = diag.S_grad.max_abs()
    payload = {
        "lambda": diag.lam, "C1": diag.C1, "C2": diag.C2,
        "S_max": s_max, "defect_min": defect_min, "slack": slack,
        "agreement": diag.details["agreement"],
        "agreement_tol": agreement_tol,
        "theta_identity_residual": diag.details["theta_identity_residual"],
        "conjugate_identity_residual":
            diag.details["conjugate_identity_residual"],
        "geometry_norms": diag.details["geometry_norms"],
    }
    finite = all(np.isfinite(v) for v in (diag.lam, diag.C1, diag.C2, s_max))
    agreement_margin = agreement_tol - diag.details["agreement"]
    defect_margin = defect_min + slack
    margin = min(agreement_margin, defect_margin)
    passed = finite and agreement_margin >= 0.0 and defect_margin >= 0.0
    artifacts = {"s_variants": _field_table(
        grid, {"S_direct": diag.S_direct, "S_grad": diag.S_grad,
               "S_conn": diag.S_conn, "defect": diag.defect})}
    return passed, margin, payload, artifacts


def _field_table(grid, fields):
    """Per-node CSV rows over the union of validity, NaN where undefined."""
    union = np.zeros(grid.shape, dtype=bool)
    for f in fields.values():
        union |= f.valid
    idx = np.argwhere(union)
    coords = -1.0 + idx * grid.spacing
    header = [f"x{i // 2 + 1}" if i % 2 == 0 else f"y{i // 2 + 1}"
              for i in range(grid.dim)] + list(fields)
    rows = []
    values = [f.values[union] for f in fields.values()]
    for k in range(idx.shape[0]):
        rows.append(list(coords[k]) + [float(v[k]) for v in values])
    return header, rows


def _stage_check_identities(scenario, opts, context):
    sol = context["solution"]
    problem = context["problem"]
    gt = hessian_metric(problem.omega, sol.u)
    table = {}
    omega_norms = calabi.bianchi_residuals(problem.omega).max_norms()
    table["reference_form"] = omega_norms
    solution_norms = calabi.bianchi_residuals(gt).max_norms()
    solution_norms["theta_identity"] = calabi.connection_difference_residual(
        problem.omega, gt)
    solution_norms["conjugate_identity"] = calabi.conjugate_relation_residual(
        problem.omega, gt)
    table["solution_metric"] = solution_norms
    payload = {"residuals": table}
    reference_max = max(omega_norms.values())
    tol = opts.get("tol")
    if tol is not None:
        passed = np.isfinite(reference_max) and reference_max <= tol
        margin = tol - reference_max
    else:
        # without a tolerance the stage is a monitor: it passes when the
        # reference-form residuals are computable, and records the values
        passed = bool(np.isfinite(reference_max))
        margin = -reference_max
    payload["reference_max"] = reference_max
    return passed, margin, payload, {}


def _stage_lp_ladder(scenario, opts, context):
    sol = context["solution"]
    problem = context["problem"]
    gt = hessian_metric(problem.omega, sol.u)
    if "calabi" in context:
        S = context["calabi"].S_grad
    else:
        S = calabi.calabi_S(problem.omega, gt, sol.u)["grad"]
    rows, summary = calabi.lp_ladder(
        S, gt, R=opts.get("R", 0.5), R0=opts.get("R0", 0.9),
        m=opts.get("m", 3), k_max=opts.get("k_max", 16))
    terminal = rows[-1]["norm"]
    rtol = opts.get("rtol", 0.05)
    atol = opts.get("atol", 1e-8)
    scale = max(abs(summary["max_S_inner"]), atol)
    gap = abs(terminal - summary["max_S_inner"])
    passed = (terminal <= atol and summary["max_S_inner"] <= atol) \
        or gap <= rtol * scale
    margin = rtol * scale - gap
    payload = {"rows": rows, "terminal_norm": terminal,
               "max_S_inner": summary["max_S_inner"],
               "sup_ladder": summary["sup_ladder"], "gap": gap}
    artifacts = {"ladder": (["k", "q", "r", "norm"],
                            [[r["k"], r["q"], r["r"], r["norm"]]
                             for r in rows])}
    return passed, margin, payload, artifacts


_STAGE_FNS = {
    "solve": _stage_solve,
    "verify-interior": _stage_verify_interior,
    "verify-calabi": _stage_verify_calabi,
    "check-identities": _stage_check_identities,
    "lp-ladder": _stage_lp_ladder,
}


# ---------------------------------------------------------------------------
# pipeline driver


def run_scenario(scenario: Scenario, pipeline=None, tol_override=None):
    """Execute the pipeline; returns (EstimateReport, artifacts dict)."""
    pipeline = scenario.pipeline if pipeline is None else tuple(pipeline)
    context = {}
    stages = {}
    timings = {}
    artifacts = {}
    failed = False
    for stage in pipeline:
        if failed:
            stages[stage] = {"status": "skipped", "margin": None}
            continue
        opts = scenario.options.get(stage, {})
        start = time.perf_counter()
        try:
            if stage == "solve":
                result = _stage_solve(scenario, opts, context,
                                      tol_override=tol_override)
            else:
                result = _STAGE_FNS[stage](scenario, opts, context)
            passed, margin, payload, stage_artifacts = result
        except (SolveError, ValueError) as exc:
            timings[stage] = time.perf_counter() - start
            stages[stage] = {"status": "error", "margin": None,
                             "message": str(exc)}
            failed = True
            continue
        timings[stage] = time.perf_counter() - start
        entry = {"status": "pass" if passed else "fail", "margin": margin}
        entry.update(payload)
        stages[stage] = entry
        artifacts.update(stage_artifacts)
        if not passed:
            failed = True
    report = EstimateReport(
        scenario=scenario.name, seed=scenario.seed,
        grid={"n": scenario.n, "m": scenario.m}, version=__version__,
        stages=stages, passed=not failed, timings=timings)
    return report, artifacts


def emit_plot_data(artifacts: dict, out_dir) -> list:
    """Write one CSV per collected artifact; returns the paths written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, (header, rows) in sorted(artifacts.items()):
        path = out_dir / f"{name}.csv"
        with path.open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(c) for c in row])
        written.append(path)
    return written


def _cell(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if np.isfinite(value) else repr(value)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _jsonable(dataclasses.asdict(obj))
    return obj


# ---------------------------------------------------------------------------
# entry point


def _closure(command):
    if command == "run":
        return None
    if command == "solve":
        return ("solve",)
    return ("solve", command)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cmaball",
        description="Monge-Ampere Dirichlet scenarios: solve and certify.")
    sub = parser.add_subparsers(dest="command", required=True)
    for command in STAGES + ("run",):
        p = sub.add_parser(
            command,
            help=("full scenario pipeline" if command == "run"
                  else f"run the {command} stage (with its dependencies)"))
        p.add_argument("--scenario", required=True,
                       help="scenario file, or the name of a bundled one: "
                            + ", ".join(bundled_scenario_names()))
        p.add_argument("--out", help="directory for report.json and CSVs")
        p.add_argument("--seed", type=int, help="override the scenario seed")
        p.add_argument("--grid", type=int, help="override the grid size m")
        p.add_argument("--tol", type=float,
                       help="override the solver tolerance")
    args = parser.parse_args(argv)

    try:
        scenario = load_scenario(args.scenario)
        if args.seed is not None:
            scenario = dataclasses.replace(scenario, seed=args.seed)
        if args.grid is not None:
            BallGrid(scenario.n, args.grid)
            scenario = dataclasses.replace(scenario, m=args.grid)
    except (ScenarioError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    report, artifacts = run_scenario(scenario,
                                     pipeline=_closure(args.command),
                                     tol_override=args.tol)
    text = report.to_json()
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.json").write_text(text + "\n")
        emit_plot_data(artifacts, out_dir)
    print(text)
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
