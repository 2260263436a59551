"""Command-line front end: run scenarios, check the derivative engine, design gains.

Exit codes: 0 = run completed and all checks passed, 1 = runtime failure
(singularity/domain/convergence aborts, failed success criteria, bad pole
sets), 2 = configuration errors.  Verbosity via the TVOPT_LOG environment
variable (DEBUG/INFO/WARNING).
"""
from __future__ import annotations

import argparse
import concurrent.futures
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _backend
from .derivatives import finite_difference_gradient_derivative, total_gradient_derivative
from .errors import ConfigError, GainError, OrderError, TvoptError
from .objectives import barrier_sum, quadratic_tracking, switching_blend
from .paths import PolynomialPath
from .planner import design_gains
from .scenarios import BUILTIN_SCENARIOS, RunResult, ScenarioSpec, run_scenario
from .sim import write_trace_csv

log = logging.getLogger("tvoptctl")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2

LEMMA_TOLERANCE = 1e-5


@dataclass
class RunManifest:
    """Resolved inputs of a simulate invocation."""

    scenarios: list[str] = field(default_factory=list)
    config_path: str | None = None
    out_dir: str = "runs"
    overrides: list[tuple[str, object]] = field(default_factory=list)
    jobs: int = 1
    seed: int | None = None
    backend: str = "auto"
    report: str = "text"


def main(argv=None) -> int:
    _setup_logging()
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def _setup_logging():
    level = os.environ.get("TVOPT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tvoptctl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario and emit artifacts")
    sim.add_argument("--scenario", action="append", default=None,
                     help=f"builtin scenario name ({', '.join(BUILTIN_SCENARIOS)}); repeatable")
    sim.add_argument("--config", default=None, help="path to a scenario JSON document")
    sim.add_argument("--out", default="runs", help="output directory")
    sim.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="dotted-path override, value parsed as JSON (repeatable)")
    sim.add_argument("--jobs", type=int, default=1,
                     help="parallel workers across independent scenario runs")
    sim.add_argument("--seed", type=int, default=None, help="echoed into the manifest")
    sim.add_argument("--backend", default=None, choices=["auto", "pure", "compiled"])
    sim.add_argument("--report", default="text", choices=["text", "json"])
    sim.set_defaults(handler=cmd_simulate)

    lem = sub.add_parser("check-lemma",
                         help="engine-vs-oracle property suite for gradient derivatives")
    lem.add_argument("--orders", default="1,2,3", help="comma-separated derivative orders")
    lem.add_argument("--trials", type=int, default=100)
    lem.add_argument("--seed", type=int, default=0)
    lem.add_argument("--partial-cap", type=int, default=4,
                     help="max total partial order of the randomized objectives")
    lem.set_defaults(handler=cmd_check_lemma)

    gains = sub.add_parser("design-gains", help="print a GainProfile as JSON")
    gains.add_argument("--poles", required=True,
                       help="comma-separated poles (complex literals allowed)")
    gains.add_argument("-k", type=int, default=None,
                       help="expected order (validated against the pole count)")
    gains.add_argument("-m", type=int, default=2, help="output dimension")
    gains.set_defaults(handler=cmd_design_gains)
    return parser


# -- simulate ------------------------------------------------------------------

def cmd_simulate(args) -> int:
    manifest = RunManifest(
        scenarios=args.scenario or [], config_path=args.config, out_dir=args.out,
        overrides=[_parse_override(s) for s in args.set], jobs=args.jobs,
        seed=args.seed, backend=args.backend or "auto", report=args.report)
    specs = _resolve_specs(manifest)

    if len(specs) == 1:
        name, spec = specs[0]
        code, summary = _run_one(spec, Path(manifest.out_dir), manifest)
        _emit_summary([summary], manifest.report)
        return code
    out_root = Path(manifest.out_dir)
    results = []
    if manifest.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=manifest.jobs) as pool:
            futures = [pool.submit(_run_one, spec, out_root / name, manifest)
                       for name, spec in specs]
            results = [f.result() for f in futures]
    else:
        results = [_run_one(spec, out_root / name, manifest) for name, spec in specs]
    _emit_summary([summary for _, summary in results], manifest.report)
    return max(code for code, _ in results)


def _parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not KEY=VALUE")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _resolve_specs(manifest: RunManifest) -> list[tuple[str, ScenarioSpec]]:
    if bool(manifest.scenarios) == bool(manifest.config_path):
        raise ConfigError("exactly one of --scenario or --config is required")
    specs = []
    if manifest.config_path:
        path = Path(manifest.config_path)
        if not path.exists():
            raise ConfigError(f"config file {path} not found")
        try:
            spec = ScenarioSpec.from_json(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}")
        specs.append((spec.name, spec))
    for name in manifest.scenarios:
        if name not in BUILTIN_SCENARIOS:
            raise ConfigError(
                f"unknown scenario {name!r}; builtins: {', '.join(BUILTIN_SCENARIOS)}")
        specs.append((name, BUILTIN_SCENARIOS[name]()))
    out = []
    for name, spec in specs:
        for key, value in manifest.overrides:
            try:
                spec = spec.override(key, value)
            except (KeyError, IndexError, ValueError, TypeError) as exc:
                raise ConfigError(f"cannot apply override {key}: {exc}")
        out.append((name, spec))
    return out


def _run_one(spec: ScenarioSpec, out_dir: Path, manifest: RunManifest):
    out_dir.mkdir(parents=True, exist_ok=True)
    backend = manifest.backend if manifest.backend != "auto" else spec.get("backend", "auto")
    resolved_backend = _backend.selected_backend(backend)
    spec = spec.override("backend", resolved_backend)
    if manifest.seed is not None:
        spec = spec.override("seed", manifest.seed)
    log.info("running scenario %s (backend=%s)", spec.name, resolved_backend)
    try:
        result = run_scenario(spec, backend=resolved_backend)
    except TvoptError as exc:
        (out_dir / "resolved_config.json").write_text(spec.to_json() + "\n")
        record = {"scenario": spec.name, "error":
                  {"type": type(exc).__name__, "message": str(exc), "t": None},
                  "bound": None, "success": {"passed": False, "criteria": []},
                  "exit_status": EXIT_RUNTIME}
        (out_dir / "bound_report.json").write_text(json.dumps(record, indent=2) + "\n")
        return EXIT_RUNTIME, record

    write_trace_csv(result.trace, out_dir / "trace.csv")
    (out_dir / "resolved_config.json").write_text(spec.to_json() + "\n")
    code = EXIT_OK if result.passed else EXIT_RUNTIME
    record = {
        "scenario": spec.name,
        "error": result.trace.error,
        "bound": None if result.bound is None else result.bound.__dict__,
        "success": result.success,
        "exit_status": code,
    }
    (out_dir / "bound_report.json").write_text(json.dumps(record, indent=2) + "\n")
    log.info("scenario %s finished with exit status %d", spec.name, code)
    return code, record


def _emit_summary(records: list[dict], report: str):
    if report == "json":
        print(json.dumps(records, indent=2))
        return
    for rec in records:
        status = "PASS" if rec["exit_status"] == EXIT_OK else "FAIL"
        print(f"[{status}] scenario {rec['scenario']}")
        if rec["error"]:
            print(f"    aborted: {rec['error']['type']}: {rec['error']['message']}")
        for crit in rec["success"].get("criteria", []):
            detail = {k: v for k, v in crit.items()
                      if k not in ("kind", "passed") and v is not None}
            print(f"    {'ok ' if crit['passed'] else 'BAD'} {crit['kind']}: {detail}")


# -- check-lemma ---------------------------------------------------------------

def cmd_check_lemma(args) -> int:
    try:
        orders = [int(tok) for tok in str(args.orders).split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse orders {args.orders!r}")
    if not orders or min(orders) < 1:
        raise ConfigError("orders must be positive integers")
    try:
        worst = lemma_property_suite(orders, args.trials, args.seed, args.partial_cap)
    except (OrderError, ConfigError) as exc:
        log.error("lemma suite misconfigured: %s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    failed = False
    for order in orders:
        status = "ok" if worst[order] <= LEMMA_TOLERANCE else "FAIL"
        print(f"order {order}: max relative error {worst[order]:.3e} [{status}]")
        failed = failed or worst[order] > LEMMA_TOLERANCE
    if failed:
        print(f"failing seed: {args.seed}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def lemma_property_suite(orders, trials: int, seed: int, partial_cap: int = 4):
    """Max engine-vs-oracle relative error per order over randomized cases."""
    for order in orders:
        if order + 1 > partial_cap:
            raise OrderError(
                f"order {order} needs partials of total order {order + 1}, "
                f"cap is {partial_cap}")
    rng = np.random.default_rng(seed)
    worst = {order: 0.0 for order in orders}
    # cubic trajectories (the package's own path type) suffice for orders
    # up to three; order four needs a higher degree to be nontrivial
    traj_cols = max(4, max(orders) + 2)
    for trial in range(trials):
        objective, trajectory = _random_case(rng, trial % 3, partial_cap, traj_cols)
        t = float(rng.uniform(0.2, 1.8))
        y = np.asarray(trajectory(t), dtype=float)
        stack_rows = trajectory.derivatives(t, max(orders) + 1)
        partials = objective.partials(y, t, order=max(orders) + 1)
        from .derivatives import DerivativeStack
        stack = DerivativeStack(stack_rows)
        for order in orders:
            engine = total_gradient_derivative(partials, stack, order)
            oracle = finite_difference_gradient_derivative(objective, trajectory, t, order)
            rel = float(np.linalg.norm(engine - oracle)
                        / max(np.linalg.norm(oracle), 1e-9))
            worst[order] = max(worst[order], rel)
    return worst


def _random_case(rng, kind: int, partial_cap: int, traj_cols: int = 4):
    def rand_path(dim, scale=0.6, cols=4):
        return PolynomialPath(rng.standard_normal((dim, cols)) * scale)

    if kind == 0:
        objective = quadratic_tracking(rand_path(2), max_partial_order=partial_cap)
        trajectory = rand_path(2, 0.5, traj_cols)
    elif kind == 1:
        objective = switching_blend(rand_path(2), rand_path(2),
                                    center=float(rng.uniform(0.0, 2.0)),
                                    width=float(rng.uniform(0.8, 2.0)),
                                    max_partial_order=partial_cap)
        trajectory = rand_path(2, 0.5, traj_cols)
    else:
        objective = barrier_sum(rand_path(2, 0.3), rand_path(2, 0.3),
                                max_sq_distance=30.0,
                                gain=float(rng.uniform(1e-4, 1e-1)),
                                max_partial_order=partial_cap)
        # keep the two agent components close so the evaluated squared
        # separation stays well inside the barrier domain
        base = rng.standard_normal((2, traj_cols)) * 0.4
        delta = rng.standard_normal((2, traj_cols)) * (0.4 / traj_cols)
        trajectory = PolynomialPath(np.vstack([base, base + delta]))
    return objective, trajectory


# -- design-gains --------------------------------------------------------------

def cmd_design_gains(args) -> int:
    try:
        poles = [complex(tok.strip().replace("i", "j"))
                 for tok in args.poles.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse poles {args.poles!r}")
    if args.k is not None and args.k != len(poles):
        raise ConfigError(f"-k {args.k} does not match {len(poles)} poles")
    profile = design_gains(poles, m=args.m)  # GainError -> exit 1 via main()
    doc = {
        "order": profile.order,
        "output_dim": profile.output_dim,
        "coefficients": profile.coefficients.tolist(),
        "poles": [[p.real, p.imag] for p in profile.poles],
        "spectral_abscissa": profile.spectral_abscissa,
        "bound_c": profile.bound_c,
        "bound_alpha": profile.bound_alpha,
    }
    print(json.dumps(doc, indent=2))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
