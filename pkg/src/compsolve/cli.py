"""Command-line front end.

    compsolve COMMAND --input CONFIG.json --out DIR [--seed N] [--set key=value ...]

Exit codes: 0 converged / PASS, 2 FAIL, non-contractive or any other solver
failure, 3 configuration or I/O error. Standard output carries exactly one
line of JSON summarizing the run.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .certify import Contraction, certify
from .operators import OutOfDomain, SingularJacobian, SurrogateSolveFailed
from .registry import (ConfigError, build_elliptic, build_fixed_point, build_ns, build_operator,
                       sampler_config, solver_config)
from .solve import (Outcome, SolveConfig, TargetOutsideRadius, solve_comparison, solve_fixed_point,
                    solve_patched)

COMMANDS = ("certify", "solve", "fixed-point", "elliptic", "ns-steady", "ns-evolve", "sweep")
EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 2, 3


@dataclass
class RunConfig:
    command: str
    input_path: Path
    output_dir: Path
    seed: int | None = None
    overrides: list[str] = field(default_factory=list)


class _Done(Exception):
    """Carries an exit code and summary out of a pipeline."""

    def __init__(self, code: int, summary: dict):
        super().__init__(summary.get("error", ""))
        self.code, self.summary = code, summary


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj) if np.isfinite(obj) else None
    return obj


def _dump(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


# -- config loading ------------------------------------------------------------

def apply_override(config: dict, item: str) -> None:
    """Set a dotted key, e.g. ``solver.tol=1e-12``; values are parsed as JSON when possible."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = key.strip().split(".")
    if not all(parts):
        raise ConfigError(f"override key {key!r} is malformed")
    node = config
    for p in parts[:-1]:
        nxt = node.setdefault(p, {})
        if not isinstance(nxt, dict):
            raise ConfigError(f"override {key!r}: {p!r} is not a section")
        node = nxt
    node[parts[-1]] = value


def load_config(rc: RunConfig) -> dict:
    try:
        text = Path(rc.input_path).read_text()
    except OSError as exc:
        raise _Done(EXIT_CONFIG, {"error": "IOError", "message": str(exc)}) from exc
    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        raise _Done(EXIT_CONFIG, {"error": "ConfigParse", "message": exc.msg,
                                  "line": exc.lineno, "column": exc.colno}) from exc
    if not isinstance(config, dict):
        raise _Done(EXIT_CONFIG, {"error": "ConfigParse", "message": "top level must be an object",
                                  "line": 1, "column": 1})
    for item in rc.overrides:
        apply_override(config, item)
    declared = config.get("type")
    if declared is not None and declared != rc.command and not (
            rc.command in ("certify", "solve") and declared == "operator"):
        raise ConfigError(f"config declares type {declared!r} but command is {rc.command!r}")
    return config


def _seed(rc: RunConfig, config: dict) -> int:
    if rc.seed is not None:
        return int(rc.seed)
    try:
        return int(config.get("seed", 0))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"seed must be an integer, got {config.get('seed')!r}") from exc


def _write(out: Path, name: str, text: str) -> None:
    (out / name).write_text(text)


def _trace_code(trace) -> int:
    return EXIT_OK if trace.outcome is Outcome.CONVERGED else EXIT_FAIL


def _solution_csv(grid, values) -> str:
    cols = ["x", "y"][: grid.dim]
    lines = [",".join(cols + ["value"])]
    for pt, v in zip(grid.nodes, values):
        lines.append(",".join(repr(float(c)) for c in pt) + "," + repr(float(v)))
    return "\n".join(lines) + "\n"


def _modes_csv(modes, coeffs) -> str:
    lines = ["i,j,coefficient"]
    lines += [f"{i},{j},{float(c)!r}" for (i, j), c in zip(modes, coeffs)]
    return "\n".join(lines) + "\n"


def _target(spec: dict, dim: int) -> np.ndarray:
    y = np.atleast_1d(np.asarray(spec.get("target", 0.0), dtype=float))
    if y.size == 1 and dim > 1:
        y = np.full(dim, float(y[0]))
    if y.shape != (dim,):
        raise ConfigError(f"target must have length {dim}")
    return y


# -- pipelines -----------------------------------------------------------------

def run_certify(config: dict, seed: int, out: Path) -> tuple[int, dict]:
    if config.get("type") == "elliptic":
        d = build_elliptic(config, seed)[0]
    else:
        d = build_operator(config.get("operator", {})).decomposition
    report = certify(d, sampler_config(config.get("sampler"), seed))
    _write(out, "report.json", report.to_json())
    code = EXIT_OK if report.verdict == "PASS" else EXIT_FAIL
    return code, {"verdict": report.verdict, "sigma": report.sigma, "m0": report.m0,
                  "k": report.k_comparison, "k1": report.k1_local, "delta0": report.delta0,
                  "r1": report.r1_radius}


def _run_solve(d, y, x0, scfg: SolveConfig, solver: dict, factory):
    if solver.get("patched"):
        if factory is None:
            raise ConfigError("patched solves need surrogate 'frozen-jacobian'")
        return solve_patched(d.f, factory, y, x0, scfg, solver.get("reanchor_radius"),
                             int(solver.get("patch_iter", 25)))
    return solve_comparison(d, y, x0, scfg)


def run_solve(config: dict, seed: int, out: Path) -> tuple[int, dict]:
    prob = build_operator(config.get("operator", {}))
    d = prob.decomposition
    dim = d.domain.dim
    y = _target(config, dim)
    x0 = np.atleast_1d(np.asarray(config.get("x_start", d.f.center), dtype=float))
    if x0.shape != (dim,):
        raise ConfigError(f"x_start must have length {dim}")
    solver = dict(config.get("solver", {}))
    scfg = solver_config(solver)
    summary = {}
    if config.get("certify"):
        report = certify(d, sampler_config(config.get("sampler"), seed))
        _write(out, "report.json", report.to_json())
        summary["verdict"] = report.verdict
        if report.sigma is not None and scfg.sigma_hint is None:
            scfg = SolveConfig(scfg.tol, scfg.max_iter, scfg.radius_guard, report.sigma,
                               report.m0, scfg.divergence_windows)
    try:
        trace = _run_solve(d, y, x0, scfg, solver, prob.factory)
    except TargetOutsideRadius as exc:
        return EXIT_FAIL, {**summary, "outcome": "TargetOutsideRadius", "error": "TargetOutsideRadius",
                           "message": str(exc)}
    _write(out, "trace.csv", trace.to_csv())
    summary.update(trace.summary())
    if dim <= 8:
        summary["x"] = trace.x
    return _trace_code(trace), summary


def run_fixed_point(config: dict, seed: int, out: Path) -> tuple[int, dict]:
    f1 = build_fixed_point(config.get("map", {}))
    dim = f1.domain.dim
    y = _target(config, dim)
    x0 = np.atleast_1d(np.asarray(config.get("x_start", f1.center), dtype=float))
    trace = solve_fixed_point(f1, y, x0, solver_config(config.get("solver")))
    _write(out, "trace.csv", trace.to_csv())
    summary = trace.summary()
    if dim <= 8:
        summary["x"] = trace.x
    return _trace_code(trace), summary


def run_elliptic(config: dict, seed: int, out: Path) -> tuple[int, dict]:
    from .pde.elliptic import solve_elliptic

    d, grid, h, exact = build_elliptic(config, seed)
    summary = {"n": grid.n, "dim": grid.dim}
    report = None
    if config.get("certify"):
        report = certify(d, sampler_config(config.get("sampler"), seed))
        _write(out, "report.json", report.to_json())
        summary["verdict"] = report.verdict
        if report.verdict != "PASS":
            return EXIT_FAIL, {**summary, "outcome": "Refused",
                               "message": f"certificate verdict {report.verdict}"}
    trace = solve_elliptic(d, h, solver_config(config.get("solver")), report=report)
    _write(out, "trace.csv", trace.to_csv())
    _write(out, "solution.csv", _solution_csv(grid, trace.x))
    summary.update(trace.summary())
    summary["max_abs_residual"] = float(np.max(np.abs(d.f.fn(trace.x) - h)))
    if exact is not None:
        summary["max_abs_error"] = float(np.max(np.abs(trace.x - exact)))
    return _trace_code(trace), summary


def _ns_conditions(config, cfg, d, seed, out, extra=None) -> tuple[dict, bool]:
    from .pde.navier_stokes import verify_ns_conditions

    samples = int(config.get("samples", 100))
    rep = verify_ns_conditions(cfg, samples=samples, seed=seed, model=d.model,
                               monotone_route=bool(config.get("monotone_route", False)))
    # the lower stability item is reported but does not gate the run, see README
    gating = ("phi_sup", "cond11", "energy")
    ok = all(rep.items[k].passed for k in gating)
    body = {"conditions": rep.to_dict(), "gating": list(gating), "passed": ok, "seed": seed,
            "samples": samples}
    if extra:
        body.update(extra)
    _write(out, "report.json", _dump(body))
    return rep.to_dict(), ok


def run_ns_steady(config: dict, seed: int, out: Path) -> tuple[int, dict]:
    from .pde.navier_stokes import solve_ns_steady

    cfg, d, h = build_ns(config)
    _, ok = _ns_conditions(config, cfg, d, seed, out)
    summary = {"modes": cfg.basis.size, "conditions_passed": ok}
    if not ok:
        return EXIT_FAIL, {**summary, "outcome": "Refused", "message": "structural conditions failed"}
    trace = solve_ns_steady(d, h, solver_config(config.get("solver")))
    _write(out, "trace.csv", trace.to_csv())
    _write(out, "solution.csv", _modes_csv(cfg.basis.modes, trace.x))
    summary.update(trace.summary())
    return _trace_code(trace), summary


def run_ns_evolve(config: dict, seed: int, out: Path) -> tuple[int, dict]:
    from .pde.navier_stokes import evolve_ns

    cfg, d, h = build_ns(config)
    T, dt = float(config.get("T", 10.0)), float(config.get("dt", 0.05))
    if not dt > 0 or not T > 0 or T / dt > 10_000:
        raise ConfigError("need T > 0, dt > 0 and T/dt <= 1e4")
    _, ok = _ns_conditions(config, cfg, d, seed, out)
    summary = {"modes": cfg.basis.size, "conditions_passed": ok}
    if not ok:
        return EXIT_FAIL, {**summary, "outcome": "Refused", "message": "structural conditions failed"}
    ev = evolve_ns(d, h, T, dt, solver_config(config.get("solver")))
    lines = ["step,t,iterations,residual,energy_slack,norm_L2"]
    for n, (t, c, tr, s) in enumerate(zip(ev.times[1:], ev.states[1:], ev.traces, ev.energy_slack), 1):
        lines.append(f"{n},{t!r},{tr.iterations},{float(tr.residual)!r},{s!r},{d.model.norm_L2(c)!r}")
    _write(out, "evolution.csv", "\n".join(lines) + "\n")
    _write(out, "solution.csv", _modes_csv(cfg.basis.modes, ev.states[-1]))
    summary.update({"status": ev.status, "steps": len(ev.traces), "energy_ok": ev.energy_ok,
                    "min_energy_slack": min(ev.energy_slack, default=0.0),
                    "outcome": "Converged" if ev.status == "Completed" else "StepRejected"})
    code = EXIT_OK if ev.status == "Completed" and ev.energy_ok else EXIT_FAIL
    return code, summary


def sweep_rows(config: dict, seed: int) -> list[dict]:
    """One row per (radius, target norm): certify on the ball, then a guarded solve."""
    op = config.get("operator", {})
    radii = [float(r) for r in config.get("radii", [1.0, 2.0, 4.0])]
    if "target_fractions" in config:
        targets = lambda r: [float(t) * r for t in config["target_fractions"]]
    else:
        targets = lambda r: [float(t) for t in config.get("ynorms", [0.5])]
    solver = dict(config.get("solver", {}))
    solver.setdefault("radius_guard", True)
    base = solver_config(solver)
    rng = np.random.default_rng([seed, 31])
    rows = []
    for r in radii:
        prob = build_operator(op, radius=r)
        d = prob.decomposition
        report = certify(d, sampler_config(config.get("sampler"), seed))
        sigma, m0 = report.sigma, report.m0
        direction = rng.standard_normal(d.domain.dim)
        direction /= d.codomain.norm(direction)
        fx0 = d.f(d.f.center)
        for t in targets(r):
            row = {"r": r, "ynorm": t, "sigma": sigma, "delta0": report.delta0}
            if not isinstance(report.contraction, Contraction):
                row["outcome"] = Outcome.NON_CONTRACTIVE.value
                rows.append(row)
                continue
            scfg = SolveConfig(base.tol, base.max_iter, base.radius_guard, sigma, m0,
                               base.divergence_windows)
            try:
                trace = solve_comparison(d, fx0 + t * direction, d.f.center, scfg)
                row["outcome"] = trace.outcome.value
            except TargetOutsideRadius:
                row["outcome"] = "OutsideRadius"
            rows.append(row)
    return rows


def run_sweep(config: dict, seed: int, out: Path) -> tuple[int, dict]:
    rows = sweep_rows(config, seed)
    lines = ["r,ynorm,sigma,delta0,outcome"]
    for row in rows:
        sigma = "" if row["sigma"] is None else repr(float(row["sigma"]))
        lines.append(f"{row['r']!r},{row['ynorm']!r},{sigma},{float(row['delta0'])!r},{row['outcome']}")
    _write(out, "sweep.csv", "\n".join(lines) + "\n")
    counts: dict[str, int] = {}
    for row in rows:
        counts[row["outcome"]] = counts.get(row["outcome"], 0) + 1
    bad = set(counts) - {"Converged", "OutsideRadius"}
    code = EXIT_FAIL if bad or "Converged" not in counts else EXIT_OK
    return code, {"rows": len(rows), "outcomes": dict(sorted(counts.items())),
                  "outcome": "NonContractive" if counts.get("NonContractive") == len(rows)
                  else ("Converged" if code == EXIT_OK else "Mixed")}


PIPELINES = {
    "certify": run_certify, "solve": run_solve, "fixed-point": run_fixed_point,
    "elliptic": run_elliptic, "ns-steady": run_ns_steady, "ns-evolve": run_ns_evolve,
    "sweep": run_sweep,
}


def run(rc: RunConfig) -> tuple[int, dict]:
    """Execute one pipeline; returns (exit code, summary). Never raises."""
    from .pde.elliptic import CoefficientEnvelopeViolated
    from .pde.navier_stokes import QuadratureUnderResolved

    summary: dict = {"command": rc.command}
    try:
        if rc.command not in PIPELINES:
            raise ConfigError(f"unknown command {rc.command!r}")
        config = load_config(rc)
        seed = _seed(rc, config)
        summary["seed"] = seed
        out = Path(rc.output_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise _Done(EXIT_CONFIG, {"error": "IOError", "message": str(exc)}) from exc
        code, body = PIPELINES[rc.command](config, seed, out)
        summary.update(body)
    except _Done as done:
        code = done.code
        summary.update(done.summary)
    except ConfigError as exc:
        code = EXIT_CONFIG
        summary.update({"error": "ConfigError", "message": str(exc)})
    except CoefficientEnvelopeViolated as exc:
        code = EXIT_FAIL
        summary.update({"error": "CoefficientEnvelopeViolated", "outcome": "CoefficientEnvelopeViolated",
                        "message": str(exc), "witness": exc.witness})
    except OSError as exc:
        code = EXIT_CONFIG
        summary.update({"error": "IOError", "message": str(exc)})
    except (QuadratureUnderResolved, OutOfDomain, SurrogateSolveFailed, SingularJacobian) as exc:
        code = EXIT_FAIL
        summary.update({"error": type(exc).__name__, "message": str(exc)})
    except Exception as exc:  # noqa: BLE001 - every path must end in a documented exit code
        code = EXIT_FAIL
        summary.update({"error": type(exc).__name__, "message": str(exc)})
    summary["exit_code"] = code
    return code, summary


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="compsolve", description=__doc__.split("\n\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--input", required=True, type=Path, help="JSON problem/config file")
    ap.add_argument("--out", default=Path("out"), type=Path, help="output directory")
    ap.add_argument("--seed", type=int, default=None, help="sampler seed (overrides the config)")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                    help="dotted-key override, value parsed as JSON; repeatable")
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        # argparse already printed usage on stderr
        code = EXIT_OK if exc.code == 0 else EXIT_CONFIG
        if code:
            print(json.dumps({"error": "UsageError", "exit_code": code}))
        return code
    code, summary = run(RunConfig(args.command, args.input, args.out, args.seed, args.overrides))
    print(json.dumps(_clean(summary), sort_keys=True))
    return code


if __name__ == "__main__":
    sys.exit(main())
