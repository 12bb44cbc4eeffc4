"""Command line entry point: ``ezbsde solve|sweep|verify|plotdata``.

Exit codes: 0 on success, 1 on errors, 2 when ``solve`` finds a violated
bound on ``Y``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from .bsde import solve_bsde
from .config import ConfigError, ExperimentConfig, load_config
from .paths import simulate_state
from .plotdata import PlotDataError, emit_plotdata
from .strategy import run_optimal, state_profile, time_profile
from .verify import build_report

log = logging.getLogger("ezbsde")

EXIT_OK, EXIT_ERROR, EXIT_BOUNDS = 0, 1, 2


def fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "paths", None) is not None:
        changes["M"] = args.paths
    if getattr(args, "steps", None) is not None:
        changes["N"] = args.steps
    if getattr(args, "out", None) is not None:
        changes["out"] = args.out
    if changes.get("M", 2) < 2 or changes.get("N", 1) < 1 or changes.get("seed", 0) < 0:
        raise ConfigError("--paths must be >= 2, --steps >= 1 and --seed >= 0")
    return cfg.replace(**changes)


def solve_experiment(cfg: ExperimentConfig, with_utility: bool = True):
    """Run simulation, solver, strategy extraction and the verification report."""
    model = cfg.build_model()
    grid = cfg.grid()
    ctx = cfg.context(model)
    t0 = time.perf_counter()
    paths = simulate_state(model, grid, cfg.M, cfg.seed)
    sol = solve_bsde(ctx, grid, paths, cfg.solver_config())
    log.info("solved %s: M=%d N=%d in %.1fs", cfg.kind, cfg.M, cfg.N, time.perf_counter() - t0)
    result = run_optimal(ctx, grid, paths, sol, cfg.omega) if with_utility else None
    report = build_report(ctx, solution=sol)
    return dict(ctx=ctx, grid=grid, paths=paths, solution=sol, result=result, report=report)


def run_solve(cfg: ExperimentConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    run = solve_experiment(cfg)
    sol, res, rep, ctx = run["solution"], run["result"], run["report"], run["ctx"]
    write_csv(out / "solution.csv", ["step", "t", "Y0_at_x0", "Z0_at_x0", "R2_Y", "R2_Z", "trunc_hits"],
              sol.solution_rows())
    prof = time_profile(ctx, sol)
    write_csv(out / "strategy.csv", ["step", "t", "x", "pi_star", "c_hat_star"],
              zip(prof.step, prof.t, prof.x, prof.pi, prof.c_hat))
    xprof = state_profile(ctx, sol, run["paths"])
    write_csv(out / "strategy_x.csv", ["step", "t", "x", "pi_star", "c_hat_star"],
              zip(xprof.step, xprof.t, xprof.x, xprof.pi, xprof.c_hat))
    summary = {
        "Y0": res.Y0,
        "V0_closed_form": res.V0_closed_form,
        "V0_simulated": res.V0_simulated,
        "stderr": res.stderr,
        "Z0": [float(v) for v in sol.Z0],
        "pi_star_0": float(prof.pi[0]),
        "c_hat_star_0": float(prof.c_hat[0]),
        "trunc_hits": sol.trunc_hits,
        "M": cfg.M, "N": cfg.N, "T": cfg.T, "seed": cfg.seed, "model": cfg.kind,
    }
    write_json(out / "summary.json", summary)
    write_json(out / "verify.json", rep.as_dict())
    print(f"Y0 = {res.Y0:.10g}  V0 closed form = {res.V0_closed_form:.10g}  "
          f"simulated = {res.V0_simulated:.10g} +/- {res.stderr:.3g}")
    print(f"pi*(0, x0) = {prof.pi[0]:.10g}  c_hat*(0, x0) = {prof.c_hat[0]:.10g}")
    print(rep.table())
    print(f"artifacts written to {out}")
    if rep.y_bounds is not None and not rep.y_bounds.passed:
        return EXIT_BOUNDS
    return EXIT_OK


def parse_values(text: str) -> list:
    vals = [v.strip() for v in text.split(",") if v.strip()]
    if not vals:
        raise ConfigError("--values needs at least one value")
    try:
        return [float(v) for v in vals]
    except ValueError:
        raise ConfigError(f"--values must be comma-separated numbers, got {text!r}") from None


def run_sweep(cfg: ExperimentConfig, param: str, values) -> int:
    if not values:
        raise ConfigError("sweep needs at least one value")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    configs = [cfg.with_value(param, v) for v in values]
    rows, prow, xrow = [], [], []
    for v, c in zip(values, configs):
        run = solve_experiment(c, with_utility=False)
        ctx, sol = run["ctx"], run["solution"]
        prof = time_profile(ctx, sol)
        xprof = state_profile(ctx, sol, run["paths"])
        y0 = sol.Y0
        v0 = c.omega ** (1 - c.prefs.gamma) / (1 - c.prefs.gamma) * float(np.exp(y0))
        rows.append((param, v, prof.pi[0], prof.c_hat[0], y0, v0))
        prow.extend((param, v, s, t, p, ch, ps, cs) for s, t, p, ch, ps, cs in
                    zip(prof.step, prof.t, prof.pi, prof.c_hat, prof.pi_se, prof.c_se))
        xrow.extend((param, v, x, p, ch) for x, p, ch in zip(xprof.x, xprof.pi, xprof.c_hat))
        print(f"{param} = {v:g}: pi*(0) = {prof.pi[0]:.8g}  c_hat*(0) = {prof.c_hat[0]:.8g}  Y0 = {y0:.8g}")
    write_csv(out / "sweep.csv", ["param", "value", "pi_star_0", "c_hat_star_0", "Y0", "V0"], rows)
    write_csv(out / "sweep_profiles.csv",
              ["param", "value", "step", "t", "pi_star", "c_hat_star", "pi_se", "c_hat_se"], prow)
    write_csv(out / "sweep_profiles_x.csv", ["param", "value", "x", "pi_star", "c_hat_star"], xrow)
    print(f"artifacts written to {out}")
    return EXIT_OK


def run_verify(cfg: ExperimentConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rep = build_report(cfg.context())
    write_json(out / "verify.json", rep.as_dict())
    print(rep.table())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ezbsde", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def overrides(p):
        p.add_argument("--seed", type=int, help="override mc.seed")
        p.add_argument("--paths", type=int, help="override mc.M")
        p.add_argument("--steps", type=int, help="override grid.N")
        p.add_argument("--out", help="output directory (overrides run.out)")

    p = sub.add_parser("solve", help="solve the BSDE and write strategy artifacts")
    p.add_argument("config")
    overrides(p)
    p = sub.add_parser("sweep", help="solve for a list of parameter values")
    p.add_argument("config")
    p.add_argument("--param", required=True,
                   help="constraints.pi_upper, constraints.pi_lower, preferences.gamma or preferences.psi")
    p.add_argument("--values", required=True, help="comma-separated values")
    overrides(p)
    p = sub.add_parser("verify", help="evaluate bounds and parameter conditions")
    p.add_argument("config")
    overrides(p)
    p = sub.add_parser("plotdata", help="turn solve/sweep artifacts into per-figure .dat files")
    p.add_argument("dir")
    p.add_argument("--out", help="where to write the .dat files (default: <dir>/plotdata)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        warnings.simplefilter("default")
    try:
        if args.command == "plotdata":
            written, missing = emit_plotdata(args.dir, args.out)
            for f in written:
                print(f"wrote {f}")
            for m in missing:
                print(f"missing artifacts for {m}", file=sys.stderr)
            return EXIT_ERROR if missing else EXIT_OK
        cfg = _apply_overrides(load_config(args.config), args)
        if args.command == "solve":
            return run_solve(cfg)
        if args.command == "sweep":
            return run_sweep(cfg, args.param, parse_values(args.values))
        return run_verify(cfg)
    except (ConfigError, PlotDataError, ValueError, RuntimeError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
