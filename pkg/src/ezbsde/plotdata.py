"""Per-figure data files assembled from solve and sweep artifacts.

``emit_plotdata(dir)`` expects this layout under ``dir`` (any subset):

==========================================  =====================================
path                                        produced by
==========================================  =====================================
fig1a/sweep.csv                             sweep constraints.pi_upper (BS)
fig1b/sweep.csv                             sweep constraints.pi_lower (BS)
fig2/{constrained,unconstrained}/           solve (BS)
fig3/{constrained,unconstrained}/           solve (linear diffusion)
fig4/{constrained,unconstrained}/           solve (BS parameters)
fig5a/sweep_profiles.csv                    sweep preferences.gamma (Heston)
fig5b/sweep_profiles.csv                    sweep preferences.psi (Heston)
fig6/sweep_profiles_x.csv                   sweep preferences.gamma (Heston)
==========================================  =====================================

Each panel becomes ``figNx.dat`` (one header line, whitespace separated)
plus ``figNx.txt`` describing the axes.
"""

from __future__ import annotations

import csv
from collections import OrderedDict
from pathlib import Path


class PlotDataError(RuntimeError):
    pass


def _read(path: Path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _write(out: Path, name: str, header, rows, xlabel: str, ylabel: str, caption: str) -> Path:
    dat = out / f"{name}.dat"
    with open(dat, "w") as fh:
        fh.write(" ".join(header) + "\n")
        for row in rows:
            fh.write(" ".join(str(v) for v in row) + "\n")
    cols = ", ".join(f"'{name}.dat' using 1:{j + 2} with lines title '{h}'" for j, h in enumerate(header[1:]))
    (out / f"{name}.txt").write_text(
        f"{caption}\n"
        f"x axis: {xlabel}\n"
        f"y axis: {ylabel}\n"
        f"columns: {' '.join(header)}\n"
        f"gnuplot: set xlabel '{xlabel}'; set ylabel '{ylabel}'; plot {cols}\n"
    )
    return dat


def _label(v: str) -> str:
    return format(float(v), "g")


def _pair(base: Path, fname: str, key: str, axis: str):
    con = _read(base / "constrained" / fname)
    unc = _read(base / "unconstrained" / fname)
    if len(con) != len(unc):
        raise PlotDataError(f"{base}: constrained and unconstrained runs have different grids")
    return [(c[axis], c[key], u[key]) for c, u in zip(con, unc)]


def _wide(rows: list, axis: str, key: str):
    """Pivot long sweep rows to one column per sweep value."""
    groups = OrderedDict()
    for r in rows:
        groups.setdefault(r["value"], []).append(r)
    series = list(groups.values())
    n = len(series[0])
    if any(len(s) != n for s in series):
        raise PlotDataError("sweep profiles have different lengths")
    out = []
    for j in range(n):
        out.append([series[0][j][axis]] + [s[j][key] for s in series])
    return list(groups.keys()), out


def emit_plotdata(directory, out=None):
    """Write every panel whose inputs exist; return ``(written, missing_panels)``."""
    root = Path(directory)
    if not root.is_dir():
        raise PlotDataError(f"artifact directory not found: {root}")
    out = root / "plotdata" if out is None else Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written, missing = [], []

    def attempt(names, fn):
        try:
            written.extend(fn())
        except FileNotFoundError:
            missing.extend(names)

    def fig1(panel, bound):
        rows = _read(root / panel / "sweep.csv")
        return [_write(out, panel, ["Pi", "pi_star"], [(r["value"], r["pi_star_0"]) for r in rows],
                       "Pi", "pi*", f"Optimal portfolio at t=0 against the constraint {bound}")]

    attempt(["fig1a"], lambda: fig1("fig1a", "pi in [0, Pi]"))
    attempt(["fig1b"], lambda: fig1("fig1b", "pi in [Pi, 1]"))

    def vs_time(fig):
        base = root / fig
        a = _pair(base, "strategy.csv", "pi_star", "t")
        b = _pair(base, "strategy.csv", "c_hat_star", "t")
        return [
            _write(out, f"{fig}a", ["t", "pi_constrained", "pi_unconstrained"], a, "t", "pi*",
                   "Optimal portfolio at the initial state, with and without the constraint"),
            _write(out, f"{fig}b", ["t", "c_hat_constrained", "c_hat_unconstrained"], b, "t", "c_hat*",
                   "Optimal consumption-wealth ratio at the initial state, with and without the constraint"),
        ]

    attempt(["fig2a", "fig2b"], lambda: vs_time("fig2"))
    attempt(["fig3a", "fig3b"], lambda: vs_time("fig3"))

    def fig4():
        base = root / "fig4"
        a = _pair(base, "strategy_x.csv", "pi_star", "x")
        b = _pair(base, "strategy_x.csv", "c_hat_star", "x")
        return [
            _write(out, "fig4a", ["x", "pi_constrained", "pi_unconstrained"], a, "x", "pi*",
                   "Optimal portfolio against the state, with and without the constraint"),
            _write(out, "fig4b", ["x", "c_hat_constrained", "c_hat_unconstrained"], b, "x", "c_hat*",
                   "Optimal consumption-wealth ratio against the state"),
        ]

    attempt(["fig4a", "fig4b"], fig4)

    def sweep_panel(panel, src, fname, axis, key, prefix, ylabel):
        rows = _read(root / src / fname)
        if not rows:
            raise PlotDataError(f"{src}/{fname} is empty")
        vals, table = _wide(rows, axis, key)
        header = [axis] + [f"{prefix}{_label(v)}" for v in vals]
        return _write(out, panel, header, table, axis, ylabel, f"{ylabel} for {rows[0]['param']} in "
                      + ", ".join(_label(v) for v in vals))

    attempt(["fig5a"], lambda: [sweep_panel("fig5a", "fig5a", "sweep_profiles.csv", "t", "pi_star",
                                            "pi_gamma", "pi*")])
    attempt(["fig5b"], lambda: [sweep_panel("fig5b", "fig5b", "sweep_profiles.csv", "t", "c_hat_star",
                                            "c_hat_psi", "c_hat*")])
    attempt(["fig6a", "fig6b"], lambda: [
        sweep_panel("fig6a", "fig6", "sweep_profiles_x.csv", "x", "pi_star", "pi_gamma", "pi*"),
        sweep_panel("fig6b", "fig6", "sweep_profiles_x.csv", "x", "c_hat_star", "c_hat_gamma", "c_hat*"),
    ])
    if not written:
        raise PlotDataError(f"no solve or sweep artifacts found under {root}")
    return written, missing
