"""Regenerate the data behind every figure panel through the command line.

Each panel is produced by ``ezbsde solve`` or ``ezbsde sweep`` into the
directory layout that ``ezbsde plotdata`` understands; the last step turns
the artifacts into whitespace-separated ``.dat`` files ready for any
plotting tool.

    python3 demos/figure_pipeline.py [out_dir] [--paths M]

With the default ``--paths 5000`` the whole pipeline takes a couple of
minutes on one core; use ``--paths 100000`` for publication-grade curves.
"""

import argparse
import sys
from pathlib import Path

from ezbsde.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def variant(name, root, replace=None):
    """Copy a shipped config into ``root``, optionally editing one line."""
    text = (CONFIGS / f"{name}.ini").read_text()
    if replace:
        text = text.replace(*replace)
    path = root / "configs" / f"{name}{'_' + replace[1].split()[-1] if replace else ''}.ini"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return str(path)


def run(*argv):
    print("$ ezbsde", " ".join(argv))
    code = main(list(argv))
    if code != 0:
        sys.exit(f"command failed with exit code {code}")


def pipeline(root: Path, paths: int):
    mc = ["--paths", str(paths)]
    bs, heston, linear = (variant(n, root) for n in ("bs", "heston", "linear"))
    full = {n: variant(n, root, (line, "pi = full")) for n, line in
            [("bs", "pi = interval 0 0.5"), ("heston", "pi = interval 0 0.1"), ("linear", "pi = interval 0 0.5")]}
    unit = variant("bs", root, ("pi = interval 0 0.5", "pi = interval 0 1"))

    # portfolio bound sweeps: pi in [0, Pi] and pi in [Pi, 1]
    run("sweep", bs, "--param", "constraints.pi_upper", "--values", "0.1,0.3,0.5,0.7,0.9,1.1,1.3,1.5",
        "--out", str(root / "fig1a"), *mc)
    run("sweep", unit, "--param", "constraints.pi_lower", "--values", "0,0.2,0.4,0.6,0.8,1.0",
        "--out", str(root / "fig1b"), *mc)

    # controls over time (fig 2, 3) and over the state (fig 4), with and without the constraint
    for fig, name in (("fig2", "bs"), ("fig3", "linear"), ("fig4", "bs")):
        constrained = {"bs": bs, "linear": linear}[name]
        run("solve", constrained, "--out", str(root / fig / "constrained"), *mc)
        run("solve", full[name], "--out", str(root / fig / "unconstrained"), *mc)

    # preference sweeps in the square-root market
    run("sweep", full["heston"], "--param", "preferences.gamma", "--values", "2,5,8",
        "--out", str(root / "fig5a"), *mc)
    run("sweep", heston, "--param", "preferences.psi", "--values", "1.2,1.5,2.0", "--out", str(root / "fig5b"), *mc)
    run("sweep", full["heston"], "--param", "preferences.gamma", "--values", "2,5,8",
        "--out", str(root / "fig6"), *mc)

    run("plotdata", str(root))


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out", nargs="?", default="out/figures")
    ap.add_argument("--paths", type=int, default=5000)
    args = ap.parse_args()
    pipeline(Path(args.out), args.paths)
    print(f"\nplot data in {Path(args.out) / 'plotdata'}")
