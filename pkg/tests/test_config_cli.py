import json
from pathlib import Path

import pytest

from ezbsde.cli import EXIT_BOUNDS, EXIT_ERROR, EXIT_OK, main, parse_values
from ezbsde.config import ConfigError, load_config, parse_config
from ezbsde.constraints import FullSpace, Interval
from ezbsde.plotdata import PlotDataError, emit_plotdata

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

BS = """
[model]
kind = black_scholes
r = 0.03
mu = 0.05
sigma = 0.17

[preferences]
delta = 0.08
gamma = 2
psi = 1.2

[constraints]
pi = interval 0 0.5

[grid]
N = 10

[mc]
M = 50
seed = 3
"""


def test_defaults_fill_in():
    cfg = parse_config(BS)
    assert cfg.kind == "black_scholes" and cfg.T == 30.0 and cfg.N == 10 and cfg.M == 50
    assert isinstance(cfg.pi_set, Interval) and cfg.c_set is None
    assert cfg.degree == 3 and cfg.omega == 1.0


@pytest.mark.parametrize("name,kind,T", [("bs", "black_scholes", 30.0), ("heston", "heston", 10.0),
                                         ("linear", "linear_diffusion", 12.0)])
def test_shipped_configs_load(name, kind, T):
    cfg = load_config(CONFIGS / f"{name}.ini")
    assert cfg.kind == kind and cfg.T == T and cfg.M == 100_000 and cfg.seed == 42
    cfg.context()


@pytest.mark.parametrize("edit,key", [
    (("gamma = 2", "gamma = 0.5"), "preferences.gamma"),
    (("psi = 1.2", "psi = 1"), "preferences.psi"),
    (("sigma = 0.17", "sigma = abc"), "model.sigma"),
    (("N = 10", "N = 2.5"), "grid.N"),
    (("M = 50", "M = 1"), "mc.M"),
    (("pi = interval 0 0.5", "pi = interval 1 0"), "constraints.pi"),
    (("seed = 3", "seed = -1"), "mc.seed"),
    (("r = 0.03\n", ""), "model.r"),
    (("[mc]", "[mc]\nwarp = 9"), "mc.warp"),
    (("kind = black_scholes", "kind = vasicek"), "model.kind"),
])
def test_errors_name_the_key(edit, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        parse_config(BS.replace(*edit))


def test_parse_error_reports_line():
    with pytest.raises(ConfigError, match="line 3"):
        parse_config("[model]\nkind = heston\nthis is not ini\n")
    with pytest.raises(ConfigError, match="line 1"):
        parse_config("kind = heston\n")


def test_unknown_section():
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config(BS + "\n[plots]\nx = 1\n")


def test_consumption_constraint_validated():
    with pytest.raises(ConfigError, match="constraints.c_hat"):
        parse_config(BS.replace("[grid]", "c_hat = interval -0.1 0.2\n[grid]"))


def test_with_value():
    cfg = parse_config(BS)
    assert cfg.with_value("constraints.pi_upper", 0.3).pi_set.hi == 0.3
    assert cfg.with_value("constraints.pi_lower", 0.2).pi_set.lo == 0.2
    assert cfg.with_value("preferences.psi", 2.0).prefs.psi == 2.0
    with pytest.raises(ConfigError):
        cfg.with_value("preferences.gamma", 0.5)
    with pytest.raises(ConfigError):
        cfg.with_value("constraints.pi_lower", 0.9)
    with pytest.raises(ConfigError):
        cfg.with_value("model.r", 0.1)
    full = cfg.replace(pi_set=FullSpace())
    assert full.with_value("constraints.pi_upper", 0.4).pi_set.lo == 0.0


def test_parse_values():
    assert parse_values("1.2, 1.5,2") == [1.2, 1.5, 2.0]
    with pytest.raises(ConfigError):
        parse_values("a,b")
    with pytest.raises(ConfigError):
        parse_values(" , ")


# -- command line ----------------------------------------------------------------

@pytest.fixture
def bs_file(tmp_path):
    f = tmp_path / "bs.ini"
    f.write_text(BS)
    return f


def test_solve_writes_artifacts(bs_file, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["solve", str(bs_file), "--out", str(out)]) == EXIT_OK
    names = sorted(p.name for p in out.iterdir())
    assert names == ["solution.csv", "strategy.csv", "strategy_x.csv", "summary.json", "verify.json"]
    summary = json.loads((out / "summary.json").read_text())
    assert summary["pi_star_0"] == 0.5 and summary["M"] == 50
    header = (out / "solution.csv").read_text().splitlines()[0]
    assert header == "step,t,Y0_at_x0,Z0_at_x0,R2_Y,R2_Z,trunc_hits"
    assert "Y0 =" in capsys.readouterr().out


def test_solve_is_byte_identical(bs_file, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["solve", str(bs_file), "--out", str(a)]) == EXIT_OK
    assert main(["solve", str(bs_file), "--out", str(b)]) == EXIT_OK
    for f in a.iterdir():
        assert f.read_bytes() == (b / f.name).read_bytes(), f.name


def test_overrides_apply(bs_file, tmp_path):
    out = tmp_path / "o"
    assert main(["solve", str(bs_file), "--out", str(out), "--steps", "6", "--paths", "7", "--seed", "1"]) == 0
    s = json.loads((out / "summary.json").read_text())
    assert (s["N"], s["M"], s["seed"]) == (6, 7, 1)
    assert len((out / "strategy.csv").read_text().splitlines()) == 1 + 6
    assert main(["solve", str(bs_file), "--out", str(out), "--paths", "1"]) == EXIT_ERROR


def test_bound_violation_exit_code(bs_file, tmp_path, monkeypatch):
    import ezbsde.cli as cli
    from ezbsde.verify import YBoundCheck

    real = cli.build_report

    def failing(ctx, solution=None, **kw):
        rep = real(ctx, solution=solution, **kw)
        if solution is not None:
            rep.y_bounds = YBoundCheck(False, rep.y_upper, 1.0, False, None, solution.Y.size)
        return rep

    monkeypatch.setattr(cli, "build_report", failing)
    assert main(["solve", str(bs_file), "--out", str(tmp_path / "v")]) == EXIT_BOUNDS


def test_errors_exit_one(tmp_path, capsys):
    assert main(["solve", str(tmp_path / "missing.ini")]) == EXIT_ERROR
    bad = tmp_path / "bad.ini"
    bad.write_text(BS.replace("gamma = 2", "gamma = 1"))
    assert main(["verify", str(bad)]) == EXIT_ERROR
    assert "preferences.gamma" in capsys.readouterr().err


def test_verify_command(tmp_path, capsys):
    out = tmp_path / "ver"
    assert main(["verify", str(CONFIGS / "linear.ini"), "--out", str(out)]) == EXIT_OK
    rep = json.loads((out / "verify.json").read_text())
    assert rep["lfo_condition"]["holds"] is False
    assert rep["prop_conditions"][2]["holds"] is False
    assert "[FAIL]" in capsys.readouterr().out


def test_sweep_and_plotdata(bs_file, tmp_path):
    root = tmp_path / "figs"
    assert main(["sweep", str(bs_file), "--param", "constraints.pi_upper", "--values", "0.2,1.0,1.5",
                 "--out", str(root / "fig1a")]) == EXIT_OK
    for sub in ("constrained", "unconstrained"):
        args = ["solve", str(bs_file), "--out", str(root / "fig2" / sub)]
        if sub == "unconstrained":
            full = tmp_path / "full.ini"
            full.write_text(BS.replace("pi = interval 0 0.5", "pi = full"))
            args[1] = str(full)
        assert main(args) == EXIT_OK
    written, missing = emit_plotdata(root)
    names = sorted(p.name for p in written)
    assert names == ["fig1a.dat", "fig2a.dat", "fig2b.dat"]
    assert "fig5a" in missing
    rows = (root / "plotdata" / "fig1a.dat").read_text().splitlines()
    assert rows[0] == "Pi pi_star" and len(rows) == 4
    pis = [float(r.split()[1]) for r in rows[1:]]
    assert pis[0] == pytest.approx(0.2) and pis[1] == pytest.approx(pis[2])
    assert (root / "plotdata" / "fig2a.txt").read_text().startswith("Optimal portfolio")
    assert main(["plotdata", str(root)]) == EXIT_ERROR  # some panels missing


def test_plotdata_empty_dir(tmp_path):
    with pytest.raises(PlotDataError):
        emit_plotdata(tmp_path)
    assert main(["plotdata", str(tmp_path / "nope")]) == EXIT_ERROR


def test_thread_env_var_reaches_blas(tmp_path):
    import os
    import subprocess
    import sys

    env = {k: v for k, v in os.environ.items() if not k.endswith("_NUM_THREADS")}
    env["EZBSDE_THREADS"] = "3"
    code = "import os, ezbsde; print(os.environ['OPENBLAS_NUM_THREADS'], os.environ['OMP_NUM_THREADS'])"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True).stdout
    assert out.split() == ["3", "3"]
    env["OMP_NUM_THREADS"] = "1"  # an explicit setting wins
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True).stdout
    assert out.split() == ["3", "1"]
