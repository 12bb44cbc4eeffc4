import numpy as np
import pytest

from ezbsde import (GeneratorContext, Interval, FullSpace, Preferences, TimeGrid, make_black_scholes,
                    make_heston, make_linear_diffusion, simulate_state, solve_bsde)

# acceptance lines collected during the run, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


PREFS = Preferences(delta=0.08, gamma=2.0, psi=1.2)


def bs_model():
    return make_black_scholes(0.03, 0.05, 0.17)


def heston_model():
    return make_heston(5.0, 0.0225, 0.25, 0.05, 0.0, 1.0, 0.47, -0.5)


def linear_model(r1=1.0):
    return make_linear_diffusion(0.0226, 0.0189, 0.0436, 0.0014, r1, 0.05, 1.0, -0.935, x0=0.0)


LINEAR_PREFS = Preferences(delta=0.0052, gamma=2.0, psi=1.2)

# (model factory, preferences, horizon, constrained set)
MODELS = {
    "bs": (bs_model, PREFS, 30.0, Interval(0.0, 0.5)),
    "heston": (heston_model, PREFS, 10.0, Interval(0.0, 0.1)),
    "linear": (linear_model, LINEAR_PREFS, 12.0, Interval(0.0, 0.5)),
}


def context(name, constrained=True, **kw):
    make, prefs, T, A = MODELS[name]
    return GeneratorContext(make(), kw.pop("prefs", prefs), A if constrained else FullSpace(), T, **kw)


_CACHE = {}


def solved(name, constrained=True, M=50_000, N=50, seed=42):
    """Cached (ctx, grid, paths, solution) for the reference models."""
    key = (name, constrained, M, N, seed)
    if key not in _CACHE:
        ctx = context(name, constrained)
        grid = TimeGrid(ctx.T, N)
        paths = simulate_state(ctx.model, grid, M, seed)
        _CACHE[key] = (ctx, grid, paths, solve_bsde(ctx, grid, paths))
    return _CACHE[key]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
