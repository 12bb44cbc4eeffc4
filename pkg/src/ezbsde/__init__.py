"""Constrained Epstein-Zin consumption-investment via a quadratic BSDE.

Typical use::

    from ezbsde import *
    model = make_black_scholes(0.03, 0.05, 0.17)
    ctx = GeneratorContext(model, Preferences(0.08, 2.0, 1.2), Interval(0, 0.5), T=30.0)
    grid = TimeGrid(30.0, 100)
    sol = solve_bsde(ctx, grid, simulate_state(model, grid, 10_000, seed=1))
"""

import os as _os

# BLAS reads its thread count once, when numpy loads
_threads = _os.environ.get("EZBSDE_THREADS", "").strip()
if _threads.isdigit() and int(_threads) > 0:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from .preferences import ParameterDomainError, Preferences, aggregator_f, bequest_utility, theta_of
from .markets import (Coefficients, MarketBounds, MarketModel, make_black_scholes, make_heston,
                      make_linear_diffusion, market_bounds)
from .constraints import (Box, ConstraintSet, FiniteSet, FullSpace, Interval, UnionOfIntervals,
                          parse_constraint, p_to_pi, pi_to_p, project_p)
from .paths import PathSet, TimeGrid, correlated_increment, simulate_state, simulate_wealth
from .bsde import (BasisSpec, BsdeSolution, GeneratorContext, SolverConfig, clamp_consumption,
                   generator_H, generator_H_consumption, solve_bsde, solve_ode_constant)
from .strategy import (StrategyResult, evaluate_utility, optimal_consumption, optimal_portfolio,
                       perturb_strategy, run_optimal)
from .verify import (VerificationReport, build_report, check_lfo_condition, check_prop_exp1,
                     check_prop_exp2, check_y_bounds, compute_C1_C2, laplace_condition, lyapunov_operator)

bequest_U = bequest_utility

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
