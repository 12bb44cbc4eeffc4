"""Black-Scholes walkthrough: the BSDE reduces to an ODE and the optimal
portfolio is the (clipped) Merton ratio.

Run with ``python3 demos/merton_walkthrough.py``. Takes a few seconds.
"""

import numpy as np

from ezbsde import (FullSpace, GeneratorContext, Interval, Preferences, TimeGrid, build_report, make_black_scholes,
                    perturb_strategy, run_optimal, simulate_state, solve_bsde, solve_ode_constant)
from ezbsde.strategy import CANNED_PERTURBATIONS, score_strategy, time_profile

model = make_black_scholes(r=0.03, mu=0.05, sigma=0.17)
prefs = Preferences(delta=0.08, gamma=2.0, psi=1.2)
T = 30.0
merton = 0.05 / (prefs.gamma * 0.17**2)
print(f"Merton ratio mu / (gamma sigma^2) = {merton:.6f}")

grid = TimeGrid(T, 100)
paths = simulate_state(model, grid, 10_000, seed=42)

for label, A in [("unconstrained", FullSpace()), ("pi in [0, 0.5]", Interval(0.0, 0.5))]:
    ctx = GeneratorContext(model, prefs, A, T)
    # with constant coefficients Y is deterministic: compare against the ODE
    ode = solve_ode_constant(ctx)
    sol = solve_bsde(ctx, grid, paths)
    prof = time_profile(ctx, sol)
    print(f"\n{label}")
    print(f"  Y0: Monte-Carlo {sol.Y0:.7f}  ODE {ode.Y0:.7f}  gap {abs(sol.Y0 - ode.Y0):.1e}")
    print(f"  pi*(t) in [{prof.pi.min():.6f}, {prof.pi.max():.6f}]")
    print(f"  c_hat*: {prof.c_hat[0]:.4f} at t=0, {prof.c_hat[-1]:.4f} just before T")

    # simulated utility of the optimal controls vs the closed form W^(1-gamma)/(1-gamma) e^Y0
    res = run_optimal(ctx, grid, paths, sol)
    z = (res.V0_simulated - res.V0_closed_form) / res.stderr
    print(f"  V0: simulated {res.V0_simulated:.5f} +/- {res.stderr:.5f}, closed form {res.V0_closed_form:.5f} "
          f"({z:+.2f} se)")

    # nearby admissible strategies should not beat the optimum
    scores = []
    for mode, eps in CANNED_PERTURBATIONS:
        est, *_ = score_strategy(ctx, grid, paths, perturb_strategy(res, eps, mode, ctx))
        scores.append((est.V0, f"{mode}{eps:+g}"))
    best, name = max(scores)
    print(f"  best perturbation {name}: {best:.5f} ({(best - res.V0_simulated) / res.stderr:+.2f} se vs optimum)")

rep = build_report(GeneratorContext(model, prefs, Interval(0.0, 0.5), T))
print(f"\nY is bounded above by C1 T = {rep.y_upper:.4f}")
print(rep.table())
