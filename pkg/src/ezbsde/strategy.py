"""Optimal strategies from a BSDE solution, and utility of arbitrary strategies.

Utilities are evaluated in wealth-normalized form. For a proportional
consumption strategy that depends on the state only, ``V_t = W_t^{1-gamma}
v(t, X_t)``, so the backward recursion regresses on the state alone:

    v_i = E_i[R_i^{1-gamma} (v_{i+1} + dt/2 f(c_i, v_{i+1}))] + dt/2 f(c_i, v_i)

with ``R_i = W_{i+1} / W_i`` and ``c_i`` the ratio applied over step ``i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bsde import (BasisSpec, BsdeSolution, GeneratorContext, Scaler, clamp_consumption,
                   driver_parts, least_squares)
from .constraints import ConstraintSet, pi_to_p
from .paths import PathSet, TimeGrid, WealthPaths, simulate_wealth
from .preferences import ParameterDomainError, Preferences, aggregator_f


def optimal_portfolio(t: float, x, z, ctx: GeneratorContext):
    """Optimal ``(p*, pi*)`` at a batch of states given ``Z`` there.

    ``p*`` is the projection of ``sigma' Sigma^{-1} (mu + sigma rho z') / gamma``
    onto ``{sigma' pi : pi in setA}``.
    """
    xb = np.asarray(x, dtype=float).reshape(-1, ctx.model.k)
    zb = np.asarray(z, dtype=float).reshape(-1, ctx.model.k)
    parts = driver_parts(ctx, t, xb, zb)
    return parts.p_star, parts.pi_star


def optimal_consumption(y, prefs: Preferences, setC: Optional[ConstraintSet] = None,
                        y_cap: float = math.inf):
    """``delta^psi exp(-(psi/theta) y)``, clamped into ``setC`` when given."""
    return clamp_consumption(y, prefs, setC, y_cap)


@dataclass(frozen=True)
class UtilityEstimate:
    V0: float
    stderr: float
    v_paths: np.ndarray = None   # pathwise normalized utility at time 0

    def __iter__(self):
        return iter((self.V0, self.stderr))


@dataclass(frozen=True)
class Strategy:
    """Proportional strategy on simulated paths: ``c_hat`` ``(M, N)``, ``pi`` ``(M, N, n)``."""

    c_hat: np.ndarray
    pi: np.ndarray


@dataclass(frozen=True, eq=False)
class StrategyResult:
    """Optimal controls on every path and step, the wealth they generate and
    the utility estimates. ``pi_x0`` and ``c_x0`` hold the controls at the
    initial state for each step."""

    strategy: Strategy
    p: np.ndarray
    wealth: WealthPaths
    Y0: float
    V0_closed_form: float
    V0_simulated: float
    stderr: float
    omega: float
    pi_x0: np.ndarray
    c_x0: np.ndarray

    @property
    def c_hat(self) -> np.ndarray:
        return self.strategy.c_hat

    @property
    def pi(self) -> np.ndarray:
        return self.strategy.pi


def closed_form_value(Y0: float, omega: float, gamma: float) -> float:
    return omega ** (1 - gamma) / (1 - gamma) * math.exp(Y0)


def evaluate_utility(c_hat, W, grid: TimeGrid, prefs: Preferences, paths: Optional[PathSet] = None,
                     basis: BasisSpec = BasisSpec(3), picard_iters: int = 20) -> UtilityEstimate:
    """Epstein-Zin utility at time 0 of proportional consumption with terminal bequest.

    Parameters
    ----------
    c_hat : (M, N) array
        Consumption-to-wealth ratio applied over each step.
    W : (M, N+1) array
        Wealth paths, strictly positive.
    paths : PathSet, optional
        Supplies the state for the conditional expectations. Without it the
        expectations are plain cross-path means, which is exact only when
        the strategy and market are deterministic.

    Returns
    -------
    UtilityEstimate
        Sample mean of the pathwise estimator and its standard error.
    """
    W = np.asarray(W, dtype=float)
    c_hat = np.asarray(c_hat, dtype=float)
    if np.any(W <= 0):
        raise ParameterDomainError("wealth must be strictly positive")
    if np.any(c_hat < 0):
        raise ParameterDomainError("consumption ratio must be nonnegative")
    M, N = c_hat.shape
    if W.shape != (M, N + 1) or N != grid.N:
        raise ValueError("consumption, wealth and grid shapes do not match")
    g, dt = prefs.gamma, grid.dt
    growth = np.exp((1 - g) * np.diff(np.log(W), axis=1))
    v_path = np.full(M, 1.0 / (1 - g))
    v_hat = v_path.copy()
    for i in range(N - 1, -1, -1):
        c = c_hat[:, i]
        target = growth[:, i] * (v_path + 0.5 * dt * aggregator_f(c, v_hat, prefs))
        if paths is None:
            ev = np.full(M, target.mean())
        else:
            x = paths.state(i)
            phi = Scaler.fit(x, basis).design(x)
            ev = least_squares(phi, target, step=i).fitted[:, 0]
        v = np.minimum(ev, -1e-300)
        for _ in range(picard_iters):
            v_new = np.minimum(ev + 0.5 * dt * aggregator_f(c, v, prefs), -1e-300)
            done = np.max(np.abs(v_new - v)) <= 1e-14 * np.max(np.abs(v_new))
            v = v_new
            if done:
                break
        v_path = target + 0.5 * dt * aggregator_f(c, v, prefs)
        v_hat = v
    scale = W[0, 0] ** (1 - g) if np.all(W[:, 0] == W[0, 0]) else None
    if scale is None:
        vals = W[:, 0] ** (1 - g) * v_path
    else:
        vals = scale * v_path
    return UtilityEstimate(V0=float(vals.mean()), stderr=float(vals.std(ddof=1) / math.sqrt(M)) if M > 1 else 0.0,
                           v_paths=vals)


def optimal_strategy(ctx: GeneratorContext, grid: TimeGrid, paths: PathSet, solution: BsdeSolution) -> Strategy:
    """Optimal controls on the simulated paths, from the pathwise ``Y`` and ``Z``."""
    if solution.grid != grid or solution.Y.shape[0] != paths.M:
        raise ValueError("solution does not belong to these paths and grid")
    M, N, n = paths.M, grid.N, ctx.model.n
    C = np.empty((M, N))
    P = np.empty((M, N, n))
    for i in range(N):
        _, P[:, i] = optimal_portfolio(grid.times[i], paths.state(i), solution.Z[:, i], ctx)
        C[:, i] = clamp_consumption(solution.Y[:, i], ctx.prefs, ctx.setC, ctx.y_cap)
    return Strategy(c_hat=C, pi=P)


def strategy_p(ctx: GeneratorContext, grid: TimeGrid, paths: PathSet, pi: np.ndarray) -> np.ndarray:
    """``p = sigma' pi`` along the paths."""
    P = np.empty_like(pi)
    for i in range(grid.N):
        coef = ctx.model.coefficients(grid.times[i], paths.state(i))
        P[:, i] = pi_to_p(coef.sigma, pi[:, i])
    return P


def score_strategy(ctx: GeneratorContext, grid: TimeGrid, paths: PathSet, strategy: Strategy,
                   omega: float = 1.0, basis: BasisSpec = BasisSpec(3)):
    """Simulate wealth under ``strategy`` and return ``(UtilityEstimate, WealthPaths, p)``."""
    P = strategy_p(ctx, grid, paths, strategy.pi)
    wealth = simulate_wealth(ctx.model, grid, paths, strategy.c_hat, P, omega)
    est = evaluate_utility(strategy.c_hat, wealth.W, grid, ctx.prefs, paths, basis)
    return est, wealth, P


def run_optimal(ctx: GeneratorContext, grid: TimeGrid, paths: PathSet, solution: BsdeSolution,
                omega: float = 1.0, basis: Optional[BasisSpec] = None) -> StrategyResult:
    """Apply the optimal strategy, simulate wealth and compare utilities.

    The simulated utility is checked against ``omega^{1-gamma}/(1-gamma) e^{Y0}``.
    """
    basis = solution.config.basis if basis is None else basis
    strat = optimal_strategy(ctx, grid, paths, solution)
    est, wealth, P = score_strategy(ctx, grid, paths, strat, omega, basis)
    x0 = ctx.model.x0[None, :]
    pi_x0 = np.empty(grid.N)
    c_x0 = np.empty(grid.N)
    for i in range(grid.N):
        _, pi = optimal_portfolio(grid.times[i], x0, solution.z_at(i, x0), ctx)
        pi_x0[i] = pi[0, 0]
        c_x0[i] = clamp_consumption(solution.y_at(i, x0)[0], ctx.prefs, ctx.setC, ctx.y_cap)
    Y0 = solution.Y0
    return StrategyResult(strategy=strat, p=P, wealth=wealth, Y0=Y0,
                          V0_closed_form=closed_form_value(Y0, omega, ctx.prefs.gamma),
                          V0_simulated=est.V0, stderr=est.stderr, omega=omega, pi_x0=pi_x0, c_x0=c_x0)


PERTURBATION_MODES = ("shift_pi", "shift_c")


def perturb_strategy(base: StrategyResult | Strategy, eps: float, mode: str, ctx: GeneratorContext) -> Strategy:
    """Shift the optimal strategy and push it back into the constraint sets.

    ``shift_pi`` maps ``pi`` to ``proj(pi + eps)``; ``shift_c`` maps ``c_hat``
    to ``clamp(c_hat (1 + eps))``, never below zero.
    """
    strat = base.strategy if isinstance(base, StrategyResult) else base
    if mode == "shift_pi":
        M, N, n = strat.pi.shape
        moved = ctx.setA.project((strat.pi + eps).reshape(M * N, n) if n > 1 else (strat.pi + eps).reshape(-1))
        return Strategy(c_hat=strat.c_hat, pi=np.asarray(moved).reshape(M, N, n))
    if mode == "shift_c":
        c = np.maximum(strat.c_hat * (1.0 + eps), 0.0)
        if ctx.setC is not None:
            c = np.asarray(ctx.setC.project(c.reshape(-1))).reshape(c.shape)
        return Strategy(c_hat=c, pi=strat.pi)
    raise ValueError(f"unknown perturbation mode {mode!r}; use one of {PERTURBATION_MODES}")


CANNED_PERTURBATIONS = tuple((mode, eps) for mode in PERTURBATION_MODES for eps in (-0.2, -0.1, 0.1, 0.2))


@dataclass(frozen=True)
class Profile:
    """Optimal controls along one axis (time at ``x0``, or state at a fixed step)."""

    step: np.ndarray
    t: np.ndarray
    x: np.ndarray
    pi: np.ndarray
    c_hat: np.ndarray
    pi_se: np.ndarray
    c_se: np.ndarray


def _controls(ctx, solution, i, x, dz=0.0, dy=0.0):
    z = solution.z_at(i, x) + dz
    y = solution.y_at(i, x) + dy
    _, pi = optimal_portfolio(solution.grid.times[i], x, z, ctx)
    return pi[:, 0], np.asarray(clamp_consumption(y, ctx.prefs, ctx.setC, ctx.y_cap))


def time_profile(ctx: GeneratorContext, solution: BsdeSolution) -> Profile:
    """Controls at the initial state for steps ``0..N-1`` with delta-method standard errors."""
    N = solution.grid.N
    x0 = ctx.model.x0[None, :]
    out = {k: np.empty(N) for k in ("pi", "c", "pi_se", "c_se")}
    for i in range(N):
        d = solution.diagnostics[i]
        pi, c = _controls(ctx, solution, i, x0)
        pi_up, _ = _controls(ctx, solution, i, x0, dz=d.z_se)
        pi_dn, _ = _controls(ctx, solution, i, x0, dz=-d.z_se)
        _, c_up = _controls(ctx, solution, i, x0, dy=d.y_se)
        _, c_dn = _controls(ctx, solution, i, x0, dy=-d.y_se)
        out["pi"][i], out["c"][i] = pi[0], c[0]
        out["pi_se"][i] = 0.5 * abs(pi_up[0] - pi_dn[0])
        out["c_se"][i] = 0.5 * abs(c_up[0] - c_dn[0])
    steps = np.arange(N)
    return Profile(step=steps, t=solution.grid.times[:N], x=np.full(N, float(x0[0, 0])), pi=out["pi"],
                   c_hat=out["c"], pi_se=out["pi_se"], c_se=out["c_se"])


def state_profile(ctx: GeneratorContext, solution: BsdeSolution, paths: PathSet, step: Optional[int] = None,
                  points: int = 41) -> Profile:
    """Controls across the 1%-99% quantile range of the simulated state at one step."""
    N = solution.grid.N
    step = max(1, N // 10) if step is None else step
    xs = paths.state(step)[:, 0]
    lo, hi = np.quantile(xs, [0.01, 0.99])
    grid = np.unique(np.linspace(lo, hi, points)) if hi > lo else np.array([lo])
    x = grid[:, None]
    pi, c = _controls(ctx, solution, step, x)
    zeros = np.zeros_like(grid)
    return Profile(step=np.full(grid.size, step), t=np.full(grid.size, solution.grid.times[step]), x=grid,
                   pi=pi, c_hat=c, pi_se=zeros, c_se=zeros)
