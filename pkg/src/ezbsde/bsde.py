"""Generator of the value BSDE and its regression Monte-Carlo solver.

Conventions
-----------
``z`` is a row vector of length ``k`` (one entry per state noise). Batches
carry the path axis first: ``x`` is ``(M, k)``, ``y`` is ``(M,)`` and ``z``
is ``(M, k)``.

The solver runs the backward recursion

    Y_i = E_i[Y_{i+1} + dt/2 H_{i+1}] + dt/2 H(t_i, X_i, Y_i, Z_i)

with ``Z_i`` explicit and ``Y_i`` found by Picard iteration. Conditional
expectations are least-squares fits on polynomials of the standardized state.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .constraints import ConstraintSet, FiniteSet, FullSpace, Interval, UnionOfIntervals, project_with_pi
from .markets import Coefficients, MarketBounds, MarketModel, market_bounds
from .paths import PathSet, TimeGrid
from .preferences import ParameterDomainError, Preferences


class RegressionError(RuntimeError):
    pass


class PicardError(RuntimeError):
    pass


def c1_constant(bounds: MarketBounds, prefs: Preferences, c_min: float = 0.0) -> float:
    """Upper-bound slope ``C1``; ``c_min`` is the smallest admissible consumption ratio."""
    g, th = prefs.gamma, prefs.theta
    c1 = (1 - g) * bounds.r_min - prefs.delta * th + 2 * (bounds.C0 + g * (g - 1) * bounds.C_p)
    return c1 + (g - 1) * c_min


def _consumption_floor(setC: Optional[ConstraintSet]) -> float:
    if setC is None:
        return 0.0
    return float(setC.bounded_element()[0])


@dataclass(frozen=True)
class GeneratorContext:
    """Everything the generator needs besides ``(t, x, y, z)``.

    ``setA`` is the portfolio constraint in fraction-of-wealth space; it is
    mapped through ``sigma'`` at every evaluation. ``setC`` (optional) holds
    admissible consumption-to-wealth ratios.
    """

    model: MarketModel
    prefs: Preferences
    setA: ConstraintSet
    T: float
    setC: Optional[ConstraintSet] = None
    bounds: Optional[MarketBounds] = None
    y_cap: float = field(init=False)

    def __post_init__(self):
        if self.setA.dim != self.model.n:
            raise ValueError(f"portfolio set has dimension {self.setA.dim}, market has {self.model.n} assets")
        if self.setC is not None:
            _check_consumption_set(self.setC)
        if self.bounds is None:
            object.__setattr__(self, "bounds", market_bounds(self.model, constraint=self.setA))
        c1 = c1_constant(self.bounds, self.prefs, _consumption_floor(self.setC))
        object.__setattr__(self, "y_cap", c1 * self.T)

    def replace(self, **changes) -> "GeneratorContext":
        kw = dict(model=self.model, prefs=self.prefs, setA=self.setA, T=self.T,
                  setC=self.setC, bounds=None)
        kw.update(changes)
        return GeneratorContext(**kw)


def _check_consumption_set(setC: ConstraintSet) -> None:
    if setC.dim != 1 or isinstance(setC, FullSpace):
        raise ParameterDomainError("consumption set must be a closed subset of [0, inf)")
    if isinstance(setC, Interval):
        lo = setC.lo
    elif isinstance(setC, UnionOfIntervals):
        lo = setC.intervals[0][0]
    elif isinstance(setC, FiniteSet):
        lo = setC.points[0][0]
    else:
        raise ParameterDomainError(f"unsupported consumption set {setC!r}")
    if lo < 0:
        raise ParameterDomainError("consumption set must be a closed subset of [0, inf)")


# -- linear algebra helpers ---------------------------------------------

def _inv(S: np.ndarray) -> np.ndarray:
    if S.shape[-1] == 1:
        return 1.0 / S
    return np.linalg.inv(S)


@dataclass(frozen=True)
class DriverParts:
    """y-independent pieces of the generator at a batch of points."""

    rest: np.ndarray       # every term except the consumption term
    u: np.ndarray          # unconstrained target in p-space
    p_star: np.ndarray     # its projection onto sigma' setA
    pi_star: np.ndarray    # the same point as a fraction of wealth
    dist: np.ndarray
    sigma: np.ndarray


def driver_parts(ctx: GeneratorContext, t: float, x, z, coef: Optional[Coefficients] = None) -> DriverParts:
    g = ctx.prefs.gamma
    x = np.asarray(x, dtype=float)
    if coef is None:
        coef = ctx.model.coefficients(t, x)
    M = coef.r.shape[0]
    z = np.broadcast_to(np.asarray(z, dtype=float), (M, ctx.model.k))
    Sinv = _inv(coef.Sigma)
    sig, rho, mu = coef.sigma, coef.rho, coef.mu
    srz = np.einsum("mij,mjk,mk->mi", sig, rho, z)
    # sigma' Sigma^{-1} (.)
    proj = lambda v: np.einsum("mji,mjl,ml->mi", sig, Sinv, v)
    u = proj(mu + srz) / g
    pi_star, p_star, dist = project_with_pi(ctx.setA, sig, u)
    s_rho = np.einsum("mij,mjk->mik", sig, rho)
    Q = np.einsum("mji,mjl,mlk->mik", s_rho, Sinv, s_rho)
    quad = 0.5 * np.einsum("mk,mk->m", z, z) + (1 - g) / (2 * g) * np.einsum("mi,mij,mj->m", z, Q, z)
    Smu = np.einsum("mij,mj->mi", Sinv, mu)
    lin = (1 - g) / g * np.einsum("mi,mik,mk->m", Smu, s_rho, z)
    const = (1 - g) / (2 * g) * np.einsum("mi,mi->m", mu, Smu) + (1 - g) * coef.r - ctx.prefs.delta * ctx.prefs.theta
    rest = -g * (1 - g) / 2 * dist**2 + quad + lin + const
    return DriverParts(rest=rest, u=u, p_star=p_star, pi_star=pi_star, dist=dist, sigma=sig)


def unconstrained_consumption(y, prefs: Preferences, y_cap: float = math.inf):
    """``delta^psi exp(-(psi/theta) min(y, y_cap))``."""
    y = np.minimum(np.asarray(y, dtype=float), y_cap)
    return prefs.delta**prefs.psi * np.exp(-prefs.psi / prefs.theta * y)


def _consumption_objective(c, y, prefs: Preferences):
    q = 1.0 - 1.0 / prefs.psi
    return (prefs.gamma - 1) * c + prefs.delta * prefs.theta * np.exp(-y / prefs.theta) * c**q


def clamp_consumption(y, prefs: Preferences, setC: Optional[ConstraintSet], y_cap: float = math.inf):
    """Minimizer over ``setC`` of ``(gamma-1) c + delta theta e^{-y/theta} c^{1-1/psi}``.

    The objective is convex in ``c`` so an interval reduces to clamping the
    unconstrained minimizer; unions compare the clamp on every piece and
    finite sets compare every point. Ties go to the smaller ratio.
    """
    y_arr = np.minimum(np.asarray(y, dtype=float), y_cap)
    c_unc = unconstrained_consumption(y_arr, prefs)
    if setC is None:
        out = c_unc
    elif isinstance(setC, Interval):
        out = np.clip(c_unc, setC.lo, setC.hi)
    else:
        if isinstance(setC, UnionOfIntervals):
            lo = np.array([a for a, _ in setC.intervals])
            hi = np.array([b for _, b in setC.intervals])
            cand = np.clip(np.atleast_1d(c_unc)[:, None], lo, hi)
        elif isinstance(setC, FiniteSet):
            cand = np.broadcast_to(setC.array[:, 0], (np.atleast_1d(c_unc).size, len(setC.points)))
        else:
            raise ParameterDomainError(f"unsupported consumption set {setC!r}")
        vals = _consumption_objective(cand, np.atleast_1d(y_arr)[:, None], prefs)
        out = cand[np.arange(cand.shape[0]), np.argmin(vals, axis=1)]
        out = out.reshape(np.shape(y_arr))
    return out[()] if np.ndim(out) == 0 else out


def consumption_term(y, ctx: GeneratorContext):
    """Consumption part of the generator and the ratio that attains it."""
    prefs = ctx.prefs
    y_c = np.minimum(np.asarray(y, dtype=float), ctx.y_cap)
    if ctx.setC is None:
        c = unconstrained_consumption(y_c, prefs)
        return prefs.theta / prefs.psi * c, c
    c = clamp_consumption(y_c, prefs, ctx.setC)
    return _consumption_objective(c, y_c, prefs), c


def generator_H(t, x, y, z, ctx: GeneratorContext):
    """Driver of the value BSDE at a batch of points (or a single point).

    With a consumption set in the context the consumption term is the
    constrained infimum.
    """
    x_arr = np.asarray(x, dtype=float)
    single = x_arr.ndim <= 1 and np.ndim(y) == 0
    xb = x_arr.reshape(-1, ctx.model.k)
    zb = np.asarray(z, dtype=float).reshape(-1, ctx.model.k)
    parts = driver_parts(ctx, t, xb, zb)
    term, _ = consumption_term(np.broadcast_to(np.asarray(y, dtype=float), parts.rest.shape), ctx)
    out = parts.rest + term
    return float(out[0]) if single else out


def generator_H_consumption(t, x, y, z, ctx: GeneratorContext):
    """Same as :func:`generator_H`; requires a consumption set in ``ctx``."""
    if ctx.setC is None:
        raise ValueError("context has no consumption set")
    return generator_H(t, x, y, z, ctx)


# -- regression ---------------------------------------------------------

@dataclass(frozen=True)
class BasisSpec:
    """Monomials of total degree ``<= degree`` in the standardized state."""

    degree: int = 3

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("basis degree must be >= 0")

    def exponents(self, k: int) -> list:
        out = []
        for d in range(self.degree + 1):
            for combo in itertools.combinations_with_replacement(range(k), d):
                e = [0] * k
                for j in combo:
                    e[j] += 1
                out.append(tuple(e))
        return out


@dataclass(frozen=True)
class Scaler:
    center: np.ndarray
    scale: np.ndarray
    exponents: tuple

    @classmethod
    def fit(cls, x: np.ndarray, basis: BasisSpec) -> "Scaler":
        center = x.mean(axis=0)
        scale = x.std(axis=0)
        degenerate = np.all(scale <= 1e-12 * (1.0 + np.abs(center)))
        if degenerate:
            exps = ((0,) * x.shape[1],)
            scale = np.ones_like(scale)
        else:
            scale = np.where(scale > 0, scale, 1.0)
            exps = tuple(basis.exponents(x.shape[1]))
        return cls(center=center, scale=scale, exponents=exps)

    def design(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        s = (x - self.center) / self.scale
        cols = [np.prod(s ** np.asarray(e), axis=1) for e in self.exponents]
        return np.stack(cols, axis=1)


@dataclass(frozen=True)
class Fit:
    coef: np.ndarray       # (K, q)
    fitted: np.ndarray     # (M, q)
    r2: np.ndarray         # (q,)
    gram_inv: np.ndarray   # (K, K), inverse of Phi'Phi
    resid_std: np.ndarray  # (q,)


def least_squares(phi: np.ndarray, target: np.ndarray, ridge: float = 1e-10, step: int = -1) -> Fit:
    """Ridge-stabilized normal-equation fit of each column of ``target``."""
    M, K = phi.shape
    tgt = target.reshape(M, -1)
    gram = phi.T @ phi / M
    diag = np.diag(gram)
    if np.any(diag <= 0) or np.linalg.cond(gram) > 1e13:
        raise RegressionError(f"rank-deficient regression design at step {step}")
    gram_r = gram + ridge * np.eye(K)
    coef = np.linalg.solve(gram_r, phi.T @ tgt / M)
    fitted = phi @ coef
    resid = tgt - fitted
    tot = ((tgt - tgt.mean(axis=0)) ** 2).sum(axis=0)
    ss = (resid**2).sum(axis=0)
    # a numerically constant target is fitted perfectly by the intercept
    flat = tot <= M * (1e-12 * (1.0 + np.abs(tgt).max(axis=0))) ** 2
    r2 = np.where(flat, 1.0, 1.0 - ss / np.where(flat, 1.0, tot))
    dof = max(M - K, 1)
    return Fit(coef=coef, fitted=fitted, r2=r2, gram_inv=np.linalg.inv(gram_r) / M,
               resid_std=np.sqrt(ss / dof))


# -- solver ---------------------------------------------------------------

@dataclass(frozen=True)
class SolverConfig:
    """Knobs of the backward recursion.

    ``kz`` overrides the default truncation ``10 sqrt(C0 + 1) (1 + degree)``.
    """

    basis: BasisSpec = BasisSpec()
    kz: Optional[float] = None
    picard_iters: int = 20
    picard_tol: float = 1e-13
    ridge: float = 1e-10

    def truncation(self, bounds: MarketBounds) -> float:
        if self.kz is not None:
            return float(self.kz)
        return 10.0 * math.sqrt(bounds.C0 + 1.0) * (1 + self.basis.degree)


@dataclass(frozen=True)
class StepDiagnostics:
    r2_y: float
    r2_z: float
    trunc_hits: int
    y_se: float           # standard error of the fitted conditional mean at x0
    z_se: float           # same for the first component of Z
    picard_iters: int


@dataclass(frozen=True, eq=False)
class BsdeSolution:
    """Per-step regression representation of ``(Y, Z)`` plus pathwise values.

    ``Y`` is ``(M, N+1)`` and ``Z`` is ``(M, N+1, k)`` on the simulated paths;
    ``Z[:, N]`` is zero by convention. :meth:`y_at` and :meth:`z_at`
    evaluate the representation at arbitrary states.
    """

    ctx: GeneratorContext
    grid: TimeGrid
    config: SolverConfig
    scalers: tuple
    coef_y: tuple
    coef_z: tuple
    Y: np.ndarray
    Z: np.ndarray
    diagnostics: tuple
    kz: float

    @property
    def Y0(self) -> float:
        return float(self.y_at(0, self.ctx.model.x0[None, :])[0])

    @property
    def Z0(self) -> np.ndarray:
        return self.z_at(0, self.ctx.model.x0[None, :])[0]

    @property
    def trunc_hits(self) -> int:
        return sum(d.trunc_hits for d in self.diagnostics)

    def _z_raw(self, i, x):
        phi = self.scalers[i].design(x)
        z = phi @ self.coef_z[i]
        return _truncate(z, self.kz)[0]

    def z_at(self, i: int, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float)).reshape(-1, self.ctx.model.k)
        if i == self.grid.N:
            return np.zeros_like(x)
        return self._z_raw(i, x)

    def y_at(self, i: int, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float)).reshape(-1, self.ctx.model.k)
        if i == self.grid.N:
            return np.zeros(x.shape[0])
        ey = self.scalers[i].design(x) @ self.coef_y[i][:, 0]
        z = self._z_raw(i, x)
        parts = driver_parts(self.ctx, self.grid.times[i], x, z)
        y, _ = _implicit_step(ey, parts.rest, 0.5 * self.grid.dt, self.ctx, self.config, i)
        return np.minimum(y, self.ctx.y_cap)

    def solution_rows(self):
        """Rows for the solution CSV: step, t, Y and Z at x0, R^2s, truncation hits."""
        x0 = self.ctx.model.x0[None, :]
        rows = []
        for i, t in enumerate(self.grid.times):
            d = self.diagnostics[i] if i < self.grid.N else None
            rows.append((i, float(t), float(self.y_at(i, x0)[0]), float(self.z_at(i, x0)[0, 0]),
                         d.r2_y if d else 1.0, d.r2_z if d else 1.0, d.trunc_hits if d else 0))
        return rows


def _truncate(z: np.ndarray, kz: float):
    norm = np.sqrt(np.einsum("mk,mk->m", z, z))
    over = norm > kz
    if np.any(over):
        z = z.copy()
        z[over] *= (kz / norm[over])[:, None]
    return z, int(over.sum())


def _implicit_step(ey, rest, h, ctx, config: SolverConfig, step: int):
    """Solve ``y = ey + h (rest + c(y))`` by Picard iteration."""
    y = np.array(ey, dtype=float)
    for it in range(1, config.picard_iters + 1):
        term, _ = consumption_term(y, ctx)
        y_new = ey + h * (rest + term)
        delta = np.max(np.abs(y_new - y)) if y.size else 0.0
        y = y_new
        if delta <= config.picard_tol * (1.0 + np.max(np.abs(y))):
            return y, it
    raise PicardError(f"Picard iteration did not converge at step {step} (last change {delta:.3e})")


def solve_bsde(ctx: GeneratorContext, grid: TimeGrid, paths: PathSet,
               config: SolverConfig = SolverConfig()) -> BsdeSolution:
    """Backward regression Monte-Carlo for the value BSDE with zero terminal value."""
    if paths.grid != grid:
        raise ValueError("paths were simulated on a different grid")
    M, N, k, dt = paths.M, grid.N, ctx.model.k, grid.dt
    t = grid.times
    kz = config.truncation(ctx.bounds)
    x0 = ctx.model.x0[None, :]
    Y = np.zeros((M, N + 1))
    Z = np.zeros((M, N + 1, k))
    scalers, coef_y, coef_z, diags = [None] * N, [None] * N, [None] * N, [None] * N

    parts = driver_parts(ctx, t[N], paths.state(N), Z[:, N])
    H_next = parts.rest + consumption_term(Y[:, N], ctx)[0]
    for i in range(N - 1, -1, -1):
        x = paths.state(i)
        target = Y[:, i + 1] + 0.5 * dt * H_next
        sc = Scaler.fit(x, config.basis)
        phi = sc.design(x)
        fy = least_squares(phi, target, config.ridge, step=i)
        ey = fy.fitted[:, 0]
        zt = (target - ey)[:, None] * paths.dW[:, i, :] / dt
        fz = least_squares(phi, zt, config.ridge, step=i)
        z, hits = _truncate(fz.fitted, kz)
        parts = driver_parts(ctx, t[i], x, z)
        y, iters = _implicit_step(ey, parts.rest, 0.5 * dt, ctx, config, i)
        y = np.minimum(y, ctx.y_cap)
        Y[:, i] = y
        Z[:, i] = z
        H_next = parts.rest + consumption_term(y, ctx)[0]
        phi0 = sc.design(x0)[0]
        lev = math.sqrt(max(phi0 @ fy.gram_inv @ phi0, 0.0))
        se = float(fy.resid_std[0] * lev)
        se_z = float(fz.resid_std[0] * lev)
        scalers[i], coef_y[i], coef_z[i] = sc, fy.coef, fz.coef
        diags[i] = StepDiagnostics(r2_y=float(fy.r2[0]), r2_z=float(np.mean(fz.r2)), trunc_hits=hits,
                                   y_se=se, z_se=se_z, picard_iters=iters)
    Y.setflags(write=False)
    Z.setflags(write=False)
    return BsdeSolution(ctx=ctx, grid=grid, config=config, scalers=tuple(scalers),
                        coef_y=tuple(coef_y), coef_z=tuple(coef_z), Y=Y, Z=Z,
                        diagnostics=tuple(diags), kz=kz)


# -- constant-coefficient oracle -----------------------------------------

@dataclass(frozen=True)
class OdeSolution:
    times: np.ndarray
    values: np.ndarray

    def __call__(self, t):
        return np.interp(t, self.times, self.values)

    @property
    def Y0(self) -> float:
        return float(self.values[0])


def solve_ode_constant(ctx: GeneratorContext, T: Optional[float] = None, steps: int = 10_000,
                       rhs: Optional[Callable[[float], float]] = None) -> OdeSolution:
    """Classical RK4 for ``dY/dt = -H(Y)``, ``Y(T) = 0``, with ``Z = 0``.

    The market in ``ctx`` must have constant coefficients. ``rhs`` replaces
    the generator (used for sanity checks with terms switched off).
    """
    T = ctx.T if T is None else T
    if ctx.model.scheme != "constant":
        raise ValueError("the ODE oracle needs a constant-coefficient model (see MarketModel.frozen)")
    if rhs is None:
        x0 = ctx.model.x0[None, :]
        rest = float(driver_parts(ctx, 0.0, x0, np.zeros((1, ctx.model.k))).rest[0])

        def rhs(y):
            return rest + float(consumption_term(np.array([y]), ctx)[0][0])

    h = T / steps
    ys = np.empty(steps + 1)
    ys[steps] = 0.0
    y = 0.0
    # backward in time: dY/ds = H(Y) with s = T - t
    for j in range(steps, 0, -1):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        ys[j - 1] = y
    return OdeSolution(times=np.linspace(0.0, T, steps + 1), values=ys)
