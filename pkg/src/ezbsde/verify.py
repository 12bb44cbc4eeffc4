"""A priori bounds, the Lyapunov operator and parameter-condition checks.

Every check returns a :class:`Condition` that carries both sides of its
inequality, so near misses stay visible.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .bsde import BsdeSolution, GeneratorContext, c1_constant
from .markets import MarketBounds, MarketModel
from .preferences import Preferences


@dataclass(frozen=True)
class Condition:
    """``lhs <relation> rhs`` together with its verdict."""

    name: str
    holds: bool
    lhs: float
    rhs: float
    relation: str = "<"
    note: str = ""

    @property
    def margin(self) -> float:
        if self.relation in ("<", "<="):
            return self.rhs - self.lhs
        return self.lhs - self.rhs

    def __bool__(self) -> bool:
        return bool(self.holds)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["margin"] = self.margin
        return d


def _cond(name, lhs, rhs, relation="<", note="") -> Condition:
    lhs, rhs = float(lhs), float(rhs)
    ops = {"<": lhs < rhs, "<=": lhs <= rhs, ">": lhs > rhs, ">=": lhs >= rhs}
    return Condition(name=name, holds=bool(ops[relation]), lhs=lhs, rhs=rhs, relation=relation, note=note)


# -- bounds on Y -----------------------------------------------------------

def compute_C1_C2(bounds: MarketBounds, prefs: Preferences, T: float, c_min: float = 0.0):
    """Upper-bound constant ``C1`` and the lower-bound function ``C2(t)``.

    ``C2(t) = [(theta/psi) delta^psi exp(-(psi/theta) C1 T) + (1-gamma)/(2 gamma) C0
    - delta theta] (T - t)``. When ``C1 T`` is so large that the exponential
    overflows, ``C2`` is ``-inf`` before ``T``.
    """
    g, psi, th, d = prefs.gamma, prefs.psi, prefs.theta, prefs.delta
    c1 = c1_constant(bounds, prefs, c_min)
    expo = -(psi / th) * c1 * T
    cons = -math.inf if expo > 700 else th / psi * d**psi * math.exp(expo)
    rate = cons + (1 - g) / (2 * g) * bounds.C0 - d * th

    def c2(t):
        t = np.asarray(t, dtype=float)
        rem = T - t
        with np.errstate(invalid="ignore"):
            out = np.where(rem > 0, rate * rem, 0.0)
        return out[()] if out.ndim == 0 else out

    return c1, c2


@dataclass(frozen=True)
class YBoundCheck:
    passed: bool
    upper_bound: float
    worst_upper: float            # max of Y - C1 T over all paths and steps
    lower_checked: bool
    worst_lower: Optional[float]  # max of (lower - 3 se) - Y over t < T, when checked
    evaluations: int

    def as_dict(self) -> dict:
        return asdict(self)


def check_y_bounds(solution: BsdeSolution, report: "VerificationReport", model: Optional[MarketModel] = None,
                   tol: float = 1e-9, n_se: float = 3.0) -> YBoundCheck:
    """Check ``Y <= C1 T`` on every path and step; with a constant rate also
    ``Y >= (1-gamma) r (T-t) + C2(t)`` up to ``n_se`` regression standard errors."""
    model = solution.ctx.model if model is None else model
    Y = solution.Y
    upper = report.y_upper
    worst_up = float(np.max(Y - upper))
    ok = worst_up <= tol
    worst_low = None
    lower_checked = bool(model.constant_rate)
    if lower_checked:
        t = solution.grid.times
        g = solution.ctx.prefs.gamma
        r = float(model.coefficients(0.0, model.x0[None, :]).r[0])
        low = (1 - g) * r * (solution.grid.T - t) + report.c2(t)
        se = np.array([d.y_se for d in solution.diagnostics] + [0.0])
        slack = n_se * se + tol
        # at t = T both sides vanish, so only earlier dates carry information
        k = max(Y.shape[1] - 1, 1)
        worst_low = float(np.max(low[None, :k] - slack[None, :k] - Y[:, :k]))
        ok = ok and worst_low <= 0
    return YBoundCheck(passed=bool(ok), upper_bound=float(upper), worst_upper=worst_up,
                       lower_checked=lower_checked, worst_lower=worst_low, evaluations=int(Y.size))


# -- Lyapunov operator -------------------------------------------------------

@dataclass(frozen=True)
class LyapunovFunction:
    """Callables on ``(M, k)`` batches: value ``(M,)``, gradient ``(M, k)``, Hessian ``(M, k, k)``."""

    value: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray]
    label: str = ""


def phi_quadratic(c0: float) -> LyapunovFunction:
    """``c0 x^2`` for a scalar state."""
    return LyapunovFunction(
        value=lambda x: c0 * x[:, 0] ** 2,
        grad=lambda x: 2 * c0 * x,
        hess=lambda x: np.full((x.shape[0], 1, 1), 2 * c0),
        label=f"{c0} x^2",
    )


def phi_log_barrier(c1: float, c2: float) -> LyapunovFunction:
    """``c1 x - c2 ln x`` for a positive scalar state."""
    return LyapunovFunction(
        value=lambda x: c1 * x[:, 0] - c2 * np.log(x[:, 0]),
        grad=lambda x: c1 - c2 / x,
        hess=lambda x: (c2 / x**2)[:, :, None],
        label=f"{c1} x - {c2} ln x",
    )


def _norm(arr):
    """Euclidean norm of vectors, Frobenius norm of matrices, per batch entry."""
    return np.sqrt(np.sum(arr.reshape(arr.shape[0], -1) ** 2, axis=1))


def lfo_denominator(model: MarketModel, prefs: Preferences, x, t: float = 0.0) -> np.ndarray:
    """``1/2 + (2(1-gamma)/gamma) |sigma' Sigma^{-1} sigma rho| |rho|`` at each state."""
    g = prefs.gamma
    c = model.coefficients(t, x)
    Sinv = np.linalg.inv(c.Sigma)
    m = np.einsum("mji,mjl,mlp,mpk->mik", c.sigma, Sinv, c.sigma, c.rho)
    return 0.5 + 2 * (1 - g) / g * _norm(m) * _norm(c.rho)


def lyapunov_operator(phi: LyapunovFunction, model: MarketModel, prefs: Preferences, C_p: float, x,
                      t: float = 0.0, grad=None, hess=None) -> np.ndarray:
    """Evaluate the Lyapunov operator of ``phi`` at a batch of states.

    ``grad`` and ``hess`` override the analytic derivatives of ``phi`` (used
    to cross-check with finite differences).

    Raises
    ------
    ValueError
        If the denominator is not positive at some state.
    """
    g = prefs.gamma
    x = np.asarray(x, dtype=float).reshape(-1, model.k)
    c = model.coefficients(t, x)
    dphi = phi.grad(x) if grad is None else grad
    d2phi = phi.hess(x) if hess is None else hess
    Sinv = np.linalg.inv(c.Sigma)
    sharpe = _norm(np.einsum("mji,mjl,ml->mi", c.sigma, Sinv, c.mu))
    ssr = _norm(np.einsum("mji,mjl,mlp,mpk->mik", c.sigma, Sinv, c.sigma, c.rho))
    rho_n = _norm(c.rho)
    a_grad = np.einsum("mji,mj->mi", c.a, dphi)            # a' grad phi
    rho_a_grad = _norm(np.einsum("mik,mk->mi", c.rho, a_grad))
    grad_a = _norm(a_grad)
    den = 0.5 + 2 * (1 - g) / g * ssr * rho_n
    if np.any(den <= 0):
        bad = x[np.argmin(den)]
        raise ValueError(f"Lyapunov denominator is not positive (min {den.min():.6g} at x={bad})")
    A = c.A
    drift = np.einsum("mi,mi->m", c.b, dphi) + 0.5 * np.einsum("mij,mij->m", A, d2phi)
    num = ((1 - g) * C_p * rho_n + 2 * (1 - g) / g * sharpe * rho_n - grad_a
           + 2 * (1 - g) / g * ssr * rho_a_grad)
    return (drift - 2 * (1 - g) / g * sharpe * rho_a_grad - (1 - g) * C_p * rho_a_grad
            + 0.25 * num**2 / den)


@dataclass(frozen=True)
class LyapunovScan:
    sup: float
    argmax: float
    sup_refined: float
    interior: bool
    points: int


def scan_lyapunov(phi: LyapunovFunction, model: MarketModel, prefs: Preferences, C_p: float,
                  grid: np.ndarray) -> LyapunovScan:
    """Grid-scan supremum of the operator, repeated on a grid with doubled density."""
    grid = np.asarray(grid, dtype=float).reshape(-1)
    vals = lyapunov_operator(phi, model, prefs, C_p, grid[:, None])
    j = int(np.argmax(vals))
    if grid.size > 1:
        fine = np.sort(np.concatenate([grid, 0.5 * (grid[1:] + grid[:-1])]))
        if np.all(grid > 0) and grid[-1] / grid[0] > 100:
            fine = np.sort(np.concatenate([grid, np.sqrt(grid[1:] * grid[:-1])]))
        sup_fine = float(np.max(lyapunov_operator(phi, model, prefs, C_p, fine[:, None])))
    else:
        sup_fine = float(vals[j])
    return LyapunovScan(sup=float(vals[j]), argmax=float(grid[j]), sup_refined=sup_fine,
                        interior=0 < j < grid.size - 1, points=int(grid.size))


# -- parameter conditions ------------------------------------------------------

def check_lfo_condition(model: MarketModel, prefs: Preferences, grid=None, t: float = 0.0) -> Condition:
    """Positivity of the Lyapunov denominator over a scan of states; ``lhs`` is its minimum."""
    pts = model.sample_points if grid is None else np.asarray(grid, dtype=float).reshape(-1, model.k)
    den = lfo_denominator(model, prefs, pts, t)
    return _cond("lyapunov denominator positive", float(np.min(den)), 0.0, ">")


def check_prop_exp2(b, a, r1, lambda1, rho, prefs: Preferences) -> list:
    """Sufficient conditions for the truncated linear-diffusion market."""
    g, psi = prefs.gamma, prefs.psi
    k = 2 * (1 - g) * rho**2 / g
    num = 1 + 2 * k
    conds = [
        _cond("(i) b > 0 and a > 0", min(b, a), 0.0, ">"),
        _cond("(ii) r1 > 0", r1, 0.0, ">"),
        _cond("(iii) a^2/b < (1 + 4(1-g)rho^2/g)/(2(1-g)rho^2/g - 1)^2", a * a / b, num / (k - 1) ** 2,
              note=f"numerator {num:.6g}"),
        _cond("(iv) (psi-1) r1 < (b - (psi-1) a lambda1 rho)^2/(2a^2)", (psi - 1) * r1,
              (b - (psi - 1) * a * lambda1 * rho) ** 2 / (2 * a * a)),
    ]
    return conds


def check_prop_exp1(b, l, a, r1, sigma_scale, lam, rho, prefs: Preferences) -> list:
    """Sufficient conditions for the square-root market.

    Positivity in (i) accepts ``r1 = 0`` (constant rate), otherwise the
    default constant-rate configuration could never pass.
    """
    g, psi = prefs.gamma, prefs.psi
    positive = min(b, l, a, sigma_scale, lam) > 0 and r1 >= 0
    feller = b * l > 0.5 * a * a
    c1 = Condition(name="(i) positivity and b l > a^2/2", holds=bool(positive and feller), lhs=b * l,
                   rhs=0.5 * a * a, relation=">",
                   note="positivity " + ("holds" if positive else "fails") + " (r1 >= 0 accepted)")
    return [
        c1,
        _cond("(ii) 1/2 + 2(1-g)rho^2/g > 0", 0.5 + 2 * (1 - g) * rho**2 / g, 0.0, ">"),
        _cond("(iii) (psi-1) r1 < b^2/(2a^2)", (psi - 1) * r1, b * b / (2 * a * a)),
    ]


def laplace_condition(zeta: float, beta: float, a: float) -> Condition:
    """``zeta < beta^2 / (2 a^2)``."""
    if a == 0:
        raise ValueError("a must be nonzero")
    return _cond("zeta < beta^2/(2a^2)", zeta, beta * beta / (2 * a * a))


# -- report ------------------------------------------------------------------------

@dataclass
class VerificationReport:
    c1: float
    c2: Callable[[float], float]
    y_upper: float
    T: float
    lfo_condition: Optional[Condition] = None
    lyapunov_sup: Optional[float] = None
    lyapunov: Optional[LyapunovScan] = None
    prop_conditions: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    y_bounds: Optional[YBoundCheck] = None

    def as_dict(self) -> dict:
        ts = np.linspace(0.0, self.T, 11)
        return {
            "C1": self.c1,
            "y_upper": self.y_upper,
            "C2": {"t": ts.tolist(), "value": [float(v) for v in np.asarray(self.c2(ts))]},
            "lfo_condition": self.lfo_condition.as_dict() if self.lfo_condition is not None else None,
            "lyapunov_sup": self.lyapunov_sup,
            "lyapunov": asdict(self.lyapunov) if self.lyapunov else None,
            "prop_conditions": [c.as_dict() for c in self.prop_conditions],
            "y_bounds": self.y_bounds.as_dict() if self.y_bounds else None,
            "notes": list(self.notes),
        }

    def table(self) -> str:
        lines = [f"C1 = {self.c1:.10g}   C1*T = {self.y_upper:.10g}"]
        conds = ([self.lfo_condition] if self.lfo_condition is not None else []) + list(self.prop_conditions)
        for c in conds:
            mark = "ok  " if c.holds else "FAIL"
            lines.append(f"[{mark}] {c.name}: lhs={c.lhs:.6g} {c.relation} rhs={c.rhs:.6g}"
                         + (f"  ({c.note})" if c.note else ""))
        if self.lyapunov is not None:
            lines.append(f"Lyapunov sup over scan = {self.lyapunov.sup:.6g} at x={self.lyapunov.argmax:.6g}"
                         f" (refined {self.lyapunov.sup_refined:.6g})")
        if self.y_bounds is not None:
            yb = self.y_bounds
            lines.append(f"[{'ok  ' if yb.passed else 'FAIL'}] Y bounds: max(Y - C1 T) = {yb.worst_upper:.6g}"
                         + (f", worst lower shortfall = {yb.worst_lower:.6g}" if yb.lower_checked else ""))
        lines.extend(f"note: {n}" for n in self.notes)
        return "\n".join(lines)


def default_phi(model: MarketModel) -> Optional[LyapunovFunction]:
    if model.kind == "heston":
        return phi_log_barrier(0.01, 0.01)
    if model.kind == "linear_diffusion":
        return phi_quadratic(0.01)
    return None


def build_report(ctx: GeneratorContext, phi: Optional[LyapunovFunction] = None,
                 solution: Optional[BsdeSolution] = None) -> VerificationReport:
    """Bounds, parameter conditions and (when a solution is given) the Y-bound check."""
    model, prefs = ctx.model, ctx.prefs
    c_min = 0.0 if ctx.setC is None else float(ctx.setC.bounded_element()[0])
    c1, c2 = compute_C1_C2(ctx.bounds, prefs, ctx.T, c_min)
    rep = VerificationReport(c1=c1, c2=c2, y_upper=c1 * ctx.T, T=ctx.T)
    rep.notes.append("the Lyapunov argument assumes 0 lies in the portfolio constraint set")
    if not ctx.setA.contains(np.zeros(ctx.setA.dim) if ctx.setA.dim > 1 else 0.0):
        rep.notes.append("0 is not in the portfolio constraint set; C_p = %.6g enters C1" % ctx.bounds.C_p)
    if c_min > 0:
        rep.notes.append(f"consumption set excludes 0; C1 includes (gamma-1)*{c_min:.6g}")
    p = model.params
    if model.kind in ("heston", "linear_diffusion"):
        rep.lfo_condition = check_lfo_condition(model, prefs)
    if model.kind == "heston":
        rep.prop_conditions = check_prop_exp1(p["b"], p["l"], p["a"], p["r1"], p["sigma_scale"], p["lam"],
                                              p["rho"], prefs)
        grid = np.geomspace(1e-3, 1e3, 2001)
    elif model.kind == "linear_diffusion":
        rep.prop_conditions = check_prop_exp2(p["b"], p["a"], p["r1"], p["lambda1"], p["rho"], prefs)
        grid = np.linspace(-1e3, 1e3, 2001)
    else:
        grid = None
        rep.notes.append("degenerate state: no Lyapunov function needed")
    phi = default_phi(model) if phi is None else phi
    if phi is not None and grid is not None:
        if rep.lfo_condition is not None and not rep.lfo_condition.holds:
            rep.notes.append("Lyapunov operator undefined: its denominator is not positive")
        else:
            rep.lyapunov = scan_lyapunov(phi, model, prefs, ctx.bounds.C_p, grid)
            rep.lyapunov_sup = rep.lyapunov.sup
    failed = [c.name for c in rep.prop_conditions if not c.holds]
    if failed:
        rep.notes.append("sufficient conditions fail: " + "; ".join(failed) + " (solver still run)")
    if solution is not None:
        rep.y_bounds = check_y_bounds(solution, rep, model)
    return rep
