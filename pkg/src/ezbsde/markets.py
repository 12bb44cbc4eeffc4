"""Market coefficient models and the bounds derived from them.

A :class:`MarketModel` evaluates every coefficient on a batch of states at
once. States are arrays of shape ``(M, k)``; the returned coefficients carry
the batch axis first:

====== ============ ==========================================
name   shape        meaning
====== ============ ==========================================
b      (M, k)       drift of the state process
a      (M, k, k)    diffusion of the state process
r      (M,)         short rate
mu     (M, n)       excess return
sigma  (M, n, n)    asset volatility
rho    (M, n, k)    loading of asset noise on the state noise
rho_p  (M, n, n)    loading on the orthogonal noise
====== ============ ==========================================
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .preferences import ParameterDomainError


@dataclass(frozen=True)
class Coefficients:
    b: np.ndarray
    a: np.ndarray
    r: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    rho: np.ndarray
    rho_p: np.ndarray

    @property
    def Sigma(self) -> np.ndarray:
        return self.sigma @ np.swapaxes(self.sigma, -1, -2)

    @property
    def A(self) -> np.ndarray:
        return self.a @ np.swapaxes(self.a, -1, -2)

    def price_of_risk_sq(self) -> np.ndarray:
        """``mu' Sigma^{-1} mu`` per batch entry."""
        sol = np.linalg.solve(self.Sigma, self.mu[..., None])[..., 0]
        return np.einsum("mi,mi->m", self.mu, sol)


@dataclass(frozen=True)
class MarketModel:
    """Immutable market description.

    ``evaluate(t, x)`` maps a time and a ``(M, k)`` state batch to
    :class:`Coefficients`. ``scheme`` tells the path engine how to step the
    state: ``"constant"``, ``"exact_ou"``, ``"full_truncation"`` or
    ``"euler"``.
    """

    kind: str
    k: int
    n: int
    x0: np.ndarray
    evaluate: Callable[[float, np.ndarray], Coefficients]
    domain: tuple = ((-math.inf, math.inf),)
    scheme: str = "euler"
    params: dict = field(default_factory=dict)
    c0_analytic: Optional[float] = None
    constant_rate: bool = False
    sample_points: Optional[np.ndarray] = None

    def coefficients(self, t: float, x) -> Coefficients:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, self.k) if self.k > 1 else x[:, None]
        elif x.ndim == 0:
            x = x.reshape(1, 1)
        return self.evaluate(t, x)

    def in_domain(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        ok = np.ones(x.shape[0], dtype=bool)
        for j, (lo, hi) in enumerate(self.domain):
            ok &= (x[:, j] > lo) & (x[:, j] < hi)
        return ok

    def frozen(self, t: float = 0.0, x=None) -> "MarketModel":
        """Constant-coefficient copy with every coefficient fixed at ``(t, x)``.

        The state becomes degenerate (zero drift and diffusion).
        """
        x = self.x0 if x is None else np.atleast_1d(np.asarray(x, dtype=float))
        c = self.coefficients(t, x[None, :])
        k, n = self.k, self.n
        fixed = dict(
            b=np.zeros(k), a=np.zeros((k, k)), r=float(c.r[0]), mu=c.mu[0].copy(),
            sigma=c.sigma[0].copy(), rho=c.rho[0].copy(), rho_p=c.rho_p[0].copy(),
        )
        return _constant_model(
            kind=f"{self.kind}-frozen", x0=x.copy(), params=dict(self.params, frozen_at=x.tolist()),
            **fixed,
        )


def _broadcast(m: int, arr, shape) -> np.ndarray:
    return np.broadcast_to(np.asarray(arr, dtype=float), (m,) + shape)


def _constant_model(kind, x0, params, b, a, r, mu, sigma, rho, rho_p) -> MarketModel:
    k = len(b)
    n = len(mu)

    def evaluate(t, x):
        m = x.shape[0]
        return Coefficients(
            b=_broadcast(m, b, (k,)), a=_broadcast(m, a, (k, k)),
            r=np.full(m, float(r)), mu=_broadcast(m, mu, (n,)),
            sigma=_broadcast(m, sigma, (n, n)), rho=_broadcast(m, rho, (n, k)),
            rho_p=_broadcast(m, rho_p, (n, n)),
        )

    sig = np.asarray(sigma, dtype=float)
    muv = np.asarray(mu, dtype=float)
    c0 = float(muv @ np.linalg.solve(sig @ sig.T, muv))
    return MarketModel(
        kind=kind, k=k, n=n, x0=np.asarray(x0, dtype=float), evaluate=evaluate,
        scheme="constant", params=params, c0_analytic=c0, constant_rate=True,
        sample_points=np.asarray(x0, dtype=float)[None, :],
    )


def make_black_scholes(r: float, mu: float, sigma: float, x0: float = 0.0) -> MarketModel:
    """One risky asset with constant coefficients and a degenerate state."""
    if not sigma > 0:
        raise ParameterDomainError(f"sigma must be > 0, got {sigma}")
    model = _constant_model(
        kind="black_scholes", x0=[x0], params=dict(r=r, mu=mu, sigma=sigma),
        b=[0.0], a=[[0.0]], r=r, mu=[mu], sigma=[[sigma]], rho=[[1.0]], rho_p=[[0.0]],
    )
    return model


def make_linear_diffusion(
    b: float, a: float, sigma: float, r0: float, r1: float,
    lambda0: float, lambda1: float, rho: float, x0: float = 0.0,
) -> MarketModel:
    """Ornstein-Uhlenbeck factor with truncated affine rate and premium.

    ``r(x) = r0 + r1 max(-100, x)`` is truncated from below only;
    ``mu(x) = sigma (lambda0 + lambda1 clip(x, -100, 100))``.
    """
    if not (b > 0 and a > 0 and sigma > 0):
        raise ParameterDomainError("linear diffusion needs b > 0, a > 0, sigma > 0")
    if not abs(rho) <= 1:
        raise ParameterDomainError(f"|rho| must be <= 1, got {rho}")
    rho_p = math.sqrt(1.0 - rho * rho)

    def evaluate(t, x):
        m = x.shape[0]
        xs = x[:, 0]
        return Coefficients(
            b=(-b * x), a=np.full((m, 1, 1), a),
            r=r0 + r1 * np.maximum(-100.0, xs),
            mu=(sigma * (lambda0 + lambda1 * np.clip(xs, -100.0, 100.0)))[:, None],
            sigma=np.full((m, 1, 1), sigma), rho=np.full((m, 1, 1), rho),
            rho_p=np.full((m, 1, 1), rho_p),
        )

    c0 = max((lambda0 + lambda1 * 100.0) ** 2, (lambda0 - lambda1 * 100.0) ** 2)
    grid = np.concatenate([np.linspace(-150.0, 150.0, 601), np.linspace(-1.0, 1.0, 401)])
    return MarketModel(
        kind="linear_diffusion", k=1, n=1, x0=np.array([x0], dtype=float),
        evaluate=evaluate, domain=((-math.inf, math.inf),), scheme="exact_ou",
        params=dict(b=b, a=a, sigma=sigma, r0=r0, r1=r1, lambda0=lambda0,
                    lambda1=lambda1, rho=rho),
        c0_analytic=c0, constant_rate=(r1 == 0), sample_points=grid[:, None],
    )


def feller_holds(b: float, l: float, a: float) -> bool:
    return b * l > 0.5 * a * a


def make_heston(
    b: float, l: float, a: float, r0: float, r1: float, sigma_scale: float,
    lam: float, rho: float, x0: Optional[float] = None,
) -> MarketModel:
    """Square-root factor with ``sigma(x) = sigma_scale x`` and ``mu = sigma(x) lam``.

    The market price of risk is the constant ``lam``. A failing Feller
    condition only triggers a warning.
    """
    for name, val in dict(b=b, l=l, a=a, sigma_scale=sigma_scale, lam=lam).items():
        if not val > 0:
            raise ParameterDomainError(f"Heston parameter {name} must be > 0, got {val}")
    if not abs(rho) <= 1:
        raise ParameterDomainError(f"|rho| must be <= 1, got {rho}")
    if not feller_holds(b, l, a):
        warnings.warn(f"Feller condition fails: b*l={b * l} <= a^2/2={a * a / 2}", stacklevel=2)
    x0 = l if x0 is None else x0
    if not x0 > 0:
        raise ParameterDomainError(f"initial state must lie in (0, inf), got {x0}")
    rho_p = math.sqrt(1.0 - rho * rho)

    def evaluate(t, x):
        m = x.shape[0]
        xs = x[:, 0]
        xp = np.maximum(xs, 0.0)
        vol = sigma_scale * xs
        return Coefficients(
            b=(b * (l - xs))[:, None], a=(a * np.sqrt(xp))[:, None, None],
            r=r0 + r1 * xs, mu=(vol * lam)[:, None], sigma=vol[:, None, None],
            rho=np.full((m, 1, 1), rho), rho_p=np.full((m, 1, 1), rho_p),
        )

    grid = np.geomspace(1e-6, 1e3, 1000)
    return MarketModel(
        kind="heston", k=1, n=1, x0=np.array([x0], dtype=float), evaluate=evaluate,
        domain=((0.0, math.inf),), scheme="full_truncation",
        params=dict(b=b, l=l, a=a, r0=r0, r1=r1, sigma_scale=sigma_scale, lam=lam, rho=rho),
        c0_analytic=lam * lam, constant_rate=(r1 == 0), sample_points=grid[:, None],
    )


@dataclass(frozen=True)
class MarketBounds:
    """``C0`` bounds the squared price of risk, ``r_min <= 0`` bounds the rate,
    ``C_p`` bounds the norm of a bounded element of the p-space constraint set."""

    C0: float
    r_min: float
    C_p: float = 0.0


def market_bounds(model: MarketModel, sample_points=None, constraint=None, t: float = 0.0) -> MarketBounds:
    """Bounds over a sample of states.

    ``r_min`` is the smallest sampled rate, clamped to be at most 0. ``C0`` is
    the model's analytic bound when it declares one, otherwise the sampled
    maximum with 10% headroom. ``C_p`` is the largest sampled minimum norm of
    the p-space constraint set (0 when no constraint is given or 0 is
    admissible).
    """
    pts = model.sample_points if sample_points is None else np.asarray(sample_points, dtype=float)
    if pts is None or len(pts) == 0:
        raise ValueError("market_bounds needs a nonempty sample of states")
    pts = np.atleast_2d(pts)
    if pts.shape[1] != model.k:
        pts = pts.reshape(-1, model.k)
    coef = model.coefficients(t, pts)
    r_min = min(0.0, float(np.min(coef.r)))
    if model.c0_analytic is not None:
        c0 = float(model.c0_analytic)
    else:
        c0 = 1.1 * float(np.max(coef.price_of_risk_sq()))
    c_p = 0.0
    if constraint is not None:
        from .constraints import min_norm_p

        c_p = float(np.max(min_norm_p(constraint, coef.sigma)))
    return MarketBounds(C0=c0, r_min=r_min, C_p=c_p)
