"""Monte-Carlo simulation of the state, the correlated asset noise and wealth.

Every path owns a Philox stream keyed by ``seed`` and addressed by the path
index, so path ``j`` is the same whatever the total number of paths.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .markets import MarketModel
from .preferences import ParameterDomainError

HESTON_FLOOR = 1e-10


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError(f"horizon must be positive and finite, got {self.T}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"number of steps must be a positive integer, got {self.N}")
        object.__setattr__(self, "N", int(self.N))

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.dt


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PathSet:
    """Simulated state paths and the driving increments.

    ``X`` has shape ``(M, N+1, k)``, ``dW`` ``(M, N, k)`` and ``dW_perp``
    ``(M, N, n)``. Arrays are read-only.
    """

    grid: TimeGrid
    X: np.ndarray
    dW: np.ndarray
    dW_perp: np.ndarray
    seed: int
    floor_hits: int = 0

    @property
    def M(self) -> int:
        return self.X.shape[0]

    def state(self, i: int) -> np.ndarray:
        return self.X[:, i, :]

    def to_csv(self, path, max_paths: int | None = None) -> None:
        """Write ``path,step,t,X,dW,dWperp`` rows (first state/noise component)."""
        m = self.M if max_paths is None else min(self.M, max_paths)
        t = self.grid.times
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["path", "step", "t", "X", "dW", "dWperp"])
            for j in range(m):
                for i in range(self.grid.N + 1):
                    dw = self.dW[j, i, 0] if i < self.grid.N else 0.0
                    dp = self.dW_perp[j, i, 0] if i < self.grid.N else 0.0
                    w.writerow([j, i, f"{t[i]:.17g}", f"{self.X[j, i, 0]:.17g}", f"{dw:.17g}", f"{dp:.17g}"])


def path_normals(seed: int, M: int, size: int) -> np.ndarray:
    """Standard normals of shape ``(M, size)``, row ``j`` from its own stream."""
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    out = np.empty((M, size))
    for j in range(M):
        bitgen = np.random.Philox(key=seed, counter=[0, 0, 0, j])
        out[j] = np.random.Generator(bitgen).standard_normal(size)
    return out


def simulate_state(model: MarketModel, grid: TimeGrid, M: int, seed: int) -> PathSet:
    """Simulate ``M`` state paths on ``grid``.

    Black-Scholes paths stay at ``x0``; the Ornstein-Uhlenbeck factor uses
    its exact Gaussian transition driven by the same Brownian increment;
    the square-root factor uses full-truncation Euler followed by a floor.
    """
    if M < 1:
        raise ValueError("need at least one path")
    x0 = np.asarray(model.x0, dtype=float)
    if not model.in_domain(x0[None, :])[0]:
        raise ParameterDomainError(f"initial state {x0} lies outside the state domain")
    k, n, N, dt = model.k, model.n, grid.N, grid.dt
    z = path_normals(seed, M, N * (k + n)).reshape(M, N, k + n)
    dW = z[:, :, :k] * math.sqrt(dt)
    dWp = z[:, :, k:] * math.sqrt(dt)
    X = np.empty((M, N + 1, k))
    X[:, 0, :] = x0
    hits = 0
    if model.scheme == "constant":
        X[:] = x0
    elif model.scheme == "exact_ou":
        b, a = model.params["b"], model.params["a"]
        decay = math.exp(-b * dt)
        # std of the exact transition divided by sqrt(dt), so it multiplies dW
        scale = a * math.sqrt(-math.expm1(-2 * b * dt) / (2 * b * dt))
        for i in range(N):
            X[:, i + 1, :] = X[:, i, :] * decay + scale * dW[:, i, :]
    elif model.scheme == "full_truncation":
        b, l, a = model.params["b"], model.params["l"], model.params["a"]
        if b * dt > 1:
            warnings.warn(f"b*dt = {b * dt:.3g} > 1: the Euler step overshoots the mean level; "
                          "increase N", RuntimeWarning, stacklevel=2)
        for i in range(N):
            xp = np.maximum(X[:, i, :], 0.0)
            nxt = X[:, i, :] + b * (l - xp) * dt + a * np.sqrt(xp) * dW[:, i, :]
            low = nxt < HESTON_FLOOR
            hits += int(low.sum())
            X[:, i + 1, :] = np.where(low, HESTON_FLOOR, nxt)
    elif model.scheme == "euler":
        t = grid.times
        for i in range(N):
            c = model.coefficients(t[i], X[:, i, :])
            X[:, i + 1, :] = X[:, i, :] + c.b * dt + np.einsum("mij,mj->mi", c.a, dW[:, i, :])
    else:
        raise ValueError(f"unknown scheme {model.scheme!r}")
    return PathSet(grid=grid, X=_frozen(X), dW=_frozen(dW), dW_perp=_frozen(dWp),
                   seed=int(seed), floor_hits=hits)


def correlated_increment(rho, rho_perp, dW, dW_perp, tol: float = 1e-10) -> np.ndarray:
    """``dW^rho = rho dW + rho_perp dW_perp`` for a batch.

    ``rho`` is ``(M, n, k)`` (or ``(n, k)``), ``rho_perp`` ``(M, n, n)``.
    """
    rho = np.asarray(rho, dtype=float)
    rho_perp = np.asarray(rho_perp, dtype=float)
    gram = rho @ np.swapaxes(rho, -1, -2) + rho_perp @ np.swapaxes(rho_perp, -1, -2)
    eye = np.eye(gram.shape[-1])
    if np.max(np.abs(gram - eye)) > tol:
        raise ValueError("correlation loadings violate rho rho' + rho_perp rho_perp' = I")
    return (np.einsum("...ij,...j->...i", rho, np.asarray(dW, dtype=float))
            + np.einsum("...ij,...j->...i", rho_perp, np.asarray(dW_perp, dtype=float)))


Control = Union[np.ndarray, Callable[[float, np.ndarray], np.ndarray]]


def _control_at(ctrl, i, t, x, shape):
    if callable(ctrl):
        val = ctrl(t, x)
    else:
        arr = np.asarray(ctrl, dtype=float)
        val = arr if arr.ndim == 0 else arr[:, i]
    return np.broadcast_to(np.asarray(val, dtype=float), shape)


@dataclass(frozen=True)
class WealthPaths:
    """Wealth on the grid, plus the controls actually applied on each step."""

    W: np.ndarray
    c_hat: np.ndarray
    p: np.ndarray
    log_return: np.ndarray = field(repr=False)


def simulate_wealth(model: MarketModel, grid: TimeGrid, paths: PathSet, c_hat: Control,
                    p: Control, omega: float) -> WealthPaths:
    """Proportional-consumption wealth in log space.

    Controls are held at their left-point value over each step. ``c_hat`` and
    ``p`` are either arrays of shape ``(M, N)`` / ``(M, N, n)`` or callables
    ``(t, x) -> array``. The rate and the risk-premium loading are averaged
    over the two ends of the step.
    """
    if not omega > 0:
        raise ParameterDomainError(f"initial wealth must be positive, got {omega}")
    M, N, n, dt = paths.M, grid.N, model.n, grid.dt
    if paths.grid != grid:
        raise ValueError("path set was simulated on a different grid")
    t = grid.times
    logW = np.empty((M, N + 1))
    logW[:, 0] = math.log(omega)
    C = np.empty((M, N))
    P = np.empty((M, N, n))
    prev = model.coefficients(t[0], paths.state(0))
    for i in range(N):
        x = paths.state(i)
        nxt = model.coefficients(t[i + 1], paths.state(i + 1))
        ci = _control_at(c_hat, i, t[i], x, (M,))
        pi_ = _control_at(p, i, t[i], x, (M, n))
        if np.any(ci < 0):
            raise ParameterDomainError("consumption ratio must be nonnegative")
        lam_l = _sharpe(prev)
        lam_r = _sharpe(nxt)
        drift = (0.5 * (prev.r + nxt.r) + np.einsum("mi,mi->m", pi_, 0.5 * (lam_l + lam_r))
                 - ci - 0.5 * np.einsum("mi,mi->m", pi_, pi_))
        dWr = correlated_increment(prev.rho, prev.rho_p, paths.dW[:, i, :], paths.dW_perp[:, i, :])
        logW[:, i + 1] = logW[:, i] + drift * dt + np.einsum("mi,mi->m", pi_, dWr)
        C[:, i] = ci
        P[:, i] = pi_
        prev = nxt
    lr = np.diff(logW, axis=1)
    return WealthPaths(W=_frozen(np.exp(logW)), c_hat=_frozen(C), p=_frozen(P), log_return=_frozen(lr))


def _sharpe(c) -> np.ndarray:
    """``sigma' Sigma^{-1} mu`` per batch entry."""
    sol = np.linalg.solve(c.Sigma, c.mu[..., None])[..., 0]
    return np.einsum("mji,mj->mi", c.sigma, sol)
