"""Closed, possibly non-convex, constraint sets.

Sets are stated in the space where the user thinks about them: fractions of
wealth ``pi`` for the portfolio and consumption-to-wealth ratios for
consumption. The generator works with ``p = sigma' pi``; :func:`project_p`
projects onto the image set ``{sigma' pi : pi in set}`` for a batch of
volatility matrices.

When several points of a non-convex set are nearest, the lexicographically
smallest one is returned.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class DimensionError(ValueError):
    pass


class ConstraintSet:
    dim: int = 1
    convex: bool = True

    # -- batch helpers -------------------------------------------------
    def _points(self, u):
        u = np.asarray(u, dtype=float)
        if self.dim == 1:
            if u.ndim == 0:
                return u.reshape(1, 1), "scalar"
            if u.ndim == 1:
                return u[:, None], "flat"
            if u.ndim == 2 and u.shape[1] == 1:
                return u, "batch"
        else:
            if u.ndim == 1 and u.shape[0] == self.dim:
                return u[None, :], "single"
            if u.ndim == 2 and u.shape[1] == self.dim:
                return u, "batch"
        raise DimensionError(f"point of shape {u.shape} does not match set dimension {self.dim}")

    @staticmethod
    def _restore(p, how):
        if how == "scalar":
            return float(p[0, 0])
        if how == "flat":
            return p[:, 0]
        if how == "single":
            return p[0]
        return p

    def _project(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _contains(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # -- public API ----------------------------------------------------
    def project(self, u):
        """Nearest point(s) of the set."""
        pts, how = self._points(u)
        return self._restore(self._project(pts), how)

    def distance(self, u):
        pts, how = self._points(u)
        d = np.linalg.norm(pts - self._project(pts), axis=1)
        if how in ("scalar", "single"):
            return float(d[0])
        return d

    def contains(self, u):
        pts, how = self._points(u)
        inside = self._contains(pts)
        if how in ("scalar", "single"):
            return bool(inside[0])
        return inside

    def bounded_element(self):
        """Minimum-norm element of the set and its norm."""
        zero = np.zeros(self.dim)
        p = self._project(zero[None, :])[0]
        norm = float(np.linalg.norm(p))
        if self.dim == 1:
            return float(p[0]), norm
        return p, norm


@dataclass(frozen=True, eq=False)
class FullSpace(ConstraintSet):
    dim: int = 1

    def _project(self, u):
        return u.copy()

    def _contains(self, u):
        return np.ones(u.shape[0], dtype=bool)

    def __repr__(self):
        return "full"


@dataclass(frozen=True, eq=False)
class Interval(ConstraintSet):
    lo: float
    hi: float

    def __post_init__(self):
        if math.isnan(self.lo) or math.isnan(self.hi) or self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    def _project(self, u):
        return np.clip(u, self.lo, self.hi)

    def _contains(self, u):
        return (u[:, 0] >= self.lo) & (u[:, 0] <= self.hi)

    def __repr__(self):
        return f"interval {float(self.lo)!r} {float(self.hi)!r}"


@dataclass(frozen=True, eq=False)
class Box(ConstraintSet):
    lows: tuple
    highs: tuple

    def __post_init__(self):
        lo = np.asarray(self.lows, dtype=float)
        hi = np.asarray(self.highs, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1 or np.any(lo > hi):
            raise ValueError("box needs matching bounds with lows <= highs")
        object.__setattr__(self, "lows", tuple(lo))
        object.__setattr__(self, "highs", tuple(hi))
        object.__setattr__(self, "dim", len(lo))

    def _project(self, u):
        return np.clip(u, np.asarray(self.lows), np.asarray(self.highs))

    def _contains(self, u):
        return np.all((u >= np.asarray(self.lows)) & (u <= np.asarray(self.highs)), axis=1)


@dataclass(frozen=True, eq=False)
class UnionOfIntervals(ConstraintSet):
    """Finite union of closed intervals; overlapping pieces are merged."""

    intervals: tuple
    convex = False

    def __post_init__(self):
        pieces = sorted((float(lo), float(hi)) for lo, hi in self.intervals)
        if not pieces:
            raise ValueError("union needs at least one interval")
        merged = []
        for lo, hi in pieces:
            if lo > hi:
                raise ValueError(f"empty interval [{lo}, {hi}]")
            if merged and lo <= merged[-1][1]:
                merged[-1] = (merged[-1][0], max(hi, merged[-1][1]))
            else:
                merged.append((lo, hi))
        object.__setattr__(self, "intervals", tuple(merged))

    @property
    def _bounds(self):
        arr = np.asarray(self.intervals, dtype=float)
        return arr[:, 0], arr[:, 1]

    def _project(self, u):
        lo, hi = self._bounds
        cand = np.clip(u, lo[None, :], hi[None, :])
        gap = np.abs(cand - u)
        idx = np.argmin(gap, axis=1)
        return cand[np.arange(u.shape[0]), idx][:, None]

    def _contains(self, u):
        lo, hi = self._bounds
        return np.any((u >= lo[None, :]) & (u <= hi[None, :]), axis=1)

    def __repr__(self):
        return "union " + " ".join(f"[{float(lo)!r} {float(hi)!r}]" for lo, hi in self.intervals)


@dataclass(frozen=True, eq=False)
class FiniteSet(ConstraintSet):
    """Finitely many points, stored in lexicographic order."""

    points: tuple
    convex = False

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.size == 0:
            raise ValueError("finite set needs at least one point")
        order = np.lexsort(pts.T[::-1])
        pts = np.unique(pts[order], axis=0)
        object.__setattr__(self, "points", tuple(tuple(float(v) for v in row) for row in pts))
        object.__setattr__(self, "dim", pts.shape[1])

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=float)

    def _project(self, u):
        pts = self.array
        d = np.linalg.norm(u[:, None, :] - pts[None, :, :], axis=2)
        return pts[np.argmin(d, axis=1)]

    def _contains(self, u):
        pts = self.array
        return np.any(np.all(u[:, None, :] == pts[None, :, :], axis=2), axis=1)

    def __repr__(self):
        if self.dim == 1:
            return "finite " + " ".join(repr(float(p[0])) for p in self.points)
        return f"FiniteSet({self.points!r})"


# -- change of variable ------------------------------------------------

def pi_to_p(sigma, pi):
    """``p = sigma' pi`` (batched over a leading axis when given)."""
    sigma = np.asarray(sigma, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if sigma.ndim <= 1 and pi.ndim <= 1 and sigma.size == 1:
        return sigma.reshape(()) * pi
    return np.einsum("...ji,...j->...i", sigma, pi)


def p_to_pi(sigma, p):
    """Inverse of :func:`pi_to_p`; raises ``numpy.linalg.LinAlgError`` if ``sigma`` is singular."""
    sigma = np.asarray(sigma, dtype=float)
    p = np.asarray(p, dtype=float)
    if sigma.ndim <= 1 and p.ndim <= 1 and sigma.size == 1:
        s = float(sigma.reshape(()))
        if s == 0.0:
            raise np.linalg.LinAlgError("singular volatility")
        return p / s
    return np.linalg.solve(np.swapaxes(sigma, -1, -2), p[..., None])[..., 0]


def _diagonal(sigma):
    off = sigma - np.einsum("mii->mi", sigma)[:, :, None] * np.eye(sigma.shape[1])
    return np.all(off == 0.0)


def project_p(cset: ConstraintSet, sigma: np.ndarray, u: np.ndarray):
    """Project ``u`` onto ``{sigma' pi : pi in cset}`` for each batch entry.

    Parameters
    ----------
    sigma : (M, n, n) array
    u : (M, n) array

    Returns
    -------
    p : (M, n) array of nearest points
    dist : (M,) array of distances
    """
    _, p, dist = project_with_pi(cset, sigma, u)
    return p, dist


def project_with_pi(cset: ConstraintSet, sigma: np.ndarray, u: np.ndarray):
    """Like :func:`project_p` but also return the fraction ``pi`` with ``p = sigma' pi``.

    For constrained sets ``pi`` is taken from the set itself, so it is an
    exact member rather than the result of solving ``sigma' pi = p``.
    """
    sigma = np.asarray(sigma, dtype=float)
    u = np.asarray(u, dtype=float)
    if u.shape[1] != cset.dim:
        raise DimensionError(f"point dimension {u.shape[1]} != set dimension {cset.dim}")
    if isinstance(cset, FullSpace):
        p = u.copy()
        pi = p_to_pi(sigma, p)
    elif isinstance(cset, FiniteSet):
        pts = cset.array
        images = np.einsum("mji,pj->mpi", sigma, pts)
        d = np.linalg.norm(u[:, None, :] - images, axis=2)
        idx = np.argmin(d, axis=1)
        p = images[np.arange(u.shape[0]), idx]
        pi = pts[idx]
    elif cset.dim == 1 or _diagonal(sigma):
        s = np.einsum("mii->mi", sigma)
        if np.any(s == 0.0):
            raise np.linalg.LinAlgError("singular volatility")
        pi = cset._project(u / s)
        p = s * pi
    else:
        raise NotImplementedError("projection of a box through a non-diagonal volatility")
    return pi, p, np.linalg.norm(u - p, axis=1)


def min_norm_p(cset: ConstraintSet, sigma: np.ndarray) -> np.ndarray:
    """Norm of the smallest element of the p-space image, per batch entry."""
    sigma = np.asarray(sigma, dtype=float)
    zero = np.zeros((sigma.shape[0], cset.dim))
    return project_p(cset, sigma, zero)[1]


# -- text syntax -------------------------------------------------------

def _num(tok: str) -> float:
    return float(tok)


def parse_constraint(text: str) -> ConstraintSet:
    """Parse ``full``, ``interval lo hi``, ``union [lo hi] [lo hi] ...`` or ``finite p1 p2 ...``."""
    words = text.strip().split(None, 1)
    if not words:
        raise ValueError("empty constraint")
    head = words[0].lower()
    rest = words[1] if len(words) > 1 else ""
    try:
        if head == "full":
            if rest.strip():
                raise ValueError("'full' takes no arguments")
            return FullSpace()
        if head == "interval":
            toks = rest.split()
            if len(toks) != 2:
                raise ValueError("'interval' needs exactly two bounds")
            return Interval(_num(toks[0]), _num(toks[1]))
        if head == "union":
            groups = re.findall(r"\[([^\]]*)\]", rest)
            if not groups or re.sub(r"\[[^\]]*\]", "", rest).strip():
                raise ValueError("'union' needs bracketed pairs like [0 0.1] [0.4 0.5]")
            pieces = []
            for g in groups:
                toks = g.split()
                if len(toks) != 2:
                    raise ValueError(f"bad union piece [{g}]")
                pieces.append((_num(toks[0]), _num(toks[1])))
            return UnionOfIntervals(tuple(pieces))
        if head == "finite":
            toks = rest.split()
            if not toks:
                raise ValueError("'finite' needs at least one point")
            return FiniteSet(tuple(_num(t) for t in toks))
    except ValueError as exc:
        raise ValueError(f"bad constraint {text!r}: {exc}") from None
    raise ValueError(f"unknown constraint kind {head!r} in {text!r}")


def constraint_text(cset: ConstraintSet) -> str:
    return repr(cset)


def as_set(obj) -> ConstraintSet:
    if isinstance(obj, ConstraintSet):
        return obj
    if isinstance(obj, str):
        return parse_constraint(obj)
    if isinstance(obj, Sequence) and len(obj) == 2:
        return Interval(float(obj[0]), float(obj[1]))
    raise TypeError(f"cannot interpret {obj!r} as a constraint set")
