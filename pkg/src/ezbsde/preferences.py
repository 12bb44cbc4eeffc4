"""Epstein-Zin preferences, the aggregator and the bequest utility.

Only the regime ``gamma > 1``, ``psi > 1`` is supported; there ``theta < 0``
and every utility value is strictly negative.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ParameterDomainError(ValueError):
    """Raised when an input falls outside the domain of a formula."""


def theta_of(gamma: float, psi: float) -> float:
    """Return ``(1 - gamma) / (1 - 1/psi)``, strictly negative on the domain."""
    if not gamma > 1:
        raise ParameterDomainError(f"gamma must be > 1, got {gamma}")
    if not psi > 1:
        raise ParameterDomainError(f"psi must be > 1, got {psi}")
    return (1.0 - gamma) / (1.0 - 1.0 / psi)


@dataclass(frozen=True)
class Preferences:
    """Discount rate ``delta``, risk aversion ``gamma`` and EIS ``psi``."""

    delta: float
    gamma: float
    psi: float
    theta: float = field(init=False)

    def __post_init__(self):
        if not self.delta > 0:
            raise ParameterDomainError(f"delta must be > 0, got {self.delta}")
        object.__setattr__(self, "theta", theta_of(self.gamma, self.psi))

    def replace(self, **changes) -> "Preferences":
        kw = {"delta": self.delta, "gamma": self.gamma, "psi": self.psi}
        kw.update(changes)
        return Preferences(**kw)


def aggregator_f(c, v, prefs: Preferences):
    """Epstein-Zin aggregator in its power form.

    ``f(c, v) = delta c^(1-1/psi) / (1-1/psi) * ((1-gamma) v)^(1-1/theta)
    - delta theta v``. Works elementwise on arrays.

    Raises
    ------
    ParameterDomainError
        If any ``c < 0`` or any ``v >= 0``.
    """
    c = np.asarray(c, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(c < 0):
        raise ParameterDomainError("consumption must be nonnegative")
    if np.any(v >= 0):
        raise ParameterDomainError("utility argument must be strictly negative")
    d, g, psi, th = prefs.delta, prefs.gamma, prefs.psi, prefs.theta
    q = 1.0 - 1.0 / psi
    out = d * c**q / q * ((1.0 - g) * v) ** (1.0 - 1.0 / th) - d * th * v
    return out[()] if out.ndim == 0 else out


def aggregator_f_ratio_form(c, v, prefs: Preferences):
    """Same aggregator written through the certainty-equivalent ratio.

    Kept as an independent evaluation route for cross-checking
    :func:`aggregator_f`.
    """
    c = np.asarray(c, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(c < 0) or np.any(v >= 0):
        raise ParameterDomainError("need c >= 0 and v < 0")
    d, g, psi = prefs.delta, prefs.gamma, prefs.psi
    q = 1.0 - 1.0 / psi
    w = (1.0 - g) * v
    out = d * w / q * ((c / w ** (1.0 / (1.0 - g))) ** q - 1.0)
    return out[()] if out.ndim == 0 else out


def bequest_utility(c, gamma: float):
    """CRRA bequest utility ``c^(1-gamma) / (1-gamma)``."""
    if not gamma > 1:
        raise ParameterDomainError(f"gamma must be > 1, got {gamma}")
    c = np.asarray(c, dtype=float)
    if np.any(c <= 0):
        raise ParameterDomainError("bequest utility needs c > 0")
    out = c ** (1.0 - gamma) / (1.0 - gamma)
    return out[()] if out.ndim == 0 else out
