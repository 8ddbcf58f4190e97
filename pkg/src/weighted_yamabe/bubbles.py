"""Closed-form extremals on flat space, their moments and PDE residuals."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import betainc

from .geometry import ModelSpace, RadialField, make_space
from .functionals import exponents, quotient_Q
from .specfun import as_dimension, log_gamma

__all__ = [
    "Bubble",
    "BubbleMoments",
    "MomentMismatch",
    "bubble_profile",
    "bubble_derivative",
    "epsilon_profile",
    "bubble_field",
    "bubble_pde_residual",
    "gamma_moment",
    "bubble_moments",
    "bubble_mass_fraction",
    "unit_volume_critical_point",
]


class MomentMismatch(RuntimeError):
    """Closed-form and quadrature moments disagree; the grid is misconfigured."""


@dataclass(frozen=True, init=False)
class Bubble:
    """Radial extremal centred at the origin, fixed by exactly one of tau, epsilon."""

    m: float
    n: int
    tau: float

    def __init__(self, m, n, tau: float | None = None, epsilon: float | None = None):
        md = as_dimension(m)
        if md.is_infinite:
            raise ValueError("bubbles need finite m")
        if int(n) != n or n < 3:
            raise ValueError("n must be an integer >= 3")
        if (tau is None) == (epsilon is None):
            raise ValueError("give exactly one of tau and epsilon")
        m, n = float(md), int(n)
        if epsilon is not None:
            if not epsilon > 0:
                raise ValueError("epsilon must be positive")
            tau = epsilon**2 * (m + n - 1) / (m + n - 2) ** 2
        if not tau > 0:
            raise ValueError("tau must be positive")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "tau", float(tau))

    @property
    def epsilon(self) -> float:
        m, n = self.m, self.n
        return math.sqrt((m + n - 2) ** 2 * self.tau / (m + n - 1))

    @property
    def power(self) -> float:
        return (self.m + self.n - 2) / 2

    @property
    def amplitude(self) -> float:
        m, n = self.m, self.n
        return self.tau ** (-n * (m + n - 2) / (4 * (m + n)))

    @property
    def beta(self) -> float:
        m, n = self.m, self.n
        return (m + n - 1) / ((m + n - 2) ** 2 * self.tau)


def bubble_profile(b: Bubble, r) -> np.ndarray | float:
    r = np.asarray(r, dtype=float)
    out = b.amplitude * (1 + b.beta * r**2) ** (-b.power)
    return float(out) if out.ndim == 0 else out


def bubble_derivative(b: Bubble, r) -> np.ndarray | float:
    r = np.asarray(r, dtype=float)
    out = -2 * b.power * b.beta * r * b.amplitude * (1 + b.beta * r**2) ** (-b.power - 1)
    return float(out) if out.ndim == 0 else out


def epsilon_profile(b: Bubble, r) -> np.ndarray | float:
    """(2 eps / (eps^2 + r^2))^{(m+n-2)/2}."""
    r = np.asarray(r, dtype=float)
    eps = b.epsilon
    out = (2 * eps / (eps**2 + r**2)) ** b.power
    return float(out) if out.ndim == 0 else out


def bubble_field(b: Bubble, space: ModelSpace) -> RadialField:
    if space.kind != "euclidean":
        raise ValueError("bubbles live on flat space")
    return space.field(bubble_profile(b, space.nodes))


def bubble_pde_residual(b: Bubble, space: ModelSpace) -> float:
    """Sup over nodes of the residual of the bubble equation with the numerical Laplacian."""
    if space.kind != "euclidean":
        raise ValueError("the bubble equation is posed on flat space")
    if np.any(space.phi != 0) or np.any(space.log_factor != 0):
        raise ValueError("the bubble equation needs the flat metric with v = 1")
    m, n = b.m, b.n
    w = bubble_profile(b, space.nodes)
    lap = space.laplacian_positive(w)
    res = (
        -b.tau ** (m / (m + n)) * lap
        + m * (m + n - 1) / (m + n - 2) * b.tau ** (-n / (2 * (m + n))) * w ** ((m + n) / (m + n - 2))
        - (m + n) * (m + n - 1) / (m + n - 2) * w ** ((m + n + 2) / (m + n - 2))
    )
    return float(np.max(np.abs(res)))


def gamma_moment(m2: float, k: float, l: float, a: float, tau: float) -> float:
    """int over R^{2 m2} of |y|^{2l} (a + |y|^2/tau)^{-(2 m2 + k)} dy in closed form.

    Converges iff m2 + l > 0 and m2 + k - l > 0.
    """
    if not m2 > 0 or not a > 0 or not tau > 0:
        raise ValueError("m2, a and tau must be positive")
    if not (m2 + l > 0 and m2 + k - l > 0):
        raise ValueError("divergent moment: need m2 + l > 0 and m2 + k - l > 0")
    log_val = (
        m2 * math.log(math.pi)
        + log_gamma(m2 + l)
        + log_gamma(m2 + k - l)
        + (m2 + l) * math.log(tau)
        - log_gamma(m2)
        - log_gamma(2 * m2 + k)
        - (m2 + k - l) * math.log(a)
    )
    return math.exp(log_val)


class BubbleMoments(NamedTuple):
    volume: float
    intermediate_mass: float
    dirichlet: float

    def quotient(self, m: float, n: int) -> float:
        e = exponents(m, n)
        return self.dirichlet * self.intermediate_mass ** e.q_intermediate / self.volume ** e.q_volume


def _closed_moments(b: Bubble) -> BubbleMoments:
    m, n = b.m, b.n
    e = exponents(m, n)
    h = n / 2  # R^n viewed as R^{2h}
    t = 1 / b.beta
    volume = b.amplitude ** e.volume * gamma_moment(h, m, 0, 1.0, t)
    intermediate = b.amplitude ** e.intermediate * gamma_moment(h, m - 1, 0, 1.0, t)
    dirichlet = 4 * b.amplitude**2 * b.power**2 * b.beta**2 * gamma_moment(h, m, 1, 1.0, t)
    return BubbleMoments(volume, intermediate, dirichlet)


@functools.lru_cache(maxsize=64)
def _default_space(m: float, n: int) -> ModelSpace:
    return make_space("euclidean", n, m)


def bubble_moments(b: Bubble, space: ModelSpace | None = None, rtol: float = 1e-8) -> BubbleMoments:
    """Closed-form (volume, intermediate mass, Dirichlet energy), cross-checked by quadrature.

    Raises :class:`MomentMismatch` when the quadrature route disagrees by more
    than ``rtol``.  Pass ``rtol=None`` to skip the check.
    """
    closed = _closed_moments(b)
    if rtol is None:
        return closed
    if space is None:
        space = _default_space(b.m, b.n)
    quad = quotient_Q(space, bubble_profile(b, space.nodes))
    pairs = {
        "volume": (closed.volume, quad.mass_volume),
        "intermediate_mass": (closed.intermediate_mass, quad.mass_intermediate),
        "dirichlet": (closed.dirichlet, quad.energy),
    }
    for name, (c, q) in pairs.items():
        if abs(q / c - 1) > rtol:
            raise MomentMismatch(f"{name}: closed form {c:.17g} vs quadrature {q:.17g}")
    return closed


def bubble_mass_fraction(b: Bubble, radius: float) -> float:
    """Fraction of the critical-power mass inside the ball of the given radius."""
    t = b.beta * radius**2 / (1 + b.beta * radius**2)
    return float(betainc(b.n / 2, b.m + b.n / 2, t))


def unit_volume_critical_point(b: Bubble) -> tuple[float, float, float]:
    """(s, mu, c1) with s w(mu r) of unit volume and critical for W at the same tau."""
    m, n = b.m, b.n
    volume = _closed_moments(b).volume
    s = volume ** (-(m + n - 2) / (2 * m + n))
    mu = s ** (1 / (m + n - 2))
    c1 = (m + n) * (m + n - 1) / (m + n - 2) * volume ** (2 / (2 * m + n))
    return s, mu, c1
