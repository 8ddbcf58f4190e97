"""Lift of a radial field on M to a warped-bubble field on M x R^{2m}.

For ``w > 0`` on the base and ``tau > 0`` the lift is

    f(x, s) = (w(x)^{-2/(m+n-2)} + s^2/tau)^{-(2m+n-2)/2},   s = |y|, y in R^{2m}.

Its classical (m = 0) Yamabe quotient in dimension ``N = n + 2m`` is evaluated by
product quadrature.  Each fiber is sampled in the scaled variable
``sigma = s / sqrt(a(x) tau)`` with ``a = w^{-2/(m+n-2)}``, which keeps every
fiber profile on the same grid.
"""

from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import roots_legendre

from .functionals import conformal_coefficient, dirichlet_energy, quotient_Q
from .geometry import ModelSpace, _values, change_dimension, sphere_area
from .specfun import lambda_euclidean, log_gamma

__all__ = [
    "LiftField",
    "LiftCheck",
    "FiberGrid",
    "lift",
    "lift_quotient",
    "lift_quotient_check",
    "lift_constant",
    "lift_equality_tau",
    "lift_volume_closed_form",
    "lift_volume_quadrature",
    "product_bound_check",
    "write_lift_csv",
]

FIBER_NODES = 160
FIBER_SIGMA_MAX = 1e6


@dataclass(frozen=True, eq=False)
class FiberGrid:
    """Gauss-Legendre rule for int_0^inf g(sigma) sigma^{2m-1} dsigma via sigma = sinh(t)."""

    sigma: np.ndarray
    weights: np.ndarray


@functools.lru_cache(maxsize=16)
def _fiber_grid(half_dim: float, count: int = FIBER_NODES, sigma_max: float = FIBER_SIGMA_MAX) -> FiberGrid:
    t_max = math.asinh(sigma_max)
    x, w = roots_legendre(count)
    t = 0.5 * t_max * (x + 1)
    sigma = np.sinh(t)
    weights = 0.5 * t_max * w * np.cosh(t) * sigma ** (2 * half_dim - 1)
    return FiberGrid(sigma, weights)


def _check_half_dim(m: float) -> float:
    m = float(m)
    if not m > 0 or abs(2 * m - round(2 * m)) > 1e-12:
        raise ValueError("the fiber dimension 2m must be a positive integer")
    return m


@dataclass(frozen=True, eq=False)
class LiftField:
    """Samples of the lift on (base node) x (fiber node)."""

    base: ModelSpace
    half_dim: float
    tau: float
    w: np.ndarray
    fiber_nodes: np.ndarray  # shape (base nodes, fiber nodes): the radius s
    values: np.ndarray  # same shape

    @property
    def dimension(self) -> int:
        return int(round(self.base.n + 2 * self.half_dim))

    def evaluate(self, i, s) -> np.ndarray:
        """Lift at base node index ``i`` and fiber radius ``s`` from the stored w, tau."""
        m, n = self.half_dim, self.base.n
        a = self.w[i] ** (-2 / (m + n - 2))
        return (a + np.asarray(s) ** 2 / self.tau) ** (-(2 * m + n - 2) / 2)


def _base_checks(space: ModelSpace, w, tau: float) -> np.ndarray:
    if not tau > 0:
        raise ValueError("tau must be positive")
    if np.any(space.phi != 0):
        raise ValueError("the lift is defined for base density v = 1")
    vals = _values(space, w)
    if np.any(vals <= 0):
        raise ValueError("the lift needs a strictly positive field")
    return vals


def lift(space: ModelSpace, w, tau: float, m: float | None = None) -> LiftField:
    """Lift ``w`` using fiber half-dimension ``m`` (default: the space's m)."""
    m = _check_half_dim(space.m if m is None else m)
    vals = _base_checks(space, w, tau)
    n = space.n
    a = vals ** (-2 / (m + n - 2))
    fib = _fiber_grid(m)
    s = np.sqrt(a * tau)[:, None] * fib.sigma[None, :]
    values = (a[:, None] * (1 + fib.sigma[None, :] ** 2)) ** (-(2 * m + n - 2) / 2)
    return LiftField(space, m, float(tau), vals, s, values)


class LiftParts(NamedTuple):
    gradient: float
    curvature: float
    volume: float
    quotient: float


def _lift_integrals(space: ModelSpace, vals: np.ndarray, tau: float, m: float) -> LiftParts:
    n = space.n
    big_n = n + 2 * m
    k = (big_n - 2) / 2
    fib = _fiber_grid(m)
    a = vals ** (-2 / (m + n - 2))
    # d a / d rho through log w (a spans many decades)
    da = -2 / (m + n - 2) * a * space.d_rho(np.log(vals))
    grad_a_sq = np.exp(-2 * space.log_factor) * da**2
    sig2 = fib.sigma**2
    base = 1 + sig2  # (a + s^2/tau) = a (1 + sigma^2)
    jac = (a * tau) ** m  # ds^{2m-1} ds = (a tau)^m dsigma^{2m-1} dsigma
    area = sphere_area(int(round(2 * m)) - 1)

    def fiber(power, extra=None):
        g = base ** (-power) if extra is None else extra * base ** (-power)
        return area * (fib.weights @ g)

    # |d_x f|^2 = k^2 |grad a|^2 (a + s^2/tau)^{-(N)}
    grad_x = k**2 * grad_a_sq * a ** (-big_n) * fiber(big_n)
    # |d_s f|^2 = k^2 (2 s / tau)^2 (a + s^2/tau)^{-N} = 4 k^2 a sigma^2 / tau (a(1+sigma^2))^{-N}
    grad_s = 4 * k**2 * a / tau * a ** (-big_n) * fiber(big_n, sig2)
    f2 = a ** (-(big_n - 2)) * fiber(big_n - 2)
    fcrit = a ** (-big_n) * fiber(big_n)
    w_base = space.weights
    gradient = float(w_base @ (jac * (grad_x + grad_s)))
    curvature = float(w_base @ (jac * space.curvature * f2))
    volume = float(w_base @ (jac * fcrit))
    c = (big_n - 2) / (4 * (big_n - 1))
    q = (gradient + c * curvature) / volume ** ((big_n - 2) / big_n)
    return LiftParts(gradient, curvature, volume, q)


def lift_quotient(space: ModelSpace, w, tau: float, m: float | None = None) -> float:
    """Classical Yamabe quotient of the lift in dimension n + 2m."""
    m = _check_half_dim(space.m if m is None else m)
    vals = _base_checks(space, w, tau)
    return _lift_integrals(space, vals, tau, m).quotient


def lift_volume_closed_form(space: ModelSpace, w, tau: float, m: float | None = None) -> float:
    """pi^m tau^m Gamma(m+n)/Gamma(2m+n) times the base critical mass of w."""
    m = _check_half_dim(space.m if m is None else m)
    vals = _base_checks(space, w, tau)
    n = space.n
    base_mass = float(space.weights @ vals ** (2 * (m + n) / (m + n - 2)))
    return math.exp(m * math.log(math.pi * tau) + log_gamma(m + n) - log_gamma(2 * m + n)) * base_mass


def lift_volume_quadrature(space: ModelSpace, w, tau: float, m: float | None = None) -> float:
    m = _check_half_dim(space.m if m is None else m)
    vals = _base_checks(space, w, tau)
    return _lift_integrals(space, vals, tau, m).volume


def lift_constant(m: float, n: int) -> float:
    """Constant C in the lower bound for the lifted quotient."""
    m = float(m)
    p = 2 * m + n
    return math.exp(
        math.log(p * (p - 2))
        + (2 / p) * (m * math.log(math.pi) + log_gamma(m + n) - log_gamma(2 * m + n))
        + (2 * m / p) * math.log((p - 2) / (2 * (m + n - 1)))
    )


def _base_parts(space: ModelSpace, vals: np.ndarray, m: float) -> tuple[float, float, float]:
    """Energy with the conformal coefficient for m, unweighted intermediate mass, Q(w)."""
    base_m = change_dimension(space, m, keep="phi")
    energy = dirichlet_energy(base_m, vals)
    q = quotient_Q(base_m, vals)
    return energy, q.mass_intermediate, q.q_value


def lift_equality_tau(space: ModelSpace, w, m: float | None = None) -> float:
    """Scale at which the lower bound for the lifted quotient is attained.

    Minimizing tau^{2m/(2m+n)} E + m (m+n-2)^2/(m+n-1) tau^{-n/(2m+n)} I over
    tau gives tau = n (m+n-2)^2 I / (2 (m+n-1) E).
    """
    m = _check_half_dim(space.m if m is None else m)
    vals = _base_checks(space, w, 1.0)
    energy, intermediate, _ = _base_parts(space, vals, m)
    if not energy > 0:
        raise ValueError("the base energy must be positive")
    n = space.n
    return n * (m + n - 2) ** 2 * intermediate / (2 * (m + n - 1) * energy)


class LiftCheck(NamedTuple):
    lhs: float
    rhs: float
    gap: float


class NonpositiveEnergy(ValueError):
    """The base energy is not positive, so the lift bound does not apply."""


def lift_quotient_check(space: ModelSpace, w, tau: float, m: float | None = None) -> LiftCheck:
    """Compare Q(lift) with C ((2m+n-2)/(n (m+n-2)^2) Q(w))^{n/(2m+n)}."""
    m = _check_half_dim(space.m if m is None else m)
    vals = _base_checks(space, w, tau)
    n = space.n
    energy, _, q_base = _base_parts(space, vals, m)
    if not energy > 0:
        raise NonpositiveEnergy("the base energy (L w, w) must be positive")
    lhs = _lift_integrals(space, vals, tau, m).quotient
    rhs = lift_constant(m, n) * ((2 * m + n - 2) / (n * (m + n - 2) ** 2) * q_base) ** (n / (2 * m + n))
    return LiftCheck(lhs, rhs, lhs - rhs)


def product_bound_check(space: ModelSpace, w, m: float | None = None) -> tuple[float, float]:
    """(Q(w)/Lambda_{m,n}, (Q(f)/Lambda_{0,n+2m})^{(2m+n)/n}) with f lifted at the equality tau."""
    m = _check_half_dim(space.m if m is None else m)
    vals = _base_checks(space, w, 1.0)
    n = space.n
    _, _, q_base = _base_parts(space, vals, m)
    tau = lift_equality_tau(space, vals, m)
    q_lift = _lift_integrals(space, vals, tau, m).quotient
    big_n = int(round(n + 2 * m))
    return q_base / lambda_euclidean(m, n), (q_lift / lambda_euclidean(0, big_n)) ** ((2 * m + n) / n)


def write_lift_csv(path, field: LiftField, header: list[str] | None = None) -> None:
    with open(path, "w", newline="") as fh:
        for line in header or []:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["base_node", "fiber_node", "value"])
        for i, x in enumerate(field.base.nodes):
            for s, v in zip(field.fiber_nodes[i], field.values[i]):
                writer.writerow([f"{x:.17g}", f"{s:.17g}", f"{v:.17g}"])
