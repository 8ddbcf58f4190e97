"""Weighted Yamabe quotient, W-functional and related identities on model spaces."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .geometry import (
    ModelSpace,
    RadialField,
    _values,
    conformal_change,
    weighted_laplacian,
    weighted_scalar_curvature,
)
from .specfun import as_dimension

__all__ = [
    "QuotientBreakdown",
    "WReport",
    "ScalingOptimum",
    "conformal_coefficient",
    "dirichlet_energy",
    "conformal_laplacian",
    "quotient_Q",
    "w_functional",
    "optimal_tau",
    "optimize_scaling",
    "nu_lambda_convert",
    "el_residual",
    "el_w_residual",
    "el_w_multiplier",
    "increment_m_gap",
    "phi_bound",
    "wcl_monotonicity_gap",
    "continuity_in_m",
    "exponents",
]


class Exponents(NamedTuple):
    intermediate: float  # 2(m+n-1)/(m+n-2)
    volume: float  # 2(m+n)/(m+n-2)
    q_intermediate: float  # 2m/n
    q_volume: float  # (2m+n-2)/n


def exponents(m, n) -> Exponents:
    m = float(m)
    return Exponents(
        2 * (m + n - 1) / (m + n - 2),
        2 * (m + n) / (m + n - 2),
        2 * m / n,
        (2 * m + n - 2) / n,
    )


def conformal_coefficient(m, n) -> float:
    m = as_dimension(m)
    if m.is_infinite:
        return 0.25
    return (float(m) + n - 2) / (4 * (float(m) + n - 1))


@dataclass(frozen=True)
class QuotientBreakdown:
    """Ingredients of the quotient.

    For ``m = inf`` both masses hold the squared L2 norm and ``entropy`` holds
    ``-(2/n) int (w^2/|w|^2) log(w^2 e^{-phi}/|w|^2)``.
    """

    energy: float
    mass_intermediate: float
    mass_volume: float
    q_value: float
    m: float
    n: int
    entropy: float | None = None

    def reassemble(self) -> float:
        if math.isinf(self.m):
            return self.energy / self.mass_volume * math.exp(self.entropy)
        return _assemble(self.energy, self.mass_intermediate, self.mass_volume, exponents(self.m, self.n))

    def to_dict(self) -> dict:
        out = {k: asdict(self)[k] for k in ("energy", "mass_intermediate", "mass_volume", "q_value")}
        if self.entropy is not None:
            out["entropy"] = self.entropy
        return out


@dataclass(frozen=True)
class WReport:
    w_value: float
    tau: float

    def to_dict(self) -> dict:
        return {"w_value": self.w_value, "tau": self.tau}


def _assemble(energy: float, intermediate: float, volume: float, e: Exponents) -> float:
    # log space: the mass powers overflow separately for large m
    return energy * math.exp(e.q_intermediate * math.log(intermediate) - e.q_volume * math.log(volume))


def _nonzero(space: ModelSpace, w) -> np.ndarray:
    vals = _values(space, w)
    if not np.any(vals != 0):
        raise ValueError("the field is identically zero")
    return vals


def conformal_laplacian(space: ModelSpace, w) -> np.ndarray:
    """Strong form of -Delta_phi w + c R_phi^m w."""
    vals = _values(space, w)
    c = conformal_coefficient(space.m, space.n)
    return -weighted_laplacian(space, vals).values + c * weighted_scalar_curvature(space).values * vals


def dirichlet_energy(space: ModelSpace, w) -> float:
    """int |grad w|^2 + c R_phi^m w^2 against v^m dvol."""
    vals = _nonzero(space, w)
    c = conformal_coefficient(space.m, space.n)
    # on flat grids the far-field weights amplify absolute round-off, so positive
    # fields are differentiated through log w there
    dw = space.d_rho_stable(vals) if space.kind == "euclidean" else space.d_rho(vals)
    grad_sq = np.exp(-2 * space.log_factor) * dw**2
    integrand = grad_sq + c * weighted_scalar_curvature(space).values * vals**2
    return float(space.measure_weights @ integrand)


def _masses(space: ModelSpace, vals: np.ndarray) -> tuple[float, float]:
    e = exponents(space.m, space.n)
    a = np.abs(vals)
    inv_v = 1.0 / space.density.values
    intermediate = float(space.measure_weights @ (a ** e.intermediate * inv_v))
    volume = float(space.measure_weights @ a ** e.volume)
    return intermediate, volume


def _entropy_integral(space: ModelSpace, vals: np.ndarray, scale: float) -> float:
    """int w^2 log(scale w^2 e^{-phi}) dmu with 0 log 0 = 0."""
    w2 = vals**2
    arg = scale * w2 * np.exp(-space.phi)
    logs = np.zeros_like(w2)
    pos = arg > 0
    logs[pos] = np.log(arg[pos])
    return float(space.measure_weights @ (w2 * logs))


def quotient_Q(space: ModelSpace, w) -> QuotientBreakdown:
    """Weighted Yamabe quotient, using |w| in the fractional powers."""
    vals = _nonzero(space, w)
    n = space.n
    energy = dirichlet_energy(space, vals)
    if space.m.is_infinite:
        norm_sq = float(space.measure_weights @ vals**2)
        entropy = -(2.0 / n) * _entropy_integral(space, vals, 1.0 / norm_sq) / norm_sq
        q = energy / norm_sq * math.exp(entropy)
        return QuotientBreakdown(energy, norm_sq, norm_sq, q, math.inf, n, entropy)
    intermediate, volume = _masses(space, vals)
    e = exponents(space.m, n)
    q = _assemble(energy, intermediate, volume, e)
    return QuotientBreakdown(energy, intermediate, volume, q, float(space.m), n)


def w_functional(space: ModelSpace, w, tau: float) -> WReport:
    """W(w, tau); no volume normalization is applied."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    vals = _nonzero(space, w)
    n = space.n
    energy = dirichlet_energy(space, vals)
    if space.m.is_infinite:
        value = tau * energy - _entropy_integral(space, vals, tau ** (n / 2))
        return WReport(float(value), float(tau))
    m = float(space.m)
    intermediate, volume = _masses(space, vals)
    value = tau ** (m / (m + n)) * energy + m * (tau ** (-n / (2 * (m + n))) * intermediate - volume)
    return WReport(float(value), float(tau))


class ScalingOptimum(NamedTuple):
    infimum: float
    argmin: float
    degenerate: bool


def optimize_scaling(A: float, B: float, m: float, n: int) -> ScalingOptimum:
    """inf over x > 0 of A x^{2m} + m B x^{-n} in closed form."""
    if A < 0 or B < 0:
        raise ValueError("A and B must be nonnegative")
    if not m > 0:
        raise ValueError("m must be positive")
    if A == 0 or B == 0:
        return ScalingOptimum(0.0, math.inf if A == 0 and B > 0 else 0.0, True)
    infimum = (2 * m + n) / 2 * (2 * A * B ** (2 * m / n) / n) ** (n / (2 * m + n))
    argmin = (n * B / (2 * A)) ** (1 / (2 * m + n))
    return ScalingOptimum(infimum, argmin, False)


def optimal_tau(energy: float, intermediate: float, m: float, n: int) -> float:
    """Scale minimizing W(w, .) for a unit-volume w with positive energy."""
    if not energy > 0:
        raise ValueError("optimal tau needs positive energy")
    return (n * intermediate / (2 * energy)) ** (2 * (m + n) / (2 * m + n))


def nu_lambda_convert(value: float, m: float, n: int, direction: str = "forward") -> float:
    """forward: Lambda -> nu; inverse: nu -> Lambda."""
    m = float(m)
    if not m > 0 or math.isinf(m):
        raise ValueError("conversion needs finite m > 0")
    if direction == "forward":
        if not value > 0:
            raise ValueError("Lambda must be positive; nonpositive Lambda gives nu = -inf")
        return (2 * m + n) / 2 * (2 * value / n) ** (n / (2 * m + n)) - m
    if direction == "inverse":
        if not value > -m:
            raise ValueError("nu must exceed -m")
        return n / 2 * (2 * (value + m) / (2 * m + n)) ** ((2 * m + n) / n)
    raise ValueError("direction must be 'forward' or 'inverse'")


def _require_normalized(space: ModelSpace, vals: np.ndarray, tol: float = 1e-8) -> None:
    if np.any(vals <= 0):
        raise ValueError("the Euler-Lagrange residual requires a positive field")
    volume = _masses(space, vals)[1]
    if abs(volume - 1.0) > tol:
        raise ValueError(f"field is not volume-normalized (volume = {volume:.3e})")


def _weighted_norm(space: ModelSpace, vals: np.ndarray) -> float:
    return math.sqrt(float(space.measure_weights @ vals**2))


def el_residual(space: ModelSpace, w, lam: float) -> tuple[RadialField, float]:
    """Strong residual of the quotient's Euler-Lagrange equation and its L2 norm."""
    if space.m.is_infinite:
        raise ValueError("el_residual requires finite m")
    vals = _values(space, w)
    _require_normalized(space, vals)
    m, n = float(space.m), space.n
    intermediate, _ = _masses(space, vals)
    c1 = 2 * m * (m + n - 1) * lam / (n * (m + n - 2)) * intermediate ** (-(2 * m + n) / n)
    c2 = (2 * m + n - 2) * (m + n) * lam / (n * (m + n - 2)) * intermediate ** (-2 * m / n)
    res = (
        conformal_laplacian(space, vals)
        + c1 * vals ** ((m + n) / (m + n - 2)) / space.density.values
        - c2 * vals ** ((m + n + 2) / (m + n - 2))
    )
    return RadialField(res, space.grid.key), _weighted_norm(space, res)


def el_w_multiplier(space: ModelSpace, w, tau: float) -> float:
    """Constant c1 obtained by testing the W Euler-Lagrange equation against w."""
    m, n = float(space.m), space.n
    vals = _values(space, w)
    energy = dirichlet_energy(space, vals)
    intermediate, volume = _masses(space, vals)
    k = m * (m + n - 1) / (m + n - 2)
    return (tau ** (m / (m + n)) * energy + k * tau ** (-n / (2 * (m + n))) * intermediate) / volume


def el_w_residual(space: ModelSpace, w, tau: float, c1: float | None = None) -> float:
    """L2 norm of the strong residual of the W Euler-Lagrange equation at fixed tau.

    With ``c1=None`` the multiplier is taken from :func:`el_w_multiplier`.
    """
    if space.m.is_infinite:
        raise ValueError("el_w_residual requires finite m")
    if not tau > 0:
        raise ValueError("tau must be positive")
    vals = _values(space, w)
    _require_normalized(space, vals)
    m, n = float(space.m), space.n
    if c1 is None:
        c1 = el_w_multiplier(space, vals, tau)
    k = m * (m + n - 1) / (m + n - 2)
    res = (
        tau ** (m / (m + n)) * conformal_laplacian(space, vals)
        + k * tau ** (-n / (2 * (m + n))) * vals ** ((m + n) / (m + n - 2)) / space.density.values
        - c1 * vals ** ((m + n + 2) / (m + n - 2))
    )
    return _weighted_norm(space, res)


def _same_geometry(a: ModelSpace, b: ModelSpace) -> None:
    if a.grid.key != b.grid.key or a.n != b.n or a.kind != b.kind:
        raise ValueError("spaces do not share a grid")
    if not np.allclose(a.log_factor, b.log_factor, rtol=0, atol=1e-14) or not np.allclose(
        a.curvature, b.curvature, rtol=1e-14, atol=1e-14
    ):
        raise ValueError("spaces do not share a metric")


def _same_density(a: ModelSpace, b: ModelSpace) -> None:
    if not np.allclose(a.density.values, b.density.values, rtol=1e-12, atol=0):
        raise ValueError("spaces do not share the density v")


def increment_m_gap(space_m: ModelSpace, space_m_plus_1: ModelSpace, w) -> float:
    """(L^{m+1} W, W) - (m+n-1)^2/((m+n)(m+n-2)) (L^m w, w^{(m+n)/(m+n-2)} v).

    ``W = w^{(m+n-1)/(m+n-2)}``.  The left side is evaluated in weak form, the
    right side in strong form.
    """
    _same_geometry(space_m, space_m_plus_1)
    _same_density(space_m, space_m_plus_1)
    m, n = float(space_m.m), space_m.n
    if abs(float(space_m_plus_1.m) - (m + 1)) > 1e-14:
        raise ValueError("second space must have dimensional parameter m + 1")
    vals = _values(space_m, w)
    if np.any(vals <= 0):
        raise ValueError("w must be positive")
    lifted = vals ** ((m + n - 1) / (m + n - 2))
    lhs = dirichlet_energy(space_m_plus_1, lifted)
    coef = (m + n - 1) ** 2 / ((m + n) * (m + n - 2))
    rhs_integrand = conformal_laplacian(space_m, vals) * vals ** ((m + n) / (m + n - 2)) * space_m.density.values
    rhs = coef * float(space_m.measure_weights @ rhs_integrand)
    return lhs - rhs


def phi_bound(x: float, m: float, n: int) -> tuple[float, float, float]:
    """Phi(x), its maximum over x > 0 and the maximizer."""
    if not x > 0:
        raise ValueError("x must be positive")
    m = float(m)
    value = (2 * m + n - 2) * (m + n) * x ** (-2 * m / n) - 2 * m * (m + n - 1) * x ** (-(2 * m + n) / n)
    ratio = (2 * m + n - 2) * (m + n) / ((2 * m + n) * (m + n - 1))
    max_value = (2 * m + n - 2) * (m + n) * n / (2 * m + n) * ratio ** (2 * m / n)
    return float(value), float(max_value), float(1.0 / ratio)


def _normalize_density(space: ModelSpace) -> ModelSpace:
    """Conformally change to the gauge v = 1, i.e. metric v^{-2} g."""
    m, n = float(space.m), space.n
    if m == 0:
        return space
    sigma = -(m + n - 2) * np.log(space.density.values)
    return conformal_change(space, sigma)


def wcl_monotonicity_gap(space_m: ModelSpace, space_m_plus_k: ModelSpace, w, k: float,
                         gauge: str = "normalized") -> float:
    """(L^m w, w) - coef (L^{m+k} w, w) with coef < 1.

    ``gauge='normalized'`` first passes both spaces to the common metric
    ``v^{-2} g`` with ``v = 1``, where the inequality holds for every w.
    ``gauge='native'`` evaluates on the given spaces as they are.
    """
    _same_geometry(space_m, space_m_plus_k)
    _same_density(space_m, space_m_plus_k)
    m, n = float(space_m.m), space_m.n
    if not k > 0 or abs(float(space_m_plus_k.m) - (m + k)) > 1e-12:
        raise ValueError("second space must have dimensional parameter m + k with k > 0")
    if gauge == "normalized":
        space_m = _normalize_density(space_m)
        space_m_plus_k = _normalize_density(space_m_plus_k)
    elif gauge != "native":
        raise ValueError("gauge must be 'normalized' or 'native'")
    coef = (m + k + n - 1) * (m + n - 2) / ((m + k + n - 2) * (m + n - 1))
    return dirichlet_energy(space_m, w) - coef * dirichlet_energy(space_m_plus_k, w)


def continuity_in_m(space_k: ModelSpace, space_inf: ModelSpace, w) -> float:
    """|Q_k(w) - Q_inf(w)| for two spaces sharing g and phi."""
    _same_geometry(space_k, space_inf)
    if not space_inf.m.is_infinite or space_k.m.is_infinite:
        raise ValueError("need one finite-m space and one m = inf space")
    if not np.allclose(space_k.phi, space_inf.phi, rtol=0, atol=1e-14):
        raise ValueError("spaces must share phi")
    return abs(quotient_Q(space_k, w).q_value - quotient_Q(space_inf, w).q_value)
