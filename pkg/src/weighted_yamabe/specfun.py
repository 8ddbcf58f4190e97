"""Gamma-function constants: sharp Euclidean constant, bubble volume, sphere value.

Everything is assembled in log space so that large ``m + n`` does not
overflow ``Gamma``.
"""

from __future__ import annotations

import math

__all__ = [
    "DimensionalParameter",
    "as_dimension",
    "log_gamma",
    "lambda_euclidean",
    "bubble_volume",
    "sphere_constant",
    "ratio_F",
    "log_ratio_F",
    "log_ratio_H",
    "h_step_residual",
    "f_asymptotic_gap",
]


class DimensionalParameter(float):
    """Nonnegative real dimension ``m``; ``math.inf`` is the only infinite value."""

    def __new__(cls, value):
        v = float(value)
        if math.isnan(v) or v < 0:
            raise ValueError(f"dimensional parameter must be >= 0, got {value!r}")
        return super().__new__(cls, v)

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self)

    @property
    def value(self) -> float:
        return float(self)


def as_dimension(m) -> DimensionalParameter:
    return m if isinstance(m, DimensionalParameter) else DimensionalParameter(m)


def log_gamma(x: float) -> float:
    """Natural log of Gamma(x) for x > 0."""
    x = float(x)
    if not x > 0 or math.isinf(x):
        raise ValueError(f"log_gamma requires a finite positive argument, got {x!r}")
    return math.lgamma(x)


def _check_finite(m, n):
    m = as_dimension(m)
    if m.is_infinite:
        raise ValueError("m = inf has no finite-dimensional sharp constant")
    if int(n) != n or n < 3:
        raise ValueError(f"n must be an integer >= 3, got {n!r}")
    return float(m), int(n)


def lambda_euclidean(m, n) -> float:
    """Sharp constant of the weighted Yamabe quotient on flat R^n with v = 1."""
    m, n = _check_finite(m, n)
    p = 2 * m + n - 2
    log_val = (
        math.log(n * math.pi)
        + 2 * math.log(m + n - 2)
        - math.log(p)
        + (2 * m / n) * math.log(2 * (m + n - 1) / p)
        + (2 / n) * (log_gamma((2 * m + n) / 2) - log_gamma(m + n))
    )
    return math.exp(log_val)


def bubble_volume(m, n) -> float:
    """Integral of the bubble to the critical power; independent of tau."""
    m, n = _check_finite(m, n)
    log_val = (
        (n / 2) * math.log(math.pi)
        + (n / 2) * math.log((m + n - 2) ** 2 / (m + n - 1))
        + log_gamma((2 * m + n) / 2)
        - log_gamma(m + n)
    )
    return math.exp(log_val)


def sphere_constant(m, n) -> float:
    """Quotient of the constant function on the round unit sphere with v = 1."""
    m, n = _check_finite(m, n)
    log_val = (
        math.log(n * (n - 1) * (m + n - 2) * math.pi / (m + n - 1))
        + (2 / n) * (log_gamma(n / 2) - log_gamma(n))
    )
    return math.exp(log_val)


def _check_real(m, n):
    m, n = float(m), float(n)
    if not n > 2:
        raise ValueError(f"n must exceed 2, got {n!r}")
    if not m >= 0 or math.isinf(m):
        raise ValueError(f"m must be finite and >= 0, got {m!r}")
    return m, n


def log_ratio_F(m, n) -> float:
    m, n = _check_real(m, n)
    p = 2 * m + n - 2
    return (
        math.log((n - 1) * p / ((m + n - 1) * (m + n - 2)))
        + (2 * m / n) * math.log(p / (2 * (m + n - 1)))
        + (2 / n)
        * (
            log_gamma(m + n)
            + log_gamma(n / 2)
            - log_gamma((2 * m + n) / 2)
            - log_gamma(n)
        )
    )


def ratio_F(m, n) -> float:
    """Ratio of the round-sphere value of the quotient to the flat sharp constant."""
    return math.exp(log_ratio_F(m, n))


def log_ratio_H(m, n) -> float:
    """log H(m, n) where H = F^{n/2}."""
    return 0.5 * float(n) * log_ratio_F(m, n)


def h_step_residual(m, n) -> float:
    """Mismatch between log H(m, n+2) - log H(m, n) and its rational closed form."""
    m, n = _check_real(m, n)
    lhs = log_ratio_H(m, n + 2) - log_ratio_H(m, n)
    rhs = (n / 2) * math.log(
        (n + 1) * (2 * m + n) * (m + n - 1) * (m + n - 2)
        / ((m + n + 1) * (m + n) * (n - 1) * (2 * m + n - 2))
    ) + m * math.log((2 * m + n) * (m + n - 1) / ((m + n + 1) * (2 * m + n - 2)))
    return lhs - rhs


def f_asymptotic_gap(m, n) -> float:
    """Scaled remainder n^4 |log F + m(m-1)/(2 n^3)| of the large-n expansion."""
    m, n = _check_real(m, n)
    return n**4 * abs(log_ratio_F(m, n) + m * (m - 1) / (2 * n**3))
