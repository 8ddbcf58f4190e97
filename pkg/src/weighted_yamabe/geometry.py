"""Rotationally symmetric model spaces sampled on spectral radial grids.

A :class:`ModelSpace` is a metric ``g = exp(2U) (drho^2 + S(rho)^2 dOmega^2)``
with ``S = r`` (flat model) or ``S = sin(theta)`` (round model), together with a
weight ``exp(-phi)`` and a dimensional parameter ``m``.  The density ``v`` is
related to ``phi`` by ``v^m = exp(-phi)``; for ``m = inf`` the density is stored
directly as ``exp(-phi)``.

Grids
-----
Flat model: Gauss-Legendre nodes in ``y`` on ``[-Y, Y]``, mapped by
``r = L sinh(y)``.  Radial fields are even in ``y``, so only the positive half
is stored and differentiation uses the even/odd folded barycentric matrices.

Round model: midpoint nodes in a periodic variable ``s`` on ``(0, pi)`` with a
cosine basis, mapped by ``theta = 2 arctan(L tan(s/2))``.  For ``L < 1`` the map
concentrates nodes at the north pole ``theta = 0``.
"""

from __future__ import annotations

import csv
import functools
import hashlib
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.special import eval_legendre, roots_legendre

from .specfun import DimensionalParameter, as_dimension, log_gamma

__all__ = [
    "RadialGrid",
    "RadialField",
    "ModelSpace",
    "make_space",
    "integrate",
    "differentiate",
    "weighted_laplacian",
    "weighted_scalar_curvature",
    "conformal_change",
    "rescale_metric",
    "change_dimension",
    "field_from_function",
    "read_field_csv",
    "write_field_csv",
    "sphere_area",
]

DEFAULT_NODES = 512
DEFAULT_RMAX = 50.0
FLAT_TAIL_TOL = 1e-14
ROUND_TAIL_TOL = 1e-14


def sphere_area(k: int) -> float:
    """Volume of the unit k-sphere S^k."""
    return 2.0 * math.pi ** ((k + 1) / 2) / math.exp(log_gamma((k + 1) / 2))


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Nodes, radial quadrature and differentiation in one coordinate chart.

    ``weights`` integrate ``f(rho) S(rho)^(n-1) drho`` (area factor excluded).
    ``d_even`` differentiates an even field with respect to ``rho`` (result odd)
    and ``d_odd`` differentiates an odd field (result even).
    """

    kind: str
    n: int
    nodes: np.ndarray
    weights: np.ndarray
    d_even: np.ndarray
    d_odd: np.ndarray
    shape_ratio: np.ndarray  # S'/S at the nodes
    extent: float  # truncation radius (flat) or pi (round)
    scale: float
    key: str
    modal: np.ndarray  # node values -> expansion coefficients (cosine or even Legendre)

    @property
    def size(self) -> int:
        return self.nodes.size

    def resolution_tail(self, f: np.ndarray, fraction: float = 0.25) -> float:
        """Largest coefficient among the top ``fraction`` of modes, relative to the largest."""
        coef = np.abs(self.modal @ f)
        cut = int(round((1 - fraction) * coef.size))
        return float(coef[cut:].max() / coef.max())


def _barycentric_matrix(x: np.ndarray, bary: np.ndarray) -> np.ndarray:
    dx = x[:, None] - x[None, :]
    np.fill_diagonal(dx, 1.0)
    d = (bary[None, :] / bary[:, None]) / dx
    np.fill_diagonal(d, 0.0)
    np.fill_diagonal(d, -d.sum(axis=1))
    return d


def _barycentric_interp(x: np.ndarray, bary: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Matrix evaluating the interpolant through nodes ``x`` at points ``t``."""
    diff = t[:, None] - x[None, :]
    hit = diff == 0
    diff[hit] = 1.0
    terms = bary[None, :] / diff
    mat = terms / terms.sum(axis=1, keepdims=True)
    rows = hit.any(axis=1)
    mat[rows] = hit[rows].astype(float)
    return mat


@functools.lru_cache(maxsize=32)
def _flat_grid(n: int, count: int, half_width: float, scale: float) -> RadialGrid:
    x, w = roots_legendre(2 * count)
    bary = np.sqrt((1.0 - x**2) * w) * (-1.0) ** np.arange(2 * count)
    d = _barycentric_matrix(x, bary)
    pos = slice(count, 2 * count)
    mirror = np.arange(count - 1, -1, -1)
    y = half_width * x[pos]
    dr_dy = scale * np.cosh(y)
    r = scale * np.sinh(y)
    d_even = (d[pos, count:] + d[pos, mirror]) / (half_width * dr_dy[:, None])
    d_odd = (d[pos, count:] - d[pos, mirror]) / (half_width * dr_dy[:, None])
    if n % 2:
        weights = half_width * w[pos] * dr_dy * r ** (n - 1)
    else:
        # |r|^(n-1) has a kink at y = 0 for even n.  Write it as a smooth even
        # factor times |tanh y| and integrate only the bounded factor exactly.
        xf, wf = roots_legendre(3 * count)
        yf = 0.5 * half_width * (xf + 1)
        interp = _barycentric_interp(x, bary, yf / half_width)
        fold = interp[:, count:] + interp[:, mirror]
        moments = (0.5 * half_width * wf * np.tanh(yf)) @ fold
        weights = moments * scale * np.cosh(y) * r ** (n - 2) * dr_dy
    key = _grid_key("flat", n, count, half_width, scale)
    # even Legendre coefficients by the folded Gauss rule
    k = np.arange(count)
    legendre = eval_legendre(2 * k[:, None], x[pos][None, :])
    modal = (4 * k[:, None] + 1) * legendre * w[pos][None, :]
    return RadialGrid("euclidean", n, r, weights, d_even, d_odd, 1.0 / r,
                      float(scale * math.sinh(half_width)), scale, key, modal)


@functools.lru_cache(maxsize=32)
def _round_grid(n: int, count: int, scale: float) -> RadialGrid:
    j = np.arange(count)
    s = math.pi * (j + 0.5) / count
    k_even = np.arange(count)
    x = np.cos(s)
    sin_s = np.sin(s)
    # even fields are polynomials in x = cos(s): Chebyshev-Gauss barycentric form
    d_x = _barycentric_matrix(x, (-1.0) ** j * sin_s)
    ds_even = -sin_s[:, None] * d_x
    # odd fields are sin(s) p(x); d/ds = x p - (1 - x^2) p_x
    ds_odd = (np.diag(x) - (1 - x**2)[:, None] * d_x) / sin_s[None, :]
    cos_inv = np.linalg.inv(np.cos(np.outer(s, k_even)))

    t = np.tan(s / 2)
    theta = 2.0 * np.arctan(scale * t)
    dtheta_ds = 2.0 * scale / ((1 + scale**2) + (1 - scale**2) * np.cos(s))

    # moments of cos(ks) sin^(n-1)(s) on (0, pi), integrand entire in s
    xg, wg = roots_legendre(4 * count + 4 * n)
    sg = 0.5 * math.pi * (xg + 1)
    wg = 0.5 * math.pi * wg
    moments = np.cos(np.outer(k_even, sg)) @ (wg * np.sin(sg) ** (n - 1))
    base = moments @ cos_inv  # weights for h(s) sin^(n-1)(s)
    weights = base * dtheta_ds**n  # sin(theta)^(n-1) dtheta = sin(s)^(n-1) theta'^n ds
    key = _grid_key("round", n, count, scale)
    return RadialGrid("sphere", n, theta, weights,
                      ds_even / dtheta_ds[:, None], ds_odd / dtheta_ds[:, None],
                      1.0 / np.tan(theta), math.pi, scale, key, cos_inv)


def _grid_key(*parts) -> str:
    return hashlib.sha1(repr(parts).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# fields


@dataclass(frozen=True, eq=False)
class RadialField:
    """Samples of a radial function on the nodes of one grid."""

    values: np.ndarray
    grid_key: str

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1:
            raise ValueError("field values must be one-dimensional")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


def _values(space: "ModelSpace", f) -> np.ndarray:
    if isinstance(f, RadialField):
        if f.grid_key != space.grid.key:
            raise ValueError("field is not aligned with this space's grid")
        vals = f.values
    else:
        vals = np.asarray(f, dtype=float)
        if vals.ndim == 0:
            vals = np.full(space.grid.size, float(vals))
    if vals.shape != (space.grid.size,):
        raise ValueError(
            f"field has {vals.size} samples but the space has {space.grid.size} nodes"
        )
    return vals


# ---------------------------------------------------------------------------
# spaces


@dataclass(frozen=True, eq=False)
class ModelSpace:
    """Immutable rotationally symmetric smooth metric measure space.

    ``log_factor`` is U with ``g = exp(2U) g_model``; ``phi`` is the weight
    exponent; ``curvature`` is the scalar curvature of ``g``.
    """

    kind: str
    n: int
    m: DimensionalParameter
    grid: RadialGrid
    log_factor: np.ndarray
    phi: np.ndarray
    curvature: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def node_count(self) -> int:
        return self.grid.size

    def field(self, values) -> RadialField:
        return RadialField(_values(self, values), self.grid.key)

    @cached_property
    def weights(self) -> np.ndarray:
        """Riemannian volume weights of g (area factor included)."""
        return sphere_area(self.n - 1) * self.grid.weights * np.exp(self.n * self.log_factor)

    @cached_property
    def measure_weights(self) -> np.ndarray:
        """Weights of the measure v^m dvol = exp(-phi) dvol."""
        return self.weights * np.exp(-self.phi)

    @cached_property
    def density(self) -> RadialField:
        """v for finite m; exp(-phi) for m = inf; identically 1 for m = 0."""
        if self.m.is_infinite:
            vals = np.exp(-self.phi)
        elif self.m == 0:
            vals = np.ones(self.node_count)
        else:
            vals = np.exp(-self.phi / float(self.m))
        return RadialField(vals, self.grid.key)

    @cached_property
    def _log_factor_dr(self) -> np.ndarray:
        return self.grid.d_even @ self.log_factor

    def d_rho(self, f) -> np.ndarray:
        """Derivative of an even field with respect to the model coordinate."""
        return self.grid.d_even @ _values(self, f)

    def d_rho_stable(self, f) -> np.ndarray:
        """d_rho, through log f when f > 0 so round-off stays relative to f."""
        vals = _values(self, f)
        if np.all(vals > 0):
            return vals * (self.grid.d_even @ np.log(vals))
        return self.grid.d_even @ vals

    def grad_sq(self, f) -> np.ndarray:
        df = self.d_rho(f)
        return np.exp(-2 * self.log_factor) * df**2

    def grad_dot(self, f, h) -> np.ndarray:
        return np.exp(-2 * self.log_factor) * self.d_rho(f) * self.d_rho(h)

    def laplacian(self, f) -> np.ndarray:
        """Laplace-Beltrami operator of g applied to a radial field."""
        df = self.d_rho(f)
        d2f = self.grid.d_odd @ df
        n = self.n
        return np.exp(-2 * self.log_factor) * (
            d2f + ((n - 1) * self.grid.shape_ratio + (n - 2) * self._log_factor_dr) * df
        )

    def laplacian_positive(self, f) -> np.ndarray:
        """Laplacian of a strictly positive field through log f.

        Round-off stays relative to f, which matters where f has decayed by
        many orders of magnitude.
        """
        vals = _values(self, f)
        if np.any(vals <= 0):
            raise ValueError("field must be strictly positive")
        ell = np.log(vals)
        return vals * (self.laplacian(ell) + self.grad_sq(ell))

    @cached_property
    def total_measure(self) -> float:
        return float(self.measure_weights.sum())

    @cached_property
    def total_volume(self) -> float:
        return float(self.weights.sum())


def field_from_function(space: ModelSpace, fn: Callable[[np.ndarray], np.ndarray]) -> RadialField:
    """Sample ``fn`` at the space's nodes (theta on the sphere, r on flat space)."""
    return space.field(np.broadcast_to(fn(space.nodes), space.nodes.shape).astype(float))


def _flat_radius(m: DimensionalParameter, n: int, rmax: float, auto_extend: bool) -> float:
    if not auto_extend or m.is_infinite:
        return rmax
    p = 2 * float(m) + n - 2
    tail = rmax ** (-p) / p
    if tail <= FLAT_TAIL_TOL:
        return rmax
    return (1.0 / (FLAT_TAIL_TOL * p)) ** (1.0 / p)


def make_space(
    kind: str,
    n: int,
    m,
    density=None,
    node_count: int = DEFAULT_NODES,
    truncation_radius: float | None = None,
    *,
    phi=None,
    scale: float | None = None,
    auto_extend: bool = True,
) -> ModelSpace:
    """Build a round unit sphere or flat Euclidean model space.

    ``density`` is v (finite m) or exp(-phi) (m = inf), given as a callable of the
    model coordinate, an array of node samples, or ``None`` for 1.  Alternatively
    ``phi`` may be given directly.  On flat space the truncation radius defaults
    to 50 and is enlarged when the tail of the slowest-decaying bubble integrand
    exceeds 1e-14 (disable with ``auto_extend=False``).
    """
    if kind in ("euclidean_ball", "flat"):
        kind = "euclidean"
    if kind not in ("sphere", "euclidean"):
        raise ValueError(f"unknown space kind {kind!r}")
    if int(n) != n or n < 3:
        raise ValueError(f"n must be an integer >= 3, got {n!r}")
    n = int(n)
    m = as_dimension(m)
    if int(node_count) != node_count or node_count < 16:
        raise ValueError("node_count must be an integer >= 16")
    node_count = int(node_count)

    if kind == "euclidean":
        rmax = DEFAULT_RMAX if truncation_radius is None else float(truncation_radius)
        if not rmax > 0:
            raise ValueError("truncation_radius must be positive")
        rmax = _flat_radius(m, n, rmax, auto_extend)
        if scale is None:
            scale = 1.0 if m.is_infinite else (float(m) + n - 2) / math.sqrt(float(m) + n - 1)
        grid = _flat_grid(n, node_count, float(math.asinh(rmax / scale)), float(scale))
        log_factor = np.zeros(node_count)
        curvature = np.zeros(node_count)
    else:
        if truncation_radius is not None:
            raise ValueError("truncation_radius applies to euclidean spaces only")
        scale = 1.0 if scale is None else float(scale)
        if not scale > 0:
            raise ValueError("scale must be positive")
        grid = _round_grid(n, node_count, scale)
        log_factor = np.zeros(node_count)
        curvature = np.full(node_count, float(n * (n - 1)))

    phi_vals = _phi_from_source(grid, m, density, phi)
    return ModelSpace(kind, n, m, grid, log_factor, phi_vals, curvature)


def _phi_from_source(grid: RadialGrid, m: DimensionalParameter, density, phi) -> np.ndarray:
    if density is not None and phi is not None:
        raise ValueError("give either density or phi, not both")

    def sample(source):
        if isinstance(source, RadialField):
            if source.grid_key != grid.key:
                raise ValueError("density field is not aligned with the grid")
            return source.values
        if callable(source):
            return np.broadcast_to(np.asarray(source(grid.nodes), dtype=float), grid.nodes.shape).copy()
        vals = np.asarray(source, dtype=float)
        if vals.ndim == 0:
            return np.full(grid.size, float(vals))
        if vals.shape != (grid.size,):
            raise ValueError("density samples do not match the node count")
        return vals

    if phi is not None:
        phi_vals = sample(phi)
        if not np.all(np.isfinite(phi_vals)):
            raise ValueError("phi must be finite")
    elif density is None:
        phi_vals = np.zeros(grid.size)
    else:
        v = sample(density)
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ValueError("density must be strictly positive")
        if m == 0:
            if np.max(np.abs(v - 1.0)) > 1e-14:
                raise ValueError("m = 0 requires the density to be identically 1")
            phi_vals = np.zeros(grid.size)
        elif m.is_infinite:
            phi_vals = -np.log(v)
        else:
            phi_vals = -float(m) * np.log(v)
    if m == 0 and np.max(np.abs(phi_vals)) > 1e-14:
        raise ValueError("m = 0 requires phi to vanish")
    return phi_vals


def change_dimension(space: ModelSpace, m, keep: str = "density") -> ModelSpace:
    """Same geometry with a new ``m``; keep either the density v or the weight phi."""
    m = as_dimension(m)
    if keep == "phi":
        phi = space.phi.copy()
        if m == 0 and np.max(np.abs(phi)) > 1e-14:
            raise ValueError("m = 0 requires phi to vanish")
    elif keep == "density":
        if space.m.is_infinite or m.is_infinite:
            raise ValueError("keep='density' needs finite m on both sides")
        v = space.density.values
        if m == 0:
            if np.max(np.abs(v - 1.0)) > 1e-14:
                raise ValueError("m = 0 requires the density to be identically 1")
            phi = np.zeros_like(v)
        else:
            phi = -float(m) * np.log(v)
    else:
        raise ValueError("keep must be 'density' or 'phi'")
    return ModelSpace(space.kind, space.n, m, space.grid, space.log_factor, phi,
                      space.curvature, dict(space.meta))


# ---------------------------------------------------------------------------
# operations


def integrate(space: ModelSpace, f) -> float:
    """Integral of f against v^m dvol."""
    return float(space.measure_weights @ _values(space, f))


def differentiate(space: ModelSpace, f) -> RadialField:
    """Derivative with respect to the model coordinate (theta or r)."""
    return RadialField(space.d_rho(f), space.grid.key)


def weighted_laplacian(space: ModelSpace, f) -> RadialField:
    """Delta f - <grad phi, grad f>."""
    f = _values(space, f)
    lap = space.laplacian_positive(f) if np.all(f > 0) else space.laplacian(f)
    return RadialField(lap - space.grad_dot(space.phi, f), space.grid.key)


def weighted_scalar_curvature(space: ModelSpace) -> RadialField:
    """R + 2 Delta phi - ((m+1)/m) |grad phi|^2 (coefficient 1 when m = inf)."""
    m = space.m
    if m == 0:
        return RadialField(space.curvature.copy(), space.grid.key)
    coef = 1.0 if m.is_infinite else (float(m) + 1) / float(m)
    vals = space.curvature + 2 * space.laplacian(space.phi) - coef * space.grad_sq(space.phi)
    return RadialField(vals, space.grid.key)


def _with_metric(space: ModelSpace, du: np.ndarray, phi: np.ndarray) -> ModelSpace:
    """Pass to exp(2 du) g, updating the scalar curvature by the conformal law."""
    n = space.n
    curvature = np.exp(-2 * du) * (
        space.curvature - 2 * (n - 1) * space.laplacian(du) - (n - 1) * (n - 2) * space.grad_sq(du)
    )
    return ModelSpace(space.kind, n, space.m, space.grid, space.log_factor + du, phi,
                      curvature, dict(space.meta))


def conformal_change(space: ModelSpace, sigma) -> ModelSpace:
    """Weighted conformal change by sigma.

    The metric becomes exp(2 sigma / (m+n-2)) g and the measure gains the factor
    exp((m+n) sigma / (m+n-2)).
    """
    if space.m.is_infinite:
        raise ValueError("conformal_change requires finite m")
    s = _values(space, sigma)
    m = float(space.m)
    du = s / (m + space.n - 2)
    return _with_metric(space, du, space.phi - m * du)


def rescale_metric(space: ModelSpace, c: float) -> ModelSpace:
    """Replace g by c g, keeping phi (hence v) fixed."""
    if not c > 0:
        raise ValueError("metric scale must be positive")
    du = np.full(space.node_count, 0.5 * math.log(c))
    return _with_metric(space, du, space.phi.copy())


# ---------------------------------------------------------------------------
# CSV


def write_field_csv(path, space: ModelSpace, f, header: list[str] | None = None) -> None:
    vals = _values(space, f)
    with open(path, "w", newline="") as fh:
        for line in header or []:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["node", "value"])
        for x, v in zip(space.nodes, vals):
            writer.writerow([f"{x:.17g}", f"{v:.17g}"])


def read_field_csv(path, space: ModelSpace) -> RadialField:
    """Read a (node, value) CSV; nodes must match the space's nodes."""
    nodes, vals = [], []
    with open(path, newline="") as fh:
        rows = (line for line in fh if not line.lstrip().startswith("#"))
        for row in csv.reader(rows):
            if not row or row[0].strip() == "node":
                continue
            nodes.append(float(row[0]))
            vals.append(float(row[1]))
    nodes = np.asarray(nodes)
    if nodes.shape != space.nodes.shape or not np.allclose(nodes, space.nodes, rtol=1e-12, atol=0):
        raise ValueError("CSV nodes do not match the space's grid")
    return space.field(np.asarray(vals))
