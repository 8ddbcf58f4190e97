"""Descent for the quotient and for W(., tau) over positive unit-volume radial fields.

Both problems are posed as minimization of a scale-invariant objective ``J``:
``log Q(w)`` for the quotient and ``W(w / |w|, tau)`` for the W-functional, where
``|w|`` is the volume normalization.  Scale invariance lets every accepted step
be followed by renormalization without changing ``J``.

The search direction is L-BFGS in the H^1 inner product ``K + M`` (stiffness plus
mass matrix of the measure), which keeps the iteration count essentially
independent of the grid.  Gradients are exact derivatives of the discrete
objective.
"""

from __future__ import annotations

import csv
import json
import math
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .functionals import (
    conformal_coefficient,
    el_residual,
    el_w_residual,
    exponents,
    nu_lambda_convert,
    quotient_Q,
    w_functional,
)
from .geometry import ModelSpace, RadialField, _values, weighted_scalar_curvature
from .bubbles import Bubble, bubble_profile

__all__ = [
    "MinimizeConfig",
    "MinimizeReport",
    "minimize_quotient",
    "minimize_w_at_tau",
    "nu_sweep",
    "bubble_probe",
    "initial_field",
    "normalize_volume",
    "mass_localization",
    "quotient_gradient",
    "w_gradient",
    "write_trace_csv",
]


@dataclass(frozen=True)
class MinimizeConfig:
    """Settings for a descent run.

    ``initial`` is ``"constant"``, ``"bubble"`` or ``"random"``, or an array of
    node values.  ``bubble_width`` is the concentration parameter of the seeded
    profile: larger values give a sharper peak at the north pole (sphere) or a
    narrower bubble (flat space).
    """

    max_iterations: int = 400
    gradient_tolerance: float = 1e-9
    initial: object = "constant"
    bubble_width: float = 1.0
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 60
    positivity_floor: float = 1e-12
    rng_seed: int = 0
    memory: int = 8
    time_limit: float | None = None
    resolution_tolerance: float = 1e-9

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not (self.gradient_tolerance > 0 and self.armijo > 0 and 0 < self.backtrack < 1):
            raise ValueError("tolerances must be positive and backtrack in (0, 1)")
        if not 0 < self.positivity_floor <= 1e-8:
            raise ValueError("positivity_floor must lie in (0, 1e-8]")


@dataclass
class MinimizeReport:
    best_field: RadialField
    q_trace: list[float]
    sup_trace: list[float]
    mass_trace: list[float]
    el_residual_norm: float
    concentration_flag: bool
    mass_localization: float
    converged: bool
    iterations: int
    gradient_norm: float
    objective: str
    tau: float | None = None
    best_q: float | None = None
    elapsed: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def best_value(self) -> float:
        return self.q_trace[-1]

    def to_dict(self) -> dict:
        out = {
            "objective": self.objective,
            "best_value": self.best_value,
            "q_value": self.best_q,
            "el_residual_norm": self.el_residual_norm,
            "concentration_flag": self.concentration_flag,
            "mass_localization": self.mass_localization,
            "converged": self.converged,
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
            "initial_sup": self.sup_trace[0],
            "final_sup": self.sup_trace[-1],
            "elapsed_seconds": self.elapsed,
        }
        if self.tau is not None:
            out["tau"] = self.tau
            out["w_value"] = self.best_value
        out.update(self.extra)
        return out


# ---------------------------------------------------------------------------
# fields and diagnostics


def normalize_volume(space: ModelSpace, w) -> np.ndarray:
    """Scale w so that int |w|^{2(m+n)/(m+n-2)} v^m dvol = 1."""
    vals = _values(space, w)
    p = exponents(space.m, space.n).volume
    volume = float(space.measure_weights @ np.abs(vals) ** p)
    return vals / volume ** (1 / p)


def initial_field(space: ModelSpace, cfg: MinimizeConfig) -> np.ndarray:
    source = cfg.initial
    if not isinstance(source, str):
        vals = _values(space, source).copy()
    elif source == "constant":
        vals = np.ones(space.node_count)
    elif source == "bubble":
        k = (float(space.m) + space.n - 2) / 2
        if space.kind == "sphere":
            vals = (1 + cfg.bubble_width * (1 - np.cos(space.nodes))) ** (-k)
        else:
            vals = (1 + cfg.bubble_width * space.nodes**2) ** (-k)
    elif source == "random":
        rng = np.random.default_rng(cfg.rng_seed)
        if space.kind == "sphere":
            coef = rng.normal(size=6) / (1 + np.arange(6)) ** 2
            vals = np.exp(0.5 * np.cos(np.outer(space.nodes, np.arange(1, 7))) @ coef)
        else:
            k = (float(space.m) + space.n - 2) / 2
            c = rng.uniform(0.5, 2.0)
            bump = 1 + 0.3 * np.tanh(rng.normal()) * np.exp(-(space.nodes / c) ** 2)
            vals = (1 + space.nodes**2 / c**2) ** (-k) * bump
    else:
        raise ValueError(f"unknown initial field {source!r}")
    if np.any(vals <= 0):
        raise ValueError("initial field must be positive")
    return normalize_volume(space, vals)


def _ball_fraction(space: ModelSpace, vals: np.ndarray, fraction: float = 0.01) -> float:
    """Share of the critical mass inside the centred ball of Riemannian volume ``fraction``."""
    p = exponents(space.m, space.n).volume
    density = space.measure_weights * np.abs(vals) ** p
    i0 = int(np.argmax(vals))
    # radial fields peak on the axis; use the pole nearest the sup
    order = np.argsort(space.nodes) if i0 <= space.node_count // 2 else np.argsort(-space.nodes)
    vol = np.cumsum(space.weights[order])
    inside = vol <= fraction * space.total_volume
    return float(density[order][inside].sum() / density.sum())


def mass_localization(space: ModelSpace, w) -> float:
    return _ball_fraction(space, _values(space, w))


# ---------------------------------------------------------------------------
# objectives


def _energy_gradient(space: ModelSpace, vals: np.ndarray, curv: np.ndarray) -> tuple[float, np.ndarray]:
    mu = space.measure_weights
    d = space.grid.d_even
    dw = d @ vals
    flux = mu * np.exp(-2 * space.log_factor) * dw
    c = conformal_coefficient(space.m, space.n)
    energy = float(flux @ dw + c * (mu * curv) @ vals**2)
    grad = 2 * (d.T @ flux) + 2 * c * mu * curv * vals
    return energy, grad


def _mass_gradients(space: ModelSpace, vals: np.ndarray):
    e = exponents(space.m, space.n)
    mu = space.measure_weights
    a = np.abs(vals)
    sgn = np.sign(vals)
    inv_v = 1.0 / space.density.values
    big_i = float(mu @ (a**e.intermediate * inv_v))
    big_v = float(mu @ a**e.volume)
    grad_i = e.intermediate * mu * a ** (e.intermediate - 1) * sgn * inv_v
    grad_v = e.volume * mu * a ** (e.volume - 1) * sgn
    return big_i, grad_i, big_v, grad_v


def quotient_gradient(space: ModelSpace, w) -> tuple[float, np.ndarray]:
    """(log Q, gradient of log Q with respect to node values), finite m."""
    vals = _values(space, w)
    curv = weighted_scalar_curvature(space).values
    energy, g_e = _energy_gradient(space, vals, curv)
    big_i, g_i, big_v, g_v = _mass_gradients(space, vals)
    e = exponents(space.m, space.n)
    if not energy > 0:
        raise FloatingPointError("nonpositive energy; log Q undefined")
    value = math.log(energy) + e.q_intermediate * math.log(big_i) - e.q_volume * math.log(big_v)
    grad = g_e / energy + e.q_intermediate * g_i / big_i - e.q_volume * g_v / big_v
    return value, grad


def w_gradient(space: ModelSpace, w, tau: float) -> tuple[float, np.ndarray]:
    """(W(w_hat, tau), gradient in w) where w_hat is the unit-volume rescaling of w."""
    vals = _values(space, w)
    m, n = float(space.m), space.n
    e = exponents(m, n)
    p = e.volume
    _, _, big_v, g_v = _mass_gradients(space, vals)
    scale = big_v ** (-1 / p)
    hat = vals * scale
    curv = weighted_scalar_curvature(space).values
    energy, g_e = _energy_gradient(space, hat, curv)
    big_i_hat, g_i_hat, big_v_hat, g_v_hat = _mass_gradients(space, hat)
    a = tau ** (m / (m + n))
    b = tau ** (-n / (2 * (m + n)))
    value = a * energy + m * (b * big_i_hat - big_v_hat)
    g_hat = a * g_e + m * (b * g_i_hat - g_v_hat)
    # chain rule through w_hat = w V(w)^{-1/p}
    grad = scale * (g_hat - (vals @ g_hat) / (p * big_v) * g_v)
    return float(value), grad


# ---------------------------------------------------------------------------
# descent


class _Preconditioner:
    def __init__(self, space: ModelSpace):
        mu = space.measure_weights
        d = space.grid.d_even
        stiff = d.T @ ((mu * np.exp(-2 * space.log_factor))[:, None] * d)
        mat = stiff + np.diag(mu)
        try:
            self._chol = scipy.linalg.cho_factor(mat)
            self._diag = None
        except np.linalg.LinAlgError:
            self._chol = None
            self._diag = 1.0 / mu

    def __call__(self, g: np.ndarray) -> np.ndarray:
        if self._chol is not None:
            return scipy.linalg.cho_solve(self._chol, g)
        return self._diag * g


def _descend(space: ModelSpace, objective: Callable, w0: np.ndarray, cfg: MinimizeConfig):
    """Preconditioned L-BFGS with Armijo backtracking on a scale-invariant objective."""
    precond = _Preconditioner(space)
    start = time.perf_counter()
    w = normalize_volume(space, w0)
    value, grad = objective(w)
    pg = precond(grad)
    gnorm = math.sqrt(max(grad @ pg, 0.0))
    values, sups, masses = [value], [float(w.max())], [_ball_fraction(space, w)]
    memory: deque = deque(maxlen=cfg.memory)
    converged = gnorm <= cfg.gradient_tolerance
    resolution_limited = False
    stalled = 0
    it = 0
    while not converged and it < cfg.max_iterations:
        if cfg.time_limit is not None and time.perf_counter() - start > cfg.time_limit:
            break
        # two-loop recursion in the preconditioned metric
        q = grad.copy()
        alphas = []
        for s, y, rho in reversed(memory):
            alpha = rho * (s @ q)
            alphas.append(alpha)
            q -= alpha * y
        if memory:
            s, y, _ = memory[-1]
            r = precond(q) * ((s @ y) / (y @ precond(y)))
        else:
            r = precond(q)
        for (s, y, rho), alpha in zip(memory, reversed(alphas)):
            beta = rho * (y @ r)
            r += (alpha - beta) * s
        direction = -r
        slope = grad @ direction
        if slope >= 0:
            memory.clear()
            direction = -pg
            slope = grad @ direction
        # first step limited so the field changes by at most half its size
        step = 1.0
        peak = np.max(np.abs(direction)) / np.max(np.abs(w))
        if not memory and peak > 0.5:
            step = 0.5 / peak
        accepted = False
        for _ in range(cfg.max_backtracks):
            trial = w + step * direction
            trial = np.maximum(trial, cfg.positivity_floor)
            try:
                trial = normalize_volume(space, trial)
                t_value, t_grad = objective(trial)
            except (FloatingPointError, ValueError, ZeroDivisionError):
                step *= cfg.backtrack
                continue
            if np.isfinite(t_value) and t_value <= value + cfg.armijo * step * slope:
                accepted = True
                break
            step *= cfg.backtrack
        if not accepted:
            break
        if space.grid.resolution_tail(trial) > cfg.resolution_tolerance:
            # the grid no longer resolves the iterate; keep the last resolved one
            resolution_limited = True
            break
        s_vec = trial - w
        y_vec = t_grad - grad
        sy = s_vec @ y_vec
        if sy > 1e-16 * math.sqrt((s_vec @ s_vec) * (y_vec @ y_vec)):
            memory.append((s_vec, y_vec, 1.0 / sy))
        # stop once the objective stops moving at round-off level
        stalled = stalled + 1 if value - t_value <= 1e-14 * abs(value) else 0
        w, value, grad = trial, t_value, t_grad
        pg = precond(grad)
        gnorm = math.sqrt(max(grad @ pg, 0.0))
        it += 1
        values.append(value)
        sups.append(float(w.max()))
        masses.append(_ball_fraction(space, w))
        converged = gnorm <= cfg.gradient_tolerance
        if stalled >= 10:
            break
    status = {"resolution_limited": resolution_limited, "stalled": stalled >= 10}
    return w, values, sups, masses, converged, it, gnorm, time.perf_counter() - start, status


def _concentrated(sups: list[float], localization: float) -> bool:
    return sups[-1] >= 10 * sups[0] and localization > 0.5


def minimize_quotient(space: ModelSpace, cfg: MinimizeConfig | None = None) -> MinimizeReport:
    """Minimize Q over positive fields; the trace records Q (not log Q)."""
    cfg = cfg or MinimizeConfig()
    if space.m.is_infinite:
        raise ValueError("minimize_quotient supports finite m")
    w0 = initial_field(space, cfg)
    w, values, sups, masses, converged, it, gnorm, elapsed, status = _descend(
        space, lambda x: quotient_gradient(space, x), w0, cfg
    )
    q_trace = [math.exp(v) for v in values]
    best_q = quotient_Q(space, w).q_value
    _, res = el_residual(space, w, best_q)
    loc = masses[-1]
    return MinimizeReport(
        best_field=space.field(w), q_trace=q_trace, sup_trace=sups, mass_trace=masses,
        el_residual_norm=res, concentration_flag=_concentrated(sups, loc),
        mass_localization=loc, converged=converged, iterations=it, gradient_norm=gnorm,
        objective="quotient", best_q=best_q, elapsed=elapsed, extra=status,
    )


def minimize_w_at_tau(space: ModelSpace, tau: float, cfg: MinimizeConfig | None = None) -> MinimizeReport:
    """Minimize W(., tau) over positive unit-volume fields."""
    cfg = cfg or MinimizeConfig()
    if not float(space.m) > 0 or space.m.is_infinite:
        raise ValueError("minimize_w_at_tau needs finite m > 0")
    if not tau > 0:
        raise ValueError("tau must be positive")
    w0 = initial_field(space, cfg)
    w, values, sups, masses, converged, it, gnorm, elapsed, status = _descend(
        space, lambda x: w_gradient(space, x, tau), w0, cfg
    )
    res = el_w_residual(space, w, tau)
    loc = masses[-1]
    return MinimizeReport(
        best_field=space.field(w), q_trace=values, sup_trace=sups, mass_trace=masses,
        el_residual_norm=res, concentration_flag=_concentrated(sups, loc),
        mass_localization=loc, converged=converged, iterations=it, gradient_norm=gnorm,
        objective="w_functional", tau=float(tau), best_q=quotient_Q(space, w).q_value,
        elapsed=elapsed, extra=status,
    )


# ---------------------------------------------------------------------------
# probes and sweeps


def _cutoff(theta: np.ndarray, radius: float) -> np.ndarray:
    """Smooth cutoff equal to 1 on [0, radius/2] and 0 beyond radius."""
    x = np.clip((theta - radius / 2) / (radius / 2), 0.0, 1.0)

    def bump(t):
        out = np.zeros_like(t)
        pos = t > 0
        out[pos] = np.exp(-1.0 / t[pos])
        return out

    return bump(1 - x) / (bump(1 - x) + bump(x))


def probe_field(space: ModelSpace, tau: float, cutoff_radius: float) -> np.ndarray:
    """Unit-volume cutoff bubble of scale tau centred at the north pole.

    The bubble is written in geodesic distance; it is floored at a tiny positive
    value outside the cutoff so that it stays in the admissible class.
    """
    if space.kind != "sphere":
        raise ValueError("bubble_probe is defined on the sphere")
    if not 0 < cutoff_radius <= math.pi:
        raise ValueError("cutoff radius must lie in (0, pi]")
    if not tau > 0:
        raise ValueError("tau must be positive")
    b = Bubble(float(space.m), space.n, tau=tau)
    vals = bubble_profile(b, space.nodes) * _cutoff(space.nodes, cutoff_radius)
    vals = np.maximum(vals, 1e-300)
    return normalize_volume(space, vals)


def bubble_probe(space: ModelSpace, tau: float, cutoff_radius: float) -> float:
    """W of the normalized cutoff bubble: an upper bound for nu(tau)."""
    return w_functional(space, probe_field(space, tau, cutoff_radius), tau).w_value


def nu_sweep(space: ModelSpace, tau_grid, cfg: MinimizeConfig | None = None,
             cutoff_radius: float = 1.0) -> list[tuple[float, float, MinimizeReport]]:
    """nu(tau) along a decreasing tau grid.

    Each point is minimized from the constant, the previous minimizer and the
    cutoff bubble probe at that tau; the lowest result is kept.
    """
    cfg = cfg or MinimizeConfig()
    taus = [float(t) for t in tau_grid]
    if any(t <= 0 for t in taus) or any(b >= a for a, b in zip(taus, taus[1:])):
        raise ValueError("tau grid must be positive and strictly decreasing")
    out = []
    previous = None
    for tau in taus:
        seeds = [normalize_volume(space, np.ones(space.node_count))]
        if previous is not None:
            seeds.append(previous)
        if space.kind == "sphere":
            seeds.append(probe_field(space, tau, cutoff_radius))
        best = None
        for seed in seeds:
            run_cfg = MinimizeConfig(**{**cfg.__dict__, "initial": seed})
            report = minimize_w_at_tau(space, tau, run_cfg)
            if best is None or report.best_value < best.best_value:
                best = report
        previous = best.best_field.values
        out.append((tau, best.best_value, best))
    return out


def write_trace_csv(path, report: MinimizeReport, header: list[str] | None = None) -> None:
    with open(path, "w", newline="") as fh:
        for line in header or []:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["iteration", "q_value", "sup", "mass_localization"])
        for i, (q, s, ml) in enumerate(zip(report.q_trace, report.sup_trace, report.mass_trace)):
            writer.writerow([i, f"{q:.17g}", f"{s:.17g}", f"{ml:.17g}"])
