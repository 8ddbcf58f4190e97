import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize_scalar

from weighted_yamabe.bubbles import Bubble, bubble_profile
from weighted_yamabe.functionals import (
    continuity_in_m,
    dirichlet_energy,
    el_residual,
    el_w_residual,
    increment_m_gap,
    nu_lambda_convert,
    optimize_scaling,
    phi_bound,
    quotient_Q,
    w_functional,
    wcl_monotonicity_gap,
)
from weighted_yamabe.geometry import change_dimension, make_space, rescale_metric
from weighted_yamabe.minimize import normalize_volume
from weighted_yamabe.specfun import lambda_euclidean, sphere_constant


def flat(m, n, **kw):
    return make_space("euclidean", n, m, **kw)


def sphere(m, n=3, **kw):
    return make_space("sphere", n, m, **kw)


def smooth_positive(space, rng, terms=4, amp=0.5):
    t = space.nodes
    c = rng.uniform(-1, 1, terms)
    c *= amp / np.sum(np.abs(c))
    return np.exp(sum(c[k] * np.cos(k * t) for k in range(terms)))


class TestEnergy:
    def test_constant_on_sphere(self):
        sp = sphere(0, node_count=128)
        assert dirichlet_energy(sp, 1.0) == pytest.approx(1 / 8 * 6 * 2 * math.pi**2, rel=1e-12)

    def test_quadratic_homogeneity(self):
        sp = sphere(1.5)
        w = smooth_positive(sp, np.random.default_rng(0))
        assert dirichlet_energy(sp, 3 * w) == pytest.approx(9 * dirichlet_energy(sp, w), rel=1e-13)

    def test_zero_field(self):
        with pytest.raises(ValueError):
            dirichlet_energy(sphere(1), 0.0)

    @pytest.mark.parametrize("m,n", [(0, 3), (1, 4), (2, 3)])
    def test_bubble_energy_from_constant(self, m, n):
        # at equality Q = Lambda, so E = Lambda V^{q_V} / I^{q_I}
        sp = flat(m, n)
        q = quotient_Q(sp, bubble_profile(Bubble(m, n, tau=1), sp.nodes))
        expected = lambda_euclidean(m, n) * q.mass_volume ** ((2 * m + n - 2) / n) / q.mass_intermediate ** (2 * m / n)
        assert q.energy == pytest.approx(expected, rel=1e-8)


class TestQuotient:
    @pytest.mark.parametrize("m", [0, 0.5, 1, 2])
    @pytest.mark.parametrize("n", [3, 4, 5])
    def test_bubble_attains_constant(self, m, n):
        sp = flat(m, n)
        q = quotient_Q(sp, bubble_profile(Bubble(m, n, tau=1), sp.nodes))
        assert q.q_value == pytest.approx(lambda_euclidean(m, n), rel=1e-6)

    @pytest.mark.parametrize("m", [0, 0.5, 1, 2, 7])
    @pytest.mark.parametrize("n", [3, 4, 6])
    def test_sphere_constant(self, m, n):
        assert quotient_Q(sphere(m, n), 1.0).q_value == pytest.approx(sphere_constant(m, n), rel=1e-6)

    @pytest.mark.parametrize("c", [1e-3, 1.0, 1e3, 7.0])
    @pytest.mark.parametrize("m", [0.5, 2, math.inf])
    def test_scale_invariance(self, c, m):
        sp = sphere(m, density=lambda t: 1 + 0.2 * np.cos(t))
        w = smooth_positive(sp, np.random.default_rng(1))
        assert quotient_Q(sp, c * w).q_value == pytest.approx(quotient_Q(sp, w).q_value, rel=1e-12)

    @pytest.mark.parametrize("m", [0, 0.5, 2, math.inf])
    def test_reassembly(self, m):
        sp = sphere(m)
        q = quotient_Q(sp, smooth_positive(sp, np.random.default_rng(2)))
        assert q.reassemble() == pytest.approx(q.q_value, rel=1e-14)

    def test_absolute_value(self):
        sp = sphere(1)
        w = np.cos(sp.nodes) + 0.3
        assert quotient_Q(sp, -w).q_value == pytest.approx(quotient_Q(sp, w).q_value, rel=1e-14)

    def test_infinite_m_fields(self):
        sp = sphere(math.inf)
        q = quotient_Q(sp, smooth_positive(sp, np.random.default_rng(3)))
        assert q.entropy is not None
        assert q.mass_intermediate == q.mass_volume
        assert set(q.to_dict()) >= {"energy", "mass_intermediate", "mass_volume", "q_value"}

    def test_zero_field(self):
        with pytest.raises(ValueError):
            quotient_Q(sphere(1), np.zeros(512))

    @pytest.mark.parametrize("kind", ["sphere", "euclidean"])
    @pytest.mark.parametrize("m", [0.5, 1, 2])
    def test_conformal_invariance(self, kind, m):
        from weighted_yamabe.geometry import conformal_change

        rng = np.random.default_rng(int(10 * m))
        sp = make_space(kind, 3, m)
        x = sp.nodes
        w = np.exp(0.3 * np.cos(x)) if kind == "sphere" else bubble_profile(Bubble(m, 3, tau=1), x) * (
            1 + 0.2 * np.exp(-(x**2))
        )
        for _ in range(3):
            c = rng.uniform(-1, 1, 4)
            c /= np.sum(np.abs(c))
            if kind == "sphere":
                sigma = sum(c[j] * np.cos(j * x) for j in range(4))
            else:
                sigma = sum(c[j] * np.exp(-(j + 1) * x**2 / 4) for j in range(4))
            q1 = quotient_Q(conformal_change(sp, sigma), w).q_value
            q2 = quotient_Q(sp, np.exp(sigma / 2) * w).q_value
            assert abs(q1 - q2) <= 1e-6 * abs(q2)


class TestWFunctional:
    @pytest.mark.parametrize("m,n,tau", [(1, 3, 1), (2, 4, 0.5), (0.5, 3, 2)])
    def test_normalized_bubble_gives_nu(self, m, n, tau):
        from weighted_yamabe.bubbles import unit_volume_critical_point

        sp = flat(m, n)
        b = Bubble(m, n, tau=tau)
        s, mu, _ = unit_volume_critical_point(b)
        w = s * bubble_profile(b, mu * sp.nodes)
        assert quotient_Q(sp, w).mass_volume == pytest.approx(1.0, rel=1e-10)
        nu = nu_lambda_convert(lambda_euclidean(m, n), m, n)
        assert w_functional(sp, w, tau).w_value == pytest.approx(nu, rel=1e-8)

    @pytest.mark.parametrize("kind", ["sphere", "euclidean"])
    @pytest.mark.parametrize("m", [0.5, 1, 2, math.inf])
    def test_scale_identity(self, kind, m):
        n, c = 3, 2.0
        sp = make_space(kind, n, m)
        x = sp.nodes
        w = np.exp(0.3 * np.cos(x)) if kind == "sphere" else np.exp(-(x**2) / 2)
        k = n / 4 if math.isinf(m) else n * (m + n - 2) / (4 * (m + n))
        lhs = w_functional(rescale_metric(sp, c), w, 1.0).w_value
        rhs = w_functional(sp, c**k * w, 1.0 / c).w_value
        assert lhs == pytest.approx(rhs, rel=1e-8)

    def test_infinite_branch(self):
        sp = sphere(math.inf)
        w = np.exp(0.4 * np.cos(sp.nodes))
        w = w / math.sqrt(float(sp.measure_weights @ w**2))
        expected = dirichlet_energy(sp, w) - float(sp.measure_weights @ (w**2 * np.log(w**2)))
        assert w_functional(sp, w, 1.0).w_value == pytest.approx(expected, rel=1e-13)

    def test_bad_tau(self):
        with pytest.raises(ValueError):
            w_functional(sphere(1), 1.0, 0.0)

    def test_report_keys(self):
        assert set(w_functional(sphere(1), 1.0, 2.0).to_dict()) == {"w_value", "tau"}


class TestScaling:
    def test_example(self):
        opt = optimize_scaling(1, 1, 1, 4)
        assert opt.infimum == pytest.approx(3 * 0.5 ** (2 / 3), rel=1e-14)
        assert opt.argmin == pytest.approx(2 ** (1 / 6), rel=1e-14)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.1, 5), st.integers(3, 8))
    def test_closed_form(self, la, lb, m, n):
        A, B = 10.0**la, 10.0**lb
        opt = optimize_scaling(A, B, m, n)
        f = lambda x: A * x ** (2 * m) + m * B * x ** (-n)
        assert abs(f(opt.argmin) - opt.infimum) <= 1e-12 * opt.infimum
        xs = opt.argmin * np.exp(np.random.default_rng(0).uniform(-3, 3, 100))
        assert np.all(f(xs) >= opt.infimum * (1 - 1e-13))
        res = minimize_scalar(lambda t: f(math.exp(t)), bracket=(math.log(opt.argmin) - 1, math.log(opt.argmin) + 1),
                              method="golden", tol=1e-10)
        assert res.fun == pytest.approx(opt.infimum, rel=1e-8)

    def test_degenerate(self):
        opt = optimize_scaling(0.0, 1.0, 1, 3)
        assert opt.degenerate and opt.infimum == 0.0


class TestConversion:
    @pytest.mark.parametrize("m,n", [(1, 3), (2, 5), (0.5, 4)])
    def test_half_n(self, m, n):
        assert nu_lambda_convert(n / 2, m, n) == pytest.approx(n / 2, rel=1e-15)

    @pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
    def test_round_trip(self, lam):
        for m, n in [(1, 3), (3, 6)]:
            nu = nu_lambda_convert(lam, m, n)
            assert abs(nu_lambda_convert(nu, m, n, "inverse") - lam) <= 1e-12 * max(1, lam)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            nu_lambda_convert(-1.0, 1, 3)
        with pytest.raises(ValueError):
            nu_lambda_convert(-2.0, 1, 3, "inverse")


class TestEulerLagrange:
    @pytest.mark.parametrize("m,n", [(0, 3), (0.5, 3), (1, 4), (2, 5)])
    def test_bubble(self, m, n):
        sp = flat(m, n)
        w = normalize_volume(sp, bubble_profile(Bubble(m, n, tau=1), sp.nodes))
        _, norm = el_residual(sp, w, lambda_euclidean(m, n))
        assert norm <= 1e-7

    @pytest.mark.parametrize("m", [0, 0.5, 2])
    def test_sphere_constant(self, m):
        sp = sphere(m)
        w = normalize_volume(sp, np.ones(sp.node_count))
        assert el_residual(sp, w, sphere_constant(m, 3))[1] <= 1e-8

    def test_perturbed_bubble(self):
        sp = flat(1, 3)
        w = bubble_profile(Bubble(1, 3, tau=1), sp.nodes) * (1 + 0.1 * np.cos(sp.nodes))
        w = normalize_volume(sp, w)
        assert el_residual(sp, w, lambda_euclidean(1, 3))[1] > 1e-3

    def test_requires_normalization(self):
        sp = flat(1, 3)
        with pytest.raises(ValueError):
            el_residual(sp, 2 * normalize_volume(sp, bubble_profile(Bubble(1, 3, tau=1), sp.nodes)), 1.0)

    @pytest.mark.parametrize("m,n,tau", [(1, 3, 1), (0.5, 3, 0.5), (2, 4, 2)])
    def test_w_equation(self, m, n, tau):
        from weighted_yamabe.bubbles import unit_volume_critical_point

        sp = flat(m, n)
        b = Bubble(m, n, tau=tau)
        s, mu, _ = unit_volume_critical_point(b)
        w = s * bubble_profile(b, mu * sp.nodes)
        assert el_w_residual(sp, w, tau) <= 1e-7
        assert el_w_residual(sp, w, 2 * tau) > 1e-2

    def test_w_equation_explicit_multiplier(self):
        from weighted_yamabe.bubbles import unit_volume_critical_point

        m, n, tau = 1.0, 3, 1.0
        sp = flat(m, n)
        b = Bubble(m, n, tau=tau)
        s, mu, c1 = unit_volume_critical_point(b)
        w = s * bubble_profile(b, mu * sp.nodes)
        assert el_w_residual(sp, w, tau, c1) <= 1e-7


class TestIncrementM:
    @pytest.mark.parametrize("seed", range(5))
    def test_sphere(self, seed):
        sp1, sp2 = sphere(1), sphere(2)
        w = smooth_positive(sp1, np.random.default_rng(seed))
        assert abs(increment_m_gap(sp1, sp2, w)) <= 1e-8

    def test_constant(self):
        v = lambda t: 1 + 0.2 * np.cos(t)
        sp1 = sphere(1, density=v)
        assert abs(increment_m_gap(sp1, change_dimension(sp1, 2), 1.0)) <= 1e-10

    def test_bubble(self):
        sp0, sp1 = flat(0, 3), flat(1, 3)
        sp0 = make_space("euclidean", 3, 0, truncation_radius=sp1.grid.extent, auto_extend=False)
        sp1 = make_space("euclidean", 3, 1, truncation_radius=sp1.grid.extent, auto_extend=False,
                         scale=sp0.grid.scale)
        w = bubble_profile(Bubble(0, 3, tau=1), sp0.nodes)
        assert abs(increment_m_gap(sp0, sp1, w)) <= 1e-7

    def test_mismatch(self):
        with pytest.raises(ValueError):
            increment_m_gap(sphere(1), sphere(3), 1.0)
        with pytest.raises(ValueError):
            increment_m_gap(sphere(1), sphere(2, node_count=128), 1.0)


class TestPhiBound:
    def test_argmax_example(self):
        assert phi_bound(1.0, 1, 3)[2] == pytest.approx(1.25, rel=1e-15)

    @pytest.mark.parametrize("m,n", [(1, 3), (0.5, 4), (3, 5)])
    def test_max(self, m, n):
        _, max_value, argmax = phi_bound(1.0, m, n)
        assert phi_bound(argmax, m, n)[0] == pytest.approx(max_value, rel=1e-12)
        res = minimize_scalar(lambda t: -phi_bound(math.exp(t), m, n)[0], bracket=(-1, 0, 1), tol=1e-12)
        assert -res.fun == pytest.approx(max_value, rel=1e-10)
        xs = np.exp(np.random.default_rng(0).uniform(-5, 5, 100))
        assert all(phi_bound(x, m, n)[0] <= max_value * (1 + 1e-15) for x in xs)


class TestMonotonicity:
    @pytest.mark.parametrize("seed", range(3))
    def test_unit_density(self, seed):
        sp1, sp2 = sphere(1), sphere(2.5)
        w = smooth_positive(sp1, np.random.default_rng(seed))
        assert wcl_monotonicity_gap(sp1, sp2, w, 1.5, gauge="native") >= 0

    @pytest.mark.parametrize("seed", range(3))
    def test_nonconstant_density(self, seed):
        v = lambda t: 1 + 0.3 * np.cos(t)
        sp1 = sphere(1, density=v)
        sp2 = change_dimension(sp1, 2)
        w = smooth_positive(sp1, np.random.default_rng(seed))
        assert wcl_monotonicity_gap(sp1, sp2, w, 1.0) >= -1e-10
        assert wcl_monotonicity_gap(sp1, sp2, 1.0, 1.0) >= -1e-10

    def test_mismatch(self):
        with pytest.raises(ValueError):
            wcl_monotonicity_gap(sphere(1), sphere(2), 1.0, 2.0)


class TestContinuity:
    def test_first_order_rate(self):
        phi = lambda t: np.cos(t)
        inf_space = make_space("sphere", 3, math.inf, phi=phi, node_count=128)
        w = np.exp(0.3 * np.cos(inf_space.nodes) + 0.2 * np.cos(2 * inf_space.nodes))
        e100 = continuity_in_m(make_space("sphere", 3, 100, phi=phi, node_count=128), inf_space, w)
        e200 = continuity_in_m(make_space("sphere", 3, 200, phi=phi, node_count=128), inf_space, w)
        assert 1.6 <= e100 / e200 <= 2.4

    def test_trivial_weight(self):
        inf_space = make_space("sphere", 3, math.inf, node_count=128)
        errs = [continuity_in_m(make_space("sphere", 3, k, node_count=128), inf_space, 1.0) for k in (100, 1000, 10000)]
        assert errs[2] < errs[1] < errs[0]

    def test_w_functional(self):
        phi = lambda t: np.cos(t)
        inf_space = make_space("sphere", 3, math.inf, phi=phi, node_count=128)
        w = np.exp(0.3 * np.cos(inf_space.nodes))
        w = w / math.sqrt(float(inf_space.measure_weights @ w**2))
        w_inf = w_functional(inf_space, w, 1.0).w_value
        gaps = []
        for k in (100, 200):
            sp = make_space("sphere", 3, k, phi=phi, node_count=128)
            gaps.append(abs(w_functional(sp, normalize_volume(sp, w), 1.0).w_value - w_inf))
        assert 1.6 <= gaps[0] / gaps[1] <= 2.4
