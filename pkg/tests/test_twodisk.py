import math

import numpy as np
import pytest
from scipy.optimize import fsolve

from metachain.twodisk import (
    DegenerateWeight,
    EmptyLevel,
    OffLevel,
    OnSeparatrix,
    TwoDiskSystem,
    a_hat_zero,
    alpha_limit,
    gamma,
    gamma_closed_form,
    gamma_from_slope,
    invariant_density,
    level_quantities,
    metastable_weights,
    region_integral,
    symmetric_offset,
    symmetric_system,
    trace_contour,
)


@pytest.fixture(scope="module")
def sys0():
    return TwoDiskSystem()


@pytest.fixture(scope="module")
def sym():
    return TwoDiskSystem(diff_asym=0.0)


class TestFields:
    def test_hamiltonian_sign_pattern(self, sys0):
        a = sys0.offset
        assert sys0.hamiltonian(0.0, 0.0) == pytest.approx((1 - a * a) ** 2)
        assert sys0.hamiltonian(*sys0.critical_points[1]) == pytest.approx(-4 * a * a)
        assert sys0.hamiltonian(*sys0.critical_points[4]) == pytest.approx(0.0, abs=1e-14)
        assert sys0.hamiltonian(2.0, 2.0) > 0  # exterior
        assert sys0.hamiltonian(-1.0, 0.0) < 0  # left crescent

    def test_grad_h_matches_finite_differences(self, sys0):
        rng = np.random.default_rng(0)
        pts = rng.uniform(-1.6, 1.6, size=(100, 2))
        h = 1e-6
        for x, y in pts:
            gx, gy = sys0.grad_h(x, y)
            fx = (sys0.hamiltonian(x + h, y) - sys0.hamiltonian(x - h, y)) / (2 * h)
            fy = (sys0.hamiltonian(x, y + h) - sys0.hamiltonian(x, y - h)) / (2 * h)
            scale = max(1.0, abs(fx), abs(fy))
            assert gx == pytest.approx(fx, abs=1e-6 * scale)
            assert gy == pytest.approx(fy, abs=1e-6 * scale)

    def test_div_beta_matches_finite_differences(self, sys0):
        rng = np.random.default_rng(1)
        pts = rng.uniform(-1.6, 1.6, size=(100, 2))
        h = 1e-5
        for x, y in pts:
            if abs(sys0.f1(x, y)) < 1e-3 or abs(sys0.f2(x, y)) < 1e-3:
                continue  # grad m is kinked on the circles
            bx1, _ = sys0.beta(x + h, y)
            bx0, _ = sys0.beta(x - h, y)
            _, by1 = sys0.beta(x, y + h)
            _, by0 = sys0.beta(x, y - h)
            fd = (bx1 - bx0) / (2 * h) + (by1 - by0) / (2 * h)
            scale = max(1.0, abs(fd))
            assert sys0.div_beta(x, y) == pytest.approx(fd, abs=2e-5 * scale)

    def test_laplacian_formula(self, sys0):
        rng = np.random.default_rng(2)
        for x, y in rng.uniform(-2, 2, size=(20, 2)):
            hxx, _, hyy = sys0.hessian_h(x, y)
            assert hxx + hyy == pytest.approx(sys0.laplacian_h(x, y), rel=1e-12)

    def test_m_sign_pattern(self, sys0):
        assert sys0.m_factor(0.0, 0.0) > 0  # lens
        assert sys0.m_factor(-1.0, 0.0) > 0  # crescent (inside one disk)
        assert sys0.m_factor(0.0, 1.5) < 0  # exterior
        # outer arc point of circle 1: theta = pi
        a = sys0.offset
        assert sys0.m_factor(-a - 1.0, 0.0) == pytest.approx(0.0, abs=1e-14)

    def test_beta_vanishes_on_zero_circles(self, sys0):
        a = sys0.offset
        thetas = np.linspace(0, 2 * math.pi, 17)
        for cx in (-a, a):
            x = cx + np.cos(thetas)
            y = np.sin(thetas)
            bx, by = sys0.beta(x, y)
            assert np.max(np.hypot(bx, by)) < 1e-12

    def test_drift_sign_conditions(self, sys0):
        rng = np.random.default_rng(3)
        count = {1: 0, 2: 0, 3: 0, 4: 0}
        while min(count.values()) < 25:
            x, y = rng.uniform(-1.8, 1.8, size=2)
            try:
                lobe, _ = sys0.project_to_graph(x, y, tol=1e-6)
            except OnSeparatrix:
                continue
            if (x * x + y * y) > 4.0:
                continue
            hx, hy = sys0.grad_h(x, y)
            bx, by = sys0.beta(x, y)
            dot = hx * bx + hy * by
            if lobe == 2:
                assert dot > 0
            else:
                assert dot < 0
            count[lobe] += 1


class TestCriticalPoints:
    def test_drift_vanishes_at_critical_points(self, sys0):
        for i, (x, y) in sys0.critical_points.items():
            dx, dy, _ = sys0.eval_field(x, y, delta=0.02, kappa=0.3)
            assert abs(dx) < 1e-12 and abs(dy) < 1e-12

    def test_numeric_zeros_match_analytic(self, sys0):
        def full_drift(p):
            dx, dy, _ = sys0.eval_field(p[0], p[1], delta=0.05, kappa=0.0)
            return [dx, dy]

        rng = np.random.default_rng(4)
        for i, (cx, cy) in sys0.critical_points.items():
            for _ in range(3):
                p0 = np.array([cx, cy]) + rng.normal(scale=0.02, size=2)
                root = fsolve(full_drift, p0, xtol=1e-13)
                assert np.hypot(root[0] - cx, root[1] - cy) < 1e-9

    def test_hessian_signatures(self, sys0):
        sig = {}
        for i, (x, y) in sys0.critical_points.items():
            hxx, hxy, hyy = sys0.hessian_h(x, y)
            det = hxx * hyy - hxy * hxy
            sig[i] = (det, hxx)
        assert sig[2][0] > 0 and sig[2][1] < 0  # maximum
        assert sig[1][0] > 0 and sig[1][1] > 0  # minimum
        assert sig[3][0] > 0 and sig[3][1] > 0  # minimum
        assert sig[4][0] < 0 and sig[5][0] < 0  # saddles


class TestProjection:
    def test_equilibria_project_to_their_lobes(self, sys0):
        a = sys0.offset
        assert sys0.project_to_graph(*sys0.critical_points[1]) == (
            1,
            pytest.approx(-4 * a * a),
        )
        assert sys0.project_to_graph(0.0, 0.0) == (2, pytest.approx((1 - a * a) ** 2))
        assert sys0.project_to_graph(2.0, 2.0)[0] == 4

    def test_separatrix_rejected(self, sys0):
        a = sys0.offset
        with pytest.raises(OnSeparatrix):
            sys0.project_to_graph(-a, 1.0)  # on circle 1


class TestLevelQuantities:
    def test_divergence_theorem_identity_diffusion(self, sym):
        for lobe, z in ((1, -0.7), (2, 0.08), (3, -0.7)):
            lq = level_quantities(sym, lobe, z)
            area = region_integral(
                sym, lobe, lambda x, y: sym.laplacian_h(x, y), z,
                epsabs=1e-9, epsrel=1e-8,
            )
            assert abs(area) == pytest.approx(lq.a_hat, rel=1e-6)

    def test_region_route_with_asymmetric_diffusion(self, sys0):
        lq = level_quantities(sys0, 1, -0.5)
        area = region_integral(
            sys0, 1, lambda x, y: sys0.div_a_grad_h(x, y), -0.5,
            epsabs=1e-9, epsrel=1e-8,
        )
        assert abs(area) == pytest.approx(lq.a_hat, rel=1e-6)

    def test_period_blows_up_toward_separatrix(self, sys0):
        zs = [-0.5, -0.1, -0.02, -0.004, -0.0008]
        periods = [level_quantities(sys0, 1, z).period for z in zs]
        assert all(a < b for a, b in zip(periods, periods[1:]))
        zs2 = [0.3, 0.1, 0.02, 0.004, 0.0008]
        periods2 = [level_quantities(sys0, 2, z).period for z in zs2]
        assert all(a < b for a, b in zip(periods2, periods2[1:]))

    def test_empty_level(self, sys0):
        with pytest.raises(EmptyLevel):
            level_quantities(sys0, 1, 0.5)
        with pytest.raises(EmptyLevel):
            level_quantities(sys0, 2, -0.1)

    def test_lobe4_quantities(self, sys0):
        lq = level_quantities(sys0, 4, 2.0)
        assert lq.period > 0
        assert lq.a_hat > 0
        assert lq.beta_hat < 0  # exterior drift pushes toward the separatrix


class TestInvariantDensity:
    def test_normalisation(self, sys0):
        for lobe, z in ((1, -0.6), (2, 0.1), (4, 1.0)):
            period = level_quantities(sys0, lobe, z).period

            def density(x, y):
                hx, hy = sys0.grad_h(x, y)
                return 1.0 / (period * math.hypot(hx, hy))

            total = trace_contour(sys0, lobe, z, (density,))[0]
            assert total == pytest.approx(1.0, abs=1e-6)
            # spot value through the public call
            xs, ys = sys0.seed_point(lobe, z)
            assert invariant_density(sys0, lobe, z, xs, ys) == pytest.approx(
                density(xs, ys), rel=1e-12
            )

    def test_mirror_symmetry_lobes_1_3(self, sys0):
        # the density involves only H, which is x -> -x symmetric
        z = -0.4
        x1, y1 = sys0.seed_point(1, z)
        d1 = invariant_density(sys0, 1, z, x1, y1)
        d3 = invariant_density(sys0, 3, z, -x1, y1)
        assert d1 == pytest.approx(d3, rel=1e-9)

    def test_density_peaks_where_gradient_small(self, sys0):
        z = 0.02  # close to the separatrix: strong contrast along the curve
        xs, ys = sys0.seed_point(2, z)
        hx, hy = sys0.grad_h(xs, ys)
        d_seed = invariant_density(sys0, 2, z, xs, ys)
        # compare against a point near the saddle corner on the same level
        from scipy.optimize import brentq

        a = sys0.offset
        ysad = math.sqrt(1 - a * a)
        f = lambda t: sys0.hamiltonian(0.0, t) - z
        y_near = brentq(f, 0.0, ysad - 1e-12, xtol=1e-15)
        d_corner = invariant_density(sys0, 2, z, 0.0, y_near)
        gx, gy = sys0.grad_h(0.0, y_near)
        assert math.hypot(gx, gy) < math.hypot(hx, hy)
        assert d_corner > d_seed

    def test_off_level_rejected(self, sys0):
        with pytest.raises(OffLevel):
            invariant_density(sys0, 1, -0.4, 0.0, 0.0)


class TestGamma:
    def test_quadrature_matches_closed_form(self, sys0):
        for lobe in (1, 2, 3):
            assert gamma(sys0, lobe) == pytest.approx(
                gamma_closed_form(sys0, lobe), rel=1e-8
            )

    def test_mirror_equality(self, sys0):
        assert gamma(sys0, 1) == pytest.approx(gamma(sys0, 3), rel=1e-12)

    def test_additivity(self, sys0):
        assert gamma(sys0, 2) == pytest.approx(
            gamma(sys0, 1) + gamma(sys0, 3), rel=1e-6
        )

    def test_level_slope_route_agrees(self, sys0):
        for lobe in (1, 2):
            slope = gamma_from_slope(sys0, lobe, h=1e-5)
            assert slope == pytest.approx(gamma(sys0, lobe), rel=1e-3)

    def test_independent_of_diffusion(self, sys0, sym):
        assert gamma(sys0, 1) == pytest.approx(gamma(sym, 1), rel=1e-12)


class TestAlpha:
    def test_symmetric_lobes_equal(self, sym):
        a1 = alpha_limit(sym, 1, n_panels=12)
        a3 = alpha_limit(sym, 3, n_panels=12)
        assert a1.plain == pytest.approx(a3.plain, rel=1e-8)

    def test_positive_and_ordering_fixture(self, sys0):
        # regression fixture from converged quadrature (verified at two
        # resolutions); the asymmetric diffusion pushes alpha_1 above
        # alpha_3
        vals = {}
        for lobe in (1, 2, 3):
            est = alpha_limit(sys0, lobe, n_panels=12)
            assert est.plain > 0
            assert est.doubled == pytest.approx(2 * est.plain, rel=1e-14)
            vals[lobe] = est.plain
        assert vals[1] == pytest.approx(0.46019086, rel=1e-5)
        assert vals[2] == pytest.approx(0.08269637, rel=1e-5)
        assert vals[3] == pytest.approx(0.23543774, rel=1e-5)
        assert vals[2] < vals[3] < vals[1]

    def test_linear_in_drift_amplitude(self):
        lo = TwoDiskSystem(beta_amp=0.5)
        hi = TwoDiskSystem(beta_amp=1.5)
        a_lo = alpha_limit(lo, 2, n_panels=10)
        a_hi = alpha_limit(hi, 2, n_panels=10)
        assert a_hi.plain == pytest.approx(3.0 * a_lo.plain, rel=1e-8)


class TestWeights:
    def test_sum_to_one(self, sys0):
        w = metastable_weights(sys0)
        assert sum(w.values()) == pytest.approx(1.0, abs=1e-12)

    def test_symmetric_preset_uniform(self):
        w = metastable_weights(symmetric_system())
        for i in (1, 2, 3):
            assert w[i] == pytest.approx(1.0 / 3.0, abs=1e-8)

    def test_two_target_split(self, sys0):
        w = metastable_weights(sys0, targets=(2, 3))
        p2 = math.sqrt(a_hat_zero(sys0, 2) * gamma(sys0, 2))
        p3 = math.sqrt(a_hat_zero(sys0, 3) * gamma(sys0, 3))
        assert w[2] == pytest.approx(p2 / (p2 + p3), rel=1e-12)
        assert set(w) == {2, 3}

    def test_mirror_pair_equal_when_symmetric(self):
        w = metastable_weights(TwoDiskSystem(diff_asym=0.0), targets=(1, 3))
        assert w[1] == pytest.approx(0.5, abs=1e-10)

    def test_bad_targets(self, sys0):
        with pytest.raises(ValueError):
            metastable_weights(sys0, targets=(1,))

    def test_symmetric_offset_balances_transport(self):
        a = symmetric_offset()
        s = TwoDiskSystem(offset=a, diff_asym=0.0)
        assert 2 * a_hat_zero(s, 2) == pytest.approx(a_hat_zero(s, 1), rel=1e-9)


class TestMeshStability:
    def test_gamma_a_hat_alpha_halving(self, sys0):
        for lobe in (1, 2):
            g1 = gamma(sys0, lobe, n_panels=12)
            g2 = gamma(sys0, lobe, n_panels=24)
            assert abs(g2 - g1) / abs(g2) < 1e-5
            h1 = a_hat_zero(sys0, lobe, n_panels=12)
            h2 = a_hat_zero(sys0, lobe, n_panels=24)
            assert abs(h2 - h1) / abs(h2) < 1e-5
        a1 = alpha_limit(sys0, 2, n_panels=8)
        a2 = alpha_limit(sys0, 2, n_panels=16)
        assert abs(a2.plain - a1.plain) / a2.plain < 1e-5
