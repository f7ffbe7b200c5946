import math

import numpy as np
import pytest

from metachain.oracle import rate_fit
from metachain.sde import (
    edge_exit_time_exact,
    edge_exit_times,
    edge_tables,
    hit_distribution,
    simulate_sde,
)
from metachain.twodisk import TwoDiskSystem, metastable_weights, symmetric_system


@pytest.fixture(scope="module")
def sys0():
    return TwoDiskSystem()


def no_stop(x, y):
    return None


class TestDeterministicRuns:
    def test_lens_energy_monotone(self, sys0):
        out = simulate_sde(
            sys0, (0.3, 0.05), delta=0.02, kappa=0.0, t_max=6.0, seed=1,
            stop=no_stop, path_every=5,
        )
        H = np.array([sys0.hamiltonian(x, y) for _, x, y in out.path])
        assert np.min(np.diff(H)) > -1e-9
        assert H[-1] == pytest.approx(sys0.hamiltonian(0.0, 0.0), abs=1e-5)

    def test_exterior_approaches_separatrix(self, sys0):
        out = simulate_sde(
            sys0, (0.0, 1.5), delta=0.02, kappa=0.0, t_max=6.0, seed=1,
            stop=no_stop, path_every=5,
        )
        H = np.array([sys0.hamiltonian(x, y) for _, x, y in out.path])
        assert np.min(np.diff(H)) < 0
        assert H[-1] < 0.05 < H[0]

    def test_crescent_descends_to_minimum(self, sys0):
        out = simulate_sde(
            sys0, (-1.25, 0.25), delta=0.02, kappa=0.0, t_max=6.0, seed=1,
        )
        assert out.cause == "hit"
        assert out.label == 1

    def test_dt_precondition(self, sys0):
        with pytest.raises(ValueError):
            simulate_sde(sys0, (0.3, 0.0), delta=0.02, kappa=0.1, dt=0.01)
        with pytest.raises(ValueError):
            hit_distribution(
                sys0, (0.0, 1.5), delta=0.02, kappa=0.1, replicas=10, seed=0,
                dt=0.01,
            )


class TestHitDistribution:
    def test_seed_reproducibility(self, sys0):
        a = hit_distribution(sys0, (0.0, 1.5), 0.02, 0.3, replicas=300, seed=5)
        b = hit_distribution(sys0, (0.0, 1.5), 0.02, 0.3, replicas=300, seed=5)
        assert a == b
        c = hit_distribution(sys0, (0.0, 1.5), 0.02, 0.3, replicas=300, seed=6)
        assert c.counts != a.counts

    def test_exterior_start_commits_everywhere(self, sys0):
        hd = hit_distribution(sys0, (0.0, 1.5), 0.02, 0.3, replicas=1200, seed=7)
        assert hd.targets == (1, 2, 3)
        assert hd.escaped == 0 and hd.timed_out == 0
        assert sum(hd.frequencies.values()) == pytest.approx(1.0, abs=1e-12)
        assert all(h > 0 for h in hd.halfwidths.values())

    def test_symmetric_start_splits_evenly_sideways(self):
        s = symmetric_system()
        hd = hit_distribution(s, (0.0, 1.5), 0.02, 0.3, replicas=1500, seed=9)
        p1, p3 = hd.frequencies[1], hd.frequencies[3]
        se = math.sqrt((p1 + p3) / 2 * (1 - (p1 + p3) / 2) * 2 / 1500)
        assert abs(p1 - p3) <= 3 * se

    def test_default_weights_coarse_agreement(self, sys0):
        hd = hit_distribution(sys0, (0.0, 1.5), 0.02, 0.3, replicas=1500, seed=3)
        th = metastable_weights(sys0)
        for i in (1, 2, 3):
            assert abs(hd.frequencies[i] - th[i]) < 0.1

    def test_two_target_inference_and_split(self):
        # inflated drift so the lens barrier is crossable at kappa = 0.5
        s = TwoDiskSystem(beta_amp=2.0)
        hd = hit_distribution(s, (0.3, 0.0), 0.02, 0.5, replicas=3000, seed=13)
        assert hd.targets == (1, 3)
        th = metastable_weights(s, targets=(1, 3))
        for i in (1, 3):
            assert abs(hd.frequencies[i] - th[i]) <= 0.07


class TestEdgeDiffusion:
    def test_escape_cost_carries_factor_two(self):
        # The asymptotic escape cost of the averaged edge diffusion must
        # match the doubled level integral (stationary escape rate of
        # (kappa/2) a u'' + beta u'), not the plain one.  Exact means via
        # the two-boundary quadrature, extrapolated over a kappa grid.
        s = TwoDiskSystem(beta_amp=4.0)
        tabs = edge_tables(s, 2, grid_points=512)
        kgrid = np.linspace(0.04, 0.1, 8)
        exact = [edge_exit_time_exact(*tabs, k) for k in kgrid]
        fit = rate_fit(kgrid, exact)
        u, b, a = tabs
        depth = abs(s.lobe_extremum(2))
        mask = (u >= 0.05 * depth) & (u <= 0.9 * depth)
        plain = float(np.trapezoid(b[mask] / a[mask], u[mask]))
        doubled = 2.0 * plain
        assert abs(fit.intercept - doubled) < abs(fit.intercept - plain)
        assert fit.intercept == pytest.approx(doubled, rel=0.1)

    def test_monte_carlo_validates_exact_means(self):
        s = TwoDiskSystem(beta_amp=4.0)
        tabs = edge_tables(s, 2, grid_points=512)
        means, cand = edge_exit_times(
            s, 2, [0.25, 0.32], replicas=300, seed=5, dt=2e-4, tables=tabs
        )
        assert cand["doubled"] == pytest.approx(2 * cand["plain"], rel=1e-12)
        for k, m in zip([0.25, 0.32], means):
            exact = edge_exit_time_exact(*tabs, k)
            # Euler discretisation biases the absorbing boundary by a few
            # percent; 300 replicas add ~6% statistical error
            assert m == pytest.approx(exact, rel=0.3)
