import math

import numpy as np
import pytest

from metachain.hierarchy import build_hierarchy
from metachain.metastable import (
    BreakpointLambda,
    Certainty,
    ambiguity_set,
    metastable_general,
    metastable_fast_path,
    regime_table,
)
from conftest import random_costs

INF = math.inf


class TestFastPath:
    def test_funnel5_mid_window(self, funnel5_hier):
        res = metastable_fast_path(0, 4.0, funnel5_hier)
        assert res.labels == frozenset({2})
        assert res.path.rank == 1

    def test_funnel5_rank2_window(self, funnel5_hier):
        res = metastable_fast_path(0, 9.5, funnel5_hier)
        assert res.labels == frozenset({2})
        assert res.path.rank == 2

    def test_ring3_above_depth_rate(self, ring3_hier):
        res = metastable_fast_path(0, 3.5, ring3_hier)
        assert res.labels == frozenset({2})

    def test_not_applicable_when_unmixed(self, ring3_hier):
        assert metastable_fast_path(0, 1.5, ring3_hier) is None

    def test_breakpoint_rejected(self, funnel5_hier):
        with pytest.raises(BreakpointLambda):
            metastable_fast_path(0, 9.0, funnel5_hier)
        with pytest.raises(BreakpointLambda):
            metastable_fast_path(0, 3.0 + 1e-12, funnel5_hier)


class TestAmbiguitySet:
    def test_ring3_two_survivors(self, ring3_hier):
        chain = ring3_hier.levels[0].chains[0]
        assert ambiguity_set(0, 1.5, chain) == frozenset({1, 2})

    def test_ring3_single_survivor(self, ring3_hier):
        chain = ring3_hier.levels[0].chains[0]
        assert ambiguity_set(0, 2.5, chain) == frozenset({2})

    def test_start_already_held(self, ring3_hier):
        chain = ring3_hier.levels[0].chains[0]
        assert ambiguity_set(2, 1.5, chain) == frozenset({2})

    def test_requires_unmixed_chain(self, ring3_hier):
        chain = ring3_hier.levels[0].chains[0]
        with pytest.raises(ValueError):
            ambiguity_set(0, 3.5, chain)


class TestGeneral:
    def test_funnel5_below_everything(self, funnel5_hier):
        res = metastable_general(4, 0.5, funnel5_hier)
        assert res.labels == frozenset({4})
        assert res.certainty is Certainty.SINGLETON
        assert res.path.rank == 0

    def test_funnel5_funnels_to_three(self, funnel5_hier):
        res = metastable_general(0, 2.5, funnel5_hier)
        assert res.labels == frozenset({2})
        assert res.path.rule == "relay"

    def test_funnel5_ambiguous_pair(self, funnel5_hier):
        res = metastable_general(0, 1.5, funnel5_hier)
        assert res.labels == frozenset({1, 2})
        assert res.certainty is Certainty.AMBIGUOUS_SET

    def test_ring3_narrative(self, ring3_hier):
        assert metastable_general(0, 0.5, ring3_hier).labels == frozenset({0})
        assert metastable_general(0, 1.5, ring3_hier).labels == frozenset({1, 2})
        assert metastable_general(0, 2.5, ring3_hier).labels == frozenset({2})
        assert metastable_general(0, 3.5, ring3_hier).labels == frozenset({2})

    def test_outward_tie_spreads_mass(self):
        # {1,2} is a mutual pair, but 1's minimum is tied between 2 and 3;
        # half the mass commits to 3 on the very first jump, so 3 must be
        # part of the answer even though it lies outside the chain of 1.
        from metachain.hierarchy import QuasiPotentialMatrix

        rows = [
            [INF, 1.0, 1.0, 9.0],
            [2.0, INF, 9.0, 9.0],
            [9.0, 9.0, INF, 8.0],
            [9.0, 9.0, 6.0, INF],
        ]
        h = build_hierarchy(QuasiPotentialMatrix.from_rows(rows))
        res = metastable_general(0, 1.5, h)
        assert res.labels == frozenset({1, 2})
        assert res.certainty is Certainty.AMBIGUOUS_SET

    def test_monotone_absorption_top_scale(self, funnel5_hier):
        top_labels = funnel5_hier.chain_flatten_main(funnel5_hier.top())
        for i in range(5):
            res = metastable_general(i, 50.0, funnel5_hier)
            assert res.labels == top_labels

    def test_scaling_queries(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            V = random_costs(rng, 4, tied_rows=1)
            h = build_hierarchy(V)
            hc = build_hierarchy(V.scaled(3.0))
            lam = 1.3
            a = metastable_general(0, lam, h).labels
            b = metastable_general(0, 3.0 * lam, hc).labels
            assert a == b

    def test_result_within_trapping_chain_flatten(self, funnel5_hier):
        for i in range(5):
            for lam in (0.5, 1.5, 2.5, 4.0, 9.5, 10.5):
                res = metastable_general(i, lam, funnel5_hier)
                assert res.labels
                assert res.labels <= frozenset(range(5))

    def test_generic_results_singleton(self):
        rng = np.random.default_rng(21)
        from metachain.hierarchy import detect_rough_symmetry

        for _ in range(20):
            V = random_costs(rng, 5)
            if detect_rough_symmetry(V).has_ties:
                continue
            h = build_hierarchy(V)
            bps = h.breakpoints()
            mids = [b + 0.05 for b in bps[:-1]] + [bps[-1] + 1.0]
            for i in range(5):
                for lam in mids:
                    if min(abs(lam - b) for b in bps) < 1e-9:
                        continue
                    res = metastable_general(i, lam, h)
                    assert res.certainty is Certainty.SINGLETON


class TestRegimeTable:
    def test_ring3_from_one(self, ring3_hier):
        rows = regime_table(0, ring3_hier)
        got = [(r.lam_lo, r.lam_hi, sorted(r.result.labels)) for r in rows]
        assert got == [
            (0, 1.0, [0]),
            (1.0, 2.0, [1, 2]),
            (2.0, 3.0, [2]),
            (3.0, INF, [2]),
        ]

    def test_ring3_from_three_always_three(self, ring3_hier):
        rows = regime_table(2, ring3_hier)
        assert all(r.result.labels == frozenset({2}) for r in rows)

    def test_funnel5_from_one(self, funnel5_hier):
        rows = regime_table(0, funnel5_hier)
        # first two regimes as in the five-state walkthrough
        assert (rows[0].lam_lo, rows[0].lam_hi) == (0, 1.0)
        assert rows[0].result.labels == frozenset({0})
        assert (rows[1].lam_lo, rows[1].lam_hi) == (1.0, 2.0)
        assert rows[1].result.labels == frozenset({0 + 1, 2})
        # everything from 2 to 9 funnels to label 3 (index 2)
        for r in rows:
            if r.lam_lo >= 2.0 and r.lam_hi <= 9.0:
                assert r.result.labels == frozenset({2})

    def test_rows_cover_positive_axis(self, funnel5_hier):
        for i in range(5):
            rows = regime_table(i, funnel5_hier)
            assert rows[0].lam_lo == 0
            assert rows[-1].lam_hi == INF
            for a, b in zip(rows[:-1], rows[1:]):
                assert a.lam_hi == b.lam_lo
