import math
from fractions import Fraction

import pytest

from metachain.hierarchy import QuasiPotentialMatrix, build_hierarchy

INF = math.inf


def ring3_matrix(exact: bool = False):
    """Three labels ringed by a fully tied arrow system: V_ij = alpha_i."""
    one, two, three = (
        (Fraction(1), Fraction(2), Fraction(3)) if exact else (1.0, 2.0, 3.0)
    )
    rows = [
        [INF, one, one],
        [two, INF, two],
        [three, three, INF],
    ]
    return QuasiPotentialMatrix.from_rows(rows)


def funnel5_matrix(exact: bool = False):
    """Five labels: chain {1,2,3} plus two singletons feeding back into it."""

    def n(x):
        return Fraction(x) if exact else float(x)

    rows = [
        [INF, n(1), n(1), n(7), n(10)],
        [n(10), INF, n(2), n(10), n(10)],
        [n(3), n(10), INF, n(10), n(10)],
        [n(5), n(10), n(10), INF, n(10)],
        [n(6), n(10), n(10), n(10), INF],
    ]
    return QuasiPotentialMatrix.from_rows(rows)


@pytest.fixture
def ring3():
    return ring3_matrix()


@pytest.fixture
def funnel5():
    return funnel5_matrix()


@pytest.fixture
def ring3_hier(ring3):
    return build_hierarchy(ring3)


@pytest.fixture
def funnel5_hier(funnel5):
    return build_hierarchy(funnel5)


def random_costs(rng, l, grid=None, lo=0.5, hi=5.0, tied_rows=0):
    """Random cost matrix; grid snaps entries to multiples (enables exact
    breakpoints), tied_rows forces that many rows to have a duplicated
    minimum."""
    rows = []
    for i in range(l):
        row = []
        for j in range(l):
            if i == j:
                row.append(INF)
                continue
            v = rng.uniform(lo, hi)
            if grid is not None:
                steps = max(1, round((hi - lo) / grid))
                v = lo + grid * rng.integers(0, steps + 1)
            row.append(float(v))
        rows.append(row)
    if tied_rows:
        which = rng.choice(l, size=min(tied_rows, l), replace=False)
        for i in which:
            off = [j for j in range(l) if j != i]
            m = min(rows[i][j] for j in off)
            extra = rng.choice([j for j in off if rows[i][j] != m] or off)
            rows[i][extra] = m
    return QuasiPotentialMatrix.from_rows(rows)
