"""Finite-noise ground truth for the chain hierarchy.

Everything the hierarchy predicts asymptotically is checked here at concrete
eps: exact stationary vectors (cancellation-free GTH elimination, accurate
entrywise even when components differ by hundreds of orders of magnitude),
spanning in-tree brute force for the stationary exponents, n-step
distributions via repeated squaring in 80-bit arithmetic, accelerated exit
Monte Carlo on the embedded jump chain, and an affine fit extrapolating
eps*log(value) to eps = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np
from numba import njit, prange

from .hierarchy import INF, _strongly_connected

ORACLE_STATE_CAP = 12
WGRAPH_STATE_CAP = 7
SQUARING_CAP = 400
DRIFT_CAP = 1e-6


class DiagonalNegative(ValueError):
    """eps too large for the exponent scale: a diagonal went negative."""

    def __init__(self, state: int, eps: float):
        self.state = state
        self.eps = eps
        super().__init__(f"p[{state},{state}] < 0 at eps={eps}")


class Reducible(ValueError):
    """The chain's positive-probability support is not irreducible."""


class TooLarge(ValueError):
    """State count beyond the brute-force enumeration cap."""


class PrecisionLoss(ArithmeticError):
    """Row-sum drift exceeded the tracked tolerance during squaring."""


class ReplicaBudgetExceeded(RuntimeError):
    """A Monte Carlo replica exceeded the configured jump cap."""


class DegenerateGrid(ValueError):
    """Too few or non-distinct eps values for a rate fit."""


@dataclass(frozen=True)
class FiniteEpsilonChain:
    """Stochastic matrix p_ij = exp(-E_ij/eps) off the diagonal."""

    exponents: np.ndarray
    epsilon: float
    probabilities: np.ndarray

    @property
    def size(self) -> int:
        return self.probabilities.shape[0]


def build_chain(exponents, eps: float, state_cap: int = ORACLE_STATE_CAP) -> FiniteEpsilonChain:
    """Exponent table -> transition matrix at concrete eps.

    Infinite exponents give probability zero; the diagonal absorbs the
    complement and must stay nonnegative.  state_cap guards the dense
    enumeration-style uses downstream.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    E = np.array(
        [[float(v) for v in row] for row in exponents], dtype=np.float64
    )
    n = E.shape[0]
    if n > state_cap:
        raise TooLarge(f"{n} states > oracle cap {state_cap}")
    with np.errstate(over="ignore"):
        P = np.where(np.isfinite(E), np.exp(-E / eps), 0.0)
    np.fill_diagonal(P, 0.0)
    off = P.sum(axis=1)
    for i in range(n):
        if off[i] > 1.0:
            raise DiagonalNegative(i, eps)
    P[np.arange(n), np.arange(n)] = 1.0 - off
    return FiniteEpsilonChain(exponents=E, epsilon=eps, probabilities=P)


def _require_irreducible(P: np.ndarray) -> None:
    n = P.shape[0]
    targets = tuple(
        frozenset(j for j in range(n) if j != i and P[i, j] > 0.0)
        for i in range(n)
    )
    if len(_strongly_connected(n, targets)) != 1:
        raise Reducible("positive-probability support decomposes")


def stationary_exact(chain: FiniteEpsilonChain) -> np.ndarray:
    """Stationary vector of qP = q by GTH elimination.

    GTH uses only additions and multiplications of nonnegative numbers, so
    every component keeps full relative accuracy regardless of how small it
    is.  The residual ||qP - q||_inf is checked against 1e-12.
    """
    P = chain.probabilities
    _require_irreducible(P)
    n = P.shape[0]
    A = P.astype(np.float64).copy()
    np.fill_diagonal(A, 0.0)
    for k in range(n - 1, 0, -1):
        s = A[k, :k].sum()
        if s <= 0.0:
            raise Reducible("elimination found an isolated block")
        A[:k, k] /= s
        for i in range(k):
            A[i, :k] += A[i, k] * A[k, :k]
    q = np.zeros(n)
    q[0] = 1.0
    for k in range(1, n):
        q[k] = q[:k] @ A[:k, k]
    q /= q.sum()
    residual = np.max(np.abs(q @ P - q))
    if residual > 1e-12:
        raise ArithmeticError(f"stationary residual {residual:.3e} > 1e-12")
    return q


def wgraph_exponent(exponents, root: int):
    """Minimal total cost over spanning in-trees rooted at `root`.

    Exhaustive enumeration of one out-edge per non-root state, keeping only
    assignments whose arrows all lead to the root.  Returns (minimum,
    achiever count); exact when the costs are exact.
    """
    n = len(exponents)
    if n > WGRAPH_STATE_CAP:
        raise TooLarge(f"{n} states > cap {WGRAPH_STATE_CAP}")
    others = [i for i in range(n) if i != root]
    choices = []
    for i in others:
        outs = [j for j in range(n) if j != i and exponents[i][j] != INF]
        if not outs:
            return INF, 0
        choices.append(outs)
    best = INF
    count = 0
    for combo in product(*choices):
        succ = dict(zip(others, combo))
        ok = True
        for i in others:
            seen = set()
            v = i
            while v != root:
                if v in seen:
                    ok = False
                    break
                seen.add(v)
                v = succ[v]
            if not ok:
                break
        if not ok:
            continue
        cost = sum(exponents[i][succ[i]] for i in others)
        if cost < best:
            best, count = cost, 1
        elif cost == best and best != INF:
            count += 1
    return best, count


def stationary_log_limits(exponents) -> tuple:
    """Limit of eps*log(q_j) per state, from the in-tree minima.

    Equals -(W(j) - min_k W(k)); on a chain built from its own arrows this
    reproduces the measure rates alpha_j - r.
    """
    n = len(exponents)
    W = [wgraph_exponent(exponents, j)[0] for j in range(n)]
    w0 = min(W)
    out = []
    for w in W:
        if w == INF:
            out.append(-INF)
        else:
            out.append(-(w - w0))
    return tuple(out)


@dataclass(frozen=True)
class NStepResult:
    """Rows of P^T with the accumulated row-sum drift of the squaring."""

    matrix: np.ndarray
    steps: int
    squarings: int
    drift: float


def _integer_part_exp(ratio: float) -> int:
    """Integer part of exp(ratio), exact via arbitrary precision."""
    import mpmath

    with mpmath.workprec(int(ratio * 1.5) + 64):
        return int(mpmath.floor(mpmath.exp(ratio)))


def nstep_distribution(chain: FiniteEpsilonChain, lam: float) -> NStepResult:
    """P^[T] for T = exp(lam/eps), by binary powering in 80-bit floats.

    Rows are renormalised after every multiply; the worst pre-normalisation
    deviation from row sum 1 is reported and must stay below 1e-6.
    """
    eps = chain.epsilon
    squarings = int(math.ceil(lam / (eps * math.log(2.0))))
    if squarings > SQUARING_CAP:
        raise TooLarge(f"{squarings} squarings > cap {SQUARING_CAP}")
    T = _integer_part_exp(lam / eps)
    bits = bin(T)[2:]
    base = chain.probabilities.astype(np.longdouble)
    acc = None
    drift = 0.0

    def _norm(M):
        nonlocal drift
        sums = M.sum(axis=1)
        drift = max(drift, float(np.max(np.abs(sums - 1.0))))
        return M / sums[:, None]

    for b in bits:
        if acc is None:
            acc = base.copy()
        else:
            acc = _norm(acc @ acc)
            if b == "1":
                acc = _norm(acc @ base)
    if drift > DRIFT_CAP:
        raise PrecisionLoss(f"row-sum drift {drift:.3e} > {DRIFT_CAP}")
    return NStepResult(
        matrix=np.asarray(acc, dtype=np.float64),
        steps=T,
        squarings=squarings,
        drift=drift,
    )


@dataclass(frozen=True)
class ExitStatistics:
    """Monte Carlo exit summary for one (chain, inside-set, eps)."""

    mean_exit_steps: float
    fitted_exponent: float
    exit_state_freq: dict
    penultimate_freq: dict
    replicas: int
    mean_halfwidth: float
    freq_halfwidth: float


@njit(cache=True, parallel=True)
def _exit_kernel(jump_cum, off_sum, inside, start, seeds, cap, exits, pens, times):
    # reseeding the thread-local generator per replica makes every replica's
    # stream a function of its own seed only, so results do not depend on
    # thread scheduling
    n = jump_cum.shape[0]
    reps = seeds.shape[0]
    for r in prange(reps):
        np.random.seed(seeds[r])
        s = start
        t = 0.0
        jumps = 0
        while True:
            t += 1.0 / off_sum[s]
            u = np.random.random() * off_sum[s]
            nxt = n - 1
            for j in range(n):
                if u < jump_cum[s, j]:
                    nxt = j
                    break
            if not inside[nxt]:
                exits[r] = nxt
                pens[r] = s
                times[r] = t
                break
            s = nxt
            jumps += 1
            if jumps > cap:
                exits[r] = -1
                pens[r] = -1
                times[r] = t
                break


def simulate_exit(
    chain: FiniteEpsilonChain,
    start: int,
    inside,
    replicas: int,
    seed: int,
    jump_cap: int = 200_000_000,
) -> ExitStatistics:
    """Embedded-jump-chain Monte Carlo until the trajectory leaves `inside`.

    Holding times are accumulated in expectation (1/(1-p_ss) per visit), so
    the exit-time mean is unbiased while each replica only samples the jump
    sequence.  Replica r uses its own seed derived from (seed, r); results
    do not depend on execution batching.
    """
    inside = frozenset(inside)
    if start not in inside:
        raise ValueError("start must lie inside the retained set")
    P = chain.probabilities
    n = chain.size
    off = P.copy()
    np.fill_diagonal(off, 0.0)
    off_sum = off.sum(axis=1)
    if np.any(off_sum[list(inside)] <= 0.0):
        raise Reducible("an inside state cannot jump at all")
    jump_cum = np.cumsum(off, axis=1)
    mask = np.zeros(n, dtype=np.bool_)
    mask[list(inside)] = True
    seeds = np.array(
        [
            np.random.SeedSequence((seed, r)).generate_state(1)[0]
            for r in range(replicas)
        ],
        dtype=np.uint32,
    )
    exits = np.empty(replicas, dtype=np.int64)
    pens = np.empty(replicas, dtype=np.int64)
    times = np.empty(replicas, dtype=np.float64)
    _exit_kernel(jump_cum, off_sum, mask, start, seeds, jump_cap, exits, pens, times)
    if np.any(exits < 0):
        raise ReplicaBudgetExceeded(f"jump cap {jump_cap} hit")
    mean = float(times.mean())
    se = float(times.std(ddof=1) / math.sqrt(replicas))
    exit_freq = {
        int(s): float(np.mean(exits == s)) for s in np.unique(exits)
    }
    pen_freq = {int(s): float(np.mean(pens == s)) for s in np.unique(pens)}
    return ExitStatistics(
        mean_exit_steps=mean,
        fitted_exponent=chain.epsilon * math.log(mean),
        exit_state_freq=exit_freq,
        penultimate_freq=pen_freq,
        replicas=replicas,
        mean_halfwidth=1.96 * se,
        freq_halfwidth=1.96 * 0.5 / math.sqrt(replicas),
    )


@dataclass(frozen=True)
class ExitSolve:
    """Exact absorption quantities for the same experiment, by linear solve."""

    mean_exit_steps: float
    exit_state_probs: dict
    penultimate_probs: dict


def exit_solve(chain: FiniteEpsilonChain, start: int, inside) -> ExitSolve:
    """Closed-form cross-check of simulate_exit on small instances."""
    inside = sorted(frozenset(inside))
    if start not in inside:
        raise ValueError("start must lie inside the retained set")
    P = chain.probabilities
    n = chain.size
    outside = [j for j in range(n) if j not in inside]
    idx = {s: i for i, s in enumerate(inside)}
    Q = P[np.ix_(inside, inside)]
    Ieye = np.eye(len(inside))
    # row of the fundamental matrix for the start state
    e = np.zeros(len(inside))
    e[idx[start]] = 1.0
    row = np.linalg.solve((Ieye - Q).T, e)
    exit_rows = P[np.ix_(inside, outside)].sum(axis=1)
    pen = row * exit_rows
    pen = pen / pen.sum()
    land = row @ P[np.ix_(inside, outside)]
    land = land / land.sum()
    return ExitSolve(
        mean_exit_steps=float(row.sum()),
        exit_state_probs={int(o): float(v) for o, v in zip(outside, land)},
        penultimate_probs={int(s): float(v) for s, v in zip(inside, pen)},
    )


@dataclass(frozen=True)
class RateFit:
    """Affine fit of eps*log(v) against eps: intercept is the eps->0 limit."""

    intercept: float
    slope: float
    residual: float


def rate_fit(eps_grid, values) -> RateFit:
    """Least-squares extrapolation of eps*ln v(eps) to eps = 0."""
    eps = np.asarray(eps_grid, dtype=np.float64)
    vals = np.asarray(values, dtype=np.float64)
    if eps.size < 3 or np.unique(eps).size < 3:
        raise DegenerateGrid("need at least three distinct eps values")
    if np.any(vals <= 0.0):
        raise ValueError("values must be positive")
    y = eps * np.log(vals)
    slope, intercept = np.polyfit(eps, y, 1)
    resid = float(np.max(np.abs(intercept + slope * eps - y)))
    return RateFit(intercept=float(intercept), slope=float(slope), residual=resid)
