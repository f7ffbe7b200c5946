"""Metastable-set queries against a chain hierarchy.

Given a start label i and a time-scale exponent lambda (time exp(lambda/eps)),
locate the deepest unit of i's rank sequence whose exit rate exceeds lambda.
If that unit mixes below lambda, the mass sits on its recursively flattened
main subset (the fast path).  Otherwise the unit has not equilibrated: mass
relays along sub-lambda arrows, and every label whose own trapping unit mixes
contributes its flattened main subset.  Ties make several landings equally
likely, so results are sets; a multi-label set is reported as ambiguous
because the split needs pre-exponential data the cost table does not carry.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .hierarchy import INF, Chain, Hierarchy


class BreakpointLambda(ValueError):
    """lambda is too close to a rate of the hierarchy to classify."""


class Certainty(enum.Enum):
    SINGLETON = "singleton"
    AMBIGUOUS_SET = "ambiguous_set"


@dataclass(frozen=True)
class MetastableQuery:
    """Start label, scale exponent and the guard margin around breakpoints."""

    label: int
    lam: float
    margin: float = 1e-9

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lambda must be positive")


@dataclass(frozen=True)
class MetastablePath:
    """Which rule fired and at what rank, plus the labels the relay visited."""

    rule: str
    rank: int
    visited: tuple


@dataclass(frozen=True)
class MetastableResult:
    labels: frozenset
    certainty: Certainty
    path: MetastablePath


def _check_margin(hier: Hierarchy, lam, margin) -> None:
    for b in hier.breakpoints():
        if abs(lam - b) < margin:
            raise BreakpointLambda(f"lambda={lam} within {margin} of rate {b}")


def _locate(hier: Hierarchy, label: int, lam):
    """Smallest k with lam < e_k(label); returns (k, mixing_rate, unit)."""
    breaks = hier.exit_breaks(label)
    seq = hier.rank_sequence(label)
    for k, e in enumerate(breaks):
        if lam < e:
            if k == 0:
                return 0, 0, label
            chain = seq[k - 1]
            return k, chain.mixing_rate, chain
    raise AssertionError("top exit rate must be infinite")


def metastable_fast_path(
    label: int, lam, hier: Hierarchy, margin: float = 1e-9
) -> MetastableResult | None:
    """Fast path: main subset of the trapping unit, when it mixes in time.

    Returns None when the trapping unit's mixing rate exceeds lambda; the
    general algorithm must take over.
    """
    _check_margin(hier, lam, margin)
    k, mixing, unit = _locate(hier, label, lam)
    if not mixing < lam:
        return None
    if k == 0:
        labels = frozenset((label,))
    else:
        labels = hier.chain_flatten_main(unit)
    return MetastableResult(
        labels=labels,
        certainty=Certainty.SINGLETON if len(labels) == 1 else Certainty.AMBIGUOUS_SET,
        path=MetastablePath(rule="mixed", rank=k, visited=(label,)),
    )


def ambiguity_set(label: int, lam, chain: Chain, margin: float = 1e-9) -> frozenset:
    """Reachable-and-trapped members of a non-mixed chain.

    Follows the chain's arrows from `label` through members whose alpha is
    below lambda and keeps every reached member whose alpha exceeds lambda.
    If the start itself holds longer than lambda the answer is {label}.
    Requires depth_rate(chain) > lambda so the trapped set is nonempty.
    """
    if not chain.depth_rate > lam:
        raise ValueError("chain mixes below lambda; no trapped set")
    if label not in chain.members:
        raise ValueError("label not in chain")
    for a in chain.alphas:
        if a != INF and abs(lam - a) < margin:
            raise BreakpointLambda(f"lambda={lam} within {margin} of alpha {a}")
    alpha = dict(zip(chain.members, chain.alphas))
    targets = dict(zip(chain.members, chain.targets))
    inside = frozenset(chain.members)
    if alpha[label] > lam:
        return frozenset((label,))
    reached = {label}
    stack = [label]
    while stack:
        v = stack.pop()
        if alpha[v] > lam:
            continue
        for w in targets[v]:
            if w in inside and w not in reached:
                reached.add(w)
                stack.append(w)
    return frozenset(v for v in reached if alpha[v] > lam)


def metastable_general(
    label: int, lam, hier: Hierarchy, margin: float = 1e-9
) -> MetastableResult:
    """Metastable set for any start label and scale, by label relay.

    Each frontier label climbs its rank sequence to the first unit whose
    exit rate exceeds lambda.  A unit that mixes below lambda traps the
    mass on its flattened main subset; otherwise the mass is known to have
    already left the next unit down, so its exit landings (all achievers,
    ties kept) re-enter the frontier.  Terminates because every label is
    processed at most once.
    """
    _check_margin(hier, lam, margin)
    first_k, first_mixing, _ = _locate(hier, label, lam)
    rule = "mixed" if first_mixing < lam else "relay"

    result: set = set()
    frontier = [label]
    processed: set = set()
    order = []
    while frontier:
        j = frontier.pop()
        if j in processed:
            continue
        processed.add(j)
        order.append(j)
        k, mixing, unit = _locate(hier, j, lam)
        if mixing < lam:
            if k == 0:
                result.add(j)
            else:
                result |= hier.chain_flatten_main(unit)
        else:
            # The rank-(k-1) unit around j exits below lambda: relay to all
            # labels its exit can land on.
            unit_idx = hier.unit_sequence(j)[k - 1]
            landings = hier.landing_labels(k - 1, unit_idx)
            for t in sorted(landings):
                if t not in processed:
                    frontier.append(t)
    labels = frozenset(result)
    return MetastableResult(
        labels=labels,
        certainty=Certainty.SINGLETON if len(labels) == 1 else Certainty.AMBIGUOUS_SET,
        path=MetastablePath(rule=rule, rank=first_k, visited=tuple(order)),
    )


@dataclass(frozen=True)
class RegimeRow:
    lam_lo: float
    lam_hi: float
    result: MetastableResult


def regime_table(label: int, hier: Hierarchy, margin: float = 1e-9) -> list:
    """Metastable answer per lambda interval between hierarchy breakpoints.

    Evaluates the general algorithm at interval midpoints (the last interval
    at its left end plus one) and merges neighbours whose labels, certainty,
    rule and rank all agree.
    """
    bps = hier.breakpoints()
    edges = [0] + bps + [INF]
    rows = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid = lo + 1 if hi == INF else (lo + hi) / 2
        res = metastable_general(label, mid, hier, margin=margin)
        rows.append(RegimeRow(lam_lo=lo, lam_hi=hi, result=res))
    merged = [rows[0]]
    for row in rows[1:]:
        prev = merged[-1]
        same = (
            row.result.labels == prev.result.labels
            and row.result.certainty == prev.result.certainty
            and row.result.path.rule == prev.result.path.rule
            and row.result.path.rank == prev.result.path.rank
        )
        if same:
            merged[-1] = RegimeRow(prev.lam_lo, row.lam_hi, prev.result)
        else:
            merged.append(row)
    return merged
