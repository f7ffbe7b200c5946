"""Hierarchy of Markov chains built from a table of transition costs.

The input is an l x l table V of nonnegative costs between attractor labels
(math.inf marks a forbidden transition).  Row minima alpha_i and their
achievers define a system of arrows; mutual arrow-reachability classes are
the rank-1 chains.  Each chain carries a depth rate r, per-member measure
rates m_i = alpha_i - r, an exit rate e and exit/landing sets I and J.
Exit rates become the arrow costs of the next rank, and the construction
recurses until a single chain covers everything.

Entries may be ints, floats or fractions.Fraction; all derived rates are
computed in the same arithmetic, so exact inputs give exact rates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

INF = math.inf


class RowAllInfinite(ValueError):
    """A label has no finite-cost transition to anywhere."""

    def __init__(self, row: int):
        self.row = row
        super().__init__(f"row {row} has no finite off-diagonal cost")


def _sub(a, r):
    """a - r under the conventions used for absorbing units (inf - inf = 0)."""
    if r == INF:
        return 0 if a == INF else -INF
    return a - r


def _add(r, v, a):
    """r + v - a for the exit minimum, tolerating infinities."""
    if v == INF or r == INF:
        return INF
    return r + v - a


@dataclass(frozen=True)
class QuasiPotentialMatrix:
    """Square table of transition costs V_ij between attractor labels.

    The diagonal is ignored.  math.inf means "no finite-cost transition".
    """

    cost: tuple
    labels: tuple

    def __post_init__(self):
        l = len(self.cost)
        if l < 2:
            raise ValueError("need at least two labels")
        if len(self.labels) != l:
            raise ValueError("labels/cost size mismatch")
        for i, row in enumerate(self.cost):
            if len(row) != l:
                raise ValueError(f"row {i} has wrong length")
            finite = False
            for j, v in enumerate(row):
                if i == j:
                    continue
                if v != INF:
                    if v < 0:
                        raise ValueError(f"negative cost V[{i}][{j}]")
                    finite = True
            if not finite:
                raise RowAllInfinite(i)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence], labels: Sequence[str] | None = None):
        rows = tuple(tuple(r) for r in rows)
        if labels is None:
            labels = tuple(str(i + 1) for i in range(len(rows)))
        return cls(cost=rows, labels=tuple(labels))

    @property
    def size(self) -> int:
        return len(self.cost)

    def scaled(self, c):
        """Return the matrix with every finite cost multiplied by c > 0."""
        rows = tuple(
            tuple(v if v == INF else c * v for v in row) for row in self.cost
        )
        return QuasiPotentialMatrix(cost=rows, labels=self.labels)


@dataclass(frozen=True)
class ArrowDiagram:
    """Row minima alpha_i and the set of achieving targets per label."""

    alphas: tuple
    targets: tuple

    @property
    def out_degree(self) -> tuple:
        return tuple(len(t) for t in self.targets)

    @property
    def size(self) -> int:
        return len(self.alphas)


def _row_minima(cost, allow_absorbing: bool):
    """Per-row minimum over j != i with its achiever set.

    A row with no finite entry is absorbing: alpha = inf, no targets.  Only
    lifted tables may contain such rows; the input matrix rejects them.
    """
    alphas = []
    targets = []
    n = len(cost)
    for i in range(n):
        best = INF
        for j in range(n):
            if j != i and cost[i][j] < best:
                best = cost[i][j]
        if best == INF:
            if not allow_absorbing:
                raise RowAllInfinite(i)
            alphas.append(INF)
            targets.append(frozenset())
            continue
        alphas.append(best)
        targets.append(
            frozenset(j for j in range(n) if j != i and cost[i][j] == best)
        )
    return tuple(alphas), tuple(targets)


def compute_alphas(V: QuasiPotentialMatrix) -> ArrowDiagram:
    """Row minima alpha_i = min_{j != i} V_ij with every achiever kept.

    Ties are preserved: targets(i) holds all j with V_ij = alpha_i.
    """
    alphas, targets = _row_minima(V.cost, allow_absorbing=False)
    return ArrowDiagram(alphas=alphas, targets=targets)


def partition_chains(arrows: ArrowDiagram) -> list:
    """Mutual-reachability classes of the arrow digraph, as frozensets.

    Classes are returned sorted by smallest member.  Singletons are allowed;
    together the classes cover every label.
    """
    sccs = _strongly_connected(arrows.size, arrows.targets)
    return sorted((frozenset(c) for c in sccs), key=min)


def _strongly_connected(n: int, targets) -> list:
    """Iterative Tarjan over nodes 0..n-1 with adjacency `targets`."""
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    sccs: list[list[int]] = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, iter(sorted(targets[root])))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if index[w] == -1:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack[w] = True
                    work.append((w, iter(sorted(targets[w]))))
                    advanced = True
                    break
                if on_stack[w]:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                pv = work[-1][0]
                low[pv] = min(low[pv], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                sccs.append(comp)
    return sccs


@dataclass(frozen=True)
class Chain:
    """One unit of the hierarchy: a rank-k chain over rank-(k-1) units.

    members are unit indices at the level below (labels when rank == 1).
    alphas/targets are the per-member row minima and arrow heads of that
    level, aligned with `members`.  Rates follow the exit-rate recursion:
    r = max alpha, m_i = alpha_i - r, e = min(r + V_ij - alpha_i) over
    member/outside pairs.  mixing_rate is 0 for singletons and r otherwise.
    """

    rank: int
    members: tuple
    alphas: tuple
    targets: tuple
    depth_rate: object
    mixing_rate: object
    measure_rates: tuple
    exit_rate: object
    exit_set: frozenset
    landing_set: frozenset
    main_subset: frozenset
    exponents: tuple

    @property
    def singleton(self) -> bool:
        return len(self.members) == 1

    def measure_rate(self, member) -> object:
        return self.measure_rates[self.members.index(member)]

    def alpha(self, member) -> object:
        return self.alphas[self.members.index(member)]


def chain_characteristics(members, cost, arrows: ArrowDiagram, rank: int = 1) -> Chain:
    """Rates, exit structure and within-chain cost table for one chain.

    `members` must be one class from partition_chains; `cost` is the table
    the arrows were derived from.  Exit achievers are kept as sets, never
    tie-broken.
    """
    mem = tuple(sorted(members))
    inside = frozenset(mem)
    n_all = len(cost)
    alphas = tuple(arrows.alphas[i] for i in mem)
    targets = tuple(arrows.targets[i] for i in mem)

    r = max(alphas)
    m = tuple(_sub(a, r) for a in alphas)
    e = INF
    pairs = []
    for i in mem:
        for j in range(n_all):
            if j in inside:
                continue
            val = _add(r, cost[i][j], arrows.alphas[i])
            if val < e:
                e = val
                pairs = [(i, j)]
            elif val == e and val != INF:
                pairs.append((i, j))
    exit_set = frozenset(i for i, _ in pairs)
    landing_set = frozenset(j for _, j in pairs)
    exponents = tuple(
        tuple(
            arrows.alphas[i] if (i != j and j in arrows.targets[i]) else INF
            for j in mem
        )
        for i in mem
    )
    return Chain(
        rank=rank,
        members=mem,
        alphas=alphas,
        targets=targets,
        depth_rate=r,
        mixing_rate=0 if len(mem) == 1 else r,
        measure_rates=m,
        exit_rate=e,
        exit_set=exit_set,
        landing_set=landing_set,
        main_subset=frozenset(i for i, mi in zip(mem, m) if mi == 0),
        exponents=exponents,
    )


def lift_costs(chains: Sequence[Chain], cost, arrows: ArrowDiagram) -> tuple:
    """Effective cost table between the chains of one rank.

    V'(A, B) = r(A) + min over (i in A, j in B) of (V(i, j) - alpha_i).
    By construction min_B V'(A, B) = e(A), and the arrows of the lifted
    table point exactly at the chains that intersect the landing set J(A).
    """
    k = len(chains)
    out = []
    for A in chains:
        row = []
        for bi, B in enumerate(chains):
            if B is A:
                row.append(INF)
                continue
            best = INF
            for i in A.members:
                for j in B.members:
                    val = _add(A.depth_rate, cost[i][j], arrows.alphas[i])
                    if val < best:
                        best = val
            row.append(best)
        out.append(tuple(row))
    return tuple(out)


@dataclass(frozen=True)
class Level:
    """One layer of the hierarchy: rank-k chains over the units below.

    cost/alphas/targets describe the unit table the chains were carved
    from (cost is the input V for rank 1, a lifted table above that).
    """

    rank: int
    cost: tuple
    alphas: tuple
    targets: tuple
    chains: tuple
    chain_of_unit: tuple


@dataclass(frozen=True)
class Hierarchy:
    """All ranks of the chain construction over one cost matrix."""

    matrix: QuasiPotentialMatrix
    levels: tuple

    @property
    def depth(self) -> int:
        return len(self.levels)

    @property
    def size(self) -> int:
        return self.matrix.size

    def chain(self, rank: int, index: int) -> Chain:
        return self.levels[rank - 1].chains[index]

    def top(self) -> Chain:
        return self.levels[-1].chains[0]

    def unit_labels(self, rank: int, unit: int) -> frozenset:
        """Attractor labels covered by one rank-`rank` unit (labels at 0)."""
        if rank == 0:
            return frozenset((unit,))
        out = set()
        for m in self.levels[rank - 1].chains[unit].members:
            out |= self.unit_labels(rank - 1, m)
        return frozenset(out)

    def unit_exit_rate(self, rank: int, unit: int):
        """Exit rate of a unit: alpha_i at rank 0, chain e above."""
        if rank == 0:
            return self.levels[0].alphas[unit]
        return self.levels[rank - 1].chains[unit].exit_rate

    def rank_sequence(self, label: int) -> list:
        """The nested chains containing `label`, rank 1 up to the top."""
        seq = []
        unit = label
        for level in self.levels:
            c = level.chain_of_unit[unit]
            seq.append(level.chains[c])
            unit = c
        return seq

    def unit_sequence(self, label: int) -> list:
        """Unit indices containing `label` per rank: [label, c1, c2, ...]."""
        seq = [label]
        unit = label
        for level in self.levels:
            unit = level.chain_of_unit[unit]
            seq.append(unit)
        return seq

    def exit_breaks(self, label: int) -> list:
        """Non-decreasing exit rates e_0 = alpha_label, e_1, ..., e_m = inf."""
        return [self.levels[0].alphas[label]] + [
            c.exit_rate for c in self.rank_sequence(label)
        ]

    def flatten_main(self, rank: int, unit: int) -> frozenset:
        """Recursive main subset of a unit, taken down to labels."""
        if rank == 0:
            return frozenset((unit,))
        chain = self.levels[rank - 1].chains[unit]
        out = set()
        for m in chain.main_subset:
            out |= self.flatten_main(rank - 1, m)
        return frozenset(out)

    def chain_flatten_main(self, chain: Chain) -> frozenset:
        out = set()
        for m in chain.main_subset:
            out |= self.flatten_main(chain.rank - 1, m)
        return frozenset(out)

    def chain_labels(self, chain: Chain) -> frozenset:
        out = set()
        for m in chain.members:
            out |= self.unit_labels(chain.rank - 1, m)
        return frozenset(out)

    def _pair_landing(self, level_idx: int, i: int, j: int) -> frozenset:
        """Labels reached when the cost entry (i, j) of a level fires.

        Unwinds the lift: the achieving member pairs of a lifted entry are
        followed down until rank-0 targets remain.
        """
        if level_idx == 0:
            return frozenset((j,))
        level = self.levels[level_idx]
        below = self.levels[level_idx - 1]
        A = self.levels[level_idx - 1].chains[i]
        B = self.levels[level_idx - 1].chains[j]
        total = level.cost[i][j]
        out = set()
        for p in A.members:
            for q in B.members:
                if _add(A.depth_rate, below.cost[p][q], below.alphas[p]) == total:
                    out |= self._pair_landing(level_idx - 1, p, q)
        return frozenset(out)

    def landing_labels(self, rank: int, unit: int) -> frozenset:
        """Labels on which the exit from a unit lands (exit achievers only).

        For a label this is its arrow-target set; for a chain the landing
        set J unwound through the lifted achiever pairs.
        """
        if rank == 0:
            return frozenset(self.levels[0].targets[unit])
        chain = self.levels[rank - 1].chains[unit]
        if chain.exit_rate == INF:
            return frozenset()
        out = set()
        for i in chain.exit_set:
            for j in chain.landing_set:
                val = _add(
                    chain.depth_rate,
                    self.levels[rank - 1].cost[i][j],
                    self.levels[rank - 1].alphas[i],
                )
                if val == chain.exit_rate:
                    out |= self._pair_landing(rank - 1, i, j)
        return frozenset(out)

    def breakpoints(self) -> list:
        """All finite rates of the hierarchy, sorted and deduplicated.

        Metastable answers are constant between consecutive breakpoints.
        """
        vals = set()
        for level in self.levels:
            for a in level.alphas:
                if a != INF:
                    vals.add(a)
            for c in level.chains:
                for v in (c.depth_rate, c.mixing_rate, c.exit_rate):
                    if v != INF and v != 0:
                        vals.add(v)
        return sorted(vals)


def build_hierarchy(V: QuasiPotentialMatrix) -> Hierarchy:
    """Iterate arrows -> partition -> rates -> lift until one chain remains.

    Absorbing families (units whose every outside cost is inf) stop merging
    by reachability; when that stalls the construction, the remaining units
    are grouped into a single terminal chain whose rates follow the inf
    conventions (r = inf, absorbing members carry measure rate 0).
    """
    cost = V.cost
    levels = []
    rank = 1
    while True:
        alphas, targets = _row_minima(cost, allow_absorbing=rank > 1)
        diagram = ArrowDiagram(alphas=alphas, targets=targets)
        classes = partition_chains(diagram)
        if len(classes) == len(cost) and len(cost) > 1:
            # No mutual pair merged: only possible with absorbing units.
            # Terminal rank: one chain over everything.
            classes = [frozenset(range(len(cost)))]
        chains = tuple(
            chain_characteristics(c, cost, diagram, rank=rank) for c in classes
        )
        chain_of_unit = [0] * len(cost)
        for ci, c in enumerate(chains):
            for u in c.members:
                chain_of_unit[u] = ci
        levels.append(
            Level(
                rank=rank,
                cost=tuple(tuple(row) for row in cost),
                alphas=alphas,
                targets=targets,
                chains=chains,
                chain_of_unit=tuple(chain_of_unit),
            )
        )
        if len(chains) == 1:
            break
        cost = lift_costs(chains, cost, diagram)
        rank += 1
    return Hierarchy(matrix=V, levels=tuple(levels))


@dataclass(frozen=True)
class TieReport:
    """Where the cost table deviates from the generic (tie-free) picture."""

    row_achievers: tuple
    exit_achievers: tuple
    main_sizes: tuple

    @property
    def tied_rows(self) -> tuple:
        return tuple(i for i, d in enumerate(self.row_achievers) if d > 1)

    @property
    def has_ties(self) -> bool:
        return (
            any(d > 1 for d in self.row_achievers)
            or any(a > 1 for _, _, a in self.exit_achievers)
            or any(s > 1 for _, _, s in self.main_sizes)
        )


def detect_rough_symmetry(V: QuasiPotentialMatrix) -> TieReport:
    """Count minimum achievers per row and per exit minimum of every chain.

    A report with no multiple achievers means the generic hierarchy of
    cycles applies (every multi-member chain is a single directed cycle).
    """
    hier = build_hierarchy(V)
    diagram = compute_alphas(V)
    rows = diagram.out_degree
    exits = []
    mains = []
    for level in hier.levels:
        for ci, chain in enumerate(level.chains):
            mains.append((level.rank, ci, len(chain.main_subset)))
            if chain.exit_rate == INF:
                continue
            count = 0
            for i in chain.exit_set:
                for j in chain.landing_set:
                    val = _add(
                        chain.depth_rate,
                        level.cost[i][j],
                        level.alphas[i],
                    )
                    if val == chain.exit_rate:
                        count += 1
            exits.append((level.rank, ci, count))
    return TieReport(
        row_achievers=tuple(rows),
        exit_achievers=tuple(exits),
        main_sizes=tuple(mains),
    )
