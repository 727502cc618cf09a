"""
Forests and Envelopes

A forest is a poset in which every up-set {x >= x0} is a finite chain; here
it is stored as a parent array (roots have parent -1), larger means closer
to a root. Subsets of a product of forests are closed under two operations:
going down (hereditary) and joining coordinate-wise comparable points
(concave). The smallest closed superset is the c.h-envelope, which the
transversality relation reproduces on stored elements.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from horseshoe.core.exceptions import NotAForest

logger = logging.getLogger(__name__)

Point = Tuple[int, ...]


class Forest:
    """
    Forest given by a parent array.

    Args:
        parents: parents[i] is the index of i's parent, -1 for a root
        labels: Optional node names (default the indices as strings)

    Raises:
        NotAForest: if following parents from some node never reaches a root
    """

    def __init__(self, parents: Sequence[int], labels: Optional[Sequence[str]] = None):
        self.parents = np.asarray(parents, dtype=int)
        n = len(self.parents)
        self.labels = list(labels) if labels is not None else [str(i) for i in range(n)]
        if len(self.labels) != n:
            raise ValueError(f"{len(self.labels)} labels for {n} nodes")
        self._index = {name: i for i, name in enumerate(self.labels)}
        self.ancestors: List[FrozenSet[int]] = []
        for i in range(n):
            chain, node = [i], int(self.parents[i])
            while node >= 0:
                if node >= n or node in chain:
                    raise NotAForest(f"up-set of node {self.labels[i]} is not a finite chain", node=self.labels[i])
                chain.append(node)
                node = int(self.parents[node])
            self.ancestors.append(frozenset(chain))
        self.descendants: List[FrozenSet[int]] = [
            frozenset(j for j in range(n) if i in self.ancestors[j]) for i in range(n)
        ]

    @classmethod
    def from_edges(cls, edges: Dict[str, Optional[str]]) -> "Forest":
        """Build from {node: parent or None}."""
        labels = list(edges)
        index = {name: i for i, name in enumerate(labels)}
        for parent in edges.values():
            if parent is not None and parent not in index:
                raise NotAForest(f"unknown parent {parent!r}", node=parent)
        return cls([index[p] if p is not None else -1 for p in edges.values()], labels)

    def __len__(self) -> int:
        return len(self.parents)

    def node(self, label: str) -> int:
        return self._index[label]

    def leq(self, i: int, j: int) -> bool:
        return j in self.ancestors[i]

    def comparable(self, i: int, j: int) -> bool:
        return self.leq(i, j) or self.leq(j, i)

    def join(self, i: int, j: int) -> int:
        if self.leq(i, j):
            return j
        if self.leq(j, i):
            return i
        raise ValueError(f"nodes {self.labels[i]} and {self.labels[j]} are not comparable")


@dataclass
class ForestProduct:
    """Product X1 x ... x Xn of forests."""
    factors: List[Forest]

    @property
    def n(self) -> int:
        return len(self.factors)

    def point(self, *labels: str) -> Point:
        return tuple(f.node(name) for f, name in zip(self.factors, labels))

    def label(self, x: Point) -> Tuple[str, ...]:
        return tuple(f.labels[i] for f, i in zip(self.factors, x))

    def leq(self, x: Point, y: Point) -> bool:
        return all(f.leq(a, b) for f, a, b in zip(self.factors, x, y))

    def c_comparable(self, x: Point, y: Point) -> bool:
        return all(f.comparable(a, b) for f, a, b in zip(self.factors, x, y))

    def join(self, x: Point, y: Point) -> Point:
        return tuple(f.join(a, b) for f, a, b in zip(self.factors, x, y))

    def down_set(self, x: Point) -> Set[Point]:
        return set(itertools.product(*(sorted(f.descendants[a]) for f, a in zip(self.factors, x))))

    def down_closure(self, points: Iterable[Point]) -> Set[Point]:
        out: Set[Point] = set()
        for x in points:
            out |= self.down_set(x)
        return out

    def is_hereditary(self, A: Set[Point]) -> bool:
        return all(self.down_set(x) <= A for x in A)

    def is_concave(self, A: Set[Point]) -> bool:
        return all(self.join(x, y) in A for x in A for y in A if self.c_comparable(x, y))


def brute_force_envelope(X: ForestProduct, A: Iterable[Point]) -> Set[Point]:
    """Fixed-point closure under down-sets and joins of c-comparable pairs."""
    env = X.down_closure(A)
    while True:
        joins = {X.join(x, y) for x in env for y in env if X.c_comparable(x, y)}
        grown = env | X.down_closure(joins - env)
        if grown == env:
            return env
        env = grown


def pairwise_joins(X: ForestProduct, A: Iterable[Point]) -> Set[Point]:
    A = list(A)
    return {X.join(y, z) for y in A for z in A if X.c_comparable(y, z)}


def ch_envelope(X: ForestProduct, A: Iterable[Point]) -> Set[Point]:
    """
    Envelope of A in a product of two forests: the down-closure of the joins
    of c-comparable pairs of A.
    """
    if X.n != 2:
        raise ValueError(f"the pairwise-join formula holds for two factors, got {X.n}")
    return X.down_closure(pairwise_joins(X, A))


def ch_upper_bound(X: ForestProduct, A: Iterable[Point]) -> Set[Point]:
    """
    Superset of the envelope for any number of factors: points
    (x^1_1, ..., x^n_n) with x^i_j <= x^j_j for all i, j, then down-closed.
    """
    A = list(A)
    n = X.n
    tops = set()
    for choice in itertools.product(A, repeat=n):
        if all(X.factors[j].leq(choice[i][j], choice[j][j]) for i in range(n) for j in range(n)):
            tops.add(tuple(choice[j][j] for j in range(n)))
    return X.down_closure(tops)


@dataclass
class CounterexampleReport:
    recipe_sufficient: bool
    witness: Tuple[str, ...]
    pairwise_joins: List[Tuple[str, ...]]
    envelope_size: int
    disjoint_down_sets: bool
    envelope_is_union: bool
    upper_bound_strict: bool
    details: Dict[str, int] = field(default_factory=dict)


def _three_forests(shapes: Sequence[Dict[str, Optional[str]]]) -> ForestProduct:
    return ForestProduct([Forest.from_edges(edges) for edges in shapes])


def ch_counterexamples() -> CounterexampleReport:
    """
    Build the two three-factor configurations and check them by brute force.

    First: x1 > y1 > z1, y2 above x2 and z2 (incomparable), z3 above x3 and
    y3 (incomparable). The point (x1, y2, z3) lies in the envelope but under
    no pairwise join, so the two-factor formula fails.

    Second: x1 above y1, z1; y2 above x2, z2; z3 above x3, y3. The envelope
    is the disjoint union of the three down-sets, strictly inside the
    n-factor upper bound.
    """
    first = _three_forests([
        {"x1": None, "y1": "x1", "z1": "y1"},
        {"y2": None, "x2": "y2", "z2": "y2"},
        {"z3": None, "x3": "z3", "y3": "z3"},
    ])
    x, y, z = first.point("x1", "x2", "x3"), first.point("y1", "y2", "y3"), first.point("z1", "z2", "z3")
    A = [x, y, z]
    A1 = pairwise_joins(first, A)
    w = first.point("x1", "y2", "z3")
    env1 = brute_force_envelope(first, A)
    recipe_sufficient = w not in env1 or any(first.leq(w, u) for u in A1)
    logger.info(f"three-factor chain example: {len(A1)} pairwise joins, envelope of {len(env1)} points")

    second = _three_forests([
        {"x1": None, "y1": "x1", "z1": "x1"},
        {"y2": None, "x2": "y2", "z2": "y2"},
        {"z3": None, "x3": "z3", "y3": "z3"},
    ])
    x, y, z = second.point("x1", "x2", "x3"), second.point("y1", "y2", "y3"), second.point("z1", "z2", "z3")
    downs = [second.down_set(p) for p in (x, y, z)]
    disjoint = all(not (a & b) for a, b in itertools.combinations(downs, 2))
    env2 = brute_force_envelope(second, [x, y, z])
    union = set().union(*downs)
    bound = ch_upper_bound(second, [x, y, z])

    return CounterexampleReport(
        recipe_sufficient=recipe_sufficient,
        witness=first.label(w),
        pairwise_joins=sorted(first.label(u) for u in A1),
        envelope_size=len(env1),
        disjoint_down_sets=disjoint,
        envelope_is_union=env2 == union,
        upper_bound_strict=env2 < bound,
        details={"second_envelope": len(env2), "second_upper_bound": len(bound)},
    )


def random_forest(rng: np.random.Generator, size: int) -> Forest:
    """Random forest: node i > 0 hangs under a uniformly chosen earlier node or starts a new tree."""
    parents = [-1] + [int(rng.integers(-1, i)) for i in range(1, size)]
    return Forest(parents)


def check_two_factor_formula(trials: int = 1000, seed: int = 0, max_nodes: int = 5,
                             max_points: int = 4) -> int:
    """Compare ch_envelope with the brute-force closure on random products; returns the mismatch count."""
    rng = np.random.default_rng(seed)
    mismatches = 0
    for trial in range(trials):
        X = ForestProduct([random_forest(rng, int(rng.integers(1, max_nodes + 1))) for _ in range(2)])
        k = int(rng.integers(0, max_points + 1))
        A = {tuple(int(rng.integers(0, len(f))) for f in X.factors) for _ in range(k)}
        if ch_envelope(X, A) != brute_force_envelope(X, A):
            mismatches += 1
            logger.warning(f"two-factor envelope mismatch at trial {trial}")
    return mismatches
