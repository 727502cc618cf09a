"""
Rectangle Classes

A class R(I) stores the I-persistent affine-like iterates (P, Q, n) built
from the transition letters by simple composition and, for transverse
tongue pairs, by parabolic composition. Elements are indexed by their
provenance word; the word is the prime decomposition.

The transversality relation is the hereditary closure of the corner
conditions on an interval:

    interval clearance  delta_LR >= 2|I|           for all t in I
    right clearance     delta_R  >= 2|Q0|^(1-eta)  for some t in I
    left clearance      delta_L  >= 2|P1|^(1-eta)  for some t in I

memoized per (Q-element, P-element) pair.
"""

import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from horseshoe.core.config import settings
from horseshoe.core.exceptions import BudgetExhausted, HorseshoeError
from horseshoe.core.run_config import BudgetConfig
from horseshoe.observability.metrics import metrics
from horseshoe.observability.tracing import get_tracer, mark_error
from horseshoe.services.affine import ImplicitMap, simple_compose
from horseshoe.services.family import ModelFamily, SpecialRectangles, compose_degrees, special_rectangles
from horseshoe.services.fold import DisplacementQuad, ParabolicPair, displacement, parabolic_compose
from horseshoe.services.params import ParamInterval
from horseshoe.services.words import Fold, Word, fold_word, pure_word

logger = logging.getLogger(__name__)
tracer = get_tracer(__name__)

GAMMA = math.log(1.5) / math.log(2.0)


class Relation(str, Enum):
    TRANSVERSE = "transverse"
    SEPARATED = "separated"
    CRITICAL = "critically_related"


class Criticality(str, Enum):
    TRANSVERSE = "transverse"
    CRITICAL = "critical"
    UNDETERMINED = "undetermined"


# Corner predicates on raw displacement numbers

def t1_holds(delta_LR: float, length: float) -> bool:
    """Interval clearance: delta_LR >= 2|I|."""
    return delta_LR >= 2.0 * length


def t2_holds(delta_R: float, q_width: float, eta: float) -> bool:
    """Right clearance: delta_R >= 2|Q0|^(1-eta)."""
    return delta_R >= 2.0 * q_width ** (1.0 - eta)


def t3_holds(delta_L: float, p_width: float, eta: float) -> bool:
    """Left clearance: delta_L >= 2|P1|^(1-eta)."""
    return delta_L >= 2.0 * p_width ** (1.0 - eta)


def base_relation_from_quads(quads: Sequence[DisplacementQuad], q_width: float, p_width: float,
                             length: float, eta: float) -> bool:
    """
    Base relation from displacement quads sampled on a t-grid of I (endpoints included).

    Interval clearance must hold at every grid value, the right and left
    clearances at some grid value each.
    """
    if not quads:
        return False
    return (all(t1_holds(q.delta_LR, length) for q in quads)
            and any(t2_holds(q.delta_R, q_width, eta) for q in quads)
            and any(t3_holds(q.delta_L, p_width, eta) for q in quads))


def separated_from_quads(quads: Sequence[DisplacementQuad]) -> bool:
    """The strips never meet on I: delta_LR < 0 at the right end (-C_bar grows with t)."""
    return bool(quads) and quads[-1].delta_LR < 0.0


@dataclass(eq=False)
class Element:
    """One stored iterate (P, Q, n) with its implicit map."""
    word: Word
    map: ImplicitMap
    kind: str  # "pure", "parabolic" (a parabolic prime) or "simple"
    t: Optional[float] = None
    flags: Dict[str, bool] = field(default_factory=dict)

    @property
    def key(self) -> str:
        return self.word.key

    @property
    def n(self) -> int:
        return self.word.n

    @property
    def r(self) -> int:
        return self.word.r

    @property
    def P(self):
        return self.map.domain

    @property
    def Q(self):
        return self.map.image

    @property
    def widths(self) -> Tuple[float, float]:
        if not self.word.factors:
            return 1.0, 1.0
        return self.map.widths()

    def sort_key(self) -> Tuple[int, str]:
        return self.word.sort_key()


@dataclass
class BaseCheck:
    """Record of one base transversality evaluation."""
    quads: List[DisplacementQuad]
    slope: float
    relation: Relation


class TransversalityCache:
    """Tri-state relation per (Q-word, P-word); concurrent reads, exactly-once insertion."""

    def __init__(self):
        self._data: Dict[Tuple[str, str], Relation] = {}
        self._lock = threading.Lock()

    def get(self, key: Tuple[str, str]) -> Optional[Relation]:
        return self._data.get(key)

    def put(self, key: Tuple[str, str], value: Relation) -> Relation:
        with self._lock:
            return self._data.setdefault(key, value)

    def items(self):
        with self._lock:
            return sorted(self._data.items())

    def __len__(self) -> int:
        return len(self._data)


class RClass:
    """
    The class R(I) over one parameter interval.

    Args:
        fam: Model family
        interval: Parameter interval I
        budgets: n_max, width_floor and max_elements
        parent: Class over the parent interval (None for I0)
        special: Special rectangles (computed from the family by default)
    """

    def __init__(self, fam: ModelFamily, interval: ParamInterval, budgets: BudgetConfig = None,
                 parent: Optional["RClass"] = None, special: Optional[SpecialRectangles] = None):
        self.fam = fam
        self.interval = interval
        self.budgets = budgets or BudgetConfig()
        self.parent = parent
        self.special = special or (parent.special if parent is not None else special_rectangles(fam))
        self.eta = fam.config.eta
        self.t = interval.midpoint
        self.fold = fam.fold(self.t)
        self.t_grid = interval.sample(settings.t_grid_points)
        self.elements: Dict[str, Element] = {}
        self.cache = TransversalityCache()
        self.base_checks: Dict[Tuple[str, str], BaseCheck] = {}
        self.frontier: set = set()
        self.exhausted = False
        self._rejected: set = set()
        self._pairs: Dict[Tuple[str, str], ParabolicPair] = {}
        self._children: Optional[Dict[str, List[str]]] = None
        self._q_children: Optional[Dict[str, List[str]]] = None
        self._lock = threading.Lock()

    # Store

    def __len__(self) -> int:
        return len(self.elements)

    def __contains__(self, word) -> bool:
        key = word.key if isinstance(word, Word) else str(word)
        return key in self.elements

    def __iter__(self) -> Iterator[Element]:
        return iter(self.ordered())

    def get(self, word) -> Optional[Element]:
        key = word.key if isinstance(word, Word) else str(word)
        return self.elements.get(key)

    def ordered(self) -> List[Element]:
        return sorted(self.elements.values(), key=Element.sort_key)

    def add(self, element: Element) -> bool:
        with self._lock:
            if element.key in self.elements:
                return False
            self.elements[element.key] = element
            self.frontier.add(element.key)
            self._children = None
            self._q_children = None
            return True

    def primes(self) -> List[Element]:
        return [e for e in self.ordered() if e.r == 1]

    def counts(self) -> Dict[str, int]:
        out = {"pure": 0, "parabolic": 0, "simple": 0}
        for e in self.elements.values():
            out[e.kind] += 1
        return out

    @property
    def P_s(self) -> Element:
        return self.elements[pure_word(self.special.symbols_s).key]

    @property
    def Q_u(self) -> Element:
        return self.elements[pure_word(self.special.symbols_u).key]

    # Maps

    def clears_floor(self, F: ImplicitMap) -> bool:
        p, q = F.widths()
        return min(p, q) >= self.budgets.width_floor

    def parabolic_pair(self, left: Element, right: Element) -> ParabolicPair:
        key = (left.key, right.key)
        with self._lock:
            pair = self._pairs.get(key)
        if pair is None:
            pair = parabolic_compose(left.map, self.fold, right.map, with_calculus=False)
            with self._lock:
                pair = self._pairs.setdefault(key, pair)
        return pair

    def derive(self, word: Word) -> Element:
        """
        Build the element named by a word from stored shorter elements.

        Raises:
            HorseshoeError: if an operand is missing or a composition fails
        """
        if not word.factors:
            return Element(word, ImplicitMap.identity(self.fam.charts[word.start]), "pure")
        if word.is_pure:
            return Element(word, self.fam.itinerary_map(word.symbols), "pure")
        if word.is_parabolic_prime:
            node: Fold = word.factors[0]
            left, right = self.get(node.left), self.get(node.right)
            if left is None or right is None:
                raise HorseshoeError(f"operands of {word.key} are not stored", word=word.key)
            pair = self.parabolic_pair(left, right)
            return Element(word, pair.branch(node.sign), "parabolic", t=self.t)
        head = Word(word.start, word.factors[:-1])
        last = Word(word.factors[-1].start, word.factors[-1:])
        first, second = self.get(head), self.get(last)
        if first is None or second is None:
            raise HorseshoeError(f"factors of {word.key} are not stored", word=word.key)
        F = simple_compose(first.map, second.map, degrees=compose_degrees(first.map, second.map),
                           with_calculus=False)
        return Element(word, F, "simple", t=self.t)

    # Geometry of the tongue

    def in_Q_u(self, e: Element) -> bool:
        return bool(e.word.factors) and self.Q_u.Q.contains(e.Q)

    def in_P_s(self, e: Element) -> bool:
        return bool(e.word.factors) and self.P_s.P.contains(e.P)

    def _q_ancestor(self, e: Element) -> Optional[Element]:
        w = e.word.q_parent()
        anc = self.get(w) if w is not None else None
        return anc if anc is not None and self.in_Q_u(anc) else None

    def _p_ancestor(self, e: Element) -> Optional[Element]:
        w = e.word.parent()
        anc = self.get(w) if w is not None else None
        return anc if anc is not None and self.in_P_s(anc) else None

    # Transversality

    def base_check(self, q: Element, p: Element) -> BaseCheck:
        """Evaluate the corner conditions for (Q0, P1) on the t-grid of I."""
        key = (q.key, p.key)
        cached = self.base_checks.get(key)
        if cached is not None:
            return cached
        length = self.interval.length
        try:
            last = displacement(q.map, self.fold, p.map, t=float(self.t_grid[-1]))
            if last.delta_LR < 0.0:
                check = BaseCheck([last], 0.0, Relation.SEPARATED)
            else:
                first = displacement(q.map, self.fold, p.map, t=float(self.t_grid[0]))
                slope = (last.delta_LR - first.delta_LR) / length if length > 0 else 1.0
                if not t1_holds(min(first.delta_LR, last.delta_LR), length):
                    check = BaseCheck([first, last], slope, Relation.CRITICAL)
                else:
                    quads = [first] + displacement(q.map, self.fold, p.map, t=self.t_grid[1:-1]) + [last]
                    holds = base_relation_from_quads(quads, q.widths[1], p.widths[0], length, self.eta)
                    check = BaseCheck(quads, slope, Relation.TRANSVERSE if holds else Relation.CRITICAL)
        except HorseshoeError as e:
            logger.debug(f"displacement of ({q.key}, {p.key}) failed: {e}")
            check = BaseCheck([], 0.0, Relation.CRITICAL)
        metrics.record_relation(check.relation.value)
        self.base_checks[key] = check
        return check

    def relation(self, q: Element, p: Element) -> Relation:
        """
        Closed relation for Q0 inside Q_u and P1 inside P_s: Transverse if the
        base relation holds for the pair or is inherited from a stored ancestor
        pair (here or over the parent interval); Separated likewise.
        """
        key = (q.key, p.key)
        cached = self.cache.get(key)
        if cached is not None:
            return cached
        inherited = []
        for aq, ap in ((self._q_ancestor(q), p), (q, self._p_ancestor(p))):
            if aq is not None and ap is not None:
                inherited.append(self.relation(aq, ap))
        if self.parent is not None:
            pq, pp = self.parent.get(q.word), self.parent.get(p.word)
            if pq is not None and pp is not None:
                inherited.append(self.parent.relation(pq, pp))
        if Relation.TRANSVERSE in inherited:
            result = Relation.TRANSVERSE
        elif Relation.SEPARATED in inherited:
            result = Relation.SEPARATED
        else:
            result = self.base_check(q, p).relation
        return self.cache.put(key, result)

    def relation_table(self) -> List[Tuple[str, str, str]]:
        return [(q, p, r.value) for (q, p), r in self.cache.items()]

    # Parent and child structure

    def _index(self):
        if self._children is None or self._q_children is None:
            children, q_children = {}, {}
            for e in self.ordered():
                parent = e.word.parent()
                if parent is not None and parent.key in self.elements:
                    children.setdefault(parent.key, []).append(e.key)
                q_parent = e.word.q_parent()
                if q_parent is not None and q_parent.key in self.elements:
                    q_children.setdefault(q_parent.key, []).append(e.key)
            self._children, self._q_children = children, q_children
        return self._children, self._q_children

    def child_elements(self, e: Element) -> List[Element]:
        return [self.elements[k] for k in self._index()[0].get(e.key, [])]

    def q_child_elements(self, e: Element) -> List[Element]:
        return [self.elements[k] for k in self._index()[1].get(e.key, [])]

    def truncated(self, e: Element) -> bool:
        """Children of e would fall below the width floor or beyond n_max."""
        p, q = e.widths
        return (min(p, q) * self.fam.lambda_s < self.budgets.width_floor
                or e.n + 1 > self.budgets.n_max)


def init_class(fam: ModelFamily, interval: ParamInterval, budgets: BudgetConfig = None,
               special: SpecialRectangles = None) -> RClass:
    """
    R(I0): all itinerary cylinders clearing the width floor and n_max, no
    parabolic elements.
    """
    rc = RClass(fam, interval, budgets, special=special)
    with tracer.start_as_current_span("init_class") as span:
        layer = [pure_word((a,)) for a in fam.alphabet]
        while layer:
            nxt = []
            for word in layer:
                element = rc.derive(word)
                if word.factors and not rc.clears_floor(element.map):
                    continue
                rc.add(element)
                if word.n < rc.budgets.n_max:
                    nxt.extend(pure_word(word.symbols + (b,)) for b in fam.alphabet if (word.end, b) in fam.transitions)
            if len(rc) > rc.budgets.max_elements:
                rc.exhausted = True
                raise BudgetExhausted(f"initial class exceeds {rc.budgets.max_elements} elements", partial=rc)
            layer = sorted(nxt, key=Word.sort_key)
        span.set_attribute("class.size", len(rc))
    rc.frontier = set(rc.elements)
    metrics.set_class_size(len(rc), 0)
    logger.info(f"R(I) at level {interval.level}: {len(rc)} itinerary elements "
                f"(width floor {rc.budgets.width_floor:g}, n_max {rc.budgets.n_max})")
    return rc


def base_transversality(rc: RClass, q: Element, p: Element) -> bool:
    return rc.base_check(q, p).relation == Relation.TRANSVERSE


def transversality(rc: RClass, q: Element, p: Element) -> Relation:
    return rc.relation(q, p)


def _simple_candidates(rc: RClass, new_keys: set) -> List[Word]:
    primes = rc.primes()
    new_primes = [p for p in primes if p.key in new_keys]
    out = {}
    for x in rc.ordered():
        pool = primes if x.key in new_keys else new_primes
        for p in pool:
            if p.word.start != x.word.end or not x.word.factors:
                continue
            word = x.word.join(p.word)
            if word.n > rc.budgets.n_max or word.key in rc.elements or word.key in rc._rejected:
                continue
            # width law pre-filter
            if x.widths[0] * p.widths[0] * settings.width_law_ceiling < rc.budgets.width_floor:
                continue
            out[word.key] = word
    return sorted(out.values(), key=Word.sort_key)


def _parabolic_candidates(rc: RClass, new_keys: set) -> List[Word]:
    qs = [e for e in rc.ordered() if rc.in_Q_u(e)]
    ps = [e for e in rc.ordered() if rc.in_P_s(e)]
    out = {}
    for q in qs:
        for p in ps:
            if q.key not in new_keys and p.key not in new_keys:
                continue
            if q.n + p.n + rc.fam.n0 > rc.budgets.n_max:
                continue
            if rc.relation(q, p) != Relation.TRANSVERSE:
                continue
            # non-minimal pairs give words already reached by simple composition
            aq, ap = rc._q_ancestor(q), rc._p_ancestor(p)
            if aq is not None and rc.relation(aq, p) == Relation.TRANSVERSE:
                continue
            if ap is not None and rc.relation(q, ap) == Relation.TRANSVERSE:
                continue
            for sign in ("+", "-"):
                word = fold_word(q.word, sign, p.word, rc.fam.n0)
                if word.key not in rc.elements and word.key not in rc._rejected:
                    out[word.key] = word
    return sorted(out.values(), key=Word.sort_key)


def _try_derive(rc: RClass, word: Word) -> Optional[Element]:
    try:
        element = rc.derive(word)
    except HorseshoeError as e:
        logger.debug(f"candidate {word.key} rejected: {type(e).__name__}: {e}")
        return None
    if not rc.clears_floor(element.map):
        return None
    return element


def extend_class(rc: RClass, interval: Optional[ParamInterval] = None,
                 budgets: Optional[BudgetConfig] = None) -> RClass:
    """
    Close a class under simple composition and allowed parabolic composition.

    Args:
        rc: Class to extend (over the parent interval when `interval` is given)
        interval: Child interval; a new class seeded with rc's elements is built
        budgets: Budgets for the new class (default rc's)

    Returns:
        The extended class

    Raises:
        BudgetExhausted: max_elements reached; the partial class is attached
    """
    if interval is not None and interval is not rc.interval:
        child = RClass(rc.fam, interval, budgets or rc.budgets, parent=rc)
        for e in rc.ordered():
            child.add(Element(e.word, e.map, e.kind, e.t))
        rc = child
    elif budgets is not None:
        rc.budgets = budgets

    new_keys = set(rc.frontier) or set(rc.elements)
    sweep = 0
    with tracer.start_as_current_span("extend_class") as span:
        span.set_attribute("interval.level", rc.interval.level)
        try:
            while new_keys:
                sweep += 1
                start = time.perf_counter()
                candidates = _simple_candidates(rc, new_keys) + _parabolic_candidates(rc, new_keys)
                candidates.sort(key=Word.sort_key)
                with ThreadPoolExecutor(max_workers=settings.workers) as pool:
                    results = list(pool.map(lambda w: _try_derive(rc, w), candidates))
                added = set()
                for word, element in zip(candidates, results):
                    if element is None:
                        rc._rejected.add(word.key)
                        continue
                    if rc.add(element):
                        added.add(element.key)
                    if len(rc) >= rc.budgets.max_elements:
                        rc.exhausted = True
                        rc.frontier = added
                        raise BudgetExhausted(
                            f"class reached {len(rc)} elements at sweep {sweep}",
                            partial=rc, sweep=sweep,
                        )
                metrics.record_sweep()
                logger.info(f"sweep {sweep}: {len(candidates)} candidates, {len(added)} added, "
                            f"{len(rc)} stored ({time.perf_counter() - start:.2f}s)")
                new_keys = added
        except BudgetExhausted as e:
            logger.warning(f"budget exhausted: {e}")
            mark_error(span, e)
            raise
        finally:
            counts = rc.counts()
            metrics.set_class_size(counts["pure"] + counts["simple"], counts["parabolic"])
    rc.frontier = set()
    return rc


@dataclass
class ChildrenReport:
    simple: List[Element]
    non_simple: List[Tuple[Element, Element]]  # (child, P1 witness)

    @property
    def count(self) -> int:
        return len(self.simple) + len(self.non_simple)


def children(rc: RClass, element: Element) -> ChildrenReport:
    """Stored children of an element, split into simple and non-simple (with their P1)."""
    simple, non_simple = [], []
    for c in rc.child_elements(element):
        last = c.word.factors[-1]
        if isinstance(last, Fold):
            non_simple.append((c, rc.get(last.right)))
        else:
            simple.append(c)
    return ChildrenReport(simple, non_simple)


def prime_decompose(rc: RClass, element: Element) -> List[Element]:
    """The unique splitting into primes, leftmost first."""
    out = []
    for w in element.word.primes():
        e = rc.get(w)
        out.append(e if e is not None else rc.derive(w))
    return out


@dataclass
class CriticalityResult:
    status: Criticality
    witness: List[str] = field(default_factory=list)


def _decompose(rc: RClass, element: Element, root: Element, side: str) -> CriticalityResult:
    undetermined = None
    stack = [(root, [root.key])]
    while stack:
        piece, path = stack.pop()
        r = rc.relation(element, piece) if side == "Q" else rc.relation(piece, element)
        if r != Relation.CRITICAL:
            continue
        kids = rc.child_elements(piece) if side == "Q" else rc.q_child_elements(piece)
        if not kids:
            if rc.truncated(piece):
                undetermined = undetermined or path
                continue
            return CriticalityResult(Criticality.CRITICAL, path)
        for kid in reversed(kids):
            stack.append((kid, path + [kid.key]))
    if undetermined is not None:
        return CriticalityResult(Criticality.UNDETERMINED, undetermined)
    return CriticalityResult(Criticality.TRANSVERSE)


def classify_criticality(rc: RClass, element: Element, side: str) -> CriticalityResult:
    """
    Search an I-decomposition of P_s (side "Q") or Q_u (side "P") into pieces
    transverse or separated with respect to the element.

    Undetermined means the width floor cut the search; callers treat it as critical.
    """
    if side not in ("P", "Q"):
        raise ValueError(f"side must be 'P' or 'Q', got {side!r}")
    if side == "Q":
        special, strip = rc.Q_u, element.Q
        inside = rc.in_Q_u
        outer = special.Q
    else:
        special, strip = rc.P_s, element.P
        inside = rc.in_P_s
        outer = special.P
    if not element.word.factors or outer.disjoint(strip):
        return CriticalityResult(Criticality.TRANSVERSE)
    if strip.contains(outer):
        return CriticalityResult(Criticality.CRITICAL, [special.key])
    if not inside(element):
        return CriticalityResult(Criticality.CRITICAL, [special.key])
    root = rc.P_s if side == "Q" else rc.Q_u
    return _decompose(rc, element, root, side)


@dataclass
class RegularityReport:
    regular: bool
    bound: float
    bicritical: int
    undetermined: int
    witness: Optional[str] = None
    witness_widths: Optional[Tuple[float, float]] = None


def regular_from_widths(widths: Sequence[Tuple[float, float]], length: float, beta: float) -> Tuple[bool, Optional[int]]:
    """Every (|P|, |Q|) below |I|^beta? Returns (regular, index of the fattest offender)."""
    bound = length ** beta
    worst, worst_i = -1.0, None
    for i, (p, q) in enumerate(widths):
        if max(p, q) >= bound and max(p, q) > worst:
            worst, worst_i = max(p, q), i
    return worst_i is None, worst_i


def regularity_test(rc: RClass, beta: float) -> RegularityReport:
    """Classify every element against the tongue and bound the bicritical widths by |I|^beta."""
    bicritical, undetermined = [], 0
    with tracer.start_as_current_span("regularity_test"):
        for e in rc.ordered():
            if not e.word.factors:
                continue
            p_side = classify_criticality(rc, e, "P")
            q_side = classify_criticality(rc, e, "Q")
            p_crit = p_side.status != Criticality.TRANSVERSE
            q_crit = q_side.status != Criticality.TRANSVERSE
            e.flags = {"P_critical": p_crit, "Q_critical": q_crit, "bicritical": p_crit and q_crit}
            if p_crit and q_crit:
                bicritical.append(e)
                if Criticality.UNDETERMINED in (p_side.status, q_side.status):
                    undetermined += 1
    if undetermined:
        logger.warning(f"{undetermined} bicritical classifications were cut by the width floor")
    regular, i = regular_from_widths([e.widths for e in bicritical], rc.interval.length, beta)
    report = RegularityReport(regular, rc.interval.length ** beta, len(bicritical), undetermined)
    if i is not None:
        report.witness = bicritical[i].key
        report.witness_widths = bicritical[i].widths
    logger.info(f"regularity at level {rc.interval.level} (beta {beta}): regular={regular}, "
                f"{len(bicritical)} bicritical")
    return report


def stretched_exponential_constant(rc: RClass) -> float:
    """Smallest C with |P| <= C exp(-n^gamma) over the stored elements."""
    return max((e.widths[0] * math.exp(e.n ** GAMMA) for e in rc.elements.values() if e.n > 0), default=0.0)


def children_exponent(rc: RClass, element: Element, eps: float) -> Tuple[int, float]:
    """(count, log count / log(1/eps)) for the children with |P'| >= eps |P|."""
    width = element.widths[0]
    count = sum(1 for c in rc.child_elements(element) if c.widths[0] >= eps * width)
    exponent = math.log(count) / math.log(1.0 / eps) if count > 0 else 0.0
    return count, exponent


@dataclass
class AlgebraReport:
    heredity_violations: List[Tuple[str, str, str, str]]
    concavity_violations: List[Tuple[str, str, str, str]]
    quadruples: int

    @property
    def passed(self) -> bool:
        return not self.heredity_violations and not self.concavity_violations


def check_relation_algebra(rc: RClass) -> AlgebraReport:
    """
    Exhaustive heredity and concavity checks over the stored tongue elements.

    Heredity: Q0 < Q0', P1 < P1', Q0' T P1' implies Q0 T P1.
    Concavity: Q0 < Q0', P1 < P1', Q0 T P1' and Q0' T P1 imply Q0' T P1'.
    """
    qs = [e for e in rc.ordered() if rc.in_Q_u(e)]
    ps = [e for e in rc.ordered() if rc.in_P_s(e)]
    q_sub = np.array([[b.Q.contains(a.Q) for b in qs] for a in qs])  # q_sub[i, j]: Q_i inside Q_j
    p_sub = np.array([[b.P.contains(a.P) for b in ps] for a in ps])
    T = np.array([[rc.relation(q, p) == Relation.TRANSVERSE for p in ps] for q in qs])
    heredity, concavity, count = [], [], 0
    for i, j in zip(*np.nonzero(q_sub)):
        for k, l in zip(*np.nonzero(p_sub)):
            count += 1
            if T[j, l] and not T[i, k]:
                heredity.append((qs[i].key, qs[j].key, ps[k].key, ps[l].key))
            if T[i, l] and T[j, k] and not T[j, l]:
                concavity.append((qs[i].key, qs[j].key, ps[k].key, ps[l].key))
    return AlgebraReport(heredity, concavity, count)


def build_class(fam: ModelFamily, intervals: Sequence[ParamInterval],
                budgets: BudgetConfig = None) -> RClass:
    """
    R(I) along a chain of nested intervals: the initial class on the first,
    closed under composition, then extended onto each child in turn.
    """
    rc = init_class(fam, intervals[0], budgets)
    rc = extend_class(rc)
    for interval in intervals[1:]:
        rc = extend_class(rc, interval)
    return rc
