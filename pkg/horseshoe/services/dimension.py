"""
Transverse Dimension

Prime chains of a rectangle class form the symbolic model of the stable
lamination. The transfer operator

    (L_d h)(s) = sum over s' -> s of exp(-d b(s')) h(s')

on chains of m_trunc primes has dominant eigenvalue lambda_d, strictly
decreasing in d; the stable dimension d_s solves lambda_d = 1. The Gibbs
measure at d_s follows from the Jacobian property mu(s') = exp(-d b(s')) mu(T s').
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, sparse

from horseshoe.core.config import settings
from horseshoe.core.exceptions import BracketFailure, NonConvergence, TruncationTooCoarse
from horseshoe.core.run_config import TruncationConfig
from horseshoe.observability.metrics import metrics
from horseshoe.observability.tracing import get_tracer, mark_error
from horseshoe.services.affine import ImplicitMap, simple_compose
from horseshoe.services.family import compose_degrees
from horseshoe.services.rclass import Element, RClass
from horseshoe.services.words import Word

logger = logging.getLogger(__name__)
tracer = get_tracer(__name__)

D_BRACKET = (0.05, 1.5)


def dilatation(F: ImplicitMap, tail: Optional[ImplicitMap] = None, base_point: float = 0.5) -> float:
    """
    Transverse dilatation b = -log|A_x| + log|1 - B_x Dphi| of a prime.

    Args:
        F: Prime map
        tail: Map whose domain center line stands in for the stable curve in
            the target chart (None: the vertical center line of the chart)
        base_point: Fraction of the source chart height where y0 sits

    Returns:
        b evaluated at (y0, x') on the stable-curve proxy
    """
    r = F.rect
    y0 = r.y_lo + base_point * (r.y_hi - r.y_lo)
    target = F.target.rect
    y1 = 0.5 * (target.y_lo + target.y_hi)
    if tail is None:
        x1, slope = 0.5 * (r.x_lo + r.x_hi), 0.0
    else:
        strip = tail.domain
        for _ in range(4):
            x1 = float(strip.center(y1))
            y1 = float(F.B(y0, x1))
        x1 = float(strip.center(y1))
        slope = 0.5 * float(strip.lower.derivative()(y1) + strip.upper.derivative()(y1))
    A_x = float(F.A.derivative(0, 1)(y0, x1))
    B_x = float(F.B.derivative(0, 1)(y0, x1))
    return -math.log(abs(A_x)) + math.log(abs(1.0 - B_x * slope))


@dataclass
class CylinderState:
    """One chain of primes with its composite map."""
    primes: Tuple[str, ...]
    word: Word
    map: ImplicitMap
    b: float = 0.0

    @property
    def base(self) -> int:
        return self.word.start

    @property
    def width(self) -> float:
        return self.map.widths()[0]

    @property
    def depth(self) -> int:
        return len(self.primes)


class ChainCatalog:
    """
    Prime chains of a class up to a depth, with composite maps and dilatations.

    Chains already stored in the class reuse its maps; the rest are composed
    from the prefix chain and the last prime.
    """

    def __init__(self, rc: RClass, truncation: TruncationConfig, base_point: float = 0.5):
        self.rc = rc
        self.truncation = truncation
        self.base_point = base_point
        self.primes: List[Element] = [p for p in rc.primes() if p.widths[0] >= truncation.w_min]
        self.excluded: List[Element] = [p for p in rc.primes() if p.widths[0] < truncation.w_min]
        self.chains: Dict[Tuple[str, ...], CylinderState] = {}
        self.dropped = 0
        self._by_key = {p.key: p for p in self.primes}
        self._build()

    def _compose(self, prefix: CylinderState, prime: Element) -> Optional[CylinderState]:
        word = prefix.word.join(prime.word)
        stored = self.rc.get(word)
        if stored is not None:
            F = stored.map
        elif word.is_pure:
            F = self.rc.fam.itinerary_map(word.symbols)
        else:
            F = simple_compose(prefix.map, prime.map, degrees=compose_degrees(prefix.map, prime.map),
                               with_calculus=False)
        state = CylinderState(prefix.primes + (prime.key,), word, F)
        return state if state.width >= self.truncation.w_min else None

    def _build(self):
        layer = []
        for p in self.primes:
            state = CylinderState((p.key,), p.word, p.map)
            self.chains[state.primes] = state
            layer.append(state)
        for _ in range(self.truncation.m_trunc - 1):
            nxt = []
            for state in layer:
                for p in self.primes:
                    if p.word.start != state.word.end:
                        continue
                    try:
                        child = self._compose(state, p)
                    except NonConvergence as e:
                        logger.debug(f"chain {state.word.key}{p.key} dropped: {e}")
                        continue
                    if child is not None:
                        self.chains[child.primes] = child
                        nxt.append(child)
                    else:
                        self.dropped += 1
            layer = nxt
        # b of a chain: its first prime, with the rest of the chain as stable-curve proxy
        for key, state in self.chains.items():
            first = self._by_key[key[0]]
            tail = self.chains.get(key[1:]) if len(key) > 1 else None
            state.b = dilatation(first.map, tail.map if tail is not None else None, self.base_point)
        logger.info(f"{len(self.chains)} prime chains to depth {self.truncation.m_trunc} "
                    f"over {len(self.primes)} primes ({len(self.excluded)} excluded)")

    def at_depth(self, m: int) -> List[CylinderState]:
        return [self.chains[k] for k in sorted(self.chains) if len(k) == m]

    def b_of(self, key: Tuple[str, ...]) -> float:
        state = self.chains.get(key)
        if state is not None:
            return state.b
        return dilatation(self._by_key[key[0]].map, None, self.base_point)

    def birkhoff(self, key: Tuple[str, ...]) -> float:
        """Sum of the dilatations along a chain."""
        return sum(self.b_of(key[i:]) for i in range(len(key)))

    def tail_mass(self, d_minus: float) -> float:
        return float(sum(p.n * p.widths[0] ** d_minus for p in self.excluded))


@dataclass
class TransferMatrix:
    """Adjacency and dilatations of the depth-m chain states; weights exp(-d b) are applied per d."""
    states: List[CylinderState]
    adjacency: sparse.csr_matrix  # adjacency[i, j] = 1 when state i maps into state j
    b: np.ndarray
    tail_mass: float
    excluded_states: int = 0

    def matrix(self, d: float) -> sparse.csr_matrix:
        """M[s', s] = exp(-d b(s')) on allowed transitions."""
        return sparse.diags(np.exp(-d * self.b)) @ self.adjacency

    def dominant(self, d: float, tol: float = None, max_iters: int = None, left: bool = False) -> Tuple[float, np.ndarray]:
        """
        Power iteration for (lambda_d, h_d) from the all-ones vector.

        Args:
            left: Iterate the adjoint instead, giving the conformal weights nu_d
                with M nu = lambda nu

        Raises:
            NonConvergence: if max_iters is reached
        """
        tol = tol or settings.power_tolerance
        max_iters = max_iters or settings.power_max_iters
        L = self.matrix(d).tocsr() if left else self.matrix(d).T.tocsr()
        h = np.ones(len(self.states)) / len(self.states)
        lam = 0.0
        for it in range(max_iters):
            g = L @ h
            lam = float(g.sum())
            if lam <= 0.0:
                raise NonConvergence(f"transfer operator annihilated the iterate at d={d}", d=d)
            g /= lam
            if np.abs(g - h).sum() < tol:
                return lam, g
            h = g
        raise NonConvergence(f"power iteration did not converge in {max_iters} iterations at d={d}", d=d)

    def eigenvalue(self, d: float) -> float:
        return self.dominant(d)[0]


def transfer_matrix(rc: RClass, truncation: TruncationConfig = None, base_point: float = 0.5,
                    catalog: ChainCatalog = None) -> TransferMatrix:
    """
    Assemble the transfer operator on chains of m_trunc primes.

    Raises:
        TruncationTooCoarse: if the excluded primes carry more than tail_mass_ceiling
    """
    truncation = truncation or TruncationConfig()
    catalog = catalog or ChainCatalog(rc, truncation, base_point)
    d_s0 = rc.fam.dimensions[0]
    tail = catalog.tail_mass(d_s0 - rc.fam.eps0)
    if tail > settings.tail_mass_ceiling:
        raise TruncationTooCoarse(f"excluded primes carry tail mass {tail:.3g}", tail_mass=tail,
                                  ceiling=settings.tail_mass_ceiling)
    m = truncation.m_trunc
    states = catalog.at_depth(m)
    if not states:
        raise TruncationTooCoarse(f"no prime chain of depth {m} clears w_min={truncation.w_min}")
    by_head: Dict[Tuple[str, ...], List[int]] = {}
    for i, s in enumerate(states):
        by_head.setdefault(s.primes[:-1], []).append(i)
    rows, cols = [], []
    for i, s in enumerate(states):
        for j in by_head.get(s.primes[1:], []):
            if states[j].base == s.word.factors[0].end:
                rows.append(i)
                cols.append(j)
    n = len(states)
    adjacency = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    return TransferMatrix(states, adjacency, np.array([s.b for s in states]), tail, catalog.dropped)


@dataclass
class DimensionResult:
    d_s: float
    eigenvalue: float
    lambda_curve: List[Tuple[float, float]]
    monotone: bool
    tail_mass: float
    eigenvector_ratio: float
    truncation: Dict[str, float]
    states: int

    def to_dict(self) -> Dict[str, object]:
        return {
            "d_s": self.d_s,
            "eigenvalue": self.eigenvalue,
            "lambda_curve": [[d, lam] for d, lam in self.lambda_curve],
            "monotone": self.monotone,
            "tail_mass": self.tail_mass,
            "eigenvector_ratio": self.eigenvector_ratio,
            "truncation": self.truncation,
            "states": self.states,
        }


def pressure_curve(T: TransferMatrix, d_grid: Sequence[float]) -> Tuple[List[Tuple[float, float]], bool]:
    """lambda_d over a grid and whether it strictly decreases."""
    curve = [(float(d), T.eigenvalue(float(d))) for d in d_grid]
    values = [lam for _, lam in curve]
    return curve, all(a > b for a, b in zip(values, values[1:]))


def solve_dimension(rc: RClass, truncation: TruncationConfig = None, bracket: Tuple[float, float] = D_BRACKET,
                    base_point: float = 0.5, T: TransferMatrix = None) -> DimensionResult:
    """
    Solve lambda_d = 1 by bisection.

    Args:
        rc: Extended class
        truncation: m_trunc and w_min
        bracket: Search interval for d
        base_point: Base point fraction for the dilatation
        T: Prebuilt transfer matrix (reused across calls)

    Raises:
        BracketFailure: if lambda does not straddle 1 on the bracket
    """
    truncation = truncation or TruncationConfig()
    start = time.perf_counter()
    with tracer.start_as_current_span("solve_dimension") as span:
        T = T or transfer_matrix(rc, truncation, base_point)
        lo, hi = bracket
        lam_lo, lam_hi = T.eigenvalue(lo), T.eigenvalue(hi)
        if not (lam_lo > 1.0 > lam_hi):
            e = BracketFailure(f"lambda_d does not straddle 1 on [{lo}, {hi}]: ({lam_lo:.6g}, {lam_hi:.6g})",
                               lam_lo=lam_lo, lam_hi=lam_hi)
            mark_error(span, e)
            raise e
        d_s = optimize.bisect(lambda d: T.eigenvalue(d) - 1.0, lo, hi, xtol=settings.bisection_tolerance,
                              maxiter=200)
        lam, h = T.dominant(d_s)
        curve, monotone = pressure_curve(T, np.linspace(lo, hi, 20))
        if not monotone:
            logger.warning("lambda_d is not strictly decreasing on the d-grid")
        span.set_attribute("dimension.d_s", d_s)
        span.set_attribute("dimension.states", len(T.states))
    duration = time.perf_counter() - start
    metrics.record_dimension_solve(duration)
    logger.info(f"d_s = {d_s:.12f} from {len(T.states)} states ({duration:.2f}s)")
    return DimensionResult(
        d_s=float(d_s),
        eigenvalue=lam,
        lambda_curve=curve,
        monotone=monotone,
        tail_mass=T.tail_mass,
        eigenvector_ratio=float(h.max() / h.min()),
        truncation={"m_trunc": truncation.m_trunc, "w_min": truncation.w_min},
        states=len(T.states),
    )


def rooted_dimension(rc: RClass, base: int, depth: int, truncation: TruncationConfig = None,
                     catalog: ChainCatalog = None) -> float:
    """Root of the partition function sum exp(-d B(chain)) over depth-long chains starting in `base`."""
    truncation = truncation or TruncationConfig(m_trunc=depth)
    catalog = catalog or ChainCatalog(rc, truncation)
    sums = np.array([catalog.birkhoff(s.primes) for s in catalog.at_depth(depth) if s.base == base])
    if sums.size == 0:
        raise TruncationTooCoarse(f"no chains of depth {depth} start in rectangle {base}")

    def log_z(d):
        return float(np.log(np.sum(np.exp(-d * sums))))

    lo, hi = D_BRACKET
    if not (log_z(lo) > 0.0 > log_z(hi)):
        raise BracketFailure(f"rooted partition function does not change sign on {D_BRACKET}")
    return float(optimize.bisect(log_z, lo, hi, xtol=settings.bisection_tolerance, maxiter=200))


@dataclass
class GibbsTable:
    d_s: float
    rows: List[Tuple[str, int, float, float]]  # (word, depth, width, mu given the base rectangle)
    gibbs_constant: float
    additivity_error: float
    jacobian_error: float = 0.0
    normalization: Dict[int, float] = field(default_factory=dict)  # invariant mass per base rectangle


def gibbs_measure(rc: RClass, d_s: float, truncation: TruncationConfig = None,
                  catalog: ChainCatalog = None) -> GibbsTable:
    """
    Gibbs measure on the cylinder algebra of depth <= m_trunc.

    Depth-m states carry mu = h nu / <h, nu> from the right and left Perron
    vectors at d_s. One step longer cylinders s' -> s get the Jacobian weight
    exp(-d_s b(s')) h(s') / (lambda h(s)) mu(s); jacobian_error is the worst
    relative mismatch of their marginals against mu on either end. Rows report
    mu conditioned on the base rectangle, shallower cylinders by summation.
    """
    truncation = truncation or TruncationConfig()
    catalog = catalog or ChainCatalog(rc, truncation)
    T = transfer_matrix(rc, truncation, catalog=catalog)
    with tracer.start_as_current_span("gibbs_measure") as span:
        lam, h = T.dominant(d_s)
        _, nu = T.dominant(d_s, left=True)
        weight = h * nu
        mu_state = weight / weight.sum()

        M = T.matrix(d_s).tocoo()
        jump = M.data * h[M.row] / (lam * h[M.col])
        edge = jump * mu_state[M.col]
        n = len(T.states)
        into = np.bincount(M.col, weights=edge, minlength=n)
        out = np.bincount(M.row, weights=edge, minlength=n)
        # states off the recurrent part of the truncated graph carry no mass
        live = mu_state > 0.0
        jacobian = float(max(np.max(np.abs(into - mu_state)[live] / mu_state[live]),
                             np.max(np.abs(out - mu_state)[live] / mu_state[live])))
        span.set_attribute("gibbs.jacobian_error", jacobian)

    totals: Dict[int, float] = {}
    for s, value in zip(T.states, mu_state):
        totals[s.base] = totals.get(s.base, 0.0) + float(value)
    mu: Dict[Tuple[str, ...], float] = {}
    for s, value in zip(T.states, mu_state):
        value = float(value) / totals[s.base] if totals[s.base] > 0.0 else 0.0
        for k in range(1, len(s.primes) + 1):
            mu[s.primes[:k]] = mu.get(s.primes[:k], 0.0) + value
    rows, worst = [], 1.0
    for key in sorted(mu, key=lambda k: (len(k), k)):
        state = catalog.chains[key]
        ratio = mu[key] / state.width ** d_s
        if ratio > 0.0:
            worst = max(worst, ratio, 1.0 / ratio)
        rows.append((state.word.key, len(key), state.width, mu[key]))
    additivity = 0.0
    for base in totals:
        top = sum(v for k, v in mu.items() if len(k) == 1 and catalog.chains[k].base == base)
        additivity = max(additivity, abs(top - 1.0))
    if jacobian > 1e-6:
        logger.warning(f"Gibbs weights miss the Jacobian identity by {jacobian:.3g}")
    logger.info(f"Gibbs measure at d_s = {d_s:.6f}: C = {worst:.4g} over {len(rows)} cylinders")
    return GibbsTable(d_s, rows, worst, additivity, jacobian, totals)


@dataclass
class ThetaSeries:
    partial_sum: float
    generations: List[float]
    tail: float
    convergent: bool


def theta_series(rc: RClass, root: Element, s: float, depth: Optional[int] = None,
                 margin: float = 0.05) -> ThetaSeries:
    """
    Sum of |P|^s over the stored descendants of `root`, generation by generation,
    with a geometric tail from the ratio of the last two generations.

    When `depth` exceeds the stored generations, the tail covers the missing ones
    up to `depth`; without `depth` it covers all of them.
    """
    generations, layer = [], [root]
    while True:
        layer = [c for e in layer for c in rc.child_elements(e)]
        if not layer:
            break
        generations.append(float(sum(e.widths[0] ** s for e in layer)))
    d_s0 = rc.fam.dimensions[0]
    convergent = s >= d_s0 + margin
    tail = 0.0
    if len(generations) >= 2 and generations[-2] > 0.0:
        r = generations[-1] / generations[-2]
        last = generations[-1]
        if depth is not None:
            extra = max(depth - len(generations), 0)
            tail = float(sum(last * r ** k for k in range(1, extra + 1)))
        elif r < 1.0:
            tail = last * r / (1.0 - r)
        else:
            tail = math.inf
    return ThetaSeries(float(sum(generations)), generations, tail, convergent)


@dataclass
class WeightedSum:
    total: float
    norm: float
    ratio: float
    bound_ratio: float
    count: int


def weighted_children_sum(rc: RClass, element: Element, kappa: float, d_minus: float, m: int) -> WeightedSum:
    """
    Sum of ||P'|| = |P'|^d_minus kappa^r(P') over the m-th generation below `element`.

    ratio is total/||P||; bound_ratio is total/(kappa^(m/2) ||P||).
    """
    if not 0.0 < kappa < 1.0:
        raise ValueError(f"kappa must lie in (0, 1), got {kappa}")

    def weight(e: Element) -> float:
        return e.widths[0] ** d_minus * kappa ** e.r

    layer = [element]
    for _ in range(m):
        layer = [c for e in layer for c in rc.child_elements(e)]
    norm = weight(element)
    total = float(sum(weight(e) for e in layer))
    return WeightedSum(total, norm, total / norm, total / (kappa ** (m / 2.0) * norm), len(layer))
