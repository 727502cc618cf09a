"""
Model Family

A two-symbol affine horseshoe on the charts R1 = R2 = [0, 1]^2 with a
heteroclinic quadratic tangency unfolding at t = 0. R1 carries the saddle
p_s = (0, 0) (local stable manifold {x = 0}), R2 the saddle p_u = (0, 0)
(local unstable manifold {y = 0}). Points in the gap of R2 near the fold
anchor take an N0-step excursion modelled by the fold G and land in R1.

Transition maps are exported as ImplicitMaps:

    A = alpha + x1 / lambda_u (+ c x1 (1 - x1) y0^2)
    B = beta + lambda_s y0    (+ c y0 (1 - y0) x1^2)

with alpha = 0 when a' = a (else 1 - 1/lambda_u) and beta = 0 when a = a'
(else 1 - lambda_s).
"""

import logging
import threading
import warnings
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import directed_hausdorff

from horseshoe.core.config import settings
from horseshoe.core.exceptions import H4Violated, NotATransition, NotUnfolded
from horseshoe.core.run_config import FamilyConfig
from horseshoe.services.affine import Chart, ConeParams, ImplicitMap, distortion, simple_compose
from horseshoe.services.fields import Rect
from horseshoe.services.fold import FoldGeometry, FoldMap, make_model_fold
from horseshoe.services.params import check_H4

logger = logging.getLogger(__name__)

FAMILY_CONE = ConeParams(lam=2.0, u=1.5, v=1.5)


def compose_degrees(F: ImplicitMap, Fp: ImplicitMap) -> Optional[Tuple[int, int]]:
    """Degrees for composites inside a class: exact for affine pairs, class_field_degree otherwise."""
    if F.is_affine and Fp.is_affine:
        return None
    return settings.class_field_degree, settings.class_field_degree


@dataclass
class Tongues:
    """Boundary polylines of L_u (in R2) and L_s (in R1), parametrized by w."""
    t: float
    w: np.ndarray
    u_lower: np.ndarray
    u_upper: np.ndarray
    s_lower: np.ndarray
    s_upper: np.ndarray

    def thickness(self) -> float:
        """Largest vertical extent of L_u."""
        return float(np.max(self.u_upper[:, 1] - self.u_lower[:, 1]))

    def width(self) -> float:
        return float(np.ptp(self.u_lower[:, 0]))


@dataclass
class SpecialRectangles:
    """Deepest pure cylinders containing the tongues for every t in I0."""
    symbols_s: Tuple[int, ...]
    symbols_u: Tuple[int, ...]
    n_s: int
    n_u: int
    width_s: float
    width_u: float
    eps0: float

    @property
    def ratio_s(self) -> float:
        return self.width_s / self.eps0

    @property
    def ratio_u(self) -> float:
        return self.width_u / self.eps0


class ModelFamily:
    """
    One-parameter family g_t: two Markov rectangles, full transition set,
    and the fold through the gap of R2.

    Args:
        config: Family parameters
    """

    alphabet = (1, 2)
    a_s = 1
    a_u = 2

    def __init__(self, config: FamilyConfig):
        self.config = config
        self.lambda_s = config.lambda_s
        self.lambda_u = config.expansion
        self.charts: Dict[int, Chart] = {a: Chart(f"R{a}", Rect(0.0, 1.0, 0.0, 1.0)) for a in self.alphabet}
        self.transitions = {(a, b) for a in self.alphabet for b in self.alphabet}
        self.cone = FAMILY_CONE
        self.fold_geometry = FoldGeometry(
            x_c=config.x_c, y_c=config.y_c, kappa_u=config.kappa_u, kappa_s=config.kappa_s,
            chi=config.chi, n0=config.n0,
        )
        perturbed = config.perturbed_branches
        self.perturbed = ({tuple(p) for p in perturbed} if perturbed is not None else set(self.transitions))
        self._maps: Dict[Tuple[int, ...], ImplicitMap] = {}
        self._inverses: Dict[Tuple[int, int], ImplicitMap] = {}
        self._lock = threading.Lock()

    @property
    def eps0(self) -> float:
        return self.config.eps0

    @property
    def n0(self) -> int:
        return self.config.n0

    @property
    def dimensions(self) -> Tuple[float, float]:
        """Closed-form (d_s0, d_u0) of the two-branch Cantor sets."""
        k = len(self.alphabet)
        return float(np.log(k) / np.log(1.0 / self.lambda_s)), float(np.log(k) / np.log(self.lambda_u))

    def nonlinearity(self, a: int, b: int) -> float:
        return self.config.nonlinearity if (a, b) in self.perturbed else 0.0

    def _offsets(self, a: int, b: int) -> Tuple[float, float]:
        alpha = 0.0 if b == a else 1.0 - 1.0 / self.lambda_u
        beta = 0.0 if a == b else 1.0 - self.lambda_s
        return alpha, beta

    def transition_map(self, a: int, b: int, t: float = None) -> ImplicitMap:
        """
        g_t restricted to P_ab = R_a cap g_t^-1(R_b); independent of t away from the gap.

        Raises:
            NotATransition: if (a, b) is not allowed
        """
        if (a, b) not in self.transitions:
            raise NotATransition(f"({a}, {b}) is not a transition", pair=(a, b))
        key = (a, b)
        with self._lock:
            cached = self._maps.get(key)
        if cached is not None:
            return cached
        alpha, beta = self._offsets(a, b)
        c = self.nonlinearity(a, b)
        lam_u, lam_s = self.lambda_u, self.lambda_s

        def A(y, x):
            return alpha + x / lam_u + c * x * (1.0 - x) * y ** 2

        def B(y, x):
            return beta + lam_s * y + c * y * (1.0 - y) * x ** 2

        degrees = (1, 1) if c == 0.0 else (4, 4)
        F = ImplicitMap.from_functions(A, B, self.charts[a], self.charts[b], degrees=degrees, cone=self.cone)
        with self._lock:
            return self._maps.setdefault(key, F)

    def branch_diffeo(self, a: int, b: int):
        """
        Explicit (phi, dphi/dx, domain strip) of an unperturbed branch,
        phi(x, y) = ((x - alpha) lambda_u, beta + lambda_s y).
        """
        alpha, beta = self._offsets(a, b)
        lam_u, lam_s = self.lambda_u, self.lambda_s

        def phi(x, y):
            return (np.asarray(x) - alpha) * lam_u, beta + lam_s * np.asarray(y)

        def dphi_dx(x, y):
            return np.full(np.broadcast(np.asarray(x), np.asarray(y)).shape, lam_u)

        return phi, dphi_dx, self.transition_map(a, b).domain

    def itinerary_map(self, symbols: Sequence[int]) -> ImplicitMap:
        """Composite of the transitions along symbols (at least two)."""
        symbols = tuple(int(s) for s in symbols)
        if len(symbols) < 2:
            raise ValueError("an itinerary needs at least two symbols")
        if len(symbols) == 2:
            return self.transition_map(*symbols)
        with self._lock:
            cached = self._maps.get(symbols)
        if cached is not None:
            return cached
        head = self.itinerary_map(symbols[:-1])
        last = self.transition_map(symbols[-2], symbols[-1])
        F = simple_compose(head, last, degrees=compose_degrees(head, last), with_calculus=False)
        with self._lock:
            return self._maps.setdefault(symbols, F)

    def inverse_transition(self, a: int, b: int) -> ImplicitMap:
        key = (a, b)
        with self._lock:
            cached = self._inverses.get(key)
        if cached is None:
            cached = self.transition_map(a, b).inverse()
            with self._lock:
                self._inverses.setdefault(key, cached)
        return cached

    def distortion_bound(self) -> float:
        """D0: largest distortion over the transition maps."""
        return max(distortion(self.transition_map(a, b)) for a, b in sorted(self.transitions))

    def fold(self, t: float) -> FoldMap:
        return make_model_fold(self.fold_geometry, t, self.charts[self.a_u], self.charts[self.a_s])

    def step(self, symbol: np.ndarray, x: np.ndarray, y: np.ndarray, t: Optional[float] = None):
        """
        One step of g_t on points (symbol, x, y); escaped points get symbol -1.

        Args:
            t: Parameter; None disables the fold excursion

        Returns:
            (symbol, x, y) after the step
        """
        symbol = np.asarray(symbol, dtype=int).copy()
        x = np.asarray(x, dtype=float).copy()
        y = np.asarray(y, dtype=float).copy()
        new_symbol = np.full(symbol.shape, -1)
        moved = np.zeros(symbol.shape, dtype=bool)
        for a, b in sorted(self.transitions):
            F = self.transition_map(a, b)
            mask = (symbol == a) & ~moved
            if not mask.any():
                continue
            lo = F.domain.lower(y[mask])
            hi = F.domain.upper(y[mask])
            inside = (x[mask] >= lo) & (x[mask] <= hi)
            idx = np.flatnonzero(mask)[inside]
            if idx.size:
                x1, y1 = F.forward(x[idx], y[idx])
                x[idx], y[idx] = x1, y1
                new_symbol[idx] = b
                moved[idx] = True
        if t is not None and t > 0:
            gap = (symbol == self.a_u) & ~moved
            if gap.any():
                G = self.fold(t)
                idx = np.flatnonzero(gap)
                x_s, y_s = G.step(x[idx], y[idx])
                lands = (x_s >= 0.0) & (x_s <= 1.0) & (y_s >= 0.0) & (y_s <= 1.0)
                keep = idx[lands]
                x[keep], y[keep] = x_s[lands], y_s[lands]
                new_symbol[keep] = self.a_s
        return new_symbol, x, y

    def step_back(self, symbol: np.ndarray, x: np.ndarray, y: np.ndarray):
        """One step of g^-1 through the transition branches; escaped points get symbol -1."""
        symbol = np.asarray(symbol, dtype=int).copy()
        x = np.asarray(x, dtype=float).copy()
        y = np.asarray(y, dtype=float).copy()
        new_symbol = np.full(symbol.shape, -1)
        moved = np.zeros(symbol.shape, dtype=bool)
        for a, b in sorted(self.transitions):
            F = self.transition_map(a, b)
            mask = (symbol == b) & ~moved
            if not mask.any():
                continue
            lo = F.image.lower(x[mask])
            hi = F.image.upper(x[mask])
            inside = (y[mask] >= lo) & (y[mask] <= hi)
            idx = np.flatnonzero(mask)[inside]
            if idx.size:
                y0, x0 = self.inverse_transition(a, b).forward(y[idx], x[idx])
                x[idx], y[idx] = x0, y0
                new_symbol[idx] = a
                moved[idx] = True
        return new_symbol, x, y

    def simulate(self, symbol, x, y, steps: int, t: Optional[float] = None, backward: bool = False) -> np.ndarray:
        """Itineraries of shape (points, steps + 1); -1 after escape."""
        symbol = np.asarray(symbol, dtype=int)
        out = np.full((symbol.size, steps + 1), -1)
        out[:, 0] = symbol
        s, px, py = symbol.copy(), np.asarray(x, dtype=float).copy(), np.asarray(y, dtype=float).copy()
        for k in range(1, steps + 1):
            alive = s >= 0
            if not alive.any():
                break
            if backward:
                ns, nx, ny = self.step_back(s[alive], px[alive], py[alive])
            else:
                ns, nx, ny = self.step(s[alive], px[alive], py[alive], t)
            s[alive], px[alive], py[alive] = ns, nx, ny
            out[:, k] = s
        return out

    def _seed_grid(self, n: int):
        g = (np.arange(n) + 0.5) / n
        X, Y = np.meshgrid(g, g, indexing="ij")
        symbols = np.concatenate([np.full(X.size, a) for a in self.alphabet])
        return symbols, np.tile(X.ravel(), len(self.alphabet)), np.tile(Y.ravel(), len(self.alphabet))

    def coding_consistency(self, depth: int = 8, grid: int = 40) -> Dict[str, int]:
        """
        Seeds whose forward orbit survives `depth` branch steps must lie in the
        cylinder labelled by their itinerary.
        """
        symbols, x, y = self._seed_grid(grid)
        codes = self.simulate(symbols, x, y, depth)
        survivors = np.all(codes >= 0, axis=1)
        mismatches = 0
        for i in np.flatnonzero(survivors):
            P = self.itinerary_map(codes[i]).domain
            if not (P.lower(y[i]) - 1e-12 <= x[i] <= P.upper(y[i]) + 1e-12):
                mismatches += 1
        logger.info(f"coding check depth {depth}: {int(survivors.sum())} survivors, {mismatches} mismatches")
        return {"seeds": int(symbols.size), "survivors": int(survivors.sum()), "mismatches": mismatches}

    def maximal_invariance(self, horizon: int = 4, grid: int = 200) -> Dict[str, int]:
        """
        Seeds whose forward and backward orbits stay in the rectangles for
        `horizon` steps must lie in the matching vertical and horizontal cylinders.
        """
        symbols, x, y = self._seed_grid(grid)
        fwd = self.simulate(symbols, x, y, horizon)
        bwd = self.simulate(symbols, x, y, horizon, backward=True)
        survivors = np.all(fwd >= 0, axis=1) & np.all(bwd >= 0, axis=1)
        violations = 0
        for i in np.flatnonzero(survivors):
            P = self.itinerary_map(fwd[i]).domain
            Q = self.itinerary_map(bwd[i][::-1]).image
            in_p = P.lower(y[i]) - 1e-12 <= x[i] <= P.upper(y[i]) + 1e-12
            in_q = Q.lower(x[i]) - 1e-12 <= y[i] <= Q.upper(x[i]) + 1e-12
            if not (in_p and in_q):
                violations += 1
        return {"seeds": int(symbols.size), "survivors": int(survivors.sum()), "violations": violations}

    def stable_slice(self, depth: int, y: float = 0.5, symbol: int = None) -> np.ndarray:
        """x-intervals of the depth-`depth` vertical cylinders of one rectangle at height y."""
        symbol = self.a_s if symbol is None else symbol
        words = [(symbol,)]
        for _ in range(depth):
            words = [w + (b,) for w in words for b in self.alphabet]
        out = []
        for w in words:
            P = self.itinerary_map(w).domain
            out.append((float(P.lower(y)), float(P.upper(y))))
        return np.array(sorted(out))

    def box_counting_dimension(self, depth: int = 8, y: float = 0.5) -> float:
        """Slope of log N(eps) against log(1/eps) for the stable Cantor slice."""
        intervals = self.stable_slice(depth, y)
        finest = float(np.min(intervals[:, 1] - intervals[:, 0]))
        scales = np.geomspace(0.25, 4.0 * finest, 12)
        counts = []
        for eps in scales:
            boxes = set()
            for lo, hi in intervals:
                boxes.update(range(int(np.floor(lo / eps)), int(np.floor(hi / eps)) + 1))
            counts.append(len(boxes))
        slope, _ = np.polyfit(np.log(1.0 / scales), np.log(counts), 1)
        logger.debug(f"box-counting slope at depth {depth}: {slope:.4f}")
        return float(slope)

    def geometry_polylines(self, t: Optional[float] = None, samples: int = 33) -> List[Tuple[str, np.ndarray]]:
        """Rectangle, cylinder-strip and tongue boundaries as (name, points[x, y]) polylines."""
        out = []
        for a in self.alphabet:
            out.append((f"R{a}", np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]], dtype=float)))
        v = np.linspace(0.0, 1.0, samples)
        for a, b in sorted(self.transitions):
            F = self.transition_map(a, b)
            out.append((f"P{a}{b}.lower", np.column_stack([F.domain.lower(v), v])))
            out.append((f"P{a}{b}.upper", np.column_stack([F.domain.upper(v), v])))
            out.append((f"Q{a}{b}.lower", np.column_stack([v, F.image.lower(v)])))
            out.append((f"Q{a}{b}.upper", np.column_stack([v, F.image.upper(v)])))
        if t is not None and t > 0:
            L = tongues(self, t, samples)
            out.extend([("L_u.lower", L.u_lower), ("L_u.upper", L.u_upper),
                        ("L_s.lower", L.s_lower), ("L_s.upper", L.s_upper)])
        return out


def make_family(config: FamilyConfig = None) -> ModelFamily:
    """
    Build the model family and check (H4) on its closed-form dimensions.

    Emits H4Violated (not fatal) when the configured dimensions fail (H4).
    """
    config = config or FamilyConfig()
    fam = ModelFamily(config)
    d_s, d_u = fam.dimensions
    if not check_H4(d_s, d_u):
        message = f"(H4) fails for d_s0 = {d_s:.5f}, d_u0 = {d_u:.5f}"
        logger.warning(message)
        warnings.warn(message, H4Violated, stacklevel=2)
    logger.info(f"model family: lambda_s = {fam.lambda_s}, lambda_u = {fam.lambda_u:.6g}, "
                f"d_s0 = {d_s:.5f}, d_u0 = {d_u:.5f}")
    return fam


def transition_map(fam: ModelFamily, a: int, b: int, t: float = None) -> ImplicitMap:
    return fam.transition_map(a, b, t)


def tongues(fam: ModelFamily, t: float, samples: int = 65) -> Tongues:
    """
    L_u = {(X_u(w, y_u), y_u): 0 <= y_u <= theta-bound} and its fold image L_s.

    Raises:
        NotUnfolded: if t <= 0
    """
    if t <= 0:
        raise NotUnfolded(f"tongues need t > 0, got {t}", t=t)
    G = fam.fold(t)
    w = np.linspace(-G.w_bound, G.w_bound, samples)
    zero = np.zeros_like(w)
    top = t - w ** 2  # theta(y_u, 0, t) = w^2
    u_lower = np.column_stack([G.X_u(w, zero), zero])
    u_upper = np.column_stack([G.X_u(w, top), top])
    x_s = G.solve_x_s(zero, w)
    s_lower = np.column_stack([zero, G.Y_s(w, zero)])
    s_upper = np.column_stack([x_s, G.Y_s(w, x_s)])
    return Tongues(t, w, u_lower, u_upper, s_lower, s_upper)


def fold_hausdorff(fam: ModelFamily, L: Tongues) -> float:
    """Hausdorff distance between the fold image of the L_u boundary and the L_s boundary."""
    G = fam.fold(L.t)
    image = np.vstack([np.column_stack(G.step(c[:, 0], c[:, 1])) for c in (L.u_lower, L.u_upper)])
    target = np.vstack([L.s_upper, L.s_lower])
    return float(max(directed_hausdorff(image, target)[0], directed_hausdorff(target, image)[0]))


def special_rectangles(fam: ModelFamily, t_range: Tuple[float, float] = None) -> SpecialRectangles:
    """
    Deepest pure cylinders P_s (around {x = 0} in R1) and Q_u (around {y = 0}
    in R2) containing the tongues for all t in I0 = [eps0, 2 eps0].
    """
    t_range = t_range or (fam.eps0, 2.0 * fam.eps0)
    G = fam.fold(t_range[1])
    need_s = float(G.solve_x_s(0.0, 0.0))  # largest x-extent of L_s
    need_u = float(t_range[1])  # largest y-extent of L_u

    def deepest(symbol: int, index: int, need: float) -> Tuple[int, float]:
        n = 1
        width = fam.itinerary_map((symbol,) * 2).widths()[index]
        while True:
            deeper = fam.itinerary_map((symbol,) * (n + 2)).widths()[index]
            if deeper < need:
                return n, width
            n, width = n + 1, deeper

    n_s, width_s = deepest(fam.a_s, 0, need_s)
    n_u, width_u = deepest(fam.a_u, 1, need_u)
    return SpecialRectangles(
        symbols_s=(fam.a_s,) * (n_s + 1),
        symbols_u=(fam.a_u,) * (n_u + 1),
        n_s=n_s, n_u=n_u, width_s=width_s, width_u=width_u, eps0=fam.eps0,
    )
