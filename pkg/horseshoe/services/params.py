"""
Parameter Space

The scale tree of parameter intervals (I0 = [eps0, 2 eps0], lengths
eps_{k+1} = eps_k^(1 + tau), floor(eps_k^-tau) candidates per interval),
condition (H4) and the leading-order exponent calculus feeding the
bicritical budgets.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from horseshoe.core.exceptions import ConfigError, ConventionViolated, TooFewCandidates

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class ParamInterval:
    """One node of the interval tree; children are created on demand."""
    level: int
    t_lo: float
    t_hi: float
    tau: float
    eps: float = None
    index: int = 0
    parent: Optional["ParamInterval"] = None
    _children: Optional[List["ParamInterval"]] = field(default=None, repr=False)

    def __post_init__(self):
        # lengths are carried explicitly; t_hi - t_lo loses precision deep in the tree
        if self.eps is None:
            self.eps = self.t_hi - self.t_lo

    @property
    def length(self) -> float:
        return self.eps

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.t_lo + self.t_hi)

    @property
    def child_length(self) -> float:
        return self.eps ** (1.0 + self.tau)

    @property
    def candidate_count(self) -> int:
        if self.eps <= 0.0:
            return 0
        # floor with a small guard so exact powers like (1e-4)^-0.25 = 10 are not lost
        return int(math.floor(self.eps ** (-self.tau) * (1.0 + 1e-12)))

    @property
    def discarded(self) -> float:
        """Length of the remainder not covered by the candidates (< child_length)."""
        if self.eps <= 0.0:
            return 0.0
        return max(self.eps - self.candidate_count * self.child_length, 0.0)

    @property
    def path(self) -> Tuple[int, ...]:
        node, out = self, []
        while node.parent is not None:
            out.append(node.index)
            node = node.parent
        return tuple(reversed(out))

    def contains(self, other: "ParamInterval", tol: float = 1e-15) -> bool:
        return self.t_lo - tol <= other.t_lo and other.t_hi <= self.t_hi + tol

    def sample(self, n: int) -> np.ndarray:
        return np.linspace(self.t_lo, self.t_hi, n)

    def children(self) -> List["ParamInterval"]:
        """
        Subdivide into floor(eps^-tau) contiguous intervals of length eps^(1 + tau).

        Emits TooFewCandidates when fewer than two candidates fit.

        Raises:
            ConfigError: for a zero-length interval (an explicit parameter value)
        """
        if self.eps <= 0.0:
            raise ConfigError(f"interval [{self.t_lo}, {self.t_hi}] has zero length and cannot be subdivided",
                              t_lo=self.t_lo, t_hi=self.t_hi)
        if self._children is None:
            count = self.candidate_count
            if count < 2:
                message = f"interval at level {self.level} has {count} candidate(s); selection is meaningless"
                logger.warning(message)
                warnings.warn(message, TooFewCandidates, stacklevel=2)
            h = self.child_length
            self._children = [
                ParamInterval(self.level + 1, self.t_lo + i * h, self.t_lo + (i + 1) * h, self.tau, h, i, self)
                for i in range(count)
            ]
        return self._children

    def child(self, i: int) -> "ParamInterval":
        kids = self.children()
        if not 0 <= i < len(kids):
            raise IndexError(f"child index {i} out of range (0..{len(kids) - 1})")
        return kids[i]

    def to_dict(self) -> Dict[str, object]:
        return {"level": self.level, "t_lo": self.t_lo, "t_hi": self.t_hi, "length": self.eps,
                "candidates": self.candidate_count, "path": list(self.path)}


class IntervalTree:
    """
    Lazily expanded interval tree of the given depth.

    Args:
        eps0: Root length (the root is [eps0, 2 eps0])
        tau: Scale exponent
        depth: Deepest level that may be materialized
    """

    def __init__(self, eps0: float, tau: float, depth: int):
        if not (0.0 < eps0 < 1.0 and 0.0 < tau < 1.0 and depth >= 0):
            raise ValueError(f"need 0 < eps0 < 1, 0 < tau < 1, depth >= 0 (got {eps0}, {tau}, {depth})")
        self.eps0 = eps0
        self.tau = tau
        self.depth = depth
        self.root = ParamInterval(0, eps0, 2.0 * eps0, tau, eps0)

    def level_length(self, k: int) -> float:
        """eps_k = eps0^((1 + tau)^k)."""
        return float(math.exp((1.0 + self.tau) ** k * math.log(self.eps0)))

    def level_lengths(self) -> List[float]:
        return [self.level_length(k) for k in range(self.depth + 1)]

    def level_candidates(self, k: int) -> int:
        return int(math.floor(self.level_length(k) ** (-self.tau) * (1.0 + 1e-12)))

    def nodes_at_level(self, k: int) -> int:
        return int(np.prod([self.level_candidates(j) for j in range(k)], dtype=object)) if k else 1

    def discarded_at_level(self, k: int) -> float:
        """Total remainder length discarded when subdividing every interval of level k."""
        eps_k = self.level_length(k)
        remainder = eps_k - self.level_candidates(k) * self.level_length(k + 1)
        return float(self.nodes_at_level(k) * max(remainder, 0.0))

    def path(self, indices: Sequence[int]) -> List[ParamInterval]:
        """Materialize root -> ... along child indices."""
        if len(indices) > self.depth:
            raise ValueError(f"path of length {len(indices)} exceeds tree depth {self.depth}")
        node, out = self.root, [self.root]
        for i in indices:
            node = node.child(int(i))
            out.append(node)
        return out

    def leaf(self, indices: Sequence[int]) -> ParamInterval:
        return self.path(indices)[-1]


def interval_tree(eps0: float, tau: float, depth: int) -> IntervalTree:
    tree = IntervalTree(eps0, tau, depth)
    if depth > 0:
        tree.root.children()
    return tree


def check_H4(d_s: float, d_u: float) -> bool:
    """(d_s + d_u)^2 + max(d_s, d_u)^2 < d_s + d_u + max(d_s, d_u)."""
    s = d_s + d_u
    m = max(d_s, d_u)
    return s * s + m * m < s + m


class ExponentSet(BaseModel):
    """Leading-order exponents (plus optional small offsets) for one pair of dimensions."""
    d_s: float
    d_u: float
    rho0: float
    rho1: float
    rho0_prime: float
    rho1_prime: float
    sigma0: float
    sigma1: float
    beta_max: float
    x_cr_exponent: float
    x_bar_exponent: float
    critical_exponent: float
    exceptional_bound: float
    h4: bool


def exponents(d_s: float, d_u: float, offsets: Dict[str, float] = None) -> ExponentSet:
    """
    Exponent calculus at leading order.

    Args:
        d_s: Stable dimension d_s0 (must be >= d_u0)
        d_u: Unstable dimension d_u0
        offsets: Optional additive corrections keyed rho0, rho1, sigma0, sigma1

    Raises:
        ConventionViolated: if d_s < d_u
    """
    if d_s < d_u:
        raise ConventionViolated(f"exponents need d_s0 >= d_u0; swap ({d_s}, {d_u})", d_s=d_s, d_u=d_u)
    if not (0.0 < d_u and d_s < 1.0):
        raise ValueError(f"dimensions must lie in (0, 1), got ({d_s}, {d_u})")
    if d_s + d_u <= 1.0:
        logger.warning(f"d_s0 + d_u0 = {d_s + d_u:.6g} <= 1: outside the bifurcation regime")
    off = {"rho0": 0.0, "rho1": 0.0, "sigma0": 0.0, "sigma1": 0.0, **(offsets or {})}
    s = d_s + d_u
    rho0 = d_s + off["rho0"]
    rho1 = d_s * (2.0 * d_s + d_u - 1.0) / s + off["rho1"]
    sigma0 = 1.0 - d_s + off["sigma0"]
    sigma1 = d_s - d_u + off["sigma1"]
    ratio = d_u / d_s
    return ExponentSet(
        d_s=d_s,
        d_u=d_u,
        rho0=rho0,
        rho1=rho1,
        rho0_prime=ratio * rho0,
        rho1_prime=ratio * rho1,
        sigma0=sigma0,
        sigma1=sigma1,
        beta_max=(1.0 - d_u) * s / (d_s * (2.0 * d_s + d_u - 1.0)),
        x_cr_exponent=sigma0 / (rho0 - rho1),
        x_bar_exponent=(sigma0 + sigma1) / rho1,
        critical_exponent=sigma1 + sigma0 * (rho0 - 2.0 * rho1) / (rho0 - rho1),
        exceptional_bound=(s - 1.0) * 2.0 * d_s / (2.0 * d_u + d_s),
        h4=check_H4(d_s, d_u),
    )


@dataclass
class Budget:
    B: float
    B0: float
    B1: float
    regime: str  # "B0" below the crossover, "B1" above
    x_cr: float
    x_bar: float


def crossover(len_alpha: float, len_omega: float, eps0: float, P_u: float, exps: ExponentSet) -> float:
    """x_cr = eps0 |P_u| max(|I_a|, |I_w|)/eps0)^(sigma0 / (rho0 - rho1))."""
    return eps0 * P_u * (max(len_alpha, len_omega) / eps0) ** (exps.sigma0 / (exps.rho0 - exps.rho1))


def bicritical_budget(x: float, len_alpha: float, len_omega: float, eps0: float, P_u: float,
                      exps: ExponentSet) -> Budget:
    """
    B = max(B0, B1) for the bicritical count at scale x.

    Args:
        x: Width scale (> 0)
        len_alpha: |I_alpha|
        len_omega: |I_omega|
        eps0: Root interval length
        P_u: Width of the special rectangle P_u
        exps: Exponents for the family
    """
    if x <= 0:
        raise ValueError(f"x must be positive, got {x}")
    z = x / (eps0 * P_u)
    a = len_alpha / eps0
    w = len_omega / eps0
    B0 = z ** (-exps.rho0) * a ** (exps.sigma0 + exps.sigma1) * w ** exps.sigma0
    B1 = z ** (-exps.rho1) * a ** exps.sigma1 * min(a, w) ** exps.sigma0
    x_cr = crossover(len_alpha, len_omega, eps0, P_u, exps)
    x_bar = eps0 * P_u * a ** exps.x_bar_exponent
    return Budget(B=max(B0, B1), B0=B0, B1=B1, regime="B0" if x <= x_cr else "B1", x_cr=x_cr, x_bar=x_bar)


def budget_sweep(N_range: Iterable[int], len_alpha: float, len_omega: float, eps0: float, P_u: float,
                 exps: ExponentSet) -> List[Tuple[int, float, Budget]]:
    """Budgets over the dyadic scales x = 2^-N."""
    return [(N, 2.0 ** -N, bicritical_budget(2.0 ** -N, len_alpha, len_omega, eps0, P_u, exps)) for N in N_range]


def h4_region(n: int = 50, lo: float = 0.01, hi: float = 0.99) -> List[Dict[str, object]]:
    """
    Rows (d_s0, d_u0, h4, beta_max) over an n x n grid with d_s0 >= d_u0.

    beta_max is only defined when d_s0 + d_u0 > 1 and 2 d_s0 + d_u0 > 1; elsewhere it is None.
    """
    rows = []
    grid = np.linspace(lo, hi, n)
    for d_s in grid:
        for d_u in grid:
            if d_u > d_s:
                continue
            beta = None
            if d_s + d_u > 1.0:
                beta = float((1.0 - d_u) * (d_s + d_u) / (d_s * (2.0 * d_s + d_u - 1.0)))
            rows.append({"d_s": float(d_s), "d_u": float(d_u), "h4": check_H4(float(d_s), float(d_u)),
                         "beta_max": beta})
    return rows


def resolve_intervals(eps0: float, tau: float, indices: Sequence[int] = (),
                      t: Optional[float] = None) -> List[ParamInterval]:
    """
    Intervals a run builds over: I0 and its descendants along `indices`, or a
    single zero-length interval when an explicit parameter value is given.
    """
    if t is not None:
        if indices:
            raise ValueError("an explicit t excludes an interval path")
        return [ParamInterval(0, t, t, tau, 0.0)]
    return IntervalTree(eps0, tau, len(indices)).path(indices)
