"""
Spectral Fields

Chebyshev tensor interpolants on chart rectangles. Bivariate fields take
their arguments in (y, x) order, matching the implicit representation
x0 = A(y0, x1), y1 = B(y0, x1). Interpolation uses Chebyshev-Lobatto nodes
(corners included), derivatives come from spectral differentiation.
"""

import logging
import warnings
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.optimize import minimize

from horseshoe.core.config import settings
from horseshoe.core.exceptions import DegreeTooLow

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Rect:
    """Closed rectangle [y_lo, y_hi] x [x_lo, x_hi]."""
    y_lo: float
    y_hi: float
    x_lo: float
    x_hi: float

    def transposed(self) -> "Rect":
        return Rect(self.x_lo, self.x_hi, self.y_lo, self.y_hi)

    def contains(self, y, x, tol: float = 1e-9) -> np.ndarray:
        y = np.asarray(y)
        x = np.asarray(x)
        return (
            (y >= self.y_lo - tol) & (y <= self.y_hi + tol)
            & (x >= self.x_lo - tol) & (x <= self.x_hi + tol)
        )

    def interior_points(self, fractions=(0.1, 0.3, 0.5, 0.7, 0.9)) -> Tuple[np.ndarray, np.ndarray]:
        """Tensor grid of interior check points, flattened."""
        f = np.asarray(fractions, dtype=float)
        ys = self.y_lo + f * (self.y_hi - self.y_lo)
        xs = self.x_lo + f * (self.x_hi - self.x_lo)
        Y, X = np.meshgrid(ys, xs, indexing="ij")
        return Y.ravel(), X.ravel()


def lobatto_nodes(degree: int, lo: float = -1.0, hi: float = 1.0) -> np.ndarray:
    """Chebyshev-Lobatto nodes, ascending, mapped to [lo, hi]."""
    k = np.arange(degree + 1)
    ref = -np.cos(np.pi * k / degree)
    return 0.5 * (lo + hi) + 0.5 * (hi - lo) * ref


def _to_ref(v, lo: float, hi: float):
    return (2.0 * np.asarray(v, dtype=float) - (lo + hi)) / (hi - lo)


def _is_affine(coeffs: np.ndarray, rel: float = 1e-13) -> bool:
    scale = max(1.0, float(np.max(np.abs(coeffs))))
    mask = np.ones_like(coeffs, dtype=bool)
    mask[0, 0] = False
    if coeffs.shape[0] > 1:
        mask[1, 0] = False
    if coeffs.shape[1] > 1:
        mask[0, 1] = False
    return not np.any(np.abs(coeffs[mask]) > rel * scale)


class Field1:
    """Univariate Chebyshev interpolant on [lo, hi]; strip boundary graphs."""

    def __init__(self, lo: float, hi: float, coeffs: np.ndarray):
        self.lo = float(lo)
        self.hi = float(hi)
        self.coeffs = np.asarray(coeffs, dtype=float)

    @classmethod
    def fit(cls, func: Callable[[np.ndarray], np.ndarray], lo: float, hi: float, degree: int) -> "Field1":
        nodes = lobatto_nodes(degree)
        values = np.asarray(func(0.5 * (lo + hi) + 0.5 * (hi - lo) * nodes), dtype=float)
        V = C.chebvander(nodes, degree)
        return cls(lo, hi, np.linalg.solve(V, values))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, v):
        return C.chebval(_to_ref(v, self.lo, self.hi), self.coeffs)

    def derivative(self, m: int = 1) -> "Field1":
        return Field1(self.lo, self.hi, C.chebder(self.coeffs, m, scl=2.0 / (self.hi - self.lo)))

    def sample(self, n: int = 257) -> Tuple[np.ndarray, np.ndarray]:
        v = np.linspace(self.lo, self.hi, n)
        return v, self(v)

    def __sub__(self, other: "Field1") -> "Field1":
        n = max(len(self.coeffs), len(other.coeffs))
        a = np.zeros(n)
        b = np.zeros(n)
        a[: len(self.coeffs)] = self.coeffs
        b[: len(other.coeffs)] = other.coeffs
        return Field1(self.lo, self.hi, a - b)


class ScalarField2:
    """
    Smooth bivariate function on a rectangle, stored as Chebyshev coefficients.

    coeffs[i, j] multiplies T_i(y_ref) T_j(x_ref). Derivative fields are
    cached; instances are otherwise immutable.
    """

    def __init__(self, domain: Rect, coeffs: np.ndarray, closed_form: Optional[Callable] = None):
        self.domain = domain
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.closed_form = closed_form
        self._derivatives: Dict[Tuple[int, int], "ScalarField2"] = {}

    @property
    def degrees(self) -> Tuple[int, int]:
        return self.coeffs.shape[0] - 1, self.coeffs.shape[1] - 1

    @property
    def is_affine(self) -> bool:
        return _is_affine(self.coeffs)

    @property
    def tail(self) -> float:
        """Largest trailing coefficient relative to the coefficient scale."""
        scale = max(1.0, float(np.max(np.abs(self.coeffs))))
        dy, dx = self.degrees
        parts = []
        if dy >= 2:
            parts.append(np.max(np.abs(self.coeffs[-1, :])))
        if dx >= 2:
            parts.append(np.max(np.abs(self.coeffs[:, -1])))
        return float(max(parts)) / scale if parts else 0.0

    def __call__(self, y, x):
        d = self.domain
        yr, xr = np.broadcast_arrays(_to_ref(y, d.y_lo, d.y_hi), _to_ref(x, d.x_lo, d.x_hi))
        return C.chebval2d(yr, xr, self.coeffs)

    def grid(self, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
        """Values on the tensor grid ys x xs, shape (len(ys), len(xs))."""
        d = self.domain
        return C.chebgrid2d(_to_ref(ys, d.y_lo, d.y_hi), _to_ref(xs, d.x_lo, d.x_hi), self.coeffs)

    def derivative(self, dy: int = 0, dx: int = 0) -> "ScalarField2":
        """Spectral partial derivative d^(dy+dx) / dy^dy dx^dx."""
        key = (dy, dx)
        if key == (0, 0):
            return self
        if key not in self._derivatives:
            c = self.coeffs
            d = self.domain
            if dy:
                c = C.chebder(c, dy, scl=2.0 / (d.y_hi - d.y_lo), axis=0)
            if dx:
                c = C.chebder(c, dx, scl=2.0 / (d.x_hi - d.x_lo), axis=1)
            self._derivatives[key] = ScalarField2(d, c)
        return self._derivatives[key]

    def jet(self, y, x) -> Dict[str, np.ndarray]:
        """Value, gradient and Hessian entries at the given points."""
        return {
            "f": self(y, x),
            "f_y": self.derivative(1, 0)(y, x),
            "f_x": self.derivative(0, 1)(y, x),
            "f_yy": self.derivative(2, 0)(y, x),
            "f_xy": self.derivative(1, 1)(y, x),
            "f_xx": self.derivative(0, 2)(y, x),
        }

    def transpose(self) -> "ScalarField2":
        """The field g(x, y) = f(y, x) on the transposed rectangle."""
        return ScalarField2(self.domain.transposed(), self.coeffs.T.copy())

    def restrict_x(self, x_value: float) -> Field1:
        """The univariate function y -> f(y, x_value)."""
        d = self.domain
        tx = C.chebvander(np.array([_to_ref(x_value, d.x_lo, d.x_hi)]), self.degrees[1])[0]
        return Field1(d.y_lo, d.y_hi, self.coeffs @ tx)

    def restrict_y(self, y_value: float) -> Field1:
        """The univariate function x -> f(y_value, x)."""
        d = self.domain
        ty = C.chebvander(np.array([_to_ref(y_value, d.y_lo, d.y_hi)]), self.degrees[0])[0]
        return Field1(d.x_lo, d.x_hi, ty @ self.coeffs)

    def sup_abs(self) -> float:
        return sup_norm(self)[0]

    def max_deviation_from_closed_form(self, n: int = 101) -> float:
        if self.closed_form is None:
            return 0.0
        d = self.domain
        ys = np.linspace(d.y_lo, d.y_hi, n)
        xs = np.linspace(d.x_lo, d.x_hi, n)
        Y, X = np.meshgrid(ys, xs, indexing="ij")
        return float(np.max(np.abs(self.grid(ys, xs) - self.closed_form(Y, X))))


def fit_field(
    samples: np.ndarray,
    degrees: Tuple[int, int],
    domain: Rect = Rect(-1.0, 1.0, -1.0, 1.0),
    closed_form: Optional[Callable] = None,
    check_degree: bool = True,
) -> ScalarField2:
    """
    Interpolate samples given on the tensor Lobatto grid.

    Args:
        samples: Array of shape (degree_y + 1, degree_x + 1); rows follow the
            ascending y nodes, columns the ascending x nodes
        degrees: (degree_y, degree_x), each >= 1
        domain: Rectangle the nodes are mapped to
        closed_form: Optional analytic callable kept for refresh/checks
        check_degree: Warn with DegreeTooLow when trailing coefficients exceed fit_tolerance

    Returns:
        ScalarField2 interpolating the samples exactly at the nodes
    """
    dy, dx = degrees
    if dy < 1 or dx < 1:
        raise ValueError(f"degrees must be >= 1 in each direction, got {degrees}")
    samples = np.asarray(samples, dtype=float)
    if samples.shape != (dy + 1, dx + 1):
        raise ValueError(f"samples shape {samples.shape} does not match degrees {degrees}")
    Vy = C.chebvander(lobatto_nodes(dy), dy)
    Vx = C.chebvander(lobatto_nodes(dx), dx)
    coeffs = np.linalg.solve(Vx, np.linalg.solve(Vy, samples).T).T
    field = ScalarField2(domain, coeffs, closed_form)
    if check_degree and field.tail > settings.fit_tolerance:
        message = f"degrees {degrees} leave trailing coefficients of relative size {field.tail:.3e}"
        logger.warning(message)
        warnings.warn(message, DegreeTooLow, stacklevel=2)
    return field


def node_grid(domain: Rect, degrees: Tuple[int, int]) -> Tuple[np.ndarray, np.ndarray]:
    """Collocation points (Y, X) of shape (degree_y + 1, degree_x + 1)."""
    ys = lobatto_nodes(degrees[0], domain.y_lo, domain.y_hi)
    xs = lobatto_nodes(degrees[1], domain.x_lo, domain.x_hi)
    return np.meshgrid(ys, xs, indexing="ij")


def fit_function(
    func: Callable[[np.ndarray, np.ndarray], np.ndarray],
    domain: Rect,
    degrees: Tuple[int, int],
    keep_closed_form: bool = True,
    check_degree: bool = True,
) -> ScalarField2:
    """Sample a vectorized function f(y, x) on the collocation grid and interpolate."""
    Y, X = node_grid(domain, degrees)
    values = np.broadcast_to(np.asarray(func(Y, X), dtype=float), Y.shape)
    return fit_field(values, degrees, domain, func if keep_closed_form else None, check_degree)


def sup_norm(
    field,
    domain: Optional[Rect] = None,
    grid: Optional[int] = None,
    refinements: Optional[int] = None,
    rel_change: Optional[float] = None,
    polish: bool = True,
) -> Tuple[float, Tuple[float, float]]:
    """
    Maximum of |g| over a rectangle.

    The grid is refined x2 until the maximum changes by less than rel_change
    (relative), then the best grid point is polished by bounded L-BFGS-B.

    Args:
        field: ScalarField2, or a vectorized callable g(y, x) (domain required)
        domain: Rectangle for callables
        grid, refinements, rel_change: Override the settings defaults
        polish: Run the local optimizer from the grid argmax

    Returns:
        (maximum, (y, x) of the maximum)
    """
    if domain is None:
        domain = field.domain
    n = grid or settings.sup_grid
    max_ref = settings.sup_refinements if refinements is None else refinements
    tol = settings.sup_rel_change if rel_change is None else rel_change

    def on_grid(m: int):
        ys = np.linspace(domain.y_lo, domain.y_hi, m)
        xs = np.linspace(domain.x_lo, domain.x_hi, m)
        if isinstance(field, ScalarField2):
            vals = np.abs(field.grid(ys, xs))
        else:
            Y, X = np.meshgrid(ys, xs, indexing="ij")
            vals = np.abs(np.broadcast_to(field(Y, X), Y.shape))
        i, j = np.unravel_index(int(np.argmax(vals)), vals.shape)
        return float(vals[i, j]), (float(ys[i]), float(xs[j]))

    best, where = on_grid(n)
    for _ in range(max_ref):
        n = 2 * n - 1
        value, point = on_grid(n)
        change = abs(value - best) / max(abs(value), 1e-300)
        best, where = (value, point) if value >= best else (best, where)
        if change < tol:
            break

    if polish and best > 0.0:
        def objective(z):
            return -float(np.abs(field(z[0], z[1])))

        try:
            result = minimize(
                objective,
                np.array(where),
                method="L-BFGS-B",
                bounds=[(domain.y_lo, domain.y_hi), (domain.x_lo, domain.x_hi)],
            )
            if -result.fun > best:
                best, where = float(-result.fun), (float(result.x[0]), float(result.x[1]))
        except (ValueError, FloatingPointError) as e:
            logger.debug(f"sup-norm polish skipped: {e}")
    return best, where


def inf_abs(field: ScalarField2, grid: int = 65) -> float:
    """Minimum of |f| on a sampling grid together with the collocation nodes."""
    d = field.domain
    ys = np.linspace(d.y_lo, d.y_hi, grid)
    xs = np.linspace(d.x_lo, d.x_hi, grid)
    Y, X = node_grid(d, (max(field.degrees[0], 1), max(field.degrees[1], 1)))
    return float(min(np.min(np.abs(field.grid(ys, xs))), np.min(np.abs(field(Y, X)))))
