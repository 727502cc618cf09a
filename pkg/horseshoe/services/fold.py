"""
Fold and Parabolic Composition

The folding map G near the quadratic tangency is factorized through an
auxiliary coordinate w:

    x_u = X_u(w, y_u),   y_s = Y_s(w, x_s),   w**2 = theta(y_u, x_s, t)

with theta(0, 0, t) = t. Composing F0 (image in the unstable chart), G and
F1 (domain in the stable chart) yields the tangency functional
C(w, y0, x1), its minimum C_bar, the corner displacements and, when the
displacement is large enough, the two branches F+ and F- of the parabolic
composite.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field
from scipy.optimize import brentq, minimize_scalar

from horseshoe.core.config import settings
from horseshoe.core.exceptions import (
    FamilyNotMonotone,
    InvalidGeometry,
    NoIntersection,
    PC1Violated,
    PC2Violated,
)
from horseshoe.observability.metrics import metrics
from horseshoe.services.affine import (
    CalculusRecord,
    CalculusReport,
    Chart,
    ImplicitMap,
    compare_calculus,
    distortion,
    numeric_calculus,
    square_chart,
)
from horseshoe.services.fields import Field1, Rect, ScalarField2, fit_field, node_grid, sup_norm
from horseshoe.services.newton import newton_scalar

logger = logging.getLogger(__name__)

Jet = Dict[str, np.ndarray]


class FoldGeometry(BaseModel):
    """Anchors and slopes of the fold factorization."""
    x_c: float = 0.0
    y_c: float = 0.0
    kappa_u: float = Field(default=0.0, ge=-0.5, le=0.5)
    kappa_s: float = Field(default=0.0, ge=-0.5, le=0.5)
    chi: Literal["identity", "cubic"] = "identity"
    n0: int = Field(default=2, ge=2)


def _chi(x, kind: str):
    x = np.asarray(x, dtype=float)
    if kind == "cubic":
        return x + 0.1 * x ** 3, 1.0 + 0.3 * x ** 2, 0.6 * x
    return x, np.ones_like(x), np.zeros_like(x)


@dataclass(frozen=True)
class FoldMap:
    """
    The fold at a fixed parameter t, between the unstable chart (source,
    coordinates x_u, y_u) and the stable chart (target, coordinates x_s, y_s).
    """
    geometry: FoldGeometry
    t: float
    source: Chart
    target: Chart

    @property
    def n0(self) -> int:
        return self.geometry.n0

    def at(self, t: float) -> "FoldMap":
        return FoldMap(self.geometry, float(t), self.source, self.target)

    def theta(self, y_u, x_s):
        return self.t - np.asarray(y_u, dtype=float) - _chi(x_s, self.geometry.chi)[0]

    def theta_jet(self, y_u, x_s) -> Jet:
        """theta and its partials; '1' is y_u, '2' is x_s."""
        value, d1, d2 = _chi(x_s, self.geometry.chi)
        y_u = np.asarray(y_u, dtype=float)
        zero = np.zeros(np.broadcast(y_u, value).shape)
        return {
            "f": self.t - y_u - value,
            "1": zero - 1.0,
            "2": zero - d1,
            "11": zero,
            "12": zero,
            "22": zero - d2,
        }

    def X_u(self, w, y_u):
        return self.geometry.x_c + np.asarray(w) + self.geometry.kappa_u * np.asarray(y_u)

    def Y_s(self, w, x_s):
        return self.geometry.y_c + np.asarray(w) + self.geometry.kappa_s * np.asarray(x_s)

    def solve_x_s(self, y_u, w):
        """x_s with theta(y_u, x_s, t) = w**2."""
        rhs = self.t - np.asarray(y_u, dtype=float) - np.asarray(w, dtype=float) ** 2
        if self.geometry.chi == "identity":
            return rhs
        flat = np.atleast_1d(rhs).astype(float).ravel()

        def fun(x, idx):
            value, d1, _ = _chi(x, "cubic")
            return value - flat[idx], d1

        x, _ = newton_scalar(fun, flat.copy())
        return x.reshape(np.shape(rhs))

    def step(self, x_u, y_u) -> Tuple[np.ndarray, np.ndarray]:
        """G(x_u, y_u) = (x_s, y_s)."""
        w = np.asarray(x_u, dtype=float) - self.geometry.x_c - self.geometry.kappa_u * np.asarray(y_u)
        x_s = self.solve_x_s(y_u, w)
        return x_s, self.Y_s(w, x_s)

    @property
    def w_bound(self) -> float:
        return float(np.sqrt(max(self.t, 0.0)))

    def theta_field(self, degrees: Tuple[int, int] = (4, 4)) -> ScalarField2:
        rect = Rect(self.source.rect.y_lo, self.source.rect.y_hi, self.target.rect.x_lo, self.target.rect.x_hi)
        Y, X = node_grid(rect, degrees)
        return fit_field(self.theta(Y, X), degrees, rect, closed_form=self.theta, check_degree=False)

    def check_invariants(self) -> Dict[str, float]:
        """Normalization and nondegeneracy measurements of the fold."""
        h = 1e-6
        jet = self.theta_jet(np.array([0.0]), np.array([0.0]))
        dt = (self.at(self.t + h).theta(0.0, 0.0) - self.at(self.t - h).theta(0.0, 0.0)) / (2 * h)
        r = self.source.rect
        ys = np.linspace(r.y_lo, r.y_hi, 33)
        xs = np.linspace(self.target.rect.x_lo, self.target.rect.x_hi, 33)
        Y, X = np.meshgrid(ys, xs, indexing="ij")
        full = self.theta_jet(Y, X)
        return {
            "theta_origin_error": float(abs(self.theta(0.0, 0.0) - self.t)),
            "theta_t_error": float(abs(dt - 1.0)),
            "min_abs_theta_y": float(np.min(np.abs(full["1"]))),
            "min_abs_theta_x": float(np.min(np.abs(full["2"]))),
            "theta_origin_slope": float(abs(jet["1"][0])),
        }


def make_model_fold(
    geometry: FoldGeometry,
    t: float,
    source: Optional[Chart] = None,
    target: Optional[Chart] = None,
) -> FoldMap:
    """
    Build the model fold theta = t - y_u - chi(x_s), X_u = x_c + w + kappa_u y_u,
    Y_s = y_c + w + kappa_s x_s.

    Args:
        geometry: Anchors, slopes and normal-form choice
        t: Parameter value
        source: Unstable-side chart (default [-1, 1]^2 named "u")
        target: Stable-side chart (default [-1, 1]^2 named "s")

    Raises:
        InvalidGeometry: if the anchors or the tongue leave the charts
    """
    source = source or square_chart("u")
    target = target or square_chart("s")
    reach = float(np.sqrt(max(t, 0.0)))
    xr, yr = source.x_range, target.y_range
    if not (xr[0] <= geometry.x_c - reach and geometry.x_c + reach <= xr[1]):
        raise InvalidGeometry(f"tongue x_c +- sqrt(t) leaves the unstable chart {xr}", x_c=geometry.x_c, t=t)
    if not (yr[0] <= geometry.y_c - reach and geometry.y_c + reach <= yr[1]):
        raise InvalidGeometry(f"tongue y_c +- sqrt(t) leaves the stable chart {yr}", y_c=geometry.y_c, t=t)
    return FoldMap(geometry, float(t), source, target)


def _field_jet(f: ScalarField2, y, x) -> Jet:
    j = f.jet(y, x)
    return {"f": j["f"], "1": j["f_y"], "2": j["f_x"], "11": j["f_yy"], "12": j["f_xy"], "22": j["f_xx"]}


def _implicit_jet(z, phi_z, phi_1, phi_2, phi_zz, phi_z1, phi_z2, phi_11, phi_12, phi_22) -> Jet:
    """Jet of z(p1, p2) defined by Phi(z, p1, p2) = 0."""
    z1 = -phi_1 / phi_z
    z2 = -phi_2 / phi_z
    return {
        "f": z,
        "1": z1,
        "2": z2,
        "11": -(phi_11 + 2 * phi_z1 * z1 + phi_zz * z1 * z1) / phi_z,
        "12": -(phi_12 + phi_z1 * z2 + phi_z2 * z1 + phi_zz * z1 * z2) / phi_z,
        "22": -(phi_22 + 2 * phi_z2 * z2 + phi_zz * z2 * z2) / phi_z,
    }


def _compose_jet(f: Jet, u: Jet, v: Jet) -> Jet:
    """Jet of f(u(p), v(p)) from the jets of f (in its two arguments) and of u, v."""
    out = {"f": None}
    for i in ("1", "2"):
        out[i] = f["1"] * u[i] + f["2"] * v[i]
    for i, j in (("1", "1"), ("1", "2"), ("2", "2")):
        k = i + j
        out[k] = (
            f["11"] * u[i] * u[j]
            + f["12"] * (u[i] * v[j] + u[j] * v[i])
            + f["22"] * v[i] * v[j]
            + f["1"] * u[k]
            + f["2"] * v[k]
        )
    return out


def _coordinate_jet(value, which: str) -> Jet:
    value = np.asarray(value, dtype=float)
    zero = np.zeros_like(value)
    return {"f": value, "1": zero + (which == "1"), "2": zero + (which == "2"),
            "11": zero, "12": zero, "22": zero}


class TangencyFunctional:
    """
    C(w, y0, x1) = w**2 - theta(B0(y0, X), A1(Y, x1), t) with X, Y from the
    eliminations X = X_u(w, B0(y0, X)) and Y = Y_s(w, A1(Y, x1)).
    """

    def __init__(self, F0: ImplicitMap, G: FoldMap, F1: ImplicitMap):
        self.F0 = F0
        self.G = G
        self.F1 = F1
        self.rect = Rect(F0.rect.y_lo, F0.rect.y_hi, F1.rect.x_lo, F1.rect.x_hi)

    def _solve_X(self, w, y0):
        B0 = self.F0.B
        B0_x = B0.derivative(0, 1)
        k = self.G.geometry.kappa_u
        w = np.asarray(w, dtype=float).ravel()
        y0 = np.asarray(y0, dtype=float).ravel()
        if k == 0.0:
            return self.G.geometry.x_c + w

        def fun(X, idx):
            return X - self.G.X_u(w[idx], B0(y0[idx], X)), 1.0 - k * B0_x(y0[idx], X)

        return newton_scalar(fun, self.G.geometry.x_c + w)[0]

    def _solve_Y(self, w, x1):
        A1 = self.F1.A
        A1_y = A1.derivative(1, 0)
        k = self.G.geometry.kappa_s
        w = np.asarray(w, dtype=float).ravel()
        x1 = np.asarray(x1, dtype=float).ravel()
        if k == 0.0:
            return self.G.geometry.y_c + w

        def fun(Y, idx):
            return Y - self.G.Y_s(w[idx], A1(Y, x1[idx])), 1.0 - k * A1_y(Y, x1[idx])

        return newton_scalar(fun, self.G.geometry.y_c + w)[0]

    def inner(self, w, y0, x1) -> Dict[str, Jet]:
        """
        Jets of the eliminated quantities at (w, y0, x1), flattened.

        Returns:
            Dict with X (in w, y0), Y (in w, x1), y_u (in w, y0), x_s (in w, x1),
            and the operand jets b0 = B0(y0, X), a1 = A1(Y, x1)
        """
        w, y0, x1 = (a.ravel() for a in np.broadcast_arrays(
            np.asarray(w, dtype=float), np.asarray(y0, dtype=float), np.asarray(x1, dtype=float)))
        ku, ks = self.G.geometry.kappa_u, self.G.geometry.kappa_s
        X = self._solve_X(w, y0)
        Y = self._solve_Y(w, x1)
        b0 = _field_jet(self.F0.B, y0, X)
        a1 = _field_jet(self.F1.A, Y, x1)
        zero = np.zeros_like(w)

        # Phi(X; w, y0) = X - x_c - w - ku B0(y0, X)
        X_jet = _implicit_jet(
            X, 1.0 - ku * b0["2"], zero - 1.0, -ku * b0["1"],
            -ku * b0["22"], zero, -ku * b0["12"], zero, zero, -ku * b0["11"],
        )
        # Phi(Y; w, x1) = Y - y_c - w - ks A1(Y, x1)
        Y_jet = _implicit_jet(
            Y, 1.0 - ks * a1["1"], zero - 1.0, -ks * a1["2"],
            -ks * a1["11"], zero, -ks * a1["12"], zero, zero, -ks * a1["22"],
        )
        y_u = _compose_jet(b0, _coordinate_jet(y0, "2"), X_jet)
        y_u["f"] = b0["f"]
        x_s = _compose_jet(a1, Y_jet, _coordinate_jet(x1, "2"))
        x_s["f"] = a1["f"]
        return {"w": w, "y0": y0, "x1": x1, "X": X_jet, "Y": Y_jet, "y_u": y_u, "x_s": x_s}

    def jet(self, w, y0, x1) -> Dict[str, np.ndarray]:
        """C and its partials in (w, y0, x1), flattened."""
        q = self.inner(w, y0, x1)
        u, s = q["y_u"], q["x_s"]
        th = self.G.theta_jet(u["f"], s["f"])
        return {
            "C": q["w"] ** 2 - th["f"],
            "C_w": 2 * q["w"] - th["1"] * u["1"] - th["2"] * s["1"],
            "C_y": -th["1"] * u["2"],
            "C_x": -th["2"] * s["2"],
            "C_ww": 2.0 - (th["11"] * u["1"] ** 2 + 2 * th["12"] * u["1"] * s["1"] + th["22"] * s["1"] ** 2
                           + th["1"] * u["11"] + th["2"] * s["11"]),
            "C_wy": -(th["11"] * u["1"] * u["2"] + th["12"] * s["1"] * u["2"] + th["1"] * u["12"]),
            "C_wx": -(th["12"] * u["1"] * s["2"] + th["22"] * s["1"] * s["2"] + th["2"] * s["12"]),
            "C_yy": -(th["11"] * u["2"] ** 2 + th["1"] * u["22"]),
            "C_xx": -(th["22"] * s["2"] ** 2 + th["2"] * s["22"]),
            "C_xy": -th["12"] * u["2"] * s["2"],
            "_inner": q,
        }

    def __call__(self, w, y0, x1):
        shape = np.broadcast(np.asarray(w), np.asarray(y0), np.asarray(x1)).shape
        return self.jet(w, y0, x1)["C"].reshape(shape)

    def minimize(self, y0, x1) -> Tuple[np.ndarray, np.ndarray]:
        """(C_bar, w*) at the given points: Newton on C_w, bounded fallback off the certified regime."""
        y0, x1 = (a.ravel() for a in np.broadcast_arrays(np.asarray(y0, dtype=float), np.asarray(x1, dtype=float)))

        def fun(w, idx):
            j = self.jet(w, y0[idx], x1[idx])
            return j["C_w"], j["C_ww"]

        w, ok = newton_scalar(fun, np.zeros_like(y0), raise_on_failure=False)
        j = self.jet(w, y0, x1)
        bad = ~ok | (np.abs(j["C_ww"] - 2.0) > settings.c_ww_fallback)
        if bad.any():
            bound = max(1.0, 2.0 * self.G.w_bound + 1.0)
            logger.debug(f"C_bar fallback minimization at {int(bad.sum())} points")
            for i in np.flatnonzero(bad):
                res = minimize_scalar(lambda z: float(self.jet(z, y0[i], x1[i])["C"][0]),
                                      bounds=(-bound, bound), method="bounded")
                w[i] = res.x
            j = self.jet(w, y0, x1)
        return j["C"], w


def check_pc1(F0: ImplicitMap, F1: ImplicitMap, bound: float = None) -> Dict[str, float]:
    """
    Measure |A1_y|, |A1_yy|, |B0_x|, |B0_xx| against the adaptation bound.

    Raises:
        PC1Violated: if any of the four exceeds the bound
    """
    bound = settings.pc1_bound if bound is None else bound
    values = {
        "A1_y": sup_norm(F1.A.derivative(1, 0))[0],
        "A1_yy": sup_norm(F1.A.derivative(2, 0))[0],
        "B0_x": sup_norm(F0.B.derivative(0, 1))[0],
        "B0_xx": sup_norm(F0.B.derivative(0, 2))[0],
    }
    bad = {k: v for k, v in values.items() if v >= bound}
    if bad:
        raise PC1Violated(f"maps not adapted to the fold: {bad}", bound=bound, values=values)
    return values


def tangency_functional(
    F0: ImplicitMap,
    G: FoldMap,
    F1: ImplicitMap,
    degrees: Optional[Tuple[int, int]] = None,
) -> Tuple[TangencyFunctional, ScalarField2]:
    """
    Build C(w, y0, x1) and its minimum C_bar(y0, x1) as a fitted field.

    Args:
        F0: Map whose image lies in G's source chart
        G: Fold at parameter t
        F1: Map whose domain lies in G's target chart
        degrees: Degrees of the C_bar field

    Raises:
        PC1Violated: if F0, F1 are not adapted to the tongue geometry
    """
    if F0.target.name != G.source.name or F1.source.name != G.target.name:
        raise InvalidGeometry(f"fold charts {G.source.name}->{G.target.name} do not match "
                              f"{F0.target.name}->{F1.source.name}")
    check_pc1(F0, F1)
    functional = TangencyFunctional(F0, G, F1)
    degrees = degrees or (settings.parabolic_field_degree, settings.parabolic_field_degree)
    Y0, X1 = node_grid(functional.rect, degrees)
    c_bar, _ = functional.minimize(Y0, X1)
    return functional, fit_field(c_bar.reshape(Y0.shape), degrees, functional.rect, check_degree=False)


@dataclass(frozen=True)
class DisplacementQuad:
    """Corner displacements delta <= delta_L, delta_R <= delta_LR."""
    delta: float
    delta_L: float
    delta_R: float
    delta_LR: float

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return self.delta, self.delta_L, self.delta_R, self.delta_LR

    def is_ordered(self, tol: float = 1e-12) -> bool:
        return (self.delta <= min(self.delta_L, self.delta_R) + tol
                and max(self.delta_L, self.delta_R) <= self.delta_LR + tol)


def corner_table(functional: TangencyFunctional) -> np.ndarray:
    """-C_bar at the corners, M[i, j] with i over (y0_lo, y0_hi), j over (x1_lo, x1_hi)."""
    r = functional.rect
    Y = np.array([[r.y_lo, r.y_lo], [r.y_hi, r.y_hi]])
    X = np.array([[r.x_lo, r.x_hi], [r.x_lo, r.x_hi]])
    c_bar, _ = functional.minimize(Y, X)
    return -c_bar.reshape(2, 2)


def quad_from_corners(M: np.ndarray) -> DisplacementQuad:
    return DisplacementQuad(
        delta=float(M.min()),
        delta_L=float(M.min(axis=1).max()),
        delta_R=float(M.max(axis=1).min()),
        delta_LR=float(M.max()),
    )


def displacement(
    F0: ImplicitMap,
    G: FoldMap,
    F1: ImplicitMap,
    t: Union[None, float, Sequence[float]] = None,
) -> Union[DisplacementQuad, List[DisplacementQuad]]:
    """
    Corner displacements of the pair (F0, F1) through the fold.

    Args:
        t: None for G's own parameter, a value, or a grid of values

    Returns:
        A DisplacementQuad, or one per grid value
    """
    if t is None or np.ndim(t) == 0:
        fold = G if t is None else G.at(float(t))
        return quad_from_corners(corner_table(TangencyFunctional(F0, fold, F1)))
    return [quad_from_corners(corner_table(TangencyFunctional(F0, G.at(float(s)), F1))) for s in t]


@dataclass
class ParabolicPair:
    """The two branches of a parabolic composite with their tangency data."""
    plus: ImplicitMap
    minus: ImplicitMap
    functional: TangencyFunctional
    c_bar: ScalarField2
    W_plus: ScalarField2
    W_minus: ScalarField2
    displacement: DisplacementQuad
    corners: np.ndarray
    calculus: Dict[str, CalculusRecord] = field(default_factory=dict)

    def branch(self, sign: str) -> ImplicitMap:
        return self.plus if sign == "+" else self.minus


def branch_calculus(functional: TangencyFunctional, w: np.ndarray, y0: np.ndarray, x1: np.ndarray) -> Dict[str, np.ndarray]:
    """First and second-order data of a branch A = A0(y0, X(W, y0)), B = B1(Y(W, x1), x1)."""
    j = functional.jet(w, y0, x1)
    q = j.pop("_inner")
    W = _implicit_jet(w, j["C_w"], j["C_y"], j["C_x"], j["C_ww"], j["C_wy"], j["C_wx"],
                      j["C_yy"], j["C_xy"], j["C_xx"])
    Xj, Yj = q["X"], q["Y"]
    y_coord = _coordinate_jet(q["y0"], "1")
    x_coord = _coordinate_jet(q["x1"], "2")
    xi = _compose_jet(Xj, W, y_coord)
    eta = _compose_jet(Yj, W, x_coord)
    a0 = _field_jet(functional.F0.A, q["y0"], Xj["f"])
    b1 = _field_jet(functional.F1.B, Yj["f"], q["x1"])
    A = _compose_jet(a0, y_coord, xi)
    B = _compose_jet(b1, eta, x_coord)
    return {
        "A_x": A["2"],
        "B_y": B["1"],
        "A_y": A["1"],
        "B_x": B["2"],
        "dx_log_A_x": A["22"] / A["2"],
        "dy_log_A_x": A["12"] / A["2"],
        "dy_log_B_y": B["11"] / B["1"],
        "dx_log_B_y": B["12"] / B["1"],
        "A_yy": A["11"],
        "B_xx": B["22"],
    }


def _solve_roots(functional: TangencyFunctional, y0, x1, seeds) -> np.ndarray:
    def fun(w, idx):
        j = functional.jet(w, y0[idx], x1[idx])
        return j["C"], j["C_w"]

    return newton_scalar(fun, seeds)[0]


def parabolic_compose(
    F0: ImplicitMap,
    G: FoldMap,
    F1: ImplicitMap,
    degrees: Optional[Tuple[int, int]] = None,
    enforce_pc2: Optional[bool] = None,
    with_calculus: bool = True,
) -> ParabolicPair:
    """
    Parabolic composition of F0, the fold G and F1.

    Args:
        F0, G, F1: Operands; F0's image and F1's domain meet the fold charts
        degrees: Degrees of the branch fields (default parabolic_field_degree)
        enforce_pc2: Require delta > pc2_factor * (|P1| + |Q0|) (default settings.enforce_pc2)
        with_calculus: Store analytic derivative values at interior check points

    Returns:
        ParabolicPair with W+ > W- and branch maps F+, F-

    Raises:
        PC1Violated: maps not adapted to the fold
        NoIntersection: C_bar > 0 on the whole rectangle
        PC2Violated: displacement not positive or below the margin
    """
    start = time.perf_counter()
    enforce_pc2 = settings.enforce_pc2 if enforce_pc2 is None else enforce_pc2
    degrees = degrees or (settings.parabolic_field_degree, settings.parabolic_field_degree)
    try:
        functional, c_bar = tangency_functional(F0, G, F1, degrees)
        corners = corner_table(functional)
        quad = quad_from_corners(corners)
        if quad.delta_LR <= 0.0:
            raise NoIntersection(f"curves miss: delta_LR = {quad.delta_LR:.6g}", quad=quad.as_tuple())
        if quad.delta <= 0.0:
            raise PC2Violated(f"tangency inside the rectangle: delta = {quad.delta:.6g}", quad=quad.as_tuple())
        if enforce_pc2:
            margin = settings.pc2_factor * (F1.widths()[0] + F0.widths()[1])
            if quad.delta <= margin:
                raise PC2Violated(f"delta = {quad.delta:.6g} <= {margin:.6g}", delta=quad.delta, bound=margin)

        rect = functional.rect
        Y0, X1 = node_grid(rect, degrees)
        y0, x1 = Y0.ravel(), X1.ravel()
        value, w_star = functional.minimize(y0, x1)
        spread = np.sqrt(np.maximum(-value, 0.0))
        w_plus = _solve_roots(functional, y0, x1, w_star + spread)
        w_minus = _solve_roots(functional, y0, x1, w_star - spread)
        if not np.all(w_plus > w_minus):
            raise NoIntersection("branches W+ and W- merge inside the rectangle")

        branches = {}
        for sign, w in (("+", w_plus), ("-", w_minus)):
            q = functional.inner(w, y0, x1)
            A = fit_field(F0.A(y0, q["X"]["f"]).reshape(Y0.shape), degrees, rect, check_degree=False)
            B = fit_field(F1.B(q["Y"]["f"], x1).reshape(Y0.shape), degrees, rect, check_degree=False)
            calculus = None
            if with_calculus:
                ys, xs = rect.interior_points()
                _, w_mid = functional.minimize(ys, xs)
                c_mid = functional.jet(w_mid, ys, xs)["C"]
                seed = w_mid + (1.0 if sign == "+" else -1.0) * np.sqrt(np.maximum(-c_mid, 0.0))
                w_check = _solve_roots(functional, ys, xs, seed)
                calculus = CalculusRecord(ys, xs, branch_calculus(functional, w_check, ys, xs))
            branches[sign] = (ImplicitMap(A, B, F0.source, F1.target, calculus=calculus), calculus)

        pair = ParabolicPair(
            plus=branches["+"][0],
            minus=branches["-"][0],
            functional=functional,
            c_bar=c_bar,
            W_plus=fit_field(w_plus.reshape(Y0.shape), degrees, rect, check_degree=False),
            W_minus=fit_field(w_minus.reshape(Y0.shape), degrees, rect, check_degree=False),
            displacement=quad,
            corners=corners,
            calculus={s: rec for s, (_, rec) in branches.items() if rec is not None},
        )
    except Exception as e:
        metrics.record_composition("parabolic", type(e).__name__, time.perf_counter() - start)
        raise
    metrics.record_composition("parabolic", "ok", time.perf_counter() - start)
    return pair


def verify_parabolic_calculus(pair: ParabolicPair, threshold: float = None) -> Dict[str, CalculusReport]:
    """Compare each branch's analytic derivative values with its refit fields."""
    reports = {}
    for sign in ("+", "-"):
        F = pair.branch(sign)
        record = pair.calculus.get(sign)
        if record is None:
            continue
        reports[sign] = compare_calculus(record.values, numeric_calculus(F, record.ys, record.xs), threshold)
        if reports[sign].flagged:
            logger.warning(f"parabolic calculus ({sign}) discrepancies: {reports[sign].flagged}")
    return reports


@dataclass
class ParabolicEstimates:
    width_constant: float
    distortion_constant: float
    a_y_deviation_constant: float
    b_x_deviation_constant: float
    ceiling: float
    ratios: Dict[str, float]
    flagged: List[str]

    @property
    def passed(self) -> bool:
        return not self.flagged


def check_parabolic_estimates(pair: ParabolicPair, F0: ImplicitMap, F1: ImplicitMap,
                              ceiling: float = None) -> ParabolicEstimates:
    """
    Measured constants of the parabolic width laws, distortion bound and
    first-order deviations, flagged against the configured ceiling.
    """
    ceiling = settings.parabolic_ceiling if ceiling is None else ceiling
    delta = pair.displacement.delta
    P0, Q0 = F0.widths()
    P1, Q1 = F1.widths()
    scale = delta ** -0.5
    ratios = {}
    dist_constant = 0.0
    a_dev = b_dev = 0.0
    functional = pair.functional
    D0, D1 = distortion(F0), distortion(F1)
    ys, xs = functional.rect.interior_points((0.0, 0.25, 0.5, 0.75, 1.0))
    for sign in ("+", "-"):
        F = pair.branch(sign)
        P, Q = F.widths()
        ratios[f"P{sign}"] = P / (P0 * P1 * scale)
        ratios[f"Q{sign}"] = Q / (Q0 * Q1 * scale)
        D = distortion(F)
        if D > max(D0, D1):
            dist_constant = max(dist_constant, min((D - D0) * delta / Q0, (D - D1) * delta / P1))

        W = pair.W_plus if sign == "+" else pair.W_minus
        q = functional.inner(W(ys, xs), ys, xs)
        a0_y = F0.A.derivative(1, 0)(ys, q["X"]["f"])
        b1_x = F1.B.derivative(0, 1)(q["Y"]["f"], xs)
        a_dev = max(a_dev, float(np.max(np.abs(F.A.derivative(1, 0)(ys, xs) - a0_y))) / (P0 * Q0 * scale))
        b_dev = max(b_dev, float(np.max(np.abs(F.B.derivative(0, 1)(ys, xs) - b1_x))) / (P1 * Q1 * scale))

    width_constant = max(max(r, 1.0 / r) for r in ratios.values())
    values = {"width": width_constant, "distortion": dist_constant, "a_y": a_dev, "b_x": b_dev}
    flagged = [k for k, v in values.items() if v > ceiling]
    if flagged:
        logger.warning(f"parabolic estimates above ceiling {ceiling}: {flagged}")
    return ParabolicEstimates(width_constant, dist_constant, a_dev, b_dev, ceiling, ratios, flagged)


def tangency_deviation(functional: TangencyFunctional, n: int = 7, h: float = 1e-4) -> Tuple[float, float]:
    """
    max |C_w - 2w| and max |C_ww - 2| from centered differences of C over
    a grid of (w, y0, x1) inside the tongue.
    """
    r = functional.rect
    bound = max(functional.G.w_bound, 0.1)
    w = np.linspace(-bound, bound, n)
    ys = np.linspace(r.y_lo, r.y_hi, n)
    xs = np.linspace(r.x_lo, r.x_hi, n)
    W, Y, X = (a.ravel() for a in np.meshgrid(w, ys, xs, indexing="ij"))
    c0 = functional(W, Y, X)
    cp = functional(W + h, Y, X)
    cm = functional(W - h, Y, X)
    c_w = (cp - cm) / (2 * h)
    c_ww = (cp - 2 * c0 + cm) / h ** 2
    return float(np.max(np.abs(c_w - 2 * W))), float(np.max(np.abs(c_ww - 2.0)))


def fold_line_intersections(G: FoldMap, y0: float, x0: float, samples: int = 2001) -> int:
    """
    Number of transversal intersections of the fold image of the horizontal
    line {y_u = y0} with the vertical line {x_s = x0}.
    """
    lo, hi = G.source.x_range

    def gap(x_u):
        return G.step(x_u, y0)[0] - x0

    grid = np.linspace(lo, hi, samples)
    values = gap(grid)
    count = 0
    for a, b, fa, fb in zip(grid[:-1], grid[1:], values[:-1], values[1:]):
        if fa == 0.0 or fa * fb < 0.0:
            root = a if fa == 0.0 else brentq(lambda z: float(gap(z)), a, b, xtol=1e-14)
            slope = (gap(root + 1e-7) - gap(root - 1e-7)) / 2e-7
            if abs(float(slope)) > 1e-9:
                count += 1
    return count


@dataclass(frozen=True)
class CurveFamily:
    """Curves x = phi(y, s) in a chart, with the partials needed for pull-backs."""
    phi: Callable
    phi_s: Callable
    phi_y: Callable
    s_range: Tuple[float, float]


def exponential_family(chart: Chart, T: float) -> CurveFamily:
    """phi(y, s) = x_c + s exp(T (y - y_c)); |d/dy log d phi/ds| = |T| everywhere."""
    x_c = 0.5 * sum(chart.x_range)
    y_c = 0.5 * sum(chart.y_range)
    half_y = 0.5 * (chart.rect.y_hi - chart.rect.y_lo)
    h = 0.25 * (chart.rect.x_hi - chart.rect.x_lo) * np.exp(-abs(T) * half_y)
    return CurveFamily(
        phi=lambda y, s: x_c + s * np.exp(T * (y - y_c)),
        phi_s=lambda y, s: np.exp(T * (y - y_c)) + 0.0 * s,
        phi_y=lambda y, s: T * s * np.exp(T * (y - y_c)),
        s_range=(-h, h),
    )


def _pullback_log_slope(F: ImplicitMap, family: CurveFamily, n_s: int = 9, degree: int = 32) -> float:
    """max |d/dy0 log |dPhi/ds|| of the family pulled back through F."""
    s_values = np.linspace(*family.s_range, n_s)
    y_lo, y_hi = F.source.y_range
    x_lo, x_hi = F.target.x_range
    B, B_x, A_x = F.B, F.B.derivative(0, 1), F.A.derivative(0, 1)
    worst = 0.0
    for s in s_values:
        def log_slope(y0):
            y0 = np.asarray(y0, dtype=float)

            def fun(x1, idx):
                y1 = B(y0[idx], x1)
                return x1 - family.phi(y1, s), 1.0 - family.phi_y(y1, s) * B_x(y0[idx], x1)

            x1, _ = newton_scalar(fun, np.full(y0.shape, family.phi(0.5 * sum(F.target.y_range), s)))
            y1 = B(y0, x1)
            xi_s = family.phi_s(y1, s) / (1.0 - family.phi_y(y1, s) * B_x(y0, x1))
            return np.log(np.abs(A_x(y0, x1) * xi_s))

        profile = Field1.fit(log_slope, y_lo, y_hi, degree)
        _, d = profile.derivative().sample()
        worst = max(worst, float(np.max(np.abs(d))))
    return worst


def lipschitz_recursion_check(F: Union[ImplicitMap, ParabolicPair], family: CurveFamily) -> float:
    """
    T' = max |d/dy log d Phi/ds| over the family pulled back through F (both
    branches of a parabolic pair).

    Raises:
        FamilyNotMonotone: if d phi/ds changes sign on the family
    """
    maps = [F.plus, F.minus] if isinstance(F, ParabolicPair) else [F]
    chart = maps[0].target
    ys = np.linspace(*chart.y_range, 33)
    ss = np.linspace(*family.s_range, 9)
    Y, S = np.meshgrid(ys, ss, indexing="ij")
    slope = family.phi_s(Y, S)
    if not (np.all(slope > 0) or np.all(slope < 0)):
        raise FamilyNotMonotone("d phi / ds changes sign on the curve family")
    return max(_pullback_log_slope(G, family) for G in maps)


def lipschitz_recursion_fit(F: Union[ImplicitMap, ParabolicPair],
                            T_values: Sequence[float] = (0.0, 0.5, 1.0, 2.0)) -> Tuple[float, float]:
    """Least-squares (a, C) of T' = a T + C over exponential families."""
    maps = [F.plus, F.minus] if isinstance(F, ParabolicPair) else [F]
    chart = maps[0].target
    measured = [lipschitz_recursion_check(F, exponential_family(chart, T)) for T in T_values]
    a, c = np.polyfit(np.asarray(T_values, dtype=float), np.asarray(measured), 1)
    return float(a), float(c)
