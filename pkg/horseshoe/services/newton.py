"""
Vectorized Newton Solvers

Scalar and 2x2 Newton iterations run simultaneously over arrays of
collocation nodes. Converged entries are frozen so that each node does
exactly the work it needs; nodes that fail are reported by index.
"""

import logging
from typing import Callable, Tuple

import numpy as np

from horseshoe.core.config import settings
from horseshoe.core.exceptions import NonConvergence
from horseshoe.observability.metrics import metrics

logger = logging.getLogger(__name__)


def newton_scalar(
    fun: Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]],
    x0: np.ndarray,
    tol: float = None,
    max_iter: int = None,
    error: type = NonConvergence,
    raise_on_failure: bool = True,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Solve f(x) = 0 independently at every entry.

    Args:
        fun: fun(x_active, idx) -> (f, f') on the active entries (flat indices idx)
        x0: Initial guesses
        tol: Step tolerance (defaults to settings.solve_tolerance)
        max_iter: Iteration cap (defaults to settings.max_newton_iters)
        error: Exception type raised on failure
        raise_on_failure: Return the convergence mask instead of raising

    Returns:
        (solution, converged mask)
    """
    tol = settings.solve_tolerance if tol is None else tol
    max_iter = settings.max_newton_iters if max_iter is None else max_iter
    shape = np.shape(x0)
    x = np.array(x0, dtype=float, copy=True).ravel()
    active = np.ones(x.shape, dtype=bool)
    for _ in range(max_iter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        f, fp = fun(x[idx], idx)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = f / fp
        bad = ~np.isfinite(step)
        step[bad] = 0.0
        x[idx] -= step
        done = (np.abs(step) <= tol * np.maximum(1.0, np.abs(x[idx]))) & ~bad
        active[idx[done]] = False
        if bad.all():
            break
    converged = ~active & np.isfinite(x)
    metrics.record_newton("scalar", int(x.size), int((~converged).sum()))
    if raise_on_failure and not converged.all():
        failed = np.flatnonzero(~converged)
        logger.debug(f"scalar Newton failed at {len(failed)} nodes")
        raise error(f"Newton did not converge at {len(failed)} of {x.size} nodes", nodes=failed.tolist())
    return x.reshape(shape), converged.reshape(shape)


def newton_2x2(
    fun: Callable,
    u0: np.ndarray,
    v0: np.ndarray,
    tol: float = None,
    max_iter: int = None,
    error: type = NonConvergence,
    raise_on_failure: bool = True,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Solve the 2x2 system F(u, v) = 0 independently at every entry.

    Args:
        fun: fun(u_active, v_active, idx) -> (f1, f2, j11, j12, j21, j22) on the active entries
        u0, v0: Initial guesses (same shape)

    Returns:
        (u, v, converged mask)
    """
    tol = settings.solve_tolerance if tol is None else tol
    max_iter = settings.max_newton_iters if max_iter is None else max_iter
    u = np.array(u0, dtype=float, copy=True).ravel()
    v = np.array(v0, dtype=float, copy=True).ravel()
    active = np.ones(u.shape, dtype=bool)
    for _ in range(max_iter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        f1, f2, j11, j12, j21, j22 = fun(u[idx], v[idx], idx)
        det = j11 * j22 - j12 * j21
        with np.errstate(divide="ignore", invalid="ignore"):
            du = (f1 * j22 - f2 * j12) / det
            dv = (j11 * f2 - j21 * f1) / det
        bad = ~(np.isfinite(du) & np.isfinite(dv))
        du[bad] = 0.0
        dv[bad] = 0.0
        u[idx] -= du
        v[idx] -= dv
        size = np.maximum(1.0, np.maximum(np.abs(u[idx]), np.abs(v[idx])))
        done = (np.maximum(np.abs(du), np.abs(dv)) <= tol * size) & ~bad
        active[idx[done]] = False
        if bad.all():
            break
    converged = ~active & np.isfinite(u) & np.isfinite(v)
    metrics.record_newton("2x2", int(u.size), int((~converged).sum()))
    shape = np.shape(u0)
    if raise_on_failure and not converged.all():
        failed = np.flatnonzero(~converged)
        logger.debug(f"2x2 Newton failed at {len(failed)} nodes")
        raise error(f"Newton did not converge at {len(failed)} of {u.size} nodes", nodes=failed.tolist())
    return u.reshape(shape), v.reshape(shape), converged.reshape(shape)
