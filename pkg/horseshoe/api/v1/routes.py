"""
API v1 Routes

Query endpoints over the parameter-space calculus and a rate-limited
transverse-dimension solve for the pure affine family.
"""

import logging
import math
import time
from typing import Dict, List, Optional

from fastapi import APIRouter, HTTPException
from opentelemetry import trace
from pydantic import BaseModel, Field
from starlette.requests import Request

from horseshoe.core.exceptions import ConventionViolated, HorseshoeError
from horseshoe.core.run_config import BudgetConfig, FamilyConfig, TruncationConfig
from horseshoe.observability.metrics import metrics
from horseshoe.observability.tracing import get_tracer, mark_error
from horseshoe.services.dimension import solve_dimension
from horseshoe.services.family import make_family
from horseshoe.services.params import IntervalTree, check_H4, exponents, h4_region
from horseshoe.services.rate_limit import expensive_limit, limiter
from horseshoe.services.rclass import init_class
from horseshoe.services.serialization import exponents_doc, interval_tree_doc, validate

logger = logging.getLogger(__name__)
tracer = get_tracer(__name__)

router = APIRouter()


# Request/Response Models (Pydantic)
class DimensionPair(BaseModel):
    """Stable and unstable dimensions of the two horseshoes."""
    d_s: float = Field(..., gt=0.0, lt=1.0, description="Stable dimension d_s0")
    d_u: float = Field(..., gt=0.0, lt=1.0, description="Unstable dimension d_u0")


class ExponentsRequest(DimensionPair):
    offsets: Optional[Dict[str, float]] = Field(default=None, description="Small corrections to rho0, rho1, sigma0, sigma1")


class H4Response(BaseModel):
    h4: bool
    beta_max: Optional[float]


class IntervalTreeRequest(BaseModel):
    eps0: float = Field(default=0.02, gt=0.0, lt=1.0)
    tau: float = Field(default=0.25, gt=0.0, lt=1.0)
    depth: int = Field(default=3, ge=0, le=8)


class AffineDimensionRequest(BaseModel):
    lambda_s: float = Field(default=1.0 / 3.0, gt=0.05, lt=0.5, description="Contraction of the pure affine family")
    m_trunc: int = Field(default=6, ge=1, le=10)


class AffineDimensionResponse(BaseModel):
    d_s: float
    closed_form: float
    eigenvalue: float
    states: int
    lambda_curve: List[List[float]]


def _timed(endpoint: str, method: str, start: float, status: int):
    metrics.record_request(method, endpoint, status, time.time() - start)


@router.post("/exponents")
async def post_exponents(request: ExponentsRequest):
    """
    Exponent calculus for a pair of dimensions.

    Returns:
        The exponent set (schema exponents.v1)

    Raises:
        HTTPException 422: d_s < d_u or dimensions outside (0, 1)
    """
    start = time.time()
    try:
        doc = validate(exponents_doc(exponents(request.d_s, request.d_u, request.offsets)), "exponents")
    except (ConventionViolated, ValueError) as e:
        _timed("/api/v1/exponents", "POST", start, 422)
        raise HTTPException(status_code=422, detail=str(e))
    _timed("/api/v1/exponents", "POST", start, 200)
    return doc


@router.post("/h4", response_model=H4Response)
async def post_h4(request: DimensionPair):
    """Condition (H4) and beta_max (null outside the bifurcation regime d_s + d_u > 1)."""
    start = time.time()
    d_s, d_u = max(request.d_s, request.d_u), min(request.d_s, request.d_u)
    beta = None
    if d_s + d_u > 1.0:
        beta = exponents(d_s, d_u).beta_max
    _timed("/api/v1/h4", "POST", start, 200)
    return H4Response(h4=check_H4(d_s, d_u), beta_max=beta)


@router.get("/h4-region")
async def get_h4_region(n: int = 20):
    if not 2 <= n <= 200:
        raise HTTPException(status_code=422, detail=f"n must lie in [2, 200], got {n}")
    return {"n": n, "rows": h4_region(n)}


@router.post("/interval-tree")
async def post_interval_tree(request: IntervalTreeRequest):
    """Per-level lengths, candidate counts and discarded remainders of the interval tree."""
    start = time.time()
    doc = validate(interval_tree_doc(IntervalTree(request.eps0, request.tau, request.depth)), "interval_tree")
    _timed("/api/v1/interval-tree", "POST", start, 200)
    return doc


@router.post("/dimension/affine", response_model=AffineDimensionResponse)
@limiter.limit(expensive_limit)
def post_affine_dimension(request: Request, body: AffineDimensionRequest):
    """
    Transverse dimension of the pure affine family over I0.

    Builds R(I0), the transfer matrix on prime chains up to m_trunc and
    solves lambda_d = 1. Rate limited: each call builds a class.

    Args:
        request: FastAPI Request object (needed for rate limiting)
        body: Contraction rate and truncation depth

    Returns:
        AffineDimensionResponse with the solved and the closed-form dimension
    """
    start = time.time()
    with tracer.start_as_current_span("affine_dimension") as span:
        span.set_attribute("lambda_s", body.lambda_s)
        span.set_attribute("m_trunc", body.m_trunc)
        try:
            fam = make_family(FamilyConfig(lambda_s=body.lambda_s))
            tree = IntervalTree(fam.eps0, fam.config.tau, 0)
            rc = init_class(fam, tree.root, BudgetConfig(n_max=body.m_trunc + 2))
            result = solve_dimension(rc, TruncationConfig(m_trunc=body.m_trunc))
        except HorseshoeError as e:
            mark_error(span, e)
            metrics.record_error(type(e).__name__)
            _timed("/api/v1/dimension/affine", "POST", start, 422)
            raise HTTPException(status_code=422, detail=f"{type(e).__name__}: {e}")
        span.set_status(trace.Status(trace.StatusCode.OK))
    _timed("/api/v1/dimension/affine", "POST", start, 200)
    return AffineDimensionResponse(
        d_s=result.d_s,
        closed_form=math.log(2.0) / math.log(1.0 / body.lambda_s),
        eigenvalue=result.eigenvalue,
        states=result.states,
        lambda_curve=[[d, lam] for d, lam in result.lambda_curve],
    )
