"""
Command-Line Interface

Batch driver for desk-scale runs. Every subcommand reads one RunConfig
(file plus flag overrides) and writes JSON/CSV artifacts; the only
randomness is the verification suites' seed.

Exit codes: 0 ok, 1 verification failure, 2 configuration error,
3 budget exhausted.
"""

import functools
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional

import click
import numpy as np
import uvicorn

from horseshoe.core.config import settings
from horseshoe.core.exceptions import BudgetExhausted, ConfigError, HorseshoeError
from horseshoe.core.run_config import RunConfig, load_config
from horseshoe.observability.metrics import metrics, write_metrics
from horseshoe.observability.tracing import setup_tracing, flush_tracing
from horseshoe.services.dimension import gibbs_measure, solve_dimension
from horseshoe.services.family import ModelFamily, make_family, special_rectangles
from horseshoe.services.fold import tangency_functional
from horseshoe.services.params import budget_sweep, exponents, h4_region, resolve_intervals
from horseshoe.services.rclass import (
    RClass,
    build_class,
    extend_class,
    regularity_test,
    stretched_exponential_constant,
)
from horseshoe.services.serialization import (
    dump_class,
    dumps,
    exponents_doc,
    load_class,
    validate,
    write_csv,
    write_json,
)
from horseshoe.services.verification import CHECKS, run_suite

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VERIFICATION = 1
EXIT_CONFIG = 2
EXIT_BUDGET = 3


@dataclass
class CliState:
    config: RunConfig
    metrics_file: Optional[Path] = None


def _fail(message: str, code: int):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def exit_codes(f):
    """Map library errors to the documented exit codes."""
    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except BudgetExhausted as e:
            metrics.record_error(type(e).__name__)
            _fail(str(e), EXIT_BUDGET)
        except (ConfigError, ValueError) as e:
            metrics.record_error(type(e).__name__)
            _fail(str(e), EXIT_CONFIG)
        except HorseshoeError as e:
            metrics.record_error(type(e).__name__)
            _fail(f"{type(e).__name__}: {e}", EXIT_VERIFICATION)
    return wrapper


def _emit(doc: Dict[str, Any], schema: str, out: Optional[Path]):
    if out is None:
        click.echo(dumps(validate(doc, schema)))
    else:
        write_json(out, doc, schema)


def _parse_path(text: Optional[str]):
    if text is None:
        return None
    text = text.strip()
    try:
        return [int(p) for p in text.split(",")] if text else []
    except ValueError as e:
        raise ConfigError(f"interval path must be comma-separated child indices, got {text!r}") from e


def _build(config: RunConfig, fam: ModelFamily) -> RClass:
    fam_cfg = config.family
    intervals = resolve_intervals(fam_cfg.eps0, fam_cfg.tau, config.interval_path, config.t)
    return build_class(fam, intervals, config.budgets)


def build_summary(rc: RClass, beta: Optional[float]) -> Dict[str, Any]:
    regularity = None
    if beta is not None:
        report = regularity_test(rc, beta)
        regularity = {"regular": report.regular, "beta": beta, "bound": report.bound,
                      "bicritical": report.bicritical, "undetermined": report.undetermined,
                      "witness": report.witness}
    relations: Dict[str, int] = {}
    for _, relation in rc.cache.items():
        relations[relation.value] = relations.get(relation.value, 0) + 1
    return {
        "interval": rc.interval.to_dict(),
        "size": len(rc),
        "counts": rc.counts(),
        "exhausted": rc.exhausted,
        "special": {"P_s": rc.P_s.key, "Q_u": rc.Q_u.key,
                    "ratio_s": rc.special.ratio_s, "ratio_u": rc.special.ratio_u},
        "regularity": regularity,
        "stretched_exponential_constant": stretched_exponential_constant(rc),
        "relations": relations,
    }


def _write_class(rc: RClass, out: Path, beta: Optional[float]):
    out.mkdir(parents=True, exist_ok=True)
    dump_class(rc, out / "class.jsonl")
    write_json(out / "build.json", build_summary(rc, beta), "build")


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False, path_type=Path),
              help="RunConfig document (TOML, JSON or YAML)")
@click.option("--seed", type=int, help="Seed of the randomized verification suites")
@click.option("--t", "t", type=float, help="Explicit parameter value instead of an interval")
@click.option("--path", "interval_path", help="Child indices from I0, e.g. 0,3")
@click.option("--lambda-s", type=float)
@click.option("--nonlinearity", type=float)
@click.option("--eps0", type=float)
@click.option("--n-max", type=int)
@click.option("--width-floor", type=float)
@click.option("--max-elements", type=int)
@click.option("--m-trunc", type=int)
@click.option("--w-min", type=float)
@click.option("--metrics-file", type=click.Path(dir_okay=False, path_type=Path),
              help="Write Prometheus metrics here when the command finishes")
@click.option("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
@click.pass_context
def cli(ctx, config_path, seed, t, interval_path, lambda_s, nonlinearity, eps0, n_max, width_floor,
        max_elements, m_trunc, w_min, metrics_file, log_level):
    """Horseshoe heteroclinic bifurcation toolkit."""
    logging.basicConfig(
        level=getattr(logging, (log_level or settings.log_level).upper()),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )
    try:
        config = load_config(config_path).with_overrides({
            "seed": seed,
            "t": t,
            "interval_path": _parse_path(interval_path),
            "family.lambda_s": lambda_s,
            "family.nonlinearity": nonlinearity,
            "family.eps0": eps0,
            "budgets.n_max": n_max,
            "budgets.width_floor": width_floor,
            "budgets.max_elements": max_elements,
            "truncation.m_trunc": m_trunc,
            "truncation.w_min": w_min,
        })
    except ConfigError as e:
        _fail(str(e), EXIT_CONFIG)
    setup_tracing()
    ctx.call_on_close(flush_tracing)
    ctx.obj = CliState(config, metrics_file)
    if metrics_file is not None:
        ctx.call_on_close(lambda: write_metrics(metrics_file))


@cli.command()
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=Path("out"), show_default=True)
@click.option("--beta", type=float, default=None, help="Regularity exponent (default: the family's beta)")
@click.pass_obj
@exit_codes
def build(state: CliState, out: Path, beta: Optional[float]):
    """Build R(I) along the interval path and dump it with geometry CSVs."""
    config = state.config
    fam = make_family(config.family)
    beta = config.family.beta if beta is None else beta
    try:
        rc = _build(config, fam)
    except BudgetExhausted as e:
        if e.partial is not None:
            _write_class(e.partial, out, None)
        raise
    _write_class(rc, out, beta)
    _write_geometry(fam, rc.t, out / "geometry.csv")
    click.echo(f"{len(rc)} elements ({rc.counts()}) written to {out}")


@cli.command()
@click.option("--load", "load_path", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--child", type=int, required=True, help="Child index of the loaded class's interval")
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=Path("out"), show_default=True)
@click.pass_obj
@exit_codes
def extend(state: CliState, load_path: Path, child: int, out: Path):
    """Extend a dumped class onto one child interval."""
    rc = load_class(load_path)
    try:
        interval = rc.interval.child(child)
    except IndexError as e:
        raise ConfigError(str(e), child=child) from e
    try:
        rc = extend_class(rc, interval, state.config.budgets)
    except BudgetExhausted as e:
        if e.partial is not None:
            _write_class(e.partial, out, None)
        raise
    _write_class(rc, out, state.config.family.beta)
    click.echo(f"{len(rc)} elements over level {interval.level} written to {out}")


@cli.command()
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.option("--check", "checks", multiple=True, type=click.Choice(list(CHECKS)),
              help="Run only these checks (repeatable)")
@click.option("--corrupt", default=None, hidden=True, help="Perturb one composition-calculus formula")
@click.pass_obj
@exit_codes
def verify(state: CliState, out: Optional[Path], checks, corrupt: Optional[str]):
    """Run the verification suite; exits 1 when any check fails."""
    report = run_suite(state.config, only=list(checks) or None, corrupt=corrupt)
    _emit(report.to_dict(), "verify", out)
    if not report.passed:
        _fail(f"failed checks: {', '.join(report.failures)}", EXIT_VERIFICATION)


@cli.command()
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.pass_obj
@exit_codes
def dimension(state: CliState, out: Optional[Path]):
    """Solve lambda_d = 1 for the transverse dimension of R(I)."""
    config = state.config
    rc = _build(config, make_family(config.family))
    result = solve_dimension(rc, config.truncation)
    doc = result.to_dict()
    doc["gibbs_constant"] = gibbs_measure(rc, result.d_s, config.truncation).gibbs_constant
    _emit(doc, "dimension", out)


@cli.command()
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=Path("gibbs.csv"), show_default=True)
@click.pass_obj
@exit_codes
def gibbs(state: CliState, out: Path):
    """Per-cylinder Gibbs weights (word, depth, width, mu) as CSV."""
    config = state.config
    rc = _build(config, make_family(config.family))
    result = solve_dimension(rc, config.truncation)
    table = gibbs_measure(rc, result.d_s, config.truncation)
    write_csv(out, ["word", "depth", "width", "mu"], table.rows)
    click.echo(f"d_s = {result.d_s!r}, Gibbs constant {table.gibbs_constant:.4g}")


@cli.command("exponents")
@click.option("--ds", "d_s", type=float, default=None, help="d_s0 (default: the family's closed form)")
@click.option("--du", "d_u", type=float, default=None, help="d_u0 (default: the family's closed form)")
@click.option("--sweep", nargs=2, type=int, default=None, help="Budget sweep over x = 2^-N for N in [lo, hi]")
@click.option("--len-alpha", type=float, default=None)
@click.option("--len-omega", type=float, default=None)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.pass_obj
@exit_codes
def exponents_cmd(state: CliState, d_s, d_u, sweep, len_alpha, len_omega, out):
    """Exponent calculus, optionally with the bicritical budget sweep."""
    fam_cfg = state.config.family
    if d_s is None or d_u is None:
        fam = make_family(fam_cfg)
        d_s0, d_u0 = fam.dimensions
        d_s = d_s0 if d_s is None else d_s
        d_u = d_u0 if d_u is None else d_u
    exps = exponents(d_s, d_u)
    rows = None
    if sweep:
        fam = make_family(fam_cfg)
        P_u = special_rectangles(fam).width_u
        rows = budget_sweep(range(sweep[0], sweep[1] + 1), len_alpha or fam_cfg.eps0, len_omega or fam_cfg.eps0,
                            fam_cfg.eps0, P_u, exps)
    _emit(exponents_doc(exps, rows), "exponents", out)


@cli.command("h4-region")
@click.option("--n", type=int, default=50, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=Path("h4_region.csv"), show_default=True)
@click.pass_obj
@exit_codes
def h4_region_cmd(state: CliState, n: int, out: Path):
    """(d_s0, d_u0, H4, beta_max) grid as CSV; beta_max is empty outside d_s0 + d_u0 > 1."""
    rows = h4_region(n)
    write_csv(out, ["d_s", "d_u", "h4", "beta_max"],
              ([r["d_s"], r["d_u"], int(r["h4"]), "" if r["beta_max"] is None else r["beta_max"]] for r in rows))


@cli.command("dump-tangency")
@click.option("--n", type=int, default=21, show_default=True, help="Grid points per axis")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=Path("tangency.csv"), show_default=True)
@click.pass_obj
@exit_codes
def dump_tangency(state: CliState, n: int, out: Path):
    """C_bar(y0, x1) between the special rectangles at the run's parameter value."""
    config = state.config
    fam = make_family(config.family)
    t = _run_t(config)
    special = special_rectangles(fam)
    F0 = fam.itinerary_map(special.symbols_u)
    F1 = fam.itinerary_map(special.symbols_s)
    functional, _ = tangency_functional(F0, fam.fold(t), F1, degrees=(4, 4))
    r = functional.rect
    Y, X = np.meshgrid(np.linspace(r.y_lo, r.y_hi, n), np.linspace(r.x_lo, r.x_hi, n), indexing="ij")
    c_bar, _ = functional.minimize(Y.ravel(), X.ravel())
    write_csv(out, ["y0", "x1", "c_bar"], zip(Y.ravel().tolist(), X.ravel().tolist(), np.asarray(c_bar).tolist()))


def _run_t(config: RunConfig) -> float:
    fam_cfg = config.family
    return resolve_intervals(fam_cfg.eps0, fam_cfg.tau, config.interval_path, config.t)[-1].midpoint


def _write_geometry(fam: ModelFamily, t: float, out: Path):
    rows = []
    for name, pts in fam.geometry_polylines(t):
        rows.extend([name, i, float(x), float(y)] for i, (x, y) in enumerate(pts))
    write_csv(out, ["curve", "index", "x", "y"], rows)


@cli.command("dump-geometry")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=Path("geometry.csv"), show_default=True)
@click.pass_obj
@exit_codes
def dump_geometry(state: CliState, out: Path):
    """Rectangle, cylinder-strip and tongue boundaries as CSV polylines."""
    _write_geometry(make_family(state.config.family), _run_t(state.config), out)


@cli.command()
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
def serve(host: Optional[str], port: Optional[int]):
    """Serve the HTTP API with uvicorn."""
    uvicorn.run("horseshoe.main:app", host=host or settings.api_host, port=port or settings.api_port)


def main():
    cli(prog_name="horseshoe")


if __name__ == "__main__":
    main()
