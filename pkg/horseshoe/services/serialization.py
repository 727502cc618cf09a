"""
Serialization

JSON documents, JSON-lines class dumps and CSV tables. Floats go out
round-trip exact (JSON uses repr, CSV 17 significant digits) so re-running
a command reproduces its output byte for byte. Every emitted JSON document
is checked against its schema under horseshoe/schemas/v1.
"""

import csv
import json
import logging
import math
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import jsonschema
import numpy as np

from horseshoe.core.exceptions import ConfigError
from horseshoe.core.run_config import BudgetConfig, FamilyConfig
from horseshoe.services.affine import ImplicitMap, Strip
from horseshoe.services.family import ModelFamily, make_family
from horseshoe.services.fields import Rect, ScalarField2
from horseshoe.services.params import Budget, ExponentSet, IntervalTree, ParamInterval
from horseshoe.services.rclass import Element, RClass
from horseshoe.services.words import parse_word

logger = logging.getLogger(__name__)

SCHEMA_DIR = Path(__file__).resolve().parent.parent / "schemas" / "v1"
WIDTH_RTOL = 1e-9


def _default(obj: Any):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if hasattr(obj, "model_dump"):
        return obj.model_dump()
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")


def _finite(obj: Any):
    # JSON has no inf/nan; they become null
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def dumps(doc: Any, indent: Optional[int] = 2) -> str:
    return json.dumps(_finite(json.loads(json.dumps(doc, default=_default))), indent=indent, sort_keys=True)


def fmt(x: float) -> str:
    return format(float(x), ".17g")


@lru_cache(maxsize=None)
def load_schema(name: str) -> Dict[str, Any]:
    path = SCHEMA_DIR / f"{name}.schema.json"
    with open(path) as f:
        return json.load(f)


def validate(doc: Dict[str, Any], name: str) -> Dict[str, Any]:
    """
    Validate a document against schemas/v1/<name>.schema.json.

    Raises:
        ConfigError: if the document does not match
    """
    try:
        jsonschema.validate(instance=_finite(json.loads(json.dumps(doc, default=_default))), schema=load_schema(name))
    except jsonschema.ValidationError as e:
        raise ConfigError(f"document does not match schema {name}: {e.message}", schema=name) from e
    return doc


def write_json(path: Path, doc: Dict[str, Any], schema: str) -> Path:
    validate(doc, schema)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(doc) + "\n")
    logger.info(f"wrote {path}")
    return path


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    logger.info(f"wrote {path}")
    return path


# Fields and maps

def field_to_dict(f: ScalarField2) -> Dict[str, Any]:
    d = f.domain
    return {"domain": [d.y_lo, d.y_hi, d.x_lo, d.x_hi], "degrees": list(f.degrees),
            "coeffs": np.asarray(f.coeffs).ravel().tolist()}


def field_from_dict(doc: Dict[str, Any]) -> ScalarField2:
    degrees = tuple(doc["degrees"])
    coeffs = np.asarray(doc["coeffs"], dtype=float).reshape(degrees[0] + 1, degrees[1] + 1)
    return ScalarField2(Rect(*doc["domain"]), coeffs)


def _strip_to_dict(s: Strip) -> Dict[str, Any]:
    return {"orientation": s.orientation, "chart": s.chart.name,
            "phi_minus": np.asarray(s.lower.coeffs).tolist(), "phi_plus": np.asarray(s.upper.coeffs).tolist()}


def map_to_dict(F: ImplicitMap) -> Dict[str, Any]:
    return {
        "A": field_to_dict(F.A),
        "B": field_to_dict(F.B),
        "source_chart": F.source.name,
        "target_chart": F.target.name,
        "domain_strip": _strip_to_dict(F.domain),
        "image_strip": _strip_to_dict(F.image),
    }


# Class dumps

def element_record(e: Element) -> Dict[str, Any]:
    parent = e.word.parent()
    q_parent = e.word.q_parent()
    p, q = e.widths
    return {
        "word": e.key,
        "n": e.n,
        "r": e.r,
        "kind": e.kind,
        "widths": {"P": p, "Q": q},
        "flags": dict(e.flags),
        "parent_word": parent.key if parent is not None else None,
        "q_parent_word": q_parent.key if q_parent is not None else None,
    }


def class_header(rc: RClass) -> Dict[str, Any]:
    counts = rc.counts()
    return {
        "kind": "header",
        "schema": "class.v1",
        "interval": rc.interval.to_dict(),
        "eps": rc.interval.length,
        "tau": rc.interval.tau,
        "family": rc.fam.config.model_dump(),
        "budgets": rc.budgets.model_dump(),
        "special": {"P_s": rc.P_s.key, "Q_u": rc.Q_u.key},
        "size": len(rc),
        "counts": counts,
        "exhausted": rc.exhausted,
    }


def dump_class(rc: RClass, path: Path) -> Path:
    """Write the header line and one line per element in (n, word) order."""
    header = validate(class_header(rc), "class_header")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        f.write(dumps(header, indent=None) + "\n")
        for e in rc.ordered():
            f.write(dumps(validate(element_record(e), "class_element"), indent=None) + "\n")
    logger.info(f"dumped {len(rc)} elements to {path}")
    return path


def read_class_lines(path: Path) -> Tuple[Dict[str, Any], List[Dict[str, Any]]]:
    path = Path(path)
    try:
        lines = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read class dump {path}: {e}") from e
    if not lines:
        raise ConfigError(f"class dump {path} is empty")
    header = validate(lines[0], "class_header")
    records = [validate(r, "class_element") for r in lines[1:]]
    return header, records


def interval_from_header(header: Dict[str, Any]) -> ParamInterval:
    """Rebuild the interval node along its tree path from I0."""
    fam = header["family"]
    node = header["interval"]
    path = node["path"]
    if not path and (node["t_lo"], node["t_hi"]) != (fam["eps0"], 2.0 * fam["eps0"]):
        return ParamInterval(0, node["t_lo"], node["t_hi"], header["tau"], header["eps"])
    tree = IntervalTree(fam["eps0"], fam["tau"], max(len(path), 1))
    return tree.leaf(path)


def load_class(path: Path, fam: Optional[ModelFamily] = None) -> RClass:
    """
    Rebuild a class from its dump; every element is re-derived from its word
    and its widths checked against the stored ones.

    Raises:
        ConfigError: unreadable dump or a width mismatch
    """
    header, records = read_class_lines(path)
    fam = fam or make_family(FamilyConfig.model_validate(header["family"]))
    interval = interval_from_header(header)
    rc = RClass(fam, interval, BudgetConfig.model_validate(header["budgets"]))
    for record in sorted(records, key=lambda r: (r["n"], r["word"])):
        word = parse_word(record["word"], fam.n0)
        element = rc.derive(word)
        element.flags = dict(record.get("flags") or {})
        stored = record["widths"]
        p, q = element.widths
        if not (math.isclose(p, stored["P"], rel_tol=WIDTH_RTOL) and math.isclose(q, stored["Q"], rel_tol=WIDTH_RTOL)):
            raise ConfigError(f"element {word.key} re-derives to widths ({p!r}, {q!r}), dump has "
                              f"({stored['P']!r}, {stored['Q']!r})", word=word.key)
        rc.add(element)
    rc.exhausted = bool(header.get("exhausted", False))
    rc.frontier = set(rc.elements) if rc.exhausted else set()
    logger.info(f"loaded {len(rc)} elements from {path}")
    return rc


# Report documents

def interval_tree_doc(tree: IntervalTree) -> Dict[str, Any]:
    levels = []
    for k in range(tree.depth + 1):
        length = tree.level_length(k)
        levels.append({
            "level": k,
            "length": length,
            "log_length": (1.0 + tree.tau) ** k * math.log(tree.eps0),
            "candidates": tree.level_candidates(k),
            "discarded": tree.discarded_at_level(k) if k < tree.depth else 0.0,
        })
    return {"eps0": tree.eps0, "tau": tree.tau, "depth": tree.depth, "levels": levels}


def exponents_doc(exps: ExponentSet, sweep: Optional[Sequence[Tuple[int, float, Budget]]] = None) -> Dict[str, Any]:
    doc = exps.model_dump()
    if sweep is not None:
        doc["budgets"] = [{"N": N, "x": x, "B": b.B, "B0": b.B0, "B1": b.B1, "regime": b.regime}
                          for N, x, b in sweep]
    return doc
