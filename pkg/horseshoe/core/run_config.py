"""
Run Configuration

A RunConfig describes one batch run: the model family, the four main
constants, class budgets, transfer-operator truncation and the seed for
randomized suites. Documents may be TOML, JSON or YAML; CLI flags override
individual fields after loading.
"""

import json
import logging
import sys
import warnings
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import yaml
from pydantic import BaseModel, Field, ValidationError, model_validator

from horseshoe.core.config import settings
from horseshoe.core.exceptions import ConfigError, ConstantsOrderingWarning

logger = logging.getLogger(__name__)


class FamilyConfig(BaseModel):
    """Parameters of the two-symbol model family and its fold."""
    lambda_s: float = Field(default=0.284, gt=0.0, lt=1.0, description="Contraction rate")
    lambda_u: Optional[float] = Field(default=None, gt=1.0, description="Expansion rate (default 1/lambda_s)")
    eps0: float = Field(default=0.02, gt=0.0, lt=0.25, description="Tongue scale")
    tau: float = Field(default=0.25, gt=0.0, lt=1.0)
    eta: float = Field(default=0.05, gt=0.0, lt=1.0)
    beta: float = Field(default=1.3, gt=1.0, lt=2.0)
    nonlinearity: float = Field(default=0.0, ge=0.0, le=0.05, description="Quadratic perturbation amplitude")
    perturbed_branches: Optional[List[List[int]]] = Field(
        default=None, description="Transitions carrying the perturbation (default: all)"
    )
    n0: int = Field(default=2, ge=2, description="Excursion length through the tongue")
    kappa_u: float = 0.05
    kappa_s: float = 0.05
    x_c: float = Field(default=0.5, gt=0.0, lt=1.0)
    y_c: float = Field(default=0.5, gt=0.0, lt=1.0)
    chi: Literal["identity", "cubic"] = "identity"

    @property
    def expansion(self) -> float:
        return self.lambda_u if self.lambda_u is not None else 1.0 / self.lambda_s


class BudgetConfig(BaseModel):
    n_max: int = Field(default_factory=lambda: settings.n_max, ge=1)
    width_floor: float = Field(default_factory=lambda: settings.width_floor, gt=0.0)
    max_elements: int = Field(default_factory=lambda: settings.max_elements, ge=1)


class TruncationConfig(BaseModel):
    m_trunc: int = Field(default_factory=lambda: settings.m_trunc, ge=1)
    w_min: float = Field(default_factory=lambda: settings.w_min, gt=0.0)


class RunConfig(BaseModel):
    """
    Full description of a batch run.

    Only `seed` feeds randomness, and only the verification suites use it.
    """
    family: FamilyConfig = Field(default_factory=FamilyConfig)
    budgets: BudgetConfig = Field(default_factory=BudgetConfig)
    truncation: TruncationConfig = Field(default_factory=TruncationConfig)
    t: Optional[float] = Field(default=None, description="Explicit parameter value; overrides the interval")
    interval_path: List[int] = Field(default_factory=list, description="Child indices from I0")
    seed: int = 0
    suite_size: int = Field(default=100, ge=1)
    parabolic_suite_size: int = Field(default=50, ge=1)

    @model_validator(mode="after")
    def _check_ordering(self) -> "RunConfig":
        fam = self.family
        chain = [0.0, fam.eps0, fam.eta, fam.tau, fam.beta - 1.0, 1.0]
        if any(a >= b for a, b in zip(chain, chain[1:])):
            message = (
                f"constants ordering 0 < eps0 < eta < tau < beta-1 < 1 violated: "
                f"eps0={fam.eps0}, eta={fam.eta}, tau={fam.tau}, beta={fam.beta}"
            )
            logger.warning(message)
            warnings.warn(message, ConstantsOrderingWarning, stacklevel=2)
        return self

    def with_overrides(self, overrides: Dict[str, Any]) -> "RunConfig":
        """
        Apply dotted-key overrides such as {"family.eps0": 0.01}.

        Args:
            overrides: Mapping of dotted field paths to values (None values are skipped)

        Returns:
            A new validated RunConfig
        """
        data = self.model_dump()
        for key, value in overrides.items():
            if value is None:
                continue
            node = data
            parts = key.split(".")
            for part in parts[:-1]:
                node = node.setdefault(part, {})
            node[parts[-1]] = value
        return load_config_dict(data)


def load_config_dict(data: Dict[str, Any]) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid run configuration: {e}") from e


def load_config(path: Optional[Path]) -> RunConfig:
    """
    Load a RunConfig from a TOML, JSON or YAML document.

    Args:
        path: Document path, or None for defaults

    Returns:
        Validated RunConfig
    """
    if path is None:
        return load_config_dict({})
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
        suffix = path.suffix.lower()
        if suffix == ".toml":
            data = tomllib.loads(text)
        elif suffix in (".yaml", ".yml"):
            data = yaml.safe_load(text) or {}
        elif suffix == ".json":
            data = json.loads(text)
        else:
            raise ConfigError(f"unsupported config format: {path.suffix}")
    except (OSError, tomllib.TOMLDecodeError, yaml.YAMLError, json.JSONDecodeError) as e:
        raise ConfigError(f"could not read config {path}: {e}") from e
    logger.info(f"Loaded run configuration from {path}")
    return load_config_dict(data)
