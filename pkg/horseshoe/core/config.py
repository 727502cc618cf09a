"""
Application Configuration

This module handles all configuration using pydantic-settings.
It loads settings from environment variables and .env files.
Numerical tolerances, floors and desk-scale budgets live here so that
every service reads the same values.
"""

from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import Field
from typing import Optional


class Settings(BaseSettings):
    """
    Application settings loaded from environment variables.

    Settings are loaded in this order (first found wins):
    1. Environment variables
    2. .env file
    3. Default values (if specified)
    """

    # Application Settings
    service_name: str = "horseshoe-bifurcation"
    service_version: str = "1.0.0"
    environment: str = "development"  # development, test, production
    debug: bool = False

    # API Settings
    api_host: str = "0.0.0.0"
    api_port: int = 8000

    # Rate Limiting (only the transfer-operator endpoint is expensive)
    rate_limit_enabled: bool = True
    rate_limit_per_minute: int = 30

    # OpenTelemetry (Tracing)
    otel_enabled: bool = True
    otel_exporter_otlp_endpoint: Optional[str] = None  # e.g., "http://localhost:4318/v1/traces"
    otel_service_name: str = "horseshoe-bifurcation"
    otel_console_export: bool = False  # print spans to stderr (desk runs without a collector)

    # Spectral fields
    field_degree: int = 16  # per axis, nonlinear fields
    class_field_degree: int = 8  # per axis, maps stored in rectangle classes
    parabolic_field_degree: int = 24  # per axis, parabolic branches (square-root type)
    fit_tolerance: float = 1e-10  # trailing-coefficient bound for DegreeTooLow
    sup_grid: int = 65  # initial sampling grid per axis for sup-norms
    sup_refinements: int = 3  # max number of x2 grid refinements
    sup_rel_change: float = 1e-10

    # Newton solvers
    solve_tolerance: float = 1e-12
    max_newton_iters: int = 50

    # Floors
    delta_floor: float = 1e-6
    derivative_floor: float = 1e-10

    # Verification ceilings
    calculus_flag_threshold: float = 1e-5
    width_law_ceiling: float = 10.0  # C in |P''| / (|P||P'|) in [1/C, C]
    distortion_ceiling: float = 10.0  # C_comp in the distortion growth bound
    parabolic_ceiling: float = 10.0

    # Parabolic composition
    pc1_bound: float = 0.05  # bound on |A1_y|, |A1_yy|, |B0_x|, |B0_xx|
    pc2_factor: float = 0.5  # delta must exceed pc2_factor * (|P1| + |Q0|)
    enforce_pc2: bool = True
    c_ww_fallback: float = 0.5  # fall back to bounded scalar minimization when |C_ww - 2| exceeds this
    t_grid_points: int = 9

    # Rectangle classes
    n_max: int = 40
    width_floor: float = 1e-5
    max_elements: int = 20000

    # Transfer operator truncation
    m_trunc: int = 8
    w_min: float = 1e-8
    power_tolerance: float = 1e-12
    power_max_iters: int = 10000
    bisection_tolerance: float = 1e-13
    tail_mass_ceiling: float = 0.1

    # Concurrency
    horseshoe_threads: Optional[int] = Field(default=None, ge=1)  # HORSESHOE_THREADS caps workers

    # Logging
    log_level: str = "INFO"  # DEBUG, INFO, WARNING, ERROR

    # Model configuration for loading settings
    model_config = SettingsConfigDict(
        env_file=".env",           # Load from .env file
        env_file_encoding="utf-8",  # File encoding
        case_sensitive=False,       # Environment variable names are case-insensitive
        extra="ignore",             # Ignore extra environment variables
        protected_namespaces=()
    )

    @property
    def workers(self) -> int:
        """Number of worker threads for sweep-level parallelism."""
        return self.horseshoe_threads or 1


# Create a global settings instance
# This will be imported and used throughout the application
settings = Settings()
