"""Krasnosel'skii-Mann fixed-point iteration with certified rate bounds."""

__version__ = "0.1.0"

from .schedule import StepSchedule  # noqa: E402
from .bounds import (  # noqa: E402
    KAPPA,
    SQRT_2_OVER_PI,
    c_table,
    constants,
    h_envelope,
    pn_exact,
    pn_recursion,
    rate_report,
)
from .km_core import certify_diameter, certify_fixpoint, km_iterate  # noqa: E402

__all__ = [
    "__version__",
    "StepSchedule",
    "KAPPA",
    "SQRT_2_OVER_PI",
    "c_table",
    "constants",
    "h_envelope",
    "pn_exact",
    "pn_recursion",
    "rate_report",
    "km_iterate",
    "certify_diameter",
    "certify_fixpoint",
]
