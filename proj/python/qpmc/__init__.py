"""QPMC foliations of R^k x S^1."""

import json

from . import _core
from ._core import (
    ConfigError,
    DegenerateMetricError,
    EigenSolverError,
    FrameDegeneracyError,
    GapCollapseError,
    QpmcError,
    SolverDivergenceError,
    VerificationError,
    berger_sectional_curvature,
    formula_ids,
    metric_eval,
    spectrum,
)

__version__ = _core.__version__


def solve_leaf(metric, z, **kwargs):
    """Leaf solution as a dict (same layout as the CLI payload)."""
    return json.loads(_core.solve_leaf(metric, list(z), **kwargs))


def verify_variations(metric, z=None, **kwargs):
    return json.loads(_core.verify_variations(metric, None if z is None else list(z), **kwargs))


def run(*args):
    """Runs the command-line tool in-process: (exit_code, record_or_text, stderr)."""
    code, out, err = _core.run_cli([str(a) for a in args])
    try:
        out = json.loads(out)
    except ValueError:
        pass
    return code, out, err


__all__ = [
    "ConfigError", "DegenerateMetricError", "EigenSolverError", "FrameDegeneracyError",
    "GapCollapseError", "QpmcError", "SolverDivergenceError", "VerificationError",
    "berger_sectional_curvature", "formula_ids", "metric_eval", "run", "solve_leaf", "spectrum",
    "verify_variations",
]
