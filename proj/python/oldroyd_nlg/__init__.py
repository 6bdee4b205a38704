"""Galerkin and nonlinear Galerkin solvers for 2D Oldroyd order-one flow.

The heavy lifting is in the compiled ``_core`` module; this package adds
dict-based study helpers on top.
"""

import json as _json

from ._core import (  # noqa: F401
    KernelParams,
    Level,
    MemoryOrigin,
    MemoryRule,
    NonPositiveGamma,
    Problem,
    RunDiagnostics,
    Scheme,
    SchemeConfig,
    StepFailure,
    StepRecord,
    Trajectory,
    TwoLevelContext,
    ZStart,
    diagnostics,
    estimate_rates,
    exact_errors,
    export_snapshots_csv,
    export_vtk,
    fitted_order,
    kernel_eval,
    list_solutions,
    positivity_quadrature,
    project_initial,
    run_cgm,
    run_nlg,
    snapshot_difference,
    subspace_constants,
)
from . import _core

__version__ = "0.1.0"


def _as_text(config):
    if isinstance(config, str):
        return config
    return _json.dumps(config)


def normalize_config(config):
    """Validated study config (dict or JSON text) with every default filled in."""
    return _json.loads(_core.normalize_config(_as_text(config)))


def run_study(config):
    """Run a study and return the report as a dict (same layout as the JSON export).

    The CSV form is available under the ``"csv"`` key.
    """
    report, csv = _core.run_study_json(_as_text(config))
    out = _json.loads(report)
    out["csv"] = csv
    return out


def metric(report, name, time=None):
    """Values of one metric in level order, optionally at one sample time."""
    return [
        row["value"]
        for row in report["rows"]
        if row["metric"] == name and (time is None or (row["time"] is not None and abs(row["time"] - time) < 1e-9))
    ]
