"""Log-log power-law fits shared by the decay and moment experiments."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateFitError


@dataclass
class PowerFit:
    """Least-squares fit log y = c - exponent * log N."""

    exponent: float
    stderr: float
    intercept: float
    residuals: list[float]
    stderr_mc: float = 0.0
    stderr_resid: float = 0.0


def fit_power_law(Ns: Sequence[float], values: Sequence[float], errors: Sequence[float] | None = None) -> PowerFit:
    """OLS slope of log(values) on log(Ns); exponent = -slope.

    The reported stderr is the larger of the residual-based standard error and
    the error propagated from per-point standard errors (if given).
    """
    x = np.log(np.asarray(Ns, dtype=float))
    v = np.asarray(values, dtype=float)
    if len(x) < 2 or np.ptp(x) == 0:
        raise DegenerateFitError("need at least two distinct N values")
    if not np.all(np.isfinite(v)) or np.any(v <= 0):
        raise DegenerateFitError("non-positive values cannot be fitted on a log scale")
    y = np.log(v)
    xc = x - x.mean()
    sxx = float(xc @ xc)
    slope = float(xc @ (y - y.mean())) / sxx
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    dof = len(x) - 2
    se_resid = math.sqrt(float(resid @ resid) / dof / sxx) if dof > 0 else 0.0
    se_mc = 0.0
    if errors is not None:
        sig = np.asarray(errors, dtype=float) / v
        se_mc = math.sqrt(float(np.sum((xc / sxx) ** 2 * sig**2)))
    return PowerFit(-slope, max(se_resid, se_mc), intercept, resid.tolist(), se_mc, se_resid)
