"""Weighted sinusoid fits to two-photon interference fringes."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import NumericalError, ValidationError


@dataclass(frozen=True)
class FringeFit:
    c_max: float
    c_min: float
    phase: float
    visibility: float
    visibility_err: float
    r_squared: float
    clipped: bool = False


def fit_sinusoid(angles, counts, errors=None) -> FringeFit:
    """Fit ``a + b sin^2(theta - phi)`` by weighted least squares.

    The model is linear in (c0, c1, c2) after writing it as
    ``c0 + c1 cos 2theta + c2 sin 2theta``, so the fit is a single weighted
    linear solve; ``c_max = c0 + r``, ``c_min = c0 - r`` with ``r = hypot(c1, c2)``
    and the visibility is ``r / c0``.  Zero or missing errors fall back to
    unit weights.
    """
    theta = np.asarray(angles, dtype=float)
    y = np.asarray(counts, dtype=float)
    if theta.shape != y.shape or theta.ndim != 1:
        raise ValidationError("angles and counts must be 1-d arrays of equal length")
    if len(theta) < 5:
        raise ValidationError("need at least 5 points for a fringe fit")
    if np.ptp(theta) < math.pi / 2 - 1e-12:
        raise ValidationError("angles must span at least half a fringe period (90 degrees)")
    if errors is None:
        sigma = np.ones_like(y)
    else:
        sigma = np.asarray(errors, dtype=float)
        if np.any(sigma <= 0):
            sigma = np.ones_like(y)
    X = np.column_stack([np.ones_like(theta), np.cos(2 * theta), np.sin(2 * theta)])
    Xw = X / sigma[:, None]
    yw = y / sigma
    coef, _, rank, _ = np.linalg.lstsq(Xw, yw, rcond=None)
    if rank < 3:
        raise NumericalError("fringe fit design matrix is rank deficient")
    c0, c1, c2 = (float(c) for c in coef)
    resid = yw - Xw @ coef
    dof = max(len(y) - 3, 1)
    cov = np.linalg.inv(Xw.T @ Xw)
    if errors is None or np.any(np.asarray(errors) <= 0):
        # no usable error model: scale by the residual variance
        cov = cov * float(resid @ resid) / dof
    r = math.hypot(c1, c2)
    c_max, c_min = c0 + r, c0 - r
    clipped = False
    if c_min < 0:
        c_min, clipped = 0.0, True
    # sin^2(theta - phi) = (1 - cos(2 theta - 2 phi)) / 2, so cos 2phi = -c1/r, sin 2phi = -c2/r
    phase = (0.5 * math.atan2(-c2, -c1) + math.pi / 2) % math.pi - math.pi / 2 if r > 0 else 0.0
    if c_max + c_min <= 0:
        raise NumericalError("fringe fit has no positive counts")
    vis = (c_max - c_min) / (c_max + c_min)
    if r > 0 and c0 > 0 and not clipped:
        grad = np.array([-r / c0 ** 2, c1 / (r * c0), c2 / (r * c0)])
        vis_err = float(math.sqrt(max(grad @ cov @ grad, 0.0)))
    else:
        vis_err = 0.0
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum((y - X @ coef) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return FringeFit(c_max, c_min, phase, vis, vis_err, r2, clipped)
