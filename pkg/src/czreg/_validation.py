"""Argument checks shared by the estimators and the command line."""

import math

import numpy as np

from .boyd import as_weight
from .exceptions import DomainError
from .signals import SampledFunction


def check_sampled(f):
    if not isinstance(f, SampledFunction):
        raise DomainError(f"expected a SampledFunction, got {type(f).__name__}")
    return f


def check_p(p, low=1.0):
    """``p`` as a float in ``[low, inf]``; accepts the strings ``"inf"`` and ``"infinity"``."""
    if isinstance(p, str):
        p = p.strip().lower()
        p = math.inf if p in ("inf", "infinity") else p
    try:
        p = float(p)
    except (TypeError, ValueError):
        raise DomainError(f"p must be a number or 'inf', got {p!r}") from None
    if math.isnan(p) or p < low:
        raise DomainError(f"p must lie in [{low}, inf], got {p}")
    return p


def check_degree(n):
    if isinstance(n, bool) or int(n) != n or n < 0:
        raise DomainError(f"degree must be a nonnegative integer, got {n!r}")
    return int(n)


def check_points(points, dim=1):
    """Array of shape ``(m, dim)`` from scalars, 1-D arrays or point lists."""
    pts = np.asarray(points, dtype=float)
    if dim == 1:
        pts = pts.reshape(-1, 1)
    else:
        pts = np.atleast_2d(pts)
        if pts.shape[-1] != dim:
            raise DomainError(f"points need {dim} coordinates")
    if pts.size == 0:
        raise DomainError("no points given")
    if not np.all(np.isfinite(pts)):
        raise DomainError("points must be finite")
    return pts


def check_radii(radii):
    r = np.asarray(radii, dtype=float).reshape(-1)
    if r.size == 0 or np.any(~np.isfinite(r)) or np.any(r <= 0):
        raise DomainError("radii must be finite and positive")
    if np.any(np.diff(r) >= 0):
        raise DomainError("radii must be strictly decreasing")
    return r


def check_phi(phi):
    return as_weight(phi)
