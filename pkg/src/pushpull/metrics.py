"""Weighted error measures for a swarm of agent variables.

``xs`` and ``ys`` are ``(n, d)`` arrays with one agent per row; weight vectors
are positive and stochastic.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class ErrorTriple(NamedTuple):
    optimality: float
    consensus: float
    tracking: float


def _rows(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a.reshape(-1, 1) if a.ndim == 1 else a


def optimality_gap(xs, phi, xstar) -> float:
    """``sqrt(sum_i phi_i ||x_i - x*||^2)``."""
    xs = _rows(xs)
    diff = xs - np.asarray(xstar, dtype=float).reshape(1, -1)
    return float(np.sqrt(np.dot(phi, np.sum(diff * diff, axis=1))))


def consensus_error(xs, phi) -> float:
    """Pairwise weighted disagreement ``sqrt(sum_ij phi_i phi_j ||x_i - x_j||^2)``."""
    xs = _rows(xs)
    phi = np.asarray(phi, dtype=float)
    diff = xs[:, None, :] - xs[None, :, :]
    pair = np.sum(diff * diff, axis=2)
    return float(np.sqrt(phi @ pair @ phi))


def consensus_error_centered(xs, phi) -> float:
    """Same quantity as :func:`consensus_error` via the weighted mean:
    ``sqrt(2) * sqrt(sum_i phi_i ||x_i - xbar||^2)`` with ``xbar = sum phi_i x_i``."""
    xs = _rows(xs)
    phi = np.asarray(phi, dtype=float)
    dev = xs - phi @ xs
    return float(np.sqrt(2.0 * np.dot(phi, np.sum(dev * dev, axis=1))))


def tracking_error(ys, pi) -> float:
    """``sqrt(sum_i pi_i ||y_i / pi_i - sum_l y_l||^2)``."""
    ys = _rows(ys)
    pi = np.asarray(pi, dtype=float)
    if np.any(pi <= 0):
        raise ValueError("pi must be strictly positive")
    dev = ys / pi[:, None] - ys.sum(axis=0)
    return float(np.sqrt(np.dot(pi, np.sum(dev * dev, axis=1))))


def error_triple(xs, ys, phi, pi, xstar) -> ErrorTriple:
    return ErrorTriple(optimality_gap(xs, phi, xstar), consensus_error(xs, phi), tracking_error(ys, pi))


def log_linear_fit(series, tail: float = 0.8) -> tuple[float, float]:
    """Least-squares line through ``log(series)`` over its last ``tail``
    fraction of rounds.

    Returns
    -------
    (rate, r2) : tuple of float
        ``exp(slope)``, the per-round contraction factor, and the coefficient
        of determination of the fit. A geometric sequence gives ``r2 = 1``.
    """
    e = np.asarray(series, dtype=float)
    start = len(e) - int(round(tail * len(e)))
    e = e[start:]
    if len(e) < 3:
        raise ValueError("need at least 3 points to fit")
    if np.any(e <= 0) or not np.all(np.isfinite(e)):
        return float("nan"), float("-inf")
    k = np.arange(start, start + len(e), dtype=float)
    y = np.log(e)
    slope, intercept = np.polyfit(k, y, 1)
    resid = y - (slope * k + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return float(np.exp(slope)), float(r2)
