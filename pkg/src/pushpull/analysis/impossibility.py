"""Executable versions of the two counterexamples showing why the lazy step is
needed: with ``lam = 1`` the step between consecutive iterates (and the
disagreement created in one round) cannot be bounded by the optimality gap
with a coefficient that vanishes as ``eta -> 0``.

Both use ``f(x) = (L/2) x^2`` on ``X = {x >= 1}`` whose minimizer is ``x* = 1``.
"""

from __future__ import annotations

import math

import numpy as np

from ..mixing import MixingPair
from ..problem import Halfspace, ProblemInstance, QuadraticCost
from ..protocol import StepSizes, init, step
from ..metrics import consensus_error, optimality_gap


def _project_half_line(x: float) -> float:
    return max(x, 1.0)


def reproduce_impossibility_pgd(L: float, eta: float, x0: float, max_iter: int = 10**7) -> float:
    """Ratio ``|x[k+1] - x[k]| / |x[k] - x*|`` at the first round whose iterate
    lies in ``(1, 1/(1 - eta L)]`` (round 0 when ``eta >= 1/L``).

    Projected gradient on this instance jumps straight onto ``x* = 1`` from
    that region, so the ratio is 1 however small ``eta`` is.
    """
    if not x0 > 1:
        raise ValueError("x0 must lie in X minus the optimum, i.e. x0 > 1")
    if not (eta > 0 and L > 0):
        raise ValueError("eta and L must be positive")
    x = float(x0)
    upper = math.inf if eta * L >= 1 else 1.0 / (1.0 - eta * L)
    for _ in range(max_iter):
        x_next = _project_half_line((1.0 - eta * L) * x)
        if 1.0 < x <= upper:
            return abs(x_next - x) / abs(x - 1.0)
        x = x_next
    raise RuntimeError("iterate never entered the jump region")


def consensus_construction(L: float, eta: float, pi1: float, pi2: float, mix: float = 0.25):
    """Two-agent instance used by :func:`reproduce_impossibility_consensus`.

    Returns ``(problem, pair, x0)``: costs ``pi_i (L/2) x^2``, a doubly
    stochastic ``R`` with off-diagonal weight ``mix`` and ``C = pi 1^T`` (so
    ``C pi = pi``), and the common start ``x0 = 1/(1 - eta L pi1)``.
    """
    if not (pi1 > pi2 > 0 and abs(pi1 + pi2 - 1.0) <= 1e-12):
        raise ValueError("need pi1 > pi2 > 0 with pi1 + pi2 = 1")
    if not (L > 0 and 0 < eta < 1.0 / (L * pi1)):
        raise ValueError(f"need 0 < eta < 1/(L pi1) = {1.0 / (L * pi1)}")
    pi = np.array([pi1, pi2])
    costs = tuple(QuadraticCost([0.0], [[p * L / 2.0]]) for p in pi)
    problem = ProblemInstance(costs, Halfspace([1.0], 1.0), mu=pi2 * L, lipschitz=pi1 * L)
    r = np.array([[1.0 - mix, mix], [mix, 1.0 - mix]])
    c = np.outer(pi, np.ones(2))
    start = 1.0 / (1.0 - eta * L * pi1)
    return problem, MixingPair(r, c), np.full((2, 1), start)


def reproduce_impossibility_consensus(L: float, eta: float, pi1: float, pi2: float) -> tuple[float, float]:
    """Run one protocol round (``lam = 1``) on the two-agent construction.

    Both agents start in consensus at ``x0 = 1/(1 - eta L pi1)``; agent 1 lands
    exactly on ``x* = 1`` while agent 2 stops short, so the round creates
    disagreement proportional to the starting gap.

    Returns
    -------
    (disagreement, gap) : tuple of float
        Uniform-weight consensus error of the decision variables produced by
        the projected update, and the starting optimality gap.
    """
    problem, pair, x0 = consensus_construction(L, eta, pi1, pi2)
    phi = np.array([0.5, 0.5])  # R is doubly stochastic
    state = init(problem, x0)
    gap = optimality_gap(state.x, phi, [1.0])
    nxt = step(state, pair, StepSizes(eta, 1.0), problem)
    return consensus_error(nxt.z, phi), gap


def consensus_closed_forms(L: float, eta: float, pi1: float, pi2: float) -> tuple[float, float]:
    """Hand-derived values of :func:`reproduce_impossibility_consensus`."""
    denom = 1.0 - eta * L * pi1
    return eta * L * (pi1 - pi2) / (math.sqrt(2.0) * denom), eta * L * pi1 / denom


def consensus_ratio_floor(pi1: float, pi2: float) -> float:
    """``eta``-independent lower bound on disagreement / gap."""
    return (1.0 - pi2 / pi1) / math.sqrt(2.0)
