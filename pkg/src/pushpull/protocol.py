"""Synchronous simulation of the projected push-pull protocol.

Every round each agent

1. pulls neighbor decision variables through the row-stochastic ``R_k``,
2. pushes scaled gradient trackers through the column-stochastic ``C_k`` and
   corrects its own tracker with the change of its local gradient,
3. moves its second decision variable a fraction ``lam`` of the way towards
   the projected gradient point.

The simulator owns all agents, so message passing is modeled by reading the
neighbors' state through the sparsity pattern of the mixing matrices.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .metrics import ErrorTriple, error_triple
from .graph import DigraphSequence
from .mixing import MixingPair, build_mixing, phi_sequence_periodic, phi_sequence_uniform
from .problem import ProblemInstance

DIVERGENCE_NORM = 1e12
PHI_MODES = ("true", "uniform")
ENGINES = ("vectorized", "sequential")


class InfeasibleStartError(ValueError):
    def __init__(self, index: int, violation: float):
        super().__init__(f"initial point of agent {index} is outside the constraint set (distance {violation:.3e})")
        self.index = index
        self.violation = violation


class DivergenceError(RuntimeError):
    """A state variable became non-finite or exceeded the divergence norm."""

    def __init__(self, round_index: int, trajectory: "Trajectory | None" = None):
        super().__init__(f"run diverged at round {round_index}")
        self.round_index = round_index
        self.trajectory = trajectory


@dataclass(frozen=True)
class StepSizes:
    eta: float
    lam: float

    def __post_init__(self):
        if not (np.isfinite(self.eta) and self.eta > 0):
            raise ValueError(f"eta must be positive, got {self.eta}")
        if not 0 < self.lam <= 1:
            raise ValueError(f"lambda must lie in (0, 1], got {self.lam}")


@dataclass(frozen=True)
class SwarmState:
    """Stacked agent variables at round ``round``; each array is ``(n, d)``."""

    round: int
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray

    @property
    def n_agents(self) -> int:
        return self.x.shape[0]


def init(problem: ProblemInstance, x0) -> SwarmState:
    """``x = z = x0`` and ``y_i = grad f_i(x0_i)``; every ``x0_i`` must be feasible."""
    x0 = np.array(x0, dtype=float, copy=True)
    if x0.ndim == 1 and problem.dimension == 1:
        x0 = x0.reshape(-1, 1)
    if x0.shape != (problem.n_agents, problem.dimension):
        raise ValueError(f"x0 must have shape {(problem.n_agents, problem.dimension)}, got {x0.shape}")
    viol = problem.constraint.violation(x0)
    bad = np.flatnonzero(viol > 1e-12)
    if bad.size:
        raise InfeasibleStartError(int(bad[0]), float(viol[bad[0]]))
    return SwarmState(0, x0, problem.local_gradients(x0), x0.copy())


def step(
    state: SwarmState,
    pair: MixingPair,
    sizes: StepSizes,
    problem: ProblemInstance,
    engine: str = "vectorized",
) -> SwarmState:
    """One synchronous round of the protocol.

    ``engine="vectorized"`` updates the whole swarm with matrix products;
    ``engine="sequential"`` walks the agents in index order and computes each
    agent's update from its own row/column of the mixing matrices, which is
    the bitwise-reproducible reference path.
    """
    if engine == "vectorized":
        return _step_vectorized(state, pair, sizes, problem)
    if engine == "sequential":
        return _step_sequential(state, pair, sizes, problem)
    raise ValueError(f"unknown engine {engine!r}")


def _step_vectorized(state, pair, sizes, problem):
    r, c = pair.r_matrix, pair.c_matrix
    x_new = r @ state.z
    y_new = c @ state.y + problem.local_gradients(x_new) - problem.local_gradients(state.x)
    target = problem.project(x_new - sizes.eta * y_new)
    z_new = (1.0 - sizes.lam) * x_new + sizes.lam * target
    return SwarmState(state.round + 1, x_new, y_new, z_new)


def _step_sequential(state, pair, sizes, problem):
    r, c = pair.r_matrix, pair.c_matrix
    n, d = state.x.shape
    x_new = np.empty((n, d))
    y_new = np.empty((n, d))
    z_new = np.empty((n, d))
    # each sub-step reads only values from the previous sub-step
    for i in range(n):
        acc = np.zeros(d)
        for j in np.flatnonzero(r[i]):
            acc += r[i, j] * state.z[j]
        x_new[i] = acc
    for i in range(n):
        acc = np.zeros(d)
        for j in np.flatnonzero(c[i]):
            acc += c[i, j] * state.y[j]
        y_new[i] = acc + problem.local_gradient(i, x_new[i]) - problem.local_gradient(i, state.x[i])
    for i in range(n):
        target = problem.project(x_new[i] - sizes.eta * y_new[i])
        z_new[i] = (1.0 - sizes.lam) * x_new[i] + sizes.lam * target
    return SwarmState(state.round + 1, x_new, y_new, z_new)


def _diverged(state: SwarmState) -> bool:
    for a in (state.x, state.y, state.z):
        if not np.all(np.isfinite(a)) or np.abs(a).max() > DIVERGENCE_NORM:
            return True
    return False


@dataclass
class Trajectory:
    """Per-round record of a run (rows ``k = 0 .. rounds``)."""

    errors: np.ndarray  # (rounds + 1, 3): optimality, consensus, tracking
    feasibility: np.ndarray  # max constraint violation over all x_i, z_i
    tracking_identity: np.ndarray  # relative error of sum y_i = sum grad f_i(x_i)
    phi_mode: str
    phis: np.ndarray  # weights used for optimality / consensus at each round
    pis: np.ndarray
    sizes: StepSizes
    xstar: np.ndarray
    final_state: SwarmState
    phi_exact: bool = True
    states: list = field(default_factory=list)

    @property
    def rounds(self) -> int:
        return self.errors.shape[0] - 1

    def error_triple(self, k: int) -> ErrorTriple:
        return ErrorTriple(*map(float, self.errors[k]))

    def first_round_below(self, threshold: float, column: int = 0) -> int | None:
        hits = np.flatnonzero(self.errors[:, column] < threshold)
        return int(hits[0]) if hits.size else None

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["round", "optimality", "consensus", "tracking", "phi_mode"])
        for k, (a, b, c) in enumerate(self.errors):
            writer.writerow([k, repr(float(a)), repr(float(b)), repr(float(c)), self.phi_mode])
        return buf.getvalue()


def _state_checks(problem: ProblemInstance, state: SwarmState) -> tuple[float, float]:
    feas = max(problem.constraint.violation(state.x).max(), problem.constraint.violation(state.z).max())
    grads = problem.local_gradients(state.x)
    grad_sum = grads.sum(axis=0)
    y_sum = state.y.sum(axis=0)
    # relative to the summed gradient magnitudes so a vanishing total
    # gradient (unconstrained optimum) does not blow the ratio up
    scale = max(np.linalg.norm(grads, axis=1).sum(), 1e-300)
    return float(feas), float(np.linalg.norm(y_sum - grad_sum) / scale)


def run(
    problem: ProblemInstance,
    graphs: DigraphSequence,
    sizes: StepSizes,
    x0,
    rounds: int,
    xstar,
    phi_mode: str = "true",
    engine: str = "vectorized",
    keep_states: bool = False,
    stop_tolerance: float | None = None,
) -> Trajectory:
    """Run ``rounds`` rounds using ``build_mixing(graphs[k mod T])`` at round k.

    Errors are measured with the periodic absolute probability sequence
    (``phi_mode="true"``) or with uniform weights (``"uniform"``); the tracker
    weights always follow ``pi_{k+1} = C_k pi_k`` from ``pi_0 = 1/n``.

    With ``stop_tolerance`` the run ends early at the first round whose
    optimality gap is below it, so that a fit of the error decay is not
    dominated by the floating-point floor.

    Raises
    ------
    DivergenceError
        If any state entry becomes non-finite or exceeds ``DIVERGENCE_NORM``;
        the partial trajectory is attached to the exception.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if phi_mode not in PHI_MODES:
        raise ValueError(f"phi_mode must be one of {PHI_MODES}")
    if graphs.node_count != problem.n_agents:
        raise ValueError("graph node count does not match the number of agents")
    pairs = [build_mixing(g) for g in graphs]
    n = problem.n_agents
    T = len(pairs)
    if phi_mode == "true":
        phi_period = phi_sequence_periodic(pairs)
        phi_exact = True
    else:
        phi_period = phi_sequence_uniform(n, T)
        phi_exact = all(p.is_doubly_stochastic() for p in pairs)
    xstar = np.asarray(xstar, dtype=float).reshape(-1)

    errors = np.empty((rounds + 1, 3))
    feas = np.empty(rounds + 1)
    ident = np.empty(rounds + 1)
    phis = np.empty((rounds + 1, n))
    pis = np.empty((rounds + 1, n))
    states = []

    state = init(problem, x0)
    pi = np.full(n, 1.0 / n)

    def record(k, st, pi_k):
        phi_k = phi_period[k % T]
        phis[k] = phi_k
        pis[k] = pi_k
        errors[k] = error_triple(st.x, st.y, phi_k, pi_k, xstar)
        feas[k], ident[k] = _state_checks(problem, st)
        if keep_states:
            states.append(st)

    record(0, state, pi)
    for k in range(rounds):
        pair = pairs[k % T]
        state = step(state, pair, sizes, problem, engine=engine)
        pi = pair.c_matrix @ pi
        if _diverged(state):
            partial = Trajectory(
                errors[: k + 1], feas[: k + 1], ident[: k + 1], phi_mode, phis[: k + 1], pis[: k + 1],
                sizes, xstar, state, phi_exact, states,
            )
            raise DivergenceError(k + 1, partial)
        record(k + 1, state, pi)
        if stop_tolerance is not None and errors[k + 1, 0] < stop_tolerance:
            m = k + 2
            return Trajectory(
                errors[:m], feas[:m], ident[:m], phi_mode, phis[:m], pis[:m], sizes, xstar, state, phi_exact, states
            )
    return Trajectory(errors, feas, ident, phi_mode, phis, pis, sizes, xstar, state, phi_exact, states)
