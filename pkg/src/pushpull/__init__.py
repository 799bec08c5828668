"""Simulator and convergence analysis for projected push-pull distributed
optimization over time-varying directed graphs."""

from .graph import (
    Digraph,
    DigraphSequence,
    complete_digraph,
    diameter,
    generate_circulant,
    generate_cycle,
    generate_random,
    generate_unbalanced,
    is_strongly_connected,
    max_edge_utility,
    random_sequence,
)
from .mixing import MixingPair, build_mixing, phi_sequence_periodic, pi_sequence
from .problem import (
    Ball,
    Box,
    ConvergenceError,
    Halfspace,
    ProblemInstance,
    QuadraticCost,
    WholeSpace,
    centralized_solve,
    global_constants,
    sample_initial_points,
    sample_problem,
)
from .metrics import ErrorTriple, log_linear_fit
from .protocol import DivergenceError, StepSizes, SwarmState, Trajectory, init, run, step

__version__ = "0.1.0"
