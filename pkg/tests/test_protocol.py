import numpy as np
import pytest

from pushpull import (
    Digraph,
    DigraphSequence,
    DivergenceError,
    Halfspace,
    ProblemInstance,
    QuadraticCost,
    StepSizes,
    WholeSpace,
    build_mixing,
    centralized_solve,
    complete_digraph,
    generate_cycle,
    init,
    random_sequence,
    run,
    sample_initial_points,
    sample_problem,
    step,
)
from pushpull.analysis import consensus_error
from pushpull.protocol import InfeasibleStartError

SINGLE = DigraphSequence((Digraph(1, frozenset()),))


def one_agent(cost, constraint):
    return ProblemInstance((cost,), constraint)


def test_step_sizes_validation():
    for eta, lam in [(0.0, 0.5), (-1.0, 0.5), (0.1, 0.0), (0.1, 1.5), (np.inf, 0.5)]:
        with pytest.raises(ValueError):
            StepSizes(eta, lam)


def test_init_examples():
    cost = QuadraticCost([2.0, 1.0], np.diag([0.5, 1.0]))
    state = init(one_agent(cost, WholeSpace(2)), [[2.0, 1.0]])
    np.testing.assert_array_equal(state.y, [[0.0, 0.0]])
    assert state.round == 0
    np.testing.assert_array_equal(state.x, state.z)

    twin = ProblemInstance((cost, cost), WholeSpace(2))
    state = init(twin, [[4.0, 4.0], [4.0, 4.0]])
    np.testing.assert_array_equal(state.y[0], state.y[1])


def test_init_rejects_infeasible_start():
    problem = sample_problem(4, 2, seed=0)
    x0 = sample_initial_points(problem, seed=0)
    x0[2] = [100.0, 100.0]
    with pytest.raises(InfeasibleStartError) as info:
        init(problem, x0)
    assert info.value.index == 2


def test_single_agent_unconstrained_is_gradient_descent():
    cost = QuadraticCost([1.0, -1.0], [[1.0, 0.2], [0.2, 0.5]])
    problem = one_agent(cost, WholeSpace(2))
    pair = build_mixing(SINGLE[0])
    state = init(problem, [[3.0, 0.0]])
    s1 = step(state, pair, StepSizes(0.3, 1.0), problem)
    np.testing.assert_allclose(s1.z[0], state.x[0] - 0.3 * cost.gradient(state.x[0]), atol=1e-15)
    s2 = step(s1, pair, StepSizes(0.3, 1.0), problem)
    np.testing.assert_array_equal(s2.x, s1.z)


def test_single_agent_halfspace_jumps_to_optimum():
    L = 2.0
    problem = one_agent(QuadraticCost([0.0], [[L / 2]]), Halfspace([1.0], 1.0))
    state = init(problem, [[5.0]])
    nxt = step(state, build_mixing(SINGLE[0]), StepSizes(1.0 / L, 1.0), problem)
    assert nxt.z[0, 0] == 1.0


def test_symmetric_agents_stay_in_consensus():
    cost = QuadraticCost([3.0, 7.0], np.diag([0.4, 0.9]))
    problem = ProblemInstance((cost, cost), Halfspace([1.0, 0.0], 5.0))
    graphs = DigraphSequence((complete_digraph(2),))
    xstar = centralized_solve(problem)
    traj = run(problem, graphs, StepSizes(0.5, 0.7), [[6.0, 1.0], [6.0, 1.0]], 50, xstar, keep_states=True)
    for s in traj.states:
        np.testing.assert_allclose(s.x[0], s.x[1], atol=1e-14)
    assert np.all(traj.errors[:, 1] == 0.0)


def small_setup(n=8, seed=1):
    problem = sample_problem(n, 2, seed=seed)
    graphs = random_sequence(n, 0.4, 3, seed=seed)
    return problem, graphs, sample_initial_points(problem, seed=seed), centralized_solve(problem, tolerance=1e-13)


def test_engines_agree():
    problem, graphs, x0, xstar = small_setup()
    sizes = StepSizes(0.5, 0.5)
    a = run(problem, graphs, sizes, x0, 60, xstar, engine="vectorized", keep_states=True)
    b = run(problem, graphs, sizes, x0, 60, xstar, engine="sequential", keep_states=True)
    for sa, sb in zip(a.states, b.states):
        np.testing.assert_allclose(sa.z, sb.z, atol=1e-12)
        np.testing.assert_allclose(sa.y, sb.y, atol=1e-12)
    np.testing.assert_allclose(a.errors, b.errors, rtol=1e-9, atol=1e-13)


def test_sequential_runs_are_bitwise_identical():
    problem, graphs, x0, xstar = small_setup()
    csvs = [run(problem, graphs, StepSizes(0.5, 0.5), x0, 40, xstar, engine="sequential").to_csv() for _ in range(2)]
    assert csvs[0] == csvs[1]
    assert csvs[0].splitlines()[0] == "round,optimality,consensus,tracking,phi_mode"


def test_invariants_hold_every_round():
    problem, graphs, x0, xstar = small_setup(12, seed=5)
    traj = run(problem, graphs, StepSizes(0.5, 0.6), x0, 300, xstar, phi_mode="true")
    assert traj.feasibility.max() <= 1e-12
    assert traj.tracking_identity.max() <= 1e-9
    assert traj.errors[-1, 0] < 1e-6


def test_run_argument_checks():
    problem, graphs, x0, xstar = small_setup()
    with pytest.raises(ValueError):
        run(problem, graphs, StepSizes(0.5, 0.5), x0, 0, xstar)
    with pytest.raises(ValueError):
        run(problem, graphs, StepSizes(0.5, 0.5), x0, 5, xstar, phi_mode="other")
    with pytest.raises(ValueError):
        run(problem, DigraphSequence((generate_cycle(3),)), StepSizes(0.5, 0.5), x0, 5, xstar)
    with pytest.raises(ValueError):
        step(init(problem, x0), build_mixing(graphs[0]), StepSizes(0.5, 0.5), problem, engine="threads")


def test_divergence_is_reported_with_round():
    problem = sample_problem(15, 2, seed=0, constraint=WholeSpace(2))
    x0 = sample_initial_points(problem, seed=0)
    graphs = DigraphSequence((generate_cycle(15),))
    with pytest.raises(DivergenceError) as info:
        run(problem, graphs, StepSizes(0.5, 1.0), x0, 5000, centralized_solve(problem))
    err = info.value
    assert 0 < err.round_index <= 5000
    assert err.trajectory.rounds == err.round_index - 1


def test_stop_tolerance_truncates():
    problem, graphs, x0, xstar = small_setup()
    traj = run(problem, graphs, StepSizes(0.5, 0.6), x0, 5000, xstar, stop_tolerance=1e-8)
    assert traj.rounds < 5000
    assert traj.errors[-1, 0] < 1e-8 <= traj.errors[-2, 0]


def test_uniform_mode_flags_inexact_weights():
    problem, graphs, x0, xstar = small_setup()
    traj = run(problem, graphs, StepSizes(0.5, 0.5), x0, 5, xstar, phi_mode="uniform")
    assert not traj.phi_exact
    np.testing.assert_array_equal(traj.phis, 1 / 8)
    assert run(problem, graphs, StepSizes(0.5, 0.5), x0, 5, xstar).phi_exact


def test_pi_weights_follow_push_matrices():
    problem, graphs, x0, xstar = small_setup()
    traj = run(problem, graphs, StepSizes(0.5, 0.5), x0, 7, xstar)
    for k in range(7):
        np.testing.assert_allclose(traj.pis[k + 1], build_mixing(graphs[k]).c_matrix @ traj.pis[k], atol=1e-16)
    assert consensus_error(traj.final_state.x, traj.phis[-1]) == pytest.approx(traj.errors[-1, 1])
