"""End-to-end acceptance checks, one test per criterion.

Each test prints a ``criterion N: PASS|FAIL`` line (also repeated in the
pytest terminal summary) before asserting. Run on its own with::

    pytest tests/test_acceptance.py -v
    python tests/test_acceptance.py
"""

import math
import time
from dataclasses import replace

import mpmath
import numpy as np
import pytest

from conftest import record
from pushpull import (
    Ball,
    Digraph,
    DigraphSequence,
    Halfspace,
    ProblemInstance,
    QuadraticCost,
    StepSizes,
    WholeSpace,
    centralized_solve,
    generate_circulant,
    generate_cycle,
    generate_random,
    generate_unbalanced,
    log_linear_fit,
    run,
    sample_initial_points,
    sample_problem,
)
from pushpull.analysis import (
    certify,
    check_composite,
    composite_matrix,
    consensus_closed_forms,
    contraction_sigma,
    contraction_tau,
    determinant3,
    lambda_bound,
    reproduce_impossibility_consensus,
    sequence_constants,
    spectral_radius,
    spectral_radius_power,
    stability_minors,
)
from pushpull.cli import load_scenario, main
from pushpull.mixing import build_mixing

R2_MIN = 0.99
SERIES = ("optimality", "consensus", "tracking")


def simulate(scenario):
    problem = scenario.build_problem()
    graphs = scenario.build_graphs()
    xstar = centralized_solve(problem, tolerance=1e-13)
    return run(
        problem, graphs, StepSizes(scenario.eta, scenario.lam), scenario.initial_points(problem),
        scenario.rounds, xstar, phi_mode=scenario.phi_mode, engine=scenario.engine,
        stop_tolerance=scenario.stop_tolerance,
    )


def fits(traj):
    return [log_linear_fit(traj.errors[:, j])[1] for j in range(3)]


_timevarying = {}


def timevarying_run():
    # shared by criteria 1, 3 and 4
    if not _timevarying:
        t0 = time.perf_counter()
        traj = simulate(load_scenario("sec6-timevarying"))
        _timevarying["traj"] = traj
        _timevarying["seconds"] = time.perf_counter() - t0
    return _timevarying["traj"], _timevarying["seconds"]


def test_criterion_01_timevarying_geometric():
    traj, seconds = timevarying_run()
    r2 = fits(traj)
    hit = traj.first_round_below(1e-6)
    ok = min(r2) >= R2_MIN and hit is not None and hit <= 5000 and seconds < 10
    detail = ", ".join(f"R2[{s}]={v:.5f}" for s, v in zip(SERIES, r2))
    record(1, ok, f"{detail}; gap<1e-6 at round {hit}; {seconds:.2f}s")
    assert ok


def test_criterion_02_graph_families():
    t0 = time.perf_counter()
    runs = {name: simulate(load_scenario(f"sec6-graphs-{name}")) for name in ("random", "unbalanced", "cyclic")}
    seconds = time.perf_counter() - t0
    parts = []
    ok = seconds < 10
    for name, traj in runs.items():
        r2 = min(fits(traj))
        ok &= r2 >= R2_MIN
        parts.append(f"{name}: min R2={r2:.5f}, 1e-6 at {traj.first_round_below(1e-6)}")
    hits = {k: v.first_round_below(1e-6) for k, v in runs.items()}
    ok &= None not in hits.values() and hits["random"] < hits["cyclic"]
    record(2, ok, "; ".join(parts) + f"; {seconds:.2f}s")
    assert ok


def test_criterion_03_feasibility():
    traj, _ = timevarying_run()
    worst = float(traj.feasibility.max())
    ok = worst <= 1e-12
    record(3, ok, f"max constraint residual {worst:.2e} over {traj.rounds + 1} rounds")
    assert ok


def test_criterion_04_tracking_identity():
    traj, _ = timevarying_run()
    worst = float(traj.tracking_identity.max())
    ok = worst <= 1e-9
    record(4, ok, f"max relative tracking-identity error {worst:.2e}")
    assert ok


def test_criterion_05_composite_relation():
    n = 10
    graphs = DigraphSequence((generate_circulant(n, (1, 2)),))
    problem = sample_problem(n, 2, seed=3)
    eta = 0.5 / (n * problem.lipschitz)
    c = sequence_constants(graphs)
    args = (c["sigma"], c["tau"], c["r"], c["varphi"], c["psi"], problem.mu, n, eta, problem.lipschitz)
    # below both the published and the exact bound
    lam = 0.5 * min(lambda_bound(*args), lambda_bound(*args, form="exact"))
    cert = certify(problem, graphs, eta, lam)
    xstar = centralized_solve(problem, tolerance=1e-13)
    traj = run(problem, graphs, StepSizes(eta, lam), sample_initial_points(problem, 3), 1000, xstar, phi_mode="true")
    checks = check_composite(traj, cert)
    ok = len(checks) >= 1000 and all(checks)
    record(5, ok, f"{sum(checks)}/{len(checks)} rounds satisfy e[k+1] <= M e[k] (lambda={lam:.3e})")
    assert ok


def random_certificate_inputs(rng):
    n = int(rng.integers(1, 51))
    sigma, tau = rng.uniform(0.01, 0.999, 2)
    phi = rng.dirichlet(np.ones(n))
    pi = rng.dirichlet(np.ones(n))
    L = rng.uniform(0.1, 10.0)
    mu = L * rng.uniform(0.01, 1.0)
    eta = rng.uniform(0.01, 0.99) / (n * L)
    return dict(
        sigma=sigma, tau=tau, r=math.sqrt(1 / pi.min()) + math.sqrt(n), varphi=math.sqrt(1 / phi.min()),
        psi=pi.min(), mu=mu, n=n, eta=eta, L=L,
    )


def high_precision_verdict(p, lam):
    """``(rho < 1, det(M - I) < 0)`` with the matrix built and analysed at 60 digits."""
    with mpmath.workdps(60):
        keys = ("sigma", "tau", "r", "varphi", "psi", "mu", "L", "eta")
        s, t, r, f, psi, mu, L, eta = (mpmath.mpf(float(p[k])) for k in keys)
        lam_ = mpmath.mpf(float(lam))
        n = p["n"]
        sn = mpmath.sqrt(n)
        m = mpmath.matrix([
            [1 - eta * lam_ * n * psi * mu, lam_ * f * sn, lam_ / L],
            [2 * lam_, s + 2 * lam_ * sn * f, 2 * lam_ / L],
            [2 * lam_ * L * r * f, L * r * f * (1 + s) + lam_ * L * r * f**2 * sn, t + lam_ * r * f],
        ])
        rho = max(abs(e) for e in mpmath.eig(m, left=False, right=False))
        det = mpmath.det(m - mpmath.eye(3))
        return bool(rho < 1), bool(det < 0)


def sweep_certificates(form, count=100, seed=2024):
    rng = np.random.default_rng(seed)
    stable = negative_det = 0
    worst_agreement = 0.0
    for _ in range(count):
        p = random_certificate_inputs(rng)
        lam = 0.99 * lambda_bound(p["sigma"], p["tau"], p["r"], p["varphi"], p["psi"], p["mu"], p["n"], p["eta"], p["L"],
                                  form=form)
        m = composite_matrix(p["sigma"], p["tau"], p["r"], p["varphi"], p["psi"], p["mu"], p["L"], p["n"], p["eta"], lam)
        worst_agreement = max(worst_agreement, abs(spectral_radius(m) - spectral_radius_power(m)))
        rho_ok, det_ok = high_precision_verdict(p, lam)
        stable += rho_ok
        negative_det += det_ok
    return stable, negative_det, worst_agreement


def test_criterion_06_certificate_sweep():
    stable, negative_det, agreement = sweep_certificates("published")
    ok = stable == 100 and negative_det == 100 and agreement <= 1e-9
    # informational: the same sweep with the determinant constant recomputed
    ex_stable, ex_det, _ = sweep_certificates("exact")
    record(
        6, ok,
        f"published bound: rho<1 in {stable}/100, det(M-I)<0 in {negative_det}/100; "
        f"cubic vs power max diff {agreement:.1e}; (exact-constant bound: {ex_stable}/100, {ex_det}/100)",
    )
    assert ok


def test_criterion_07_contractions():
    rng = np.random.default_rng(7)
    worst3 = worst4 = -math.inf
    coeffs = []
    for _ in range(100):
        n = int(rng.integers(3, 13))
        kind = rng.integers(3)
        if kind == 0:
            g = generate_random(n, rng.uniform(0.2, 0.8), rng)
        elif kind == 1:
            g = generate_cycle(n)
        else:
            g = generate_unbalanced(n, rng)
        pair = build_mixing(g)
        d = int(rng.integers(1, 4))
        # contraction on R: phi' arbitrary positive, phi = R^T phi'
        phi_next = rng.dirichlet(np.ones(n))
        phi = phi_next @ pair.r_matrix
        z = rng.normal(size=(n, d)) * rng.uniform(0.1, 10)
        x = pair.r_matrix @ z
        s = contraction_sigma(g, pair, phi, phi_next)
        lhs = math.sqrt(phi_next @ np.sum((x - phi_next @ x) ** 2, axis=1))
        rhs = s * math.sqrt(phi @ np.sum((z - phi @ z) ** 2, axis=1))
        worst3 = max(worst3, lhs - rhs)
        # contraction on C
        pi = rng.dirichlet(np.ones(n))
        pi_next = pair.c_matrix @ pi
        y = rng.normal(size=(n, d))
        v = pair.c_matrix @ y
        total = y.sum(axis=0)
        t = contraction_tau(g, pair, pi, pi_next)
        lhs = math.sqrt(pi_next @ np.sum((v / pi_next[:, None] - total) ** 2, axis=1))
        rhs = t * math.sqrt(pi @ np.sum((y / pi[:, None] - total) ** 2, axis=1))
        worst4 = max(worst4, lhs - rhs)
        coeffs += [s, t]

    worst_pgd = worst_lazy = -math.inf
    for k in range(1000):
        problem = sample_problem(int(rng.integers(1, 6)), 2, seed=int(rng.integers(1 << 30)),
                                 constraint=Ball(rng.uniform(-3, 3, 2), rng.uniform(0.5, 3)))
        eta = rng.uniform(0.01, 0.99) * 2.0 / (problem.mu + problem.lipschitz)
        lam = rng.uniform(0.01, 1.0)
        a, b = rng.uniform(-10, 10, (2, 2))
        dist = np.linalg.norm(a - b)
        tp = np.linalg.norm(problem.projected_gradient_map(a, eta) - problem.projected_gradient_map(b, eta))
        tl = np.linalg.norm(problem.projected_gradient_map(a, eta, lam) - problem.projected_gradient_map(b, eta, lam))
        worst_pgd = max(worst_pgd, tp - (1 - eta * problem.mu) * dist)
        worst_lazy = max(worst_lazy, tl - (1 - lam * eta * problem.mu) * dist)

    in_range = all(0 < c < 1 for c in coeffs)
    ok = worst3 <= 1e-10 and worst4 <= 1e-10 and in_range and worst_pgd <= 1e-10 and worst_lazy <= 1e-10
    record(
        7, ok,
        f"R contraction worst slack {worst3:.2e}, C contraction {worst4:.2e}, sigma/tau in (0,1): {in_range}, "
        f"PGD {worst_pgd:.2e}, lazy {worst_lazy:.2e}",
    )
    assert ok


def test_criterion_08_counterexamples(capsys):
    code = main(["counterexamples"])
    capsys.readouterr()
    # literal closed forms as published for the two-agent construction
    literal_worst = 0.0
    derived_worst = 0.0
    for pi1, pi2 in ((0.75, 0.25), (0.6, 0.4)):
        for eta in (0.1, 0.01, 0.001):
            L = 1.0
            disagreement, gap = reproduce_impossibility_consensus(L, eta, pi1, pi2)
            gap_lit = eta * L * pi1 / (1 - eta * L)
            d_lit = eta * L * (pi1 - pi2) / (math.sqrt(2) * (1 - eta * L))
            literal_worst = max(literal_worst, abs(gap - gap_lit), abs(disagreement - d_lit))
            d_ref, gap_ref = consensus_closed_forms(L, eta, pi1, pi2)
            derived_worst = max(derived_worst, abs(gap - gap_ref), abs(disagreement - d_ref))
    ok = code == 0 and literal_worst <= 1e-12
    record(
        8, ok,
        f"counterexamples exit {code}; published two-agent closed forms off by up to {literal_worst:.2e} "
        f"(with denominator 1 - eta L pi1: {derived_worst:.1e})",
    )
    assert ok


def single_agent_deviation(problem, x0, eta, rounds=100):
    graphs = DigraphSequence((Digraph(1, frozenset()),))
    xstar = centralized_solve(problem, tolerance=1e-13)
    traj = run(problem, graphs, StepSizes(eta, 1.0), x0, rounds, xstar, keep_states=True)
    x = np.asarray(x0, dtype=float).reshape(-1)
    worst = 0.0
    for state in traj.states[1:]:
        x = problem.projected_gradient_map(x, eta)
        worst = max(worst, float(np.abs(state.z[0] - x).max()), float(np.abs(state.x[0] - traj.states[state.round - 1].z[0]).max()))
    return worst


def test_criterion_09_single_agent():
    cases = []
    cost = QuadraticCost([1.0, -2.0], [[0.8, 0.1], [0.1, 0.3]])
    cases.append((ProblemInstance((cost,), WholeSpace(2)), [[5.0, 5.0]], 0.4))
    cases.append((ProblemInstance((cost,), Halfspace([1.0, 1.0], 2.0)), [[4.0, 1.0]], 0.4))
    cases.append((ProblemInstance((QuadraticCost([0.0], [[0.5]]),), Halfspace([1.0], 1.0)), [[7.0]], 0.3))
    worst = max(single_agent_deviation(p, x0, eta) for p, x0, eta in cases)
    ok = worst <= 1e-14
    record(9, ok, f"max deviation from centralized projected gradient over 100 rounds: {worst:.1e}")
    assert ok


def test_criterion_10_determinism(tmp_path, capsys):
    codes = [main(["run", "sec6-timevarying", "--sequential", "--out", str(tmp_path / f"r{i}")]) for i in range(2)]
    capsys.readouterr()
    a = (tmp_path / "r0" / "trajectory.csv").read_bytes()
    b = (tmp_path / "r1" / "trajectory.csv").read_bytes()
    ok = codes == [0, 0] and a == b and len(a) > 0
    record(10, ok, f"exit codes {codes}; trajectory.csv identical: {a == b} ({len(a)} bytes)")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
