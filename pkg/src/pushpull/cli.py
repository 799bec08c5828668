"""Command line front end: scenario files, presets, CSV output and exit codes.

Usage::

    pushpull run <config|preset> [--rounds N] [--seed S] [--phi-mode true|uniform]
                                 [--sequential] [--out DIR]
    pushpull certify <config|preset> [--seed S] [--out DIR]
    pushpull counterexamples [--out DIR]

Exit codes: 0 ok, 1 configuration error, 2 divergence, 3 certificate not
established, 4 counterexample bound violated.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import math
import re
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .analysis.certificate import build_certificate, sequence_constants
from .analysis.impossibility import (
    consensus_closed_forms,
    consensus_ratio_floor,
    reproduce_impossibility_consensus,
    reproduce_impossibility_pgd,
)
from .graph import (
    DigraphSequence,
    complete_digraph,
    generate_circulant,
    generate_cycle,
    generate_unbalanced,
    random_sequence,
)
from .problem import Ball, Box, Halfspace, WholeSpace, centralized_solve, sample_initial_points, sample_problem
from .protocol import PHI_MODES, DivergenceError, StepSizes, run

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGED = 2
EXIT_CERTIFICATE = 3
EXIT_COUNTEREXAMPLE = 4

GRAPH_FAMILIES = ("random", "cycle", "unbalanced", "circulant", "complete")
CONSTRAINTS = ("ball", "halfspace", "box", "none")
CERTIFICATE_COLUMNS = ("sigma", "tau", "r", "varphi", "psi", "rho", "lambda_max", "lambda_used")
COUNTEREXAMPLE_ETAS = (1.0, 0.1, 0.01, 0.001)
COUNTEREXAMPLE_PIS = ((0.75, 0.25), (0.6, 0.4))


class ConfigError(ValueError):
    """Invalid scenario file; ``line`` is 1-based when known."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None, source: str | None = None):
        self.field = field
        self.line = line
        self.source = source
        where = source or "<config>"
        if line is not None:
            where += f":{line}"
        if field is not None:
            where += f" [{field}]"
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class Scenario:
    agents: int
    dimension: int
    problem_seed: int
    constraint: str
    constraint_params: dict
    family: str
    p: float
    period: int
    graph_seed: int
    offsets: tuple
    eta: float
    lam: float
    rounds: int
    phi_mode: str = "true"
    init_seed: int | None = None
    stop_tolerance: float | None = None
    engine: str = "vectorized"
    out_dir: Path = field(default_factory=lambda: Path("."))
    source: str = "<config>"

    def build_problem(self):
        return sample_problem(self.agents, self.dimension, seed=self.problem_seed, constraint=self.build_constraint())

    def build_constraint(self):
        c, d = self.constraint_params, self.dimension
        if self.constraint == "ball":
            return Ball(c["center"], c["radius"])
        if self.constraint == "halfspace":
            return Halfspace(c["normal"], c["offset"])
        if self.constraint == "box":
            return Box(c["lower"], c["upper"])
        return WholeSpace(d)

    def build_graphs(self) -> DigraphSequence:
        n = self.agents
        if self.family == "random":
            return random_sequence(n, self.p, self.period, seed=self.graph_seed)
        if self.family == "cycle":
            g = generate_cycle(n)
        elif self.family == "unbalanced":
            g = generate_unbalanced(n, seed=self.graph_seed)
        elif self.family == "circulant":
            g = generate_circulant(n, self.offsets)
        else:
            g = complete_digraph(n)
        return DigraphSequence((g,))

    def initial_points(self, problem):
        seed = self.problem_seed if self.init_seed is None else self.init_seed
        return sample_initial_points(problem, seed=seed)


# ---------------------------------------------------------------------------
# Config parsing


def _line_index(text: str) -> dict:
    """``(section, key) -> line`` and ``(section, None) -> line`` for the header."""
    index = {}
    section = None
    for no, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if not s or s[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip()
            index[(section, None)] = no
            continue
        key = re.split(r"[=:]", s, maxsplit=1)[0].strip().lower()
        index[(section, key)] = no
    return index


class _Reader:
    """Typed access to one parsed file that reports the offending line."""

    def __init__(self, parser: configparser.ConfigParser, text: str, source: str):
        self.parser = parser
        self.lines = _line_index(text)
        self.source = source

    def error(self, section, key, message):
        line = self.lines.get((section, key), self.lines.get((section, None)))
        return ConfigError(message, f"{section}.{key}" if key else section, line, self.source)

    def raw(self, section, key, default=None):
        if not self.parser.has_section(section):
            if default is not None:
                return default
            raise ConfigError(f"missing section [{section}]", section, None, self.source)
        if not self.parser.has_option(section, key):
            if default is not None:
                return default
            raise self.error(section, None, f"missing required key '{key}'")
        return self.parser.get(section, key)

    def get(self, section, key, kind: Callable = str, default=None):
        value = self.raw(section, key, default)
        if not isinstance(value, str):
            return value
        try:
            return kind(value.strip())
        except ValueError:
            label = _KIND_NAMES.get(kind, kind.__name__)
            raise self.error(section, key, f"cannot read {value!r} as {label}") from None

    def vector(self, section, key, dimension):
        text = self.raw(section, key)
        try:
            v = [float(t) for t in text.split(",")]
        except ValueError:
            raise self.error(section, key, f"expected comma separated numbers, got {text!r}") from None
        if len(v) == 1:
            v = v * dimension
        if len(v) != dimension:
            raise self.error(section, key, f"expected {dimension} entries, got {len(v)}")
        return np.array(v)


def _finite(x):
    x = float(x)
    if not math.isfinite(x):
        raise ValueError("not finite")
    return x


_KIND_NAMES = {int: "an integer", _finite: "a finite number", str.lower: "text"}


def parse_config(text: str, source: str = "<config>") -> Scenario:
    """Parse and validate a scenario file given as text."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside any [section]", None, exc.lineno, source) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line, expected 'key = value'", None, line, source) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError("duplicate key", f"{exc.section}.{exc.option}", exc.lineno, source) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError("duplicate section", exc.section, exc.lineno, source) from None

    rd = _Reader(parser, text, source)
    known = {"problem", "graph", "run"}
    for section in parser.sections():
        if section not in known:
            raise rd.error(section, None, f"unknown section [{section}]")

    agents = rd.get("problem", "agents", int)
    dimension = rd.get("problem", "dimension", int)
    if agents < 1:
        raise rd.error("problem", "agents", "must be >= 1")
    if dimension < 1:
        raise rd.error("problem", "dimension", "must be >= 1")
    problem_seed = rd.get("problem", "seed", int)
    init_seed = rd.get("problem", "init_seed", int, default=-1)
    constraint = rd.get("problem", "constraint", str.lower, default="ball")
    if constraint not in CONSTRAINTS:
        raise rd.error("problem", "constraint", f"must be one of {', '.join(CONSTRAINTS)}")
    params = {}
    if constraint == "ball":
        params["center"] = rd.vector("problem", "center", dimension)
        params["radius"] = rd.get("problem", "radius", _finite)
        if params["radius"] <= 0:
            raise rd.error("problem", "radius", "must be positive")
    elif constraint == "halfspace":
        params["normal"] = rd.vector("problem", "normal", dimension)
        params["offset"] = rd.get("problem", "offset", _finite)
        if not np.any(params["normal"]):
            raise rd.error("problem", "normal", "must be nonzero")
    elif constraint == "box":
        params["lower"] = rd.vector("problem", "lower", dimension)
        params["upper"] = rd.vector("problem", "upper", dimension)
        if np.any(params["lower"] > params["upper"]):
            raise rd.error("problem", "upper", "must be >= lower in every coordinate")

    family = rd.get("graph", "family", str.lower)
    if family not in GRAPH_FAMILIES:
        raise rd.error("graph", "family", f"must be one of {', '.join(GRAPH_FAMILIES)}")
    period = rd.get("graph", "period", int, default=1)
    if period < 1:
        raise rd.error("graph", "period", "must be >= 1")
    if family != "random" and period != 1:
        raise rd.error("graph", "period", f"family '{family}' is static, period must be 1")
    p = rd.get("graph", "p", _finite, default=1.0 if family != "random" else None)
    if family == "random" and not 0 < p <= 1:
        raise rd.error("graph", "p", "must lie in (0, 1]")
    graph_seed = rd.get("graph", "seed", int, default=0 if family in ("cycle", "circulant", "complete") else None)
    offsets = ()
    if family == "circulant":
        text = rd.raw("graph", "offsets")
        try:
            offsets = tuple(int(t) for t in text.split(","))
        except ValueError:
            raise rd.error("graph", "offsets", f"expected comma separated integers, got {text!r}") from None
    if family == "unbalanced" and agents < 3:
        raise rd.error("problem", "agents", "unbalanced graphs need at least 3 agents")
    if family in ("random", "cycle") and agents < 2:
        raise rd.error("problem", "agents", f"{family} graphs need at least 2 agents")

    eta = rd.get("run", "eta", _finite)
    if eta <= 0:
        raise rd.error("run", "eta", "must be > 0")
    lam = rd.get("run", "lambda", _finite)
    if not 0 < lam <= 1:
        raise rd.error("run", "lambda", "must lie in (0, 1]")
    rounds = rd.get("run", "rounds", int)
    if rounds < 1:
        raise rd.error("run", "rounds", "must be >= 1")
    phi_mode = rd.get("run", "phi_mode", str.lower, default="true")
    if phi_mode not in PHI_MODES:
        raise rd.error("run", "phi_mode", "must be 'true' or 'uniform'")
    stop = rd.get("run", "stop_tolerance", _finite, default=-1.0)

    return Scenario(
        agents=agents,
        dimension=dimension,
        problem_seed=problem_seed,
        constraint=constraint,
        constraint_params=params,
        family=family,
        p=p,
        period=period,
        graph_seed=graph_seed,
        offsets=offsets,
        eta=eta,
        lam=lam,
        rounds=rounds,
        phi_mode=phi_mode,
        init_seed=None if init_seed < 0 else init_seed,
        stop_tolerance=stop if stop > 0 else None,
        source=source,
    )


def preset_names() -> list[str]:
    return sorted(p.name[:-4] for p in resources.files("pushpull.presets").iterdir() if p.name.endswith(".ini"))


def load_scenario(name_or_path: str) -> Scenario:
    """Read a scenario from a file path, or from a bundled preset by name."""
    path = Path(name_or_path)
    if path.is_file():
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(str(exc), source=str(path)) from None
        return parse_config(text, str(path))
    preset = resources.files("pushpull.presets").joinpath(f"{name_or_path}.ini")
    if preset.is_file():
        return parse_config(preset.read_text(), f"preset:{name_or_path}")
    raise ConfigError(
        f"no such file or preset (presets: {', '.join(preset_names())})", source=name_or_path
    )


# ---------------------------------------------------------------------------
# Commands


def write_certificate_csv(path: Path, cert) -> None:
    row = cert.as_row()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CERTIFICATE_COLUMNS)
        writer.writerow([repr(float(row[c])) for c in CERTIFICATE_COLUMNS])


def scenario_certificate(scenario: Scenario, problem, graphs):
    return build_certificate(sequence_constants(graphs), problem.mu, problem.lipschitz, scenario.eta, scenario.lam)


def run_scenario(scenario: Scenario, log=print) -> int:
    problem = scenario.build_problem()
    graphs = scenario.build_graphs()
    x0 = scenario.initial_points(problem)
    xstar = centralized_solve(problem, tolerance=1e-13)
    out = Path(scenario.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_certificate_csv(out / "certificate.csv", scenario_certificate(scenario, problem, graphs))
    try:
        traj = run(
            problem, graphs, StepSizes(scenario.eta, scenario.lam), x0, scenario.rounds, xstar,
            phi_mode=scenario.phi_mode, engine=scenario.engine, stop_tolerance=scenario.stop_tolerance,
        )
    except DivergenceError as exc:
        if exc.trajectory is not None:
            (out / "trajectory.csv").write_text(exc.trajectory.to_csv())
        log(f"diverged at round {exc.round_index}")
        return EXIT_DIVERGED
    (out / "trajectory.csv").write_text(traj.to_csv())
    opt, cons, track = traj.error_triple(traj.rounds)
    log(f"rounds={traj.rounds} optimality={opt:.3e} consensus={cons:.3e} tracking={track:.3e}")
    return EXIT_OK


def certify_scenario(scenario: Scenario, log=print) -> int:
    problem = scenario.build_problem()
    n, lip = problem.n_agents, problem.lipschitz
    if not scenario.eta < 1.0 / (n * lip):
        raise ConfigError(
            f"eta = {scenario.eta} violates eta < 1/(nL) = {1.0 / (n * lip):.6g}", "run.eta", source=scenario.source
        )
    cert = scenario_certificate(scenario, problem, scenario.build_graphs())
    out = Path(scenario.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_certificate_csv(out / "certificate.csv", cert)
    log(f"rho={cert.rho:.6g} lambda_max={cert.lambda_max:.6g} lambda_used={cert.lam:.6g}")
    if cert.certified:
        return EXIT_OK
    log("convergence not guaranteed by the certificate (the run may still converge)")
    return EXIT_CERTIFICATE


def verify_counterexamples(
    etas: Sequence[float] = COUNTEREXAMPLE_ETAS,
    pis: Sequence[tuple] = COUNTEREXAMPLE_PIS,
    closed_forms: Callable = consensus_closed_forms,
    L: float = 1.0,
    pgd_start: float = 2.0,
    tol: float = 1e-12,
) -> list[dict]:
    """Run both counterexample reproductions over the step-size grid.

    Returns one record per check with keys ``eta``, ``quantity``, ``value``,
    ``bound`` and ``ok``.
    """
    rows = []
    for eta in etas:
        ratio = reproduce_impossibility_pgd(L, eta, pgd_start)
        rows.append(dict(eta=eta, quantity="pgd_ratio", value=ratio, bound=1.0, ok=ratio >= 1.0 - tol))
        for pi1, pi2 in pis:
            tag = f"pi=({pi1:g},{pi2:g})"
            disagreement, gap = reproduce_impossibility_consensus(L, eta, pi1, pi2)
            d_ref, gap_ref = closed_forms(L, eta, pi1, pi2)
            floor = consensus_ratio_floor(pi1, pi2)
            rows.append(dict(eta=eta, quantity=f"gap {tag}", value=gap, bound=gap_ref, ok=abs(gap - gap_ref) <= tol))
            rows.append(dict(eta=eta, quantity=f"disagreement {tag}", value=disagreement, bound=d_ref,
                             ok=abs(disagreement - d_ref) <= tol))
            rows.append(dict(eta=eta, quantity=f"ratio {tag}", value=disagreement / gap, bound=floor,
                             ok=disagreement / gap >= floor - tol))
    return rows


def counterexamples_command(out_dir: Path | None = None, log=print, **kwargs) -> int:
    rows = verify_counterexamples(**kwargs)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "counterexamples.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["eta", "quantity", "value", "bound", "ok"])
            for r in rows:
                writer.writerow([repr(r["eta"]), r["quantity"], repr(float(r["value"])), repr(float(r["bound"])), int(r["ok"])])
    failed = [r for r in rows if not r["ok"]]
    for r in failed:
        log(f"FAIL eta={r['eta']:g} {r['quantity']}: {r['value']!r} vs {r['bound']!r}")
    log(f"{len(rows) - len(failed)}/{len(rows)} counterexample checks passed")
    return EXIT_COUNTEREXAMPLE if failed else EXIT_OK


# ---------------------------------------------------------------------------
# Entry point


def _apply_overrides(scenario: Scenario, args) -> Scenario:
    changes = {"out_dir": Path(args.out)}
    if getattr(args, "rounds", None) is not None:
        if args.rounds < 1:
            raise ConfigError("must be >= 1", "--rounds")
        changes["rounds"] = args.rounds
    if args.seed is not None:
        changes.update(problem_seed=args.seed, graph_seed=args.seed, init_seed=None)
    if getattr(args, "phi_mode", None) is not None:
        changes["phi_mode"] = args.phi_mode
    if getattr(args, "sequential", False):
        changes["engine"] = "sequential"
    return replace(scenario, **changes)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pushpull", description="Projected push-pull simulator and certificates.")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="override every seed in the scenario")
    common.add_argument("--out", default=".", help="output directory (default: current)")

    p_run = sub.add_parser("run", parents=[common], help="simulate a scenario")
    p_run.add_argument("config", help="scenario file or preset name")
    p_run.add_argument("--rounds", type=int)
    p_run.add_argument("--phi-mode", choices=PHI_MODES)
    p_run.add_argument("--sequential", action="store_true", help="per-agent reference engine (bitwise reproducible)")

    p_cert = sub.add_parser("certify", parents=[common], help="compute the convergence certificate only")
    p_cert.add_argument("config", help="scenario file or preset name")

    p_ce = sub.add_parser("counterexamples", help="check the lazy-step counterexamples")
    p_ce.add_argument("--out", default=None, help="also write counterexamples.csv here")

    sub.add_parser("presets", help="list bundled presets")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors, which would collide with divergence
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        if args.command == "counterexamples":
            return counterexamples_command(args.out)
        if args.command == "presets":
            print("\n".join(preset_names()))
            return EXIT_OK
        scenario = _apply_overrides(load_scenario(args.config), args)
        if args.command == "run":
            return run_scenario(scenario)
        return certify_scenario(scenario)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
