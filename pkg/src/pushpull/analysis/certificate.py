"""Convergence certificate: contraction coefficients, the 3x3 error-coupling
matrix, its spectral radius and the admissible range of the lazy step."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..graph import Digraph, DigraphSequence, diameter, max_edge_utility
from ..mixing import (
    MixingPair,
    build_mixing,
    min_positive_entry,
    phi_sequence_periodic,
    pi_sequence,
)


# ---------------------------------------------------------------------------
# Per-round contraction coefficients


def contraction_sigma(g: Digraph, pair: MixingPair, phi_now, phi_next, tol: float = 1e-10) -> float:
    """Contraction factor of the pull step ``x = R z`` in the weighted norms.

    ``phi_next`` must satisfy ``phi_next^T R = phi_now^T``.
    """
    phi_now = np.asarray(phi_now, dtype=float)
    phi_next = np.asarray(phi_next, dtype=float)
    residual = np.abs(phi_next @ pair.r_matrix - phi_now).max()
    if residual > tol:
        raise ValueError(f"phi pair inconsistent with R (residual {residual:.2e})")
    return _sigma_value(
        phi_next.min(), pair.r_min, phi_now.max(), diameter(g), max_edge_utility(g)
    )


def _sigma_value(min_phi_next, r_min, max_phi_now, diam, util) -> float:
    return math.sqrt(1.0 - min_phi_next * r_min**2 / (max_phi_now**2 * diam * util))


def contraction_tau(g: Digraph, pair: MixingPair, pi_now, pi_next, tol: float = 1e-10) -> float:
    """Contraction factor of the push step ``v = C y``; needs ``pi_next = C pi_now``."""
    pi_now = np.asarray(pi_now, dtype=float)
    pi_next = np.asarray(pi_next, dtype=float)
    residual = np.abs(pair.c_matrix @ pi_now - pi_next).max()
    if residual > tol:
        raise ValueError(f"pi pair inconsistent with C (residual {residual:.2e})")
    return _tau_value(
        pi_now.min(), pair.c_min, pi_now.max(), pi_next.max(), diameter(g), max_edge_utility(g)
    )


def _tau_value(min_pi, c_min, max_pi, max_pi_next, diam, util) -> float:
    return math.sqrt(1.0 - min_pi**2 * c_min**2 / (max_pi**2 * max_pi_next * diam * util))


# ---------------------------------------------------------------------------
# Composite matrix and step-size bound


def composite_matrix(sigma, tau, r, varphi, psi, mu, L, n, eta, lam) -> np.ndarray:
    """Matrix ``M`` with ``e[k+1] <= M e[k]`` for the error vector
    (optimality gap, consensus error, tracking error). Requires ``eta < 1/L``."""
    if not 0 < eta < 1.0 / L:
        raise ValueError(f"eta must lie in (0, 1/L) = (0, {1.0 / L}), got {eta}")
    sn = math.sqrt(n)
    return np.array(
        [
            [1.0 - eta * lam * n * psi * mu, lam * varphi * sn, lam / L],
            [2.0 * lam, sigma + 2.0 * lam * sn * varphi, 2.0 * lam / L],
            [
                2.0 * lam * L * r * varphi,
                L * r * varphi * (1.0 + sigma) + lam * L * r * varphi**2 * sn,
                tau + lam * r * varphi,
            ],
        ]
    )


LAMBDA_FORMS = ("published", "exact")


def lambda_k_constant(sigma, tau, r, varphi, psi, mu, n, eta, form: str = "published") -> float:
    """The constant ``K`` in the third branch of :func:`lambda_bound`.

    ``form="published"`` is the usual closed form
    ``(1 + a) varphi [2 sqrt(n)(1 - tau) + r(1 - sigma) + 2 r(1 + sigma)]``
    with ``a = eta n psi mu``. Expanding ``det(M - I)`` directly gives
    ``-lam [a (1 - sigma)(1 - tau) - lam K']`` with no cubic term and
    ``K' = K + r varphi (1 - sigma)``; ``form="exact"`` returns ``K'``.
    """
    if form not in LAMBDA_FORMS:
        raise ValueError(f"form must be one of {LAMBDA_FORMS}")
    a = eta * n * psi * mu
    k = (1.0 + a) * varphi * (2.0 * math.sqrt(n) * (1.0 - tau) + r * (1.0 - sigma) + 2.0 * r * (1.0 + sigma))
    if form == "exact":
        k += r * varphi * (1.0 - sigma)
    return k


def lambda_bound(sigma, tau, r, varphi, psi, mu, n, eta, L, form: str = "published") -> float:
    """Upper limit on the lazy step from the diagonal and determinant
    conditions on the composite matrix.

    Requires ``0 < eta < 1/(n L)``. With ``form="exact"`` any ``lam``
    strictly below the returned value keeps the diagonal of ``M`` below one
    and ``det(M - I) < 0``, hence ``rho(M) < 1``. The published constant
    (the default) is smaller than the exact one, so its bound can be too
    large when the determinant branch is the active one; see
    :func:`lambda_k_constant`.
    """
    if not 0 < eta < 1.0 / (n * L):
        raise ValueError(f"eta must lie in (0, 1/(nL)) = (0, {1.0 / (n * L)}), got {eta}")
    sn = math.sqrt(n)
    a = eta * n * psi * mu
    K = lambda_k_constant(sigma, tau, r, varphi, psi, mu, n, eta, form)
    return min(
        (1.0 - sigma) / (2.0 * varphi * sn),
        (1.0 - tau) / (r * varphi),
        a * (1.0 - sigma) * (1.0 - tau) / K,
    )


def stability_minors(sigma, tau, r, varphi, psi, mu, n, eta, lam) -> tuple[float, float, float]:
    """Leading principal minors of ``I - M`` in closed form.

    ``M`` is entrywise positive for ``lam > 0``, so ``rho(M) < 1`` exactly
    when all three minors are positive. Unlike the eigenvalues of ``M``,
    these stay accurate when ``1 - rho`` is far below machine epsilon.
    """
    sn = math.sqrt(n)
    a = eta * n * psi * mu
    d1 = lam * a
    d2 = lam * a * (1.0 - sigma - 2.0 * lam * sn * varphi) - 2.0 * lam * lam * varphi * sn
    k = lambda_k_constant(sigma, tau, r, varphi, psi, mu, n, eta, form="exact")
    d3 = lam * (a * (1.0 - sigma) * (1.0 - tau) - lam * k)
    return d1, d2, d3


# ---------------------------------------------------------------------------
# Spectral radius of a 3x3 matrix


def characteristic_coefficients(m) -> tuple[float, float, float]:
    """``(trace, sum of principal 2x2 minors, det)`` of a 3x3 matrix, so that
    ``det(tI - m) = t^3 - c1 t^2 + c2 t - c3``."""
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        raise ValueError("expected a 3x3 matrix")
    c1 = m[0, 0] + m[1, 1] + m[2, 2]
    c2 = (
        m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        + m[0, 0] * m[2, 2] - m[0, 2] * m[2, 0]
        + m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1]
    )
    c3 = (
        m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
        - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
        + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0])
    )
    return float(c1), float(c2), float(c3)


def determinant3(m) -> float:
    return characteristic_coefficients(m)[2]


def _polish(root: float, b: float, c: float, d: float, iters: int = 100) -> float:
    # Newton on t^3 + b t^2 + c t + d; linear convergence at repeated roots
    x = root
    for _ in range(iters):
        f = ((x + b) * x + c) * x + d
        fp = (3.0 * x + 2.0 * b) * x + c
        if fp == 0.0 or f == 0.0:
            break
        dx = f / fp
        x_new = x - dx
        if abs(x_new - x) <= 1e-16 * max(1.0, abs(x)):
            x = x_new
            break
        if abs(((x_new + b) * x_new + c) * x_new + d) >= abs(f):
            break
        x = x_new
    return x


def cubic_roots(b: float, c: float, d: float) -> list[complex]:
    """Roots of ``t^3 + b t^2 + c t + d`` in closed form (real roots polished)."""
    shift = b / 3.0
    p = c - b * b / 3.0
    q = 2.0 * b**3 / 27.0 - b * c / 3.0 + d
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    if p == 0.0 and q == 0.0:
        reals = [-shift] * 3
        return [complex(x) for x in reals]
    if disc <= 0.0:
        # three real roots, trigonometric form
        rad = 2.0 * math.sqrt(-p / 3.0)
        arg = (3.0 * q / (p * rad)) if p != 0.0 else 0.0
        arg = max(-1.0, min(1.0, arg))
        theta = math.acos(arg) / 3.0
        reals = [rad * math.cos(theta - 2.0 * math.pi * k / 3.0) - shift for k in range(3)]
        return [complex(_polish(x, b, c, d)) for x in reals]
    sq = math.sqrt(disc)
    u = math.copysign(abs(-q / 2.0 + sq) ** (1.0 / 3.0), -q / 2.0 + sq)
    v = math.copysign(abs(-q / 2.0 - sq) ** (1.0 / 3.0), -q / 2.0 - sq)
    real = _polish(u + v - shift, b, c, d)
    # deflate: remaining quadratic t^2 + (b + real) t + (c + real (b + real))
    bb = b + real
    cc = c + real * bb
    s = cmath.sqrt(bb * bb - 4.0 * cc)
    return [complex(real), (-bb + s) / 2.0, (-bb - s) / 2.0]


def spectral_radius(m) -> float:
    """Largest eigenvalue modulus of a 3x3 matrix via its characteristic cubic."""
    c1, c2, c3 = characteristic_coefficients(m)
    return max(abs(z) for z in cubic_roots(-c1, c2, -c3))


def spectral_radius_power(m, squarings: int = 64) -> float:
    """Perron root of a nonnegative square matrix by power iteration.

    The iterate ``m^(2^s) 1`` is formed by repeated squaring (renormalized
    each time), then the radius is read off as ``||m v|| / ||v||``.
    """
    m = np.asarray(m, dtype=float)
    if np.any(m < 0):
        raise ValueError("power iteration cross-check requires a nonnegative matrix")
    scale = np.abs(m).max()
    if scale == 0.0:
        return 0.0
    a = m / scale
    for _ in range(squarings):
        a = a @ a
        top = np.abs(a).max()
        if top == 0.0:
            return 0.0
        a /= top
    v = a @ np.ones(m.shape[0])
    nv = np.linalg.norm(v)
    if nv == 0.0:
        return 0.0
    v /= nv
    for _ in range(3):
        w = m @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
    return float(np.linalg.norm(m @ v))


# ---------------------------------------------------------------------------
# Certificate for a graph sequence


@dataclass(frozen=True)
class ConvergenceCertificate:
    sigma: float
    tau: float
    r: float
    varphi: float
    psi: float
    mu: float
    lipschitz: float
    n: int
    eta: float
    lam: float
    m_matrix: np.ndarray | None
    rho: float
    lambda_max: float
    stable: bool = False

    @property
    def certified(self) -> bool:
        """Stable composite matrix and lazy step inside the admissible range.

        Stability is decided by :func:`stability_minors` rather than by
        ``rho < 1`` in floating point, which cannot resolve the tiny
        margins typical of admissible ``lam``.
        """
        return bool(self.lam < self.lambda_max and self.stable)

    def as_row(self) -> dict:
        return {
            "sigma": self.sigma,
            "tau": self.tau,
            "r": self.r,
            "varphi": self.varphi,
            "psi": self.psi,
            "rho": self.rho,
            "lambda_max": self.lambda_max,
            "lambda_used": self.lam,
        }


def _pi_horizon(pairs: Sequence[MixingPair], tol: float = 1e-15, cap: int = 10**5) -> np.ndarray:
    """pi_0, pi_1, ... until the sequence has settled onto its periodic orbit,
    plus one further period."""
    T = len(pairs)
    n = pairs[0].n
    pis = [np.full(n, 1.0 / n)]
    k = 0
    while k < cap:
        pis.append(pairs[k % T].c_matrix @ pis[-1])
        k += 1
        if k >= T and np.abs(pis[-1] - pis[-1 - T]).max() <= tol:
            break
    for _ in range(T):
        pis.append(pairs[k % T].c_matrix @ pis[-1])
        k += 1
    return np.array(pis)


def sequence_constants(graphs: DigraphSequence, horizon: int | None = None) -> dict:
    """Suprema/infima of the per-round constants over the graph sequence.

    ``sigma`` and ``varphi`` use the periodic absolute probability sequence.
    ``tau``, ``r`` and ``psi`` use ``pi_k`` over ``horizon`` rounds, or, by
    default, until ``pi_k`` settles onto its periodic orbit.
    """
    pairs = [build_mixing(g) for g in graphs]
    T = len(pairs)
    n = pairs[0].n
    phis = phi_sequence_periodic(pairs)
    pis = pi_sequence(pairs, horizon) if horizon is not None else _pi_horizon(pairs)
    diam = [diameter(g) for g in graphs]
    util = [max_edge_utility(g) for g in graphs]
    sigma = max(
        _sigma_value(phis[(t + 1) % T].min(), pairs[t].r_min, phis[t].max(), diam[t], util[t])
        for t in range(T)
    )
    tau = max(
        _tau_value(pis[k].min(), pairs[k % T].c_min, pis[k].max(), pis[k + 1].max(), diam[k % T], util[k % T])
        for k in range(len(pis) - 1)
    )
    return {
        "sigma": sigma,
        "tau": tau,
        "r": float(np.max(np.sqrt(1.0 / pis.min(axis=1)) + math.sqrt(n))),
        "varphi": float(np.max(np.sqrt(1.0 / phis.min(axis=1)))),
        "psi": float(pis.min()),
        "n": n,
    }


def build_certificate(constants: dict, mu: float, lipschitz: float, eta: float, lam: float) -> ConvergenceCertificate:
    """Assemble a certificate; ``rho``/``lambda_max`` are NaN when ``eta`` is
    outside the range their formulas assume."""
    c = constants
    n = c["n"]
    args = (c["sigma"], c["tau"], c["r"], c["varphi"], c["psi"], mu)
    m = None
    rho = float("nan")
    lam_max = float("nan")
    stable = False
    if 0 < eta < 1.0 / lipschitz:
        m = composite_matrix(*args, lipschitz, n, eta, lam)
        rho = spectral_radius(m)
        stable = min(stability_minors(*args, n, eta, lam)) > 0
    if 0 < eta < 1.0 / (n * lipschitz):
        lam_max = lambda_bound(*args, n, eta, lipschitz)
    return ConvergenceCertificate(
        c["sigma"], c["tau"], c["r"], c["varphi"], c["psi"], mu, lipschitz, n, eta, lam, m, rho, lam_max, stable
    )


def certify(problem, graphs: DigraphSequence, eta: float, lam: float, horizon: int | None = None) -> ConvergenceCertificate:
    """Certificate for running ``problem`` on ``graphs`` with steps ``(eta, lam)``."""
    return build_certificate(sequence_constants(graphs, horizon), problem.mu, problem.lipschitz, eta, lam)


def check_composite(trajectory, certificate: ConvergenceCertificate, slack: float = 1e-9) -> list[bool]:
    """Per round ``k``, whether ``e[k+1] <= M e[k] + slack`` elementwise."""
    if not trajectory.phi_exact:
        raise ValueError(
            "trajectory errors were measured with uniform weights on a non doubly stochastic "
            "sequence; rerun with phi_mode='true'"
        )
    if certificate.m_matrix is None:
        raise ValueError("certificate has no composite matrix (eta >= 1/L)")
    if (trajectory.sizes.eta, trajectory.sizes.lam) != (certificate.eta, certificate.lam):
        raise ValueError("trajectory and certificate step sizes differ")
    e = trajectory.errors
    bound = e[:-1] @ certificate.m_matrix.T + slack
    return [bool(v) for v in np.all(e[1:] <= bound, axis=1)]
