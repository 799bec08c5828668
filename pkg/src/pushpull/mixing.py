"""Row/column stochastic mixing matrices and their stochastic weight sequences."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graph import Digraph, DigraphSequence, is_strongly_connected
from .problem import ConvergenceError


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def _support(g: Digraph) -> np.ndarray:
    """``S[i, j]`` true iff ``(j, i)`` is an edge or ``i == j``."""
    s = g.adjacency().T.astype(bool)
    np.fill_diagonal(s, True)
    return s


@dataclass(frozen=True)
class MixingPair:
    """Row-stochastic ``r_matrix`` (pull) and column-stochastic ``c_matrix`` (push)."""

    r_matrix: np.ndarray
    c_matrix: np.ndarray

    def __post_init__(self):
        r, c = _frozen(self.r_matrix), _frozen(self.c_matrix)
        if r.shape != c.shape or r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise ValueError("mixing matrices must be square with equal shapes")
        if np.any(r < 0) or np.any(c < 0):
            raise ValueError("mixing matrices must be nonnegative")
        if not np.allclose(r.sum(axis=1), 1.0, rtol=0, atol=1e-12):
            raise ValueError("r_matrix is not row stochastic")
        if not np.allclose(c.sum(axis=0), 1.0, rtol=0, atol=1e-12):
            raise ValueError("c_matrix is not column stochastic")
        object.__setattr__(self, "r_matrix", r)
        object.__setattr__(self, "c_matrix", c)

    @property
    def n(self) -> int:
        return self.r_matrix.shape[0]

    @property
    def r_min(self) -> float:
        return min_positive_entry(self.r_matrix)

    @property
    def c_min(self) -> float:
        return min_positive_entry(self.c_matrix)

    def compatible_with(self, g: Digraph) -> bool:
        s = _support(g)
        return bool(np.array_equal(self.r_matrix > 0, s) and np.array_equal(self.c_matrix > 0, s))

    def is_doubly_stochastic(self, tol: float = 1e-12) -> bool:
        return bool(np.allclose(self.r_matrix.sum(axis=0), 1.0, rtol=0, atol=tol))


def build_mixing(g: Digraph) -> MixingPair:
    """Uniform-weight mixing matrices compatible with ``g``.

    Agent ``i`` averages uniformly over itself and its in-neighbors (row ``i``
    of R) and splits its tracker mass uniformly over itself and its
    out-neighbors (column ``i`` of C).
    """
    if not is_strongly_connected(g):
        raise ValueError("graph must be strongly connected")
    n = g.n
    r = np.zeros((n, n))
    c = np.zeros((n, n))
    for i in range(n):
        inn = (i,) + g.in_neighbors(i)
        r[i, list(inn)] = 1.0 / len(inn)
        out = (i,) + g.out_neighbors(i)
        c[list(out), i] = 1.0 / len(out)
    return MixingPair(r, c)


def min_positive_entry(m) -> float:
    """Smallest strictly positive entry of a nonnegative matrix."""
    m = np.asarray(m, dtype=float)
    pos = m[m > 0]
    if pos.size == 0:
        raise ValueError("matrix has no positive entry")
    return float(pos.min())


def _pair_at(pairs: Sequence[MixingPair], k: int) -> MixingPair:
    return pairs[k % len(pairs)]


def pi_sequence(pairs: Sequence[MixingPair], horizon: int) -> np.ndarray:
    """``pi_0 = 1/n`` and ``pi_{k+1} = C_k pi_k`` for ``k < horizon``.

    ``pairs`` is read periodically. Returns an array of shape
    ``(horizon + 1, n)``.
    """
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    n = pairs[0].n
    out = np.empty((horizon + 1, n))
    out[0] = 1.0 / n
    for k in range(horizon):
        out[k + 1] = _pair_at(pairs, k).c_matrix @ out[k]
    return out


def left_perron_vector(m, tol: float = 1e-13, max_iter: int = 10**5) -> np.ndarray:
    """Stochastic left Perron vector ``v`` with ``v^T m = v^T`` for a primitive
    row-stochastic ``m``, by power iteration."""
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    v = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        w = v @ m
        w /= w.sum()
        if np.abs(w - v).max() <= tol:
            return w
        v = w
    raise ConvergenceError(
        f"left Perron vector power iteration did not converge in {max_iter} steps",
        last_iterate=v,
        residual=float(np.abs(v @ m - v).max()),
    )


def phi_sequence_periodic(pairs: Sequence[MixingPair]) -> np.ndarray:
    """Periodic absolute probability sequence for ``R_0, ..., R_{T-1}``.

    Returns ``phi_0, ..., phi_{T-1}`` (shape ``(T, n)``) with
    ``phi_{k+1}^T R_k = phi_k^T`` and ``phi_T = phi_0``; round ``k`` uses
    ``phi[k mod T]``.
    """
    T = len(pairs)
    n = pairs[0].n
    product = np.eye(n)
    for pair in pairs:
        product = pair.r_matrix @ product  # R_{T-1} ... R_0
    phis = np.empty((T + 1, n))
    phis[T] = left_perron_vector(product)
    for k in range(T - 1, -1, -1):
        phis[k] = phis[k + 1] @ pairs[k].r_matrix
    # phis[0] equals phis[T] up to the power-iteration tolerance; keep the
    # backward-recovered one so every defining identity holds exactly in
    # k = 0 .. T-2.
    return phis[:T] / phis[:T].sum(axis=1, keepdims=True)


def phi_sequence_uniform(n: int, period: int = 1) -> np.ndarray:
    """Constant ``1/n`` weights, used when the true sequence is not wanted."""
    return np.full((period, n), 1.0 / n)


def mixing_sequence(graphs: DigraphSequence) -> list[MixingPair]:
    return [build_mixing(g) for g in graphs]
