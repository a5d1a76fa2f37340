"""Training-sequence construction and exhaustive ON-OFF sequence search.

The single-sequence criteria go through the hand-written linear algebra; the
exhaustive search evaluates the same criteria in vectorized chunks with
``numpy.linalg`` and is cross-checked against the single-sequence path in the
tests.
"""

import numpy as np

from .channel import design_matrix
from .linalg import SingularMatrixError, invert_sym, solve_spd, sym_eigenvalues

DEFAULT_EPS = 1e-9
MAX_SEARCH_LENGTH = 24
TIE_RTOL = 1e-12
_CHUNK = 1 << 15


class SearchError(RuntimeError):
    pass


def isi_free_sequence(length, memory, offset=1):
    """One release every ``memory + 1`` intervals starting at interval ``offset``."""
    if not 1 <= offset <= memory + 1:
        raise ValueError("offset must lie in 1..L+1")
    k = np.arange(1, length + 1)
    return ((k - offset) % (memory + 1) == 0).astype(float)


def repeat_sequence(base, copies):
    if copies < 1:
        raise ValueError("copies must be at least 1")
    return np.tile(np.asarray(base, dtype=float), copies)


def lsse_criterion(s_mat, mean_cir):
    """Expected squared error of the unconstrained least-squares estimate.

    ``sum_k [S (S'S)^-2 S']_kk (S mu)_k``, evaluated row by row.
    """
    g_inv = invert_sym(s_mat.T @ s_mat)
    w = s_mat @ (g_inv @ g_inv)
    diag = np.einsum("ki,ki->k", w, s_mat)
    return float(diag @ (s_mat @ np.asarray(mean_cir, dtype=float)))


def lmmse_criterion(s_mat, moments):
    """``tr{Phi S' (S Phi S' + diag(S mu))^-1 S Phi}``, to be maximized."""
    phi = moments.second_moment
    s_phi = s_mat @ phi
    system = s_phi @ s_mat.T + np.diag(s_mat @ moments.mean)
    return float(np.trace(s_phi.T @ solve_spd(system, s_phi)))


def lmmse_upper_mse(s_mat, moments):
    """``E||c - F r||^2`` at the optimal matrix ``F``: ``tr(Phi)`` minus the criterion."""
    return float(np.trace(moments.second_moment)) - lmmse_criterion(s_mat, moments)


def gram_feasible(s_mat, eps=DEFAULT_EPS):
    try:
        eig = sym_eigenvalues(s_mat.T @ s_mat)
    except ValueError:
        return False
    return bool(np.all(np.abs(eig) > eps))


def int_to_sequence(value, length):
    """Binary expansion with ``s[1]`` as the most significant bit."""
    bits = (int(value) >> np.arange(length - 1, -1, -1)) & 1
    return bits.astype(float)


def sequence_to_int(seq):
    out = 0
    for b in np.asarray(seq).astype(int):
        out = (out << 1) | int(b)
    return out


def _batch_design(values, length, memory):
    shifts = np.arange(length - 1, -1, -1)
    seqs = ((values[:, None] >> shifts) & 1).astype(float)
    rows = length - memory + 1
    out = np.ones((values.size, rows, memory + 1))
    for j in range(memory):
        out[:, :, j] = seqs[:, memory - 1 - j: length - j]
    return out


def _batch_lsse(s_b, mean_cir, eps):
    gram = np.einsum("bki,bkj->bij", s_b, s_b)
    eig = np.linalg.eigvalsh(gram)
    ok = np.all(np.abs(eig) > eps, axis=1)
    vals = np.full(s_b.shape[0], np.inf)
    if np.any(ok):
        g_inv = np.linalg.inv(gram[ok])
        g2 = g_inv @ g_inv
        s_ok = s_b[ok]
        diag = np.einsum("bki,bij,bkj->bk", s_ok, g2, s_ok)
        vals[ok] = np.einsum("bk,bk->b", diag, s_ok @ mean_cir)
    return vals


def _batch_lmmse(s_b, moments):
    # push-through form: tr{Phi M (I + Phi M)^-1 Phi}, M = S' diag(S mu)^-1 S
    phi = moments.second_moment
    n = phi.shape[0]
    d_inv = 1.0 / (s_b @ moments.mean)
    m = np.einsum("bki,bk,bkj->bij", s_b, d_inv, s_b)
    sys = np.eye(n) + phi @ m
    x = np.linalg.solve(sys, np.broadcast_to(phi, sys.shape))
    return np.einsum("ij,bjk,bki->b", phi, m, x)


def _exhaustive(length, memory, evaluate, minimize):
    if length > MAX_SEARCH_LENGTH:
        raise ValueError(f"exhaustive search limited to K <= {MAX_SEARCH_LENGTH}")
    if length < 2 * memory:
        raise ValueError("sequence length must be at least 2L")
    total = 1 << length
    values = np.empty(total)
    for start in range(0, total, _CHUNK):
        ints = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        values[start:start + ints.size] = evaluate(_batch_design(ints, length, memory))
    if not minimize:
        values = -values
    best = np.min(values)
    if not np.isfinite(best):
        raise SearchError("no feasible sequence")
    tol = TIE_RTOL * max(abs(best), 1.0)
    winner = int(np.flatnonzero(values <= best + tol)[0])
    return int_to_sequence(winner, length), float(best if minimize else -best)


def search_lsse(length, memory, mean_cir, eps=DEFAULT_EPS):
    """Minimum-criterion ON-OFF sequence among those with a well-conditioned Gram matrix.

    Ties (relative 1e-12) go to the smallest binary value.
    """
    mean_cir = np.asarray(mean_cir, dtype=float)
    return _exhaustive(length, memory, lambda s_b: _batch_lsse(s_b, mean_cir, eps), True)


def search_lmmse(length, memory, moments):
    return _exhaustive(length, memory, lambda s_b: _batch_lmmse(s_b, moments), False)


def criterion_for(seq, memory, kind, moments, eps=DEFAULT_EPS):
    """Single-sequence criterion through the reference path (inf if infeasible)."""
    s_mat = design_matrix(seq, memory)
    if kind == "lsse":
        if not gram_feasible(s_mat, eps):
            return np.inf
        try:
            return lsse_criterion(s_mat, moments.mean)
        except SingularMatrixError:
            return np.inf
    if kind == "lmmse":
        return lmmse_criterion(s_mat, moments)
    raise ValueError(f"unknown criterion {kind!r}")
