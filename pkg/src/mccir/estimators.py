"""CIR estimators for the Poisson channel with memory.

All estimators take the observation vector ``r`` (counts for intervals
k = L..K) and the design matrix ``S`` whose rows are the windows ``s_k``.
Non-negativity is enforced exactly by enumerating support subsets: the
unconstrained stationary point on every subset of ``{taps..., noise}`` is
computed and the best non-negative candidate is kept.

Subsets are tuples of 0-based column indices; index ``L`` is the noise mean.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .linalg import SingularMatrixError, invert_sym, solve_spd

MAX_NEWTON_ITER = 200
FEAS_RTOL = 1e-9


class ConvergenceError(RuntimeError):
    pass


class NoSolutionError(RuntimeError):
    """The stationarity system has no (unique) solution."""


@dataclass
class EstimateResult:
    cir: np.ndarray
    active_subset: tuple
    objective: float
    solver_iterations: int = 0


def subset_labels(subset, memory):
    return [("n" if i == memory else str(i + 1)) for i in subset]


def subsets_by_size(n_params):
    """All non-empty subsets, largest first, lexicographic within a size."""
    for size in range(n_params, 0, -1):
        yield from itertools.combinations(range(n_params), size)


def _check_inputs(r, s_mat):
    r = np.asarray(r, dtype=float)
    s_mat = np.asarray(s_mat, dtype=float)
    if r.ndim != 1 or s_mat.ndim != 2 or s_mat.shape[0] != r.size:
        raise ValueError(f"observation length {r.size} does not match design rows {s_mat.shape[0]}")
    if np.any(r < 0):
        raise ValueError("observations must be non-negative counts")
    return r, s_mat


def log_likelihood(cir, r, s_mat):
    """Poisson log-likelihood up to the constant ``-sum(ln r!)``."""
    r, s_mat = _check_inputs(r, s_mat)
    m = s_mat @ np.asarray(cir, dtype=float)
    pos = r > 0
    if np.any(m[pos] <= 0):
        return -math.inf
    return float(-np.sum(m) + np.sum(r[pos] * np.log(m[pos])))


def sse(cir, r, s_mat):
    resid = np.asarray(r, dtype=float) - s_mat @ np.asarray(cir, dtype=float)
    return float(resid @ resid)


def _feasible(x):
    tol = FEAS_RTOL * (1.0 + np.max(np.abs(x), initial=0.0))
    if np.any(x < -tol):
        return None
    return np.maximum(x, 0.0)


def _embed(x, subset, n_params):
    full = np.zeros(n_params)
    full[list(subset)] = x
    return full


def _initial_point(a, r):
    mean_r = float(np.mean(r)) if r.size else 0.0
    fill = 0.1 * mean_r if mean_r > 0 else 1e-3
    try:
        x = solve_spd(a.T @ a, a.T @ r)
    except SingularMatrixError:
        return np.full(a.shape[1], max(mean_r, 1e-3) / a.shape[1])
    x = np.where(x > 0, x, fill)
    return x


def _penalized_newton(a, r, x0, prec=None, offset=None):
    """Maximize ``sum(-m + r ln m) - 0.5 (x - offset)' prec (x - offset)``.

    ``m = a @ x``. Returns ``(x, iterations)``, or ``(None, iterations)`` when
    the objective has no finite maximizer. Damped Newton with backtracking that
    keeps every mean with a positive count strictly positive.
    """
    pos = r > 0
    r_pos = r[pos]
    a_pos = a[pos]
    col_sum = a.sum(axis=0)
    tol = 1e-8 * (1.0 + r.sum())
    bound = 1e10 * (1.0 + r.sum())

    def objective(x):
        m = a_pos @ x
        if np.any(m <= 0):
            return -math.inf
        val = -col_sum @ x + r_pos @ np.log(m)
        if prec is not None:
            d = x - offset
            val -= 0.5 * d @ prec @ d
        return val

    x = x0.astype(float)
    f = objective(x)
    for it in range(1, MAX_NEWTON_ITER + 1):
        m = a_pos @ x
        w = r_pos / m
        grad = a_pos.T @ w - col_sum
        hess = (a_pos * (w / m)[:, None]).T @ a_pos
        if prec is not None:
            grad -= prec @ (x - offset)
            hess = hess + prec
        if np.max(np.abs(grad)) <= tol:
            return x, it
        try:
            step = solve_spd(hess, grad)
        except SingularMatrixError:
            return None, it
        slope = grad @ step
        t = 1.0
        for _ in range(60):
            x_new = x + t * step
            f_new = objective(x_new)
            if f_new >= f + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            if np.max(np.abs(grad)) <= 1e3 * tol:
                return x, it
            raise ConvergenceError("line search failed in Newton iteration")
        x, f = x_new, f_new
        if np.max(np.abs(x)) > bound:
            return None, it
    raise ConvergenceError(f"Newton did not converge in {MAX_NEWTON_ITER} iterations")


def _reduced_problem(r, s_mat, subset):
    a = s_mat[:, list(subset)]
    dead = ~np.any(a != 0, axis=1)
    if np.any(r[dead] > 0):
        return None
    return a[~dead], r[~dead]


def _solve_subset(r, s_mat, subset, prec=None, mean=None):
    n_params = s_mat.shape[1]
    noise_only = subset == (n_params - 1,)
    if prec is None and noise_only:
        return np.array([float(np.mean(r))]), 0
    reduced = _reduced_problem(r, s_mat, subset)
    if reduced is None:
        return None, 0
    a, rr = reduced
    if prec is None:
        return _penalized_newton(a, rr, _initial_point(a, rr))
    idx = list(subset)
    rest = [i for i in range(n_params) if i not in subset]
    p_aa = prec[np.ix_(idx, idx)]
    # fold the fixed zero entries of the full vector into the offset
    offset = mean[idx] + (solve_spd(p_aa, prec[np.ix_(idx, rest)] @ mean[rest]) if rest else 0.0)
    if a.shape[0] == 0:
        return offset.copy(), 0
    return _penalized_newton(a, rr, _initial_point(a, rr), p_aa, offset)


def solve_subset_ml(r, s_mat, subset):
    """Stationary point of the log-likelihood restricted to ``subset``.

    Returns the reduced vector, or ``None`` when no stationary point exists.
    """
    r, s_mat = _check_inputs(r, s_mat)
    x, _ = _solve_subset(r, s_mat, tuple(subset))
    return x


def _subset_search(r, s_mat, solve, score):
    """Full set first; otherwise the best non-negative subset candidate."""
    n_params = s_mat.shape[1]
    best = None
    iterations = 0
    for subset in subsets_by_size(n_params):
        x, its = solve(subset)
        iterations += its
        if x is None:
            continue
        x = _feasible(x)
        if x is None:
            continue
        cand = _embed(x, subset, n_params)
        val = score(cand)
        if len(subset) == n_params:
            return EstimateResult(cand, subset, val, iterations)
        if best is None or val > best[1]:
            best = (cand, val, subset)
    if best is None:
        raise NoSolutionError("no feasible candidate")
    return EstimateResult(best[0], best[2], best[1], iterations)


def ml_estimate(r, s_mat):
    r, s_mat = _check_inputs(r, s_mat)
    return _subset_search(
        r, s_mat,
        lambda sub: _solve_subset(r, s_mat, sub),
        lambda c: log_likelihood(c, r, s_mat),
    )


def ml_suboptimal(r, s_mat):
    """Unconstrained likelihood stationary point, clipped at zero.

    When the likelihood has no finite stationary point (it grows without
    bound as some entry goes to minus infinity), that entry's clip is zero and
    the subset search gives the matching boundary solution, which is returned.
    """
    r, s_mat = _check_inputs(r, s_mat)
    full = tuple(range(s_mat.shape[1]))
    x, _ = _solve_subset(r, s_mat, full)
    if x is None:
        return ml_estimate(r, s_mat).cir
    return np.maximum(x, 0.0)


def _solve_subset_ls(r, s_mat, subset):
    a = s_mat[:, list(subset)]
    try:
        return solve_spd(a.T @ a, a.T @ r), 0
    except SingularMatrixError:
        return None, 0


def lsse_estimate(r, s_mat):
    r, s_mat = _check_inputs(r, s_mat)
    res = _subset_search(
        r, s_mat,
        lambda sub: _solve_subset_ls(r, s_mat, sub),
        lambda c: -sse(c, r, s_mat),
    )
    res.objective = -res.objective
    return res


def lsse_suboptimal(r, s_mat):
    r, s_mat = _check_inputs(r, s_mat)
    return np.maximum(solve_spd(s_mat.T @ s_mat, s_mat.T @ r), 0.0)


def map_objective(cir, r, s_mat, moments, prec=None):
    """Log-likelihood plus the Gaussian log-prior (up to a constant)."""
    if prec is None:
        prec = invert_sym(moments.central_covariance)
    d = np.asarray(cir, dtype=float) - moments.mean
    return log_likelihood(cir, r, s_mat) - 0.5 * float(d @ prec @ d)


def map_estimate(r, s_mat, moments):
    r, s_mat = _check_inputs(r, s_mat)
    prec = invert_sym(moments.central_covariance)
    return _subset_search(
        r, s_mat,
        lambda sub: _solve_subset(r, s_mat, sub, prec, moments.mean),
        lambda c: map_objective(c, r, s_mat, moments, prec),
    )


def lmmse_matrix(s_mat, moments):
    """``Phi S' (S Phi S' + diag(S mu))^-1`` via one SPD solve."""
    phi = moments.second_moment
    s_phi = s_mat @ phi
    system = s_phi @ s_mat.T + np.diag(s_mat @ moments.mean)
    return solve_spd(system, s_phi).T


def lmmse_estimate(r, f):
    r = np.asarray(r, dtype=float)
    if f.shape[1] != r.size:
        raise ValueError("LMMSE matrix does not match observation length")
    return np.maximum(f @ r, 0.0)


def isi_free_offset(seq, memory):
    """Return ``k0`` if ``seq`` is the ISI-free pattern for some offset, else None."""
    s = np.asarray(seq, dtype=float)
    period = memory + 1
    for k0 in range(1, period + 1):
        pattern = ((np.arange(1, s.size + 1) - k0) % period == 0).astype(float)
        if np.array_equal(pattern, s):
            return k0
    return None


def isi_free_estimate(r, seq, memory, k0):
    """Averaging estimator for the ISI-free training sequence.

    Only intervals k = L..K are observed, so the index sets are restricted to
    that range.
    """
    r = np.asarray(r, dtype=float)
    seq = np.asarray(seq, dtype=float)
    L = int(memory)
    if isi_free_offset(seq, L) != k0:
        raise ValueError(f"sequence is not the ISI-free pattern for L={L}, k0={k0}")
    if r.size != seq.size - L + 1:
        raise ValueError("observation length must be K - L + 1")
    k = np.arange(L, seq.size + 1)
    phase = (k - k0) % (L + 1)
    noise_rows = phase == L
    if not np.any(noise_rows):
        raise ValueError("no noise-only interval observed")
    noise = float(np.mean(r[noise_rows]))
    taps = np.empty(L)
    for l in range(1, L + 1):
        rows = phase == l - 1
        if not np.any(rows):
            raise ValueError(f"no interval observes tap {l}")
        taps[l - 1] = max(float(np.mean(r[rows] - noise)), 0.0)
    return np.append(taps, noise)
