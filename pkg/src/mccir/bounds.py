"""Classical and Bayesian Cramer-Rao bounds for the Poisson CIR model."""

from dataclasses import dataclass

import numpy as np

from .channel import prior_moments, sample_prior
from .linalg import SingularMatrixError, invert_sym
from .rng import derive_stream

MAX_SKIP_FRACTION = 0.01


class BoundError(RuntimeError):
    pass


@dataclass(frozen=True)
class MonteCarloValue:
    value: float
    stderr: float
    n_used: int
    n_skipped: int = 0


def fisher_matrix(cir, s_mat):
    """``sum_k s_k s_k' / (c' s_k)``."""
    means = s_mat @ np.asarray(cir, dtype=float)
    if np.any(means <= 0):
        raise BoundError("Fisher information undefined: zero mean observation")
    f = (s_mat / means[:, None]).T @ s_mat
    return 0.5 * (f + f.T)


def ccrb(cir, s_mat):
    try:
        return float(np.trace(invert_sym(fisher_matrix(cir, s_mat))))
    except SingularMatrixError as exc:
        raise BoundError(f"singular Fisher matrix: {exc}") from exc


def _prior_draws(prior, n_samples, seed):
    for i in range(n_samples):
        yield sample_prior(prior, derive_stream(seed, i))


def _check_skips(n_skipped, n_samples, max_skip):
    if n_skipped > max_skip * n_samples:
        raise BoundError(f"{n_skipped} of {n_samples} prior draws gave an undefined bound")


def expected_ccrb(prior, s_mat, n_samples=10_000, seed=0, max_skip=MAX_SKIP_FRACTION):
    """Prior average of the classical bound, with its Monte Carlo standard error.

    Draw ``i`` comes from ``derive_stream(seed, i)``.
    """
    if n_samples < 100:
        raise ValueError("n_samples must be at least 100")
    vals = []
    skipped = 0
    for cir in _prior_draws(prior, n_samples, seed):
        try:
            vals.append(ccrb(cir, s_mat))
        except BoundError:
            skipped += 1
    _check_skips(skipped, n_samples, max_skip)
    vals = np.asarray(vals)
    return MonteCarloValue(float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(vals.size)), vals.size, skipped)


def bcrb(prior, s_mat, n_samples=10_000, seed=0, max_skip=MAX_SKIP_FRACTION):
    """``tr{[Sigma^-1 + E{I(c)}]^-1}`` with the Gaussian-approximation prior term.

    The standard error is the delta-method propagation of the Monte Carlo
    error of the averaged Fisher matrix.
    """
    if n_samples < 100:
        raise ValueError("n_samples must be at least 100")
    moments = prior_moments(prior)
    try:
        prior_info = invert_sym(moments.central_covariance)
    except SingularMatrixError as exc:
        raise BoundError("prior covariance is singular") from exc
    fishers = []
    skipped = 0
    for cir in _prior_draws(prior, n_samples, seed):
        try:
            fishers.append(fisher_matrix(cir, s_mat))
        except BoundError:
            skipped += 1
    _check_skips(skipped, n_samples, max_skip)
    fishers = np.asarray(fishers)
    total = prior_info + fishers.mean(axis=0)
    try:
        inv = invert_sym(total)
    except SingularMatrixError as exc:
        raise BoundError("singular Bayesian information matrix") from exc
    sens = inv @ inv
    z = np.einsum("ij,nji->n", sens, fishers)
    return MonteCarloValue(float(np.trace(inv)), float(z.std(ddof=1) / np.sqrt(z.size)), z.size, skipped)
