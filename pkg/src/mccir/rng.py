"""Seeded random streams.

Every Monte Carlo trial gets its own stream derived by hashing
``(master_seed, trial_index, *extra)`` through ``numpy.random.SeedSequence``
and feeding a Philox counter-based generator, so results never depend on the
order in which trials are executed.
"""

import math

import numpy as np

RngStream = np.random.Generator


def derive_stream(master_seed, trial_index, *extra):
    """Independent, reproducible stream for one trial (and optional sub-key)."""
    key = [int(master_seed), int(trial_index), *(int(e) for e in extra)]
    if any(k < 0 for k in key):
        raise ValueError("seed keys must be non-negative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def _check_means(mean):
    mean = np.asarray(mean, dtype=float)
    if not np.all(np.isfinite(mean)) or np.any(mean < 0):
        raise ValueError("Poisson mean must be finite and non-negative")
    return mean


def poisson_sample(mean, rng, size=None):
    """Exact Poisson draw(s).

    numpy's sampler uses sequential inversion below a mean of 10 and the
    transformed-rejection method (PTRS) above it; no normal approximation.
    """
    mean = _check_means(mean)
    return rng.poisson(mean, size=size)


def standard_normal(rng, size=None):
    return rng.standard_normal(size)


def poisson_cdf(k, mean):
    """Analytic Poisson CDF, used by the sampler tests."""
    if k < 0:
        return 0.0
    term = math.exp(-mean)
    total = term
    for i in range(1, int(k) + 1):
        term *= mean / i
        total += term
    return min(total, 1.0)
