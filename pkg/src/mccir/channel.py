"""Diffusion channel model, clipped-Gaussian CIR prior and observation model.

A CIR vector is a 1-D array ``[c_1, ..., c_L, c_n]``: the expected molecule
counts contributed by releases 0..L-1 symbol intervals ago, followed by the
mean count of external noise molecules.
"""

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .rng import poisson_sample, standard_normal

# Tail rule for choosing the symbol duration: first neglected tap below
# this fraction of the first tap.
TAIL_RATIO = 0.05


@dataclass(frozen=True)
class PhysicalParams:
    n_tx: float = 1e5
    diffusion: float = 4.365e-10
    distance: float = 400e-9
    receiver_radius: float = 50e-9
    noise_fraction: float = 0.2
    symbol_duration: float | None = None

    def __post_init__(self):
        for name in ("n_tx", "diffusion", "distance", "receiver_radius"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and positive, got {v}")
        if not 0.0 <= self.noise_fraction <= 1.0:
            raise ValueError("noise_fraction must lie in [0, 1]")
        if self.symbol_duration is not None and not self.symbol_duration > 0:
            raise ValueError("symbol_duration must be positive")

    @property
    def receiver_volume(self):
        return 4.0 / 3.0 * math.pi * self.receiver_radius ** 3


@dataclass(frozen=True)
class ChannelPrior:
    """``c = [c_def + sigma * diag(c_def) * N(0, I)]^+``."""

    default_cir: np.ndarray
    sigma: float

    def __post_init__(self):
        cir = np.asarray(self.default_cir, dtype=float)
        if cir.ndim != 1 or cir.size < 2:
            raise ValueError("default_cir must hold L taps plus the noise mean")
        if np.any(cir < 0) or not np.all(np.isfinite(cir)):
            raise ValueError("default_cir must be finite and non-negative")
        if not self.sigma >= 0:
            raise ValueError("sigma must be non-negative")
        object.__setattr__(self, "default_cir", cir)

    @classmethod
    def from_variance(cls, default_cir, sigma2):
        return cls(default_cir, math.sqrt(sigma2))

    @property
    def memory(self):
        return self.default_cir.size - 1


@dataclass(frozen=True)
class PriorMoments:
    mean: np.ndarray
    second_moment: np.ndarray
    central_covariance: np.ndarray = field(repr=False)


def concentration(p, t):
    """Point-source concentration in an unbounded medium [molecules/m^3]."""
    if not t > 0:
        raise ValueError("time must be positive")
    dt = p.diffusion * t
    return p.n_tx / (4.0 * math.pi * dt) ** 1.5 * math.exp(-p.distance ** 2 / (4.0 * dt))


def peak_time(p):
    return p.distance ** 2 / (6.0 * p.diffusion)


def _expected_count(p, t):
    # uniform-concentration approximation over the transparent receiver
    return p.receiver_volume * concentration(p, t)


def physical_cir(p, memory):
    """Expected counts sampled at the concentration peak of each interval."""
    if memory < 1:
        raise ValueError("memory must be at least 1")
    if p.symbol_duration is None:
        raise ValueError("symbol_duration is not set; calibrate it first")
    t0 = peak_time(p)
    taps = [_expected_count(p, t0 + l * p.symbol_duration) for l in range(memory)]
    noise = p.noise_fraction * _expected_count(p, t0)
    return np.array(taps + [noise])


def _bisect_decay(p, target, rel_tol=1e-12):
    # find dt > 0 with expected_count(t_peak + dt) == target on the decaying branch
    t0 = peak_time(p)
    peak = _expected_count(p, t0)
    if not 0 < target < peak:
        raise ValueError(f"target {target} unreachable; peak count is {peak}")
    hi = t0
    while _expected_count(p, t0 + hi) > target:
        hi *= 2.0
        if hi > 1e12 * t0:
            raise ValueError("target count unreachable")
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _expected_count(p, t0 + mid) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rel_tol * hi:
            break
    return 0.5 * (lo + hi)


def calibrate_symbol_duration(p, target_tap2):
    """Symbol duration that makes the second tap equal ``target_tap2``."""
    peak = _expected_count(p, peak_time(p))
    if target_tap2 == peak:
        return 0.0
    return _bisect_decay(p, target_tap2)


def symbol_duration_for_memory(p, memory, ratio=TAIL_RATIO):
    """Symbol duration at which tap ``memory + 1`` equals ``ratio`` times tap 1.

    Any longer duration satisfies the tail rule; this is the shortest one.
    """
    peak = _expected_count(p, peak_time(p))
    return _bisect_decay(p, ratio * peak) / memory


def default_cir(memory, p=None):
    """CIR for ``memory`` taps using the tail-rule symbol duration."""
    p = p or PhysicalParams()
    if p.symbol_duration is None:
        p = replace(p, symbol_duration=symbol_duration_for_memory(p, memory))
    return physical_cir(p, memory)


def _std_normal_cdf(z):
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def _std_normal_pdf(z):
    return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def prior_moments(prior):
    """Closed-form moments of the zero-clipped Gaussian prior."""
    m = prior.default_cir
    n = m.size
    first = np.empty(n)
    second = np.empty(n)
    for i, mi in enumerate(m):
        si = prior.sigma * mi
        if si == 0.0:
            first[i], second[i] = mi, mi * mi
            continue
        z = mi / si
        cdf, pdf = _std_normal_cdf(z), _std_normal_pdf(z)
        first[i] = mi * cdf + si * pdf
        second[i] = (mi * mi + si * si) * cdf + mi * si * pdf
    phi = np.outer(first, first)
    phi[np.diag_indices(n)] = second
    cov = np.diag(np.maximum(second - first * first, 0.0))
    return PriorMoments(first, phi, cov)


def sample_prior(prior, rng):
    m = prior.default_cir
    draw = m + prior.sigma * m * standard_normal(rng, m.size)
    return np.maximum(draw, 0.0)


def design_matrix(seq, memory):
    """Rows ``[s[k], s[k-1], ..., s[k-L+1], 1]`` for k = L..K (1-based)."""
    s = np.asarray(seq, dtype=float)
    if s.ndim != 1:
        raise ValueError("training sequence must be 1-D")
    if np.any(s < 0) or np.any(s > 1):
        raise ValueError("training symbols must lie in [0, 1]")
    k, L = s.size, int(memory)
    if L < 1:
        raise ValueError("memory must be at least 1")
    if k < 2 * L:
        raise ValueError(f"sequence length {k} < 2L = {2 * L}")
    rows = k - L + 1
    out = np.ones((rows, L + 1))
    for j in range(L):
        out[:, j] = s[L - 1 - j: k - j]
    return out


def simulate_observations(cir, s_mat, rng):
    cir = np.asarray(cir, dtype=float)
    if s_mat.shape[1] != cir.size:
        raise ValueError("CIR length does not match design matrix")
    means = np.maximum(s_mat @ cir, 0.0)
    return poisson_sample(means, rng)


def load_config(path):
    """Read physical parameters, memory and prior spread from a JSON file.

    Recognized keys: the ``PhysicalParams`` fields, ``memory``, ``target_tap2``
    and ``sigma2``. Missing keys take the default values.
    """
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise ValueError("config must be a JSON object")
    known = {f for f in PhysicalParams.__dataclass_fields__}
    extra = set(data) - known - {"memory", "target_tap2", "sigma2"}
    if extra:
        raise ValueError(f"unknown config keys: {sorted(extra)}")
    params = PhysicalParams(**{k: float(v) for k, v in data.items() if k in known and v is not None})
    memory = int(data.get("memory", 3))
    if params.symbol_duration is None:
        if "target_tap2" in data:
            t_sym = calibrate_symbol_duration(params, float(data["target_tap2"]))
        else:
            t_sym = symbol_duration_for_memory(params, memory)
        params = replace(params, symbol_duration=t_sym)
    return params, memory, float(data.get("sigma2", 0.1))
