"""Monte Carlo harness and sweep presets.

Trial ``t`` draws its CIR from ``derive_stream(seed, t)`` and its observations
from a stream keyed additionally by the sweep point, so the same CIR
realizations are reused across sequence lengths and results do not depend on
how trials are split between worker processes.
"""

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import estimators as est
from .bounds import BoundError, bcrb, ccrb, expected_ccrb
from .channel import ChannelPrior, PhysicalParams, default_cir, design_matrix, prior_moments, sample_prior, simulate_observations
from .linalg import SingularMatrixError
from .rng import derive_stream
from .seqdesign import (
    isi_free_sequence,
    lmmse_upper_mse,
    lsse_criterion,
    repeat_sequence,
    search_lmmse,
    search_lsse,
)

log = logging.getLogger(__name__)

BASE_SEQUENCE = (1, 1, 0, 0, 1, 0, 0, 1, 0, 1)
ESTIMATORS = ("ml", "ml-sub", "lsse", "lsse-sub", "lsse-up", "map", "lmmse", "lmmse-up", "isif")
SEQUENCE_KINDS = ("repeat", "isi_free", "optimal_lsse", "optimal_lmmse")
MAX_FAILURE_FRACTION = 1e-3
DESK_TRIALS = 10_000


class ExperimentError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    name: str
    memories: tuple = (3,)
    sigma2s: tuple = (0.1,)
    lengths: tuple = (10, 20, 50, 100, 200, 500, 1000)
    trials: int = DESK_TRIALS
    seed: int = 1
    estimators: tuple = ("ml", "ml-sub", "lsse", "lsse-sub", "map", "lmmse")
    sequences: tuple = ("repeat",)
    bound_samples: int = 0
    params: PhysicalParams = field(default_factory=PhysicalParams)

    def validate(self):
        if self.trials < 1:
            raise ValueError("trials must be positive")
        if self.trials < 100:
            log.warning("only %d trials; standard errors will be large", self.trials)
        for L in self.memories:
            for k in self.lengths:
                if k < 2 * L:
                    raise ValueError(f"length {k} < 2L for L={L}")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown:
            raise ValueError(f"unknown estimators {sorted(unknown)}")
        unknown = set(self.sequences) - set(SEQUENCE_KINDS)
        if unknown:
            raise ValueError(f"unknown sequence kinds {sorted(unknown)}")


@dataclass
class MetricRow:
    preset: str
    memory: int
    sigma2: float
    sequence: str
    estimator: str
    K: int
    trials: int
    failures: int
    bias_norm: float
    bias_norm_se: float
    error_variance: float
    error_variance_se: float
    normalized_variance: float
    normalized_variance_se: float
    mse: float
    mse_se: float
    analytic_mse: float = math.nan
    ccrb: float = math.nan
    expected_ccrb: float = math.nan
    expected_ccrb_se: float = math.nan
    bcrb: float = math.nan
    bcrb_se: float = math.nan
    training_sequence: str = ""


CSV_COLUMNS = tuple(f.name for f in fields(MetricRow))


@dataclass
class MetricSeries:
    rows: list

    def select(self, **kw):
        return [r for r in self.rows if all(getattr(r, k) == v for k, v in kw.items())]

    def get(self, **kw):
        found = self.select(**kw)
        if len(found) != 1:
            raise KeyError(f"{len(found)} rows match {kw}")
        return found[0]


def _env_workers():
    raw = os.environ.get("MCCIR_THREADS")
    cpus = os.cpu_count() or 1
    if not raw:
        return cpus
    return max(1, min(int(raw), cpus))


@dataclass
class _Point:
    # everything a worker needs for one sweep point
    memory: int
    sigma2: float
    seq: np.ndarray
    s_mat: np.ndarray
    prior: ChannelPrior
    moments: object
    estimators: tuple
    seed: int
    stream_key: tuple
    lmmse_f: np.ndarray = None
    k0: int = None


def _estimate(name, r, pt):
    if name == "ml":
        return est.ml_estimate(r, pt.s_mat).cir
    if name == "ml-sub":
        return est.ml_suboptimal(r, pt.s_mat)
    if name == "lsse":
        return est.lsse_estimate(r, pt.s_mat).cir
    if name == "lsse-sub":
        return est.lsse_suboptimal(r, pt.s_mat)
    if name == "lsse-up":
        g = pt.s_mat.T @ pt.s_mat
        return np.linalg.solve(g, pt.s_mat.T @ r)
    if name == "map":
        return est.map_estimate(r, pt.s_mat, pt.moments).cir
    if name == "lmmse":
        return est.lmmse_estimate(r, pt.lmmse_f)
    if name == "lmmse-up":
        return pt.lmmse_f @ r
    if name == "isif":
        return est.isi_free_estimate(r, pt.seq, pt.memory, pt.k0)
    raise ValueError(name)


_FAILURES = (est.NoSolutionError, est.ConvergenceError, SingularMatrixError, np.linalg.LinAlgError)


def _run_chunk(pt, start, stop):
    n_est = len(pt.estimators)
    p = pt.memory + 1
    errors = np.full((stop - start, n_est, p), np.nan)
    truths = np.empty((stop - start, p))
    for i, t in enumerate(range(start, stop)):
        cir = sample_prior(pt.prior, derive_stream(pt.seed, t))
        r = simulate_observations(cir, pt.s_mat, derive_stream(pt.seed, t, *pt.stream_key))
        truths[i] = cir
        for j, name in enumerate(pt.estimators):
            try:
                errors[i, j] = _estimate(name, r, pt) - cir
            except _FAILURES as exc:
                log.debug("trial %d: %s failed: %s", t, name, exc)
    return errors, truths


def _run_point(pt, trials, workers):
    if workers <= 1 or trials < 200:
        return _run_chunk(pt, 0, trials)
    bounds = np.linspace(0, trials, workers * 4 + 1).astype(int)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_chunk, [pt] * (bounds.size - 1), bounds[:-1], bounds[1:]))
    return np.concatenate([e for e, _ in parts]), np.concatenate([t for _, t in parts])


def summarize_errors(errors, norm_sq):
    """Bias norm, error variance, normalized variance and mse with standard errors.

    ``errors`` has one row per valid trial; two-pass moments.
    """
    n = errors.shape[0]
    if n < 2:
        nan = math.nan
        return dict(bias_norm=nan, bias_norm_se=nan, error_variance=nan, error_variance_se=nan,
                    normalized_variance=nan, normalized_variance_se=nan, mse=nan, mse_se=nan)
    mean = errors.mean(axis=0)
    dev = errors - mean
    bias = float(np.linalg.norm(mean))
    cov = dev.T @ dev / (n - 1)
    bias_se = float(np.sqrt(max(mean @ cov @ mean, 0.0) / n) / bias) if bias > 0 else float(np.sqrt(np.trace(cov) / n))
    sq = np.sum(dev * dev, axis=1) * n / (n - 1)
    var = float(sq.mean())
    var_se = float(sq.std(ddof=1) / np.sqrt(n))
    tot = np.sum(errors * errors, axis=1)
    return dict(
        bias_norm=bias, bias_norm_se=bias_se,
        error_variance=var, error_variance_se=var_se,
        normalized_variance=var / norm_sq, normalized_variance_se=var_se / norm_sq,
        mse=float(tot.mean()), mse_se=float(tot.std(ddof=1) / np.sqrt(n)),
    )


def _build_sequence(kind, length, memory, moments):
    if kind == "repeat":
        if length % len(BASE_SEQUENCE):
            raise ValueError(f"repeated base sequence needs K divisible by {len(BASE_SEQUENCE)}")
        return repeat_sequence(BASE_SEQUENCE, length // len(BASE_SEQUENCE))
    if kind == "isi_free":
        return isi_free_sequence(length, memory, 1)
    if kind == "optimal_lsse":
        return search_lsse(length, memory, moments.mean)[0]
    if kind == "optimal_lmmse":
        return search_lmmse(length, memory, moments)[0]
    raise ValueError(kind)


def _analytic(name, s_mat, moments):
    if name in ("lsse", "lsse-sub", "lsse-up", "isif"):
        return lsse_criterion(s_mat, moments.mean)
    if name in ("lmmse", "lmmse-up"):
        return lmmse_upper_mse(s_mat, moments)
    return math.nan


def _bounds(prior, moments, s_mat, samples, seed):
    out = dict(ccrb=math.nan, expected_ccrb=math.nan, expected_ccrb_se=math.nan, bcrb=math.nan, bcrb_se=math.nan)
    try:
        out["ccrb"] = ccrb(moments.mean, s_mat)
    except BoundError as exc:
        log.warning("classical bound undefined: %s", exc)
    if samples <= 0:
        return out
    try:
        e = expected_ccrb(prior, s_mat, samples, seed)
        out.update(expected_ccrb=e.value, expected_ccrb_se=e.stderr)
    except BoundError as exc:
        log.warning("expected classical bound skipped: %s", exc)
    if prior.sigma > 0:
        try:
            b = bcrb(prior, s_mat, samples, seed)
            out.update(bcrb=b.value, bcrb_se=b.stderr)
        except BoundError as exc:
            log.warning("Bayesian bound skipped: %s", exc)
    return out


def run_trials(config, workers=None):
    """Run every sweep point of ``config`` and return the metric rows."""
    config.validate()
    workers = _env_workers() if workers is None else workers
    rows = []
    for li, L in enumerate(config.memories):
        cdef = default_cir(L, config.params)
        for si, sigma2 in enumerate(config.sigma2s):
            prior = ChannelPrior.from_variance(cdef, sigma2)
            moments = prior_moments(prior)
            norm_sq = float(moments.mean @ moments.mean)
            for qi, kind in enumerate(config.sequences):
                for K in config.lengths:
                    seq = _build_sequence(kind, K, L, moments)
                    s_mat = design_matrix(seq, L)
                    k0 = est.isi_free_offset(seq, L)
                    names = tuple(n for n in config.estimators if n != "isif" or k0 is not None)
                    if "map" in names and prior.sigma == 0:
                        raise ValueError("MAP needs a prior with sigma > 0")
                    pt = _Point(L, sigma2, seq, s_mat, prior, moments, names, config.seed,
                                (K, li, si, qi), k0=k0)
                    if any(n.startswith("lmmse") for n in names):
                        pt.lmmse_f = est.lmmse_matrix(s_mat, moments)
                    log.info("point L=%d sigma2=%g seq=%s K=%d", L, sigma2, kind, K)
                    errors, _ = _run_point(pt, config.trials, workers)
                    bnd = _bounds(prior, moments, s_mat, config.bound_samples, config.seed)
                    seq_str = "".join(str(int(b)) for b in seq) if K <= 64 else ""
                    for j, name in enumerate(names):
                        e = errors[:, j]
                        ok = ~np.any(np.isnan(e), axis=1)
                        failures = int(np.sum(~ok))
                        if failures > MAX_FAILURE_FRACTION * config.trials:
                            raise ExperimentError(
                                f"{name} failed in {failures}/{config.trials} trials (L={L}, K={K})")
                        if failures:
                            log.warning("%s failed in %d trials at L=%d K=%d", name, failures, L, K)
                        rows.append(MetricRow(
                            preset=config.name, memory=L, sigma2=sigma2, sequence=kind, estimator=name,
                            K=K, trials=int(ok.sum()), failures=failures,
                            analytic_mse=_analytic(name, s_mat, moments),
                            training_sequence=seq_str,
                            **summarize_errors(e[ok], norm_sq), **bnd,
                        ))
    return MetricSeries(rows)


PRESETS = ("mean_k", "var_k", "var_k_cir", "var_k_l", "seq_lsse", "seq_mmse", "table1")


def preset(name, trials=DESK_TRIALS, seed=1):
    lengths = (10, 20, 50, 100, 200, 500, 1000)
    if name == "mean_k":
        return ExperimentConfig(name, (3,), (0.1,), lengths, trials, seed)
    if name == "var_k":
        return ExperimentConfig(name, (3,), (0.1,), lengths, trials, seed, bound_samples=10_000)
    if name == "var_k_cir":
        return ExperimentConfig(name, (3,), (0.01, 0.05, 0.1, 0.5, 1.0), lengths, trials, seed,
                                ("lsse-sub", "lmmse"), bound_samples=10_000)
    if name == "var_k_l":
        return ExperimentConfig(name, (1, 2, 3, 4, 5), (0.1,), lengths, trials, seed, ("lsse-sub", "lmmse"))
    if name == "seq_lsse":
        return ExperimentConfig(name, (1, 2, 3, 4, 5), (0.1,), (10, 14, 20), trials, seed,
                                ("lsse", "isif"), ("optimal_lsse", "isi_free"))
    if name == "seq_mmse":
        return ExperimentConfig(name, (1, 3, 5), (0.1,), (10, 14, 20), trials, seed,
                                ("lmmse",), ("optimal_lmmse", "isi_free"))
    if name == "table1":
        return ExperimentConfig(name, (1, 3, 5), (0.1,), (10, 20), trials, seed, (), ())
    raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")


TABLE1_COLUMNS = ("memory", "K", "sigma2", "criterion", "sequence", "value", "isi_free")


def run_table1(config):
    """Optimal LSSE and LMMSE sequences for every (L, K) of the config."""
    rows = []
    for L in config.memories:
        cdef = default_cir(L, config.params)
        for sigma2 in config.sigma2s:
            moments = prior_moments(ChannelPrior.from_variance(cdef, sigma2))
            for K in config.lengths:
                for crit, search in (("lsse", lambda: search_lsse(K, L, moments.mean)),
                                     ("lmmse", lambda: search_lmmse(K, L, moments))):
                    seq, value = search()
                    rows.append(dict(memory=L, K=K, sigma2=sigma2, criterion=crit,
                                     sequence="".join(str(int(b)) for b in seq), value=value,
                                     isi_free=est.isi_free_offset(seq, L) is not None))
    return rows


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_metrics_csv(series, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in series.rows:
            w.writerow([_fmt(getattr(row, c)) for c in CSV_COLUMNS])


def write_table1_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE1_COLUMNS)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in TABLE1_COLUMNS])


def write_summary_json(config, payload, path):
    cfg = asdict(config)
    cfg["params"] = asdict(config.params)
    Path(path).write_text(json.dumps({"config": cfg, "results": payload}, indent=2, sort_keys=True, default=float) + "\n")
