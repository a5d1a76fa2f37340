"""Command-line front end.

Exit codes: 0 success, 2 usage or configuration error, 1 numeric failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import estimators as est
from .bounds import BoundError, bcrb, ccrb, expected_ccrb
from .channel import ChannelPrior, default_cir, design_matrix, load_config, physical_cir, prior_moments
from .experiments import (
    PRESETS,
    ExperimentError,
    preset,
    run_table1,
    run_trials,
    write_metrics_csv,
    write_summary_json,
    write_table1_csv,
)
from .linalg import SingularMatrixError
from .seqdesign import SearchError, search_lmmse, search_lsse

METHODS = ("ml", "ml-sub", "lsse", "lsse-sub", "map", "lmmse", "isif")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def read_vector(path):
    """One number per line; blank lines and ``#`` comments are ignored."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc
    vals = []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            vals.append(float(line))
        except ValueError:
            raise UsageError(f"{path}:{n}: not a number: {line!r}") from None
    return np.array(vals)


def read_prior(path, memory):
    """JSON ``{"default_cir": [...], "sigma2": s}``; ``default_cir`` may be omitted."""
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict) or "sigma2" not in data:
        raise UsageError(f"{path}: prior needs a 'sigma2' entry")
    cdef = np.asarray(data.get("default_cir", default_cir(memory)), dtype=float)
    if cdef.size != memory + 1:
        raise UsageError(f"{path}: default_cir needs {memory + 1} entries for L={memory}")
    return ChannelPrior.from_variance(cdef, float(data["sigma2"]))


def _load_config(path):
    try:
        return load_config(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc
    except (ValueError, TypeError) as exc:
        raise UsageError(f"{path}: {exc}") from exc


def _emit(obj):
    print(json.dumps(obj, indent=2))


def cmd_cir(args):
    params, memory, _ = _load_config(args.config)
    if args.L is not None:
        memory = args.L
    cir = physical_cir(params, memory)
    _emit({"memory": memory, "symbol_duration": params.symbol_duration,
           "taps": cir[:-1].tolist(), "noise": float(cir[-1]), "cir": cir.tolist()})


def cmd_estimate(args):
    seq = read_vector(args.seq)
    r = read_vector(args.obs)
    L = args.L
    try:
        s_mat = design_matrix(seq, L)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if r.size != s_mat.shape[0]:
        raise UsageError(f"observation file has {r.size} values; K - L + 1 = {s_mat.shape[0]}")
    if np.any(r < 0):
        raise UsageError("observations must be non-negative")
    moments = None
    if args.method in ("map", "lmmse"):
        if args.prior is None:
            raise UsageError(f"--prior is required for method {args.method}")
        moments = prior_moments(read_prior(args.prior, L))

    subset, objective, iters = None, None, 0
    m = args.method
    if m == "ml":
        res = est.ml_estimate(r, s_mat)
    elif m == "lsse":
        res = est.lsse_estimate(r, s_mat)
    elif m == "map":
        res = est.map_estimate(r, s_mat, moments)
    else:
        res = None
        if m == "ml-sub":
            cir = est.ml_suboptimal(r, s_mat)
            objective = est.log_likelihood(cir, r, s_mat)
        elif m == "lsse-sub":
            cir = est.lsse_suboptimal(r, s_mat)
            objective = est.sse(cir, r, s_mat)
        elif m == "lmmse":
            cir = est.lmmse_estimate(r, est.lmmse_matrix(s_mat, moments))
        else:
            k0 = args.k0 or est.isi_free_offset(seq, L)
            if k0 is None or est.isi_free_offset(seq, L) != k0:
                raise UsageError(f"isif needs an ISI-free sequence (one release every {L + 1} intervals)")
            cir = est.isi_free_estimate(r, seq, L, k0)
    if res is not None:
        cir, subset, objective, iters = res.cir, list(res.active_subset), res.objective, res.solver_iterations
    _emit({"method": m, "cir": [float(v) for v in cir], "active_subset": subset,
           "objective": None if objective is None else float(objective), "iterations": iters})


def cmd_bounds(args):
    seq = read_vector(args.seq)
    try:
        s_mat = design_matrix(seq, args.L)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    prior = read_prior(args.prior, args.L)
    moments = prior_moments(prior)
    out = {"ccrb": ccrb(moments.mean, s_mat)}
    e = expected_ccrb(prior, s_mat, args.samples, args.seed)
    out["expected_ccrb"], out["expected_ccrb_se"] = e.value, e.stderr
    if prior.sigma > 0:
        b = bcrb(prior, s_mat, args.samples, args.seed)
        out["bcrb"], out["bcrb_se"] = b.value, b.stderr
    _emit(out)


def cmd_seqsearch(args):
    cdef = default_cir(args.L)
    moments = prior_moments(ChannelPrior.from_variance(cdef, args.sigma2))
    try:
        if args.criterion == "lsse":
            seq, val = search_lsse(args.K, args.L, moments.mean, args.eps)
        else:
            seq, val = search_lmmse(args.K, args.L, moments)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    _emit({"criterion": args.criterion, "K": args.K, "L": args.L, "sigma2": args.sigma2,
           "sequence": [int(b) for b in seq], "value": val})


def cmd_experiment(args):
    try:
        cfg = preset(args.preset, args.trials, args.seed)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.preset == "table1":
        rows = run_table1(cfg)
        write_table1_csv(rows, out / "table1.csv")
        write_summary_json(cfg, rows, out / "table1.json")
        print(out / "table1.csv")
        return
    series = run_trials(cfg)
    write_metrics_csv(series, out / f"{args.preset}.csv")
    write_summary_json(cfg, [r.__dict__ for r in series.rows], out / f"{args.preset}.json")
    print(out / f"{args.preset}.csv")


def build_parser():
    p = _Parser(prog="mccir", description="CIR estimation for diffusive molecular channels")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("cir", help="physical CIR from a JSON config")
    c.add_argument("config")
    c.add_argument("--L", type=int, help="override the memory in the config")
    c.set_defaults(func=cmd_cir)

    e = sub.add_parser("estimate", help="estimate the CIR from observed counts")
    e.add_argument("--method", choices=METHODS, required=True)
    e.add_argument("--seq", required=True, help="training sequence, one symbol per line")
    e.add_argument("--obs", required=True, help="counts for intervals L..K, one per line")
    e.add_argument("--L", type=int, required=True)
    e.add_argument("--prior", help="JSON prior (map, lmmse)")
    e.add_argument("--k0", type=int, help="first release interval of an ISI-free sequence")
    e.set_defaults(func=cmd_estimate)

    b = sub.add_parser("bounds", help="classical and Bayesian bounds for a sequence")
    b.add_argument("--seq", required=True)
    b.add_argument("--L", type=int, required=True)
    b.add_argument("--prior", required=True)
    b.add_argument("--samples", type=int, default=10_000)
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=cmd_bounds)

    s = sub.add_parser("seqsearch", help="exhaustive training-sequence search")
    s.add_argument("--criterion", choices=("lsse", "lmmse"), required=True)
    s.add_argument("--K", type=int, required=True)
    s.add_argument("--L", type=int, required=True)
    s.add_argument("--sigma2", type=float, default=0.1)
    s.add_argument("--eps", type=float, default=1e-9)
    s.set_defaults(func=cmd_seqsearch)

    x = sub.add_parser("experiment", help="run an experiment preset")
    x.add_argument("--preset", required=True, help=", ".join(PRESETS))
    x.add_argument("--trials", type=int, default=10_000)
    x.add_argument("--seed", type=int, default=1)
    x.add_argument("--out", default=".")
    x.set_defaults(func=cmd_experiment)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"mccir: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"mccir: error: {exc}", file=sys.stderr)
        return 2
    except (est.NoSolutionError, est.ConvergenceError, SingularMatrixError, np.linalg.LinAlgError,
            BoundError, SearchError, ExperimentError) as exc:
        print(f"mccir: numeric failure: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"mccir: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
