"""Command-line front end.

Exit status: 0 success, 1 a theorem-backed check failed, 2 malformed input,
3 solver or estimator failure.  All randomness derives from ``--seed``.
The default Monte Carlo sample count (10^6) can be overridden with the
CHAOSMOMENTS_SAMPLES environment variable or ``--samples``.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Sequence

import numpy as np

from . import harness as H
from . import montecarlo as mc
from .fixtures import FAMILIES, SIZES, make_fixture
from .norms import (DEFAULT_RESTARTS, NormError, SolverError, exponential_closed_form,
                    injective_norm, partition_norm)
from .partitions import Partition, PartitionError, enumerate_partitions
from .tails import DistributionMatrix, TailError
from .tensor import CoefficientTensor, TensorError

EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2, 3


class InputError(ValueError):
    pass


def _floats(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _samples(text: str) -> int:
    try:
        return int(float(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a sample count, got {text!r}")


def _add_common(sp, mc_flags=True):
    sp.add_argument("--dist", action="append", metavar="SPEC",
                    help="generator law: exp, pow:r=<real>, gauss or table:<path>; give once for "
                         "all axes or once per axis (default exp)")
    sp.add_argument("--seed", type=int, default=0, help="master seed for all randomness (default 0)")
    sp.add_argument("--restarts", type=int, default=DEFAULT_RESTARTS,
                    help=f"random starts for multi-block norms (default {DEFAULT_RESTARTS})")
    sp.add_argument("--out", metavar="PATH", help="write the JSON report here instead of stdout")
    sp.add_argument("--csv", metavar="PATH", help="also write a flat CSV table here")
    if mc_flags:
        sp.add_argument("--samples", type=_samples, default=None,
                        help=f"Monte Carlo samples (default {mc.DEFAULT_SAMPLES}, or ${mc.SAMPLES_ENV})")
        sp.add_argument("--shards", type=int, default=mc.DEFAULT_SHARDS,
                        help=f"median-of-means shards (default {mc.DEFAULT_SHARDS})")
        sp.add_argument("--workers", type=int, default=1,
                        help="sampling threads; results do not depend on it (default 1)")
        sp.add_argument("--timing", action="store_true",
                        help="include wall-clock timings (reports are then not reproducible byte for byte)")


def _add_tensor_source(sp):
    sp.add_argument("--tensor", metavar="PATH", help="tensor JSON file")
    sp.add_argument("--d", type=int, help="fixture order when no --tensor is given")
    sp.add_argument("--n", type=int, help="fixture size (default: smallest ensemble size for --d)")
    sp.add_argument("--family", choices=FAMILIES, default="gaussian-sym",
                    help="fixture family (default gaussian-sym)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chaosmoments",
                                 description="Moment and tail bounds for polynomial chaoses, "
                                             "checked by Monte Carlo.")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("norm", help="partition norms, closed forms and injective norms")
    sp.add_argument("--tensor", metavar="PATH", required=True, help="tensor JSON file")
    sp.add_argument("--p", type=_floats, default=[2.0], help="comma-separated levels p >= 2 (default 2)")
    sp.add_argument("--partition", action="append", metavar="J",
                    help="partition such as 12|3 (repeatable)")
    sp.add_argument("--all-partitions", action="store_true",
                    help="every partition of the axes (default when no --partition)")
    sp.add_argument("--method", choices=("partition", "closed-form", "injective", "all"),
                    default="partition", help="quantity to compute (default partition)")
    sp.add_argument("--check-remark", action="store_true",
                    help="add partition_norm / (p^(k/2) injective_norm) ratios")
    _add_common(sp, mc_flags=False)

    sp = sub.add_parser("compare", help="bound totals vs Monte Carlo moments")
    _add_tensor_source(sp)
    sp.add_argument("--p", type=_floats, default=[2.0, 4.0, 8.0], help="levels (default 2,4,8)")
    sp.add_argument("--L-acc", dest="L_acc", type=float, default=None,
                    help="acceptance constant (default 8/32/64/128 for d=1/2/3/4)")
    _add_common(sp)

    sp = sub.add_parser("tail", help="tail probabilities at the bound thresholds")
    _add_tensor_source(sp)
    sp.add_argument("--t", type=_floats, default=[2.0, 3.0, 4.0], help="thresholds (default 2,3,4)")
    sp.add_argument("--L-max", dest="L_max", type=float, default=H.TAIL_L_MAX,
                    help=f"largest acceptable fitted constant (default {H.TAIL_L_MAX:g})")
    _add_common(sp)

    sp = sub.add_parser("decouple", help="undecoupled vs decoupled moments")
    sp.add_argument("--tensor", metavar="PATH", required=True,
                    help="symmetric tensor vanishing on repeated indices")
    sp.add_argument("--p", type=_floats, default=[2.0, 4.0], help="moment orders (default 2,4)")
    sp.add_argument("--L-tilde", dest="L_tilde", type=float, default=H.DECOUPLE_L,
                    help=f"acceptance constant (default {H.DECOUPLE_L:g})")
    _add_common(sp)

    sp = sub.add_parser("oracle", help="solver vs brute-force search on small tensors")
    sp.add_argument("--tensor", metavar="PATH", required=True, help="tensor JSON file")
    sp.add_argument("--p", type=float, default=4.0, help="level (default 4)")
    sp.add_argument("--resolution", type=float, default=0.05, help="grid spacing, at most 0.1 (default 0.05)")
    sp.add_argument("--partition", action="append", metavar="J", help="partition (default all)")
    sp.add_argument("--random-points", type=int, default=100_000,
                    help="random boundary tuples per cell (default 100000)")
    _add_common(sp, mc_flags=False)
    return ap


# -- helpers -------------------------------------------------------------------

def _load_tensor(args) -> CoefficientTensor:
    if getattr(args, "tensor", None):
        try:
            return CoefficientTensor.load(args.tensor)
        except OSError as exc:
            raise InputError(f"--tensor: cannot read {args.tensor}: {exc.strerror}")
    if args.d is None:
        raise InputError("give --tensor or --d for a fixture")
    if args.d not in SIZES:
        raise InputError(f"--d must be one of {sorted(SIZES)}, got {args.d}")
    n = args.n if args.n is not None else SIZES[args.d][0]
    if n < 1:
        raise InputError(f"--n must be positive, got {n}")
    return make_fixture(args.family, args.d, n).tensor


def _dists(args, T: CoefficientTensor) -> DistributionMatrix:
    specs = args.dist or ["exp"]
    try:
        return DistributionMatrix.from_specs(specs, T.dims)
    except TailError as exc:
        raise InputError(f"--dist: {exc}")


def _partitions(texts, d) -> list[Partition]:
    if not texts:
        return list(enumerate_partitions(d))
    out = []
    for t in texts:
        try:
            J = Partition.parse(t)
        except PartitionError as exc:
            raise InputError(f"--partition {t!r}: {exc}")
        if not J.covers(d):
            raise InputError(f"--partition {t!r} does not cover the axes 1..{d}")
        out.append(J)
    return out


def _config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("out", "csv", "func")}


def _mc(args) -> H.MCConfig:
    n = args.samples if args.samples is not None else mc.default_samples()
    return H.MCConfig(n_samples=n, shards=args.shards, seed=args.seed, workers=args.workers)


def _emit(args, doc: dict, rows: list | None = None) -> None:
    text = H.dumps(doc)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.csv and rows is not None:
        with open(args.csv, "w") as fh:
            fh.write(H.to_csv(rows))


# -- commands ------------------------------------------------------------------

def cmd_norm(args) -> int:
    T = _load_tensor(args)
    dists = _dists(args, T)
    parts = _partitions(args.partition, T.order) if not args.all_partitions else list(enumerate_partitions(T.order))
    methods = ("partition", "closed-form", "injective") if args.method == "all" else (args.method,)
    rows = []
    for J in parts:
        for m in methods:
            if m == "injective":
                nv = injective_norm(T.array, J, args.restarts, args.seed)
                rows.append({"partition": str(J), "method": m, "p": None, **_flat(nv)})
                continue
            for p in args.p:
                if m == "partition":
                    nv = partition_norm(T.array, J, p, dists, args.restarts, args.seed)
                else:
                    nv = exponential_closed_form(T.array, J, p, args.restarts, args.seed)
                rows.append({"partition": str(J), "method": m, "p": p, **_flat(nv)})
    doc = {"command": "norm", "config": _config(args), "tensor": {"order": T.order, "dims": list(T.dims)},
           "dists": dists.describe(), "rows": rows}
    code = EXIT_OK
    if args.check_remark:
        rep = H.run_gaussian_remark(T, args.p, dists, parts, restarts=args.restarts, seed=args.seed)
        doc["remark"] = rep.to_dict()
        if "gauss" not in dists.kinds():
            doc["remark"]["note"] = "ratios are only expected to be bounded for Gaussian generators"
        elif not rep.passed:
            code = EXIT_CHECK
    _emit(args, doc, rows)
    return code


def _flat(nv) -> dict:
    d = nv.to_dict()
    d.pop("extra", None)
    return d


def _report_exit(rep) -> int:
    if rep.errors:
        return EXIT_SOLVER
    return EXIT_OK if rep.passed else EXIT_CHECK


def cmd_compare(args) -> int:
    T = _load_tensor(args)
    rep = H.run_two_sided(T, _dists(args, T), args.p, _mc(args), args.L_acc, args.restarts, args.timing)
    _emit(args, {"command": "compare", "config": _config(args), "report": rep.to_dict()}, H.bound_rows(rep))
    return _report_exit(rep)


def cmd_tail(args) -> int:
    T = _load_tensor(args)
    if any(t <= 0 for t in args.t):
        raise InputError("--t: thresholds must be positive")
    rep = H.run_tail(T, _dists(args, T), args.t, _mc(args), args.L_max, args.restarts, args.timing)
    _emit(args, {"command": "tail", "config": _config(args), "report": rep.to_dict()}, H.tail_rows(rep))
    return _report_exit(rep)


def cmd_decouple(args) -> int:
    T = _load_tensor(args)
    rep = H.run_decouple(T, _dists(args, T), args.p, _mc(args), args.L_tilde)
    rows = [{"p": r["p"], "undecoupled": r["undecoupled"]["estimate"], "decoupled": r["decoupled"]["estimate"],
             "ratio": r["ratio"], "ratio_halfwidth": r["ratio_halfwidth"], "in_bracket": r["in_bracket"]}
            for r in rep.rows]
    _emit(args, {"command": "decouple", "config": _config(args), "report": rep.to_dict()}, rows)
    return EXIT_OK if rep.passed else EXIT_CHECK


def cmd_oracle(args) -> int:
    T = _load_tensor(args)
    parts = _partitions(args.partition, T.order)
    rep = H.run_oracle(T, _dists(args, T), args.p, args.resolution, parts, args.restarts, args.seed,
                       args.random_points)
    _emit(args, {"command": "oracle", "config": _config(args), "report": rep.to_dict()},
          [{k: v for k, v in r.items() if k != "designated"} | {"designated": "".join(map(str, r["designated"]))}
           for r in rep.rows])
    return EXIT_OK


COMMANDS = {"norm": cmd_norm, "compare": cmd_compare, "tail": cmd_tail, "decouple": cmd_decouple,
            "oracle": cmd_oracle}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with np.errstate(all="ignore"):
            return COMMANDS[args.command](args)
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except mc.EstimatorUnstable as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_SOLVER
    except (InputError, TensorError, TailError, PartitionError, NormError, mc.MonteCarloError) as exc:
        print(f"bad input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except json.JSONDecodeError as exc:
        print(f"bad input: --tensor is not valid JSON: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
