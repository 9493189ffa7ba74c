"""Experiments comparing the deterministic bounds with Monte Carlo, and their reports.

Every report is a dataclass with ``to_dict``/``from_dict``; ``dumps`` writes
sorted-key JSON so equal runs give byte-identical files.  Wall-clock timing is
only included on request because it would break that property.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from . import montecarlo as mc
from .norms import (DEFAULT_RESTARTS, EXPONENTIAL, GENERAL, HEURISTIC, NormError, SolverError,
                    bound_total, injective_norm, partition_norm, regime)
from .partitions import Partition, enumerate_partitions
from .tails import DistributionMatrix
from .tensor import CoefficientTensor

DEFAULT_L_ACC = {1: 8.0, 2: 32.0, 3: 64.0, 4: 128.0}
TAIL_L_MAX = 16.0
REMARK_BRACKET = 16.0
DECOUPLE_L = 20.0
MIN_EXPECTED_HITS = 100
CI_WIDEN = 3.0


@dataclass
class MCConfig:
    n_samples: int | None = None
    shards: int = mc.DEFAULT_SHARDS
    seed: int = 0
    workers: int = 1

    def samples(self) -> int:
        return mc.default_samples() if self.n_samples is None else int(self.n_samples)


class _Report:
    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in doc.items() if k in names})

    def dumps(self) -> str:
        return dumps(self.to_dict())


def dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def _tensor(A) -> CoefficientTensor:
    return A if isinstance(A, CoefficientTensor) else CoefficientTensor(A)


def _theorem_backed(reg: str) -> bool:
    return reg in (GENERAL, EXPONENTIAL)


# -- two-sided moment comparison ----------------------------------------------

@dataclass
class BoundReport(_Report):
    spec: dict
    p_grid: list
    norms: dict          # str(p) -> {partition text -> NormValue dict}
    totals: list
    moments: list        # MomentEstimate dicts (None where the estimator failed)
    ratios: list
    regime: str
    seed: int
    L_acc: float
    checks: list
    degenerate: bool
    passed: bool
    errors: list = field(default_factory=list)
    timing: dict | None = None


def run_two_sided(A, dists: DistributionMatrix, p_grid: Sequence[float], config: MCConfig | None = None,
                  L_acc: float | None = None, restarts: int = DEFAULT_RESTARTS,
                  timing: bool = False) -> BoundReport:
    """Bound totals and MC moments for each p, and the ratio moment / total.

    Checks (theorem-backed regimes only) are made with the moment widened by
    three half-widths: lower ``moment + 3h >= total / L_acc`` and upper
    ``moment - 3h <= L_acc * total``.
    """
    config = config or MCConfig()
    T = _tensor(A)
    d = T.order
    reg = regime(d, dists)
    L = float(L_acc if L_acc is not None else DEFAULT_L_ACC[d])
    errors = []
    t0 = time.perf_counter()
    norms, totals = {}, []
    for p in p_grid:
        try:
            bt = bound_total(T.array, p, dists, restarts, config.seed)
            norms[repr(float(p))] = {str(J): nv.to_dict() for J, nv in bt.norms.items()}
            totals.append(bt.total)
        except SolverError as exc:
            errors.append({"stage": "norm", "p": p, "message": str(exc), **_jsonable(exc.diagnostics)})
            totals.append(None)
    t1 = time.perf_counter()
    spec = mc.ChaosSpec(T, dists)
    moments = [None] * len(p_grid)
    samples = mc.chaos_shards(spec, config.samples(), config.shards, config.seed, workers=config.workers)
    for j, p in enumerate(p_grid):
        try:
            moments[j] = mc.moment_from_shards(samples, p).to_dict()
        except mc.EstimatorUnstable as exc:
            errors.append({"stage": "moment", "p": p, "message": str(exc)})
    t2 = time.perf_counter()

    ratios, checks = [], []
    degenerate = False
    passed = not errors
    for p, total, m in zip(p_grid, totals, moments):
        if total is None or m is None:
            ratios.append(None)
            checks.append({"p": p, "lower": False, "upper": False})
            passed = False
            continue
        est, h = m["estimate"], m["halfwidth"]
        if total == 0 and est == 0:
            degenerate = True
            ratios.append(1.0)
            checks.append({"p": p, "lower": True, "upper": True})
            continue
        ratios.append(est / total if total > 0 else math.inf)
        lower = est + CI_WIDEN * h >= total / L
        upper = est - CI_WIDEN * h <= L * total
        checks.append({"p": p, "lower": bool(lower), "upper": bool(upper)})
        if _theorem_backed(reg) and not (lower and upper):
            passed = False
    return BoundReport(
        spec=spec.describe(), p_grid=[float(p) for p in p_grid], norms=norms, totals=totals,
        moments=moments, ratios=ratios, regime=reg, seed=config.seed, L_acc=L, checks=checks,
        degenerate=degenerate, passed=passed, errors=errors,
        timing={"norms_s": t1 - t0, "monte_carlo_s": t2 - t1} if timing else None)


def _jsonable(diag: dict) -> dict:
    out = {}
    for k, v in diag.items():
        if isinstance(v, np.ndarray):
            v = v.tolist()
        elif isinstance(v, np.generic):
            v = v.item()
        out[k] = v
    return out


def bound_rows(report: BoundReport) -> list[dict]:
    """One CSV row per p: total, moment, half-width, ratio, checks."""
    rows = []
    for j, p in enumerate(report.p_grid):
        m = report.moments[j] or {}
        rows.append({"p": p, "total": report.totals[j], "moment": m.get("estimate"),
                     "halfwidth": m.get("halfwidth"), "ratio": report.ratios[j],
                     "lower_ok": report.checks[j]["lower"], "upper_ok": report.checks[j]["upper"],
                     "regime": report.regime})
    return rows


# -- tails ----------------------------------------------------------------------

@dataclass
class TailReport(_Report):
    spec: dict
    t_grid: list
    levels: list
    clamped: list
    thresholds: list
    tails: list          # TailEstimate dicts
    insufficient: list
    L_lower: float | None
    L_upper: float | None
    L_fit: float | None
    L_max: float
    regime: str
    seed: int
    passed: bool
    errors: list = field(default_factory=list)
    timing: dict | None = None


def _fit_lower(ts, ps) -> float:
    """Smallest L >= 1 with (1/L) exp(-L t) <= P(t) at every point."""
    def need(L):
        return min(math.log(pr) + math.log(L) + L * t for t, pr in zip(ts, ps))
    if need(1.0) >= 0:
        return 1.0
    hi = 2.0
    while need(hi) < 0:
        hi *= 2.0
    return brentq(need, hi / 2, hi, xtol=1e-12)


def _fit_upper(ts, ps) -> float:
    """Smallest L >= 1 with P(t) <= L exp(-t / L) at every point."""
    def need(L):
        return min(math.log(L) - t / L - math.log(pr) for t, pr in zip(ts, ps))
    if need(1.0) >= 0:
        return 1.0
    hi = 2.0
    while need(hi) < 0:
        hi *= 2.0
    return brentq(need, hi / 2, hi, xtol=1e-12)


def fit_tail_constants(ts, ps) -> tuple[float | None, float | None]:
    pts = [(t, p) for t, p in zip(ts, ps) if p > 0]
    if not pts:
        return None, None
    tt, pp = zip(*pts)
    return _fit_lower(tt, pp), _fit_upper(tt, pp)


def run_tail(A, dists: DistributionMatrix, t_grid: Sequence[float], config: MCConfig | None = None,
             L_max: float = TAIL_L_MAX, restarts: int = DEFAULT_RESTARTS, timing: bool = False) -> TailReport:
    """Empirical P(|S| >= sum_J ||A||_{J,t}) against exponential brackets in t.

    Norm levels below 2 are clamped to 2 and flagged.  Cells where even the
    Wilson upper bound predicts fewer than 100 hits are marked insufficient
    and left out of the fit.
    """
    config = config or MCConfig()
    T = _tensor(A)
    reg = regime(T.order, dists)
    errors = []
    t0 = time.perf_counter()
    levels = [max(float(t), 2.0) for t in t_grid]
    clamped = [float(t) < 2.0 for t in t_grid]
    thresholds = []
    for lv in levels:
        try:
            thresholds.append(bound_total(T.array, lv, dists, restarts, config.seed).total)
        except SolverError as exc:
            errors.append({"stage": "norm", "level": lv, "message": str(exc)})
            thresholds.append(None)
    t1 = time.perf_counter()
    samples = mc.chaos_shards(mc.ChaosSpec(T, dists), config.samples(), config.shards, config.seed,
                              workers=config.workers)
    tails, insufficient = [], []
    for th in thresholds:
        if th is None:
            tails.append(None)
            insufficient.append(True)
            continue
        te = mc.tail_from_samples(samples, th)
        tails.append(te.to_dict())
        insufficient.append(te.n * te.upper < MIN_EXPECTED_HITS)
    t2 = time.perf_counter()
    ts = [float(t) for t, bad in zip(t_grid, insufficient) if not bad]
    ps = [tails[j]["probability"] for j, bad in enumerate(insufficient) if not bad]
    lo, up = fit_tail_constants(ts, ps)
    fit = None if lo is None else max(lo, up)
    passed = not errors and (fit is None or fit <= L_max or not _theorem_backed(reg))
    return TailReport(
        spec=mc.ChaosSpec(T, dists).describe(), t_grid=[float(t) for t in t_grid], levels=levels,
        clamped=clamped, thresholds=thresholds, tails=tails, insufficient=insufficient,
        L_lower=lo, L_upper=up, L_fit=fit, L_max=float(L_max), regime=reg, seed=config.seed,
        passed=bool(passed), errors=errors,
        timing={"norms_s": t1 - t0, "monte_carlo_s": t2 - t1} if timing else None)


def tail_rows(report: TailReport) -> list[dict]:
    rows = []
    for j, t in enumerate(report.t_grid):
        te = report.tails[j] or {}
        rows.append({"t": t, "level": report.levels[j], "clamped": report.clamped[j],
                     "threshold": report.thresholds[j], "probability": te.get("probability"),
                     "lower": te.get("lower"), "upper": te.get("upper"),
                     "insufficient": report.insufficient[j], "L_fit": report.L_fit})
    return rows


# -- Gaussian p^{k/2} comparison --------------------------------------------------

@dataclass
class RemarkReport(_Report):
    rows: list
    bracket: list
    passed: bool


def run_gaussian_remark(A, p_grid: Sequence[float], dists: DistributionMatrix | None = None,
                        partitions: Sequence[Partition] | None = None, bracket: float = REMARK_BRACKET,
                        restarts: int = DEFAULT_RESTARTS, seed: int = 0) -> RemarkReport:
    """partition_norm / (p**(k/2) * injective_norm) for each partition and p."""
    from .tails import gaussian

    T = _tensor(A)
    dists = dists or DistributionMatrix.iid(gaussian(), T.dims)
    parts = list(partitions) if partitions is not None else list(enumerate_partitions(T.order))
    rows = []
    passed = True
    for J in parts:
        inj = injective_norm(T.array, J, restarts, seed)
        for p in p_grid:
            nv = partition_norm(T.array, J, p, dists, restarts, seed)
            den = p ** (J.k / 2) * inj.value
            ratio = nv.value / den if den > 0 else (1.0 if nv.value == 0 else math.inf)
            ok = 1 / bracket <= ratio <= bracket
            passed = passed and ok
            rows.append({"partition": str(J), "k": J.k, "p": float(p), "norm": nv.value,
                         "norm_status": nv.status, "injective": inj.value,
                         "injective_status": inj.status, "ratio": ratio, "in_bracket": bool(ok)})
    return RemarkReport(rows, [1 / bracket, bracket], bool(passed))


# -- decoupling -----------------------------------------------------------------------

@dataclass
class DecoupleReport(_Report):
    spec: dict
    rows: list
    L_tilde: float
    seed: int
    passed: bool


def run_decouple(A, dists: DistributionMatrix, p_grid: Sequence[float], config: MCConfig | None = None,
                 L_tilde: float = DECOUPLE_L) -> DecoupleReport:
    """Undecoupled / decoupled moment ratios, checked against [1/L, L] with 3 half-widths."""
    config = config or MCConfig()
    T = _tensor(A)
    rows = []
    passed = True
    for p in p_grid:
        res = mc.decouple_compare(T, dists, p, config.samples(), config.seed, config.shards, config.workers)
        w = CI_WIDEN * res.ratio_halfwidth
        ok = res.ratio + w >= 1 / L_tilde and res.ratio - w <= L_tilde
        passed = passed and ok
        rows.append({"p": float(p), **res.to_dict(), "in_bracket": bool(ok)})
    return DecoupleReport(mc.ChaosSpec(T, dists).describe(), rows, float(L_tilde), config.seed, bool(passed))


# -- oracle comparison -------------------------------------------------------------

@dataclass
class OracleReport(_Report):
    p: float
    resolution: float
    rows: list


def run_oracle(A, dists: DistributionMatrix, p: float, resolution: float = 0.05,
               partitions: Sequence[Partition] | None = None, restarts: int = DEFAULT_RESTARTS,
               seed: int = 0, n_random: int = 100_000) -> OracleReport:
    """Solver vs brute-force value for every (partition, designated coordinates) cell.

    Cells whose blocks exceed the oracle's dimension limit are listed as skipped.
    """
    import itertools

    from .norms import designated_sup
    from .oracle import brute_force_sup

    T = _tensor(A)
    parts = list(partitions) if partitions is not None else list(enumerate_partitions(T.order))
    rows = []
    for J in parts:
        for des in itertools.product(*J.blocks):
            nv, _ = designated_sup(T.array, J, des, p, dists, restarts, seed)
            row = {"partition": str(J), "designated": list(des), "solver": nv.value,
                   "solver_status": nv.status}
            try:
                ov = brute_force_sup(T.array, J, p, dists, resolution, des, n_random, seed)
                row.update(oracle=ov.value, oracle_error_bound=ov.error_bound,
                           diff=nv.value - ov.value, skipped=False)
            except NormError as exc:
                row.update(oracle=None, oracle_error_bound=None, diff=None, skipped=True,
                           reason=str(exc))
            rows.append(row)
    return OracleReport(float(p), float(resolution), rows)


# -- serialization ----------------------------------------------------------------

def to_csv(rows: Sequence[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    names = list(rows[0].keys())
    for r in rows[1:]:
        names += [k for k in r if k not in names]
    w = csv.DictWriter(buf, fieldnames=names, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if v is None else v) for k, v in r.items()})
    return buf.getvalue()


REPORT_TYPES = {"bound": BoundReport, "tail": TailReport, "remark": RemarkReport,
                "decouple": DecoupleReport, "oracle": OracleReport}


def load_report(kind: str, text: str):
    return REPORT_TYPES[kind].from_dict(json.loads(text))


__all__ = ["MCConfig", "BoundReport", "TailReport", "RemarkReport", "DecoupleReport", "OracleReport",
           "run_two_sided", "run_tail", "run_gaussian_remark", "run_decouple", "run_oracle",
           "fit_tail_constants", "bound_rows", "tail_rows", "to_csv", "dumps", "load_report",
           "DEFAULT_L_ACC", "HEURISTIC"]
