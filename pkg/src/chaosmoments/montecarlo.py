"""Monte Carlo sampling of chaoses, moment and tail estimation, decoupling checks.

Samples are split into shards, each drawn from its own counter-based stream
keyed by (seed, purpose tag, shard, chunk), so results do not depend on the
number of worker threads.  Moments use median-of-means over shards, with the
median taken after the 1/p power so the estimate is nondecreasing in p.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .rng import DECOUPLED, SHARD, UNDECOUPLED, stream
from .tails import DistributionMatrix, TailFunction
from .tensor import CoefficientTensor, as_array

DEFAULT_SAMPLES = 1_000_000
DEFAULT_SHARDS = 32
MIN_SAMPLES = 10_000
MIN_SHARDS = 8
MAX_P = 16
CHUNK = 1 << 16
SAMPLES_ENV = "CHAOSMOMENTS_SAMPLES"

DECOUPLED_MODE = "decoupled"
UNDECOUPLED_MODE = "undecoupled"

# 95% normal quantile, efficiency of the median, MAD-to-sigma factor
_Z95 = 1.959963984540054
_MEDIAN_SE = math.sqrt(math.pi / 2)
_MAD_SIGMA = 1.482602218505602


class MonteCarloError(ValueError):
    """Rejected Monte Carlo configuration."""


class EstimatorUnstable(ArithmeticError):
    """|S|^p overflowed for the given p."""

    def __init__(self, p: float):
        super().__init__(f"estimator unstable: |S|^p overflows at p={p}")
        self.p = p


class HighMomentWarning(UserWarning):
    """Relative error of moment estimates grows with p and d."""


def default_samples() -> int:
    """Sample count from the environment override, else one million."""
    raw = os.environ.get(SAMPLES_ENV)
    if raw is None:
        return DEFAULT_SAMPLES
    try:
        n = int(float(raw))
    except ValueError as exc:
        raise MonteCarloError(f"{SAMPLES_ENV}={raw!r} is not a number") from exc
    if n < MIN_SAMPLES:
        raise MonteCarloError(f"{SAMPLES_ENV} must be at least {MIN_SAMPLES}, got {n}")
    return n


@dataclass(frozen=True)
class MomentEstimate:
    p: float
    estimate: float
    halfwidth: float
    n: int
    shards: int

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def relative_halfwidth(self) -> float:
        return self.halfwidth / self.estimate if self.estimate > 0 else 0.0

    def contains(self, value: float, widen: float = 1.0) -> bool:
        return abs(self.estimate - value) <= widen * self.halfwidth


@dataclass(frozen=True)
class TailEstimate:
    t: float
    probability: float
    lower: float
    upper: float
    n: int
    hits: int

    def to_dict(self) -> dict:
        return asdict(self)


class ChaosSpec:
    """A coefficient tensor, its generator laws and the sampling mode.

    Decoupled mode draws an independent row of generators per axis.  Undecoupled
    mode draws one sequence shared by every factor, which needs a symmetric
    tensor vanishing on repeated indices and the same law row on every axis.
    """

    def __init__(self, tensor, dists: DistributionMatrix, mode: str = DECOUPLED_MODE):
        self.tensor = tensor if isinstance(tensor, CoefficientTensor) else CoefficientTensor(tensor)
        self.dists = dists
        self.mode = mode
        dists.check_dims(self.tensor.dims)
        if mode == UNDECOUPLED_MODE:
            if not self.tensor.is_tetrahedral(atol=1e-12):
                raise MonteCarloError("undecoupled mode needs a symmetric tensor vanishing on repeated indices")
            if len(set(dists.rows)) != 1:
                raise MonteCarloError("undecoupled mode needs the same generator laws on every axis")
        elif mode != DECOUPLED_MODE:
            raise MonteCarloError(f"unknown mode {mode!r}")

    def describe(self) -> dict:
        return {"order": self.tensor.order, "dims": list(self.tensor.dims),
                "dists": self.dists.describe(), "mode": self.mode}


def _contract_rows(a: np.ndarray, rows: Sequence[np.ndarray]) -> np.ndarray:
    """sum_i a_i prod_j rows[j][:, i_j] for each sample (first axis)."""
    size = rows[0].shape[0]
    V = rows[0] @ a.reshape(a.shape[0], -1)
    for X in rows[1:]:
        V = np.einsum("sj,sjr->sr", X, V.reshape(size, X.shape[1], -1))
    return V[:, 0]


def sample_chaos(spec: ChaosSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    """``size`` independent draws of the chaos."""
    a = spec.tensor.array
    if spec.mode == UNDECOUPLED_MODE:
        X = spec.dists.sample_row(1, rng, size)
        rows = [X] * a.ndim
    else:
        rows = [spec.dists.sample_row(j, rng, size) for j in range(1, a.ndim + 1)]
    return _contract_rows(a, rows)


def _shard_sizes(n: int, shards: int) -> list[int]:
    base, extra = divmod(n, shards)
    return [base + (s < extra) for s in range(shards)]


def _draw_shard(draw, seed: int, tag: int, shard: int, size: int) -> np.ndarray:
    out = np.empty(size)
    for c, start in enumerate(range(0, size, CHUNK)):
        m = min(CHUNK, size - start)
        out[start:start + m] = draw(stream(seed, tag, shard, c), m)
    return out


def draw_shards(draw, n_samples: int, shards: int, seed: int, tag: int = SHARD,
                workers: int = 1) -> list[np.ndarray]:
    """Shard-wise samples from ``draw(rng, size)``; identical for any ``workers``."""
    if n_samples < MIN_SAMPLES:
        raise MonteCarloError(f"need at least {MIN_SAMPLES} samples, got {n_samples}")
    if shards < MIN_SHARDS:
        raise MonteCarloError(f"need at least {MIN_SHARDS} shards, got {shards}")
    sizes = _shard_sizes(n_samples, shards)
    jobs = [(s, m) for s, m in enumerate(sizes)]
    if workers <= 1:
        return [_draw_shard(draw, seed, tag, s, m) for s, m in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: _draw_shard(draw, seed, tag, *job), jobs))


def chaos_shards(spec: ChaosSpec, n_samples: int | None = None, shards: int = DEFAULT_SHARDS,
                 seed: int = 0, tag: int = SHARD, workers: int = 1) -> list[np.ndarray]:
    n = default_samples() if n_samples is None else int(n_samples)
    return draw_shards(lambda rng, m: sample_chaos(spec, rng, m), n, shards, seed, tag, workers)


def _check_moment_p(p: float) -> None:
    if not 1 <= p <= MAX_P:
        raise MonteCarloError(f"moment order p must lie in [1, {MAX_P}], got {p}")
    if p > 8:
        warnings.warn(f"moment estimates at p={p} carry relative error growing with p and d",
                      HighMomentWarning, stacklevel=3)


def moment_from_shards(samples: Sequence[np.ndarray], p: float) -> MomentEstimate:
    """Median-of-means estimate of (E|S|^p)^(1/p) with a 95% half-width."""
    _check_moment_p(p)
    with np.errstate(over="ignore"):
        means = np.array([np.mean(np.abs(s) ** p) for s in samples])
    if not np.all(np.isfinite(means)):
        raise EstimatorUnstable(p)
    q = means ** (1.0 / p)
    est = float(np.median(q))
    mad = float(np.median(np.abs(q - est)))
    K = len(samples)
    half = _Z95 * _MEDIAN_SE * _MAD_SIGMA * mad / math.sqrt(K)
    return MomentEstimate(float(p), est, half, int(sum(len(s) for s in samples)), K)


def estimate_moment(spec: ChaosSpec, p: float, n_samples: int | None = None,
                    shards: int = DEFAULT_SHARDS, seed: int = 0, workers: int = 1) -> MomentEstimate:
    _check_moment_p(p)
    return moment_from_shards(chaos_shards(spec, n_samples, shards, seed, workers=workers), p)


def estimate_moments(spec: ChaosSpec, ps: Sequence[float], n_samples: int | None = None,
                     shards: int = DEFAULT_SHARDS, seed: int = 0, workers: int = 1) -> list[MomentEstimate]:
    """Moments for several p from one sample set."""
    for p in ps:
        _check_moment_p(p)
    samples = chaos_shards(spec, n_samples, shards, seed, workers=workers)
    return [moment_from_shards(samples, p) for p in ps]


def wilson_interval(hits: int, n: int, z: float = _Z95) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    ph = hits / n
    denom = 1 + z * z / n
    centre = (ph + z * z / (2 * n)) / denom
    half = z * math.sqrt(ph * (1 - ph) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if hits == 0 else max(0.0, centre - half)
    hi = 1.0 if hits == n else min(1.0, centre + half)
    return lo, hi


def tail_from_samples(samples: Sequence[np.ndarray], t: float) -> TailEstimate:
    """Empirical P(|S| >= t) with a Wilson interval."""
    if not t >= 0:
        raise MonteCarloError(f"threshold must be nonnegative, got {t}")
    n = int(sum(len(s) for s in samples))
    hits = int(sum(np.count_nonzero(np.abs(s) >= t) for s in samples))
    lo, hi = wilson_interval(hits, n)
    return TailEstimate(float(t), hits / n, lo, hi, n, hits)


def estimate_tail(spec: ChaosSpec, t: float, n_samples: int | None = None, seed: int = 0,
                  shards: int = DEFAULT_SHARDS, workers: int = 1) -> TailEstimate:
    if not t >= 0:
        raise MonteCarloError(f"threshold must be nonnegative, got {t}")
    return tail_from_samples(chaos_shards(spec, n_samples, shards, seed, workers=workers), t)


# -- decoupling ---------------------------------------------------------------------

@dataclass(frozen=True)
class DecoupleResult:
    undecoupled: MomentEstimate
    decoupled: MomentEstimate
    ratio: float
    ratio_halfwidth: float

    def to_dict(self) -> dict:
        return {"undecoupled": self.undecoupled.to_dict(), "decoupled": self.decoupled.to_dict(),
                "ratio": self.ratio, "ratio_halfwidth": self.ratio_halfwidth}


def _ratio(num: MomentEstimate, den: MomentEstimate) -> tuple[float, float]:
    if num.estimate == 0 and den.estimate == 0:
        return 1.0, 0.0
    if den.estimate == 0:
        return math.inf, math.inf
    r = num.estimate / den.estimate
    rel = math.hypot(num.relative_halfwidth, den.relative_halfwidth)
    return r, r * rel


def decouple_compare(A, dists: DistributionMatrix, p: float, n_samples: int | None = None,
                     seed: int = 0, shards: int = DEFAULT_SHARDS, workers: int = 1) -> DecoupleResult:
    """Moments of the chaos and of its decoupled version, and their ratio.

    The ratio is 1 by convention when both moments vanish.
    """
    und = ChaosSpec(A, dists, UNDECOUPLED_MODE)
    dec = ChaosSpec(A, dists, DECOUPLED_MODE)
    mu = moment_from_shards(chaos_shards(und, n_samples, shards, seed, UNDECOUPLED, workers), p)
    md = moment_from_shards(chaos_shards(dec, n_samples, shards, seed, DECOUPLED, workers), p)
    r, h = _ratio(mu, md)
    return DecoupleResult(mu, md, r, h)


# -- tetrahedral polynomials -------------------------------------------------------

@dataclass(frozen=True)
class TetrahedralResult:
    whole: MomentEstimate
    parts: tuple
    ratio: float

    def to_dict(self) -> dict:
        return {"whole": self.whole.to_dict(),
                "parts": [None if m is None else m.to_dict() for m in self.parts],
                "ratio": self.ratio}


def _law_row(law, n: int) -> tuple:
    if isinstance(law, TailFunction):
        return (law,) * n
    row = tuple(law)
    if len(row) != n:
        raise MonteCarloError(f"{len(row)} laws for {n} variables")
    return row


def tetrahedral_eval_and_split(parts: Sequence, law, p: float, n_samples: int | None = None,
                               seed: int = 0, shards: int = DEFAULT_SHARDS,
                               workers: int = 1) -> TetrahedralResult:
    """Moments of a tetrahedral polynomial and of each homogeneous part.

    ``parts[j]`` is the degree-j coefficient array (a scalar for j=0) or None.
    All parts act on the same sequence of n variables with laws ``law`` (one
    TailFunction for i.i.d. variables, or one per variable).
    """
    arrays = [None if a is None else as_array(a) for a in parts]
    sizes = {a.shape[0] for a in arrays if a is not None and a.ndim > 0}
    if len(sizes) > 1:
        raise MonteCarloError(f"parts act on different numbers of variables {sorted(sizes)}")
    if not sizes:
        raise MonteCarloError("need at least one part of positive degree")
    n = sizes.pop()
    for j, a in enumerate(arrays):
        if a is None:
            continue
        if a.ndim != j:
            raise MonteCarloError(f"part {j} has order {a.ndim}")
        if j >= 1 and not CoefficientTensor(a).is_tetrahedral(atol=1e-12):
            raise MonteCarloError(f"part {j} is not symmetric with vanishing repeated indices")
    row = DistributionMatrix([_law_row(law, n)])
    live = [j for j, a in enumerate(arrays) if a is not None]

    def draw(rng, m):
        X = row.sample_row(1, rng, m)
        out = np.empty((len(live) + 1, m))
        for r, j in enumerate(live):
            a = arrays[j]
            out[r + 1] = np.full(m, float(a)) if j == 0 else _contract_rows(a, [X] * j)
        out[0] = out[1:].sum(axis=0)
        return out

    shard_arrays = _draw_tables(draw, len(live) + 1, n_samples, shards, seed, workers)
    whole = moment_from_shards([s[0] for s in shard_arrays], p)
    est = {j: moment_from_shards([s[r + 1] for s in shard_arrays], p) for r, j in enumerate(live)}
    parts_out = tuple(est.get(j) for j in range(len(arrays)))
    total = sum(m.estimate for m in est.values())
    ratio = total / whole.estimate if whole.estimate > 0 else (1.0 if total == 0 else math.inf)
    return TetrahedralResult(whole, parts_out, ratio)


def _draw_tables(draw, rows: int, n_samples, shards, seed, workers):
    n = default_samples() if n_samples is None else int(n_samples)
    if n < MIN_SAMPLES:
        raise MonteCarloError(f"need at least {MIN_SAMPLES} samples, got {n}")
    if shards < MIN_SHARDS:
        raise MonteCarloError(f"need at least {MIN_SHARDS} shards, got {shards}")

    def one(job):
        s, m = job
        out = np.empty((rows, m))
        for c, start in enumerate(range(0, m, CHUNK)):
            k = min(CHUNK, m - start)
            out[:, start:start + k] = draw(stream(seed, SHARD, s, c), k)
        return out

    jobs = list(enumerate(_shard_sizes(n, shards)))
    if workers <= 1:
        return [one(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, jobs))
