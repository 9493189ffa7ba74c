"""Deterministic quantities: water-filling suprema, partition norms, injective norms.

The supremum over one block with the other blocks fixed is computed by the
alignment reduction: for a fixed contracted tensor B over the block's axes
and designated axis s, the optimal sub-slices ``x[i_s, ...]`` are parallel to
``B[i_s, ...]``, which leaves a water-filling problem on the slice norms.
Multi-block norms alternate this exact update over the blocks.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from . import _kernels as K
from .partitions import Partition, enumerate_partitions, induced_partition, q_exponent, q_family
from .rng import RESTART, stream
from .tails import DistributionMatrix, encode_row, row_groups
from .tensor import as_array, unfold

EXACT = "exact"
ORACLE = "certified-oracle"
LOCAL = "local-search-lower-bound"

DEFAULT_RESTARTS = 16
GAP_TOL = 1e-8
MAX_BRANCHES = 50_000


class NormError(ValueError):
    """Rejected input to a norm computation."""


class SolverError(RuntimeError):
    """A solver failed to certify its answer."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class NormValue:
    value: float
    status: str
    iterations: int = 0
    restarts: int = 0
    best_start: int = -1
    dual_gap: float | None = None
    error_bound: float | None = None
    extra: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        out = asdict(self)
        if not out["extra"]:
            out.pop("extra")
        return out

    def __float__(self):
        return float(self.value)


def _check_p(p):
    if not p >= 2:
        raise NormError(f"level p must be >= 2, got {p}")


def _worst_status(statuses) -> str:
    statuses = set(statuses)
    if LOCAL in statuses:
        return LOCAL
    if ORACLE in statuses:
        return ORACLE
    return EXACT


# -- water-filling -------------------------------------------------------------

@lru_cache(maxsize=1024)
def _branch_plan(row: tuple, cap: int):
    group, modes = row_groups(row)
    sizes = np.bincount(group, minlength=len(modes))
    count = 1
    for g, mode in enumerate(modes):
        if mode == 1:
            count *= min(1, sizes[g]) + 1
        elif mode == 2:
            count *= min(int(sizes[g]), cap) + 1
    if count <= MAX_BRANCHES:
        return group, modes, True
    # too many law groups: merge every kinked group (prefix rule no longer exact)
    merged = group.copy()
    kinked = [g for g, m in enumerate(modes) if m == 2]
    merged[np.isin(group, kinked)] = kinked[0]
    _, merged = np.unique(merged, return_inverse=True)
    new_modes = np.array([modes[group[np.argmax(merged == g)]] for g in range(merged.max() + 1)])
    return merged.astype(np.int64), new_modes.astype(np.int64), False


def _waterfill(c: np.ndarray, row: tuple, p: float):
    """(value, maximizer t, relative gap, multiplier, branches, exact flag)."""
    c = np.ascontiguousarray(c, dtype=np.float64)
    group, modes, exact = _branch_plan(row, int(math.floor(p + 1e-12)))
    t = np.zeros(c.shape[0])
    top = float(c.max()) if c.size else 0.0
    if top == 0.0:
        return 0.0, t, 0.0, 0.0, 0, exact
    # the value is linear in c; solving at unit scale keeps the multiplier bracket finite
    value, gap, lam, tried = K.waterfill(encode_row(row), c / top, group, modes, float(p), t)
    value *= top
    gap *= top
    lam *= top
    rel = gap / value if value > 0 else 0.0
    if rel > GAP_TOL:
        raise SolverError("water-filling duality gap too large", gap=rel, multiplier=lam,
                          branches=tried, c=c.tolist(), p=p)
    return value, t, rel, lam, tried, exact


def waterfill_sup(c, row, p: float) -> NormValue:
    """sup { sum c_i t_i : sum_i Nhat_i(t_i) <= p } for nonnegative c.

    Parameters
    ----------
    c : array_like
        Nonnegative finite coefficients.
    row : sequence of TailFunction
        One (normalized) tail function per coordinate.
    p : float
        Level, at least 2.
    """
    _check_p(p)
    c = np.asarray(c, dtype=np.float64).ravel()
    row = tuple(row)
    if len(row) != c.size:
        raise NormError(f"{c.size} coefficients but {len(row)} tail functions")
    if not np.all(np.isfinite(c)) or np.any(c < 0):
        raise NormError("coefficients must be finite and nonnegative")
    value, t, rel, lam, tried, exact = _waterfill(c, row, p)
    return NormValue(value, EXACT if exact else LOCAL, iterations=tried, dual_gap=rel,
                     extra={"multiplier": lam, "t": t.tolist()})


# -- contractions over blocks ------------------------------------------------

_LET = "abcdefgh"


@lru_cache(maxsize=None)
def _einsum_except(d: int, blocks: tuple, l: int) -> str:
    ops = [_LET[:d]] + ["".join(_LET[a - 1] for a in b) for j, b in enumerate(blocks) if j != l]
    return ",".join(ops) + "->" + "".join(_LET[a - 1] for a in blocks[l])


def _contract_except(a, blocks, xs, l):
    others = [x for j, x in enumerate(xs) if j != l]
    return np.einsum(_einsum_except(a.ndim, blocks, l), a, *others, optimize=False)


def _full_value(a, blocks, xs):
    B = _contract_except(a, blocks, xs, 0)
    return float(np.sum(B * xs[0]))


class _OrliczBlock:
    """Feasible set {x over the block axes : sum_{i_s} Nhat(||x[i_s, ...]||) <= p}."""

    def __init__(self, block, s, row, p, shape):
        self.block = block
        self.pos = block.index(s)
        self.row = row
        self.P = encode_row(row)
        self.p = p
        self.shape = shape

    def _rows(self, x):
        return np.moveaxis(x, self.pos, 0).reshape(self.shape[self.pos], -1)

    def to_boundary(self, x):
        norms = np.sqrt(np.sum(self._rows(x) ** 2, axis=1))
        return x * K.scale_to_level(self.P, norms, self.p)

    def update(self, B):
        Bs = self._rows(B)
        c = np.sqrt(np.sum(Bs * Bs, axis=1))
        value, t, _, _, _, exact = _waterfill(c, self.row, self.p)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(c > 0, t / c, 0.0)
        X = (w[:, None] * Bs).reshape(np.moveaxis(B, self.pos, 0).shape)
        return np.moveaxis(X, 0, self.pos), value, exact


class _BallBlock:
    """Unit Euclidean ball over the block axes."""

    def __init__(self, shape):
        self.shape = shape

    def to_boundary(self, x):
        nrm = np.linalg.norm(x)
        return x / nrm if nrm > 0 else x

    def update(self, B):
        nrm = float(np.linalg.norm(B))
        return (B / nrm if nrm > 0 else np.zeros_like(B)), nrm, True


def _spectral_start(a, block):
    M = unfold(a, block)
    if not np.any(M):
        return np.ones(M.shape[0])
    u, _, _ = np.linalg.svd(M, full_matrices=False)
    return u[:, 0]


def _alternate(a, blocks, sets, restarts, seed, tol=1e-10, max_sweeps=500):
    """Block-coordinate ascent of the multilinear form with multi-start.

    Start 0 is the spectral start (leading singular vectors of the block
    unfoldings); starts 1..restarts are Gaussian directions.
    """
    k = len(blocks)
    best = -np.inf
    best_start = -1
    best_xs = None
    total_iter = 0
    exact = True
    for start in range(restarts + 1):
        if start == 0:
            xs = [sets[l].to_boundary(_spectral_start(a, blocks[l]).reshape(sets[l].shape))
                  for l in range(k)]
        else:
            rng = stream(seed, RESTART, start)
            xs = [sets[l].to_boundary(rng.standard_normal(sets[l].shape)) for l in range(k)]
        val = -np.inf
        for sweep in range(max_sweeps):
            prev = val
            for l in range(k):
                B = _contract_except(a, blocks, xs, l)
                x, v, ok = sets[l].update(B)
                exact = exact and ok
                if v < val - 1e-9 * max(1.0, abs(val)):
                    raise SolverError("alternating maximization decreased the objective",
                                      before=val, after=v, sweep=sweep, block=l, start=start)
                xs[l] = x
                val = max(val, v)
            total_iter += 1
            if sweep > 0 and val - prev <= tol * max(abs(val), 1e-300):
                break
        if val > best:
            best, best_start, best_xs = val, start, [x.copy() for x in xs]
    return best, best_start, total_iter, best_xs, exact


# -- partition norms ------------------------------------------------------------

def _blocks0(J: Partition, d: int) -> tuple:
    if not J.covers(d):
        raise NormError(f"partition {J} does not cover the axes 1..{d}")
    return tuple(tuple(b) for b in J.blocks)


def designated_sup(A, J: Partition, designated, p, dists: DistributionMatrix,
                   restarts: int = DEFAULT_RESTARTS, seed: int = 0):
    """Inner supremum of the partition norm for one choice (s_1, ..., s_k).

    Returns ``(NormValue, maximizers)``; the maximizers are one array per block
    over that block's axes (in increasing label order).
    """
    _check_p(p)
    a = as_array(A)
    blocks = _blocks0(J, a.ndim)
    dists.check_dims(a.shape)
    designated = tuple(designated)
    if len(designated) != len(blocks) or any(s not in b for s, b in zip(designated, blocks)):
        raise NormError(f"designated coordinates {designated} do not match blocks {blocks}")
    sets = [_OrliczBlock(b, s, dists.row(s), p, tuple(a.shape[x - 1] for x in b))
            for b, s in zip(blocks, designated)]
    if len(blocks) == 1:
        B = a
        x, value, exact = sets[0].update(B)
        return NormValue(value, EXACT if exact else LOCAL), [x]
    value, best_start, iters, xs, exact = _alternate(a, blocks, sets, restarts, seed)
    return NormValue(value, LOCAL, iterations=iters, restarts=restarts, best_start=best_start), xs


def partition_norm(A, J: Partition, p: float, dists: DistributionMatrix,
                   restarts: int = DEFAULT_RESTARTS, seed: int = 0) -> NormValue:
    """Sum over designated coordinates of the block-constrained suprema.

    Exact for single-block partitions; for several blocks the value is the
    best local maximum over ``restarts`` Gaussian starts plus a spectral start.
    """
    _check_p(p)
    a = as_array(A)
    blocks = _blocks0(J, a.ndim)
    total = 0.0
    iters = 0
    statuses = []
    best_starts = []
    for designated in itertools.product(*blocks):
        nv, _ = designated_sup(a, J, designated, p, dists, restarts, seed)
        total += nv.value
        iters += nv.iterations
        statuses.append(nv.status)
        best_starts.append(nv.best_start)
    return NormValue(total, _worst_status(statuses), iterations=iters,
                     restarts=restarts if len(blocks) > 1 else 0,
                     best_start=max(best_starts))


def injective_norm(A, J: Partition, restarts: int = DEFAULT_RESTARTS, seed: int = 0) -> NormValue:
    """sup of the multilinear form over unit Euclidean balls, one per block."""
    a = as_array(A)
    blocks = _blocks0(J, a.ndim)
    if len(blocks) == 1:
        return NormValue(float(np.linalg.norm(a)), EXACT)
    if len(blocks) == 2:
        return NormValue(float(np.linalg.norm(unfold(a, blocks[0]), 2)), EXACT)
    sets = [_BallBlock(tuple(a.shape[x - 1] for x in b)) for b in blocks]
    value, best_start, iters, _, _ = _alternate(a, blocks, sets, restarts, seed)
    return NormValue(value, LOCAL, iterations=iters, restarts=restarts, best_start=best_start)


def _relabel(J: Partition, I: tuple) -> Partition:
    pos = {x: j + 1 for j, x in enumerate(I)}
    return Partition(tuple(tuple(pos[x] for x in b) for b in J.blocks))


def max_slice_injective(A, I: tuple, S: Partition, restarts: int = DEFAULT_RESTARTS,
                        seed: int = 0) -> NormValue:
    """max over i_{I^c} of the injective norm of the slice (a_i)_{i_I} under S."""
    a = as_array(A)
    d = a.ndim
    if not I:
        return NormValue(float(np.max(np.abs(a))), EXACT)
    comp = [x for x in range(1, d + 1) if x not in I]
    moved = np.moveaxis(a, [x - 1 for x in comp], list(range(len(comp))))
    slices = moved.reshape((-1,) + tuple(a.shape[x - 1] for x in I))
    S = _relabel(S, I)
    if S.k == 1:
        vals = np.sqrt(np.sum(slices.reshape(slices.shape[0], -1) ** 2, axis=1))
        return NormValue(float(vals.max()), EXACT)
    if S.k == 2:
        mats = np.stack([unfold(s, S.blocks[0]) for s in slices])
        return NormValue(float(np.linalg.norm(mats, 2, axis=(1, 2)).max()), EXACT)
    best = NormValue(-1.0, LOCAL)
    for s in slices:
        nv = injective_norm(s, S, restarts, seed)
        if nv.value > best.value:
            best = nv
    return best


def exponential_closed_form(A, J: Partition, p: float, restarts: int = DEFAULT_RESTARTS,
                            seed: int = 0) -> NormValue:
    """Sum over I in Q(J) of p**(#I^c + (k - #I^c)/2) * max slice norm under S(J, I).

    Comparable, up to constants depending on d, with the partition norm for
    symmetric exponential generators.
    """
    _check_p(p)
    a = as_array(A)
    _blocks0(J, a.ndim)
    total = 0.0
    statuses = []
    terms = {}
    for I in q_family(J):
        S = induced_partition(J, I)
        nv = max_slice_injective(a, I, S, restarts, seed)
        term = p ** q_exponent(J, I) * nv.value
        terms["".join(map(str, I)) or "-"] = term
        total += term
        statuses.append(nv.status)
    return NormValue(total, _worst_status(statuses), extra={"terms": terms})


# -- totals ----------------------------------------------------------------------

GENERAL = "general-d<=3"
EXPONENTIAL = "exponential-any-d"
HEURISTIC = "heuristic"


def regime(d: int, dists: DistributionMatrix) -> str:
    if d <= 3:
        return GENERAL
    if dists.all_exponential():
        return EXPONENTIAL
    return HEURISTIC


@dataclass
class BoundTotal:
    norms: dict
    total: float
    regime: str

    @property
    def status(self) -> str:
        return _worst_status(nv.status for nv in self.norms.values())


def bound_total(A, p: float, dists: DistributionMatrix, restarts: int = DEFAULT_RESTARTS,
                seed: int = 0) -> BoundTotal:
    """All Bell(d) partition norms at level p and their sum."""
    a = as_array(A)
    norms = {J: partition_norm(a, J, p, dists, restarts, seed) for J in enumerate_partitions(a.ndim)}
    return BoundTotal(norms, sum(nv.value for nv in norms.values()), regime(a.ndim, dists))


def gaussian_remark_ratio(A, J: Partition, p: float, dists: DistributionMatrix,
                          restarts: int = DEFAULT_RESTARTS, seed: int = 0) -> float:
    """partition_norm / (p**(k/2) * injective_norm); nan for a zero tensor."""
    num = partition_norm(A, J, p, dists, restarts, seed).value
    den = p ** (J.k / 2) * injective_norm(A, J, restarts, seed).value
    return num / den if den > 0 else math.nan
