"""Brute-force search over the constraint boundaries, for small instances.

Independent of the solver: it never uses the alignment reduction or the
water-filling kernel, only direct evaluation of the multilinear form at
boundary points found by radial bisection on ``TailFunction.n_hat``.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .norms import ORACLE, NormError, NormValue, _blocks0, _check_p
from .partitions import Partition
from .rng import ORACLE as ORACLE_STREAM, stream
from .tails import DistributionMatrix
from .tensor import as_array

MAX_FREE_DIMS = 6
MAX_GRID_PER_BLOCK = 200_000
MAX_PRODUCT = 30_000_000


def sphere_grid(m: int, step: float) -> np.ndarray:
    """Points on the unit sphere in R^m with angular spacing about ``step``."""
    if m == 1:
        return np.array([[1.0], [-1.0]])
    if m == 2:
        k = max(2, math.ceil(2 * math.pi / step))
        theta = 2 * math.pi * np.arange(k) / k
        return np.column_stack([np.cos(theta), np.sin(theta)])
    k = max(2, math.ceil(math.pi / step))
    parts = []
    for phi in math.pi * np.arange(k + 1) / k:
        s = math.sin(phi)
        if s < 1e-12:
            pole = np.zeros((1, m))
            pole[0, 0] = math.cos(phi)
            parts.append(pole)
            continue
        sub = sphere_grid(m - 1, min(step / s, math.pi))
        parts.append(np.column_stack([np.full(len(sub), math.cos(phi)), s * sub]))
    return np.vstack(parts)


def _grid_size_estimate(m: int, step: float) -> float:
    # sphere area over the cell volume
    area = 2 * math.pi ** (m / 2) / math.gamma(m / 2)
    return area / step ** (m - 1)


def _grid_for(m: int, step: float) -> tuple[np.ndarray, float]:
    while _grid_size_estimate(m, step) > 2 * MAX_GRID_PER_BLOCK:
        step *= 1.25
    while True:
        pts = sphere_grid(m, step)
        if len(pts) <= MAX_GRID_PER_BLOCK:
            return pts, step
        step *= 1.25


def _to_boundary(dirs: np.ndarray, block_shape, pos: int, row, p: float) -> np.ndarray:
    """Scale each direction radially onto {sum_i Nhat_i(||x[i, ...]||) = p}."""
    N = dirs.shape[0]
    x = dirs.reshape((N,) + tuple(block_shape))
    rows = np.moveaxis(x, pos + 1, 1).reshape(N, block_shape[pos], -1)
    norms = np.sqrt(np.sum(rows ** 2, axis=2))
    laws = {}
    for i, f in enumerate(row):
        laws.setdefault(f, []).append(i)

    def level(rho):
        total = np.zeros(N)
        for f, cols in laws.items():
            total += f.n_hat(rho[:, None] * norms[:, cols]).sum(axis=1)
        return total

    lo = np.zeros(N)
    hi = np.ones(N) / np.maximum(norms.max(axis=1), 1e-300)
    for _ in range(200):
        grow = level(hi) <= p
        if not grow.any():
            break
        lo = np.where(grow, hi, lo)
        hi = np.where(grow, 2 * hi, hi)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        ok = level(mid) <= p
        lo = np.where(ok, mid, lo)
        hi = np.where(ok, hi, mid)
    return dirs * lo[:, None]


def _grouped(a: np.ndarray, blocks) -> np.ndarray:
    order = [x - 1 for b in blocks for x in b]
    sizes = [math.prod(a.shape[x - 1] for x in b) for b in blocks]
    return np.transpose(a, order).reshape(sizes)


def _max_over_product(T: np.ndarray, sets: list[np.ndarray]):
    """(max value, index tuple) of the form over the product of point sets."""
    k = len(sets)
    if k == 1:
        v = sets[0] @ T
        j = int(np.argmax(v))
        return float(v[j]), (j,)
    tail_sizes = [len(s) for s in sets[1:]]
    chunk = max(1, int(4_000_000 // max(1, math.prod(tail_sizes) * max(T.shape[1:]))))
    best, arg = -np.inf, None
    X0 = sets[0]
    for start in range(0, len(X0), chunk):
        V = np.tensordot(X0[start:start + chunk], T, axes=([1], [0]))
        # V: (c, m2, ..., mk); fold in the remaining blocks one at a time
        for X in sets[1:]:
            V = np.moveaxis(np.tensordot(V, X, axes=([1], [1])), -1, 1)
            V = V.reshape((V.shape[0] * V.shape[1],) + V.shape[2:])
        j = int(np.argmax(V))
        if V.flat[j] > best:
            best = float(V.flat[j])
            idx = np.unravel_index(j, (V.shape[0] // math.prod(tail_sizes),) + tuple(tail_sizes))
            arg = (start + int(idx[0]),) + tuple(int(i) for i in idx[1:])
    return best, arg


def _tuple_values(T: np.ndarray, pts: list[np.ndarray]) -> np.ndarray:
    """Form value at each row-aligned tuple (pts[0][n], ..., pts[k-1][n])."""
    n = pts[0].shape[0]
    prod = pts[0] @ T.reshape(pts[0].shape[1], -1)
    for X in pts[1:]:
        prod = np.einsum("nj,njr->nr", X, prod.reshape(n, X.shape[1], -1))
    return prod[:, 0]


def brute_force_sup(A, J: Partition, p: float, dists: DistributionMatrix, resolution: float = 0.05,
                    designated=None, n_random: int = 100_000, seed: int = 0) -> NormValue:
    """Grid-plus-random maximization of the inner supremum for one designated choice.

    The grid has angular spacing ``resolution`` on each block's sphere (coarsened
    when the product of grids would be too large; the effective spacing is
    reported), followed by ``n_random`` random tuples of boundary points.
    """
    _check_p(p)
    a = as_array(A)
    blocks = _blocks0(J, a.ndim)
    dists.check_dims(a.shape)
    if not 0 < resolution <= 0.1:
        raise NormError(f"resolution must be in (0, 0.1], got {resolution}")
    shapes = [tuple(a.shape[x - 1] for x in b) for b in blocks]
    dims = [math.prod(s) for s in shapes]
    if sum(dims) > MAX_FREE_DIMS:
        raise NormError(f"{sum(dims)} free dimensions exceed the oracle limit {MAX_FREE_DIMS}")
    if designated is None:
        designated = tuple(b[0] for b in blocks)
    designated = tuple(designated)
    if any(s not in b for s, b in zip(designated, blocks)):
        raise NormError(f"designated coordinates {designated} do not match blocks {blocks}")
    T = _grouped(a, blocks)

    step = resolution
    while math.prod(_grid_size_estimate(m, step) for m in dims) > 2 * MAX_PRODUCT:
        step *= 1.25
    while True:
        grids, steps = zip(*(_grid_for(m, step) for m in dims))
        if math.prod(len(g) for g in grids) <= MAX_PRODUCT:
            break
        step *= 1.25
    eff = max(steps)
    sets = [_to_boundary(g, sh, b.index(s), dists.row(s), p)
            for g, sh, b, s in zip(grids, shapes, blocks, designated)]
    best, arg = _max_over_product(T, sets)
    best_dirs = [g[i] for g, i in zip(grids, arg)]

    rng = stream(seed, ORACLE_STREAM)
    place = [(sh, b.index(s), dists.row(s)) for sh, b, s in zip(shapes, blocks, designated)]

    def boundary(dirs):
        return [_to_boundary(g / np.linalg.norm(g, axis=1, keepdims=True), sh, pos, row, p)
                for g, (sh, pos, row) in zip(dirs, place)]

    vals = _tuple_values(T, boundary([rng.standard_normal((n_random, m)) for m in dims]))
    # random tuples only report a value; the refinement starts from the grid maximizer
    best = max(best, float(vals.max()))

    # shrinking random local search around the incumbent directions
    sigma = eff
    while sigma > 1e-7:
        for _ in range(3):
            cand = [d + sigma * rng.standard_normal((256, d.size)) for d in best_dirs]
            vals = _tuple_values(T, boundary(cand))
            j = int(np.argmax(vals))
            if vals[j] > best:
                best = float(vals[j])
                best_dirs = [c[j] / np.linalg.norm(c[j]) for c in cand]
        sigma *= 0.7
    best = max(best, 0.0)
    return NormValue(best, ORACLE, error_bound=len(blocks) * eff * best,
                     extra={"resolution": eff, "grid_points": int(sum(len(g) for g in grids)),
                            "random_points": n_random})


def brute_force_norm(A, J: Partition, p: float, dists: DistributionMatrix, resolution: float = 0.05,
                     n_random: int = 100_000, seed: int = 0) -> NormValue:
    """Sum of brute-force suprema over every designated-coordinate choice."""
    a = as_array(A)
    blocks = _blocks0(J, a.ndim)
    total = 0.0
    err = 0.0
    for designated in itertools.product(*blocks):
        nv = brute_force_sup(a, J, p, dists, resolution, designated, n_random, seed)
        total += nv.value
        err += nv.error_bound
    return NormValue(total, ORACLE, error_bound=err)
