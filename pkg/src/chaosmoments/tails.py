"""Symmetric generators with log-concave tails, described by N(t) = -ln P(|X| >= t)."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import optimize, special

from . import _kernels as K

KINDS = ("exp", "pow", "gauss", "table")
_KIND_CODE = {"exp": K.EXP, "pow": K.POW, "gauss": K.GAUSS, "table": K.TABLE}


class TailError(ValueError):
    """Invalid or unnormalizable tail function."""


class SupportEndWarning(UserWarning):
    """An inversion hit the right end of a bounded support."""


@dataclass(frozen=True)
class TailFunction:
    """Convex tail exponent of one symmetric generator.

    ``N(t) = raw(t / scale)`` where ``raw`` is ``u`` (exp), ``u**r`` (pow),
    ``-ln P(|g| >= u)`` (gauss) or a piecewise-linear table. The factories
    below return normalized instances, i.e. ``inf{t : N(t) >= 1} = 1``.
    """

    kind: str
    r: float = 1.0
    scale: float = 1.0
    table_t: tuple = ()
    table_n: tuple = ()
    bounded: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise TailError(f"unknown tail kind {self.kind!r}")
        if self.kind == "pow" and not self.r >= 1.0:
            raise TailError(f"power tail needs r >= 1, got {self.r}")
        if not self.scale > 0:
            raise TailError("scale must be positive")

    # -- evaluation ---------------------------------------------------------

    def _raw(self, u):
        u = np.asarray(u, dtype=np.float64)
        if self.kind == "exp":
            return u.copy()
        if self.kind == "pow":
            return u ** self.r
        if self.kind == "gauss":
            return -(math.log(2.0) + special.log_ndtr(-u))
        tt = np.asarray(self.table_t)
        tn = np.asarray(self.table_n)
        slope = (tn[-1] - tn[-2]) / (tt[-1] - tt[-2])
        out = np.where(u <= tt[-1], np.interp(u, tt, tn), tn[-1] + slope * (u - tt[-1]))
        if self.bounded:
            out = np.where(u > tt[-1], np.inf, out)
        return out

    def N(self, t):
        """Tail exponent at t >= 0 (vectorized)."""
        out = self._raw(np.abs(np.asarray(t, dtype=np.float64)) / self.scale)
        return float(out) if out.ndim == 0 else out

    def tail_probability(self, t):
        return np.exp(-self.N(t))

    def n_hat(self, t):
        """t**2 on [-1, 1], N(|t|) outside."""
        t = np.abs(np.asarray(t, dtype=np.float64))
        out = np.where(t <= 1.0, t * t, self._raw(np.maximum(t, 1.0) / self.scale))
        return float(out) if out.ndim == 0 else out

    @property
    def support_end(self) -> float:
        if self.kind == "table" and self.bounded:
            return self.table_t[-1] * self.scale
        return math.inf

    def n_hat_inverse(self, y: float) -> float:
        """Smallest t >= 0 with n_hat(t) >= y (bisection, bracket doubling)."""
        y = float(y)
        if y < 0:
            raise TailError("n_hat_inverse needs y >= 0")
        if y <= 1.0:
            return _bisect(lambda t: t * t, y, 0.0, 1.0)
        return self._invert_tail(y)

    def _invert_tail(self, y: float) -> float:
        end = self.support_end
        if self.N(end if math.isfinite(end) else 1.0) < y and math.isfinite(end):
            warnings.warn(f"level {y} exceeds the tail exponent on its support; "
                          f"returning the support end {end}", SupportEndWarning, stacklevel=3)
            return end
        hi = 2.0
        while self.N(hi) < y:
            hi *= 2.0
        return _bisect(self.N, y, 0.0, hi)

    def N_inverse(self, y):
        """Smallest t with N(t) >= y, vectorized over y.

        Closed forms for exp, pow and gauss; bisection for tables.
        """
        y = np.asarray(y, dtype=np.float64)
        if self.kind == "exp":
            out = self.scale * y
        elif self.kind == "pow":
            out = self.scale * y ** (1.0 / self.r)
        elif self.kind == "gauss":
            # P(|g| >= u) = exp(-y)  <=>  u = -ndtri(exp(-y) / 2)
            out = -self.scale * special.ndtri(0.5 * np.exp(-y))
        else:
            out = self._table_inverse(y)
        return float(out) if out.ndim == 0 else out

    def _table_inverse(self, y: np.ndarray) -> np.ndarray:
        end = self.support_end
        lo = np.zeros_like(y)
        hi = np.full_like(y, 2.0)
        if math.isfinite(end):
            hi[:] = end
        else:
            while np.any(self.N(hi) < y):
                hi = np.where(self.N(hi) < y, 2.0 * hi, hi)
        for _ in range(64):
            mid = 0.5 * (lo + hi)
            up = self.N(mid) >= y
            hi = np.where(up, mid, hi)
            lo = np.where(up, lo, mid)
        return hi

    def sample(self, rng: np.random.Generator, size=None):
        """Draw sign * N^{-1}(E) with E unit exponential (inverse-tail transform)."""
        e = rng.standard_exponential(size)
        sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
        return sign * self.N_inverse(e)

    # -- shape facts used by the solver ---------------------------------------

    def right_slope_at_one(self) -> float:
        P = encode_row((self,))
        return float(K.tail_slope(P, 0, 1.0, True))

    def has_linear_tail(self) -> bool:
        """N is affine on [1, inf)."""
        if self.kind == "exp" or (self.kind == "pow" and self.r == 1.0):
            return True
        if self.kind == "table" and not self.bounded:
            tt = np.asarray(self.table_t) * self.scale
            tn = np.asarray(self.table_n)
            slopes = np.diff(tn) / np.diff(tt)
            beyond = slopes[tt[1:] > 1.0 + 1e-12]
            return bool(beyond.size == 0 or np.ptp(beyond) <= 1e-12 * max(1.0, abs(beyond).max()))
        return False

    def solver_mode(self) -> int:
        """0: convex n_hat, 1: linear tail, 2: general kink at t=1."""
        if self.right_slope_at_one() >= 2.0:
            return 0
        return 1 if self.has_linear_tail() else 2

    def describe(self) -> str:
        if self.kind == "pow":
            return f"pow:r={self.r:g}"
        if self.kind == "table":
            return f"table[{len(self.table_t)} knots{', bounded' if self.bounded else ''}]"
        return self.kind


def _bisect(f, y, lo, hi, tol=1e-12):
    """Smallest t in [lo, hi] with f(t) >= y for nondecreasing f."""
    if f(lo) >= y:
        return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) >= y:
            hi = mid
        else:
            lo = mid
    return hi


# -- factories ----------------------------------------------------------------

def exponential() -> TailFunction:
    return normalize(TailFunction("exp"))


def power(r: float) -> TailFunction:
    return normalize(TailFunction("pow", r=float(r)))


def gaussian() -> TailFunction:
    """Scaled Gaussian ``c*g`` with c chosen by the normalization."""
    return normalize(TailFunction("gauss"))


def tabulated(t: Sequence[float], n: Sequence[float]) -> TailFunction:
    """Piecewise-linear tail exponent through the points (t_k, N_k).

    Slopes are projected onto nondecreasing nonnegative sequences (weighted
    by interval length) to restore convexity. A final ``N = inf`` entry means
    the variable is bounded by the preceding abscissa.
    """
    t = np.asarray(t, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    if t.shape != n.shape or t.ndim != 1:
        raise TailError("table needs two equal-length columns")
    bounded = bool(n.size and np.isinf(n[-1]))
    if bounded:
        t, n = t[:-1], n[:-1]
    if not np.all(np.isfinite(t)) or not np.all(np.isfinite(n)):
        raise TailError("table entries must be finite (except a final inf)")
    if t.size == 0 or t[0] != 0.0:
        t = np.concatenate([[0.0], t])
        n = np.concatenate([[0.0], n])
    n[0] = 0.0
    if t.size < 2 or np.any(np.diff(t) <= 0):
        raise TailError("table abscissae must be increasing with at least one positive point")
    widths = np.diff(t)
    slopes = np.diff(n) / widths
    slopes = optimize.isotonic_regression(slopes, weights=widths).x
    slopes = np.maximum(slopes, 0.0)
    n = np.concatenate([[0.0], np.cumsum(slopes * widths)])
    return normalize(TailFunction("table", table_t=tuple(map(float, t)), table_n=tuple(map(float, n)),
                                  bounded=bounded))


def normalize(raw: TailFunction) -> TailFunction:
    """Rescale the argument so that inf{t : N(t) >= 1} = 1."""
    probe = TailFunction(raw.kind, raw.r, 1.0, raw.table_t, raw.table_n, raw.bounded)
    end = probe.support_end
    hi = 1.0
    while not probe.N(hi) >= 1.0:
        if hi >= end or hi > 1e15:
            raise TailError("tail exponent stays below 1: cannot normalize")
        hi = min(2.0 * hi, end)
    u_star = _bisect(probe.N, 1.0, 0.0, hi, tol=1e-13)
    return TailFunction(raw.kind, raw.r, 1.0 / u_star, raw.table_t, raw.table_n, raw.bounded)


def gaussian_scale() -> float:
    return gaussian().scale


def parse_dist(text: str) -> TailFunction:
    """Parse ``exp``, ``pow:r=<real>``, ``gauss`` or ``table:<path>``."""
    text = text.strip()
    if text == "exp":
        return exponential()
    if text == "gauss":
        return gaussian()
    if text.startswith("pow:"):
        arg = text[4:]
        if not arg.startswith("r="):
            raise TailError(f"expected pow:r=<real>, got {text!r}")
        try:
            r = float(arg[2:])
        except ValueError:
            raise TailError(f"bad exponent in {text!r}") from None
        return power(r)
    if text.startswith("table:"):
        return load_table(text[6:])
    raise TailError(f"unknown distribution spec {text!r}")


def load_table(path) -> TailFunction:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise TailError(f"cannot read table {path}: {exc.strerror}") from None
    rows = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise TailError(f"{path}: expected two columns per line, got {line!r}")
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise TailError(f"{path}: non-numeric entry in {line!r}") from None
    if not rows:
        raise TailError(f"{path}: empty table")
    t, n = zip(*rows)
    return tabulated(t, n)


# -- grids of generators ---------------------------------------------------------

@lru_cache(maxsize=512)
def encode_row(row: tuple) -> np.ndarray:
    """Flat array encoding of a row of tail functions for the compiled kernels."""
    n = len(row)
    head = np.zeros((n, K.W))
    knots: list[float] = []
    offsets: dict = {}
    base = n * K.W
    for i, f in enumerate(row):
        head[i, :3] = (_KIND_CODE[f.kind], f.r, f.scale)
        head[i, 5] = float(f.bounded)
        if f.kind == "table":
            key = (f.table_t, f.table_n)
            if key not in offsets:
                offsets[key] = base + len(knots)
                knots.extend(f.table_t)
                knots.extend(f.table_n)
            head[i, 3] = offsets[key]
            head[i, 4] = len(f.table_t)
    out = np.concatenate([head.ravel(), np.array(knots, dtype=np.float64)])
    out.flags.writeable = False
    return out


@lru_cache(maxsize=512)
def row_groups(row: tuple) -> tuple[np.ndarray, np.ndarray]:
    """Group ids (identical tail functions) and per-group solver modes."""
    ids: dict = {}
    group = np.empty(len(row), dtype=np.int64)
    modes = []
    for i, f in enumerate(row):
        if f not in ids:
            ids[f] = len(ids)
            modes.append(f.solver_mode())
        group[i] = ids[f]
    return group, np.array(modes, dtype=np.int64)


class DistributionMatrix:
    """One row of tail functions per tensor axis: ``rows[j][i]`` governs X_i^{j+1}."""

    def __init__(self, rows: Sequence[Sequence[TailFunction]]):
        self.rows = tuple(tuple(r) for r in rows)
        if not self.rows or any(len(r) == 0 for r in self.rows):
            raise TailError("distribution matrix needs nonempty rows")

    @classmethod
    def iid(cls, f: TailFunction, dims: Sequence[int]) -> "DistributionMatrix":
        return cls([(f,) * int(n) for n in dims])

    @classmethod
    def from_specs(cls, specs: Sequence[str], dims: Sequence[int]) -> "DistributionMatrix":
        """One spec for every axis, or one spec per axis."""
        if len(specs) == 1:
            specs = list(specs) * len(dims)
        if len(specs) != len(dims):
            raise TailError(f"got {len(specs)} distribution specs for {len(dims)} axes")
        return cls([(parse_dist(s),) * int(n) for s, n in zip(specs, dims)])

    @property
    def order(self) -> int:
        return len(self.rows)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(len(r) for r in self.rows)

    def row(self, axis: int) -> tuple:
        """Row for a 1-based axis label."""
        return self.rows[axis - 1]

    def check_dims(self, dims: Sequence[int]) -> None:
        if tuple(dims) != self.dims:
            raise TailError(f"distribution matrix dims {self.dims} do not match tensor dims {tuple(dims)}")

    def kinds(self) -> set[str]:
        return {f.kind for r in self.rows for f in r}

    def all_exponential(self) -> bool:
        return all(f.kind == "exp" for r in self.rows for f in r)

    def sample_row(self, axis: int, rng: np.random.Generator, size: int) -> np.ndarray:
        """(size, n_axis) draws for the generators of one axis."""
        row = self.row(axis)
        out = np.empty((size, len(row)))
        seen: dict = {}
        for i, f in enumerate(row):
            seen.setdefault(f, []).append(i)
        for f, cols in seen.items():
            out[:, cols] = f.sample(rng, (size, len(cols)))
        return out

    def describe(self) -> str:
        labels = []
        for r in self.rows:
            kinds = sorted({f.describe() for f in r})
            labels.append("/".join(kinds))
        return labels[0] if len(set(labels)) == 1 else ",".join(labels)
