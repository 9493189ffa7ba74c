"""Dense coefficient arrays for chaoses of order d <= 4.

Axes are labelled 1..d throughout the package so that index subsets and
partitions (see :mod:`chaosmoments.partitions`) can be used directly.
"""

from __future__ import annotations

import itertools
import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

MAX_ORDER = 4
_LETTERS = "abcdefgh"


class TensorError(ValueError):
    """Malformed coefficient tensor or tensor operation input."""


class CoefficientTensor:
    """Immutable d-indexed real array ``(a_i)`` with ``1 <= d <= 4``.

    Parameters
    ----------
    values : array_like
        Either an ndarray of shape ``dims`` or a flat row-major sequence.
    dims : sequence of int, optional
        Required when ``values`` is flat.
    """

    __slots__ = ("_array",)

    def __init__(self, values, dims: Sequence[int] | None = None):
        arr = np.array(values, dtype=np.float64)
        if dims is not None:
            dims = tuple(int(n) for n in dims)
            if any(n < 1 for n in dims):
                raise TensorError(f"dims must be positive, got {dims}")
            if arr.size != math.prod(dims):
                raise TensorError(
                    f"values length {arr.size} does not match prod(dims)={math.prod(dims)}"
                )
            arr = arr.reshape(dims)
        if not 1 <= arr.ndim <= MAX_ORDER:
            raise TensorError(f"order must be in 1..{MAX_ORDER}, got {arr.ndim}")
        if arr.size == 0:
            raise TensorError("empty tensor")
        if not np.all(np.isfinite(arr)):
            raise TensorError("tensor entries must be finite")
        arr.setflags(write=False)
        self._array = arr

    @property
    def array(self) -> np.ndarray:
        return self._array

    @property
    def order(self) -> int:
        return self._array.ndim

    @property
    def dims(self) -> tuple[int, ...]:
        return self._array.shape

    @property
    def values(self) -> np.ndarray:
        return self._array.ravel()

    def __repr__(self):
        return f"CoefficientTensor(order={self.order}, dims={self.dims})"

    def __eq__(self, other):
        if not isinstance(other, CoefficientTensor):
            return NotImplemented
        return self.dims == other.dims and np.array_equal(self._array, other._array)

    def __hash__(self):
        return hash((self.dims, self._array.tobytes()))

    def scaled(self, factor: float) -> "CoefficientTensor":
        return CoefficientTensor(self._array * factor)

    def is_symmetric(self, atol: float = 0.0) -> bool:
        if len(set(self.dims)) != 1:
            return False
        a = self._array
        return all(
            np.allclose(a, np.transpose(a, perm), rtol=0.0, atol=atol)
            for perm in itertools.permutations(range(self.order))
        )

    def has_zero_diagonal(self, atol: float = 0.0) -> bool:
        if len(set(self.dims)) != 1:
            return False
        return bool(np.all(np.abs(self._array[_repeated_index_mask(self.dims)]) <= atol))

    def is_tetrahedral(self, atol: float = 0.0) -> bool:
        """Symmetric with vanishing entries on repeated-index positions."""
        return self.is_symmetric(atol) and self.has_zero_diagonal(atol)

    # -- serialization ----------------------------------------------------

    def to_dict(self, symmetric: bool | None = None) -> dict:
        doc = {
            "order": self.order,
            "dims": list(self.dims),
            "values": [float(v) for v in self.values],
        }
        if symmetric is not None:
            doc["symmetric"] = bool(symmetric)
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping) -> "CoefficientTensor":
        for key in ("order", "dims", "values"):
            if key not in doc:
                raise TensorError(f"tensor document is missing field '{key}'")
        try:
            order = int(doc["order"])
            dims = [int(n) for n in doc["dims"]]
            values = [float(v) for v in doc["values"]]
        except (TypeError, ValueError) as exc:
            raise TensorError(f"tensor document has a malformed field: {exc}") from None
        if order != len(dims):
            raise TensorError(f"field 'order'={order} disagrees with len(dims)={len(dims)}")
        tensor = cls(values, dims)
        if doc.get("symmetric") and not tensor.is_symmetric(atol=1e-12):
            raise TensorError("field 'symmetric' is set but the values are not symmetric")
        return tensor

    def save(self, path, symmetric: bool | None = None) -> None:
        Path(path).write_text(json.dumps(self.to_dict(symmetric), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "CoefficientTensor":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise TensorError(f"{path}: not a JSON document ({exc})") from None
        if not isinstance(doc, dict):
            raise TensorError(f"{path}: expected a JSON object")
        return cls.from_dict(doc)


def as_array(A) -> np.ndarray:
    if isinstance(A, CoefficientTensor):
        return A.array
    return np.asarray(A, dtype=np.float64)


def _repeated_index_mask(dims) -> np.ndarray:
    d = len(dims)
    grids = np.indices(dims)
    mask = np.zeros(dims, dtype=bool)
    for k, l in itertools.combinations(range(d), 2):
        mask |= grids[k] == grids[l]
    return mask


def _check_axes(axes: Iterable[int], d: int) -> tuple[int, ...]:
    axes = tuple(sorted(int(a) for a in axes))
    if len(set(axes)) != len(axes):
        raise TensorError(f"repeated axis in {axes}")
    if any(a < 1 or a > d for a in axes):
        raise TensorError(f"axis labels must lie in 1..{d}, got {axes}")
    return axes


def contract(A, block_vectors: Mapping[Iterable[int], np.ndarray]):
    """Sum ``a_i`` against the product of block arrays over the named axes.

    ``block_vectors`` maps a subset of axis labels (1-based) to an array whose
    shape lists the sizes of those axes in increasing label order. The result
    is an ndarray over the remaining axes, or a float when every axis is
    consumed.
    """
    a = as_array(A)
    d = a.ndim
    used: set[int] = set()
    operands = [a]
    subscripts = [_LETTERS[:d]]
    for axes, block in block_vectors.items():
        axes = _check_axes(axes, d)
        if used.intersection(axes):
            raise TensorError(f"overlapping index subsets at {sorted(used.intersection(axes))}")
        used.update(axes)
        block = np.asarray(block, dtype=np.float64)
        expected = tuple(a.shape[k - 1] for k in axes)
        if block.shape != expected:
            raise TensorError(f"block for axes {axes} has shape {block.shape}, expected {expected}")
        operands.append(block)
        subscripts.append("".join(_LETTERS[k - 1] for k in axes))
    out = "".join(_LETTERS[k] for k in range(d) if k + 1 not in used)
    result = np.einsum(",".join(subscripts) + "->" + out, *operands)
    if result.ndim == 0:
        return float(result)
    return result


def symmetrize_and_kill_diagonal(A) -> CoefficientTensor:
    """Average over all index permutations, then zero repeated-index entries."""
    a = as_array(A)
    if len(set(a.shape)) != 1:
        raise TensorError(f"symmetrization needs equal dims, got {a.shape}")
    perms = list(itertools.permutations(range(a.ndim)))
    sym = sum(np.transpose(a, perm) for perm in perms) / len(perms)
    # read every entry from its sorted-index representative so symmetry is exact
    sym = sym[tuple(np.sort(np.indices(a.shape), axis=0))]
    sym = np.where(_repeated_index_mask(a.shape), 0.0, sym)
    return CoefficientTensor(sym)


def slice_norms(A, axis_set: Iterable[int]) -> np.ndarray:
    """Euclidean norms of the slices ``(a_i)_{i_I}``, indexed by the other axes.

    Returns a 0-d array (the Frobenius norm) when ``axis_set`` covers every axis.
    """
    a = as_array(A)
    axes = _check_axes(axis_set, a.ndim)
    if not axes:
        raise TensorError("slice_norms needs a nonempty axis set")
    return np.sqrt(np.sum(a * a, axis=tuple(k - 1 for k in axes)))


def unfold(A, row_axes: Sequence[int]) -> np.ndarray:
    """Matricize with the given (1-based) axes as rows, the rest as columns."""
    a = as_array(A)
    rows = [k - 1 for k in row_axes]
    cols = [k for k in range(a.ndim) if k not in rows]
    moved = np.transpose(a, rows + cols)
    nrows = math.prod(a.shape[k] for k in rows) if rows else 1
    return moved.reshape(nrows, -1)
