"""Seeded test tensors: four families at three sizes per order.

Every fixture is Frobenius-normalized and drawn from a stream keyed by its
name, so adding or removing fixtures never changes the others.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import FIXTURE, name_key, stream
from .tensor import CoefficientTensor, symmetrize_and_kill_diagonal

FIXTURE_SEED = 20_170_331
FAMILIES = ("gaussian-sym", "sparse", "rank-one", "identity-like")
SIZES = {1: (4, 16, 64), 2: (4, 8, 16), 3: (3, 4, 6), 4: (4, 5, 6)}
SPARSE_DENSITY = 0.1


@dataclass(frozen=True)
class Fixture:
    name: str
    family: str
    tensor: CoefficientTensor

    @property
    def d(self) -> int:
        return self.tensor.order

    @property
    def n(self) -> int:
        return self.tensor.dims[0]


def _normalized(a: np.ndarray) -> np.ndarray:
    nrm = np.linalg.norm(a)
    return a / nrm if nrm > 0 else a


def _rng(name: str):
    return stream(FIXTURE_SEED, FIXTURE, name_key(name))


def _gaussian_sym(rng, d, n):
    a = rng.standard_normal((n,) * d)
    return symmetrize_and_kill_diagonal(a).array if d > 1 else a


def _sparse(rng, d, n):
    a = rng.standard_normal((n,) * d)
    mask = rng.random(a.shape) < SPARSE_DENSITY
    if not mask.any():
        mask.flat[rng.integers(a.size)] = True
    return np.where(mask, a, 0.0)


def _rank_one(rng, d, n):
    out = np.ones(())
    for _ in range(d):
        out = np.multiply.outer(out, rng.standard_normal(n))
    return out


def _identity_like(rng, d, n):
    a = np.zeros((n,) * d)
    a[(np.arange(n),) * d] = 1.0
    return a


_BUILDERS = {"gaussian-sym": _gaussian_sym, "sparse": _sparse, "rank-one": _rank_one,
             "identity-like": _identity_like}


def make_fixture(family: str, d: int, n: int) -> Fixture:
    if family not in _BUILDERS:
        raise ValueError(f"unknown fixture family {family!r}; choose from {FAMILIES}")
    name = f"{family}-d{d}-n{n}"
    a = _normalized(_BUILDERS[family](_rng(name), d, n))
    return Fixture(name, family, CoefficientTensor(a))


def ensemble(d: int, sizes=None, families=FAMILIES) -> list[Fixture]:
    """Families x sizes for order d (12 fixtures with the defaults)."""
    sizes = SIZES[d] if sizes is None else sizes
    return [make_fixture(f, d, n) for f in families for n in sizes]


def symmetric_ensemble(d: int, sizes=None) -> list[Fixture]:
    """Symmetric tensors vanishing on repeated indices, one per family that survives
    symmetrization (the identity-like family is purely diagonal and does not)."""
    sizes = SIZES[d] if sizes is None else sizes
    out = []
    for fam in ("gaussian-sym", "sparse", "rank-one"):
        for n in sizes:
            base = make_fixture(fam, d, n)
            a = _normalized(symmetrize_and_kill_diagonal(base.tensor).array)
            if np.any(a):
                out.append(Fixture(base.name + "-sym", fam, CoefficientTensor(a)))
    return out


def tetrahedral_parts(max_degree: int, n: int, index: int = 0) -> list:
    """Random mixed-degree tetrahedral polynomial: parts for degrees 0..max_degree."""
    name = f"tetrahedral-d{max_degree}-n{n}-{index}"
    rng = _rng(name)
    parts: list = [float(rng.standard_normal())]
    for j in range(1, max_degree + 1):
        a = _normalized(_gaussian_sym(rng, j, n)) * math.exp(rng.normal(0.0, 0.5))
        parts.append(a)
    return parts
