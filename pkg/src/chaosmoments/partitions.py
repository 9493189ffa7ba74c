"""Set partitions of {1,...,d} and the exponential-case subset combinatorics."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

MAX_D = 4


class PartitionError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Partition:
    """A partition of a finite set of axis labels into nonempty blocks.

    Blocks are stored as sorted tuples, ordered by their smallest element, so
    structural equality coincides with set equality.
    """

    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        blocks = tuple(sorted((tuple(sorted(b)) for b in self.blocks), key=lambda b: b[0] if b else 0))
        if any(len(b) == 0 for b in blocks):
            raise PartitionError("partition blocks must be nonempty")
        flat = [x for b in blocks for x in b]
        if len(flat) != len(set(flat)):
            raise PartitionError(f"blocks are not disjoint: {blocks}")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def of(cls, *blocks: Iterable[int]) -> "Partition":
        return cls(tuple(tuple(b) for b in blocks))

    @classmethod
    def parse(cls, text: str) -> "Partition":
        """Parse the ``12|3`` text form."""
        text = text.strip()
        if not text:
            raise PartitionError("empty partition string")
        blocks = []
        for chunk in text.split("|"):
            chunk = chunk.strip()
            if not chunk or not chunk.isdigit():
                raise PartitionError(f"malformed partition block {chunk!r} in {text!r}")
            blocks.append(tuple(int(ch) for ch in chunk))
        return cls(tuple(blocks))

    @property
    def ground(self) -> tuple[int, ...]:
        return tuple(sorted(x for b in self.blocks for x in b))

    @property
    def k(self) -> int:
        return len(self.blocks)

    def __len__(self):
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)

    def __str__(self):
        return "|".join("".join(str(x) for x in b) for b in self.blocks)

    def covers(self, d: int) -> bool:
        return self.ground == tuple(range(1, d + 1))


def bell(d: int) -> int:
    # Bell triangle
    row = [1]
    for _ in range(d):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[0]


def _partitions_of(elems: tuple[int, ...]):
    if not elems:
        yield ()
        return
    first, rest = elems[0], elems[1:]
    for sub in _partitions_of(rest):
        yield ((first,),) + sub
        for i in range(len(sub)):
            yield sub[:i] + ((first,) + sub[i],) + sub[i + 1:]


@lru_cache(maxsize=None)
def partitions_of(elems: tuple[int, ...]) -> tuple[Partition, ...]:
    """All partitions of an arbitrary finite label set, in canonical order."""
    return tuple(sorted({Partition(p) for p in _partitions_of(tuple(sorted(elems)))},
                        key=lambda p: (p.k, p.blocks)))


def enumerate_partitions(d: int) -> tuple[Partition, ...]:
    """All Bell(d) partitions of {1,...,d}, coarsest first."""
    if not 1 <= d <= MAX_D:
        raise PartitionError(f"d must be in 1..{MAX_D}, got {d}")
    return partitions_of(tuple(range(1, d + 1)))


def q_family(J: Partition) -> tuple[tuple[int, ...], ...]:
    """Subsets I whose complement meets every block of J in at most one element."""
    ground = J.ground
    out = []
    for r in range(len(ground), -1, -1):
        for I in itertools.combinations(ground, r):
            comp = set(ground) - set(I)
            if all(len(comp.intersection(b)) <= 1 for b in J.blocks):
                out.append(I)
    return tuple(out)


def induced_partition(J: Partition, I: Iterable[int], check: bool = True) -> Partition:
    """Remove the elements of the complement of I from the blocks of J.

    With ``check`` (the default) I must belong to Q(J); ``check=False`` only
    requires I to be a subset of the ground set.
    """
    I = tuple(sorted(I))
    if check and I not in q_family(J):
        raise PartitionError(f"{I} is not in Q({J})")
    if not set(I) <= set(J.ground):
        raise PartitionError(f"{I} is not a subset of {J.ground}")
    keep = set(I)
    return Partition(tuple(tuple(x for x in b if x in keep) for b in J.blocks
                           if keep.intersection(b)))


def q_exponent(J: Partition, I: Iterable[int]) -> float:
    """Power of p attached to the subset I in the exponential-case formula."""
    n_out = len(J.ground) - len(tuple(I))
    return n_out + (J.k - n_out) / 2
