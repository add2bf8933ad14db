"""AST bit-coverage of samples.

Every node of the formula's syntax tree carries a bit width: 1 for
boolean-sorted nodes, 64 for integer-sorted ones (the lower 64 bits of the
value in two's complement), 0 for array-sorted nodes.  A bit counts as
covered once it has been observed as both 0 and 1 across the recorded
samples.  Nodes are numbered in deterministic pre-order, so bitmaps from
different runs over the same input can be compared and merged.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .errors import BitmapMismatch
from .terms import (
    Formula,
    Model,
    Sort,
    eval_formula,
    eval_term,
    iter_nodes,
    sort_of,
)

_WORD = (1 << 64) - 1

MAGIC = b"MGACOV1"


def _node_width(node) -> int:
    from .terms import _TERM_TYPES

    if isinstance(node, _TERM_TYPES):
        return 64 if sort_of(node) == Sort.INT else 0
    return 1  # formulas are boolean-sorted


@dataclass
class CoverageBitmap:
    """Per-node seen-zero / seen-one masks; masks only ever gain bits."""

    widths: list[int]
    seen_zero: list[int] = field(default_factory=list)
    seen_one: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.seen_zero:
            self.seen_zero = [0] * len(self.widths)
        if not self.seen_one:
            self.seen_one = [0] * len(self.widths)

    @classmethod
    def for_formula(cls, f: Formula) -> "CoverageBitmap":
        return cls([_node_width(node) for node in iter_nodes(f)])

    def copy(self) -> "CoverageBitmap":
        return CoverageBitmap(list(self.widths), list(self.seen_zero), list(self.seen_one))

    def covered_masks(self) -> list[int]:
        return [z & o for z, o in zip(self.seen_zero, self.seen_one)]

    def covered_bits(self) -> int:
        return sum(m.bit_count() for m in self.covered_masks())

    def total_bits(self) -> int:
        return sum(self.widths)

    def merge(self, other: "CoverageBitmap") -> None:
        _check_compatible(self, other)
        self.seen_zero = [a | b for a, b in zip(self.seen_zero, other.seen_zero)]
        self.seen_one = [a | b for a, b in zip(self.seen_one, other.seen_one)]


def _check_compatible(a: CoverageBitmap, b: CoverageBitmap) -> None:
    if a.widths != b.widths:
        raise BitmapMismatch("bitmaps cover different node sets")


def record_sample(bm: CoverageBitmap, f: Formula, sample: Model) -> CoverageBitmap:
    """Fold one sample into the bitmap: every AST node is evaluated and its
    value bits accumulated."""
    from .terms import _TERM_TYPES

    for i, node in enumerate(iter_nodes(f)):
        width = bm.widths[i]
        if width == 0:
            continue
        if width == 1:
            bits = 1 if eval_formula(node, sample) else 0
            mask = 1
        else:
            bits = eval_term(node, sample) & _WORD  # two's complement low bits
            mask = _WORD
        bm.seen_one[i] |= bits
        bm.seen_zero[i] |= ~bits & mask
    return bm


def raw_coverage(bm: CoverageBitmap) -> float:
    total = bm.total_bits()
    if total == 0:
        return 0.0
    return bm.covered_bits() / total


def normalized_coverage(mine: CoverageBitmap, others: list[CoverageBitmap]) -> float:
    """Covered bits of `mine` over the bits covered by at least one bitmap.

    Each bitmap's covered mask is computed first and the masks are unioned;
    a bit one method saw only as 0 and another only as 1 does not count.
    0/0 is defined as 1."""
    union_masks = mine.covered_masks()
    for other in others:
        _check_compatible(mine, other)
        union_masks = [u | m for u, m in zip(union_masks, other.covered_masks())]
    denominator = sum(m.bit_count() for m in union_masks)
    if denominator == 0:
        return 1.0
    return mine.covered_bits() / denominator


# ---------------------------------------------------------------------------
# Binary persistence: magic, u32 node count, then per node u8 width and two
# little-endian u64 masks (boolean nodes use the low bit).


def write_bitmap(bm: CoverageBitmap, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(bm.widths)))
        for width, zero, one in zip(bm.widths, bm.seen_zero, bm.seen_one):
            fh.write(struct.pack("<BQQ", width, zero, one))


def read_bitmap(path: str) -> CoverageBitmap:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise BitmapMismatch(f"{path}: not a coverage bitmap file")
        (count,) = struct.unpack("<I", fh.read(4))
        widths, zeros, ones = [], [], []
        for _ in range(count):
            width, zero, one = struct.unpack("<BQQ", fh.read(17))
            widths.append(width)
            zeros.append(zero)
            ones.append(one)
    return CoverageBitmap(widths, zeros, ones)
