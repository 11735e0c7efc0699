"""Non-crossing partition combinatorics and cumulant machinery.

Works over a commutative diagonal subalgebra in coordinates: elements of
the subalgebra are complex ``d``-vectors and multiply coordinatewise.  A
:class:`CumulantFamily` stores, for each order ``n``, the multilinear map

    (c_1, ..., c_{n-1})  ->  kappa_n(a (x) c_1 a (x) ... (x) c_{n-1} a)

as a dense tensor of shape ``(d,) * n`` whose first axis is the output
coordinate.  Insertion convention throughout: the i-th insertion sits
between leg i and leg i+1; a nested block consumes the insertions strictly
inside its span and its value multiplies into the slot immediately left of
the leg following its span.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import (
    BadCompositionError,
    OrderExceededError,
    ShapeMismatchError,
    TooLargeError,
)

__all__ = [
    "NCPartition",
    "Composition",
    "CumulantFamily",
    "enumerate_nc",
    "catalan",
    "is_irreducible",
    "interval_refinements",
    "concat",
    "compositions",
    "kappa_pi_eval",
    "cumulants_from_moment_tensors",
    "moment_tensors_from_cumulants",
    "check_irreducible_identity",
    "r_series",
]

# Guards keeping enumeration and tensor sizes at desk scale.
MAX_ENUM = 12
MAX_ORDER = 8
MAX_DIAG = 4


def catalan(n):
    """n-th Catalan number."""
    c = 1
    for i in range(n):
        c = c * 2 * (2 * i + 1) // (i + 2)
    return c


@dataclass(frozen=True)
class NCPartition:
    """A non-crossing partition of ``{1..n}``.

    ``blocks`` are tuples of strictly increasing indices, ordered by their
    smallest element.  Construction validates disjointness, coverage and the
    non-crossing property; the nesting forest is derived on demand.
    """

    n: int
    blocks: tuple

    def __post_init__(self):
        blocks = tuple(tuple(sorted(int(i) for i in blk)) for blk in self.blocks)
        blocks = tuple(sorted(blocks, key=lambda blk: blk[0]))
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "n", int(self.n))
        seen = set()
        for blk in blocks:
            if not blk:
                raise ValueError("empty block")
            if len(set(blk)) != len(blk):
                raise ValueError(f"repeated index in block {blk}")
            seen.update(blk)
        if seen != set(range(1, self.n + 1)):
            raise ValueError(f"blocks do not partition 1..{self.n}")
        if _crossing_pair(blocks) is not None:
            raise ValueError(f"blocks {blocks} contain a crossing")

    @property
    def num_blocks(self):
        return len(self.blocks)

    def parents(self):
        """Index of the innermost enclosing block per block (-1 for roots)."""
        return _parents(self.blocks)

    def children(self):
        """Lists of child-block indices per block, plus the root list."""
        parents = self.parents()
        kids = [[] for _ in self.blocks]
        roots = []
        for i, p in enumerate(parents):
            if p < 0:
                roots.append(i)
            else:
                kids[p].append(i)
        return kids, roots

    def __str__(self):
        body = "/".join(",".join(map(str, blk)) for blk in self.blocks)
        return f"NC({self.n}):{body}"


def _crossing_pair(blocks):
    """Return a crossing pair of blocks, or None.

    Two blocks cross unless their spans are disjoint or one lies entirely
    inside a single gap of the other.
    """
    for x, y in itertools.combinations(blocks, 2):
        lox, hix = x[0], x[-1]
        loy, hiy = y[0], y[-1]
        if hix < loy or hiy < lox:
            continue
        inner, outer = (x, y) if (loy < lox and hix < hiy) else (y, x)
        if not (outer[0] < inner[0] and inner[-1] < outer[-1]):
            return (x, y)
        if not any(u < inner[0] and inner[-1] < v for u, v in zip(outer, outer[1:])):
            return (x, y)
    return None


def _parents(blocks):
    spans = [(blk[0], blk[-1]) for blk in blocks]
    parents = []
    for i, (lo, hi) in enumerate(spans):
        best = -1
        best_lo = -1
        for j, (lo2, hi2) in enumerate(spans):
            if j != i and lo2 < lo and hi < hi2 and lo2 > best_lo:
                best, best_lo = j, lo2
        parents.append(best)
    return parents


@lru_cache(maxsize=None)
def _nc_blocks(n):
    """All non-crossing partitions of {1..n} as block tuples (1-based)."""
    if n == 0:
        return ((),)
    out = []
    universe = tuple(range(2, n + 1))
    for size in range(n):
        for rest in itertools.combinations(universe, size):
            first = (1,) + rest
            segments = []
            prev = 1
            for nxt in rest + (n + 1,):
                segments.append((prev + 1, nxt - 1))  # inclusive range, may be empty
                prev = nxt
            seg_choices = []
            for lo, hi in segments:
                length = hi - lo + 1
                shifted = []
                for blks in _nc_blocks(length):
                    shifted.append(
                        tuple(tuple(i + lo - 1 for i in blk) for blk in blks)
                    )
                seg_choices.append(tuple(shifted))
            for combo in itertools.product(*seg_choices):
                blocks = (first,) + tuple(
                    blk for part in combo for blk in part
                )
                out.append(tuple(sorted(blocks, key=lambda blk: blk[0])))
    return tuple(out)


@lru_cache(maxsize=None)
def enumerate_nc(n):
    """All non-crossing partitions of ``{1..n}``; count is Catalan(n).

    Generated by recursive placement of the block containing 1 (the gaps it
    leaves are partitioned independently), so the cost is proportional to
    the output size.  Guarded at ``n <= 12``.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n > MAX_ENUM:
        raise TooLargeError(f"refusing to enumerate NC({n}); guard is {MAX_ENUM}")
    return tuple(NCPartition(n, blks) for blks in _nc_blocks(n))


def is_irreducible(p):
    """True iff the first and last element share a block."""
    if p.n == 0:
        return False
    for blk in p.blocks:
        if 1 in blk:
            return p.n in blk
    return False


@dataclass(frozen=True)
class Composition:
    """An ordered tuple of positive parts."""

    parts: tuple

    def __post_init__(self):
        parts = tuple(int(x) for x in self.parts)
        object.__setattr__(self, "parts", parts)
        if not parts or any(x < 1 for x in parts):
            raise BadCompositionError(f"parts must be positive, got {parts}")

    @property
    def total(self):
        return sum(self.parts)

    def __len__(self):
        return len(self.parts)


def compositions(r):
    """All compositions of ``r``, grouped as Composition objects."""
    if r < 1:
        raise ValueError("r must be positive")
    out = []
    for cuts in range(2 ** (r - 1)):
        parts = []
        prev = 0
        for pos in range(1, r):
            if cuts >> (pos - 1) & 1:
                parts.append(pos - prev)
                prev = pos
        parts.append(r - prev)
        out.append(Composition(tuple(parts)))
    return out


def concat(p, q):
    """Concatenation: blocks of ``q`` shifted past ``p`` and unioned."""
    shifted = tuple(tuple(i + p.n for i in blk) for blk in q.blocks)
    return NCPartition(p.n + q.n, p.blocks + shifted)


def interval_refinements(r, c):
    """All non-crossing partitions of {1..r} refining the interval partition
    with consecutive block sizes ``c``.

    Equals the concatenation products of independent enumerations of each
    interval.
    """
    if not isinstance(c, Composition):
        c = Composition(tuple(c))
    if c.total != r:
        raise BadCompositionError(f"parts {c.parts} do not sum to {r}")
    per_interval = []
    offset = 0
    for part in c.parts:
        shifted = []
        for p in enumerate_nc(part):
            shifted.append(
                tuple(tuple(i + offset for i in blk) for blk in p.blocks)
            )
        per_interval.append(shifted)
        offset += part
    out = []
    for combo in itertools.product(*per_interval):
        blocks = tuple(blk for part in combo for blk in part)
        out.append(NCPartition(r, blocks))
    return out


@dataclass(frozen=True, eq=False)
class CumulantFamily:
    """Cumulant tensors over a commutative diagonal subalgebra.

    ``kappas[n-1]`` has shape ``(d,) * n``: axis 0 is the output coordinate,
    the remaining ``n-1`` axes are the insertion coordinates.
    """

    d: int
    N: int
    kappas: tuple

    def __post_init__(self):
        if self.d < 1 or self.d > MAX_DIAG:
            raise TooLargeError(f"diagonal dimension {self.d} outside 1..{MAX_DIAG}")
        if self.N < 1 or self.N > MAX_ORDER:
            raise OrderExceededError(f"order {self.N} outside 1..{MAX_ORDER}")
        if len(self.kappas) != self.N:
            raise ShapeMismatchError("need one tensor per order 1..N")
        coerced = []
        for n, t in enumerate(self.kappas, start=1):
            t = np.asarray(t, dtype=np.complex128)
            if t.shape != (self.d,) * n:
                raise ShapeMismatchError(
                    f"order-{n} tensor has shape {t.shape}, expected {(self.d,) * n}"
                )
            if not np.all(np.isfinite(t)):
                raise ValueError("cumulant tensors must be finite")
            coerced.append(t)
        object.__setattr__(self, "kappas", tuple(coerced))

    def kappa(self, n):
        if not 1 <= n <= self.N:
            raise OrderExceededError(f"order {n} outside 1..{self.N}")
        return self.kappas[n - 1]

    def apply(self, n, inserts):
        """Evaluate the order-``n`` multilinear map on ``n-1`` vectors."""
        t = self.kappa(n)
        if len(inserts) != n - 1:
            raise ShapeMismatchError(f"order {n} needs {n - 1} insertions")
        for c in reversed(inserts):
            t = np.tensordot(t, np.asarray(c, dtype=np.complex128), axes=([-1], [0]))
        return t


def _as_vectors(inserts, d):
    out = []
    for c in inserts:
        v = np.asarray(c, dtype=np.complex128)
        if v.shape != (d,):
            raise ShapeMismatchError(f"insertion has shape {v.shape}, expected ({d},)")
        out.append(v)
    return out


def kappa_pi_eval(fam, p, inserts):
    """Nested evaluation of the partition cumulant on given insertions.

    Innermost blocks evaluate their own cumulant on the insertions between
    their legs; the value multiplies (coordinatewise) into the merged slot
    left behind, and the root forest multiplies out left to right together
    with the untouched slots.
    """
    if p.n > fam.N:
        raise OrderExceededError(f"partition order {p.n} exceeds family order {fam.N}")
    if p.n == 0:
        return np.ones(fam.d, dtype=np.complex128)
    inserts = _as_vectors(inserts, fam.d)
    if len(inserts) != p.n - 1:
        raise ShapeMismatchError(f"need {p.n - 1} insertions, got {len(inserts)}")
    kids, roots = p.children()
    spans = [(blk[0], blk[-1]) for blk in p.blocks]

    def subtree(bi):
        legs = p.blocks[bi]
        child_idx = kids[bi]
        child_vals = [(spans[ci], subtree(ci)) for ci in child_idx]
        args = []
        for u, v in zip(legs, legs[1:]):
            s = np.ones(fam.d, dtype=np.complex128)
            covered = []
            for (lo, hi), val in child_vals:
                if u < lo and hi < v:
                    s = s * val
                    covered.append((lo, hi))
            for slot in range(u, v):
                if not any(lo <= slot <= hi - 1 for lo, hi in covered):
                    s = s * inserts[slot - 1]
            args.append(s)
        return fam.apply(len(legs), args)

    result = np.ones(fam.d, dtype=np.complex128)
    root_spans = [spans[ri] for ri in roots]
    for ri in roots:
        result = result * subtree(ri)
    for slot in range(1, p.n):
        if not any(lo <= slot <= hi - 1 for lo, hi in root_spans):
            result = result * inserts[slot - 1]
    return result


@lru_cache(maxsize=None)
def _partition_program(p):
    """Flattened index classes of a partition for dense tensor assembly.

    Coordinatewise multiplication forces every factor feeding one slot of a
    block to share one index.  Class 0 is the output; each block gap gets a
    fresh class claimed innermost-first; slots left over sit at the root and
    share class 0.  Returns ``(n_classes, slot_class, blocks_meta)`` where
    ``blocks_meta[i] = (size, out_class, gap_classes)`` in block order.
    """
    n = p.n
    slot_class = [-1] * max(0, n - 1)
    n_classes = 1
    gap_classes = [None] * len(p.blocks)
    order = sorted(
        range(len(p.blocks)),
        key=lambda i: (p.blocks[i][-1] - p.blocks[i][0], p.blocks[i][0]),
    )
    for bi in order:
        legs = p.blocks[bi]
        gaps = []
        for u, v in zip(legs, legs[1:]):
            cls = n_classes
            n_classes += 1
            for slot in range(u, v):
                if slot_class[slot - 1] == -1:
                    slot_class[slot - 1] = cls
            gaps.append(cls)
        gap_classes[bi] = tuple(gaps)
    slot_class = [0 if cls == -1 else cls for cls in slot_class]
    blocks_meta = []
    for bi, legs in enumerate(p.blocks):
        lo, hi = legs[0], legs[-1]
        if lo > 1:
            out = slot_class[lo - 2]
        elif hi < n:
            out = slot_class[hi - 1]
        else:
            out = 0
        blocks_meta.append((len(legs), out, gap_classes[bi]))
    return n_classes, tuple(slot_class), tuple(blocks_meta)


def _partition_tensor(p, kappa_of_block, d):
    """Dense tensor of the partition cumulant, shape ``(d,) * n``.

    ``kappa_of_block(i, size)`` returns the cumulant tensor used by block
    ``i``.  The result is supported on index tuples that are constant along
    each gap class, so assembly iterates over class assignments only.
    """
    n_classes, slot_class, blocks_meta = _partition_program(p)
    tensors = [kappa_of_block(i, meta[0]) for i, meta in enumerate(blocks_meta)]
    out = np.zeros((d,) * p.n, dtype=np.complex128)
    for assign in itertools.product(range(d), repeat=n_classes):
        val = 1.0 + 0.0j
        for (size, out_cls, gaps), tensor in zip(blocks_meta, tensors):
            idx = (assign[out_cls],) + tuple(assign[g] for g in gaps)
            val = val * tensor[idx]
            if val == 0.0:
                break
        if val == 0.0:
            continue
        pos = (assign[0],) + tuple(assign[c] for c in slot_class)
        out[pos] += val
    return out


def partition_moment_tensor(fam, p):
    """Dense tensor of ``kappa_pi`` for one family (flat expansion)."""
    return _partition_tensor(p, lambda i, size: fam.kappa(size), fam.d)


def cumulants_from_moment_tensors(moments, d, N):
    """Triangular inversion of the moment-cumulant relation.

    ``moments[n-1]`` is the order-``n`` moment tensor, shape ``(d,) * n``.
    Each cumulant is the moment minus the sum over all coarser non-crossing
    partitions evaluated on the already-known lower orders.
    """
    if N > MAX_ORDER:
        raise OrderExceededError(f"order {N} exceeds guard {MAX_ORDER}")
    kappas = []
    for n in range(1, N + 1):
        m_n = np.asarray(moments[n - 1], dtype=np.complex128)
        if m_n.shape != (d,) * n:
            raise ShapeMismatchError(
                f"order-{n} moment tensor has shape {m_n.shape}"
            )
        acc = np.zeros_like(m_n)
        if n > 1:
            partial = CumulantFamily(d, n - 1, tuple(kappas))
            for p in enumerate_nc(n):
                if p.num_blocks == 1:
                    continue
                acc += _partition_tensor(
                    p, lambda i, size: partial.kappa(size), d
                )
        kappas.append(m_n - acc)
    return CumulantFamily(d, N, tuple(kappas))


def moment_tensors_from_cumulants(fam):
    """Moment tensors from cumulants: sum over all non-crossing partitions."""
    moments = []
    for n in range(1, fam.N + 1):
        acc = np.zeros((fam.d,) * n, dtype=np.complex128)
        for p in enumerate_nc(n):
            acc += _partition_tensor(p, lambda i, size: fam.kappa(size), fam.d)
        moments.append(acc)
    return moments


def check_irreducible_identity(fam, r, b):
    """Relative residual of the irreducible-partition identity at order r.

    The alternating-sign sum over compositions and their interval
    refinements must equal the sum over partitions whose first and last
    element share a block.  Both sides carry the leading insertion of the
    repeated argument, evaluate through the nested evaluator, and are
    computed by independent enumerations.
    """
    if r > min(fam.N, 7):
        raise TooLargeError(f"order {r} exceeds guard min(N, 7)")
    b = _as_vectors([b], fam.d)[0]
    inserts = [b] * (r - 1)
    lhs = np.zeros(fam.d, dtype=np.complex128)
    for c in compositions(r):
        sign = -1.0 if len(c) % 2 == 0 else 1.0
        for p in interval_refinements(r, c):
            lhs += sign * b * kappa_pi_eval(fam, p, inserts)
    rhs = np.zeros(fam.d, dtype=np.complex128)
    for p in enumerate_nc(r):
        if is_irreducible(p):
            rhs += b * kappa_pi_eval(fam, p, inserts)
    scale = max(
        1.0, float(np.max(np.abs(lhs))), float(np.max(np.abs(rhs)))
    )
    return float(np.max(np.abs(lhs - rhs))) / scale


def r_series(fam, w, order):
    """Partial cumulant series sum_{r<=order} kappa_r(w, ..., w)."""
    if order > fam.N:
        raise OrderExceededError(f"order {order} exceeds family order {fam.N}")
    w = _as_vectors([w], fam.d)[0]
    acc = np.zeros(fam.d, dtype=np.complex128)
    for r in range(1, order + 1):
        acc += fam.apply(r, [w] * (r - 1))
    return acc
