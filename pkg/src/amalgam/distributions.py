"""Truncated distributions over a commutative diagonal subalgebra.

A :class:`BDist` stores the moment tensors

    M_n(c_1, ..., c_{n-1}) = E(a c_1 a c_2 ... c_{n-1} a),  n <= N,

in diagonal coordinates, plus a declared norm bound used for domain
certificates.  A :class:`JointBDist` stores one such tensor per word in
two letters, i.e. the mixed moments of a pair of elements.

Free pairs are synthesized at the cumulant level: joint cumulants vanish
on mixed words and restrict to the marginals on constant words; joint
moments then come from the colored sum over non-crossing partitions whose
blocks are monochromatic.  This is exact at the truncation order.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .errors import (
    OrderExceededError,
    OutOfDomainError,
    ShapeMismatchError,
)
from .noncrossing import (
    CumulantFamily,
    MAX_DIAG,
    MAX_ORDER,
    _partition_tensor,
    cumulants_from_moment_tensors,
    enumerate_nc,
    moment_tensors_from_cumulants,
)
from .transforms import TruncatedModel, additivity_check, multiplicativity_check
from . import algebra

__all__ = [
    "BDist",
    "JointBDist",
    "ScalingReport",
    "default_norm_bound",
    "moments_to_cumulants",
    "cumulants_to_moments",
    "dist_from_cumulants",
    "bdist_from_concrete",
    "free_join",
    "correlated_join",
    "freeness_oracle",
    "sum_dist",
    "prod_dist",
    "additivity_scaling_test",
    "multiplicativity_scaling_test",
    "bdist_to_json",
    "bdist_from_json",
    "joint_to_json",
    "joint_from_json",
]


def _check_tensors(d, N, tensors):
    if d < 1 or d > MAX_DIAG:
        raise ShapeMismatchError(f"diagonal dimension {d} outside 1..{MAX_DIAG}")
    if N < 1 or N > MAX_ORDER:
        raise OrderExceededError(f"truncation order {N} outside 1..{MAX_ORDER}")
    out = []
    for n, t in enumerate(tensors, start=1):
        t = np.asarray(t, dtype=np.complex128)
        if t.shape != (d,) * n:
            raise ShapeMismatchError(
                f"order-{n} tensor has shape {t.shape}, expected {(d,) * n}"
            )
        if not np.all(np.isfinite(t)):
            raise ValueError("moment tensors must be finite")
        out.append(t)
    return tuple(out)


def _contract(tensor, inserts):
    t = tensor
    for c in reversed(inserts):
        t = np.tensordot(t, np.asarray(c, dtype=np.complex128), axes=([-1], [0]))
    return t


@dataclass(frozen=True, eq=False)
class BDist:
    """Truncated distribution of one element: moment tensors up to order N."""

    d: int
    N: int
    moments: tuple
    norm_bound: float

    def __post_init__(self):
        object.__setattr__(self, "moments", _check_tensors(self.d, self.N, self.moments))
        if len(self.moments) != self.N:
            raise ShapeMismatchError("need one moment tensor per order 1..N")
        if self.norm_bound < 0:
            raise ValueError("norm bound must be nonnegative")

    def moment(self, n):
        if not 1 <= n <= self.N:
            raise OrderExceededError(f"order {n} outside 1..{self.N}")
        return self.moments[n - 1]

    def apply_moment(self, n, inserts):
        t = self.moment(n)
        if len(inserts) != n - 1:
            raise ShapeMismatchError(f"order {n} needs {n - 1} insertions")
        return _contract(t, inserts)

    def norm_consistency(self, rng, samples=20):
        """Max of |M_n(unit insertions)| / norm_bound^n over random unit
        insertions; at most 1 + 1e-9 for an honest bound."""
        worst = 0.0
        for n in range(1, self.N + 1):
            for _ in range(samples):
                ins = [_random_unit(rng, self.d) for _ in range(n - 1)]
                val = float(np.max(np.abs(self.apply_moment(n, ins))))
                denom = self.norm_bound ** n if self.norm_bound > 0 else np.inf
                worst = max(worst, val / denom)
        return worst


def _random_unit(rng, d):
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.max(np.abs(v))


@dataclass(frozen=True, eq=False)
class JointBDist:
    """Joint truncated distribution of a pair: one tensor per word.

    ``words[(w_1, ..., w_n)]`` with letters in {1, 2} is the mixed moment
    tensor of ``a_{w_1} c_1 a_{w_2} ... c_{n-1} a_{w_n}``.
    Constant words are exactly the marginal tensors.
    """

    d: int
    N: int
    words: dict
    norm_bounds: tuple

    def __post_init__(self):
        if self.N < 1 or self.N > MAX_ORDER:
            raise OrderExceededError(f"order {self.N} outside 1..{MAX_ORDER}")
        coerced = {}
        for n in range(1, self.N + 1):
            for word in itertools.product((1, 2), repeat=n):
                if word not in self.words:
                    raise ShapeMismatchError(f"missing word tensor {word}")
                t = np.asarray(self.words[word], dtype=np.complex128)
                if t.shape != (self.d,) * n:
                    raise ShapeMismatchError(
                        f"word {word} tensor has shape {t.shape}"
                    )
                coerced[word] = t
        object.__setattr__(self, "words", coerced)

    def word_moment(self, word):
        word = tuple(int(c) for c in word)
        if word not in self.words:
            raise OrderExceededError(f"no tensor for word {word}")
        return self.words[word]

    def apply_word(self, word, inserts):
        t = self.word_moment(word)
        if len(inserts) != len(word) - 1:
            raise ShapeMismatchError(
                f"word of length {len(word)} needs {len(word) - 1} insertions"
            )
        return _contract(t, inserts)

    def marginal(self, color):
        """Marginal distribution of one letter (tensor views are copied)."""
        tensors = tuple(
            self.word_moment((color,) * n).copy() for n in range(1, self.N + 1)
        )
        return BDist(self.d, self.N, tensors, self.norm_bounds[color - 1])


def default_norm_bound(moments):
    """Declared norm proxy: twice the largest n-th root of a tensor entry."""
    best = 0.0
    for n, t in enumerate(moments, start=1):
        top = float(np.max(np.abs(t)))
        if top > 0.0:
            best = max(best, top ** (1.0 / n))
    return 2.0 * best


def moments_to_cumulants(dist):
    """Cumulant family of a truncated distribution (triangular recursion)."""
    return cumulants_from_moment_tensors(dist.moments, dist.d, dist.N)


def cumulants_to_moments(fam, norm_bound=None):
    """Distribution whose moments are the non-crossing sums of ``fam``."""
    moments = moment_tensors_from_cumulants(fam)
    if norm_bound is None:
        norm_bound = default_norm_bound(moments)
    return BDist(fam.d, fam.N, tuple(moments), float(norm_bound))


def dist_from_cumulants(fam, norm_bound=None):
    """Alias of :func:`cumulants_to_moments` with the declared bound."""
    return cumulants_to_moments(fam, norm_bound=norm_bound)


def _coordinate_embedding(ctx):
    if ctx.kind == algebra.SCALAR:
        dim, d = ctx.dim, 1
        embed = lambda v: v[0] * np.eye(dim, dtype=np.complex128)
        coords = lambda m: np.array([np.trace(m) / dim], dtype=np.complex128)
    elif ctx.kind == algebra.DIAGONAL:
        d = ctx.dim
        embed = lambda v: np.diag(np.asarray(v, dtype=np.complex128))
        coords = lambda m: np.diag(m).copy()
    else:
        raise OutOfDomainError(
            "truncated distributions need a commutative (scalar or diagonal) "
            "subalgebra"
        )
    return d, embed, coords


def bdist_from_concrete(ctx, a, N, norm_bound=None):
    """Moment tensors of a concrete matrix over a commutative context.

    Evaluates every basis insertion word, so it is meant for small d and N.
    """
    a = algebra.as_element(a, dim=ctx.dim)
    d, embed, coords = _coordinate_embedding(ctx)
    basis = [np.zeros(d, dtype=np.complex128) for _ in range(d)]
    for j in range(d):
        basis[j][j] = 1.0
    tensors = []
    for n in range(1, N + 1):
        t = np.zeros((d,) * n, dtype=np.complex128)
        for idx in itertools.product(range(d), repeat=n - 1):
            m = a
            for j in idx:
                m = m @ embed(basis[j]) @ a
            t[(slice(None),) + idx] = coords(algebra.cond_expect(ctx, m))
        tensors.append(t)
    if norm_bound is None:
        norm_bound = algebra.op_norm(a)
    return BDist(d, N, tuple(tensors), float(norm_bound))


def _colored_word_tensor(word, fams, d):
    """Sum over non-crossing partitions with monochromatic blocks."""
    n = len(word)
    acc = np.zeros((d,) * n, dtype=np.complex128)
    for p in enumerate_nc(n):
        colors = []
        mono = True
        for blk in p.blocks:
            seen = {word[i - 1] for i in blk}
            if len(seen) > 1:
                mono = False
                break
            colors.append(seen.pop())
        if not mono:
            continue
        acc += _partition_tensor(
            p, lambda i, size, c=tuple(colors): fams[c[i]].kappa(size), d
        )
    return acc


def free_join(x, y):
    """Joint distribution of a free pair with the given marginals.

    Joint cumulants vanish on mixed words; the marginal tensors of the
    result equal the inputs exactly.
    """
    if x.d != y.d or x.N != y.N:
        raise ShapeMismatchError("marginals must share d and N")
    fams = {1: moments_to_cumulants(x), 2: moments_to_cumulants(y)}
    words = {}
    for n in range(1, x.N + 1):
        for word in itertools.product((1, 2), repeat=n):
            if all(c == 1 for c in word):
                words[word] = x.moment(n).copy()
            elif all(c == 2 for c in word):
                words[word] = y.moment(n).copy()
            else:
                words[word] = _colored_word_tensor(word, fams, x.d)
    return JointBDist(x.d, x.N, words, (x.norm_bound, y.norm_bound))


def correlated_join(x, y=None):
    """Fully dependent pair: every mixed cumulant equals the pure one,
    i.e. the joint distribution of (a, a).  Useful as a negative control;
    ``y`` is accepted for signature symmetry and must equal ``x``'s role."""
    if y is not None and (y.d != x.d or y.N != x.N):
        raise ShapeMismatchError("negative-control pair must share d and N")
    words = {}
    for n in range(1, x.N + 1):
        for word in itertools.product((1, 2), repeat=n):
            words[word] = x.moment(n).copy()
    return JointBDist(x.d, x.N, words, (x.norm_bound, x.norm_bound))


def _insertions(j, n, insertions):
    if insertions is None:
        return [np.ones(j.d, dtype=np.complex128) for _ in range(n - 1)]
    ins = [np.asarray(c, dtype=np.complex128) for c in insertions]
    if len(ins) != n - 1 or any(c.shape != (j.d,) for c in ins):
        raise ShapeMismatchError(f"need {n - 1} insertions of shape ({j.d},)")
    return ins


def _centered_word_expectation(j, word, ins):
    n = len(word)
    mus = [j.word_moment((c,)) for c in word]
    total = np.zeros(j.d, dtype=np.complex128)
    for mask in range(1 << n):
        kept = [i for i in range(n) if (mask >> i) & 1]
        sign = -1.0 if (n - len(kept)) % 2 else 1.0
        if not kept:
            term = np.ones(j.d, dtype=np.complex128)
            for mu in mus:
                term = term * mu
            for c in ins:
                term = term * c
            total += sign * term
            continue
        outer = np.ones(j.d, dtype=np.complex128)
        k0, kl = kept[0], kept[-1]
        for i in range(k0):
            outer = outer * mus[i] * ins[i]
        for i in range(kl + 1, n):
            outer = outer * mus[i]
        for s in range(kl, n - 1):
            outer = outer * ins[s]
        args = []
        for p_cur, p_next in zip(kept, kept[1:]):
            merged = np.ones(j.d, dtype=np.complex128)
            for s in range(p_cur, p_next):
                merged = merged * ins[s]
            for i in range(p_cur + 1, p_next):
                merged = merged * mus[i]
            args.append(merged)
        sub = j.apply_word(tuple(word[i] for i in kept), args)
        total += sign * outer * sub
    return total


def freeness_oracle(j, n, insertions=None):
    """Max violation of the alternating centered-word freeness condition
    at order n.

    Letters are centered (a_i minus its expectation); ``insertions`` are
    the subalgebra elements placed between letters (identity by default;
    pass explicit values for randomized probes so the result stays a
    deterministic function of its inputs).
    """
    if not 1 <= n <= j.N:
        raise OrderExceededError(f"order {n} outside 1..{j.N}")
    ins = _insertions(j, n, insertions)
    worst = 0.0
    words = {
        tuple(1 if i % 2 == 0 else 2 for i in range(n)),
        tuple(2 if i % 2 == 0 else 1 for i in range(n)),
    }
    for word in sorted(words):
        val = _centered_word_expectation(j, word, ins)
        worst = max(worst, float(np.max(np.abs(val))))
    return worst


def sum_dist(j):
    """Distribution of the sum: order-n moments add over all words."""
    tensors = []
    for n in range(1, j.N + 1):
        acc = np.zeros((j.d,) * n, dtype=np.complex128)
        for word in itertools.product((1, 2), repeat=n):
            acc += j.word_moment(word)
        tensors.append(acc)
    return BDist(j.d, j.N, tuple(tensors), j.norm_bounds[0] + j.norm_bounds[1])


def prod_dist(j):
    """Distribution of the product ``a_1 a_2``.

    The order-n product moment consumes the alternating word of length 2n
    with identity insertions inside each pair, so a joint of order N
    supports product order N // 2.
    """
    n_max = j.N // 2
    if n_max < 1:
        raise OrderExceededError(
            f"joint order {j.N} supports no product moments"
        )
    tensors = []
    for n in range(1, n_max + 1):
        word = (1, 2) * n
        t = j.word_moment(word)
        within_pair_axes = tuple(range(1, 2 * n, 2))
        tensors.append(t.sum(axis=within_pair_axes))
    return BDist(j.d, n_max, tuple(tensors), j.norm_bounds[0] * j.norm_bounds[1])


@dataclass
class ScalingReport:
    """Outcome of a truncation-scaling theorem test.

    ``passed`` is true when the residual sits below the absolute floor or
    shrinks by at least ``2**(order_effective - 1)`` when the probe point
    is halved.  ``calibrated_scale`` is the constant fitted from the
    halved point."""

    residual: float
    residual_half: float
    shrink: float
    order_effective: int
    floor: float
    calibrated_scale: float
    passed: bool


def _vector_probe(w, d):
    w = np.asarray(w, dtype=np.complex128)
    if w.ndim == 2:
        w = np.diag(algebra.as_element(w, dim=d))
    if w.shape != (d,):
        raise ShapeMismatchError(f"probe has shape {w.shape}, expected ({d},)")
    return w


def _scaling_report(residual, residual_half, n_eff, floor, w_norm):
    shrink = residual / max(residual_half, 1e-300)
    passed = residual <= floor or shrink >= 2.0 ** (n_eff - 1)
    half_norm = w_norm / 2.0
    calibrated = residual_half / (half_norm ** n_eff) if half_norm > 0 else 0.0
    return ScalingReport(
        residual=residual,
        residual_half=residual_half,
        shrink=shrink,
        order_effective=n_eff,
        floor=floor,
        calibrated_scale=calibrated,
        passed=passed,
    )


def additivity_scaling_test(x, y, w, tol=1e-10, floor=1e-12, joint=None):
    """R-additivity at truncation order: residual with halving check.

    On a free joint the combinatorial cumulants add exactly and the
    residual is a pure truncation tail of the effective order min(N_x,
    N_y); dependent joints plateau and fail the shrink requirement.
    """
    j = free_join(x, y) if joint is None else joint
    s = sum_dist(j)
    mx, my, ms = TruncatedModel(x), TruncatedModel(y), TruncatedModel(s)
    w = _vector_probe(w, x.d)
    n_eff = min(x.N, y.N)
    r1 = additivity_check(mx, my, ms, w, tol=tol)
    r2 = additivity_check(mx, my, ms, w / 2.0, tol=tol)
    return _scaling_report(r1, r2, n_eff, floor, float(np.max(np.abs(w))))


def multiplicativity_scaling_test(x, y, w, tol=1e-10, floor=1e-12, joint=None):
    """S-multiplicativity at truncation order (commutative diagonal B).

    The product distribution only reaches order N // 2, which sets the
    effective scaling order.
    """
    j = free_join(x, y) if joint is None else joint
    p = prod_dist(j)
    mx, my, mp = TruncatedModel(x), TruncatedModel(y), TruncatedModel(p)
    w = _vector_probe(w, x.d)
    n_eff = p.N
    r1 = multiplicativity_check(mx, my, mp, w, tol=tol)
    r2 = multiplicativity_check(mx, my, mp, w / 2.0, tol=tol)
    return _scaling_report(r1, r2, n_eff, floor, float(np.max(np.abs(w))))


# -- JSON round trips -------------------------------------------------

def _flatten(t):
    return [[float(z.real), float(z.imag)] for z in t.ravel(order="C")]


def _unflatten(pairs, shape):
    flat = np.array(
        [complex(re, im) for re, im in pairs], dtype=np.complex128
    )
    return flat.reshape(shape, order="C")


def bdist_to_json(dist):
    """JSON document for a distribution: complex entries as [re, im],
    row-major by (output coordinate, insertion coordinates)."""
    return {
        "d": dist.d,
        "n": dist.N,
        "norm_bound": float(dist.norm_bound),
        "moments": {str(n): _flatten(dist.moment(n)) for n in range(1, dist.N + 1)},
    }


def bdist_from_json(doc):
    d, n_ord = int(doc["d"]), int(doc["n"])
    tensors = tuple(
        _unflatten(doc["moments"][str(n)], (d,) * n) for n in range(1, n_ord + 1)
    )
    return BDist(d, n_ord, tensors, float(doc["norm_bound"]))


def joint_to_json(j):
    moments = {}
    for n in range(1, j.N + 1):
        for word in itertools.product((1, 2), repeat=n):
            moments["".join(map(str, word))] = _flatten(j.word_moment(word))
    return {
        "d": j.d,
        "n": j.N,
        "norm_bounds": [float(b) for b in j.norm_bounds],
        "moments": moments,
    }


def joint_from_json(doc):
    d, n_ord = int(doc["d"]), int(doc["n"])
    words = {}
    for key, pairs in doc["moments"].items():
        word = tuple(int(c) for c in key)
        words[word] = _unflatten(pairs, (d,) * len(word))
    bounds = tuple(float(b) for b in doc["norm_bounds"])
    return JointBDist(d, n_ord, words, bounds)


def bdist_dumps(dist):
    return json.dumps(bdist_to_json(dist), sort_keys=True)


def bdist_loads(text):
    return bdist_from_json(json.loads(text))


def joint_dumps(j):
    return json.dumps(joint_to_json(j), sort_keys=True)


def joint_loads(text):
    return joint_from_json(json.loads(text))
