"""Concrete matrix Banach-algebra substrate.

Complex square matrices play the role of the ambient unital algebra.  An
:class:`AlgebraContext` selects one of four unital subalgebras together with
its canonical conditional expectation (a unital, norm-decreasing bimodule
projection onto the subalgebra):

``scalar``
    multiples of the identity; expectation is the normalized trace.
``diagonal``
    diagonal matrices; expectation pinches to the diagonal.
``block``
    ``k x k`` blocks tensored with an identity of size ``d`` (ambient
    dimension ``k*d``); expectation is the normalized partial trace over
    the ``d`` factor, tensored back with the identity.
``full``
    the whole matrix algebra; the expectation is the identity map.

All operations are pure functions of immutable inputs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg as _sla

from .errors import (
    DimensionMismatchError,
    NotInSubalgebraError,
    NotInvertibleError,
    SingularMatrixError,
)

__all__ = [
    "Element",
    "SCALAR",
    "DIAGONAL",
    "BLOCK",
    "FULL",
    "KINDS",
    "AlgebraContext",
    "DomainCertificate",
    "as_element",
    "mat_mul",
    "mat_inv",
    "op_norm",
    "cond_expect",
    "resolvent",
    "is_invertible_in_B",
    "invert_in_B",
    "g_certificate",
    "psi_certificate",
]

#: alias for a square complex matrix
Element = np.ndarray

SCALAR = "scalar"
DIAGONAL = "diagonal"
BLOCK = "block"
FULL = "full"
KINDS = (SCALAR, DIAGONAL, BLOCK, FULL)

# Relative pivot threshold below which an LU factor counts as singular.
PIVOT_RTOL = 1e-12
# Relative tolerance for subalgebra membership checks.
MEMBERSHIP_RTOL = 1e-10

# Radius coefficients of the certified neighborhoods, in units of 1/norm
# (g transform) or the corresponding squared/weighted scales (psi transform):
# injectivity on the 1/4 ball, onto a ball of radius 1/11, preimages inside
# the 2/11 ball.
INJECT_COEFF = 0.25
ONTO_COEFF = 1.0 / 11.0
PREIMAGE_COEFF = 2.0 / 11.0

# Contraction constants of the fixed-point maps on the preimage balls.
G_CONTRACTION = 0.5
PSI_CONTRACTION = 40.0 / 81.0


def as_element(x, dim=None):
    """Coerce ``x`` to a finite square complex matrix.

    Raises :class:`DimensionMismatchError` if the shape is not square or
    does not match ``dim``; raises ``ValueError`` on NaN/Inf entries.
    """
    a = np.asarray(x, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {a.shape}")
    if dim is not None and a.shape[0] != dim:
        raise DimensionMismatchError(
            f"expected dimension {dim}, got {a.shape[0]}"
        )
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    return a


def mat_mul(x, y):
    """Matrix product of two elements of matching dimension."""
    x = as_element(x)
    y = as_element(y, dim=x.shape[0])
    return x @ y


def mat_inv(x):
    """Matrix inverse via partial-pivot LU.

    Raises :class:`SingularMatrixError` when any pivot magnitude falls
    below ``PIVOT_RTOL`` times the matrix scale.
    """
    x = as_element(x)
    scale = float(np.linalg.norm(x))
    if scale == 0.0:
        raise SingularMatrixError("cannot invert the zero matrix")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", _sla.LinAlgWarning)
        lu, piv = _sla.lu_factor(x, check_finite=False)
    if float(np.min(np.abs(np.diag(lu)))) < PIVOT_RTOL * scale:
        raise SingularMatrixError("pivot below singularity threshold")
    eye = np.eye(x.shape[0], dtype=np.complex128)
    return _sla.lu_solve((lu, piv), eye, check_finite=False)


def op_norm(x):
    """Operator (spectral) norm, by power iteration on ``x* x``.

    Deterministic all-ones start vector; the iteration stops once the
    eigenvalue estimate is stable to a relative 1e-12 on two consecutive
    steps, capped at 10_000 iterations.
    """
    x = as_element(x)
    m = x.shape[0]
    if m == 1:
        return float(abs(x[0, 0]))
    h = x.conj().T @ x
    v = np.full(m, 1.0 / np.sqrt(m), dtype=np.complex128)
    lam = 0.0
    stable = 0
    for _ in range(10_000):
        hv = h @ v
        new = float(np.linalg.norm(hv))
        if new == 0.0:
            return 0.0
        v = hv / new
        if abs(new - lam) <= 1e-12 * new:
            stable += 1
            if stable >= 2:
                lam = new
                break
        else:
            stable = 0
        lam = new
    return float(np.sqrt(lam))


@dataclass(frozen=True)
class AlgebraContext:
    """The ambient matrix algebra, a unital subalgebra, and its expectation.

    ``block`` holds the ``(k, d)`` factorization and is required exactly for
    the ``block`` kind, where ``dim == k * d``.
    """

    dim: int
    kind: str
    block: tuple | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("ambient dimension must be positive")
        if self.kind not in KINDS:
            raise ValueError(f"unknown subalgebra kind {self.kind!r}")
        if self.kind == BLOCK:
            if self.block is None:
                raise ValueError("block kind requires a (k, d) factorization")
            k, d = self.block
            if k < 1 or d < 1 or k * d != self.dim:
                raise ValueError(
                    f"block factorization {self.block} incompatible with dim {self.dim}"
                )
            object.__setattr__(self, "block", (int(k), int(d)))
        elif self.block is not None:
            raise ValueError(f"kind {self.kind!r} takes no block factorization")

    # -- convenience constructors ------------------------------------

    @classmethod
    def scalar(cls, dim):
        return cls(dim, SCALAR)

    @classmethod
    def diagonal(cls, dim):
        return cls(dim, DIAGONAL)

    @classmethod
    def block_tensor(cls, k, d):
        return cls(k * d, BLOCK, (k, d))

    @classmethod
    def full(cls, dim):
        return cls(dim, FULL)

    @property
    def commutative(self):
        """True when the subalgebra is commutative."""
        return self.kind in (SCALAR, DIAGONAL)

    def identity(self):
        return np.eye(self.dim, dtype=np.complex128)

    def expect(self, x):
        return cond_expect(self, x)

    def contains(self, b, rtol=MEMBERSHIP_RTOL):
        """True when ``b`` lies in the subalgebra up to ``rtol``."""
        b = as_element(b, dim=self.dim)
        gap = float(np.linalg.norm(cond_expect(self, b) - b))
        return gap <= rtol * max(1.0, float(np.linalg.norm(b)))

    def require_member(self, b, name="element"):
        b = as_element(b, dim=self.dim)
        if not self.contains(b):
            raise NotInSubalgebraError(
                f"{name} is not in the {self.kind} subalgebra"
            )
        return b


def cond_expect(ctx, x):
    """Conditional expectation of ``x`` onto the subalgebra of ``ctx``."""
    x = as_element(x, dim=ctx.dim)
    if ctx.kind == FULL:
        return x.copy()
    if ctx.kind == SCALAR:
        t = np.trace(x) / ctx.dim
        return t * np.eye(ctx.dim, dtype=np.complex128)
    if ctx.kind == DIAGONAL:
        return np.diag(np.diag(x))
    k, d = ctx.block
    # normalized partial trace over the d factor, tensored back with 1_d
    y = x.reshape(k, d, k, d)
    core = np.einsum("isjs->ij", y) / d
    return np.kron(core, np.eye(d, dtype=np.complex128))


def resolvent(a, b, side="left"):
    """Resolvent ``(1 - ba)^{-1}`` (side ``"left"``) or ``(1 - ab)^{-1}``
    (side ``"right"``), by LU solve.

    Raises :class:`SingularMatrixError` when ``1 - ba`` (resp. ``1 - ab``)
    is singular.
    """
    a = as_element(a)
    b = as_element(b, dim=a.shape[0])
    eye = np.eye(a.shape[0], dtype=np.complex128)
    if side == "left":
        return mat_inv(eye - b @ a)
    if side == "right":
        return mat_inv(eye - a @ b)
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")


def _block_core(ctx, b):
    """Extract the k x k factor of a block-subalgebra element."""
    k, d = ctx.block
    return b.reshape(k, d, k, d)[:, 0, :, 0].copy()


def invert_in_B(ctx, b, name="element"):
    """Inverse of ``b`` within the subalgebra of ``ctx``.

    Raises :class:`NotInSubalgebraError` when ``b`` is not a member and
    :class:`NotInvertibleError` when it has no inverse there.
    """
    b = ctx.require_member(b, name=name)
    if ctx.kind == SCALAR:
        c = complex(b[0, 0])
        if c == 0:
            raise NotInvertibleError(f"{name} is zero in the scalar subalgebra")
        return (1.0 / c) * np.eye(ctx.dim, dtype=np.complex128)
    if ctx.kind == DIAGONAL:
        diag = np.diag(b)
        top = float(np.max(np.abs(diag)))
        if top == 0.0 or float(np.min(np.abs(diag))) < PIVOT_RTOL * top:
            raise NotInvertibleError(f"{name} has a vanishing diagonal entry")
        return np.diag(1.0 / diag)
    if ctx.kind == BLOCK:
        try:
            core_inv = mat_inv(_block_core(ctx, b))
        except SingularMatrixError as exc:
            raise NotInvertibleError(f"{name}: block factor is singular") from exc
        return np.kron(core_inv, np.eye(ctx.block[1], dtype=np.complex128))
    try:
        return mat_inv(b)
    except SingularMatrixError as exc:
        raise NotInvertibleError(f"{name} is singular") from exc


def is_invertible_in_B(ctx, b):
    """True iff ``b`` is a member of the subalgebra and invertible in it."""
    try:
        invert_in_B(ctx, b)
    except NotInvertibleError:
        return False
    return True


@dataclass(frozen=True)
class DomainCertificate:
    """Certified radii for one of the two invertible transforms.

    ``radius_inject`` bounds the ball on which the transform is one-to-one,
    ``radius_onto`` the ball of values that are guaranteed to be attained,
    and ``radius_preimage`` the ball containing all their preimages.
    ``contraction_bound`` is the guaranteed per-step contraction factor of
    the associated fixed-point map on the preimage ball.
    """

    transform: str  # "g" or "psi"
    norm_a: float
    inv_expectation_norm: float | None
    radius_inject: float
    radius_onto: float
    radius_preimage: float
    contraction_bound: float


def _safe_div(num, den):
    return float(num / den) if den > 0.0 else float("inf")


def g_certificate(norm_a):
    """Certificate for the moment transform ``b -> b E((1-ab)^{-1})``."""
    norm_a = float(norm_a)
    if norm_a < 0:
        raise ValueError("norm must be nonnegative")
    return DomainCertificate(
        transform="g",
        norm_a=norm_a,
        inv_expectation_norm=None,
        radius_inject=_safe_div(INJECT_COEFF, norm_a),
        radius_onto=_safe_div(ONTO_COEFF, norm_a),
        radius_preimage=_safe_div(PREIMAGE_COEFF, norm_a),
        contraction_bound=G_CONTRACTION,
    )


def psi_certificate(norm_a, inv_expectation_norm):
    """Certificate for the series ``b -> E((1-ba)^{-1}) - 1``.

    ``inv_expectation_norm`` is the norm of the inverse of the expectation
    of the fixed element.
    """
    norm_a = float(norm_a)
    e = float(inv_expectation_norm)
    if norm_a < 0 or e < 0:
        raise ValueError("norms must be nonnegative")
    c2e = norm_a * norm_a * e
    return DomainCertificate(
        transform="psi",
        norm_a=norm_a,
        inv_expectation_norm=e,
        radius_inject=_safe_div(INJECT_COEFF, c2e),
        radius_onto=_safe_div(ONTO_COEFF, c2e * e),
        radius_preimage=_safe_div(PREIMAGE_COEFF, c2e),
        contraction_bound=PSI_CONTRACTION,
    )
