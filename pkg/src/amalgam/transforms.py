"""Moment transforms, their derivatives, certified inversion, and the
R- and S-transforms.

Two element models share one evaluation contract:

:class:`ConcreteModel`
    a fixed matrix ``a`` in an :class:`~amalgam.algebra.AlgebraContext`;
    transforms evaluate through exact resolvents.  Subalgebra elements are
    matrices.

:class:`TruncatedModel`
    a truncated distribution over a commutative diagonal subalgebra;
    transforms evaluate as moment series summed to the truncation order.
    Subalgebra elements are coordinate vectors (diagonal matrices are
    accepted and flattened).

The inverse transforms run the fixed-point iteration
``b <- w + b - g(b)`` (and its expectation-weighted analogue for the
moment series), which contracts inside the certified balls recorded in a
:class:`~amalgam.algebra.DomainCertificate`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .algebra import (
    AlgebraContext,
    DomainCertificate,
    as_element,
    cond_expect,
    g_certificate,
    invert_in_B,
    is_invertible_in_B,
    op_norm,
    psi_certificate,
    resolvent,
)
from .errors import (
    ExpectationNotInvertibleError,
    ConsistencyError,
    NoConvergenceError,
    NoncommutativeSubalgebraWarning,
    NotInvertibleError,
    NotInSubalgebraError,
    OutOfCertifiedDomainError,
    OutOfCertifiedDomainWarning,
    OutOfDomainError,
    ShapeMismatchError,
)

__all__ = [
    "ConcreteModel",
    "TruncatedModel",
    "FixedPointReport",
    "IdentityReport",
    "g_transform",
    "psi_transform",
    "dg",
    "dpsi",
    "invert_g",
    "invert_psi",
    "r_transform",
    "s_transform",
    "check_rs_relation",
    "check_dilation",
    "additivity_check",
    "multiplicativity_check",
]

MAX_FIXED_POINT_ITER = 200
DEFAULT_TOL = 1e-10

# Floor for internally tightened fixed-point tolerances.
_TOL_FLOOR = 64.0 * np.finfo(float).eps


def _bnorm(x):
    """Norm of a subalgebra element in its native form: operator norm for
    matrices, sup norm for coordinate vectors (the same thing for the
    diagonal matrices they stand for)."""
    x = np.asarray(x)
    if x.ndim == 2:
        return op_norm(x)
    if x.size == 0:
        return 0.0
    return float(np.max(np.abs(x)))


def _bmul(x, y):
    if x.ndim == 2:
        return x @ y
    return x * y


def _bone(x):
    if x.ndim == 2:
        return np.eye(x.shape[0], dtype=np.complex128)
    return np.ones(x.shape, dtype=np.complex128)


class ConcreteModel:
    """Exact-resolvent model of a fixed matrix in an algebra context."""

    kind = "concrete"

    def __init__(self, ctx, a):
        self.ctx = ctx
        self.a = as_element(a, dim=ctx.dim)
        self.norm_bound = op_norm(self.a)
        self._ea = cond_expect(ctx, self.a)
        self._eye = np.eye(ctx.dim, dtype=np.complex128)

    def expectation_of_a(self):
        return self._ea

    def coerce(self, b, name="element"):
        """Validate a subalgebra element in native (matrix) form."""
        b = as_element(b, dim=self.ctx.dim)
        return self.ctx.require_member(b, name=name)

    def domain_guard(self, b_norm):
        if b_norm * self.norm_bound >= 1.0:
            raise OutOfDomainError(
                f"norm {b_norm:.3g} outside the radius 1/{self.norm_bound:.3g}"
            )

    def eval_g(self, b):
        """b E((1-ab)^{-1})."""
        return b @ cond_expect(self.ctx, resolvent(self.a, b, side="right"))

    def eval_g_left(self, b):
        """E((1-ba)^{-1}) b, the other face of the same function."""
        return cond_expect(self.ctx, resolvent(self.a, b, side="left")) @ b

    def eval_psi(self, b):
        """E((1-ba)^{-1}) - 1."""
        return cond_expect(self.ctx, resolvent(self.a, b, side="left")) - self._eye

    def eval_a_resolvent(self, b):
        """E(a (1-ba)^{-1}), the weighted moment series."""
        return cond_expect(self.ctx, self.a @ resolvent(self.a, b, side="left"))


class TruncatedModel:
    """Moment-series model of a truncated distribution over diagonal B.

    ``dist`` must expose ``d``, ``N``, ``norm_bound`` and
    ``apply_moment(n, inserts)``; evaluation refuses arguments with
    ``norm_bound * |b| > 0.5`` so the geometric truncation-error bound
    stays quantifiable.
    """

    kind = "truncated"

    def __init__(self, dist, norm_bound=None):
        self.dist = dist
        self.ctx = AlgebraContext.diagonal(dist.d)
        self.norm_bound = float(dist.norm_bound if norm_bound is None else norm_bound)

    @property
    def d(self):
        return self.dist.d

    @property
    def N(self):
        return self.dist.N

    def expectation_of_a(self):
        return self.dist.apply_moment(1, [])

    def coerce(self, b, name="element"):
        b = np.asarray(b, dtype=np.complex128)
        if b.ndim == 2:
            b = as_element(b, dim=self.d)
            off = b - np.diag(np.diag(b))
            if float(np.max(np.abs(off))) > 1e-10 * max(1.0, _bnorm(b)):
                raise NotInSubalgebraError(f"{name} is not diagonal")
            b = np.diag(b).copy()
        if b.shape != (self.d,):
            raise ShapeMismatchError(
                f"{name} has shape {b.shape}, expected ({self.d},) or ({self.d},{self.d})"
            )
        if not np.all(np.isfinite(b)):
            raise ValueError(f"{name} must be finite")
        return b

    def domain_guard(self, b_norm):
        if b_norm * self.norm_bound > 0.5:
            raise OutOfDomainError(
                "truncated model refuses norm_bound * |b| > 0.5"
            )

    def eval_moment(self, n, inserts):
        """Moment word E(a c_1 a ... c_{n-1} a) in diagonal coordinates."""
        return self.dist.apply_moment(n, inserts)

    def eval_psi(self, b):
        acc = np.zeros(self.d, dtype=np.complex128)
        for n in range(1, self.N + 1):
            acc += b * self.dist.apply_moment(n, [b] * (n - 1))
        return acc

    def eval_g(self, b):
        return b * (1.0 + self.eval_psi(b))

    def eval_a_resolvent(self, b):
        acc = np.zeros(self.d, dtype=np.complex128)
        for n in range(self.N):
            acc += self.dist.apply_moment(n + 1, [b] * n)
        return acc

    def truncation_tail(self, b_norm):
        """Geometric bound on the discarded tail of the moment series."""
        q = self.norm_bound * b_norm
        if q >= 1.0:
            return float("inf")
        return q ** (self.N + 1) / (1.0 - q)


def _g_cert(model):
    return g_certificate(model.norm_bound)


def _psi_cert(model):
    ea = model.expectation_of_a()
    try:
        if isinstance(model, TruncatedModel):
            top = float(np.max(np.abs(ea))) if ea.size else 0.0
            if top == 0.0 or float(np.min(np.abs(ea))) < 1e-12 * top:
                raise NotInvertibleError("first moment has a vanishing coordinate")
            ea_inv = 1.0 / ea
        else:
            ea_inv = invert_in_B(model.ctx, ea, name="E(a)")
    except NotInvertibleError as exc:
        raise ExpectationNotInvertibleError(str(exc)) from exc
    return psi_certificate(model.norm_bound, _bnorm(ea_inv)), ea_inv


def g_transform(model, b):
    """Evaluate b E((1-ab)^{-1}) for a subalgebra element b.

    Raises :class:`OutOfDomainError` when b leaves the evaluation domain.
    """
    b = model.coerce(b, name="b")
    model.domain_guard(_bnorm(b))
    return model.eval_g(b)


def psi_transform(model, b):
    """Evaluate the moment series E((1-ba)^{-1}) - 1."""
    b = model.coerce(b, name="b")
    model.domain_guard(_bnorm(b))
    return model.eval_psi(b)


def _require_concrete(model, what):
    if not isinstance(model, ConcreteModel):
        raise TypeError(f"{what} requires a ConcreteModel")


def dg(model, b, h):
    """Frechet derivative of the moment transform:
    h -> E((1-ba)^{-1} h (1-ab)^{-1})."""
    _require_concrete(model, "dg")
    b = model.coerce(b, name="b")
    h = model.coerce(h, name="h")
    model.domain_guard(_bnorm(b))
    left = resolvent(model.a, b, side="left")
    right = resolvent(model.a, b, side="right")
    return cond_expect(model.ctx, left @ h @ right)


def dpsi(model, b, h):
    """Frechet derivative of the moment series:
    h -> E((1-ba)^{-1} h a (1-ba)^{-1})."""
    _require_concrete(model, "dpsi")
    b = model.coerce(b, name="b")
    h = model.coerce(h, name="h")
    model.domain_guard(_bnorm(b))
    left = resolvent(model.a, b, side="left")
    return cond_expect(model.ctx, left @ h @ model.a @ left)


@dataclass
class FixedPointReport:
    """Trace of one fixed-point inversion."""

    converged: bool
    iterations: int
    final_residual: float
    contraction_estimates: list
    certificate: DomainCertificate
    within_certified_ball: bool
    preimage_norm: float

    @property
    def max_contraction(self):
        return max(self.contraction_estimates, default=0.0)


def _fixed_point(eval_map, w_tilde, model, tol, cert, within, residual_of):
    """Iterate b <- w_tilde + b - eval_map(b) from 0 with step-norm stop."""
    wn = _bnorm(w_tilde)
    stop = tol * max(1.0, wn)
    b = np.zeros_like(w_tilde)
    ratios = []
    prev_step = None
    converged = False
    iterations = 0
    for iterations in range(1, MAX_FIXED_POINT_ITER + 1):
        try:
            image = eval_map(b)
        except OutOfDomainError as exc:
            raise NoConvergenceError(
                f"iterate left the evaluation domain: {exc}", report=None
            ) from exc
        b_next = w_tilde + b - image
        step = _bnorm(b_next - b)
        if prev_step is not None and prev_step > 0.0:
            ratios.append(step / prev_step)
        prev_step = step
        b = b_next
        if step <= stop:
            converged = True
            break
    residual = residual_of(b)
    report = FixedPointReport(
        converged=converged,
        iterations=iterations,
        final_residual=residual,
        contraction_estimates=ratios,
        certificate=cert,
        within_certified_ball=within,
        preimage_norm=_bnorm(b),
    )
    if not converged:
        raise NoConvergenceError(
            f"no convergence after {MAX_FIXED_POINT_ITER} iterations "
            f"(only possible outside the certified ball)",
            report=report,
        )
    return b, report


def invert_g(model, w, tol=DEFAULT_TOL):
    """Preimage of w under the moment transform, with iteration report.

    Inside the certified ball (|w| below the onto radius) convergence is
    guaranteed with contraction factor at most 1/2 and the preimage stays
    inside the preimage ball.  Outside, the iteration is still attempted
    and the report is stamped accordingly.
    """
    w = model.coerce(w, name="w")
    wn = _bnorm(w)
    cert = _g_cert(model)
    within = wn < cert.radius_onto
    if not within:
        warnings.warn(
            f"|w|={wn:.3g} is outside the certified onto radius "
            f"{cert.radius_onto:.3g}",
            OutOfCertifiedDomainWarning,
            stacklevel=2,
        )
    return _fixed_point(
        model.eval_g,
        w,
        model,
        tol,
        cert,
        within,
        residual_of=lambda b: _bnorm(model.eval_g(b) - w),
    )


def invert_psi(model, w, tol=DEFAULT_TOL):
    """Preimage of w under the moment series, with iteration report.

    Requires the expectation of the fixed element to be invertible in the
    subalgebra; iterates on the expectation-weighted map, whose certified
    contraction factor is 40/81.
    """
    w = model.coerce(w, name="w")
    wn = _bnorm(w)
    cert, ea_inv = _psi_cert(model)
    within = wn < cert.radius_onto
    if not within:
        warnings.warn(
            f"|w|={wn:.3g} is outside the certified onto radius "
            f"{cert.radius_onto:.3g}",
            OutOfCertifiedDomainWarning,
            stacklevel=2,
        )
    w_tilde = _bmul(w, ea_inv)
    return _fixed_point(
        lambda b: _bmul(model.eval_psi(b), ea_inv),
        w_tilde,
        model,
        tol,
        cert,
        within,
        residual_of=lambda b: _bnorm(model.eval_psi(b) - w),
    )


def _binv(model, x, name="element"):
    if isinstance(model, TruncatedModel):
        top = float(np.max(np.abs(x))) if x.size else 0.0
        if top == 0.0 or float(np.min(np.abs(x))) < 1e-12 * top:
            raise NotInvertibleError(f"{name} has a vanishing coordinate")
        return 1.0 / x
    return invert_in_B(model.ctx, x, name=name)


def _require_in_onto_ball(wn, cert):
    if not wn < cert.radius_onto:
        raise OutOfCertifiedDomainError(
            f"|w|={wn:.3g} is not inside the certified radius {cert.radius_onto:.3g}"
        )


def r_transform(model, w, tol=DEFAULT_TOL, method="resolvent"):
    """R-transform of the model at w inside the certified ball.

    ``method="resolvent"`` (default) uses the division-free form
    ``E(a(1-ba)^{-1}) (E((1-ba)^{-1}))^{-1}`` at the preimage b of w, which
    is defined for arbitrary w in the ball.  ``method="inverse"`` uses
    ``b^{-1} - w^{-1}`` and needs w invertible in the subalgebra.
    ``method="both"`` cross-checks the two paths to 10*tol.
    """
    if method not in ("resolvent", "inverse", "both"):
        raise ValueError(f"unknown method {method!r}")
    w = model.coerce(w, name="w")
    wn = _bnorm(w)
    cert = _g_cert(model)
    _require_in_onto_ball(wn, cert)

    inner_tol = tol * min(1.0, wn * wn) / 8.0
    w_inv = None
    if method in ("inverse", "both"):
        w_inv = _binv(model, w, name="w")
        inner_tol = tol / (8.0 * max(1.0, _bnorm(w_inv)) ** 2)
    inner_tol = max(inner_tol, _TOL_FLOOR)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OutOfCertifiedDomainWarning)
        b, _ = invert_g(model, w, tol=inner_tol)

    def by_resolvent():
        num = model.eval_a_resolvent(b)
        den = _bone(w) + model.eval_psi(b)
        return _bmul(num, _binv(model, den, name="1 + psi(b)"))

    def by_inverse():
        return _binv(model, b, name="preimage") - w_inv

    if method == "resolvent":
        return by_resolvent()
    if method == "inverse":
        return by_inverse()
    res = by_resolvent()
    alt = by_inverse()
    gap = _bnorm(res - alt)
    if gap > 10.0 * tol:
        raise ConsistencyError(
            f"R-transform paths disagree by {gap:.3g} (> 10*tol)"
        )
    return res


def s_transform(model, w, tol=DEFAULT_TOL, warn_on_noncommutative=True):
    """S-transform ``w^{-1}(1+w) psi^{<-1>}(w)`` at invertible w.

    Multiplicativity guarantees hold over commutative subalgebras; other
    kinds evaluate with a warning.
    """
    w = model.coerce(w, name="w")
    if not model.ctx.commutative and warn_on_noncommutative:
        warnings.warn(
            "S-transform over a noncommutative subalgebra: product "
            "guarantees do not apply",
            NoncommutativeSubalgebraWarning,
            stacklevel=2,
        )
    wn = _bnorm(w)
    cert, ea_inv = _psi_cert(model)
    _require_in_onto_ball(wn, cert)
    w_inv = _binv(model, w, name="w")

    scale = _bnorm(ea_inv) * max(1.0, _bnorm(w_inv)) * (1.0 + wn)
    inner_tol = max(tol / (8.0 * max(1.0, scale)), _TOL_FLOOR)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OutOfCertifiedDomainWarning)
        b, _ = invert_psi(model, w, tol=inner_tol)
    return _bmul(_bmul(w_inv, _bone(w) + w), b)


@dataclass
class IdentityReport:
    """Residuals of a checked identity, with the pass/fail verdict."""

    residuals: dict
    tol: float
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = all(v <= self.tol for v in self.residuals.values())


def check_rs_relation(model, b, tol=1e-9):
    """Residuals of the two compositions tying R and S together:
    ``g(b) R(g(b)) = psi(b)`` and ``psi(b) S(psi(b)) = g(b)``.

    Requires the expectation of the fixed element to be invertible and b
    invertible with both transform values inside their certified balls.
    """
    b = model.coerce(b, name="b")
    w_g = g_transform(model, b)
    w_psi = psi_transform(model, b)
    inner = min(tol / 10.0, DEFAULT_TOL)
    r_val = r_transform(model, w_g, tol=inner)
    s_val = s_transform(model, w_psi, tol=inner, warn_on_noncommutative=False)
    res_r = _bnorm(_bmul(w_g, r_val) - w_psi)
    res_s = _bnorm(_bmul(w_psi, s_val) - w_g)
    return IdentityReport(
        residuals={"r_composition": res_r, "s_composition": res_s}, tol=tol
    )


def check_dilation(model, z, b, tol=1e-9):
    """Residuals of the dilation identities for an invertible z in the
    subalgebra: the moment series of za at b equals that of a at bz, and
    ``S_{za} = S_a S_z`` at b."""
    _require_concrete(model, "check_dilation")
    ctx = model.ctx
    z = ctx.require_member(as_element(z, dim=ctx.dim), name="z")
    if not is_invertible_in_B(ctx, z):
        raise NotInvertibleError("z must be invertible in the subalgebra")
    b = model.coerce(b, name="b")

    model_za = ConcreteModel(ctx, z @ model.a)
    model_z = ConcreteModel(ctx, z)

    res_psi = _bnorm(
        psi_transform(model_za, b) - psi_transform(model, b @ z)
    )
    inner = min(tol / 10.0, DEFAULT_TOL)
    s_za = s_transform(model_za, b, tol=inner, warn_on_noncommutative=False)
    s_a = s_transform(model, b, tol=inner, warn_on_noncommutative=False)
    s_z = s_transform(model_z, b, tol=inner, warn_on_noncommutative=False)
    res_s = _bnorm(s_za - _bmul(s_a, s_z))
    return IdentityReport(
        residuals={"psi_dilation": res_psi, "s_dilation": res_s}, tol=tol
    )


def additivity_check(model1, model2, model_sum, w, tol=DEFAULT_TOL):
    """Residual of R-additivity: |R_sum(w) - R_1(w) - R_2(w)|.

    A meaningful pass needs ``model_sum`` to represent the free sum of the
    two summands; on dependent inputs the residual is generically large.
    """
    r_sum = r_transform(model_sum, w, tol=tol)
    r_1 = r_transform(model1, w, tol=tol)
    r_2 = r_transform(model2, w, tol=tol)
    return _bnorm(r_sum - r_1 - r_2)


def multiplicativity_check(model1, model2, model_prod, w, tol=DEFAULT_TOL):
    """Residual of S-multiplicativity: |S_prod(w) - S_1(w) S_2(w)|."""
    for m in (model1, model2, model_prod):
        if not m.ctx.commutative:
            raise OutOfDomainError(
                "S multiplicativity requires a commutative subalgebra"
            )
    s_prod = s_transform(model_prod, w, tol=tol)
    s_1 = s_transform(model1, w, tol=tol)
    s_2 = s_transform(model2, w, tol=tol)
    return _bnorm(s_prod - _bmul(s_1, s_2))
