"""Tests for the matrix substrate: products, inverses, norms, expectations."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from amalgam import algebra
from amalgam.algebra import (
    AlgebraContext,
    as_element,
    cond_expect,
    g_certificate,
    invert_in_B,
    is_invertible_in_B,
    mat_inv,
    mat_mul,
    op_norm,
    psi_certificate,
    resolvent,
)
from amalgam.errors import (
    DimensionMismatchError,
    NotInSubalgebraError,
    NotInvertibleError,
    SingularMatrixError,
)


def _rand(rng, m):
    return rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))


def _all_contexts(m=4):
    return [
        AlgebraContext.scalar(m),
        AlgebraContext.diagonal(m),
        AlgebraContext.block_tensor(2, m // 2),
        AlgebraContext.full(m),
    ]


# -- mat_mul -----------------------------------------------------------

def schoolbook_mul(x, y):
    m = x.shape[0]
    out = np.zeros((m, m), dtype=complex)
    for i in range(m):
        for j in range(m):
            acc = 0j
            for k in range(m):
                acc += x[i, k] * y[k, j]
            out[i, j] = acc
    return out


def test_mat_mul_identity_and_zero():
    eye = np.eye(2)
    assert np.array_equal(mat_mul(eye, eye), np.eye(2, dtype=complex))
    x = np.array([[1, 2], [3, 4]], dtype=complex)
    assert np.array_equal(mat_mul(x, np.zeros((2, 2))), np.zeros((2, 2)))


def test_mat_mul_matches_schoolbook():
    rng = np.random.default_rng(11)
    x, y = _rand(rng, 3), _rand(rng, 3)
    assert np.max(np.abs(mat_mul(x, y) - schoolbook_mul(x, y))) <= 1e-14


def test_mat_mul_dim_mismatch():
    with pytest.raises(DimensionMismatchError):
        mat_mul(np.eye(2), np.eye(3))


def test_as_element_rejects_nonfinite():
    with pytest.raises(ValueError):
        as_element(np.array([[np.nan, 0], [0, 1]]))
    with pytest.raises(DimensionMismatchError):
        as_element(np.ones((2, 3)))


# -- mat_inv -----------------------------------------------------------

def test_mat_inv_identity_and_diagonal():
    assert np.allclose(mat_inv(np.eye(2)), np.eye(2), atol=1e-15)
    assert np.allclose(
        mat_inv(np.diag([2.0, 4.0])), np.diag([0.5, 0.25]), atol=1e-15
    )


def test_mat_inv_residual():
    rng = np.random.default_rng(5)
    x = _rand(rng, 4) + 4.0 * np.eye(4)
    res = op_norm(x @ mat_inv(x) - np.eye(4))
    assert res <= 1e-12


def test_mat_inv_singular():
    with pytest.raises(SingularMatrixError):
        mat_inv(np.zeros((3, 3)))
    with pytest.raises(SingularMatrixError):
        mat_inv(np.array([[1.0, 1.0], [1.0, 1.0]]))


# -- op_norm -----------------------------------------------------------

def charpoly_coeffs(h):
    """Monic characteristic polynomial of h by trace recursion."""
    m = h.shape[0]
    coeffs = [1.0]
    mk = np.zeros_like(h)
    for k in range(1, m + 1):
        mk = h @ mk + coeffs[-1] * h
        coeffs.append(float((-np.trace(mk) / k).real))
    return coeffs  # [1, c_{m-1}, ..., c_0]


def poly_derivatives_positive(coeffs, t):
    """True when p and all its derivatives are positive at t (no roots
    above t for a monic polynomial with all-real roots)."""
    cur = list(coeffs)
    while cur:
        val = 0.0
        for c in cur:
            val = val * t + c
        if val <= 0.0:
            return False
        deg = len(cur) - 1
        cur = [c * (deg - i) for i, c in enumerate(cur[:-1])]
    return True


def spectral_norm_oracle(x):
    """sqrt of the largest eigenvalue of x* x located by bisection on the
    characteristic polynomial."""
    h = x.conj().T @ x
    coeffs = charpoly_coeffs(h)
    lo, hi = 0.0, float(np.trace(h).real) + 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if poly_derivatives_positive(coeffs, mid):
            hi = mid
        else:
            lo = mid
    return float(np.sqrt(hi))


def test_op_norm_trivial_cases():
    assert op_norm(np.eye(5)) == pytest.approx(1.0, abs=1e-12)
    assert op_norm(np.diag([3.0, -1.0])) == pytest.approx(3.0, abs=1e-12)
    assert op_norm(np.zeros((3, 3))) == 0.0


def test_op_norm_matches_charpoly_bisection():
    rng = np.random.default_rng(17)
    for _ in range(5):
        x = _rand(rng, 5)
        expected = spectral_norm_oracle(x)
        assert op_norm(x) == pytest.approx(expected, rel=1e-8)


def test_op_norm_submultiplicative():
    rng = np.random.default_rng(23)
    for _ in range(20):
        x, y = _rand(rng, 4), _rand(rng, 4)
        assert op_norm(x @ y) <= op_norm(x) * op_norm(y) * (1 + 1e-10)


# -- cond_expect -------------------------------------------------------

def partial_trace_oracle(x, k, d):
    """Expectation for the block kind by explicit index sums."""
    out = np.zeros((k * d, k * d), dtype=complex)
    for i in range(k):
        for j in range(k):
            acc = 0j
            for s in range(d):
                acc += x[i * d + s, j * d + s]
            for s in range(d):
                out[i * d + s, j * d + s] = acc / d
    return out


def test_cond_expect_full_is_identity():
    rng = np.random.default_rng(3)
    x = _rand(rng, 3)
    assert np.array_equal(cond_expect(AlgebraContext.full(3), x), x)


def test_cond_expect_scalar_trace():
    ctx = AlgebraContext.scalar(2)
    assert np.allclose(
        cond_expect(ctx, np.diag([1.0, 3.0])), 2.0 * np.eye(2), atol=1e-15
    )


def test_cond_expect_block_matches_partial_trace():
    rng = np.random.default_rng(29)
    ctx = AlgebraContext.block_tensor(2, 2)
    x = _rand(rng, 4)
    assert np.max(np.abs(cond_expect(ctx, x) - partial_trace_oracle(x, 2, 2))) <= 1e-14


def test_expectation_axioms_bulk():
    # E(1) = 1, idempotency, norm decrease, bimodule property
    rng = np.random.default_rng(101)
    for ctx in _all_contexts(4):
        eye = ctx.identity()
        assert np.allclose(cond_expect(ctx, eye), eye, atol=1e-14)
        for _ in range(50):
            x = _rand(rng, 4)
            ex = cond_expect(ctx, x)
            assert np.max(np.abs(cond_expect(ctx, ex) - ex)) <= 1e-12
            assert op_norm(ex) <= op_norm(x) + 1e-12
            b1 = cond_expect(ctx, _rand(rng, 4))
            b2 = cond_expect(ctx, _rand(rng, 4))
            lhs = cond_expect(ctx, b1 @ x @ b2)
            rhs = b1 @ ex @ b2
            bound = 1e-11 * op_norm(b1) * op_norm(x) * op_norm(b2)
            assert op_norm(lhs - rhs) <= max(bound, 1e-13)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6))
def test_expectation_is_projection_property(seed):
    rng = np.random.default_rng(seed)
    ctx = _all_contexts(4)[rng.integers(0, 4)]
    x = _rand(rng, 4)
    ex = cond_expect(ctx, x)
    assert ctx.contains(ex)
    assert np.max(np.abs(cond_expect(ctx, ex) - ex)) <= 1e-12


# -- resolvent ---------------------------------------------------------

def test_resolvent_zero_argument():
    rng = np.random.default_rng(31)
    a = _rand(rng, 3)
    assert np.allclose(resolvent(a, np.zeros((3, 3)), "left"), np.eye(3), atol=1e-15)


def test_resolvent_scalar_geometric():
    a = np.array([[1.0]])
    b = np.array([[0.1]])
    # geometric series oracle: sum of 0.1^n
    expected = sum(0.1**n for n in range(200))
    assert resolvent(a, b, "left")[0, 0] == pytest.approx(expected, rel=1e-14)


def test_resolvent_neumann_tail_bound():
    rng = np.random.default_rng(37)
    a = _rand(rng, 3)
    a = a / op_norm(a)
    b = _rand(rng, 3)
    b = 0.5 * b / op_norm(b)  # norm product 0.5
    res = resolvent(a, b, "right")
    for n_terms in (5, 10, 20):
        partial = np.zeros((3, 3), dtype=complex)
        term = np.eye(3, dtype=complex)
        for _ in range(n_terms + 1):
            partial += term
            term = term @ (a @ b)
        tail = 0.5 ** (n_terms + 1) / (1 - 0.5)
        assert op_norm(res - partial) <= tail * (1 + 1e-9)


def test_resolvent_left_identity_invariant():
    rng = np.random.default_rng(41)
    for _ in range(10):
        a = _rand(rng, 4)
        a = a / op_norm(a)
        b = _rand(rng, 4)
        b = 0.6 * b / op_norm(b)
        left = resolvent(a, b, "left")
        eye = np.eye(4)
        cond = op_norm(left) * op_norm(eye - b @ a)
        assert op_norm(left @ (eye - b @ a) - eye) <= 1e-11 * max(cond, 1.0)


def test_resolvent_singular():
    a = np.array([[1.0]])
    b = np.array([[1.0]])
    with pytest.raises(SingularMatrixError):
        resolvent(a, b, "left")
    with pytest.raises(ValueError):
        resolvent(a, np.array([[0.5]]), side="middle")


# -- invertibility within the subalgebra -------------------------------

def test_is_invertible_identity_and_zero_entry():
    ctx = AlgebraContext.diagonal(2)
    assert is_invertible_in_B(ctx, np.eye(2))
    assert not is_invertible_in_B(ctx, np.diag([1.0, 0.0]))


def test_invert_in_B_diagonal_residual():
    rng = np.random.default_rng(43)
    ctx = AlgebraContext.diagonal(5)
    b = np.diag(rng.uniform(0.5, 1.0, size=5)).astype(complex)
    inv = invert_in_B(ctx, b)
    assert op_norm(b @ inv - np.eye(5)) <= 1e-12
    # entrywise reciprocal oracle
    assert np.allclose(np.diag(inv), 1.0 / np.diag(b), atol=1e-14)


def test_invert_in_B_block_and_membership():
    rng = np.random.default_rng(47)
    ctx = AlgebraContext.block_tensor(2, 2)
    core = _rand(rng, 2) + 3 * np.eye(2)
    b = np.kron(core, np.eye(2))
    inv = invert_in_B(ctx, b)
    assert ctx.contains(inv)
    assert op_norm(b @ inv - np.eye(4)) <= 1e-11
    with pytest.raises(NotInSubalgebraError):
        invert_in_B(ctx, _rand(rng, 4))


def test_invert_in_B_scalar_zero():
    ctx = AlgebraContext.scalar(2)
    with pytest.raises(NotInvertibleError):
        invert_in_B(ctx, np.zeros((2, 2)))


# -- domain certificates -----------------------------------------------

def test_certificate_radii_positive_and_ordered():
    cert = g_certificate(2.0)
    assert cert.radius_onto == pytest.approx(1 / 22)
    assert cert.radius_inject == pytest.approx(1 / 8)
    assert cert.radius_preimage == pytest.approx(1 / 11)
    assert 0 < cert.radius_onto < cert.radius_preimage <= cert.radius_inject
    assert cert.contraction_bound == 0.5


def test_psi_certificate_radii():
    cert = psi_certificate(2.0, 1.5)
    c2e = 4.0 * 1.5
    assert cert.radius_inject == pytest.approx(0.25 / c2e)
    assert cert.radius_onto == pytest.approx(1 / (11 * c2e * 1.5))
    assert cert.radius_preimage == pytest.approx(2 / (11 * c2e))
    assert cert.contraction_bound == pytest.approx(40.0 / 81.0)
    # ordering holds whenever the inverse-expectation norm is >= 1/2
    assert cert.radius_onto < cert.radius_preimage <= cert.radius_inject


def test_certificate_zero_element_is_unbounded():
    cert = g_certificate(0.0)
    assert np.isinf(cert.radius_onto)


def test_block_context_validation():
    with pytest.raises(ValueError):
        AlgebraContext(4, algebra.BLOCK, (3, 2))
    with pytest.raises(ValueError):
        AlgebraContext(4, "banana")
