"""Tests for truncated joint distributions, freeness, and scaling checks."""

import numpy as np
import pytest

from amalgam.algebra import AlgebraContext, op_norm
from amalgam.distributions import (
    BDist,
    bdist_dumps,
    bdist_from_concrete,
    bdist_from_json,
    bdist_loads,
    bdist_to_json,
    correlated_join,
    cumulants_to_moments,
    default_norm_bound,
    dist_from_cumulants,
    free_join,
    freeness_oracle,
    joint_dumps,
    joint_from_json,
    joint_loads,
    joint_to_json,
    moments_to_cumulants,
    additivity_scaling_test,
    multiplicativity_scaling_test,
    prod_dist,
    sum_dist,
)
from amalgam.errors import OrderExceededError, ShapeMismatchError
from amalgam.noncrossing import CumulantFamily, r_series
from amalgam.transforms import ConcreteModel, TruncatedModel, r_transform
from amalgam.cli import random_cumulant_family, sample_b_vector


def scalar_dist(values, norm_bound=None):
    moments = tuple(
        np.array(v, dtype=complex).reshape((1,) * (n + 1))
        for n, v in enumerate(values)
    )
    nb = default_norm_bound(moments) if norm_bound is None else norm_bound
    return BDist(1, len(values), moments, nb)


def delta_dist(c, n_ord=6):
    return scalar_dist([c**n for n in range(1, n_ord + 1)], norm_bound=2 * abs(c))


def zero_dist(d, n_ord):
    moments = tuple(np.zeros((d,) * n, dtype=complex) for n in range(1, n_ord + 1))
    return BDist(d, n_ord, moments, 0.0)


def identity_dist(d, n_ord):
    """Distribution of the unit element: moments are insertion products."""
    moments = []
    for n in range(1, n_ord + 1):
        t = np.zeros((d,) * n, dtype=complex)
        for i in range(d):
            t[(i,) * n] = 1.0
        moments.append(t)
    return BDist(d, n_ord, tuple(moments), 2.0)


def random_dist(seed, d=2, n_ord=6, **kw):
    fam = random_cumulant_family(np.random.default_rng(seed), d, n_ord, **kw)
    return dist_from_cumulants(fam)


# -- constructors --------------------------------------------------------

def test_dist_from_cumulants_zero():
    fam = CumulantFamily(
        2, 4, tuple(np.zeros((2,) * n, dtype=complex) for n in range(1, 5))
    )
    dist = dist_from_cumulants(fam)
    assert all(np.all(m == 0) for m in dist.moments)
    assert dist.norm_bound == 0.0


def test_dist_from_cumulants_semicircle():
    kappas = [np.zeros((1,) * n, dtype=complex) for n in range(1, 7)]
    kappas[1] = np.ones((1, 1), dtype=complex)
    fam = CumulantFamily(1, 6, tuple(kappas))
    dist = dist_from_cumulants(fam)
    got = [complex(m.ravel()[0]) for m in dist.moments]
    assert np.allclose(got, [0, 1, 0, 2, 0, 5], atol=1e-12)


def test_cumulant_round_trip_through_dist():
    fam = random_cumulant_family(np.random.default_rng(0), 2, 6)
    dist = dist_from_cumulants(fam)
    back = moments_to_cumulants(dist)
    for a, b in zip(back.kappas, fam.kappas):
        assert np.max(np.abs(a - b)) <= 1e-12


def test_bdist_validation():
    with pytest.raises(ShapeMismatchError):
        BDist(2, 2, (np.zeros(2), np.zeros((2, 3))), 1.0)
    with pytest.raises(OrderExceededError):
        BDist(1, 9, tuple(np.zeros((1,) * n) for n in range(1, 10)), 1.0)


def test_norm_consistency_of_default_bound():
    dist = random_dist(5)
    rng = np.random.default_rng(9)
    assert dist.norm_consistency(rng, samples=10) <= 1.0 + 1e-9


def test_bdist_from_concrete_matches_transform():
    rng = np.random.default_rng(33)
    ctx = AlgebraContext.diagonal(2)
    a = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    a /= op_norm(a)
    dist = bdist_from_concrete(ctx, a, 6)
    model_c = ConcreteModel(ctx, a)
    model_t = TruncatedModel(dist)
    b = np.array([0.05, 0.03 - 0.02j])
    exact = np.diag(model_c.eval_psi(np.diag(b)))
    approx = model_t.eval_psi(b)
    assert np.max(np.abs(exact - approx)) <= model_t.truncation_tail(0.05) + 1e-12


# -- free joins ----------------------------------------------------------

def test_free_join_marginals_exact():
    x, y = random_dist(1), random_dist(2)
    j = free_join(x, y)
    for n in range(1, 7):
        assert np.array_equal(j.word_moment((1,) * n), x.moment(n))
        assert np.array_equal(j.word_moment((2,) * n), y.moment(n))


def test_free_join_with_zero_dist():
    x = random_dist(3)
    j = free_join(x, zero_dist(2, 6))
    for n in range(2, 7):
        for word in [(1,) * (n - 1) + (2,), (2,) + (1,) * (n - 1)]:
            # any appearance of the zero variable kills the word
            assert np.max(np.abs(j.word_moment(word))) <= 1e-14


def test_free_join_scalar_two_letter_factorization():
    x, y = random_dist(4, d=1), random_dist(5, d=1)
    j = free_join(x, y)
    lhs = j.word_moment((1, 2)).ravel()[0]
    rhs = x.moment(1).ravel()[0] * y.moment(1).ravel()[0]
    assert abs(lhs - rhs) <= 1e-14


def test_free_join_alternating_centered_words_vanish():
    # centered inputs: first cumulants zero
    def centered(seed):
        fam = random_cumulant_family(np.random.default_rng(seed), 2, 6)
        kappas = list(fam.kappas)
        kappas[0] = np.zeros(2, dtype=complex)
        return dist_from_cumulants(CumulantFamily(2, 6, tuple(kappas)))

    x, y = centered(6), centered(7)
    j = free_join(x, y)
    for n in range(1, 7):
        assert freeness_oracle(j, n) <= 1e-12


def test_free_join_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        free_join(random_dist(1, d=1), random_dist(2, d=2))


# -- freeness oracle -------------------------------------------------------

def test_freeness_oracle_on_free_join():
    x, y = random_dist(8), random_dist(9)
    j = free_join(x, y)
    rng = np.random.default_rng(10)
    for n in range(1, 7):
        ins = [sample_b_vector(rng, 2, 1.0) for _ in range(n - 1)]
        assert freeness_oracle(j, n, insertions=ins) <= 1e-10


def test_freeness_oracle_flags_correlated_pair():
    x = random_dist(11)
    j = correlated_join(x)
    kappa2 = moments_to_cumulants(x).kappa(2)
    scale = float(np.max(np.abs(kappa2)))
    assert freeness_oracle(j, 2) >= 0.1 * scale


def test_freeness_oracle_order_one_is_zero():
    j = free_join(random_dist(12), random_dist(13))
    assert freeness_oracle(j, 1) == 0.0


# -- sum and product --------------------------------------------------------

def test_sum_with_zero_is_unchanged():
    x = random_dist(14)
    j = free_join(x, zero_dist(2, 6))
    s = sum_dist(j)
    for n in range(1, 7):
        assert np.max(np.abs(s.moment(n) - x.moment(n))) <= 1e-13
    assert s.norm_bound == x.norm_bound


def test_sum_of_free_semicircles_doubles_variance():
    kappas = [np.zeros((1,) * n, dtype=complex) for n in range(1, 7)]
    kappas[1] = np.ones((1, 1), dtype=complex)
    x = dist_from_cumulants(CumulantFamily(1, 6, tuple(kappas)))
    s = sum_dist(free_join(x, x))
    fam = moments_to_cumulants(s)
    assert fam.kappa(2).ravel()[0] == pytest.approx(2.0, abs=1e-11)
    for n in (1, 3, 4, 5, 6):
        assert np.max(np.abs(fam.kappa(n))) <= 1e-11


def test_sum_first_moments_add():
    x, y = random_dist(15, d=1), random_dist(16, d=1)
    s = sum_dist(free_join(x, y))
    assert s.moment(1).ravel()[0] == pytest.approx(
        x.moment(1).ravel()[0] + y.moment(1).ravel()[0], abs=1e-14
    )


def test_cumulant_additivity_of_free_sum():
    x, y = random_dist(17), random_dist(18)
    s = sum_dist(free_join(x, y))
    ks = moments_to_cumulants(s)
    kx, ky = moments_to_cumulants(x), moments_to_cumulants(y)
    for n in range(1, 7):
        assert np.max(np.abs(ks.kappa(n) - kx.kappa(n) - ky.kappa(n))) <= 1e-11


def test_prod_with_identity_dist():
    x = random_dist(19)
    j = free_join(x, identity_dist(2, 6))
    p = prod_dist(j)
    for n in range(1, 4):
        assert np.max(np.abs(p.moment(n) - x.moment(n))) <= 1e-12


def test_prod_scalar_deltas():
    c, e = 0.9, 1.1
    j = free_join(delta_dist(c), delta_dist(e))
    p = prod_dist(j)
    for n in range(1, 4):
        assert p.moment(n).ravel()[0] == pytest.approx((c * e) ** n, abs=1e-12)


def test_prod_order_guard():
    j = free_join(random_dist(20), random_dist(21))
    p = prod_dist(j)
    assert p.N == 3
    with pytest.raises(OrderExceededError):
        p.moment(4)
    with pytest.raises(OrderExceededError):
        prod_dist(correlated_join(random_dist(22, n_ord=1)))


# -- scaling theorem tests ---------------------------------------------------

def _safe_additivity_probe(x, y, fraction=0.5, seed=0):
    s = sum_dist(free_join(x, y))
    radius = min(
        1 / (11 * nb) for nb in (x.norm_bound, y.norm_bound, s.norm_bound)
    )
    return sample_b_vector(np.random.default_rng(seed), x.d, fraction * radius)


def test_additivity_scaling_free_pair_passes():
    x, y = random_dist(23), random_dist(24)
    w = _safe_additivity_probe(x, y, seed=25)
    report = additivity_scaling_test(x, y, w)
    assert report.passed
    assert report.order_effective == 6


def test_additivity_scaling_zero_summand_below_floor():
    x = random_dist(26)
    y = zero_dist(2, 6)
    w = _safe_additivity_probe(x, y, seed=27)
    report = additivity_scaling_test(x, y, w)
    assert report.residual <= report.floor
    assert report.passed


def test_additivity_scaling_semicircles_below_floor():
    kappas = [np.zeros((1,) * n, dtype=complex) for n in range(1, 7)]
    kappas[1] = np.ones((1, 1), dtype=complex)
    x = dist_from_cumulants(CumulantFamily(1, 6, tuple(kappas)))
    w = np.array([0.02 / (11 * 2 * x.norm_bound) + 0j])
    report = additivity_scaling_test(x, x, w)
    assert report.residual <= report.floor
    assert report.passed


def test_additivity_negative_control_fails():
    x = random_dist(28)
    w = _safe_additivity_probe(x, x, seed=29)
    report = additivity_scaling_test(x, x, w, joint=correlated_join(x))
    assert not report.passed
    assert report.shrink < 4.0


def _psi_radius(dist):
    model = TruncatedModel(dist)
    ea = model.expectation_of_a()
    e = float(np.max(np.abs(1.0 / ea)))
    return 1.0 / (11 * model.norm_bound**2 * e**2)


def test_multiplicativity_scaling_free_pair():
    x = random_dist(30, kappa1_floor=0.6)
    y = random_dist(31, kappa1_floor=0.6)
    j = free_join(x, y)
    p = prod_dist(j)
    radius = min(_psi_radius(t) for t in (x, y, p))
    w = sample_b_vector(np.random.default_rng(32), 2, 0.5 * radius)
    report = multiplicativity_scaling_test(x, y, w, joint=j)
    assert report.passed
    assert report.order_effective == 3


def test_multiplicativity_identity_factor_below_floor():
    x = random_dist(33, kappa1_floor=0.6)
    y = identity_dist(2, 6)
    j = free_join(x, y)
    p = prod_dist(j)
    radius = min(_psi_radius(t) for t in (x, y, p))
    w = sample_b_vector(np.random.default_rng(34), 2, 0.4 * radius)
    report = multiplicativity_scaling_test(x, y, w, joint=j)
    assert report.residual <= 1e-11


def test_multiplicativity_scalar_deltas_exact():
    c, e = 0.9, 1.3
    x, y = delta_dist(c), delta_dist(e)
    j = free_join(x, y)
    p = prod_dist(j)
    model = TruncatedModel(p)
    from amalgam.transforms import s_transform

    w = np.array([1e-5 + 0j])
    val = s_transform(model, w, tol=1e-13)
    assert abs(val[0] - 1 / (c * e)) <= 1e-12


def test_multiplicativity_negative_control_fails():
    x = random_dist(35, kappa1_floor=0.6)
    j = correlated_join(x)
    p = prod_dist(j)
    radius = min(_psi_radius(t) for t in (x, p))
    w = sample_b_vector(np.random.default_rng(36), 2, 0.5 * radius)
    report = multiplicativity_scaling_test(x, x, w, joint=j)
    assert not report.passed


# -- consistency between concrete and truncated R ------------------------------

def test_r_transform_consistent_with_cumulant_series():
    rng = np.random.default_rng(37)
    ctx = AlgebraContext.diagonal(2)
    a = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    a /= op_norm(a)
    model = ConcreteModel(ctx, a)
    dist = bdist_from_concrete(ctx, a, 6)
    fam = moments_to_cumulants(dist)
    b = np.diag([0.02, 0.015 + 0.005j])
    w = model.eval_g(b)
    concrete = np.diag(r_transform(model, w, tol=1e-12))
    series = r_series(fam, np.diag(w), 6)
    # tail scale (|a||b|)^N with a modest constant
    assert np.max(np.abs(concrete - series)) <= 100 * (0.02**6)


# -- JSON round trips ----------------------------------------------------------

def test_bdist_json_bit_exact():
    dist = random_dist(38)
    doc = bdist_to_json(dist)
    back = bdist_from_json(doc)
    assert back.d == dist.d and back.N == dist.N
    assert back.norm_bound == dist.norm_bound
    for n in range(1, 7):
        assert np.array_equal(back.moment(n), dist.moment(n))
    # and through an actual string
    again = bdist_loads(bdist_dumps(dist))
    for n in range(1, 7):
        assert np.array_equal(again.moment(n), dist.moment(n))


def test_joint_json_bit_exact():
    j = free_join(random_dist(39), random_dist(40))
    back = joint_from_json(joint_to_json(j))
    assert back.norm_bounds == j.norm_bounds
    for word, tensor in j.words.items():
        assert np.array_equal(back.word_moment(word), tensor)
    again = joint_loads(joint_dumps(j))
    for word, tensor in j.words.items():
        assert np.array_equal(again.word_moment(word), tensor)


def test_joint_marginal_helper():
    x, y = random_dist(41), random_dist(42)
    j = free_join(x, y)
    mx = j.marginal(1)
    assert np.array_equal(mx.moment(3), x.moment(3))
    assert mx.norm_bound == x.norm_bound
