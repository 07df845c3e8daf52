import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from mirroropt.exceptions import DomainError
from mirroropt.geometry import MirrorMap, NormTag, bregman, dual_norm_sq, grad_map, inverse_grad_map, norm

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


def all_maps(d, rng):
    B = rng.standard_normal((d, d))
    return [MirrorMap.euclidean(d), MirrorMap.pnorm(1.5, d), MirrorMap.neg_entropy(d),
            MirrorMap.mahalanobis(B @ B.T + np.eye(d))]


def interior(m, rng, size):
    if m.kind == "negentropy":
        return rng.dirichlet(np.ones(m.dim), size=size)
    return rng.standard_normal((size, m.dim))


# -- hand-derived values ----------------------------------------------------
def test_bregman_examples():
    assert bregman(MirrorMap.euclidean(2), [1, 2], [1, 2]) == 0
    assert bregman(MirrorMap.euclidean(2), [3, 0], [1, 0]) == pytest.approx(2.0)
    kl = bregman(MirrorMap.neg_entropy(4), [1, 0, 0, 0], np.full(4, 0.25))
    assert kl == pytest.approx(np.log(4))


def test_grad_map_examples():
    np.testing.assert_allclose(grad_map(MirrorMap.pnorm(1.5, 2), [4.0, 0.0]), [4.0, 0.0])
    x = np.array([0.3, -1.2, 2.0])
    np.testing.assert_allclose(grad_map(MirrorMap.pnorm(2.0, 3), x), x)
    np.testing.assert_allclose(grad_map(MirrorMap.euclidean(2), [0.5, -1]), [0.5, -1])


def test_inverse_grad_examples():
    m = MirrorMap.pnorm(1.5, 3)
    np.testing.assert_allclose(inverse_grad_map(m, grad_map(m, [1, 2, 3])), [1, 2, 3])
    np.testing.assert_allclose(inverse_grad_map(MirrorMap.mahalanobis(2 * np.eye(2)), [4, 4]), [2, 2])
    np.testing.assert_allclose(inverse_grad_map(MirrorMap.euclidean(1), [7.0]), [7.0])


def test_dual_norm_examples():
    assert dual_norm_sq(NormTag.l1(), [3, -5, 1]) == pytest.approx(25)
    assert dual_norm_sq(NormTag.lp(2), [3, 4]) == pytest.approx(25)
    assert dual_norm_sq(NormTag.mahalanobis(4 * np.eye(2)), [2, 0]) == pytest.approx(1)


def test_dual_pairing():
    assert NormTag.l2().dual() == NormTag.l2()
    assert NormTag.l1().dual() == NormTag.linf()
    assert NormTag.lp(1.5).dual() == NormTag.lp(3.0)
    M = np.diag([1.0, 2.0])
    assert NormTag.mahalanobis(M).dual().kind == "mahalanobis_inv"
    assert NormTag.mahalanobis(M).dual().dual() == NormTag.mahalanobis(M)


def test_mu_psi():
    assert MirrorMap.euclidean(3).mu_psi == 1
    assert MirrorMap.pnorm(1.25, 3).mu_psi == pytest.approx(0.25)
    assert MirrorMap.neg_entropy(3).mu_psi == 1


def test_phi_p_at_origin_is_zero():
    np.testing.assert_array_equal(grad_map(MirrorMap.pnorm(1.3, 3), np.zeros(3)), np.zeros(3))


# -- errors -----------------------------------------------------------------
def test_negentropy_domain_errors():
    m = MirrorMap.neg_entropy(2)
    with pytest.raises(DomainError):
        bregman(m, [0.5, 0.5], [1.0, 0.0])
    with pytest.raises(DomainError):
        bregman(m, [-0.1, 1.1], [0.5, 0.5])


@pytest.mark.parametrize("p", [1.0, 2.5, 0.5])
def test_pnorm_rejects_bad_exponent(p):
    with pytest.raises(ValueError):
        MirrorMap.pnorm(p, 2)


def test_mahalanobis_rejects_indefinite():
    with pytest.raises((DomainError, ValueError)):
        MirrorMap.mahalanobis(np.diag([1.0, -1.0]))


# -- properties -------------------------------------------------------------
def test_nonnegativity(rng):
    for m in all_maps(4, rng):
        x, y = interior(m, rng, 1000), interior(m, rng, 1000)
        assert np.min(m.bregman(x, y)) >= -1e-12


def test_three_point_identity(rng):
    for m in all_maps(5, rng):
        x, y, z = (interior(m, rng, 200) for _ in range(3))
        lhs = m.bregman(z, x) + m.bregman(x, y) - m.bregman(z, y)
        rhs = np.sum((m.grad(y) - m.grad(x)) * (z - x), axis=-1)
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)


def test_pinsker_strong_convexity(rng):
    m = MirrorMap.neg_entropy(6)
    x, y = interior(m, rng, 1000), interior(m, rng, 1000)
    l1 = np.sum(np.abs(x - y), axis=-1)
    assert np.all(m.bregman(x, y) >= 0.5 * l1 ** 2 - 1e-9)


def test_strong_convexity_other_maps(rng):
    for m in all_maps(4, rng):
        if m.kind == "negentropy":
            continue
        x, y = interior(m, rng, 500), interior(m, rng, 500)
        assert np.all(m.bregman(x, y) >= 0.5 * m.mu_psi * norm(m.norm, x - y) ** 2 - 1e-9)


def test_grad_matches_finite_differences(rng):
    h = 1e-6
    for m in all_maps(4, rng):
        x = interior(m, rng, 20)
        for xi in x:
            E = np.eye(m.dim) * h
            fd = (m.psi(xi + E) - m.psi(xi - E)) / (2 * h)
            g = m.grad(xi)
            assert np.max(np.abs(fd - g)) <= 1e-5 * max(1.0, np.max(np.abs(g)))


@given(arrays(float, 4, elements=finite), st.floats(1.05, 2.0))
def test_pnorm_inverse_roundtrip(x, p):
    m = MirrorMap.pnorm(p, 4)
    back = m.inverse_grad(m.grad(x))
    assert np.allclose(back, x, rtol=1e-9, atol=1e-9)


@given(arrays(float, 3, elements=st.floats(-30, 30)))
def test_negentropy_inverse_lands_on_simplex_interior(z):
    m = MirrorMap.neg_entropy(3)
    x = m.inverse_grad(z)
    assert np.all(x > 0)


@given(arrays(float, 5, elements=finite))
def test_dual_norm_is_sup_of_pairing(g):
    # Holder: <g, y> <= ||g||_* ||y|| for the p-norm pair
    tag = NormTag.lp(1.5)
    rng = np.random.default_rng(0)
    y = rng.standard_normal((50, 5))
    pair = y @ g
    assert np.all(pair <= np.sqrt(dual_norm_sq(tag, g)) * norm(tag, y) + 1e-9)
