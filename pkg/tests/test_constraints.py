import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from mirroropt.constraints import (
    SUPPORTED_PAIRS,
    FeasibleSet,
    LiftMatrix,
    check_pair,
    euclid_project,
    l1_lift,
    l1_unlift,
    mirror_step,
    project_simplex,
)
from mirroropt.exceptions import DomainError, InfeasibleStart, UnsupportedPair
from mirroropt.geometry import MirrorMap

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_mirror_step_examples():
    out = mirror_step(MirrorMap.euclidean(2), FeasibleSet.nonneg(), [1.0, 1.0], [3.0, -1.0], 1.0)
    np.testing.assert_allclose(out, [0.0, 2.0])
    out = mirror_step(MirrorMap.neg_entropy(2), FeasibleSet.simplex(), [0.5, 0.5], [np.log(2), 0.0], 1.0)
    np.testing.assert_allclose(out, [1 / 3, 2 / 3])


@pytest.mark.parametrize("kind,fset", [
    ("euclidean", FeasibleSet.reals()), ("euclidean", FeasibleSet.simplex()),
    ("negentropy", FeasibleSet.simplex()), ("pnorm", FeasibleSet.reals()),
    ("mahalanobis", FeasibleSet.reals()), ("euclidean", FeasibleSet.box(0, 1)),
])
def test_zero_gradient_keeps_iterate(kind, fset):
    mirror = {"euclidean": MirrorMap.euclidean(3), "negentropy": MirrorMap.neg_entropy(3),
              "pnorm": MirrorMap.pnorm(1.5, 3), "mahalanobis": MirrorMap.mahalanobis(np.diag([1., 2., 3.]))}[kind]
    x = np.array([0.2, 0.3, 0.5])
    np.testing.assert_allclose(mirror_step(mirror, fset, x, np.zeros(3), 0.7), x, atol=1e-15)


def test_projection_examples():
    np.testing.assert_allclose(euclid_project(FeasibleSet.simplex(), [0.2, 0.3, 0.5]), [0.2, 0.3, 0.5])
    np.testing.assert_allclose(euclid_project(FeasibleSet.nonneg(), [-1, 2]), [0, 2])
    np.testing.assert_allclose(euclid_project(FeasibleSet.simplex(), [1, 1]), [0.5, 0.5])


def test_lift_examples():
    np.testing.assert_allclose(l1_lift(1.0, [0.0, 0.0]), [0.25] * 4)
    np.testing.assert_allclose(l1_lift(2.0, [2.0, 0.0]), [1, 0, 0, 0])
    w = l1_lift(1.0, [0.5, 0.0])
    np.testing.assert_allclose(LiftMatrix(1.0, 2).matrix() @ w, [0.5, 0.0])
    assert w.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(l1_unlift(LiftMatrix(3.0, 3), [1, 0, 0, 0, 0, 0]), [3, 0, 0])
    np.testing.assert_allclose(l1_unlift(LiftMatrix(3.0, 3), np.full(6, 1 / 6)), np.zeros(3), atol=1e-15)


def test_lift_rejects_outside_ball():
    with pytest.raises(InfeasibleStart):
        l1_lift(1.0, [0.8, 0.8])


def test_unlift_rejects_off_simplex():
    with pytest.raises(DomainError):
        l1_unlift(LiftMatrix(1.0, 1), [0.8, 0.8])


def test_unsupported_pairs_fail_loudly():
    with pytest.raises(UnsupportedPair, match="negentropy"):
        check_pair(MirrorMap.neg_entropy(2), FeasibleSet.reals())
    with pytest.raises(UnsupportedPair):
        mirror_step(MirrorMap.pnorm(1.5, 2), FeasibleSet.simplex(), [0.5, 0.5], [1, 0], 1.0)
    assert ("euclidean", "simplex") in SUPPORTED_PAIRS


def test_box_rejects_inverted_bounds():
    with pytest.raises(ValueError):
        FeasibleSet.box(1.0, 0.0)


def test_membership():
    assert FeasibleSet.simplex().contains(np.array([0.5, 0.5]))
    assert not FeasibleSet.simplex().contains(np.array([0.5, 0.6]))
    assert FeasibleSet.l1ball(1.0).contains(np.array([0.5, -0.5]))
    assert not FeasibleSet.nonneg().contains(np.array([-1e-3]))


@given(arrays(float, 6, elements=finite))
def test_simplex_projection_matches_qp(v):
    # the projection is the unique point whose first-order condition holds
    p = project_simplex(v)
    assert abs(p.sum() - 1) < 1e-12 and np.all(p >= 0)
    h = p - v
    support = p > 1e-12
    assert np.all(h[~support] >= h[support].max() - 1e-9) if support.any() else True
    assert np.ptp(h[support]) < 1e-9


@given(arrays(float, 4, elements=finite), arrays(float, 4, elements=finite), st.floats(0.01, 3))
def test_euclidean_step_equals_projection(x, g, eta):
    m = MirrorMap.euclidean(4)
    for fset in (FeasibleSet.reals(), FeasibleSet.nonneg(), FeasibleSet.box(-1, 2), FeasibleSet.simplex()):
        x0 = euclid_project(fset, x)
        np.testing.assert_allclose(mirror_step(m, fset, x0, g, eta),
                                   euclid_project(fset, x0 - eta * g), atol=1e-10)


@given(arrays(float, 5, elements=st.floats(-50, 50)), st.floats(0.01, 20))
def test_eg_step_feasible_and_optimal(g, eta):
    m = MirrorMap.neg_entropy(5)
    fset = FeasibleSet.simplex()
    x = np.array([0.1, 0.2, 0.3, 0.15, 0.25])
    z = mirror_step(m, fset, x, g, eta)
    assert fset.contains(z) and np.all(z > 0)
    h = eta * g + m.grad(z) - m.grad(x)
    rng = np.random.default_rng(0)
    U = rng.dirichlet(np.ones(5), size=100)
    assert np.all((U - z) @ h >= -1e-7)


def test_optimality_certificate_random_pairs(rng):
    d = 4
    for fset in (FeasibleSet.nonneg(), FeasibleSet.box(-0.3, 0.8), FeasibleSet.simplex(), FeasibleSet.reals()):
        m = MirrorMap.euclidean(d)
        x = euclid_project(fset, rng.standard_normal((50, d)))
        g = rng.standard_normal((50, d))
        z = mirror_step(m, fset, x, g, 0.6)
        h = 0.6 * g + z - x
        U = euclid_project(fset, 3 * rng.standard_normal((100, d)))
        for zi, hi in zip(z, h):
            assert np.all((U - zi) @ hi >= -1e-7)


def test_large_step_eg_uses_log_space():
    m = MirrorMap.neg_entropy(3)
    z = mirror_step(m, FeasibleSet.simplex(), np.full(3, 1 / 3), np.array([1000.0, 0.0, 500.0]), 10.0)
    assert np.all(np.isfinite(z)) and z[1] == pytest.approx(1.0)


@given(st.floats(0.1, 5), arrays(float, 3, elements=st.floats(-1, 1)))
def test_lift_roundtrip(radius, direction):
    total = np.sum(np.abs(direction))
    x = direction * radius / max(total, 1.0)
    w = l1_lift(radius, x)
    lift = LiftMatrix(radius, 3)
    np.testing.assert_allclose(l1_unlift(lift, w), x, atol=1e-12)
    assert np.sum(np.abs(lift.matrix() @ w)) <= radius + 1e-12
