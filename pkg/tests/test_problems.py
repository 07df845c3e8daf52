import numpy as np
import pytest
from hypothesis import given, strategies as st

from mirroropt.constraints import FeasibleSet
from mirroropt.exceptions import BadLabels, DimensionMismatch, MissingOptimum, NotStochastic, ParseError, UnboundedSet
from mirroropt.geometry import NormTag, dual_norm_sq
from mirroropt.problems import (
    Component,
    CallableProblem,
    Dataset,
    component_inf_oracle,
    grad_sq_at_optimum,
    interpolation_check,
    lift_problem,
    linear_system_problem,
    logistic_problem,
    markov_problem,
    quad1d_problem,
    random_stochastic_matrix,
    rbf_features,
    read_libsvm,
    sigma_sq,
    sigma_sq_constrained,
    synth_margin_dataset,
)


# -- quad1d -----------------------------------------------------------------
def test_quad1d_infima():
    p = quad1d_problem([(1, 0, 0)], FeasibleSet.box(0, 1))
    assert p.component_inf[0] == 0 and p.inf_constrained(0) == 0
    p = quad1d_problem([(1, 2, 0)], FeasibleSet.box(0, 1))
    assert p.component_inf[0] == pytest.approx(-1) and p.inf_constrained(0) == 0
    p = quad1d_problem([(-1, 0, 0)], FeasibleSet.reals())
    assert p.component_inf[0] == -np.inf


def test_quad1d_sigma_hand_value():
    p = quad1d_problem([(1, 0, 0), (1, -2, 0)], FeasibleSet.reals())
    np.testing.assert_allclose(p.known_xstar, [0.5])
    assert sigma_sq(p) == pytest.approx(0.25)
    grid = np.linspace(-3, 3, 60001)[:, None]
    f_grid = p.value(grid).min()
    infs = [p.component_values(np.full(len(grid), i), grid).min() for i in range(2)]
    assert sigma_sq(p) == pytest.approx(f_grid - np.mean(infs), abs=1e-6)


def test_sigma_infinite_with_concave_member():
    p = quad1d_problem([(1, 0, 0), (-1, 0, 0), (2, 0, 0)], FeasibleSet.box(0, 1))
    assert sigma_sq(p) == np.inf
    assert np.isfinite(sigma_sq_constrained(p))


def test_sigma_constrained_box_example():
    p = quad1d_problem([(1, 2, 0)], FeasibleSet.box(0, 1))
    assert sigma_sq_constrained(p) == 0
    assert sigma_sq(p) == pytest.approx(1)


def test_nonneg_instance_separates_neighborhoods():
    coeffs = [(1.0, 0.5, 0.0), (0.5, 1.0, 0.0), (2.0, 0.2, 0.0), (0.25, 0.8, 0.0)]
    p = quad1d_problem(coeffs, FeasibleSet.nonneg())
    assert sigma_sq_constrained(p) == 0
    assert sigma_sq(p) > 0 and grad_sq_at_optimum(p) > 0
    rep = interpolation_check(p)
    assert rep.sigma_x_zero and rep.xstar_in_all_component_minima and rep.agree


def test_interpolation_check_shifted_component():
    p = quad1d_problem([(1, 0, 0), (1, 0, 0)], FeasibleSet.reals())
    rep = interpolation_check(p)
    assert rep.sigma_x_zero and rep.xstar_in_all_component_minima
    # the shift is in the minimizer: x* = 1/2 is no longer each component's minimizer
    p = quad1d_problem([(1, 0, 0), (1, -2, 1)], FeasibleSet.reals())
    rep = interpolation_check(p)
    assert not rep.sigma_x_zero and not rep.xstar_in_all_component_minima and rep.agree


def test_interpolation_check_single_component():
    p = quad1d_problem([(2, -1, 3)], FeasibleSet.reals())
    rep = interpolation_check(p)
    assert rep.sigma_x_zero and rep.xstar_in_all_component_minima


# -- linear systems ---------------------------------------------------------
def test_linear_system_examples():
    p = linear_system_problem(np.eye(2), np.zeros(2), fset=FeasibleSet.simplex())
    assert p.value(np.array([0.5, 0.5])) == pytest.approx(0.125)
    p = linear_system_problem(np.ones((1, 2)), np.ones(1))
    assert p.value(np.zeros(2)) == pytest.approx(0.5)


def test_linear_system_interpolation(rng):
    A = rng.standard_normal((8, 3))
    x0 = rng.standard_normal(3)
    p = linear_system_problem(A, A @ x0)
    assert p.value(x0) == pytest.approx(0, abs=1e-24)
    np.testing.assert_allclose(p.component_grads(np.arange(8), np.tile(x0, (8, 1))), 0, atol=1e-12)
    assert sigma_sq(p) == pytest.approx(0, abs=1e-20)
    assert sigma_sq_constrained(p) == pytest.approx(0, abs=1e-20)
    assert np.all(p.component_inf == 0)


def test_linear_system_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        linear_system_problem(np.eye(3), np.zeros(2))


def test_linear_system_smoothness_uses_dual_norm(rng):
    A = rng.standard_normal((5, 4))
    p = linear_system_problem(A, np.zeros(5), norm=NormTag.l1())
    np.testing.assert_allclose(p.smoothness, np.max(np.abs(A), axis=1) ** 2)


def test_bregman_f_equals_gap_for_linear_systems(rng):
    A = rng.standard_normal((10, 4))
    b = rng.standard_normal(10)
    p = linear_system_problem(A, b)
    X = rng.standard_normal((30, 4))
    np.testing.assert_allclose(p.bregman_f(p.known_xstar, X), p.value(X) - p.known_fstar, atol=1e-9)


# -- Markov ------------------------------------------------------------------
def test_markov_identity_chain():
    p = markov_problem(np.eye(3))
    X = np.random.default_rng(0).dirichlet(np.ones(3), size=10)
    np.testing.assert_allclose(p.value(X), 0, atol=1e-30)


def test_markov_two_state_examples():
    p = markov_problem([[0, 1], [1, 0]])
    np.testing.assert_allclose(p.known_xstar, [0.5, 0.5])
    assert p.value(p.known_xstar) == pytest.approx(0, abs=1e-30)
    p = markov_problem([[0.9, 0.1], [0.5, 0.5]])
    np.testing.assert_allclose(p.known_xstar, [5 / 6, 1 / 6])


def test_markov_rejects_non_stochastic():
    with pytest.raises(NotStochastic):
        markov_problem([[0.5, 0.6], [0.5, 0.5]])
    with pytest.raises(NotStochastic):
        markov_problem([[1.2, -0.2], [0.5, 0.5]])


def test_markov_smoothness_is_at_least_one():
    p = markov_problem(random_stochastic_matrix(6, seed=2))
    assert np.all(p.smoothness >= 1.0)
    assert p.norm == NormTag.l1()


# -- logistic ----------------------------------------------------------------
def test_logistic_examples():
    data = Dataset(np.array([[1.0, 0.0], [0.5, -2.0]]), np.array([1.0, -1.0]))
    p = logistic_problem(data)
    np.testing.assert_allclose(p.component_values(np.arange(2), np.zeros((2, 2))), np.log(2))
    single = logistic_problem(Dataset(np.array([[1.0, 0.0]]), np.array([1.0])))
    assert single.value(np.array([np.log(3), 0.0])) == pytest.approx(np.log(4 / 3))
    assert np.all(p.component_inf == 0)
    np.testing.assert_allclose(p.smoothness, 0.25 * np.sum(data.features ** 2, axis=1))


def test_logistic_loss_vanishes_along_separator():
    data = synth_margin_dataset(200, 5, 0.05, seed=1)
    p = logistic_problem(data)
    vals = [p.value(s * data.separator) for s in (1, 10, 100, 1000)]
    assert np.all(np.diff(vals) < 0) and vals[-1] < 1e-10


def test_logistic_bad_labels():
    with pytest.raises(BadLabels):
        logistic_problem(Dataset(np.eye(2), np.array([0.0, 1.0])))


def test_synth_margin_dataset():
    a = synth_margin_dataset(1000, 20, 0.05, seed=7)
    b = synth_margin_dataset(1000, 20, 0.05, seed=7)
    np.testing.assert_array_equal(a.features, b.features)
    margins = a.labels * (a.features @ a.separator)
    assert margins.min() >= 0.05
    np.testing.assert_allclose(np.linalg.norm(a.features, axis=1), 1.0)
    assert np.linalg.norm(a.separator) == pytest.approx(1.0)


# -- data ingestion ------------------------------------------------------------
def test_read_libsvm(tmp_path):
    f = tmp_path / "d.txt"
    f.write_text("1 1:0.5 3:2\n0 2:1\n")
    data = read_libsvm(f)
    np.testing.assert_allclose(data.features, [[0.5, 0, 2], [0, 1, 0]])
    np.testing.assert_allclose(data.labels, [1, -1])
    empty = tmp_path / "e.txt"
    empty.write_text("")
    assert read_libsvm(empty).n == 0


def test_read_libsvm_errors(tmp_path):
    f = tmp_path / "bad.txt"
    f.write_text("1 1:0.5\n1 x:2\n")
    with pytest.raises(ParseError, match="2"):
        read_libsvm(f)
    with pytest.raises(OSError):
        read_libsvm(tmp_path / "missing.txt")


def test_rbf_features():
    X = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]])
    data = rbf_features(Dataset(X, np.array([1.0, -1.0, 1.0])), 0.5)
    K = data.features
    np.testing.assert_allclose(np.diag(K), 1.0)
    np.testing.assert_allclose(K[0], K[2])
    # ||x_0 - x_1||^2 = 1 = 1/gamma for gamma = 1
    K1 = rbf_features(Dataset(X, np.array([1.0, -1.0, 1.0])), 1.0).features
    assert K1[0, 1] == pytest.approx(np.exp(-1))


# -- brute-force oracle ----------------------------------------------------------
def test_component_inf_oracle():
    comp = Component(lambda x: float(x[0] ** 2 + 2 * x[0]), lambda x: np.array([2 * x[0] + 2]),
                     -1.0, lambda s: 0.0, 2.0, dim=1)
    assert component_inf_oracle(comp, FeasibleSet.box(0, 1), resolution=10001) == pytest.approx(0, abs=1e-8)
    with pytest.raises(UnboundedSet):
        component_inf_oracle(comp, FeasibleSet.reals())


def test_oracle_markov_identity_component():
    p = markov_problem(np.eye(3))
    comp = p.components[0]
    assert component_inf_oracle(comp, FeasibleSet.simplex(), resolution=2000) == pytest.approx(0, abs=1e-12)


def test_oracle_logistic_on_box_matches_golden_section():
    from scipy.optimize import minimize_scalar

    p = logistic_problem(Dataset(np.array([[1.0]]), np.array([-1.0])))
    comp = p.components[0]
    got = component_inf_oracle(comp, FeasibleSet.box(-1, 1), resolution=2001)
    ref = minimize_scalar(lambda t: np.logaddexp(0, t), bounds=(-1, 1), method="bounded",
                          options={"xatol": 1e-12}).fun
    assert got == pytest.approx(ref, abs=1e-6)


def test_callable_problem_sigma_requires_optimum():
    comp = Component(lambda x: float(x @ x), lambda x: 2 * x, 0.0, lambda s: 0.0, 2.0)
    p = CallableProblem([comp], FeasibleSet.reals(), 2)
    with pytest.raises(MissingOptimum):
        sigma_sq(p)


def test_lift_problem_preserves_values(rng):
    A = rng.standard_normal((6, 3))
    p = linear_system_problem(A, rng.standard_normal(6), fset=FeasibleSet.l1ball(2.0))
    lifted, lift = lift_problem(p)
    W = rng.dirichlet(np.ones(6), size=10)
    np.testing.assert_allclose(lifted.value(W), p.value(W @ lift.matrix().T))


# -- properties ---------------------------------------------------------------------
@given(st.lists(st.tuples(st.floats(0.05, 3), st.floats(-3, 3), st.floats(-1, 1)), min_size=1, max_size=6),
       st.sampled_from(["box", "nonneg", "reals"]))
def test_sigma_constrained_below_sigma(coeffs, kind):
    fset = {"box": FeasibleSet.box(0, 1), "nonneg": FeasibleSet.nonneg(), "reals": FeasibleSet.reals()}[kind]
    p = quad1d_problem(coeffs, fset)
    assert sigma_sq_constrained(p) <= sigma_sq(p) + 1e-12
    assert sigma_sq_constrained(p) >= 0


def _self_bounding_gap(p, tag, X, idx):
    g2 = dual_norm_sq(tag, p.component_grads(idx, X))
    return g2 / (2 * p.smoothness_wrt(tag)[idx]) - (p.component_values(idx, X) - p.component_inf[idx])


@pytest.mark.parametrize("tag", [NormTag.l2(), NormTag.l1(), NormTag.lp(1.5)])
def test_self_bounding(rng, tag):
    W = rng.standard_normal((30, 5))
    idx = rng.integers(0, 30, size=10000)
    X = 3 * rng.standard_normal((10000, 5))
    lin = linear_system_problem(W, rng.standard_normal(30))
    y = np.where(rng.random(30) < 0.5, -1.0, 1.0)
    logi = logistic_problem(Dataset(W, y))
    for p in (lin, logi):
        assert np.max(_self_bounding_gap(p, tag, X, idx)) <= 1e-9


def test_bregman_f_symmetry_for_linear_components(rng):
    p = linear_system_problem(rng.standard_normal((5, 3)), rng.standard_normal(5))
    x, y = rng.standard_normal((2, 100, 3))
    for i in range(5):
        np.testing.assert_allclose(p.component_bregman(i, x, y), p.component_bregman(i, y, x), atol=1e-10)


def test_gradients_match_finite_differences(rng):
    h = 1e-6
    W = rng.standard_normal((6, 3))
    problems = [linear_system_problem(W, rng.standard_normal(6)),
                logistic_problem(Dataset(W, np.sign(rng.standard_normal(6)) + 0.0)),
                quad1d_problem([(0.5, -1, 0), (-2, 0.3, 1)], FeasibleSet.reals()),
                markov_problem(random_stochastic_matrix(3, seed=5))]
    for p in problems:
        for i in range(p.n):
            x = rng.standard_normal(p.dim)
            idx = np.full(p.dim, i)
            E = h * np.eye(p.dim)
            fd = (p.component_values(idx, x + E) - p.component_values(idx, x - E)) / (2 * h)
            g = p.component_grads(np.array([i]), x[None])[0]
            assert np.max(np.abs(fd - g)) <= 1e-5 * max(1.0, np.max(np.abs(g)))
