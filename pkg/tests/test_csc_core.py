import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gcsc.csc_core import (check_dims, csc_objective, is_feasible, project_unit_ball, prox_l1,
                           prox_r, random_init, reconstruct)
from gcsc.errors import DimensionError, InvalidInputError
from gcsc.wcsc_niapg import WcscProblem, weighted_F

from conftest import brute_reconstruct

vec = arrays(np.float64, 6, elements=st.floats(-10, 10, allow_nan=False))


def test_reconstruct_zero_codes(rng):
    D = rng.standard_normal((2, 3))
    assert not np.any(reconstruct(D, np.zeros((3, 2, 8))))


def test_reconstruct_identity_filter(rng):
    Z = rng.standard_normal((2, 1, 8))
    np.testing.assert_allclose(reconstruct(np.ones((1, 1)), Z), Z[:, 0], atol=1e-14)


def test_reconstruct_matches_double_loop(rng):
    D, Z = rng.standard_normal((2, 3)), rng.standard_normal((3, 2, 8))
    np.testing.assert_allclose(reconstruct(D, Z), brute_reconstruct(D, Z), atol=1e-12)


def test_dimension_checks():
    with pytest.raises(DimensionError):
        check_dims(np.ones((2, 3)), np.ones((1, 3, 8)))
    with pytest.raises(DimensionError):
        check_dims(np.ones((1, 9)), np.ones((1, 1, 8)))
    with pytest.raises(DimensionError):
        check_dims(np.ones((1, 3)), np.ones((1, 1, 8)), np.ones((2, 8)))


def test_objective_trivial_cases(rng):
    D = rng.standard_normal((2, 3))
    Z = np.zeros((2, 2, 8))
    assert csc_objective(D, Z, np.zeros((2, 8)), 1.0) == 0.0
    X = rng.standard_normal((2, 8))
    assert csc_objective(D, Z, X, 3.0) == pytest.approx(0.5 * np.sum(X ** 2), rel=1e-14)
    with pytest.raises(InvalidInputError):
        csc_objective(D, Z, X, -1.0)


def test_objective_scalar_loop(rng):
    D, Z, X = rng.standard_normal((2, 3)), rng.standard_normal((2, 2, 7)), rng.standard_normal((2, 7))
    beta = 0.3
    rec = brute_reconstruct(D, Z)
    ref = 0.0
    for i in range(2):
        for p in range(7):
            ref += 0.5 * (X[i, p] - rec[i, p]) ** 2
    for v in Z.ravel():
        ref += beta * abs(v)
    assert csc_objective(D, Z, X, beta) == pytest.approx(ref, rel=1e-12)


def test_prox_l1_hand_values():
    assert prox_l1(np.array([0.7]), 0.2)[0] == pytest.approx(0.5)
    assert prox_l1(np.array([0.1]), 0.2)[0] == 0.0
    assert prox_l1(np.array([-0.7]), 0.2)[0] == pytest.approx(-0.5)
    z = np.array([0.3, -2.0])
    np.testing.assert_array_equal(prox_l1(z, 0.0), z)
    with pytest.raises(InvalidInputError):
        prox_l1(z, -0.1)


def test_project_unit_ball_cases():
    d = np.array([[2.0, 0.0], [0.3, 0.4], [0.0, 0.0]])
    out = project_unit_ball(d)
    np.testing.assert_allclose(out[0], [1.0, 0.0])
    np.testing.assert_array_equal(out[1], d[1])
    np.testing.assert_array_equal(out[2], 0)
    assert is_feasible(out)
    assert not is_feasible(d)


@settings(max_examples=60, deadline=None)
@given(vec, vec, st.floats(0, 5))
def test_prox_l1_contraction(a, b, t):
    lhs = np.linalg.norm(prox_l1(a, t) - prox_l1(b, t))
    assert lhs <= np.linalg.norm(a - b) + 1e-12


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (3, 5), elements=st.floats(-100, 100, allow_nan=False)))
def test_projection_idempotent(d):
    once = project_unit_ball(d)
    np.testing.assert_array_equal(project_unit_ball(once), once)


def test_prox_r_fixed_point_and_separability(rng):
    D = project_unit_ball(rng.standard_normal((2, 3)))
    Z = np.zeros((1, 2, 8))
    D2, Z2 = prox_r(D, Z, 0.5, 1.0)
    np.testing.assert_array_equal(D2, D)
    np.testing.assert_array_equal(Z2, Z)

    D, Z = 3 * rng.standard_normal((2, 3)), rng.standard_normal((1, 2, 8))
    D2, Z2 = prox_r(D, Z, 0.5, 0.4)
    np.testing.assert_array_equal(D2, project_unit_ball(D))
    np.testing.assert_array_equal(Z2, prox_l1(Z, 0.2))


def test_prox_r_grid_search():
    # One filter tap pair and one code pair: minimize 1/2||x - v||^2 + t r(x) on a grid.
    t, beta = 0.5, 0.6
    vd, vz = np.array([0.9, 0.8]), np.array([0.45, -0.1])
    g = np.linspace(-1.5, 1.5, 1201)
    A, B = np.meshgrid(g, g, indexing="ij")
    costd = 0.5 * ((A - vd[0]) ** 2 + (B - vd[1]) ** 2)
    costd[A ** 2 + B ** 2 > 1] = np.inf
    j = np.unravel_index(np.argmin(costd), costd.shape)
    costz = 0.5 * ((A - vz[0]) ** 2 + (B - vz[1]) ** 2) + t * beta * (np.abs(A) + np.abs(B))
    k = np.unravel_index(np.argmin(costz), costz.shape)
    D2, Z2 = prox_r(vd[None], vz[None, None], t, beta)
    d, z = D2[0], Z2[0, 0]
    # the closed form must do at least as well as the grid, and land near its argmin
    assert np.dot(d, d) <= 1 + 1e-12
    assert 0.5 * np.sum((d - vd) ** 2) <= costd[j] + 1e-12
    assert 0.5 * np.sum((z - vz) ** 2) + t * beta * np.sum(np.abs(z)) <= costz[k] + 1e-12
    np.testing.assert_allclose(d, [g[j[0]], g[j[1]]], atol=0.02)
    np.testing.assert_allclose(z, [g[k[0]], g[k[1]]], atol=g[1] - g[0])


def test_objective_matches_weighted_reduction(rng):
    D = project_unit_ball(rng.standard_normal((2, 4)))
    Z, X = rng.standard_normal((3, 2, 16)), rng.standard_normal((3, 16))
    prob = WcscProblem.unweighted(X, 0.7)
    a, b = csc_objective(D, Z, X, 0.7), weighted_F(D, Z, prob)
    assert abs(a - b) <= 1e-10 * abs(a)


def test_random_init_shapes(rng):
    D, Z = random_init(4, 2, 5, 16, rng)
    assert D.shape == (2, 5) and Z.shape == (4, 2, 16)
    assert is_feasible(D) and not np.any(Z)
