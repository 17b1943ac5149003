import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from commonfpc.core import (
    GridFunction,
    SymMatrix,
    batch_gram_schmidt,
    fix_signs,
    gram_schmidt,
    gram_schmidt_values,
    l2_inner,
    norm_cdf,
    sym_eigen,
    trapezoid_weights,
)
from commonfpc.exceptions import IncompatibleGridsError, InvalidMatrixError, RankDeficiencyError, ValidationError

from conftest import cos2, fine_quad, grid_fn, sin2

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


# -- grid functions and quadrature -------------------------------------------

def test_gridfunction_validation():
    with pytest.raises(ValidationError):
        GridFunction(0, 1, [1.0])
    with pytest.raises(ValidationError):
        GridFunction(1, 0, [1.0, 2.0])
    with pytest.raises(ValidationError):
        GridFunction(0, 1, [1.0, np.nan])


def test_gridfunction_values_read_only():
    f = GridFunction(0, 1, [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        f.values[0] = 5.0


def test_nodes_are_equidistant():
    f = GridFunction.constant(0.0, 5, (0.0, 2.0))
    assert np.allclose(f.nodes, [0, 0.5, 1, 1.5, 2])


def test_inner_constant_exact():
    one = GridFunction.constant(1.0, 101)
    assert l2_inner(one, one) == pytest.approx(1.0, abs=1e-15)


def test_inner_sin_cos_orthogonal():
    assert abs(l2_inner(grid_fn(sin2), grid_fn(cos2))) <= 1e-6


def test_inner_sin_unit_norm():
    oracle = fine_quad(lambda t: sin2(t) ** 2)
    assert oracle == pytest.approx(1.0, abs=1e-10)
    assert l2_inner(grid_fn(sin2), grid_fn(sin2)) == pytest.approx(1.0, abs=1e-4)


def test_inner_grid_mismatch():
    with pytest.raises(IncompatibleGridsError):
        l2_inner(GridFunction.constant(1.0, 10), GridFunction.constant(1.0, 11))
    with pytest.raises(IncompatibleGridsError):
        l2_inner(GridFunction.constant(1.0, 10), GridFunction.constant(1.0, 10, (0, 2)))


def test_trapezoid_weights_sum_to_length():
    assert trapezoid_weights(0.8, 1.1, 500).sum() == pytest.approx(0.3, abs=1e-14)


@given(arrays(float, st.integers(2, 40), elements=finite))
def test_quadrature_exact_for_piecewise_linear(values):
    # the integral of the piecewise-linear interpolant, cell by cell
    f = GridFunction(0.0, 1.0, values)
    h = 1.0 / (values.size - 1)
    exact = sum(0.5 * h * (values[k] + values[k + 1]) for k in range(values.size - 1))
    one = GridFunction.constant(1.0, values.size)
    assert l2_inner(f, one) == pytest.approx(exact, rel=1e-12, abs=1e-9)


@given(arrays(float, 12, elements=finite), arrays(float, 12, elements=finite),
       arrays(float, 12, elements=finite), finite)
def test_inner_symmetric_bilinear(a, b, c, s):
    f, g, h = (GridFunction(0, 1, v) for v in (a, b, c))
    assert l2_inner(f, g) == pytest.approx(l2_inner(g, f), rel=1e-12, abs=1e-9)
    lhs = l2_inner(f * s + g, h)
    assert lhs == pytest.approx(s * l2_inner(f, h) + l2_inner(g, h), rel=1e-9, abs=1e-6)


def test_arithmetic_checks_grids():
    f = GridFunction.constant(1.0, 5)
    assert np.all((f + 2 * f - 1).values == 2.0)
    with pytest.raises(IncompatibleGridsError):
        f + GridFunction.constant(1.0, 6)


def test_call_interpolates():
    f = GridFunction(0, 1, [0.0, 1.0, 0.0])
    assert f(0.25) == pytest.approx(0.5)


# -- symmetric matrices and eigendecomposition --------------------------------

def test_symmatrix_symmetrizes_and_rejects():
    a = np.array([[1.0, 2.0], [2.0 + 1e-14, 1.0]])
    m = SymMatrix(a)
    assert np.array_equal(m.entries, m.entries.T)
    with pytest.raises(InvalidMatrixError):
        SymMatrix(np.array([[1.0, 2.0], [3.0, 1.0]]))
    with pytest.raises(InvalidMatrixError):
        SymMatrix(np.array([[1.0, np.inf], [np.inf, 1.0]]))


def test_eigen_identity():
    e = sym_eigen(np.eye(2))
    assert np.allclose(e.eigenvalues, [1, 1])


def test_eigen_diagonal():
    e = sym_eigen(np.diag([1.0, 3.0]))
    assert np.allclose(e.eigenvalues, [3, 1])
    assert np.allclose(np.abs(e.eigenvectors), [[0, 1], [1, 0]])


def test_eigen_two_by_two_hand():
    e = sym_eigen(np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert np.allclose(e.eigenvalues, [3, 1], atol=1e-14)
    r = 1 / math.sqrt(2)
    assert np.allclose(np.abs(e.eigenvectors[:, 0]), [r, r])
    assert np.allclose(np.abs(e.eigenvectors[:, 1]), [r, r])
    assert e.eigenvectors[0, 1] * e.eigenvectors[1, 1] < 0


def test_eigen_rejects_nonfinite():
    with pytest.raises(InvalidMatrixError):
        sym_eigen(np.array([[np.nan, 0.0], [0.0, 1.0]]))


@given(st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_eigen_invariants(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, n))
    a = x + x.T
    e = sym_eigen(a)
    v, lam = e.eigenvectors, e.eigenvalues
    scale = max(np.linalg.norm(a), 1e-300)
    assert np.all(np.diff(lam) <= 0)
    assert np.allclose(v.T @ v, np.eye(n), atol=1e-10)
    assert np.max(np.abs(a @ v - v * lam)) <= 1e-8 * scale
    assert np.linalg.norm(v @ np.diag(lam) @ v.T - a) <= 1e-8 * scale
    assert abs(lam.sum() - np.trace(a)) <= 1e-9 * max(abs(np.trace(a)), scale * 1e-3)
    # sign rule: the largest-magnitude entry of every eigenvector is positive
    for j in range(n):
        k = np.argmax(np.abs(v[:, j]))
        assert v[k, j] > 0


def test_eigen_deterministic():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((20, 20))
    a, b = sym_eigen(x + x.T), sym_eigen(x + x.T)
    assert np.array_equal(a.eigenvalues, b.eigenvalues)
    assert np.array_equal(a.eigenvectors, b.eigenvectors)


def test_fix_signs_ties_lowest_index():
    v = fix_signs(np.array([[-1.0], [1.0]]) / math.sqrt(2))
    assert v[0, 0] > 0


# -- Gram-Schmidt ---------------------------------------------------------------

def test_gram_schmidt_orthonormal_pair_unchanged():
    fs = [grid_fn(sin2), grid_fn(cos2)]
    out = gram_schmidt(fs)
    for f, g in zip(fs, out):
        assert np.max(np.abs(f.values - g.values)) <= 1e-6


def test_gram_schmidt_dependent():
    f = grid_fn(sin2)
    with pytest.raises(RankDeficiencyError):
        gram_schmidt([f, f])


def test_gram_schmidt_one_and_t():
    out = gram_schmidt([GridFunction.constant(1.0, 501), grid_fn(lambda t: t)])
    nodes = out[0].nodes
    assert np.max(np.abs(out[0].values - 1.0)) <= 1e-4
    assert np.max(np.abs(out[1].values - math.sqrt(12) * (nodes - 0.5))) <= 1e-4


@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_gram_schmidt_properties(r, seed):
    rng = np.random.default_rng(seed)
    vals = rng.standard_normal((r, 60))
    w = trapezoid_weights(0, 1, 60)
    q = gram_schmidt_values(vals, w)
    assert np.allclose((q * w) @ q.T, np.eye(r), atol=1e-8)
    assert np.dot(w, q[0] * vals[0]) >= 0
    # same span: residual of projecting the input on the output vanishes
    resid = vals - ((vals * w) @ q.T) @ q
    assert np.max(np.abs(resid)) <= 1e-8 * np.max(np.abs(vals))
    assert np.allclose(gram_schmidt_values(q, w), q, atol=1e-10)


def test_batch_gram_schmidt_matches_single():
    rng = np.random.default_rng(3)
    vals = rng.standard_normal((4, 3, 50))
    vals[2, 1] = 0.0
    w = trapezoid_weights(0, 1, 50)
    out = batch_gram_schmidt(vals, w)
    for b in (0, 1, 3):
        assert np.allclose(out[b], gram_schmidt_values(vals[b], w), atol=1e-12)
    assert np.all(out[2, 1] == 0)


# -- normal CDF -------------------------------------------------------------------

def _phi_series(x, terms=80):
    """Maclaurin series of the standard normal CDF (oracle)."""
    s, term = 0.0, x
    for k in range(terms):
        s += term / (2 * k + 1)
        term *= -x * x / (2 * (k + 1))
    return 0.5 + s / math.sqrt(2 * math.pi)


def test_norm_cdf_values():
    assert norm_cdf(0.0) == 0.5
    assert _phi_series(1.96) == pytest.approx(0.9750021, abs=1e-7)
    assert norm_cdf(1.96) == pytest.approx(0.9750021, abs=1e-6)


@given(st.floats(-6, 6))
def test_norm_cdf_series_and_symmetry(x):
    assert abs(norm_cdf(x) - _phi_series(x)) <= 1e-7
    assert norm_cdf(x) + norm_cdf(-x) == pytest.approx(1.0, abs=1e-12)


def test_norm_cdf_monotone():
    x = np.linspace(-10, 10, 10001)
    assert np.all(np.diff(norm_cdf(x)) >= 0)
