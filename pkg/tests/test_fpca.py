import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from commonfpc.core import GridFunction, l2_inner
from commonfpc.exceptions import (
    DegenerateComponentError,
    InsufficientSampleError,
    InvalidBasisError,
    NoFeasibleBandwidthError,
    TooManyComponentsError,
    UndefinedRatioError,
)
from commonfpc.fpca import (
    FpcaFit,
    approximation_error_rho,
    build_dual_matrix,
    cv_select_bandwidth,
    double_center,
    dual_gram,
    fpca_dual,
    fpca_exact,
    prepare_exact,
    variance_explained,
    write_eigenfunctions_csv,
    write_scores_csv,
)
from commonfpc.simulation import SimulationConfig, generate_two_samples
from commonfpc.smoothing import DiscreteCurve

from conftest import assert_score_moments, cos2, grid_fn, sin2


def _random_exact_sample(rng, n, G, rank=None):
    rank = rank or G
    basis = rng.standard_normal((rank, G))
    vals = rng.standard_normal((n, rank)) * np.linspace(3, 0.5, rank) @ basis
    return [GridFunction(0, 1, v) for v in vals]


def _setup_a(n, T, noise_sd=0.0, seed=0):
    return generate_two_samples(SimulationConfig("a", (10, 5, 8, 4), 0.0, n, T, noise_sd, seed))


# -- dual matrix --------------------------------------------------------------------

def test_dual_matrix_identical_curves_zero():
    t = np.arange(1, 51) / 50
    flat = [DiscreteCurve(t, np.full(50, 1.5)) for _ in range(5)]
    g = dual_gram(flat, grid=(0, 1, 500))
    assert np.abs(build_dual_matrix(flat, grid=(0, 1, 500)).entries).max() <= 1e-8 * np.linalg.norm(g)
    wavy = [DiscreteCurve(t, np.sin(2 * np.pi * t)) for _ in range(5)]
    g = dual_gram(wavy, grid=(0, 1, 500), diagonal="naive")
    m = build_dual_matrix(wavy, grid=(0, 1, 500), diagonal="naive").entries
    assert np.abs(m).max() <= 1e-8 * np.linalg.norm(g)


def test_dual_matrix_identical_curves_lag_term():
    # with the lagged diagonal, identical non-constant curves leave an O(1/T) term
    sizes = []
    for T in (50, 100, 200):
        t = np.arange(1, T + 1) / T
        wavy = [DiscreteCurve(t, np.sin(2 * np.pi * t)) for _ in range(5)]
        sizes.append(np.abs(build_dual_matrix(wavy, grid=(0, 1, 2000)).entries).max())
    assert sizes[0] > sizes[1] > sizes[2]
    assert sizes[2] * 200 < 10


def test_dual_matrix_antisymmetric_pair():
    T = 400
    t = np.arange(1, T + 1) / T
    f = np.sqrt(2) * np.sin(2 * np.pi * t)
    m = build_dual_matrix([DiscreteCurve(t, f), DiscreteCurve(t, -f)], grid=(0, 1, 2000)).entries
    assert np.allclose(m, [[1, -1], [-1, 1]], atol=5.0 / T)


def test_dual_matrix_needs_two_curves():
    with pytest.raises(InsufficientSampleError):
        build_dual_matrix([DiscreteCurve([0.2, 0.8], [1.0, 2.0])])


def test_lagged_diagonal_removes_noise_bias():
    rng = np.random.default_rng(7)
    t = np.arange(1, 101) / 100
    lagged, naive = [], []
    for _ in range(100):
        curves = [DiscreteCurve(t, 0.5 * rng.standard_normal(100)) for _ in range(50)]
        lagged.append(np.diag(build_dual_matrix(curves, grid=(0, 1, 500)).entries).mean())
        naive.append(np.diag(build_dual_matrix(curves, grid=(0, 1, 500), diagonal="naive").entries).mean())
    assert abs(np.mean(lagged)) <= 0.1
    assert np.mean(naive) == pytest.approx(0.25, abs=0.05)


def test_double_center_kills_constants():
    g = np.random.default_rng(0).standard_normal((6, 6))
    g = g + g.T
    m = double_center(g)
    assert np.allclose(m.sum(axis=0), 0) and np.allclose(m.sum(axis=1), 0)


# -- exact fits -------------------------------------------------------------------------

def test_exact_two_factor_model():
    rng = np.random.default_rng(11)
    n = 40
    beta = rng.standard_normal((n, 2)) * [3.0, 1.0]
    beta -= beta.mean(axis=0)
    # make the empirical loading covariance diagonal so (v1, v2) are its eigenvalues
    u, s, vt = np.linalg.svd(beta, full_matrices=False)
    beta = u * s
    v1, v2 = s**2 / n
    sample = [GridFunction.from_callable(lambda x, b=b: b[0] * sin2(x) + b[1] * cos2(x), 501) for b in beta]
    fit = fpca_exact(sample, 2)
    assert fit.eigenvalues[0] == pytest.approx(v1, abs=1e-6)
    assert fit.eigenvalues[1] == pytest.approx(v2, abs=1e-6)
    g = fit.eigenfunction(1).values
    target = sin2(fit.mean_fn.nodes)
    assert min(np.abs(g - target).max(), np.abs(g + target).max()) <= 1e-3
    assert_score_moments(fit)


def test_exact_antisymmetric_pair():
    f = grid_fn(lambda t: 3 * t**2 - 1)
    fit = fpca_exact([f, -f], 1)
    assert fit.eigenvalues[0] == pytest.approx(l2_inner(f, f), rel=1e-12)
    g = fit.eigenfunction(1).values
    unit = f.values / f.norm()
    assert min(np.abs(g - unit).max(), np.abs(g + unit).max()) <= 1e-10


def test_exact_identical_curves_degenerate():
    f = grid_fn(sin2)
    fit = fpca_exact([f, f, f], 2)
    assert np.all(fit.eigenvalues == 0)
    assert np.all(fit.degenerate)
    assert np.all(fit.scores == 0)
    with pytest.raises(DegenerateComponentError):
        fit.eigenfunction(1)


def test_too_many_components():
    rng = np.random.default_rng(1)
    with pytest.raises(TooManyComponentsError):
        fpca_exact(_random_exact_sample(rng, 4, 10), 4)


@pytest.mark.parametrize("seed", range(20))
def test_duality_with_covariance_oracle(seed):
    rng = np.random.default_rng(seed)
    n, G = rng.integers(3, 31), rng.integers(5, 31)
    sample = _random_exact_sample(rng, n, G)
    x = np.vstack([f.values for f in sample])
    w = sample[0].weights
    c = np.cov(x.T, bias=True)
    sw = np.sqrt(w)
    oracle = np.sort(np.linalg.eigvalsh(sw[:, None] * c * sw[None, :]))[::-1]
    r0 = min(n - 1, G) - 1 or 1
    fit = fpca_exact(sample, r0)
    assert np.allclose(fit.eigenvalues, oracle[:r0], atol=1e-6 * oracle[0])
    assert_score_moments(fit)


@given(st.integers(3, 15), st.integers(0, 2**32 - 1))
def test_fit_invariants_property(n, seed):
    rng = np.random.default_rng(seed)
    sample = _random_exact_sample(rng, n, 25, rank=3)
    fit = fpca_exact(sample, min(3, n - 1))
    assert_score_moments(fit)
    assert fit.n_clamped >= 0


def test_unorthogonalized_option():
    rng = np.random.default_rng(2)
    fit = fpca_exact(_random_exact_sample(rng, 10, 20), 3, orthogonalize=False)
    assert fit.eigenfunctions[0] is not None


# -- dual (discrete) fits --------------------------------------------------------------

def test_dual_setup_a_eigenvalues():
    data = _setup_a(200, 200, seed=5)
    fit = fpca_dual(data.discrete1, 0.02, 2, grid=(0, 1, 500))
    assert fit.eigenvalues[0] == pytest.approx(10, abs=1.5)
    assert fit.eigenvalues[1] == pytest.approx(5, abs=1.0)
    assert fit.bandwidth_used == 0.02
    assert_score_moments(fit)


def test_dual_matches_exact_eigenfunctions():
    data = _setup_a(100, 200, seed=6)
    dual = fpca_dual(data.discrete1, 0.02, 2, grid=(0, 1, 201))
    exact = fpca_exact(data.grid1, 2)
    nodes = dual.mean_fn.nodes
    for r in (1, 2):
        g_exact = exact.eigenfunction(r)(nodes)
        g = dual.eigenfunction(r).values
        w = dual.mean_fn.weights
        err = min(np.sqrt(w @ (g - g_exact) ** 2), np.sqrt(w @ (g + g_exact) ** 2))
        assert err <= 0.05


def test_dual_zero_variance():
    t = np.arange(1, 31) / 30
    for obs in (np.full(30, 2.0), np.cos(t)):
        curves = [DiscreteCurve(t, obs) for _ in range(4)]
        fit = fpca_dual(curves, 0.1, 2, grid=(0, 1, 100))
        assert np.all(fit.eigenvalues == 0) and np.all(fit.degenerate)
        assert np.all(fit.scores == 0)


def test_bias_correction_trace():
    data = _setup_a(40, 100, noise_sd=0.5, seed=8)
    lag = np.trace(build_dual_matrix(data.discrete1, grid=(0, 1, 500)).entries) / 40
    naive = np.trace(build_dual_matrix(data.discrete1, grid=(0, 1, 500), diagonal="naive").entries) / 40
    assert naive - lag == pytest.approx(0.25, abs=0.06)


# -- cross-validation --------------------------------------------------------------------

def test_cv_single_candidate():
    data = _setup_a(12, 40, seed=1)
    b, crit = cv_select_bandwidth(data.discrete1, 2, [0.1], grid=(0, 1, 200))
    assert b == 0.1 and len(crit) == 1 and np.isfinite(crit[0])


def test_cv_noiseless_prefers_smallest():
    data = _setup_a(30, 200, seed=2)
    b, crit = cv_select_bandwidth(data.discrete1, 2, [0.02, 0.05, 0.1, 0.2], grid=(0, 1, 300))
    assert b == 0.02
    assert np.all(np.diff(crit) > 0)


def test_cv_noisy_not_largest():
    data = _setup_a(30, 100, noise_sd=0.5, seed=3)
    b, crit = cv_select_bandwidth(data.discrete1, 2, [0.02, 0.05, 0.1, 0.2], grid=(0, 1, 300))
    assert b != 0.2


def test_cv_infeasible():
    curves = [DiscreteCurve([0.1, 0.9], [float(i), 1.0]) for i in range(5)]
    with pytest.raises(NoFeasibleBandwidthError):
        cv_select_bandwidth(curves, 1, [0.01], grid=(0, 1, 50))
    b, crit = cv_select_bandwidth(curves, 1, [0.01, 1.0], smoother="nw", grid=(0, 1, 50))
    assert b == 1.0 and crit[0] == np.inf


# -- best-basis error and variance explained --------------------------------------------

def test_rho_full_span_zero_and_empty_basis():
    rng = np.random.default_rng(4)
    sample = _random_exact_sample(rng, 8, 30)
    fit = fpca_exact(sample, 7)
    assert approximation_error_rho(sample, fit.mean_fn, list(fit.eigenfunctions)) <= 1e-6
    assert approximation_error_rho(sample, fit.mean_fn, []) == pytest.approx(fit.spectrum.sum(), rel=1e-8)


def test_rho_best_basis():
    rng = np.random.default_rng(5)
    sample = _random_exact_sample(rng, 20, 40)
    fit = fpca_exact(sample, 3)
    best = approximation_error_rho(sample, fit.mean_fn, list(fit.eigenfunctions))
    w = fit.mean_fn.weights
    from commonfpc.core import gram_schmidt_values
    for _ in range(20):
        q = gram_schmidt_values(rng.standard_normal((3, 40)), w)
        other = [fit.mean_fn.with_values(v) for v in q]
        assert best <= approximation_error_rho(sample, fit.mean_fn, other) + 1e-12


def test_rho_rejects_non_orthonormal():
    f = grid_fn(sin2)
    with pytest.raises(InvalidBasisError):
        approximation_error_rho([f, -f], f * 0, [f * 2])


def test_variance_explained():
    assert variance_explained([10, 5]) == pytest.approx([2 / 3, 1 / 3])
    assert variance_explained([4.0]) == [1.0]
    base = variance_explained([89.9, 7.7, 1.7, 0.6])
    for c in (1e-6, 3.0, 1e5):
        assert variance_explained(np.array([89.9, 7.7, 1.7, 0.6]) * c) == pytest.approx(base, rel=1e-12)
    with pytest.raises(UndefinedRatioError):
        variance_explained([0.0, 0.0])


def test_variance_explained_fit_sums():
    rng = np.random.default_rng(6)
    fit = fpca_exact(_random_exact_sample(rng, 10, 20), 3)
    r = variance_explained(fit, 3)
    assert all(0 <= x <= 1 for x in r) and sum(r) <= 1 + 1e-12
    assert sum(variance_explained(fit)) == pytest.approx(1.0, abs=1e-12)


# -- serialization --------------------------------------------------------------------------

def test_dumps(tmp_path):
    rng = np.random.default_rng(7)
    fit = fpca_exact(_random_exact_sample(rng, 5, 12), 2)
    write_scores_csv(tmp_path / "s.csv", fit)
    write_eigenfunctions_csv(tmp_path / "e.csv", fit)
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "curve_id,r,score" and len(lines) == 1 + 10
    assert (tmp_path / "e.csv").read_text().splitlines()[0] == "t,mean,gamma_1,gamma_2"
    d = fit.to_dict()
    assert len(d["eigenfunctions"]) == 2 and d["n"] == 5


def test_prepare_exact_gram():
    rng = np.random.default_rng(8)
    sample = _random_exact_sample(rng, 4, 9)
    prep = prepare_exact(sample)
    assert prep.gram[1, 2] == pytest.approx(l2_inner(sample[1], sample[2]))
