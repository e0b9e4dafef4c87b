import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chemdim.baselines import (_information_criterion, aic, explained_variance, fif, hfc, kmeanspp,
                               mdl, run_baselines, second_moment_eigvals, variance_threshold)
from chemdim.core import ValidationError
from oracles import aic_mdl_loops, eigvals_naive, kmeans_assign_loops


def _mixture(rng, k, n, p, sigma):
    e = np.abs(rng.standard_normal((k, p)))
    w = rng.dirichlet(np.ones(k), n)
    return w @ e + sigma * rng.standard_normal((n, p))


def test_eigvals_match_svd_route(rng):
    z = rng.standard_normal((40, 6))
    assert np.allclose(second_moment_eigvals(z), eigvals_naive(z), rtol=1e-10)


def test_aic_mdl_match_loop_oracle(rng):
    z = _mixture(rng, 3, 400, 12, 0.01)
    lam = second_moment_eigvals(z)
    ref_aic, ref_mdl = aic_mdl_loops(lam, 400)
    assert aic(z).dimension == int(np.argmin(ref_aic))
    assert mdl(z).dimension == int(np.argmin(ref_mdl))


@pytest.mark.parametrize("k", [2, 3, 5])
def test_information_criteria_on_clean_mixtures(rng, k):
    z = _mixture(rng, k, 2000, 30, 1e-3)
    # AIC's penalty does not grow with n, so it may keep one noise component
    assert aic(z).dimension in (k, k + 1)
    assert mdl(z).dimension == k
    assert fif(z).dimension == k


def test_degenerate_when_n_not_above_p(rng):
    z = _mixture(rng, 3, 40, 40, 1e-3)
    for res in (aic(z), mdl(z), fif(z)):
        assert res.degenerate and res.dimension is None and res.cell == "--"
        assert res.raw is not None
    for res in (aic(z[:20]), mdl(z[:20]), fif(z[:20])):
        assert res.degenerate and res.cell == "--"


def test_fif_rank_one_plus_noise(rng):
    z = np.outer(np.abs(rng.standard_normal(500)) + 1, rng.standard_normal(20))
    z += 1e-3 * rng.standard_normal(z.shape)
    assert fif(z).dimension == 1


def test_hfc_white_noise_is_zero(rng):
    assert hfc(rng.standard_normal((5000, 20))).dimension == 0


def test_hfc_counts_mixture_sources(rng):
    assert hfc(_mixture(rng, 3, 5000, 20, 1e-3)).dimension == 3


def test_hfc_pf_range(rng):
    with pytest.raises(ValidationError):
        hfc(rng.standard_normal((10, 3)), pf=1.5)


def test_variance_threshold_isotropic():
    z = np.vstack([np.eye(40), -np.eye(40)])   # centered, isotropic
    assert variance_threshold(z, 0.95).dimension == 38
    assert explained_variance(z)[-1] == pytest.approx(1.0)


@given(st.integers(0, 2**31), st.floats(0.05, 0.9))
def test_variance_threshold_monotone(seed, f):
    z = np.random.default_rng(seed).standard_normal((15, 6)) * np.arange(1, 7)
    lo = variance_threshold(z, f).dimension
    hi = variance_threshold(z, min(f + 0.09, 0.99)).dimension
    assert hi >= lo
    assert variance_threshold(z, 0.99).dimension >= variance_threshold(z, 0.95).dimension


def test_run_baselines_and_errors(rng):
    z = _mixture(rng, 2, 300, 10, 1e-3)
    res = run_baselines(z)
    assert [r.method for r in res] == ["hfc", "aic", "mdl", "fif", "lambda95", "lambda99"]
    assert all(isinstance(r.to_dict(), dict) for r in res)
    with pytest.raises(ValidationError):
        run_baselines(z, ["nope"])
    with pytest.raises(ValidationError):
        _information_criterion(np.ones((1, 3)), "aic")


def test_kmeans_two_blobs(rng):
    a = rng.standard_normal((50, 2))
    b = rng.standard_normal((60, 2)) + 20
    res = kmeanspp(np.vstack([a, b]), 2, seed=0)
    assert len(set(res.labels[:50])) == 1 and len(set(res.labels[50:])) == 1
    assert res.labels[0] != res.labels[-1]
    assert res.converged


def test_kmeans_single_cluster_is_mean(rng):
    z = rng.standard_normal((30, 4))
    res = kmeanspp(z, 1, seed=3)
    assert np.allclose(res.centroids[0], z.mean(axis=0))


@given(st.integers(0, 2**31), st.integers(1, 6))
def test_kmeans_inertia_non_increasing(seed, k):
    z = np.random.default_rng(seed).standard_normal((40, 3))
    res = kmeanspp(z, k, seed=seed)
    h = np.asarray(res.history)
    assert np.all(np.diff(h) <= 1e-9 * h[0])
    assert np.array_equal(res.labels, kmeans_assign_loops(z, res.centroids)) or not res.converged


def test_kmeans_deterministic_and_empty_cluster_reseed():
    z = np.array([[0.0], [0.0], [0.0], [10.0]])
    a = kmeanspp(z, 3, seed=1)
    b = kmeanspp(z, 3, seed=1)
    assert np.array_equal(a.labels, b.labels)
    assert np.bincount(a.labels, minlength=3).min() >= 1
    with pytest.raises(ValidationError):
        kmeanspp(z, 5)
