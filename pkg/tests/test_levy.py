import numpy as np
import pytest

from levytransport.covariance import MaternSpec, nystrom_eigendecomposition
from levytransport.levy import (
    LevySampler,
    NIGParams,
    char_function_gh,
    char_function_nig,
    empirical_char_function,
    field_increment,
    sample_ig,
)


def test_nig_params_validation():
    with pytest.raises(ValueError):
        NIGParams(alpha=-1.0, delta=1.0, mu=[0.0], theta=[0.0], gamma_mat=[[1.0]])
    with pytest.raises(ValueError):
        # theta' Gamma theta >= alpha^2
        NIGParams(alpha=1.0, delta=1.0, mu=[0.0], theta=[2.0], gamma_mat=[[1.0]])
    with pytest.raises(ValueError):
        NIGParams(
            alpha=10.0, delta=1.0, mu=[0.0, 0.0], theta=[0.0], gamma_mat=np.eye(2)
        )


def test_standard_params():
    p = NIGParams.standard(3)
    assert p.n_modes == 3
    assert p.variance_scale() == pytest.approx(0.1)


def test_sample_ig_moments():
    rng = np.random.default_rng(0)
    # IG(mu, lam) with mu = delta t / gamma = 0.1, lam = (delta t)^2 = 1
    draws = sample_ig(rng, 0.1, 1.0, 100000)
    mean, var = 0.1, 0.1**3 / 1.0
    se_mean = draws.std(ddof=1) / np.sqrt(draws.size)
    assert abs(draws.mean() - mean) < 3 * se_mean
    m4 = ((draws - draws.mean()) ** 4).mean()
    se_var = np.sqrt((m4 - draws.var() ** 2) / draws.size)
    assert abs(draws.var(ddof=1) - var) < 3 * se_var


def test_sample_ig_degenerate_limit():
    rng = np.random.default_rng(1)
    draws = sample_ig(rng, 1e-8 / 10.0, 1e-16, 1001)
    assert np.median(draws) < 1e-6
    assert np.all(draws > 0.0)


def test_sample_ig_rejects_bad_params():
    rng = np.random.default_rng(2)
    with pytest.raises(ValueError):
        sample_ig(rng, -1.0, 1.0, 10)


def test_increments_reproducible():
    sampler = LevySampler(NIGParams.standard(4), seed=42)
    a = sampler.increments(sampler.stream(3), 0.01, 50)
    b = sampler.increments(sampler.stream(3), 0.01, 50)
    assert np.array_equal(a, b)
    c = sampler.increments(sampler.stream(4), 0.01, 50)
    assert not np.array_equal(a, c)


def test_increments_shape_and_dt_validation():
    sampler = LevySampler(NIGParams.standard(4), seed=0)
    inc = sampler.increments(sampler.stream(0), 0.5, 7)
    assert inc.shape == (7, 4)
    with pytest.raises(ValueError):
        sampler.increments(sampler.stream(0), 0.0, 7)


def test_empirical_cf_matches_closed_form():
    p = NIGParams.standard(1)
    sampler = LevySampler(p, seed=7, normalize=False)
    draws = sampler.increments(sampler.stream(0), 1.0, 50000)[:, 0]
    u = np.linspace(-5.0, 5.0, 11)
    emp = empirical_char_function(draws, u)
    theo = char_function_nig(p, u, t=1.0)
    stderr = np.sqrt((1.0 - np.abs(theo) ** 2) / draws.size)
    assert np.all(np.abs(emp - theo) <= 3.0 * stderr + 1e-12)


def test_gh_reduces_to_nig():
    p = NIGParams.standard(1, alpha=10.0, delta=1.0)
    u = np.linspace(-4.0, 4.0, 9)
    nig = char_function_nig(p, u, t=1.0)
    gh = char_function_gh(u, lam=-0.5, alpha=10.0, beta=0.0, delta=1.0)
    assert np.allclose(nig, gh, atol=1e-12)


def test_normalized_variance_is_t():
    sampler = LevySampler(NIGParams.standard(1), seed=9, normalize=True)
    for t in (0.5, 2.0):
        draws = sampler.increments(sampler.stream(0), t, 40000)[:, 0]
        m4 = ((draws - draws.mean()) ** 4).mean()
        se = np.sqrt((m4 - draws.var() ** 2) / draws.size)
        assert abs(draws.var(ddof=1) - t) < 3 * se


def test_shared_subordinator_dependence():
    # coordinates are uncorrelated but their squares are positively
    # correlated through the common inverse Gaussian time change
    sampler = LevySampler(NIGParams.standard(2, alpha=2.0), seed=11, normalize=False)
    inc = sampler.increments(sampler.stream(0), 1.0, 60000)
    corr = np.corrcoef(inc[:, 0], inc[:, 1])[0, 1]
    corr_sq = np.corrcoef(inc[:, 0] ** 2, inc[:, 1] ** 2)[0, 1]
    assert abs(corr) < 0.02
    assert corr_sq > 0.05


def test_skewed_increments_have_drift():
    p = NIGParams(
        alpha=10.0, delta=1.0, mu=[0.0], theta=[3.0], gamma_mat=[[1.0]]
    )
    sampler = LevySampler(p, seed=13, normalize=False)
    draws = sampler.increments(sampler.stream(0), 1.0, 50000)[:, 0]
    # mean of NIG(alpha, beta, delta t) is delta t beta / sqrt(alpha^2 - beta^2)
    expected = 1.0 * 3.0 / np.sqrt(100.0 - 9.0)
    se = draws.std(ddof=1) / np.sqrt(draws.size)
    assert abs(draws.mean() - expected) < 4 * se


def test_field_increment_assembly():
    eig = nystrom_eigendecomposition(MaternSpec(nu=1.0, rho=0.25), n_quad=64, n_modes=6)
    x = np.linspace(0.0, 1.0, 9)
    inc = np.array([1.0, -2.0, 0.5])
    field = field_increment(eig, inc, x)
    expected = eig.eval(x)[:, :3] @ (np.sqrt(eig.eigenvalues[:3]) * inc)
    assert np.allclose(field.values, expected)
    assert field.to_csv().startswith("x,value\n")
    with pytest.raises(ValueError):
        field_increment(eig, np.ones(7), x)
