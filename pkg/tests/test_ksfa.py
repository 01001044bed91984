import numpy as np
import pytest
from scipy.spatial.distance import pdist

from conftest import ar_sources
from ssfamon.errors import DegenerateSplitError, NumericalError
from ssfamon.ksfa import (KsfaConfig, KsfaModel, batch_statistics_super, build_super_samples,
                          centered_kernel, fit_ksfa, kernel_residual, median_gamma,
                          out_of_fold_statistics, rbf_kernel, split_threshold,
                          statistics_super, transform)
from ssfamon.partition import SubsetPartition
from ssfamon.sfa import fit_sfa
from ssfamon.data import StandardizedMatrix


@pytest.fixture(scope="module")
def Z():
    rng = np.random.default_rng(7)
    S = ar_sources(300, [0.95, 0.6, 0.0], rng)
    # a nonlinear slow structure plus noise
    return np.column_stack([S[:, 0], np.sin(2 * S[:, 0]) + 0.2 * S[:, 1], S[:, 2]])


@pytest.fixture(scope="module")
def model(Z):
    return fit_ksfa(Z)


def test_median_gamma_and_kernel(Z):
    g = median_gamma(Z)
    assert np.isclose(g, 1 / (2 * np.median(pdist(Z)) ** 2))
    K = rbf_kernel(Z[:5], Z[:4], g)
    ref = np.exp(-g * ((Z[:5, None, :] - Z[None, :4, :]) ** 2).sum(-1))
    assert np.allclose(K, ref, rtol=1e-12)
    with pytest.raises(NumericalError):
        median_gamma(np.ones((5, 2)))


def test_centered_kernel_rows_sum_to_zero(Z):
    Kt, Kdt = centered_kernel(Z, 0.5)
    assert np.allclose(Kt.sum(axis=0), 0, atol=1e-10)
    assert np.allclose(Kt, Kt.T)
    D = np.diff(np.eye(len(Z)), axis=0)
    assert np.allclose(Kdt, D @ Kt @ D.T, atol=1e-10)


def test_degenerate_bandwidth_warns(Z):
    with pytest.warns(RuntimeWarning):
        centered_kernel(Z, 1e-14)


def test_split_threshold_is_max_diagonal_ratio():
    Kt = np.diag([1.0, 2.0, 4.0])
    Kdt = np.diag([3.0, 1.0])
    assert split_threshold(Kt, Kdt) == 3.0


def test_training_features_unit_variance_and_sorted(Z, model):
    S = transform(model, Z)
    assert np.allclose(S.std(axis=0, ddof=1), 1, atol=1e-6)
    assert np.all(np.diff(model.slowness) >= 0)
    sl = (np.diff(S, axis=0) ** 2).sum(0) / ((S - S.mean(0)) ** 2).sum(0)
    assert np.allclose(sl, model.slowness, rtol=1e-6)
    assert 1 <= model.M <= model.n_features


def test_slowest_feature_tracks_slow_source(Z, model):
    s = transform(model, Z)[:, 0]
    assert abs(np.corrcoef(s, Z[:, 0])[0, 1]) > 0.8


def test_energy_truncation_limits_features(Z):
    a = fit_ksfa(Z, KsfaConfig(energy=0.5))
    b = fit_ksfa(Z, KsfaConfig(energy=0.99))
    assert a.n_features < b.n_features
    assert fit_ksfa(Z, KsfaConfig(max_features=3)).n_features == 3


def test_residuals(Z, model):
    rt, rd = kernel_residual(model, Z)
    assert rt.shape == (300,) and rd.shape == (299,)
    assert np.all(rt >= 0) and np.all(rd >= 0)
    assert np.isclose(rt.mean(), model.res_mean_t, rtol=1e-8)
    # far from the data the centred map is minus the mean map, wherever the point is
    far = np.full((1, 3), 50.0)
    r_far, _ = kernel_residual(model, far)
    assert rt.max() < r_far[0] <= 1 + model.total_mean
    assert np.allclose(transform(model, far), transform(model, far + 1.0), atol=1e-10)


def test_full_energy_training_residual_vanishes(Z):
    m = fit_ksfa(Z[:120], KsfaConfig(energy=1.0))
    rt, _ = kernel_residual(m, Z[:120])
    assert np.max(rt) < 1e-6


def test_far_sample_alarms_residual_statistic(Z, model):
    st = batch_statistics_super(model, np.vstack([Z, Z[-1] + 20.0]))
    assert st["T2f"][-1] > 10 * np.quantile(st["T2f"][:-1], 0.99)


def test_online_matches_batch(Z, model):
    b = batch_statistics_super(model, Z)
    for n in (1, 100, 299):
        out = statistics_super(model, Z[n], Z[n - 1])
        assert np.allclose(out, [b["T2s"][n], b["T2f"][n], b["D2s"][n - 1], b["D2f"][n - 1]],
                           rtol=1e-9)
    first = statistics_super(model, Z[0])
    assert first[2] is None and first[3] is None


def test_out_of_fold_shapes(Z, model):
    st = out_of_fold_statistics(Z, KsfaConfig(gamma=model.gamma), folds=5)
    assert st["T2s"].shape == (300,)
    assert st["D2s"].shape == (295,)
    assert all(np.all(v >= 0) for v in st.values())


def test_dict_round_trip(Z, model):
    r = KsfaModel.from_dict(model.to_dict())
    assert np.array_equal(transform(r, Z[:10]), transform(model, Z[:10]))
    assert r.M == model.M and r.res_mean_d == model.res_mean_d


def test_super_samples_layout(rng):
    X = rng.standard_normal((100, 4))
    sub = StandardizedMatrix.from_array(X[:, [0, 2]])
    m = fit_sfa(sub)
    part = SubsetPartition([(0, 2)], (1, 3))
    Zs = build_super_samples(part, [m], X)
    assert Zs.shape == (100, m.M + 2)
    assert np.allclose(Zs[:, :m.M], X[:, [0, 2]] @ m.W[:, :m.M])
    assert np.array_equal(Zs[:, m.M:], X[:, [1, 3]])
    with pytest.raises(ValueError):
        build_super_samples(part, [], X)


def test_bad_inputs(Z):
    with pytest.raises(ValueError):
        fit_ksfa(Z[:5])
    with pytest.raises(DegenerateSplitError):
        fit_ksfa(np.zeros((20, 0)))
    with pytest.raises(ValueError):
        KsfaConfig(energy=0)
    with pytest.raises(ValueError):
        transform(fit_ksfa(Z[:50]), np.zeros((2, 5)))
