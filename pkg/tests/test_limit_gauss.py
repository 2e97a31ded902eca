import math

import numpy as np
import pytest
from scipy import stats as sps
from scipy.special import gamma as gamma_fn

from anodiff import limit_gauss, stats
from anodiff.mass_laws import variance_fn


def fbm_model(grid, H=0.75, K=2.0):
    return limit_gauss.CovarianceModel(v=variance_fn("stable_power", {"H": H}, 1.0),
                                       K=K, grid=grid)


def test_scalar_grid_value():
    C = limit_gauss.covariance_matrix(fbm_model(np.array([1.0])))
    assert math.isclose(C[0, 0], 4.726543602414709, rel_tol=1e-13)


def test_wiener_kernel_is_min():
    grid = np.linspace(0.1, 2.0, 24)
    model = limit_gauss.CovarianceModel(v=variance_fn("dirac_npower", {}, 1.0),
                                        K=1.3, grid=grid)
    C = limit_gauss.covariance_matrix(model)
    assert np.allclose(C, 1.3 * np.minimum(grid[:, None], grid[None, :]), atol=1e-15)


def test_fbm_kernel_algebraic_identity():
    H = 0.75
    grid = np.linspace(0.05, 1.5, 31)
    C = limit_gauss.covariance_matrix(fbm_model(grid, H=H))
    Dp = gamma_fn(2 - 2 * H) / (2 * H * (2 * H - 1))  # K/2 * c_H with K = 2
    T, S = grid[:, None], grid[None, :]
    ref = Dp * (T ** (2 * H) + S ** (2 * H) - np.abs(T - S) ** (2 * H))
    assert np.max(np.abs(C - ref)) <= 1e-12 * np.max(np.abs(ref))


def test_diagonal_is_K_v():
    grid = np.linspace(0.2, 1.0, 5)
    model = fbm_model(grid, K=3.7)
    C = limit_gauss.covariance_matrix(model)
    assert np.allclose(np.diag(C), 3.7 * model.v.v(grid), rtol=1e-14)


def test_self_similarity_surrogate():
    H = 0.75
    grid = np.linspace(0.1, 1.0, 16)
    C = limit_gauss.covariance_matrix(fbm_model(grid, H=H))
    for c in (0.5, 2.0):
        Cc = limit_gauss.covariance_matrix(fbm_model(c * grid, H=H))
        assert np.max(np.abs(Cc - c ** (2 * H) * C)) <= 1e-12 * np.max(np.abs(Cc))


def test_grid_validation():
    with pytest.raises(ValueError):
        limit_gauss.CovarianceModel(v=variance_fn("stable_power", {"H": 0.75}, 1.0),
                                    K=2.0, grid=np.array([0.0, 0.5]))
    with pytest.raises(ValueError):
        limit_gauss.CovarianceModel(v=variance_fn("stable_power", {"H": 0.75}, 1.0),
                                    K=2.0, grid=np.array([0.5, 0.4]))


@pytest.mark.parametrize("fam,prm", [
    ("stable_power", {"H": 0.75}),
    ("stable_power", {"H": 0.95}),
    ("power_mixture", {"H_list": (0.6, 0.9)}),
    ("tempered_stable", {"H": 0.75}),
    ("exponential_levy", {}),
    ("dirac_npower", {}),
    ("dirac_one", {}),
])
def test_psd_on_512_grid(fam, prm):
    n = 512
    grid = np.linspace(1.0 / n, 1.0, n)
    model = limit_gauss.CovarianceModel(v=variance_fn(fam, prm, 1.0), K=2.0, grid=grid)
    L, jitter = limit_gauss.cholesky_with_jitter(limit_gauss.covariance_matrix(model))
    C = limit_gauss.covariance_matrix(model)
    assert jitter <= 1e-10 * np.trace(C) / n


def test_factorization_rejects_invalid_kernel():
    # a decreasing "variance" makes the kernel indefinite
    bad = variance_fn("stable_power", {"H": 0.75}, 1.0)
    from anodiff.mass_laws import VarianceFn

    vf = VarianceFn("bad", {}, 1.0, lambda t: -np.asarray(t) ** 2.0, bad.vdot, None)
    model = limit_gauss.CovarianceModel(v=vf, K=2.0, grid=np.linspace(0.1, 1.0, 12))
    with pytest.raises(limit_gauss.CovarianceFactorizationError):
        limit_gauss.cholesky_with_jitter(limit_gauss.covariance_matrix(model))


def test_paths_start_at_zero_and_grid_prepends_zero():
    grid = np.linspace(0.125, 1.0, 8)
    ens = limit_gauss.sample_limit_paths(fbm_model(grid), 32, 9)
    assert ens.grid[0] == 0.0 and np.allclose(ens.grid[1:], grid)
    assert np.all(ens["Z"][:, 0] == 0.0)


def test_empirical_covariance_matches_analytic():
    grid = np.linspace(0.125, 1.0, 8)
    model = fbm_model(grid)
    ens = limit_gauss.sample_limit_paths(model, 10**4, 2024)
    C = limit_gauss.covariance_matrix(model)
    cov, se = stats.empirical_cov(ens, grid, observable="Z")
    assert np.max(np.abs(cov - C) / se) < 3.5


def test_stationary_increments():
    grid = np.linspace(0.0625, 1.0, 16)
    model = fbm_model(grid)
    n = 10**4
    ens = limit_gauss.sample_limit_paths(model, n, 7)
    paths = ens["Z"]
    h = grid[1] - grid[0]
    target = model.K * float(model.v.v(2 * h))  # 2 D v(lag), K = 2 D
    for j0 in (0, 5, 11):
        d = paths[:, j0 + 2] - paths[:, j0]
        v = d.var(ddof=1)
        assert abs(v - target) < 3.5 * v * math.sqrt(2.0 / n), (j0, v, target)


def test_sampled_marginals_gaussian():
    grid = np.linspace(0.25, 1.0, 4)
    ens = limit_gauss.sample_limit_paths(fbm_model(grid), 10**4, 5)
    rep = stats.gaussianity_test(ens, 1.0, observable="Z")
    assert abs(rep.kurtosis - 3.0) < 3.5 * rep.kurtosis_se
    assert not rep.rejected(0.01)


def test_mixture_increment_variance_slopes():
    # small lags scale like 2*H1, large lags like 2*HK
    for (t0, npts, window, target) in [(0.02, 128, (1e-3, 1e-2), 1.2),
                                       (2000.0, 256, (100.0, 1000.0), 1.8)]:
        grid = np.linspace(0.0, t0, npts + 1)[1:]
        model = limit_gauss.CovarianceModel(
            v=variance_fn("power_mixture", {"H_list": (0.6, 0.9)}, 1.0), K=2.0, grid=grid)
        ens = limit_gauss.sample_limit_paths(model, 4000, 555)
        dt = t0 / npts
        lags = np.unique(np.rint(np.geomspace(window[0], window[1], 9) / dt).astype(int))
        lags = lags[lags >= 1] * dt
        curve = stats.msd(ens, lags, observable="Z")
        slope, _ = stats.fit_exponent(curve, (lags[0], lags[-1]))
        assert abs(slope - target) < 0.1, (target, slope)


# ------------------------------------------------------------ direct fBm


def test_fbm_direct_brownian_increments_uncorrelated():
    grid = np.linspace(1.0 / 64, 1.0, 64)
    n = 8000
    b = limit_gauss.sample_fbm_direct(0.5, grid, n, 77)["B"]
    inc = np.diff(b, axis=1)
    r1 = np.mean(inc[:, :-1] * inc[:, 1:]) / np.mean(inc**2)
    assert abs(r1) < 3.0 / math.sqrt(inc[:, :-1].size)


def test_fbm_direct_variance_growth():
    grid = np.linspace(1.0 / 32, 1.0, 32)
    n = 10**4
    b = limit_gauss.sample_fbm_direct(0.75, grid, n, 78)["B"]
    for j in (7, 31):
        t = grid[j]
        v = b[:, j + 1].var(ddof=1)
        assert abs(v - t**1.5) < 3.5 * t**1.5 * math.sqrt(2.0 / n)


def test_fbm_direct_rejects_bad_H():
    with pytest.raises(ValueError):
        limit_gauss.sample_fbm_direct(1.2, np.linspace(0.1, 1, 4), 2, 0)


def test_direct_fbm_equals_variance_route_in_distribution():
    # oracle equivalence: two independent construction routes, same law
    grid = np.linspace(1.0 / 32, 1.0, 32)
    n = 10**4
    model = fbm_model(grid)
    z = limit_gauss.sample_limit_paths(model, n, 81)["Z"][:, -1]
    scale = math.sqrt(model.K * float(model.v.v(1.0)))
    b = scale * limit_gauss.sample_fbm_direct(0.75, grid, n, 82)["B"][:, -1]
    assert sps.ks_2samp(z, b).pvalue > 0.01
