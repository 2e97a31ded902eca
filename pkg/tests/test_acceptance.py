"""Acceptance criteria, one test per criterion, each printing a PASS line.

Monte Carlo checks run at their stated sizes with pinned seeds; stated
tolerances are asserted exactly as given.  Criterion 2 is the heavy one
(three bath sizes with 10^4 trajectories each); its wall-clock budget is
asserted alongside the statistical checks.
"""

import math
import time

import numpy as np
from scipy import stats as sps

from anodiff import cli_io, kfp, limit_gauss, mass_laws, particle_sim, stats, superstat
from anodiff.params import SystemConfig, derive_constants
from anodiff.rng import stream


def report(num, name, detail):
    print(f"\nACCEPTANCE {num} ({name}): PASS - {detail}")


def test_criterion_1_limit_covariance():
    t_start = time.time()
    grid = np.linspace(1.0 / 32, 1.0, 32)
    model = limit_gauss.CovarianceModel.from_family("stable_power", {"H": 0.75}, grid)
    ens = limit_gauss.sample_limit_paths(model, 10**4, 1)
    C = limit_gauss.covariance_matrix(model)
    cov, se = stats.empirical_cov(ens, grid, observable="Z")
    maxz = float(np.max(np.abs(cov - C) / se))
    elapsed = time.time() - t_start
    assert maxz < 3.0, maxz
    assert elapsed < 60.0, elapsed
    report(1, "limit covariance", f"max |z| = {maxz:.2f} over 32x32 grid, {elapsed:.1f}s")


def test_criterion_2_dynamical_convergence():
    t_start = time.time()
    a, b, gamma, M = 0.74, 0.01, 10.0, 0.1
    delta = 2 * (a - b) - 1
    K = 2.0 / gamma**2  # limit variance at t0 = 1 (v(t) = t)
    rel_errs = []
    for N in (2**8, 2**10, 2**12):
        law = mass_laws.make_mass_law("dirac_npower", {}, N, delta=delta)
        cfg = SystemConfig(M=M, gamma=gamma, a=a, b=b, d=law.meta.d, delta=law.meta.delta,
                           C_delta=law.meta.C_delta, N=N, t0=1.0, n_steps=256, seed=9000)
        ens = particle_sim.simulate_chain(cfg, law, 10**4, 9000)
        x2 = ens["X"][:, -1] ** 2
        z2 = ens["Ztilde"][:, -1] ** 2
        # control variate: closed-form E[Ztilde^2] for the Dirac mass
        m = law.atom
        EZ2 = K * (cfg.t0 - (1 - math.exp(-gamma * m * cfg.t0)) / (gamma * m))
        c = np.cov(x2, z2)[0, 1] / np.var(z2)
        est = float(x2.mean() - c * (z2.mean() - EZ2))
        rel_errs.append(est / (K * cfg.t0) - 1.0)
    elapsed = time.time() - t_start
    mags = [abs(e) for e in rel_errs]
    assert mags[0] > mags[1] > mags[2], rel_errs  # monotonically closer
    assert mags[2] < 0.05, rel_errs
    assert elapsed < 1200.0, elapsed
    report(2, "dynamical convergence",
           "Var(X_1)/2D-1 = " + ", ".join(f"{e:+.3%}" for e in rel_errs)
           + f"; {elapsed:.0f}s")


def test_criterion_3_fbm_emergence():
    # particle system at N = 2^12
    N = 2**12
    law = mass_laws.make_mass_law("stable_power", {"H": 0.75}, N, d=0.2, delta=0.1)
    cfg = SystemConfig(M=0.1, gamma=1.3, a=0.8, b=0.25, C_beta=0.2, d=0.2, delta=0.1,
                       C_delta=1.0, N=N, t0=12.0, n_steps=2048, seed=777)
    ens = particle_sim.simulate_full_system(cfg, law, 800, 777)
    dt = cfg.t0 / cfg.n_steps
    lag_idx = np.unique(np.rint(np.geomspace(1.0, 10.0, 9) / dt).astype(int))
    lags = lag_idx * dt
    curve = stats.msd(ens, lags, observable="X")
    slope_p, se_p = stats.fit_exponent(curve, (lags[0], lags[-1]))
    assert abs(slope_p - 1.5) < 0.1, (slope_p, se_p)

    # the same estimator on exact limit samples
    grid = np.linspace(0.0, 12.0, 257)[1:]
    model = limit_gauss.CovarianceModel.from_family(
        "stable_power", {"H": 0.75}, grid, gamma=1.3, C_beta=0.2)
    lens = limit_gauss.sample_limit_paths(model, 10**4, 778)
    dtl = 12.0 / 256
    lag_idx_l = np.unique(np.rint(np.geomspace(1.0, 10.0, 9) / dtl).astype(int))
    lcurve = stats.msd(lens, lag_idx_l * dtl, observable="Z")
    slope_l, se_l = stats.fit_exponent(lcurve, (lag_idx_l[0] * dtl, lag_idx_l[-1] * dtl))
    assert abs(slope_l - 1.5) < 0.05, (slope_l, se_l)
    report(3, "fBm emergence",
           f"particle slope {slope_p:.3f}+-{se_p:.3f}, limit slope {slope_l:.3f}+-{se_l:.3f}")


def test_criterion_4_approximation_chain_rates():
    cfg = SystemConfig(M=1.0, gamma=8.0, a=0.79, b=0.05, d=-0.24, delta=0.48,
                       C_delta=1.0, N=64, t0=3.0, n_steps=1024, seed=2718)
    rep = stats.convergence_sweep(cfg, {"family": "dirac_npower", "params": {}, "delta": 0.48},
                                  [2**k for k in range(6, 13)], n_traj=256, seed=2718,
                                  n_resamples=4)
    target_chain = cfg.a - 1.0
    assert abs(rep.slope_chain[0] - target_chain) < 0.15, rep.slope_chain
    bound_full = rep.theory_full_bound
    assert rep.slope_full[0] <= bound_full + 0.15, (rep.slope_full, bound_full)
    report(4, "approximation-chain rates",
           f"chain slope {rep.slope_chain[0]:+.3f} (target {target_chain:+.2f}+-0.15), "
           f"full slope {rep.slope_full[0]:+.3f} (bound {bound_full:+.2f}+0.15)")


def test_criterion_5_crossover_regimes():
    cases = [
        ("tempered_stable", {"H": 0.75}, 2.0, 1.5),
        ("exponential_levy", {}, 2.0, 1.0),
        ("power_mixture", {"H_list": (0.6, 0.9)}, 1.2, 1.8),
    ]
    lines = []
    for i, (fam, prm, small_target, large_target) in enumerate(cases):
        slopes = []
        for j, (t0, npts, window) in enumerate([(0.02, 128, (1e-3, 1e-2)),
                                                (2000.0, 256, (100.0, 1000.0))]):
            grid = np.linspace(0.0, t0, npts + 1)[1:]
            model = limit_gauss.CovarianceModel.from_family(fam, prm, grid)
            ens = limit_gauss.sample_limit_paths(model, 4000, 500 + 10 * i + j)
            dt = t0 / npts
            lag_idx = np.unique(np.rint(np.geomspace(window[0], window[1], 9) / dt).astype(int))
            lag_idx = lag_idx[lag_idx >= 1]
            curve = stats.msd(ens, lag_idx * dt, observable="Z")
            slope, _ = stats.fit_exponent(curve, (lag_idx[0] * dt, lag_idx[-1] * dt))
            slopes.append(slope)
        assert abs(slopes[0] - small_target) < 0.1, (fam, slopes)
        assert abs(slopes[1] - large_target) < 0.1, (fam, slopes)
        lines.append(f"{fam}: {slopes[0]:.2f}->{slopes[1]:.2f}")
    report(5, "crossover regimes", "; ".join(lines))


def test_criterion_6_superstatistics():
    grid = np.array([0.5, 1.0])
    mix = superstat.MixingLaw(superstat.ALaw("exponential", (1.0,)),
                              superstat.HLaw("degenerate", (0.75,)))
    ens = superstat.sample_superstat_paths(superstat.SuperstatModel(mixing=mix),
                                           grid, 10**4, 41)
    rep = stats.gaussianity_test(ens, 1.0, observable="Z")
    assert abs(rep.kurtosis - 6.0) < 3.0 * rep.kurtosis_se, (rep.kurtosis, rep.kurtosis_se)

    mix0 = superstat.MixingLaw(superstat.ALaw("degenerate", (1.0,)),
                               superstat.HLaw("degenerate", (0.75,)))
    ens0 = superstat.sample_superstat_paths(superstat.SuperstatModel(mixing=mix0),
                                            grid, 10**4, 44)
    rep0 = stats.gaussianity_test(ens0, 1.0, observable="Z")
    assert not rep0.rejected(0.01), rep0.ks_pvalue
    report(6, "superstatistics",
           f"Exp(1) A: kurtosis {rep.kurtosis:.2f}+-{rep.kurtosis_se:.2f} (target 6); "
           f"degenerate A: KS p = {rep0.ks_pvalue:.3f}")


def test_criterion_7_kfp_consistency():
    mix = superstat.MixingLaw(superstat.ALaw("exponential", (1.0,)),
                              superstat.HLaw("degenerate", (0.75,)))
    model = kfp.SymbolModel(mixing=mix, D=2.0)
    t = 1.0
    L = kfp.suggest_half_width(model, t, u0_std=0.4, factor=16.0)
    x = np.linspace(-L, L, 4096)
    u0 = kfp.DensityField(x, kfp.gaussian_density(x, 0.4))
    ut = kfp.evolve_density(model, u0, t)
    assert abs(ut.mass() - u0.mass()) < 1e-8

    sup = superstat.SuperstatModel(mixing=mix)
    ens = superstat.sample_superstat_paths(sup, np.array([t]), 10**5, 99)
    samples = ens["Z"][:, -1] + 0.4 * stream(100, 0).standard_normal(10**5)
    edges = np.linspace(-L, L, 65)
    hist, _ = np.histogram(samples, bins=edges)
    p_mc = hist / samples.size
    p_spec = np.empty(64)
    for i in range(64):
        sel = (x >= edges[i]) & (x <= edges[i + 1])
        p_spec[i] = np.trapezoid(ut.values[sel], x[sel])
    tv = 0.5 * float(np.abs(p_mc - p_spec).sum()) + 0.5 * abs(1.0 - p_spec.sum())
    assert tv < 0.02, tv

    rng = stream(71, 7)
    max_gap = 0.0
    for _ in range(10):
        s = 0.3 + 0.7 * rng.random()
        p = 0.1 + 2.9 * rng.random()
        h = 1e-4
        fd = (math.log(kfp.symbol_psi(model, s + h, p))
              - math.log(kfp.symbol_psi(model, s - h, p))) / (2 * h)
        max_gap = max(max_gap, abs(fd - kfp.kernel_symbol(model, s, p)))
    assert max_gap < 1e-6, max_gap
    report(7, "KFP consistency",
           f"TV = {tv:.4f} (< 0.02), mass drift {abs(ut.mass()-u0.mass()):.1e}, "
           f"symbol identity gap {max_gap:.1e}")


def test_criterion_8_oracle_equivalence():
    grid = np.linspace(1.0 / 32, 1.0, 32)
    model = limit_gauss.CovarianceModel.from_family("stable_power", {"H": 0.75}, grid)
    z = limit_gauss.sample_limit_paths(model, 10**4, 81)["Z"][:, -1]
    scale = math.sqrt(model.K * float(model.v.v(1.0)))
    b = scale * limit_gauss.sample_fbm_direct(0.75, grid, 10**4, 82)["B"][:, -1]
    res = sps.ks_2samp(z, b)
    assert res.pvalue > 0.01, res.pvalue
    report(8, "oracle equivalence", f"two-sample KS p = {res.pvalue:.3f}")


def test_criterion_9_selftest():
    t_start = time.time()
    rc = cli_io.run_command(["selftest"])
    elapsed = time.time() - t_start
    assert rc == 0
    assert elapsed < 300.0, elapsed
    report(9, "selftest", f"exit 0 in {elapsed:.1f}s (serial)")
