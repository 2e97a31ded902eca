import math

import numpy as np
import pytest

from anodiff import kfp, superstat
from anodiff.mass_laws import variance_fn
from anodiff.rng import stream


def sym_model(a_kind="degenerate", a_par=(1.0,), h_kind="degenerate", h_par=(0.75,), D=2.0):
    mix = superstat.MixingLaw(superstat.ALaw(a_kind, a_par), superstat.HLaw(h_kind, h_par))
    return kfp.SymbolModel(mixing=mix, D=D)


def gaussian_field(n=2048, L=20.0, std=0.4):
    x = np.linspace(-L, L, n)
    return kfp.DensityField(x, kfp.gaussian_density(x, std))


# ------------------------------------------------------------- DensityField


def test_density_field_validation():
    x = np.linspace(-5, 5, 101)
    with pytest.raises(ValueError):
        kfp.DensityField(x, np.full(101, -1.0))
    with pytest.raises(ValueError):
        kfp.DensityField(x, kfp.gaussian_density(x, 1.0) * 2.0)  # mass 2
    f = kfp.DensityField(x, kfp.gaussian_density(x, 1.0))
    assert abs(f.mass() - 1.0) < 1e-6


# ------------------------------------------------------------------- symbol


def test_psi_at_zero_frequency_is_one():
    model = sym_model("exponential", (1.0,))
    for t in (0.0, 0.3, 1.0, 2.5):
        assert math.isclose(float(kfp.symbol_psi(model, t, 0.0)), 1.0, rel_tol=1e-12)


def test_psi_bounded_by_one():
    model = sym_model("lognormal", (0.1, 0.4))
    p = np.linspace(-10, 10, 41)
    for t in (0.2, 1.0):
        psi = kfp.symbol_psi(model, t, p)
        assert np.all(psi <= 1.0 + 1e-12) and np.all(psi > 0.0)


def test_psi_degenerate_closed_form():
    model = sym_model("degenerate", (1.5,))
    vf = model.variance_for((0.75,))
    p = np.linspace(-5, 5, 21)
    t = 0.8
    ref = np.exp(-1.5 * 2.0 * float(vf.v(t)) * p**2 / 2.0)
    assert np.max(np.abs(kfp.symbol_psi(model, t, p) - ref)) < 1e-13


def test_psi_exponential_closed_form():
    theta = 2.0
    model = sym_model("exponential", (theta,))
    vf = model.variance_for((0.75,))
    t = 0.8
    p = np.linspace(-5, 5, 21)
    ref = 1.0 / (1.0 + theta * 2.0 * float(vf.v(t)) * p**2 / 2.0)
    assert np.max(np.abs(kfp.symbol_psi(model, t, p) - ref)) < 1e-13


def test_kernel_symbol_degenerate_collapse():
    a = 1.5
    model = sym_model("degenerate", (a,))
    vf = model.variance_for((0.75,))
    for s, p in ((0.7, 1.3), (0.4, 2.0)):
        ref = -(p**2 / 2.0) * a * 2.0 * float(vf.vdot(s))
        assert math.isclose(kfp.kernel_symbol(model, s, p), ref, rel_tol=1e-12)


def test_kernel_symbol_zero_at_zero_frequency():
    assert kfp.kernel_symbol(sym_model("exponential", (1.0,)), 0.5, 0.0) == 0.0


def test_psi_kernel_consistency_identity():
    # d/dt log Psi(t, p) at t = s equals the kernel symbol, to 1e-6
    rng = stream(17, 0)
    models = [
        sym_model("exponential", (1.0,)),
        sym_model("degenerate", (0.7,)),
        kfp.SymbolModel(mixing=superstat.MixingLaw(
            superstat.ALaw("exponential", (0.7,)),
            superstat.HLaw("uniform", (0.6, 0.9))), D=2.0),
        kfp.SymbolModel(mixing=superstat.MixingLaw(
            superstat.ALaw("lognormal", (0.0, 0.3)),
            superstat.HLaw("degenerate", (0.8,))), D=1.5),
    ]
    count = 0
    for model in models:
        for _ in range(3):
            s = 0.3 + 0.7 * rng.random()
            p = 0.1 + 2.9 * rng.random()
            h = 1e-4
            fd = (math.log(kfp.symbol_psi(model, s + h, p))
                  - math.log(kfp.symbol_psi(model, s - h, p))) / (2 * h)
            assert abs(fd - kfp.kernel_symbol(model, s, p)) < 1e-6, (s, p)
            count += 1
    assert count >= 10


# ------------------------------------------------------------------- evolve


def test_evolve_identity_at_t_zero():
    model = sym_model()
    u0 = gaussian_field()
    out = kfp.evolve_density(model, u0, 0.0)
    assert np.max(np.abs(out.values - u0.values)) < 1e-12


def test_evolve_gaussian_convolution_identity():
    a = 1.0
    model = sym_model("degenerate", (a,))
    vf = model.variance_for((0.75,))
    L = kfp.suggest_half_width(model, 1.0, u0_std=0.4)
    x = np.linspace(-L, L, 4096)
    u0 = kfp.DensityField(x, kfp.gaussian_density(x, 0.4))
    ut = kfp.evolve_density(model, u0, 1.0)
    ref = kfp.gaussian_density(x, math.sqrt(0.4**2 + a * 2.0 * float(vf.v(1.0))))
    assert np.trapezoid(np.abs(ut.values - ref), x) < 1e-6


def test_evolve_conserves_mass():
    model = sym_model("exponential", (1.0,))
    L = kfp.suggest_half_width(model, 1.0, u0_std=0.4, factor=16.0)
    x = np.linspace(-L, L, 4096)
    u0 = kfp.DensityField(x, kfp.gaussian_density(x, 0.4))
    ut = kfp.evolve_density(model, u0, 1.0)
    assert abs(ut.mass() - u0.mass()) < 1e-8


def test_evolve_preserves_even_symmetry():
    model = sym_model("exponential", (1.0,))
    L = kfp.suggest_half_width(model, 0.7, u0_std=0.5, factor=16.0)
    x = np.linspace(-L, L, 2048)
    u0 = kfp.DensityField(x, kfp.gaussian_density(x, 0.5))
    ut = kfp.evolve_density(model, u0, 0.7)
    assert np.max(np.abs(ut.values - ut.values[::-1])) < 1e-10


def test_evolve_refuses_boundary_mass():
    model = sym_model()
    x = np.linspace(-2.0, 2.0, 512)  # Gaussian std 1 has visible boundary mass
    u0 = kfp.DensityField(x, kfp.gaussian_density(x, 1.0) / np.trapezoid(kfp.gaussian_density(x, 1.0), x))
    with pytest.raises(ValueError, match="boundary"):
        kfp.evolve_density(model, u0, 0.5)


def test_variance_growth_matches_total_variance():
    mix = superstat.MixingLaw(superstat.ALaw("exponential", (0.8,)),
                              superstat.HLaw("uniform", (0.6, 0.9)))
    model = kfp.SymbolModel(mixing=mix, D=1.5)
    t = 0.7
    L = kfp.suggest_half_width(model, t, u0_std=0.3, factor=18.0)
    x = np.linspace(-L, L, 4096)
    u0 = kfp.DensityField(x, kfp.gaussian_density(x, 0.3))
    ut = kfp.evolve_density(model, u0, t)
    growth = mix.A_law.mean() * 1.5 * mix.H_law.expect(
        lambda h: float(model.variance_for(h).v(t)))
    assert abs(ut.moment2() - u0.moment2() - growth) < 1e-4


def test_not_a_semigroup_under_mixing():
    model = sym_model("exponential", (1.0,))
    t1, t2 = 0.4, 0.6
    L = kfp.suggest_half_width(model, t1 + t2, u0_std=0.4, factor=16.0)
    x = np.linspace(-L, L, 2048)
    u0 = kfp.DensityField(x, kfp.gaussian_density(x, 0.4))
    oneshot = kfp.evolve_density(model, u0, t1 + t2)
    composed = kfp.evolve_density(model, kfp.evolve_density(model, u0, t1), t2)
    assert np.trapezoid(np.abs(oneshot.values - composed.values), x) > 1e-4


def test_semigroup_recovers_for_degenerate_additive_v():
    wiener = lambda h: variance_fn("dirac_npower", {}, 1.0)  # v(t) = t, additive
    mix = superstat.MixingLaw(superstat.ALaw("degenerate", (1.0,)),
                              superstat.HLaw("degenerate", (0.75,)))
    model = kfp.SymbolModel(mixing=mix, D=2.0, v_of_h=wiener)
    t1, t2 = 0.4, 0.6
    x = np.linspace(-25.0, 25.0, 2048)
    u0 = kfp.DensityField(x, kfp.gaussian_density(x, 0.4))
    oneshot = kfp.evolve_density(model, u0, t1 + t2)
    composed = kfp.evolve_density(model, kfp.evolve_density(model, u0, t1), t2)
    assert np.trapezoid(np.abs(oneshot.values - composed.values), x) < 1e-10


def test_evolved_density_matches_superstat_histogram():
    # spectral result vs Monte Carlo histogram of x0 + sqrt(A) G_1
    model = sym_model("exponential", (1.0,))
    t = 1.0
    L = kfp.suggest_half_width(model, t, u0_std=0.4, factor=16.0)
    x = np.linspace(-L, L, 4096)
    u0 = kfp.DensityField(x, kfp.gaussian_density(x, 0.4))
    ut = kfp.evolve_density(model, u0, t)

    sup_model = superstat.SuperstatModel(
        mixing=model.mixing, sigma=1.0, gamma=1.0, C_beta=1.0, C_delta=1.0)
    ens = superstat.sample_superstat_paths(sup_model, np.array([t]), 10**5, 99)
    samples = ens["Z"][:, -1] + 0.4 * stream(100, 0).standard_normal(10**5)

    edges = np.linspace(-L, L, 65)
    hist, _ = np.histogram(samples, bins=edges)
    p_mc = hist / samples.size
    centers_mass = np.empty(64)
    for i in range(64):
        sel = (x >= edges[i]) & (x <= edges[i + 1])
        centers_mass[i] = np.trapezoid(ut.values[sel], x[sel])
    tv = 0.5 * np.abs(p_mc - centers_mass).sum() + 0.5 * abs(1.0 - centers_mass.sum())
    assert tv < 0.02, tv
