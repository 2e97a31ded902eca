"""Built-in invariant checks behind `anodiff selftest`.

Each check is a small deterministic experiment (Monte Carlo checks use
pinned seeds) exercising the documented contracts: closed-form values,
exact-transition properties, determinism, factorization health, estimator
identities, and the solver consistency conditions.  `run_all` prints one
PASS/FAIL line per check and returns overall success.
"""

from __future__ import annotations

import dataclasses
import math
import tempfile
import time
from pathlib import Path

import numpy as np
from scipy import integrate
from scipy import stats as sps
from scipy.special import gamma as gamma_fn

from . import cli_io, kfp, limit_gauss, mass_laws, particle_sim, stats, superstat
from .params import RegimeError, SystemConfig, derive_constants, validate_regime
from .rng import stream

CHECKS = []


def check(name):
    def deco(fn):
        CHECKS.append((name, fn))
        return fn

    return deco


# ---------------------------------------------------------------- params


@check("params/regime-examples")
def _(fast):
    law_a = mass_laws.make_mass_law("stable_power", {"H": 0.75}, 1024, d=0.2, delta=0.1)
    cfg_a = SystemConfig(a=0.8, b=0.25, d=0.2, delta=0.1, N=1024)
    rep = validate_regime(cfg_a, law_a.meta)
    assert rep.passed, str(rep)
    assert validate_regime(cfg_a, law_a.meta) == rep  # pure predicate

    law_b = mass_laws.make_mass_law("tempered_stable", {"H": 0.75}, 1024, d=0.1)
    cfg_b = SystemConfig(a=0.75, b=0.25, d=0.1, delta=0.0, N=1024,
                         C_delta=law_b.meta.C_delta)
    assert validate_regime(cfg_b, law_b.meta).passed

    cfg_c = SystemConfig(a=0.5, b=0.25, d=0.2, delta=0.1, N=1024)
    rep_c = validate_regime(cfg_c, law_a.meta)
    assert not rep_c.passed and "2(a-b) - delta = 1" in rep_c.failures()


@check("params/derived-constants")
def _(fast):
    cons = derive_constants(SystemConfig(N=10**4))
    assert math.isclose(cons.D_limit / (1.0 * 1.0 * 1.0 / 1.0), 1.0)
    assert math.isclose(cons.A_N, 10 ** (4 * 0.2), rel_tol=1e-12)
    assert math.isclose(cons.beta0_of_mass(1.0), 1.0 - 10 ** (-1.0), rel_tol=1e-12)
    assert math.isclose(cons.sigma0_of_mass(2.0), 4.0)
    # energy-balance identities
    m = 1.7
    assert math.isclose(cons.sigma0_of_mass(m) / m**2, 1.0)
    assert math.isclose(cons.beta0_of_mass(m) + SystemConfig(N=10**4).beta_kN, 1.0 * m**2)
    try:
        SystemConfig(M=-1.0)
    except RegimeError:
        pass
    else:
        raise AssertionError("negative M accepted")


# ------------------------------------------------------------- mass_laws


@check("mass_laws/support-and-atoms")
def _(fast):
    rng = stream(101, 1)
    law = mass_laws.make_mass_law("stable_power", {"H": 0.75}, 10**4, d=0.2, delta=0.1)
    m = mass_laws.sample_masses(law, 5000, rng)
    assert np.all(m > law.m_min) and np.all(m <= law.m_max)
    assert math.isclose(law.m_max, (1.5 * 10**0.4) ** (2.0 / 3.0), rel_tol=1e-12)

    law_np = mass_laws.make_mass_law("dirac_npower", {}, 10**4, delta=0.1)
    assert math.isclose(law_np.atom, 10**0.2, rel_tol=1e-12)
    assert np.all(mass_laws.sample_masses(law_np, 10, rng) == law_np.atom)

    law_1 = mass_laws.make_mass_law("dirac_one", {}, 7)
    assert law_1.atom == 1.0 and law_1.m_star == 1.0
    assert law_1.meta == mass_laws.MassLawMeta(0.0, 0.0, 0.0, 1.0)
    assert np.all(mass_laws.sample_masses(law_1, 10, rng) == 1.0)


@check("mass_laws/phi-values")
def _(fast):
    for fam, prm in [("stable_power", {"H": 0.75}), ("power_mixture", {"H_list": (0.6, 0.9)}),
                     ("tempered_stable", {"H": 0.6}), ("exponential_levy", {"rate": 2.0}),
                     ("sqrt_decay", {}), ("log_frullani", {}), ("gamma_sub", {}),
                     ("tempered_alpha", {"alpha": 0.5})]:
        assert mass_laws.phi(fam, prm, 0.0) == 0.0
        vals = mass_laws.phi(fam, prm, np.array([0.1, 0.5, 1.0, 2.0]))
        assert np.all(np.diff(vals) > 0), f"{fam} not increasing"
    assert math.isclose(mass_laws.phi("stable_power", {"H": 0.75}, 1.0),
                        2.0 * math.sqrt(math.pi), rel_tol=1e-12)
    assert math.isclose(mass_laws.phi("exponential_levy", {"rate": 1.0}, 1.0), 0.5)


@check("mass_laws/variance-values")
def _(fast):
    for fam, prm in [("stable_power", {"H": 0.75}), ("power_mixture", {"H_list": (0.6, 0.9)}),
                     ("tempered_stable", {"H": 0.75}), ("exponential_levy", {}),
                     ("dirac_npower", {}), ("dirac_one", {})]:
        vf = mass_laws.variance_fn(fam, prm, 1.0)
        assert vf.v(0.0) == 0.0
        t = np.linspace(0.0, 2.0, 33)
        assert np.all(np.diff(vf.v(t)) > 0), f"{fam} v not increasing"
        assert np.all(np.diff(vf.vdot(t[1:])) >= -1e-13), f"{fam} vdot not nondecreasing"
    assert math.isclose(mass_laws.variance_fn("stable_power", {"H": 0.75}, 1.0).v(1.0),
                        math.sqrt(math.pi) / 0.75, rel_tol=1e-12)
    assert math.isclose(mass_laws.variance_fn("exponential_levy", {}, 1.0).v(1.0),
                        1.0 - math.log(2.0), rel_tol=1e-12)
    assert math.isclose(mass_laws.variance_fn("tempered_stable", {"H": 0.75}, 1.0).v(1.0),
                        (2.0**1.5 - 1.0) / 1.5 - 1.0, rel_tol=1e-12)
    assert math.isclose(mass_laws.variance_fn("dirac_one", {}, 2.0).v(1.0),
                        1.0 + (math.exp(-2.0) - 1.0) / 2.0, rel_tol=1e-12)


@check("mass_laws/phi-v-consistency")
def _(fast):
    # v(t) must equal int_0^t Phi(gamma tau) dtau for the subordinator families
    g = 1.3
    for fam, prm in [("stable_power", {"H": 0.75}), ("power_mixture", {"H_list": (0.6, 0.9)}),
                     ("tempered_stable", {"H": 0.65}), ("exponential_levy", {"rate": g})]:
        vf = mass_laws.variance_fn(fam, prm, g)
        for t in np.linspace(0.02, 1.5, 16 if fast else 64):
            quad, _ = integrate.quad(lambda tau: vf.phi(g * tau), 0.0, t,
                                     epsabs=1e-12, epsrel=1e-12, limit=200)
            assert abs(quad - float(vf.v(t))) < 1e-8, (fam, t)


@check("mass_laws/eN-closed-forms")
def _(fast):
    law1 = mass_laws.make_mass_law("dirac_one", {}, 16)
    assert mass_laws.e_N(law1, 1.0, 0.0) == 0.0
    assert math.isclose(mass_laws.e_N(law1, 1.0, 1.0), 1.0 - math.exp(-1.0), rel_tol=1e-12)
    # quadrature value vs Monte Carlo average over sampled masses
    law = mass_laws.make_mass_law("stable_power", {"H": 0.75}, 2**10, d=0.2, delta=0.1)
    n = 10**5 if fast else 10**6
    m = mass_laws.sample_masses(law, n, stream(7, 2))
    vals = (1.0 - np.exp(-1.0 * m * 0.7)) / m**2
    se = vals.std(ddof=1) / math.sqrt(n)
    assert abs(vals.mean() - mass_laws.e_N(law, 1.0, 0.7)) < 3.0 * se


@check("mass_laws/eN-monotone-limit")
def _(fast):
    g, t = 1.0, 0.8
    target = mass_laws.phi("stable_power", {"H": 0.75}, g * t)
    gaps = []
    prev = -np.inf
    for k in range(6, 15, 1 if not fast else 2):
        law = mass_laws.make_mass_law("stable_power", {"H": 0.75}, 2**k, d=0.2, delta=0.1)
        ratio = mass_laws.e_N(law, g, t) / law.m_star
        assert prev <= ratio + 1e-12 and ratio <= target + 1e-10, (k, ratio, target)
        prev = ratio
        gaps.append(target - ratio)
    assert all(g2 < g1 for g1, g2 in zip(gaps, gaps[1:]))  # approaching the limit


@check("mass_laws/sampler-ks")
def _(fast):
    law = mass_laws.make_mass_law("stable_power", {"H": 0.75}, 2**12, d=0.2, delta=0.1)
    n = 2 * 10**4 if fast else 10**5
    m = mass_laws.sample_masses(law, n, stream(13, 3))
    p = 3.0 - 2.0 * 0.75

    def cdf(y):
        return (y**p - law.m_min**p) / (law.m_max**p - law.m_min**p)

    res = sps.kstest(m, cdf)
    assert res.pvalue > 0.01, f"KS p = {res.pvalue}"
    # empirical mean against the quadrature oracle of the density
    mean_q, _ = integrate.quad(lambda y: y * law.m_star * y ** (2 - 2 * 0.75) * y ** (-0.0),
                               law.m_min, law.m_max)
    # density of mu_N is m_star * y^(2-2H) on the window
    mean_q, _ = integrate.quad(lambda y: y * law.m_star * y ** (2 - 2 * 0.75),
                               law.m_min, law.m_max, epsabs=1e-12)
    se = m.std(ddof=1) / math.sqrt(n)
    assert abs(m.mean() - mean_q) < 3.0 * se


@check("mass_laws/dprime-bound")
def _(fast):
    for fam, kw in [("stable_power", dict(params={"H": 0.75}, d=0.2, delta=0.1)),
                    ("tempered_stable", dict(params={"H": 0.75}, d=0.2))]:
        ratios = []
        for k in range(6, 15, 2):
            law = mass_laws.make_mass_law(fam, kw["params"], 2**k, d=kw["d"],
                                          delta=kw.get("delta"))
            nu = mass_laws._nu_density(law)
            val, _ = integrate.quad(lambda y: y ** (-2.0) * nu(y), law.m_min, law.m_max,
                                    epsabs=1e-13, limit=400)
            ratios.append(law.m_star * val / (2**k) ** law.meta.d_prime)
        assert max(ratios) <= 2.0 * ratios[0], (fam, ratios)


# ----------------------------------------------------------- particle_sim


def _wiener_cfg(N, seed=0, n_steps=512, gamma=10.0, M=0.1, a=0.74, b=0.01, C_beta=1.0):
    delta = 2.0 * (a - b) - 1.0
    law = mass_laws.make_mass_law("dirac_npower", {}, N, delta=delta)
    cfg = SystemConfig(M=M, gamma=gamma, a=a, b=b, C_beta=C_beta, d=law.meta.d,
                       delta=law.meta.delta, C_delta=law.meta.C_delta, N=N,
                       t0=1.0, n_steps=n_steps, seed=seed)
    return cfg, law


def _scheme_step_matrix(cfg, m):
    """Per-step update matrix and noise vector of the collapsed (S, V, X)
    system for equal masses m; S = sum_k U^k.  Independent route used to
    validate the integrator."""
    N, dt = cfg.N, cfg.dt
    alpha, beta = cfg.alpha_kN, cfg.beta_kN
    lam = derive_constants(cfg).A_N / cfg.M
    c = cfg.gamma * m
    eU = math.exp(-c * dt)
    eV = math.exp(-lam * dt)
    drU = (alpha / m) * (1.0 - eU) / c
    sU = math.sqrt(cfg.sigma / c * (1.0 - eU * eU))
    bm = cfg.beta_kN / cfg.M
    G = np.array([
        [eU, N * drU, 0.0],
        [0.5 * dt * bm * (eV + eU), eV + 0.5 * dt * bm * N * drU, 0.0],
        [0.25 * dt**2 * bm * (eV + eU), 0.5 * dt * (1.0 + eV + 0.5 * dt * bm * N * drU), 1.0],
    ])
    w = np.array([sU * math.sqrt(N),
                  0.5 * dt * bm * sU * math.sqrt(N),
                  0.25 * dt**2 * bm * sU * math.sqrt(N)])
    return G, w


def _discrete_exact_var_X(cfg, m):
    """Exact Var(X_{t0}) of the discrete scheme for equal masses (Lyapunov iteration)."""
    G, w = _scheme_step_matrix(cfg, m)
    Sig = np.diag([cfg.N * cfg.sigma / (cfg.gamma * m), 0.0, 0.0])
    Q = np.outer(w, w)
    for _ in range(cfg.n_steps):
        Sig = G @ Sig @ G.T + Q
    return float(Sig[2, 2])


def _continuum_exact_var_X(cfg, m):
    """Exact continuum Var(X_{t0}) for equal masses via eigendecomposition."""
    N = cfg.N
    alpha, beta = cfg.alpha_kN, cfg.beta_kN
    A_N = derive_constants(cfg).A_N
    A = np.array([
        [0.0, 1.0, 0.0],
        [0.0, -A_N / cfg.M, beta / cfg.M],
        [0.0, N * alpha / m, -cfg.gamma * m],
    ])
    Q = np.diag([0.0, 0.0, 2.0 * cfg.sigma * N])
    Sig0 = np.diag([0.0, 0.0, N * cfg.sigma / (cfg.gamma * m)])
    d, P = np.linalg.eig(A)
    Pinv = np.linalg.inv(P)
    E = P @ np.diag(np.exp(d * cfg.t0)) @ Pinv
    Qt = Pinv @ Q @ Pinv.T
    dk = d[:, None] + d[None, :]
    fac = np.where(np.abs(dk) > 1e-14, (np.exp(dk * cfg.t0) - 1.0) / np.where(np.abs(dk) > 1e-14, dk, 1.0), cfg.t0)
    Sig = E @ Sig0 @ E.T + P @ (Qt * fac) @ P.T
    return float(np.real(Sig[0, 0]))


@check("particle_sim/ou-step")
def _(fast):
    rng = stream(5, 4)
    u = 0.7
    u2 = particle_sim.step_ou_exact(u, 2.0, 1e-12, rng, sigma=1.0, gamma=1.0)
    assert abs(u2 - u) < 1e-5  # noise variance -> 0 with dt
    # ensemble of independent chains: stationary variance and lag autocovariance
    n_chains = 300 if fast else 800
    n_steps, m, dt, sigma, gamma = 320, 1.5, 0.05, 1.2, 0.8
    var_target = sigma / (gamma * m)
    u = rng.standard_normal(n_chains) * math.sqrt(var_target)
    hist = np.empty((n_steps, n_chains))
    for i in range(n_steps):
        u = particle_sim.step_ou_exact(u, m, dt, rng, sigma=sigma, gamma=gamma)
        hist[i] = u
    tail = hist[60:]
    n_eff = tail.size * (gamma * m * dt)  # decorrelation-adjusted sample count
    var_emp = tail.var()
    assert abs(var_emp - var_target) < 3.0 * var_target * math.sqrt(2.0 / n_eff)
    lag = 3
    emp = np.mean(tail[:-lag] * tail[lag:])
    target = var_target * math.exp(-gamma * m * lag * dt)
    assert abs(emp - target) < 3.0 * var_target * math.sqrt(2.0 / n_eff)


@check("particle_sim/decoupled-zero")
def _(fast):
    # vanishing bath->test coupling: the response scales linearly to zero
    cfg, law = _wiener_cfg(64, n_steps=64, C_beta=1e-160)
    ens = particle_sim.simulate_full_system(cfg, law, 8, 11)
    assert np.max(np.abs(ens["X"])) < 1e-150


@check("particle_sim/determinism-and-chunking")
def _(fast):
    cfg, law = _wiener_cfg(64, n_steps=128)
    e1 = particle_sim.simulate_chain(cfg, law, 17, 42, chunk=17)
    e2 = particle_sim.simulate_chain(cfg, law, 17, 42, chunk=5)
    e3 = particle_sim.simulate_chain(cfg, law, 17, 42, chunk=5, n_threads=3)
    for name in ("X", "Xtilde", "Ztilde"):
        assert np.array_equal(e1[name], e2[name]), name
        assert np.array_equal(e1[name], e3[name]), name


@check("particle_sim/chain-collapse-large-AN")
def _(fast):
    # A_N/M -> infinity: the remainder R dies and Xtilde -> Ztilde
    cfg, law = _wiener_cfg(128, n_steps=256, M=1e-6)
    ens = particle_sim.simulate_chain(cfg, law, 12, 21)
    gap = np.max(np.abs(ens["Xtilde"] - ens["Ztilde"]))
    step_scale = np.max(np.abs(np.diff(ens["Ztilde"], axis=1)))
    assert gap <= 1.5 * step_scale + 1e-14  # quadrature-tolerance coincidence


@check("particle_sim/variance-vs-discrete-oracle")
def _(fast):
    cfg, law = _wiener_cfg(128, n_steps=256)
    n_traj = 1500 if fast else 4000
    ens = particle_sim.simulate_chain(cfg, law, n_traj, 1234)
    x2 = ens["X"][:, -1] ** 2
    z = ens["Ztilde"][:, -1] ** 2
    m = law.atom
    K = 2.0 * cfg.sigma * cfg.C_beta**2 * cfg.C_delta / (cfg.gamma**2 * cfg.C_alpha**2)
    EZ2 = K * (cfg.t0 - (1.0 - math.exp(-cfg.gamma * m * cfg.t0)) / (cfg.gamma * m))
    cv = np.cov(x2, z)[0, 1] / np.var(z)
    est = x2.mean() - cv * (z.mean() - EZ2)
    resid = x2 - cv * z
    se = resid.std(ddof=1) / math.sqrt(n_traj)
    exact = _discrete_exact_var_X(cfg, m)
    assert abs(est - exact) < 3.0 * se, (est, exact, se)


@check("particle_sim/dt-halving")
def _(fast):
    # deterministic via the discrete Lyapunov oracle of the scheme
    for mk in (lambda n: _wiener_cfg(256, n_steps=n),):
        cfg1, law = mk(512)
        cfg2, _ = mk(1024)
        m = law.atom
        v1 = _discrete_exact_var_X(cfg1, m)
        v2 = _discrete_exact_var_X(cfg2, m)
        assert abs(v1 - v2) / v2 < 5e-3, (v1, v2)
        vc = _continuum_exact_var_X(cfg1, m)
        assert abs(v2 - vc) / vc < 5e-3, (v2, vc)


@check("particle_sim/conditional-cov")
def _(fast):
    cfg, law = _wiener_cfg(256)
    xi, lim = particle_sim.conditional_cov_check(law, cfg, 0.0, 0.0)
    assert xi == 0.0 and lim == 0.0
    # closed-form phi^{t,s} against quadrature (inner integral antiderivative,
    # adaptive outer quadrature; avoids the diagonal kink)
    m, t, s, g = 1.7, 0.9, 0.6, 1.3
    c = g * m

    def inner(tau):
        if tau <= s:
            return (2.0 - math.exp(-c * tau) - math.exp(-c * (s - tau))) / c
        return (math.exp(-c * (tau - s)) - math.exp(-c * tau)) / c

    quad, _ = integrate.quad(inner, 0.0, t, epsabs=1e-13, epsrel=1e-13,
                             points=[s], limit=200)
    assert abs(particle_sim.phi_ts(m, t, s, g) - quad / m) < 1e-9
    # Dirac-mass phi^{t,t} closed form
    direct = (2.0 / (g * m**2)) * (t - (1.0 - math.exp(-g * m * t)) / (g * m))
    assert abs(particle_sim.phi_ts(m, t, t, g) - direct) < 1e-12
    # concentration: relative error shrinks with N (stable-power masses)
    errs = {}
    for k in (6, 10):
        law_k = mass_laws.make_mass_law("stable_power", {"H": 0.75}, 2**k, d=0.2, delta=0.1)
        cfg_k = SystemConfig(M=1.0, gamma=1.0, a=0.8, b=0.25, C_beta=0.2, d=0.2, delta=0.1,
                             C_delta=1.0, N=2**k, t0=1.0, n_steps=64, seed=0)
        rs = []
        for r in range(8 if fast else 20):
            masses = mass_laws.sample_masses(law_k, 2**k, stream(33, k, r))
            xi, lim = particle_sim.conditional_cov_check(law_k, cfg_k, 1.0, 1.0, masses=masses)
            rs.append(abs(xi / lim - 1.0))
        errs[k] = float(np.median(rs))
    assert errs[10] < errs[6], errs


# ------------------------------------------------------------ limit_gauss


@check("limit_gauss/kernel-identities")
def _(fast):
    grid = np.linspace(0.05, 2.0, 40)
    vf_w = mass_laws.variance_fn("dirac_npower", {}, 1.0)  # v(t) = t
    K = 1.7
    C = limit_gauss.covariance_matrix(limit_gauss.CovarianceModel(v=vf_w, K=K, grid=grid))
    assert np.allclose(C, K * np.minimum(grid[:, None], grid[None, :]), atol=1e-14)

    H = 0.75
    vf = mass_laws.variance_fn("stable_power", {"H": H}, 1.0)
    model = limit_gauss.CovarianceModel(v=vf, K=2.0, grid=grid)
    C = limit_gauss.covariance_matrix(model)
    Dp = 0.5 * 2.0 * gamma_fn(2 - 2 * H) / (2 * H * (2 * H - 1))
    T, S = grid[:, None], grid[None, :]
    ref = Dp * (T ** (2 * H) + S ** (2 * H) - np.abs(T - S) ** (2 * H))
    assert np.max(np.abs(C - ref)) < 1e-12 * np.max(ref)
    # scalar grid
    one = limit_gauss.covariance_matrix(limit_gauss.CovarianceModel(v=vf, K=2.0, grid=np.array([1.0])))
    assert math.isclose(one[0, 0], 2.0 * math.sqrt(math.pi) / 0.75, rel_tol=1e-12)
    # self-similarity surrogate
    for c in (0.5, 2.0):
        Cc = limit_gauss.covariance_matrix(
            limit_gauss.CovarianceModel(v=vf, K=2.0, grid=c * grid))
        assert np.max(np.abs(Cc - c ** (2 * H) * C)) < 1e-12 * np.max(np.abs(Cc))


@check("limit_gauss/psd-all-families")
def _(fast):
    n = 256 if fast else 512
    grid = np.linspace(1.0 / n, 1.0, n)
    for fam, prm in [("stable_power", {"H": 0.75}), ("stable_power", {"H": 0.95}),
                     ("power_mixture", {"H_list": (0.6, 0.9)}),
                     ("tempered_stable", {"H": 0.75}), ("exponential_levy", {}),
                     ("dirac_npower", {}), ("dirac_one", {})]:
        vf = mass_laws.variance_fn(fam, prm, 1.0)
        C = limit_gauss.covariance_matrix(limit_gauss.CovarianceModel(v=vf, K=2.0, grid=grid))
        limit_gauss.cholesky_with_jitter(C)  # raises beyond the jitter cap


@check("limit_gauss/sampling-moments")
def _(fast):
    grid = np.linspace(0.125, 1.0, 8)
    model = limit_gauss.CovarianceModel.from_family("stable_power", {"H": 0.75}, grid)
    n = 4000 if fast else 10000
    ens = limit_gauss.sample_limit_paths(model, n, 2024)
    C = limit_gauss.covariance_matrix(model)
    cov, se = stats.empirical_cov(ens, grid, observable="Z")
    assert np.max(np.abs(cov - C) / se) < 3.5
    # stationary increments: Var(Z_{t+h} - Z_t) = K v(h) independent of t
    paths = ens["Z"]
    h = 2  # two grid steps
    K = model.K
    target = K * float(model.v.v(grid[1] - grid[0]) * 0 + model.v.v(2 * (grid[1] - grid[0])))
    for j0 in (0, 3, 5):
        d = paths[:, j0 + h] - paths[:, j0]
        se_v = d.var(ddof=1) * math.sqrt(2.0 / n)
        assert abs(d.var(ddof=1) - target) < 3.5 * se_v, (j0, d.var(ddof=1), target)
    g = stats.gaussianity_test(ens, 1.0, observable="Z")
    assert abs(g.kurtosis - 3.0) < 3.5 * g.kurtosis_se
    assert not g.rejected(0.01)


@check("limit_gauss/fbm-direct")
def _(fast):
    grid = np.linspace(1.0 / 64, 1.0, 64)
    n = 3000 if fast else 8000
    half = limit_gauss.sample_fbm_direct(0.5, grid, n, 77)["B"]
    inc = np.diff(half, axis=1)
    r1 = np.mean(inc[:, :-1] * inc[:, 1:]) / np.mean(inc**2)
    assert abs(r1) < 3.0 / math.sqrt(n * (inc.shape[1] - 1))
    b = limit_gauss.sample_fbm_direct(0.75, grid, n, 78)["B"]
    for j in (15, 63):
        t = grid[j]
        v = b[:, j + 1].var(ddof=1)
        assert abs(v - t**1.5) < 3.5 * t**1.5 * math.sqrt(2.0 / n)
    # oracle equivalence with the variance-function route
    model = limit_gauss.CovarianceModel.from_family("stable_power", {"H": 0.75}, grid)
    ens = limit_gauss.sample_limit_paths(model, n, 79)
    scale = math.sqrt(model.K * float(model.v.v(1.0)))
    res = sps.ks_2samp(ens["Z"][:, -1], scale * b[:, -1])
    assert res.pvalue > 0.01


@check("limit_gauss/mixture-increment-slopes")
def _(fast):
    n = 2000 if fast else 4000
    for (t0, npts, window, target) in [
        (0.02, 128, (1e-3, 1e-2), 1.2),
        (2000.0, 256, (100.0, 1000.0), 1.8),
    ]:
        grid = np.linspace(0.0, t0, npts + 1)[1:]
        model = limit_gauss.CovarianceModel.from_family("power_mixture",
                                                        {"H_list": (0.6, 0.9)}, grid)
        ens = limit_gauss.sample_limit_paths(model, n, 555)
        lags = np.unique(np.rint(np.geomspace(window[0], window[1], 9) / (t0 / npts)).astype(int))
        lags = lags[lags >= 1] * (t0 / npts)
        curve = stats.msd(ens, lags, observable="Z")
        slope, _ = stats.fit_exponent(curve, (lags[0], lags[-1]))
        assert abs(slope - target) < 0.1, (target, slope)


# -------------------------------------------------------------- superstat


@check("superstat/mixing-laws")
def _(fast):
    mix = superstat.MixingLaw(superstat.ALaw("degenerate", (1.0,)),
                              superstat.HLaw("degenerate", (0.75,)))
    A, H = superstat.sample_mixing(mix, 50, 9)
    assert np.all(A == 1.0) and np.all(H == 0.75)
    n = 10**5
    mix = superstat.MixingLaw(superstat.ALaw("exponential", (1.0,)),
                              superstat.HLaw("uniform", (0.55, 0.95)))
    A, H = superstat.sample_mixing(mix, n, 10)
    assert abs(A.mean() - 1.0) < 3.0 / math.sqrt(n)
    assert H.min() > 0.55 and H.max() < 0.95
    # analytic moments for every A family
    rng = stream(4, 9)
    for law in [superstat.ALaw("lognormal", (0.2, 0.5)),
                superstat.ALaw("gengamma", (2.0, 1.5, 0.8)),
                superstat.ALaw("sqweibull", (1.4, 1.1))]:
        x = law.sample(rng, 2 * 10**5)
        assert abs(x.mean() - law.mean()) < 4.0 * x.std(ddof=1) / math.sqrt(x.size)
        m2 = (x**2).mean()
        assert abs(m2 - law.moment2()) < 4.0 * (x**2).std(ddof=1) / math.sqrt(x.size)


@check("superstat/degenerate-reduction")
def _(fast):
    grid = np.linspace(1.0 / 32, 1.0, 32)
    mix = superstat.MixingLaw(superstat.ALaw("degenerate", (1.0,)),
                              superstat.HLaw("degenerate", (0.75,)))
    model = superstat.SuperstatModel(mixing=mix)
    n = 3000 if fast else 6000
    ens = superstat.sample_superstat_paths(model, grid, n, 31)
    ref = limit_gauss.sample_limit_paths(
        limit_gauss.CovarianceModel.from_family("stable_power", {"H": 0.75}, grid), n, 32)
    res = sps.ks_2samp(ens["Z"][:, -1], ref["Z"][:, -1])
    assert res.pvalue > 0.01


@check("superstat/kurtosis-mixture")
def _(fast):
    grid = np.array([0.5, 1.0])
    mix = superstat.MixingLaw(superstat.ALaw("exponential", (1.0,)),
                              superstat.HLaw("degenerate", (0.75,)))
    model = superstat.SuperstatModel(mixing=mix)
    n = 4000 if fast else 10000
    ens = superstat.sample_superstat_paths(model, grid, n, 41)
    g = stats.gaussianity_test(ens, 1.0, observable="Z")
    assert abs(g.kurtosis - 6.0) < 3.5 * g.kurtosis_se, (g.kurtosis, g.kurtosis_se)
    assert g.rejected(0.01)
    # conditional gaussianity within the fixed-(A,h) construction
    mix0 = superstat.MixingLaw(superstat.ALaw("degenerate", (2.0,)),
                               superstat.HLaw("degenerate", (0.6,)))
    ens0 = superstat.sample_superstat_paths(superstat.SuperstatModel(mixing=mix0), grid, 2000, 42)
    assert not stats.gaussianity_test(ens0, 1.0, observable="Z").rejected(0.01)


@check("superstat/variance-formulas")
def _(fast):
    mix = superstat.MixingLaw(superstat.ALaw("degenerate", (1.0,)),
                              superstat.HLaw("degenerate", (0.75,)))
    model = superstat.SuperstatModel(mixing=mix)
    assert superstat.conditional_variance(model, (0.75,), 0.0) == 0.0
    val = superstat.conditional_variance(model, (0.75,), 1.0)
    assert math.isclose(val, 2.0 * math.sqrt(math.pi) / 0.75, rel_tol=1e-12)
    assert math.isclose(superstat.total_variance(model, 1.0), val, rel_tol=1e-12)
    assert superstat.total_variance(model, 1.0) == superstat.total_variance(model, 1.0)

    mix2 = superstat.MixingLaw(
        superstat.ALaw("exponential", (1.0,)),
        superstat.HLaw("discrete", (((0.6,), (0.9,)), (0.5, 0.5))),
    )
    model2 = superstat.SuperstatModel(mixing=mix2)
    v1 = superstat.conditional_variance(model2, (0.6,), 1.0)
    v2 = superstat.conditional_variance(model2, (0.9,), 1.0)
    assert math.isclose(superstat.total_variance(model2, 1.0), 0.5 * (v1 + v2), rel_tol=1e-12)
    # MC check of the total variance over random (A, H)
    grid = np.array([0.5, 1.0])
    n = 4000 if fast else 10000
    ens = superstat.sample_superstat_paths(model2, grid, n, 51)
    z = ens["Z"][:, -1]
    tv = superstat.total_variance(model2, 1.0)
    se = (z**2).std(ddof=1) / math.sqrt(n)
    assert abs((z**2).mean() - tv) < 3.5 * se


@check("superstat/discrete-H-exponent-clusters")
def _(fast):
    grid = np.linspace(0.0, 1.0, 65)[1:]
    mix = superstat.MixingLaw(
        superstat.ALaw("degenerate", (1.0,)),
        superstat.HLaw("discrete", (((0.6,), (0.9,)), (0.5, 0.5))),
    )
    model = superstat.SuperstatModel(mixing=mix)
    n = 400 if fast else 600
    ens = superstat.sample_superstat_paths(model, grid, n, 61)
    H = ens.sidecar["H"][:, 0]
    dt = grid[0]
    lags = np.arange(1, 9) * dt
    slopes = {0.6: [], 0.9: []}
    for i in range(n):
        sub = stats.msd(
            limit_gauss.TrajectoryEnsemble(grid=ens.grid, observables={"Z": ens["Z"][i:i + 1]}),
            lags, observable="Z")
        s, _ = stats.fit_exponent(sub, (lags[0], lags[-1]))
        slopes[round(H[i], 1)].append(s)
    for h, target in ((0.6, 1.2), (0.9, 1.8)):
        med = float(np.median(slopes[h]))
        assert abs(med - target) < 0.15, (h, med)


# -------------------------------------------------------------------- kfp


def _sym_model(a_kind="exponential", a_par=(1.0,), h=0.75):
    mix = superstat.MixingLaw(superstat.ALaw(a_kind, a_par),
                              superstat.HLaw("degenerate", (h,)))
    return kfp.SymbolModel(mixing=mix, D=2.0)


@check("kfp/symbol-values")
def _(fast):
    model = _sym_model("degenerate", (1.5,))
    p = np.linspace(-8.0, 8.0, 41)
    for t in (0.0, 0.5, 1.0):
        psi = kfp.symbol_psi(model, t, p)
        assert np.all(psi <= 1.0 + 1e-14) and math.isclose(float(kfp.symbol_psi(model, t, 0.0)), 1.0)
    vf = model.variance_for((0.75,))
    t = 0.8
    ref = np.exp(-1.5 * 2.0 * float(vf.v(t)) * p**2 / 2.0)
    assert np.max(np.abs(kfp.symbol_psi(model, t, p) - ref)) < 1e-12
    model_e = _sym_model("exponential", (2.0,))
    ref_e = 1.0 / (1.0 + 2.0 * 2.0 * float(vf.v(t)) * p**2 / 2.0)
    assert np.max(np.abs(kfp.symbol_psi(model_e, t, p) - ref_e)) < 1e-12


@check("kfp/kernel-symbol")
def _(fast):
    model = _sym_model("degenerate", (1.5,))
    vf = model.variance_for((0.75,))
    s, p = 0.7, 1.3
    ref = -(p**2 / 2.0) * 1.5 * 2.0 * float(vf.vdot(s))
    assert abs(kfp.kernel_symbol(model, s, p) - ref) < 1e-12
    assert kfp.kernel_symbol(model, s, 0.0) == 0.0
    # finite-difference identity d/dt log Psi = kernel symbol, 10 seeded points
    rng = stream(71, 1)
    for model_i in (_sym_model("exponential", (1.0,)),
                    kfp.SymbolModel(mixing=superstat.MixingLaw(
                        superstat.ALaw("exponential", (0.7,)),
                        superstat.HLaw("uniform", (0.6, 0.9))), D=2.0)):
        for _ in range(5):
            s = 0.3 + 0.7 * rng.random()
            p = 0.1 + 2.9 * rng.random()
            h = 1e-4
            fd = (math.log(kfp.symbol_psi(model_i, s + h, p))
                  - math.log(kfp.symbol_psi(model_i, s - h, p))) / (2.0 * h)
            assert abs(fd - kfp.kernel_symbol(model_i, s, p)) < 1e-6, (s, p)


@check("kfp/evolve-density")
def _(fast):
    model = _sym_model("degenerate", (1.0,), h=0.75)
    n = 2048 if fast else 4096
    L = kfp.suggest_half_width(model, 1.0, u0_std=0.4)
    x = np.linspace(-L, L, n)
    u0 = kfp.DensityField(x, kfp.gaussian_density(x, 0.4))
    same = kfp.evolve_density(model, u0, 0.0)
    assert np.max(np.abs(same.values - u0.values)) < 1e-12
    ut = kfp.evolve_density(model, u0, 1.0)
    assert abs(ut.mass() - u0.mass()) < 1e-8
    assert np.max(np.abs(ut.values - ut.values[::-1])) < 1e-10  # even symmetry
    vf = model.variance_for((0.75,))
    var_t = 0.4**2 + 1.0 * 2.0 * float(vf.v(1.0))
    ref = kfp.gaussian_density(x, math.sqrt(var_t))
    assert np.trapezoid(np.abs(ut.values - ref), x) < 1e-6
    assert abs(ut.moment2() - u0.moment2() - 1.0 * 2.0 * float(vf.v(1.0))) < 1e-4


@check("kfp/one-shot-vs-composition")
def _(fast):
    n = 2048
    t1, t2 = 0.4, 0.6
    model = _sym_model("exponential", (1.0,))
    L = kfp.suggest_half_width(model, t1 + t2, u0_std=0.4, factor=16.0)
    x = np.linspace(-L, L, n)
    u0 = kfp.DensityField(x, kfp.gaussian_density(x, 0.4))
    oneshot = kfp.evolve_density(model, u0, t1 + t2)
    composed = kfp.evolve_density(model, kfp.evolve_density(model, u0, t1), t2)
    diff = np.trapezoid(np.abs(oneshot.values - composed.values), x)
    assert diff > 1e-4  # the evolution is not a semigroup under mixing

    vwiener = lambda h: mass_laws.variance_fn("dirac_npower", {}, 1.0)
    mix0 = superstat.MixingLaw(superstat.ALaw("degenerate", (1.0,)),
                               superstat.HLaw("degenerate", (0.75,)))
    model0 = kfp.SymbolModel(mixing=mix0, D=2.0, v_of_h=vwiener)
    one0 = kfp.evolve_density(model0, u0, t1 + t2)
    comp0 = kfp.evolve_density(model0, kfp.evolve_density(model0, u0, t1), t2)
    assert np.trapezoid(np.abs(one0.values - comp0.values), x) < 1e-10


@check("kfp/variance-growth-uniform-H")
def _(fast):
    mix = superstat.MixingLaw(superstat.ALaw("exponential", (0.8,)),
                              superstat.HLaw("uniform", (0.6, 0.9)))
    model = kfp.SymbolModel(mixing=mix, D=1.5)
    t = 0.7
    L = kfp.suggest_half_width(model, t, u0_std=0.3, factor=18.0)
    n = 2048 if fast else 4096
    x = np.linspace(-L, L, n)
    u0 = kfp.DensityField(x, kfp.gaussian_density(x, 0.3))
    ut = kfp.evolve_density(model, u0, t)
    growth = mix.A_law.mean() * 1.5 * mix.H_law.expect(
        lambda h: float(model.variance_for(h).v(t)))
    assert abs(ut.moment2() - u0.moment2() - growth) < 1e-4


# -------------------------------------------------------------------- stats


@check("stats/trivial-estimators")
def _(fast):
    grid = np.linspace(0.0, 1.0, 17)
    zero = limit_gauss.TrajectoryEnsemble(grid=grid, observables={"Z": np.zeros((3, 17))})
    curve = stats.msd(zero, grid[1:5], observable="Z")
    assert np.all(curve.values == 0.0)
    cov, _ = stats.empirical_cov(zero, [0.5, 1.0], observable="Z")
    assert np.all(cov == 0.0)
    lags = np.geomspace(0.01, 1.0, 12)
    synth = stats.MsdCurve(lags=lags, values=lags**1.5, stderr=np.zeros(12), n_traj=1)
    s, _ = stats.fit_exponent(synth, (lags[0], lags[-1]))
    assert abs(s - 1.5) < 1e-12
    synth2 = stats.MsdCurve(lags=lags, values=7.0 * lags**1.5, stderr=np.zeros(12), n_traj=1)
    s2, _ = stats.fit_exponent(synth2, (lags[0], lags[-1]))
    assert abs(s2 - s) < 1e-12
    try:
        stats.fit_exponent(synth, (lags[0], lags[1]))
    except ValueError:
        pass
    else:
        raise AssertionError("narrow window accepted")


@check("stats/msd-vs-analytic")
def _(fast):
    grid = np.linspace(0.0, 1.0, 33)[1:]
    n = 3000 if fast else 8000
    model = limit_gauss.CovarianceModel.from_family("stable_power", {"H": 0.75}, grid)
    ens = limit_gauss.sample_limit_paths(model, n, 404)
    lags = grid[[0, 3, 7, 15]]
    curve = stats.msd(ens, lags, observable="Z")
    for i, l in enumerate(lags):
        target = model.K * float(model.v.v(l))
        assert abs(curve.values[i] - target) < 3.5 * curve.stderr[i], (l, curve.values[i], target)
    wiener = limit_gauss.CovarianceModel.from_family("dirac_npower", {}, grid)
    ensw = limit_gauss.sample_limit_paths(wiener, n, 405)
    curvew = stats.msd(ensw, lags, observable="Z")
    for i, l in enumerate(lags):
        assert abs(curvew.values[i] - 2.0 * l) < 3.5 * curvew.stderr[i]


# ------------------------------------------------------------------ cli_io


@check("cli/config-parse")
def _(fast):
    with tempfile.TemporaryDirectory() as tmp:
        good = Path(tmp) / "good.cfg"
        good.write_text(
            "schema_version = 1\n"
            "mass_law.family = stable_power\n"
            "mass_law.H = 0.75\n"
            "system.a = 0.8\nsystem.b = 0.25\nsystem.d = 0.2\n"
            "system.N = 256\nsystem.C_beta = 0.2\n"
        )
        pc = cli_io.parse_config(good)  # delta derived as 2(a-b)-1
        assert math.isclose(pc.cfg.delta, 0.1, rel_tol=1e-12)
        assert pc.hash == cli_io.config_hash(pc.raw)

        bad = Path(tmp) / "bad.cfg"
        bad.write_text(good.read_text().replace("system.a = 0.8", "system.a = 0.3"))
        try:
            cli_io.parse_config(bad)
        except cli_io.ConfigError as exc:
            assert "a >= b + 1/2" in str(exc) or "2(a-b)" in str(exc)
        else:
            raise AssertionError("regime violation accepted")

        unk = Path(tmp) / "unk.cfg"
        unk.write_text(good.read_text() + "hurst = 0.75\n")
        try:
            cli_io.parse_config(unk)
        except cli_io.ConfigError as exc:
            assert "unknown key 'hurst'" in str(exc) and "valid keys" in str(exc)
        else:
            raise AssertionError("unknown key accepted")


@check("cli/simulate-determinism")
def _(fast):
    with tempfile.TemporaryDirectory() as tmp:
        cfgf = Path(tmp) / "run.cfg"
        cfgf.write_text(
            "schema_version = 1\n"
            "mass_law.family = dirac_npower\n"
            "system.a = 0.74\nsystem.b = 0.01\n"
            "system.gamma = 10.0\nsystem.M = 0.1\n"
            "system.N = 64\nsystem.n_steps = 64\nsystem.seed = 5\n"
            "run.n_traj = 6\nrun.observables = X\n"
        )
        rc = cli_io.run_command(["simulate", "--config", str(cfgf), "--out", str(Path(tmp) / "o1")])
        assert rc == 0
        rc = cli_io.run_command(["simulate", "--config", str(cfgf), "--out", str(Path(tmp) / "o2")])
        assert rc == 0
        b1 = (Path(tmp) / "o1" / "X.csv").read_bytes()
        b2 = (Path(tmp) / "o2" / "X.csv").read_bytes()
        assert b1 == b2
        assert (Path(tmp) / "o1" / "manifest.json").exists()
        rc = cli_io.run_command(["simulate", "--config", str(tmp) + "/nope.cfg",
                                 "--out", str(Path(tmp) / "o3")])
        assert rc == 1


@check("cli/format-roundtrip")
def _(fast):
    grid = np.linspace(0.0, 1.0, 9)
    paths = np.hstack([np.zeros((4, 1)), stream(3, 3).standard_normal((4, 8))])
    ens = limit_gauss.TrajectoryEnsemble(grid=grid, observables={"X": paths},
                                         meta={"seed": 3, "config_hash": "abc"})
    with tempfile.TemporaryDirectory() as tmp:
        p1 = cli_io.write_ensemble_csv(Path(tmp) / "x.csv", ens, "X")
        r1 = cli_io.read_ensemble_csv(p1)
        assert np.allclose(r1["X"], paths, atol=0, rtol=0)
        assert np.allclose(r1.grid, grid)
        p2 = cli_io.write_ensemble_binary(Path(tmp) / "x.bin", ens, "X")
        r2 = cli_io.read_ensemble_binary(p2)
        assert np.array_equal(r2["X"], paths)
        assert np.array_equal(r2.grid, grid)


def run_all(fast=False, names=None):
    """Run every registered check; print one line per check; True iff all pass."""
    ok = True
    t_total = time.time()
    for name, fn in CHECKS:
        if names and not any(s in name for s in names):
            continue
        t0 = time.time()
        try:
            fn(fast)
            print(f"[PASS] {name} ({time.time() - t0:.1f}s)")
        except Exception as exc:  # report and continue: the suite maps failures at the end
            ok = False
            print(f"[FAIL] {name} ({time.time() - t0:.1f}s): {type(exc).__name__}: {exc}")
    print(f"selftest: {'PASS' if ok else 'FAIL'} ({time.time() - t_total:.1f}s total)")
    return ok
