"""Integrator for the coupled test-particle / bath Langevin system.

The simulated system, conditionally on the bath masses m_k, is

    dX_t = V_t dt
    dV_t = (1/M) sum_k (beta_k U^k_t - alpha_k V_t) dt
    dU^k_t = -gamma m_k U^k_t dt + (alpha_k/m_k) V_t dt + sqrt(2 sigma) dW^k_t

with X_0 = V_0 = 0 and U^k_0 ~ N(0, sigma/(gamma m_k)).  Bath positions are
not integrated: nothing observed depends on them.

Scheme (per step dt, all rates handled by integrating factors):

  * each U^k takes its exact Ornstein-Uhlenbeck transition
    u' = u e^(-gamma m dt) + sqrt(sigma/(gamma m) (1 - e^(-2 gamma m dt))) xi,
    plus the V cross-term integrated against a frozen V;
  * V uses the factor e^(-lambda dt), lambda = A_N/M, with the bath forcing
    F = (1/M) sum_k beta_k U^k applied by the exponential trapezoid rule
    V' = V e^(-lambda dt) + dt/2 (F e^(-lambda dt) + F');
  * X accumulates V by the trapezoid rule.

The reduction chain shares the Wiener increments with the full system: the
decoupled bank U~^k consumes the same normal draws, and

    Ztilde_t = (1/A_N) sum_k beta_k int_0^t U~^k,
    Xtilde_t = Ztilde_t - R_t,   R_t = (1/A_N) sum_k beta_k int_0^t U~^k
                                        e^(-lambda (t - tau)) dtau,

with R advanced by the same exponential-trapezoid filter as V.  Using one
filter for both is deliberate: the discrete X - Xtilde difference is then
dominated by the true model gap instead of quadrature mismatch, which matters
when measuring the decay rates of the gaps in N.

Masses are redrawn per trajectory by default (each trajectory is an
independent copy of the disordered system); pass a fixed vector to condition
on one realization.  RNG streams are per trajectory, counter-based, with a
fixed intra-trajectory draw order (masses, initial bath velocities, then
noise in blocks), so results are bitwise reproducible and independent of
chunking or thread scheduling.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .ensemble import TrajectoryEnsemble
from .mass_laws import MassLaw, sample_masses, variance_fn
from .params import SystemConfig, derive_constants, validate_regime
from .rng import stream

__all__ = [
    "SimulationError",
    "step_ou_exact",
    "simulate_full_system",
    "simulate_chain",
    "conditional_cov_check",
]

log = logging.getLogger(__name__)

STABILITY_LIMIT = 0.5  # gamma * m_max * dt must stay below this
_BLOCK_TARGET = 1 << 23  # ~8M doubles per per-chunk noise block


class SimulationError(RuntimeError):
    """Simulation refused to start or aborted on invalid state."""


def step_ou_exact(u, m, dt, rng, sigma=1.0, gamma=1.0):
    """One exact transition of the bath Ornstein-Uhlenbeck velocity.

    u' = u e^(-gamma m dt) + sqrt(sigma/(gamma m) (1 - e^(-2 gamma m dt))) xi
    with xi standard normal; stationary variance sigma/(gamma m).
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    m = np.asarray(m, dtype=float)
    if np.any(m <= 0):
        raise ValueError("m must be > 0")
    e = np.exp(-gamma * m * dt)
    s = np.sqrt(sigma / (gamma * m) * (1.0 - e * e))
    return np.asarray(u) * e + s * rng.standard_normal(np.shape(u))


def _prepare(cfg: SystemConfig, law: MassLaw):
    report = validate_regime(cfg, law.meta)
    if not report.passed:
        raise SimulationError("regime validation failed:\n" + str(report))
    beta = cfg.beta_kN
    # beta0 = gamma m^2 - beta_{k,N} must stay positive for the smallest mass
    if cfg.gamma * law.m_min**2 <= beta:
        raise SimulationError(
            f"beta0 positivity violated at m_min = {law.m_min:.6g}: "
            f"gamma*m_min^2 = {cfg.gamma * law.m_min**2:.6g} <= beta_kN = {beta:.6g}"
        )
    if math.isfinite(law.m_max):
        rate = cfg.gamma * law.m_max * cfg.dt
        if rate >= STABILITY_LIMIT:
            raise SimulationError(
                f"stability guard: gamma*m_max*dt = {rate:.4g} >= {STABILITY_LIMIT}; "
                f"raise n_steps above {int(cfg.gamma * law.m_max * cfg.t0 / STABILITY_LIMIT) + 1}"
            )
    lam_dt = derive_constants(cfg).A_N / cfg.M * cfg.dt
    if lam_dt > 1.0:
        # scheme stays stable but the quasi-static velocity gain degrades
        log.warning("A_N/M * dt = %.3g > 1: test-particle relaxation is "
                    "under-resolved; consider raising n_steps", lam_dt)


def _chunk_core(cfg, law, masses_fixed, traj_lo, traj_hi, with_chain, out, seed,
                mass_sink=None):
    """Integrate trajectories [traj_lo, traj_hi) into the output slices."""
    N = cfg.N
    C = traj_hi - traj_lo
    dt = cfg.dt
    n_steps = cfg.n_steps
    cons = derive_constants(cfg)
    alpha = cfg.alpha_kN
    beta = cfg.beta_kN
    lam = cons.A_N / cfg.M
    eV = math.exp(-lam * dt)

    rngs = [stream(seed, j) for j in range(traj_lo, traj_hi)]

    if masses_fixed is not None:
        m = np.broadcast_to(masses_fixed, (C, N)).copy()
    else:
        m = np.empty((C, N))
        for i, g in enumerate(rngs):
            m[i] = sample_masses(law, N, g)
    if mass_sink is not None:
        mass_sink[traj_lo:traj_hi] = m
    if cfg.gamma * float(m.min()) ** 2 <= beta:
        raise SimulationError(
            f"beta0 positivity violated by sampled mass {m.min():.6g} "
            f"(needs gamma*m^2 > {beta:.6g})"
        )
    peak = cfg.gamma * float(m.max()) * dt
    if peak >= STABILITY_LIMIT:
        raise SimulationError(
            f"stability guard: sampled mass gives gamma*m*dt = {peak:.4g} >= {STABILITY_LIMIT}"
        )

    c = cfg.gamma * m
    eU = np.exp(-c * dt)
    sU = np.sqrt(cfg.sigma / c * (1.0 - eU * eU))
    drU = (alpha / m) * (1.0 - eU) / c

    U = np.empty((C, N))
    for i, g in enumerate(rngs):
        U[i] = g.standard_normal(N) * np.sqrt(cfg.sigma / c[i])
    V = np.zeros(C)
    X = np.zeros(C)
    F = (beta / cfg.M) * U.sum(axis=1)

    out["X"][traj_lo:traj_hi, 0] = 0.0
    if with_chain:
        Ut = U.copy()
        S = (beta / cons.A_N) * Ut.sum(axis=1)
        Z = np.zeros(C)
        R = np.zeros(C)
        out["Xtilde"][traj_lo:traj_hi, 0] = 0.0
        out["Ztilde"][traj_lo:traj_hi, 0] = 0.0

    block = max(1, min(n_steps, _BLOCK_TARGET // max(1, C * N)))
    xi = np.empty((C, block, N))
    for n in range(n_steps):
        r = n % block
        if r == 0:
            rows = min(block, n_steps - n)
            for i, g in enumerate(rngs):
                xi[i, :rows] = g.standard_normal((rows, N))
        noise = sU * xi[:, r, :]
        Unew = U * eU + drU * V[:, None] + noise
        Fnew = (beta / cfg.M) * Unew.sum(axis=1)
        Vnew = V * eV + 0.5 * dt * (F * eV + Fnew)
        X += 0.5 * dt * (V + Vnew)
        U, V, F = Unew, Vnew, Fnew
        out["X"][traj_lo:traj_hi, n + 1] = X
        if with_chain:
            Ut = Ut * eU + noise
            Snew = (beta / cons.A_N) * Ut.sum(axis=1)
            Z += 0.5 * dt * (S + Snew)
            R = R * eV + 0.5 * dt * (S * eV + Snew)
            S = Snew
            out["Ztilde"][traj_lo:traj_hi, n + 1] = Z
            out["Xtilde"][traj_lo:traj_hi, n + 1] = Z - R
    if not np.all(np.isfinite(X)):
        raise SimulationError(f"non-finite state after {n_steps} steps (N={N})")


def _simulate(cfg, law, n_traj, rng_seed, with_chain, masses, chunk, n_threads,
              keep_masses=False):
    _prepare(cfg, law)
    n_traj = int(n_traj)
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    if masses is not None:
        masses = np.asarray(masses, dtype=float)
        if masses.shape != (cfg.N,):
            raise ValueError(f"masses must have shape ({cfg.N},)")

    n_grid = cfg.n_steps + 1
    out = {"X": np.empty((n_traj, n_grid))}
    if with_chain:
        out["Xtilde"] = np.empty((n_traj, n_grid))
        out["Ztilde"] = np.empty((n_traj, n_grid))
    mass_sink = np.empty((n_traj, cfg.N)) if keep_masses else None

    if chunk is None:
        chunk = max(1, min(n_traj, (1 << 21) // max(1, cfg.N)))
    bounds = [(lo, min(lo + chunk, n_traj)) for lo in range(0, n_traj, chunk)]
    if n_threads and n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            futs = [
                pool.submit(_chunk_core, cfg, law, masses, lo, hi, with_chain, out,
                            rng_seed, mass_sink)
                for lo, hi in bounds
            ]
            for f in futs:
                f.result()
    else:
        for lo, hi in bounds:
            _chunk_core(cfg, law, masses, lo, hi, with_chain, out, rng_seed, mass_sink)

    grid = np.linspace(0.0, cfg.t0, n_grid)
    meta = {f"cfg.{k}": v for k, v in dataclasses.asdict(cfg).items()}
    meta.update({
        "seed": int(rng_seed),
        "family": law.family,
        "masses": "fixed" if masses is not None else "resampled-per-trajectory",
    })
    sidecar = {"masses": mass_sink} if keep_masses else {}
    return TrajectoryEnsemble(grid=grid, observables=out, meta=meta, sidecar=sidecar)


def simulate_full_system(cfg: SystemConfig, law: MassLaw, n_traj, rng_seed,
                         masses=None, chunk=None, n_threads=None,
                         keep_masses=False) -> TrajectoryEnsemble:
    """Integrate the coupled system; returns the test-particle paths X."""
    return _simulate(cfg, law, n_traj, rng_seed, False, masses, chunk, n_threads,
                     keep_masses)


def simulate_chain(cfg: SystemConfig, law: MassLaw, n_traj, rng_seed,
                   masses=None, chunk=None, n_threads=None,
                   keep_masses=False) -> TrajectoryEnsemble:
    """Integrate the full system plus the reduction chain on shared noise.

    Returns observables X, Xtilde, Ztilde so that pathwise gaps between the
    three levels of the approximation are directly measurable.
    """
    return _simulate(cfg, law, n_traj, rng_seed, True, masses, chunk, n_threads,
                     keep_masses)


def _w_int(c, tau):
    """w(tau) = int_0^tau int_0^tau e^(-c|x-y|) dx dy = 2/c (tau - (1-e^(-c tau))/c)."""
    tau = np.asarray(tau, dtype=float)
    return 2.0 / c * (tau - (1.0 - np.exp(-c * tau)) / c)


def phi_ts(m, t, s, gamma=1.0):
    """Double integral int_0^t int_0^s e^(-gamma m |tau-rho|)/m dtau drho, closed form."""
    m = np.asarray(m, dtype=float)
    c = gamma * m
    return (_w_int(c, t) + _w_int(c, s) - _w_int(c, abs(t - s))) / (2.0 * m)


def conditional_cov_check(law: MassLaw, cfg: SystemConfig, t, s,
                          masses=None, rng_seed=0):
    """Conditional covariance of Ztilde given the masses, with its limit.

    Returns (xi, limit) where

        xi = sigma/(gamma A_N^2) sum_k beta_k^2 phi^{t,s}(m_k)

    (closed form, no simulation) and limit = K/2 (v(t)+v(s)-v(|t-s|)).  If no
    mass vector is supplied one is drawn from the law.
    """
    if not (0.0 <= t <= cfg.t0 and 0.0 <= s <= cfg.t0):
        raise ValueError("t, s must lie in [0, t0]")
    cons = derive_constants(cfg)
    if masses is None:
        masses = sample_masses(law, cfg.N, stream(rng_seed, 0x77))
    masses = np.asarray(masses, dtype=float)
    if t == 0.0 or s == 0.0:
        xi = 0.0
    else:
        xi = float(
            cfg.sigma / (cfg.gamma * cons.A_N**2)
            * cfg.beta_kN**2
            * phi_ts(masses, t, s, cfg.gamma).sum()
        )
    vf = variance_fn(law.family, law.params, cfg.gamma)
    K = 2.0 * cfg.sigma * cfg.C_beta**2 * law.meta.C_delta / (cfg.gamma**2 * cfg.C_alpha**2)
    limit = float(0.5 * K * (vf.v(t) + vf.v(s) - vf.v(abs(t - s))))
    return xi, limit
