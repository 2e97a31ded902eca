"""Estimators and the N-convergence harness.

All estimators are deterministic functions of their input ensembles.  The
mean squared displacement averages over trajectories and, for
stationary-increment observables, over time origins; per-trajectory batching
supplies the standard errors.  The sweep confronts the finite-N system with
the limit theory: the chain gap sup_t E|Xtilde - Ztilde|^2 decays like
N^(a-1) and E sup_t |X - Xtilde|^2 at least like N^(-2(b-d)), while the
mass-conditional covariance concentrates on its limit.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .ensemble import TrajectoryEnsemble
from .mass_laws import make_mass_law, sample_masses
from .params import SystemConfig
from .particle_sim import conditional_cov_check, simulate_chain
from .rng import stream

__all__ = [
    "MsdCurve",
    "ScalingReport",
    "GaussianityReport",
    "msd",
    "fit_exponent",
    "empirical_cov",
    "gaussianity_test",
    "convergence_sweep",
]


@dataclass
class MsdCurve:
    """Ensemble(-and-time)-averaged squared displacement per lag."""

    lags: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    n_traj: int

    def __post_init__(self):
        self.lags = np.asarray(self.lags, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.stderr = np.asarray(self.stderr, dtype=float)
        if np.any(self.values < 0):
            raise ValueError("MSD values must be nonnegative")


def _lag_indices(grid, lags):
    dt = grid[1] - grid[0]
    if not np.allclose(np.diff(grid), dt, rtol=1e-9, atol=0.0):
        raise ValueError("msd requires a uniform grid")
    idx = np.rint(np.asarray(lags, dtype=float) / dt).astype(int)
    if np.any(np.abs(idx * dt - np.asarray(lags)) > 1e-9 * dt + 1e-12):
        raise ValueError("lags must be multiples of the grid spacing")
    if np.any(idx < 0) or np.any(idx >= grid.size):
        raise ValueError("lags outside the grid range")
    return idx


def msd(ensemble: TrajectoryEnsemble, lags, observable=None, time_average=True) -> MsdCurve:
    """MSD(l) = mean of (Z_{t+l} - Z_t)^2 over trajectories (and time origins).

    time_average=False restricts to the t = 0 origin, for observables whose
    increments are not stationary at finite N.
    """
    if observable is None:
        observable = ensemble.labels[0]
    paths = ensemble[observable]
    if paths.shape[0] < 1:
        raise ValueError("empty ensemble")
    idx = _lag_indices(ensemble.grid, lags)
    values = np.empty(idx.size)
    stderr = np.empty(idx.size)
    n = paths.shape[0]
    for i, j in enumerate(idx):
        if j == 0:
            values[i] = 0.0
            stderr[i] = 0.0
            continue
        if time_average:
            d2 = (paths[:, j:] - paths[:, :-j]) ** 2
            per_traj = d2.mean(axis=1)
        else:
            per_traj = paths[:, j] ** 2
        values[i] = per_traj.mean()
        stderr[i] = per_traj.std(ddof=1) / np.sqrt(n) if n > 1 else 0.0
    return MsdCurve(lags=np.asarray(lags, dtype=float), values=values, stderr=stderr, n_traj=n)


def _loglog_fit(x, y, w=None):
    """Slope and its standard error for y ~ x^slope on log-log axes."""
    lx, ly = np.log(x), np.log(y)
    A = np.vstack([lx, np.ones_like(lx)]).T
    if w is None:
        coef, res, *_ = np.linalg.lstsq(A, ly, rcond=None)
        n = lx.size
        if n > 2:
            rss = float(((ly - A @ coef) ** 2).sum())
            cov = rss / (n - 2) * np.linalg.inv(A.T @ A)
            se = float(np.sqrt(cov[0, 0]))
        else:
            se = float("nan")
        return float(coef[0]), se
    W = np.diag(w)
    G = np.linalg.inv(A.T @ W @ A)
    coef = G @ (A.T @ W @ ly)
    return float(coef[0]), float(np.sqrt(G[0, 0]))


def fit_exponent(curve: MsdCurve, window):
    """Weighted log-log slope of the MSD over lags in [window[0], window[1]].

    Returns (slope, stderr).  Requires at least 4 strictly positive values in
    the window; weights are 1/se(log)^2 when stderrs are available.
    """
    l1, l2 = window
    mask = (curve.lags >= l1) & (curve.lags <= l2)
    if mask.sum() < 4:
        raise ValueError(f"need >= 4 lags in window [{l1}, {l2}], found {int(mask.sum())}")
    vals = curve.values[mask]
    if np.any(vals <= 0):
        raise ValueError("nonpositive MSD values in fit window")
    errs = curve.stderr[mask]
    if np.all(errs > 0):
        w = (vals / errs) ** 2
        return _loglog_fit(curve.lags[mask], vals, w)
    return _loglog_fit(curve.lags[mask], vals)


def empirical_cov(ensemble: TrajectoryEnsemble, times, observable=None):
    """Sample covariance matrix across trajectories at the given grid times.

    Returns (cov, stderr) where stderr is the per-entry standard error of the
    mean of centered products.
    """
    if observable is None:
        observable = ensemble.labels[0]
    paths = ensemble[observable]
    n = paths.shape[0]
    if n < 2:
        raise ValueError("need at least 2 trajectories")
    cols = []
    for t in np.asarray(times, dtype=float):
        j = int(np.argmin(np.abs(ensemble.grid - t)))
        if abs(ensemble.grid[j] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} not on the grid")
        cols.append(paths[:, j])
    Y = np.column_stack(cols)
    Yc = Y - Y.mean(axis=0)
    prods = Yc[:, :, None] * Yc[:, None, :]
    cov = prods.sum(axis=0) / (n - 1)
    se = prods.std(axis=0, ddof=1) / np.sqrt(n)
    return cov, se


@dataclass
class GaussianityReport:
    n: int
    mean: float
    variance: float
    kurtosis: float          # m4 / m2^2; 3 for a Gaussian
    kurtosis_se: float
    ks_stat: float
    ks_pvalue: float

    def rejected(self, level=0.01) -> bool:
        return self.ks_pvalue < level


def gaussianity_test(ensemble: TrajectoryEnsemble, t, observable=None) -> GaussianityReport:
    """Moments and a KS test against the normal with matched mean/variance."""
    if observable is None:
        observable = ensemble.labels[0]
    paths = ensemble[observable]
    if paths.shape[0] < 100:
        raise ValueError("need at least 100 trajectories")
    j = int(np.argmin(np.abs(ensemble.grid - t)))
    x = paths[:, j]
    mu = x.mean()
    xc = x - mu
    m2 = float((xc**2).mean())
    if m2 <= 0:
        raise ValueError("degenerate variance")
    m4 = float((xc**4).mean())
    kurt = m4 / m2**2
    # influence-function standard error of m4/m2^2
    infl = xc**4 / m2**2 - 2.0 * kurt * xc**2 / m2
    kurt_se = float(infl.std(ddof=1) / np.sqrt(x.size))
    ks = sps.kstest(x, "norm", args=(mu, np.sqrt(m2)))
    return GaussianityReport(
        n=x.size, mean=float(mu), variance=m2, kurtosis=kurt, kurtosis_se=kurt_se,
        ks_stat=float(ks.statistic), ks_pvalue=float(ks.pvalue),
    )


@dataclass
class ScalingReport:
    """Gap statistics and fitted log-log rates across a sweep in N."""

    N_values: np.ndarray
    gap_full: np.ndarray        # E sup_t |X - Xtilde|^2 per N
    gap_chain: np.ndarray       # sup_t E |Xtilde - Ztilde|^2 per N
    xi_err_median: np.ndarray   # median_r |xi^{N,t0,t0}/limit - 1| per N
    slope_full: tuple
    slope_chain: tuple
    theory_full_bound: float    # -2(b - d)
    theory_chain: float         # a - 1
    config_tag: str

    def summary(self) -> str:
        lines = [f"# scaling sweep  config={self.config_tag}"]
        lines.append("N,gap_full,gap_chain,xi_err_median")
        for i, N in enumerate(self.N_values):
            lines.append(
                f"{int(N)},{self.gap_full[i]:.6e},{self.gap_chain[i]:.6e},{self.xi_err_median[i]:.6e}"
            )
        lines.append(
            f"slope gap_chain = {self.slope_chain[0]:+.4f} (se {self.slope_chain[1]:.4f}); "
            f"theory a-1 = {self.theory_chain:+.4f}"
        )
        lines.append(
            f"slope gap_full  = {self.slope_full[0]:+.4f} (se {self.slope_full[1]:.4f}); "
            f"theory bound -2(b-d) = {self.theory_full_bound:+.4f}"
        )
        return "\n".join(lines)


def _config_tag(cfg: SystemConfig) -> str:
    payload = repr(sorted(dataclasses.asdict(cfg).items())).encode()
    return hashlib.sha256(payload).hexdigest()[:12]


def convergence_sweep(cfg_template: SystemConfig, law_spec: dict, N_list,
                      n_traj, seed, n_resamples=20, n_threads=None) -> ScalingReport:
    """Run simulate_chain for each N and fit the gap decay rates.

    law_spec: {"family": ..., "params": {...}, "d": ..., "delta": ...}; d and
    delta default to the template's.  N_list must be ascending with at least
    four entries.
    """
    N_list = [int(N) for N in N_list]
    if len(N_list) < 4 or sorted(N_list) != N_list:
        raise ValueError("N_list must be ascending with >= 4 entries")
    family = law_spec["family"]
    fparams = law_spec.get("params", {})
    d = law_spec.get("d", cfg_template.d)
    delta = law_spec.get("delta", cfg_template.delta)

    g_full, g_chain, xi_err = [], [], []
    meta_d = d
    for i, N in enumerate(N_list):
        law = make_mass_law(family, fparams, N, d=d, delta=delta)
        meta_d = law.meta.d
        cfg = dataclasses.replace(
            cfg_template, N=N, d=law.meta.d, delta=law.meta.delta, C_delta=law.meta.C_delta
        )
        ens = simulate_chain(cfg, law, n_traj, seed, n_threads=n_threads)
        dX = ens["X"] - ens["Xtilde"]
        g_full.append(float(np.mean(np.max(dX * dX, axis=1))))
        dZ = ens["Xtilde"] - ens["Ztilde"]
        g_chain.append(float(np.max(np.mean(dZ * dZ, axis=0))))
        errs = []
        for r in range(n_resamples):
            masses = sample_masses(law, cfg.N, stream(seed, 0x7700 + i, r))
            xi, limit = conditional_cov_check(law, cfg, cfg.t0, cfg.t0, masses=masses)
            errs.append(abs(xi / limit - 1.0))
        xi_err.append(float(np.median(errs)))

    Ns = np.asarray(N_list, dtype=float)
    slope_full = _loglog_fit(Ns, np.asarray(g_full))
    slope_chain = _loglog_fit(Ns, np.asarray(g_chain))
    return ScalingReport(
        N_values=np.asarray(N_list),
        gap_full=np.asarray(g_full),
        gap_chain=np.asarray(g_chain),
        xi_err_median=np.asarray(xi_err),
        slope_full=slope_full,
        slope_chain=slope_chain,
        theory_full_bound=-2.0 * (cfg_template.b - meta_d),
        theory_chain=cfg_template.a - 1.0,
        config_tag=_config_tag(cfg_template),
    )
