"""Random diffusivity and random Hurst element: conditionally Gaussian limits.

The extended limit process is Z_t = sqrt(A) * G^(H)_t where A = C_alpha^(-2)
is a positive random amplitude independent of everything else, H a random
element of (1/2, 1)^K, and, given H = h, G^(h) is centered Gaussian with

    Cov(G^(h)_t, G^(h)_s) = (2 sigma C_beta^2 C_delta / gamma^2)
                            * (v_h(t) + v_h(s) - v_h(|t-s|)) / 2.

Marginals are normal variance mixtures: kurtosis 3 E[A^2]/E[A]^2 at fixed h.

Factorizations of the grid kernel are cached per distinct h; continuous H
laws are bucketed to a documented resolution (default 1e-3 in each
coordinate, set h_bucket=None for exact per-path kernels).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn

from .ensemble import TrajectoryEnsemble
from .limit_gauss import CovarianceModel, cholesky_with_jitter, covariance_matrix
from .mass_laws import variance_fn
from .rng import stream

__all__ = [
    "ALaw",
    "HLaw",
    "MixingLaw",
    "SuperstatModel",
    "sample_mixing",
    "sample_superstat_paths",
    "conditional_variance",
    "total_variance",
]

A_KINDS = ("degenerate", "exponential", "lognormal", "gengamma", "sqweibull")
H_KINDS = ("degenerate", "uniform", "discrete", "product")

QUAD_TOL = 1e-8


@dataclass(frozen=True)
class ALaw:
    """Distribution of the random amplitude A; E[A] must be finite.

    kinds / params:
      degenerate: (a,)           exponential: (theta,)  [mean theta]
      lognormal:  (mu, s)        gengamma:    (p, q, r) [density ~ x^(p-1) e^(-(x/q)^r)]
      sqweibull:  (k, lam)       [A = (lam * Weibull(k))^2]
    """

    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind not in A_KINDS:
            raise ValueError(f"unknown A law {self.kind!r}")
        p = tuple(float(x) for x in self.params)
        object.__setattr__(self, "params", p)
        if self.kind == "degenerate" and p[0] <= 0:
            raise ValueError("degenerate A must be > 0")
        if self.kind == "exponential" and p[0] <= 0:
            raise ValueError("exponential theta must be > 0")
        if self.kind == "lognormal" and p[1] <= 0:
            raise ValueError("lognormal s must be > 0")
        if self.kind == "gengamma" and any(x <= 0 for x in p):
            raise ValueError("gengamma parameters must be > 0")
        if self.kind == "sqweibull" and any(x <= 0 for x in p):
            raise ValueError("sqweibull parameters must be > 0")

    def mean(self) -> float:
        k, p = self.kind, self.params
        if k == "degenerate":
            return p[0]
        if k == "exponential":
            return p[0]
        if k == "lognormal":
            return math.exp(p[0] + p[1] ** 2 / 2.0)
        if k == "gengamma":
            pp, q, r = p
            return q * gamma_fn((pp + 1.0) / r) / gamma_fn(pp / r)
        k_, lam = p
        return lam**2 * gamma_fn(1.0 + 2.0 / k_)

    def moment2(self) -> float:
        k, p = self.kind, self.params
        if k == "degenerate":
            return p[0] ** 2
        if k == "exponential":
            return 2.0 * p[0] ** 2
        if k == "lognormal":
            return math.exp(2.0 * p[0] + 2.0 * p[1] ** 2)
        if k == "gengamma":
            pp, q, r = p
            return q**2 * gamma_fn((pp + 2.0) / r) / gamma_fn(pp / r)
        k_, lam = p
        return lam**4 * gamma_fn(1.0 + 4.0 / k_)

    def sample(self, rng, n):
        k, p = self.kind, self.params
        if k == "degenerate":
            return np.full(n, p[0])
        if k == "exponential":
            return rng.exponential(p[0], size=n)
        if k == "lognormal":
            return np.exp(p[0] + p[1] * rng.standard_normal(n))
        if k == "gengamma":
            pp, q, r = p
            return q * rng.gamma(pp / r, 1.0, size=n) ** (1.0 / r)
        k_, lam = p
        return (lam * rng.weibull(k_, size=n)) ** 2

    def laplace(self, lam):
        """L[A](lam) = E[exp(-lam A)]; analytic where possible, quadrature otherwise."""
        k, p = self.kind, self.params
        lam = np.asarray(lam, dtype=float)
        if k == "degenerate":
            return np.exp(-p[0] * lam)
        if k == "exponential":
            return 1.0 / (1.0 + p[0] * lam)
        return _quad_vec(lambda x, s: np.exp(-s * x), self, lam)

    def dlaplace(self, lam):
        """d/dlam L[A](lam) = -E[A exp(-lam A)]."""
        k, p = self.kind, self.params
        lam = np.asarray(lam, dtype=float)
        if k == "degenerate":
            return -p[0] * np.exp(-p[0] * lam)
        if k == "exponential":
            return -p[0] / (1.0 + p[0] * lam) ** 2
        return _quad_vec(lambda x, s: -x * np.exp(-s * x), self, lam)

    def _pdf(self, x):
        k, p = self.kind, self.params
        x = np.asarray(x, dtype=float)
        if k == "lognormal":
            mu, s = p
            return np.exp(-((np.log(x) - mu) ** 2) / (2 * s**2)) / (x * s * math.sqrt(2 * math.pi))
        if k == "gengamma":
            pp, q, r = p
            return r * (x / q) ** (pp - 1.0) * np.exp(-((x / q) ** r)) / (q * gamma_fn(pp / r))
        if k == "sqweibull":
            k_, lam = p
            # A = W^2: f_A(x) = f_W(sqrt x)/(2 sqrt x)
            w = np.sqrt(x)
            fw = (k_ / lam) * (w / lam) ** (k_ - 1.0) * np.exp(-((w / lam) ** k_))
            return fw / (2.0 * w)
        raise ValueError(f"pdf not needed for {k}")


def _quad_vec(fn, alaw, lam):
    lam = np.atleast_1d(lam)
    out = np.empty(lam.shape)
    for i, s in enumerate(lam.ravel()):
        val, _ = integrate.quad(
            lambda x: fn(x, s) * alaw._pdf(x), 0.0, np.inf,
            epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200,
        )
        out.ravel()[i] = val
    return out if out.size > 1 else float(out[0])


@dataclass(frozen=True)
class HLaw:
    """Distribution of the Hurst element H on a subset of (1/2, 1)^K.

    kinds / params:
      degenerate: h                      uniform: (h0, h1)
      discrete:   (points, weights)      points: tuple of K-tuples
      product:    (marginals, coupled)   marginals: tuple of 1-D HLaws;
                                         coupled=True ties them through one
                                         shared latent uniform
    """

    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind not in H_KINDS:
            raise ValueError(f"unknown H law {self.kind!r}")
        for h in self._support_probe():
            if not (0.5 < h < 1.0):
                raise ValueError(f"H support must lie in (1/2, 1); found {h}")

    def _support_probe(self):
        k, p = self.kind, self.params
        if k == "degenerate":
            return [float(p[0])]
        if k == "uniform":
            return [float(p[0]), float(p[1])]
        if k == "discrete":
            return [x for pt in p[0] for x in np.atleast_1d(pt)]
        probe = []
        for mg in p[0]:
            probe.extend(mg._support_probe())
        return probe

    @property
    def K(self) -> int:
        k, p = self.kind, self.params
        if k in ("degenerate", "uniform"):
            return 1
        if k == "discrete":
            return len(np.atleast_1d(p[0][0]))
        return len(p[0])

    @property
    def is_discrete(self) -> bool:
        if self.kind in ("degenerate", "discrete"):
            return True
        if self.kind == "product":
            return all(mg.is_discrete for mg in self.params[0])
        return False

    def _ppf(self, u):
        """Inverse CDF for 1-D laws (used by the coupled product)."""
        k, p = self.kind, self.params
        if k == "degenerate":
            return np.full_like(np.asarray(u, dtype=float), float(p[0]))
        if k == "uniform":
            h0, h1 = float(p[0]), float(p[1])
            return h0 + (h1 - h0) * np.asarray(u, dtype=float)
        if k == "discrete":
            pts = np.array([float(np.atleast_1d(x)[0]) for x in p[0]])
            cw = np.cumsum(np.asarray(p[1], dtype=float))
            cw = cw / cw[-1]
            return pts[np.searchsorted(cw, np.asarray(u, dtype=float), side="left")]
        raise ValueError("ppf undefined for product laws")

    def sample(self, rng, n) -> np.ndarray:
        """n draws, shape (n, K)."""
        k, p = self.kind, self.params
        if k == "degenerate":
            return np.full((n, 1), float(p[0]))
        if k == "uniform":
            return self._ppf(rng.random(n))[:, None]
        if k == "discrete":
            pts = np.array([np.atleast_1d(pt).astype(float) for pt in p[0]])
            w = np.asarray(p[1], dtype=float)
            idx = rng.choice(len(pts), size=n, p=w / w.sum())
            return pts[idx]
        marginals, coupled = p
        if coupled:
            u = rng.random(n)
            cols = [mg._ppf(u) for mg in marginals]
        else:
            cols = [mg.sample(rng, n)[:, 0] for mg in marginals]
        return np.column_stack(cols)

    def expect(self, f, tol=QUAD_TOL) -> float:
        """E[f(h)] with f taking a K-tuple; exact for discrete laws,
        adaptive quadrature (tol 1e-8) over continuous coordinates."""
        k, p = self.kind, self.params
        if k == "degenerate":
            return float(f((float(p[0]),)))
        if k == "discrete":
            w = np.asarray(p[1], dtype=float)
            w = w / w.sum()
            return float(sum(wi * f(tuple(np.atleast_1d(pt).astype(float))) for pt, wi in zip(p[0], w)))
        if k == "uniform":
            h0, h1 = float(p[0]), float(p[1])
            val, _ = integrate.quad(lambda h: f((h,)), h0, h1, epsabs=tol, epsrel=tol, limit=200)
            return val / (h1 - h0)
        marginals, coupled = p
        if coupled:
            val, _ = integrate.quad(
                lambda u: f(tuple(float(mg._ppf(u)) for mg in marginals)),
                0.0, 1.0, epsabs=tol, epsrel=tol, limit=200,
            )
            return val

        def reduce(idx, prefix):
            if idx == len(marginals):
                return f(tuple(prefix))
            return marginals[idx].expect(lambda h: reduce(idx + 1, prefix + [h[0]]), tol=tol)

        return float(reduce(0, []))


@dataclass(frozen=True)
class MixingLaw:
    """Joint law of (A, H); the two are independent."""

    A_law: ALaw
    H_law: HLaw


def sample_mixing(mixing: MixingLaw, n, rng_seed):
    """n i.i.d. pairs: returns (A values shape (n,), H values shape (n, K))."""
    n = int(n)
    rng = stream(rng_seed, 0x21)
    A = mixing.A_law.sample(rng, n)
    H = mixing.H_law.sample(rng, n)
    return A, H


def _fbm_mixture_variance(h_tuple, gamma):
    h_tuple = tuple(float(h) for h in h_tuple)
    if len(h_tuple) == 1:
        return variance_fn("stable_power", {"H": h_tuple[0]}, gamma)
    return variance_fn("power_mixture", {"H_list": tuple(sorted(h_tuple))}, gamma)


@dataclass(frozen=True)
class SuperstatModel:
    """Mixing law, base constants, and the h-indexed variance family.

    v_of_h maps a K-tuple h to a VarianceFn; the default is the fBm /
    fBm-mixture family, for which the conditional amplitude satisfies
    Var(Z_t | A, H=h) = 2 sigma C_beta^2 C_delta * A *
                        sum_k Gamma(2-2h_k) gamma^(2h_k-3) / (2h_k(2h_k-1)) t^(2h_k).
    """

    mixing: MixingLaw
    sigma: float = 1.0
    gamma: float = 1.0
    C_beta: float = 1.0
    C_delta: float = 1.0
    v_of_h: object = None
    h_bucket: float = 1e-3

    @property
    def K_pref(self) -> float:
        """Covariance prefactor of the conditional Gaussian part, 2 sigma C_beta^2 C_delta/gamma^2."""
        return 2.0 * self.sigma * self.C_beta**2 * self.C_delta / self.gamma**2

    def variance_for(self, h_tuple):
        if self.v_of_h is not None:
            return self.v_of_h(tuple(float(h) for h in h_tuple))
        return _fbm_mixture_variance(h_tuple, self.gamma)


def _bucket_key(h_row, bucket):
    if bucket is None or bucket <= 0:
        return tuple(float(h) for h in h_row)
    return tuple(round(float(h) / bucket) * bucket for h in h_row)


def sample_superstat_paths(model: SuperstatModel, grid, n_traj, rng_seed) -> TrajectoryEnsemble:
    """Per trajectory: draw (A, h), sample one conditional Gaussian path on the
    grid, scale by sqrt(A).  Returns the ensemble with a per-path (A, H)
    sidecar record."""
    grid = np.asarray(grid, dtype=float)
    n_traj = int(n_traj)
    A, H = sample_mixing(model.mixing, n_traj, rng_seed)

    keys = [_bucket_key(row, model.h_bucket) for row in H]
    factors = {}
    for key in set(keys):
        cm = CovarianceModel(v=model.variance_for(key), K=model.K_pref, grid=grid)
        L, _ = cholesky_with_jitter(covariance_matrix(cm))
        factors[key] = L

    n_grid = grid.size
    paths = np.empty((n_traj, n_grid + 1))
    paths[:, 0] = 0.0
    for j in range(n_traj):
        z = stream(rng_seed, 0x22, j).standard_normal(n_grid)
        paths[j, 1:] = math.sqrt(A[j]) * (factors[keys[j]] @ z)

    full_grid = np.concatenate(([0.0], grid))
    return TrajectoryEnsemble(
        grid=full_grid,
        observables={"Z": paths},
        meta={"seed": int(rng_seed), "K_pref": model.K_pref, "h_bucket": model.h_bucket},
        sidecar={"A": A, "H": H},
    )


def conditional_variance(model: SuperstatModel, h_vector, t) -> float:
    """Var(Z_t | H = h) = K_pref * E[A] * v_h(t), averaged over A only."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0.0:
        return 0.0
    vf = model.variance_for(tuple(np.atleast_1d(h_vector)))
    return float(model.K_pref * model.mixing.A_law.mean() * vf.v(t))


def total_variance(model: SuperstatModel, t, tol=QUAD_TOL) -> float:
    """Var(Z_t) = E_H[Var(Z_t | H)]; exact for discrete H, quadrature otherwise."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0.0:
        return 0.0
    return model.mixing.H_law.expect(lambda h: conditional_variance(model, h, t), tol=tol)
