"""Bath-particle mass distributions and their limiting variance functions.

Each catalogued family pairs a mass distribution mu_N on [m_min, infinity)
with the Bernstein function Phi and the limiting variance function v that the
large-N theory attaches to it:

  stable_power(H)      density ~ y^(2-2H) on (m_min, m_max],  H in (1/2, 1)
                       Phi(l) = Gamma(2-2H) l^(2H-1) / (2H-1)
                       v(t)   = Gamma(2-2H) g^(2H-1) t^(2H) / (2H(2H-1))
  power_mixture(H_1..H_K)   sum of the above over components
  tempered_stable(H)   density ~ y^(2-2H) e^(-y) on (m_min, inf)
                       Phi(l) = (l+1)^(2H-1) - 1
                       v(t)   = ((g t+1)^(2H) - 1)/(2 H g) - t
  exponential_levy     density ~ y^2 g e^(-g y) on (m_min, inf), rate g matched
                       to the friction constant; Phi(l) = l/(l+g), v = t - log(t+1)
  dirac_npower(delta)  point mass at N^(delta/2); v(t) = t   (Wiener limit)
  dirac_one            point mass at 1; v(t) = t + (e^(-g t) - 1)/g

m*_N is the normalizing constant of mu_N; m*_N * N^delta -> C_delta.  The
kernel integral

    e_N(t) = integral (1 - exp(-gamma y t)) / y^2 mu_N(dy)

satisfies e_N(t)/m*_N increasing to vdot(t) = Phi(gamma t) for the subordinator
families.

Note on the printed Gamma-subordinator pair: the Frullani integral for
nu(dy) = e^(-y) y^(-1) dy gives Phi(l) = log(1 + l); the evaluation-only tag
"gamma_sub" implements that (a log(1 - l) variant is not a Bernstein function).
The tempered_stable Levy density carries the normalizing constant
(2H-1)/Gamma(2-2H) so its Phi and v closed forms hold exactly; the covariance
constant C_delta absorbs the convention, leaving K * v(t) invariant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize
from scipy.special import gamma as gamma_fn
from scipy.special import gammaincc

__all__ = [
    "MassLawMeta",
    "MassLaw",
    "VarianceFn",
    "make_mass_law",
    "sample_masses",
    "e_N",
    "phi",
    "variance_fn",
    "FAMILIES",
]

FAMILIES = (
    "stable_power",
    "power_mixture",
    "tempered_stable",
    "exponential_levy",
    "dirac_npower",
    "dirac_one",
)

# Laplace exponents available only for pointwise evaluation via phi(); these
# have no catalogued sampler.
EXTRA_PHI = ("sqrt_decay", "log_frullani", "gamma_sub", "tempered_alpha")

QUAD_ABS_TOL = 1e-10


@dataclass(frozen=True)
class MassLawMeta:
    """Scaling exponents (d, d', delta) and normalizer constant of a law."""

    d: float
    d_prime: float
    delta: float
    C_delta: float


@dataclass(frozen=True)
class MassLaw:
    """A bath-mass distribution mu_N together with its closed forms."""

    family: str
    params: dict
    N: int
    m_min: float
    m_max: float  # inf for untruncated families, the atom for Dirac families
    m_star: float
    meta: MassLawMeta

    @property
    def is_dirac(self) -> bool:
        return self.family in ("dirac_npower", "dirac_one")

    @property
    def atom(self) -> float:
        if not self.is_dirac:
            raise ValueError(f"{self.family} has no atom")
        return self.m_max


@dataclass(frozen=True)
class VarianceFn:
    """Limiting variance function v with its derivative and Laplace exponent.

    phi is None for Dirac families (no subordinator representation).
    """

    family: str
    params: dict
    gamma: float
    v: Callable[[np.ndarray], np.ndarray]
    vdot: Callable[[np.ndarray], np.ndarray]
    phi: Optional[Callable[[np.ndarray], np.ndarray]]


def _check_H(H):
    if not (0.5 < H < 1.0):
        raise ValueError(f"H must lie in (1/2, 1), got {H}")


def _mixture_exponents(Hs):
    Hs = [float(h) for h in Hs]
    if len(Hs) == 0:
        raise ValueError("power_mixture needs at least one component")
    for h in Hs:
        _check_H(h)
    if sorted(Hs) != Hs:
        raise ValueError("mixture Hurst components must be increasing")
    return Hs


def make_mass_law(family, params, N, d=None, delta=None) -> MassLaw:
    """Construct a catalogued mass law for bath size N.

    d is the mass-floor exponent (m_min = N^(-d)); delta the normalizer
    exponent.  For dirac_npower only delta is free (d = -delta/2); dirac_one
    fixes both to 0.
    """
    N = int(N)
    if N < 1:
        raise ValueError("N must be >= 1")
    params = dict(params)

    if family == "stable_power":
        H = float(params["H"])
        _check_H(H)
        if d is None or delta is None:
            raise ValueError("stable_power requires d and delta")
        if d <= 0 or delta <= 0:
            raise ValueError("stable_power requires d > 0 and delta > 0")
        p = 3.0 - 2.0 * H
        m_min = N ** (-float(d))
        # truncation point solves integral_(0, m_max] y^2 nu(dy) = N^delta
        m_max = (p * N**delta) ** (1.0 / p)
        if m_max <= m_min:
            raise ValueError(f"empty support: m_max = {m_max} <= m_min = {m_min}")
        m_star = 1.0 / ((m_max**p - m_min**p) / p)
        meta = MassLawMeta(d=float(d), d_prime=3.0 * d - delta, delta=float(delta), C_delta=1.0)
        return MassLaw(family, {"H": H}, N, m_min, m_max, m_star, meta)

    if family == "power_mixture":
        Hs = _mixture_exponents(params["H_list"])
        if d is None or delta is None:
            raise ValueError("power_mixture requires d and delta")
        if d <= 0 or delta <= 0:
            raise ValueError("power_mixture requires d > 0 and delta > 0")
        ps = [3.0 - 2.0 * h for h in Hs]
        m_min = N ** (-float(d))
        target = float(N) ** delta

        def second_moment(m):
            return sum(m**p / p for p in ps) - target

        hi = 1.0
        while second_moment(hi) < 0:
            hi *= 2.0
        m_max = optimize.brentq(second_moment, 0.0, hi, rtol=1e-13)
        if m_max <= m_min:
            raise ValueError(f"empty support: m_max = {m_max} <= m_min = {m_min}")
        m_star = 1.0 / sum((m_max**p - m_min**p) / p for p in ps)
        meta = MassLawMeta(d=float(d), d_prime=3.0 * d - delta, delta=float(delta), C_delta=1.0)
        return MassLaw(family, {"H_list": tuple(Hs)}, N, m_min, m_max, m_star, meta)

    if family == "tempered_stable":
        H = float(params["H"])
        _check_H(H)
        if d is None or d <= 0:
            raise ValueError("tempered_stable requires d > 0")
        s = 3.0 - 2.0 * H
        m_min = N ** (-float(d))
        # Levy density (2H-1)/Gamma(2-2H) e^(-y) y^(-2H): normalized so that
        # Phi(l) = (l+1)^(2H-1) - 1 exactly (the bare density is off by that
        # constant); second moment of nu is then (2H-1)(2-2H)
        norm_c = (2.0 * H - 1.0) / gamma_fn(2.0 - 2.0 * H)
        m_star = 1.0 / (norm_c * gamma_fn(s) * gammaincc(s, m_min))
        C_delta = 1.0 / ((2.0 * H - 1.0) * (2.0 - 2.0 * H))
        meta = MassLawMeta(d=float(d), d_prime=3.0 * d, delta=0.0, C_delta=C_delta)
        return MassLaw(family, {"H": H}, N, m_min, math.inf, m_star, meta)

    if family == "exponential_levy":
        g = float(params.get("rate", 1.0))
        if g <= 0:
            raise ValueError("exponential_levy rate must be > 0")
        if d is None or d <= 0:
            raise ValueError("exponential_levy requires d > 0")
        m_min = N ** (-float(d))
        # integral_{m_min}^inf y^2 g e^(-g y) dy = (2/g^2) * Q(3, g m_min)
        m_star = 1.0 / ((2.0 / g**2) * gammaincc(3.0, g * m_min))
        meta = MassLawMeta(d=float(d), d_prime=3.0 * d, delta=0.0, C_delta=g**2 / 2.0)
        return MassLaw(family, {"rate": g}, N, m_min, math.inf, m_star, meta)

    if family == "dirac_npower":
        if delta is None or delta <= 0:
            raise ValueError("dirac_npower requires delta > 0")
        atom = N ** (delta / 2.0)
        meta = MassLawMeta(d=-delta / 2.0, d_prime=-2.0 * delta, delta=float(delta), C_delta=1.0)
        return MassLaw(family, {}, N, atom, atom, N ** (-float(delta)), meta)

    if family == "dirac_one":
        meta = MassLawMeta(d=0.0, d_prime=0.0, delta=0.0, C_delta=1.0)
        return MassLaw(family, {}, N, 1.0, 1.0, 1.0, meta)

    raise ValueError(f"unknown mass-law family {family!r}; expected one of {FAMILIES}")


def sample_masses(law: MassLaw, count, rng) -> np.ndarray:
    """Draw `count` i.i.d. masses from mu_N using the given RNG stream.

    stable_power / power_mixture use the analytic inverse CDF of the power
    density on (m_min, m_max]; tempered_stable and exponential_levy reject
    draws of the matching untruncated Gamma law that fall below m_min (the
    acceptance rate is the upper tail mass, recorded on the returned array's
    .acceptance attribute is not kept: it is >= Q(s, m_min), close to 1).
    """
    count = int(count)
    if count < 1:
        raise ValueError("count must be >= 1")

    if law.is_dirac:
        return np.full(count, law.atom)

    if law.family == "stable_power":
        p = 3.0 - 2.0 * law.params["H"]
        u = rng.random(count)
        return (u * law.m_max**p + (1.0 - u) * law.m_min**p) ** (1.0 / p)

    if law.family == "power_mixture":
        ps = np.array([3.0 - 2.0 * h for h in law.params["H_list"]])
        w = (law.m_max**ps - law.m_min**ps) / ps
        cw = np.cumsum(w / w.sum())
        comp = np.searchsorted(cw, rng.random(count))
        u = rng.random(count)
        pk = ps[comp]
        return (u * law.m_max**pk + (1.0 - u) * law.m_min**pk) ** (1.0 / pk)

    if law.family == "tempered_stable":
        shape = 3.0 - 2.0 * law.params["H"]
        return _rejection_gamma(rng, count, shape, 1.0, law.m_min)

    if law.family == "exponential_levy":
        g = law.params["rate"]
        return _rejection_gamma(rng, count, 3.0, 1.0 / g, law.m_min)

    raise ValueError(f"no sampler for family {law.family!r}")


def _rejection_gamma(rng, count, shape, scale, m_min):
    out = np.empty(count)
    filled = 0
    while filled < count:
        want = count - filled
        batch = rng.gamma(shape, scale, size=max(want + 16, int(1.1 * want)))
        acc = batch[batch > m_min]
        take = min(acc.size, want)
        out[filled : filled + take] = acc[:take]
        filled += take
    return out


def _nu_density(law: MassLaw):
    """Levy density of the family's subordinator, as a vectorized callable."""
    if law.family == "stable_power":
        H = law.params["H"]
        return lambda y: y ** (-2.0 * H)
    if law.family == "power_mixture":
        Hs = law.params["H_list"]
        return lambda y: sum(y ** (-2.0 * h) for h in Hs)
    if law.family == "tempered_stable":
        H = law.params["H"]
        c = (2.0 * H - 1.0) / gamma_fn(2.0 - 2.0 * H)
        return lambda y: c * np.exp(-y) * y ** (-2.0 * H)
    if law.family == "exponential_levy":
        g = law.params["rate"]
        return lambda y: g * np.exp(-g * y)
    raise ValueError(f"{law.family} has no Levy-density representation")


def e_N(law: MassLaw, gamma, t) -> float:
    """Kernel integral e_N(t) = int (1 - e^(-gamma y t)) / y^2 mu_N(dy).

    Exact for Dirac laws; adaptive quadrature (absolute tolerance 1e-10) using
    mu_N(dy) = m*_N y^2 nu(dy) on the support window otherwise.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0.0:
        return 0.0
    if law.is_dirac:
        m = law.atom
        return (1.0 - math.exp(-gamma * m * t)) / (m * m)
    nu = _nu_density(law)
    val, _ = integrate.quad(
        lambda y: (1.0 - math.exp(-gamma * y * t)) * nu(y),
        law.m_min,
        law.m_max,
        epsabs=QUAD_ABS_TOL,
        epsrel=1e-10,
        limit=400,
    )
    return law.m_star * val


def phi(family, params, lam):
    """Laplace exponent Phi(lambda) of the family's subordinator, closed form.

    Accepts the catalogued sampling families plus the evaluation-only tags in
    EXTRA_PHI.  Vectorized over lam; Phi(0) = 0 for every family.
    """
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise ValueError("lambda must be >= 0")
    scalar = lam.ndim == 0
    lam = np.atleast_1d(lam)

    if family == "stable_power":
        H = float(params["H"])
        _check_H(H)
        out = gamma_fn(2.0 - 2.0 * H) / (2.0 * H - 1.0) * lam ** (2.0 * H - 1.0)
    elif family == "power_mixture":
        Hs = _mixture_exponents(params["H_list"])
        out = sum(gamma_fn(2.0 - 2.0 * h) / (2.0 * h - 1.0) * lam ** (2.0 * h - 1.0) for h in Hs)
    elif family == "tempered_stable":
        H = float(params["H"])
        _check_H(H)
        out = (lam + 1.0) ** (2.0 * H - 1.0) - 1.0
    elif family == "exponential_levy":
        g = float(params.get("rate", 1.0))
        out = lam / (lam + g)
    elif family == "sqrt_decay":
        out = np.sqrt(lam) * (1.0 - np.exp(-2.0 * np.sqrt(lam)))
    elif family == "log_frullani":
        out = np.where(lam > 0, lam * np.log1p(1.0 / np.where(lam > 0, lam, 1.0)), 0.0)
    elif family == "gamma_sub":
        out = np.log1p(lam)
    elif family == "tempered_alpha":
        alpha = float(params["alpha"])
        if not (0.0 < alpha < 1.0):
            raise ValueError("tempered_alpha requires alpha in (0, 1)")
        out = 1.0 - (1.0 + lam) ** (alpha - 1.0)
    else:
        raise ValueError(f"unknown Phi family {family!r}")

    out = np.where(lam == 0.0, 0.0, out)
    return float(out[0]) if scalar else out


def variance_fn(family, params, gamma) -> VarianceFn:
    """Limiting variance function v(t) (with vdot and Phi) for the family.

    gamma is the friction constant of the system; exponential_levy is
    gamma-matched (Levy rate = friction), so its v(t) = t - log(t+1)
    independently of gamma.
    """
    g = float(gamma)
    params = dict(params)

    if family == "stable_power":
        H = float(params["H"])
        _check_H(H)
        c = gamma_fn(2.0 - 2.0 * H) * g ** (2.0 * H - 1.0) / (2.0 * H * (2.0 * H - 1.0))

        def v(t, H=H, c=c):
            return c * np.asarray(t, dtype=float) ** (2.0 * H)

        def vdot(t, H=H, c=c):
            return 2.0 * H * c * np.asarray(t, dtype=float) ** (2.0 * H - 1.0)

        return VarianceFn(family, {"H": H}, g, v, vdot, lambda lam: phi(family, {"H": H}, lam))

    if family == "power_mixture":
        Hs = _mixture_exponents(params["H_list"])
        cs = [gamma_fn(2.0 - 2.0 * h) * g ** (2.0 * h - 1.0) / (2.0 * h * (2.0 * h - 1.0)) for h in Hs]

        def v(t, Hs=Hs, cs=cs):
            t = np.asarray(t, dtype=float)
            return sum(c * t ** (2.0 * h) for h, c in zip(Hs, cs))

        def vdot(t, Hs=Hs, cs=cs):
            t = np.asarray(t, dtype=float)
            return sum(2.0 * h * c * t ** (2.0 * h - 1.0) for h, c in zip(Hs, cs))

        prm = {"H_list": tuple(Hs)}
        return VarianceFn(family, prm, g, v, vdot, lambda lam: phi(family, prm, lam))

    if family == "tempered_stable":
        H = float(params["H"])
        _check_H(H)

        def v(t, H=H, g=g):
            t = np.asarray(t, dtype=float)
            return ((g * t + 1.0) ** (2.0 * H) - 1.0) / (2.0 * H * g) - t

        def vdot(t, H=H, g=g):
            t = np.asarray(t, dtype=float)
            return (g * t + 1.0) ** (2.0 * H - 1.0) - 1.0

        return VarianceFn(family, {"H": H}, g, v, vdot, lambda lam: phi(family, {"H": H}, lam))

    if family == "exponential_levy":

        def v(t):
            t = np.asarray(t, dtype=float)
            return t - np.log1p(t)

        def vdot(t):
            t = np.asarray(t, dtype=float)
            return t / (t + 1.0)

        return VarianceFn(family, {"rate": g}, g, v, vdot, lambda lam: phi(family, {"rate": g}, lam))

    if family == "dirac_npower":

        def v(t):
            return np.asarray(t, dtype=float) * 1.0

        def vdot(t):
            t = np.asarray(t, dtype=float)
            return np.where(t > 0, 1.0, 0.0)

        return VarianceFn(family, {}, g, v, vdot, None)

    if family == "dirac_one":

        def v(t, g=g):
            t = np.asarray(t, dtype=float)
            return t + (np.exp(-g * t) - 1.0) / g

        def vdot(t, g=g):
            t = np.asarray(t, dtype=float)
            return 1.0 - np.exp(-g * t)

        return VarianceFn(family, {}, g, v, vdot, None)

    raise ValueError(f"unknown variance family {family!r}")
