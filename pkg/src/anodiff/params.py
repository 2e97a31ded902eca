"""System parameters, derived constants, and the scaling-regime validator.

The bath couplings scale with the particle count as

    alpha_{k,N} = C_alpha * N**(-a),      beta_{k,N} = C_beta * N**(-b),

and the admissible exponent regime is

    0 < a < 1,  b > 0,  2*(a - b) - delta = 1,
    d' < 5 + 8*(b - a),  b > d,

where (d, d', delta) are reported by the attached mass law.  The equality is
checked to relative tolerance 1e-12 because delta is usually derived as
2*(a-b)-1 in floating point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

__all__ = [
    "SystemConfig",
    "DerivedConstants",
    "ValidationReport",
    "RegimeError",
    "validate_regime",
    "derive_constants",
]

EQUALITY_RTOL = 1e-12


class RegimeError(ValueError):
    """Raised when a configuration violates the scaling regime."""


@dataclass(frozen=True)
class SystemConfig:
    """All scalar parameters of one simulation setup (reduced units).

    M        : test-particle mass (> 0)
    sigma    : bath noise strength (> 0)
    gamma    : friction per unit mass, sigma/(kB*T) with kB*T absorbed (> 0)
    C_alpha  : momentum-coupling prefactor (> 0)
    C_beta   : bath-velocity coupling prefactor (> 0)
    a, b     : coupling scaling exponents
    d        : mass-floor exponent, m_min ~ N**(-d)
    delta    : normalizer exponent, m*_N ~ C_delta * N**(-delta), >= 0
    C_delta  : normalizer prefactor (> 0)
    N        : number of bath particles
    t0       : time horizon
    n_steps  : integrator grid resolution on [0, t0]
    seed     : 64-bit RNG seed
    """

    M: float = 1.0
    sigma: float = 1.0
    gamma: float = 1.0
    C_alpha: float = 1.0
    C_beta: float = 1.0
    a: float = 0.8
    b: float = 0.25
    d: float = 0.2
    delta: float = 0.1
    C_delta: float = 1.0
    N: int = 1024
    t0: float = 1.0
    n_steps: int = 1024
    seed: int = 0

    def __post_init__(self):
        for name in ("M", "sigma", "gamma", "C_alpha", "C_beta", "C_delta"):
            if not getattr(self, name) > 0:
                raise RegimeError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.delta < 0:
            raise RegimeError(f"delta must be >= 0, got {self.delta}")
        if self.N < 1:
            raise RegimeError(f"N must be >= 1, got {self.N}")
        if not (self.t0 > 0 and self.n_steps >= 1):
            raise RegimeError("t0 must be > 0 and n_steps >= 1")

    @property
    def alpha_kN(self) -> float:
        """Per-particle momentum coupling C_alpha * N**(-a)."""
        return self.C_alpha * self.N ** (-self.a)

    @property
    def beta_kN(self) -> float:
        """Per-particle velocity coupling C_beta * N**(-b)."""
        return self.C_beta * self.N ** (-self.b)

    @property
    def dt(self) -> float:
        return self.t0 / self.n_steps


@dataclass(frozen=True)
class DerivedConstants:
    """Constants derived from a SystemConfig.

    A_N     : total coupling, sum_k alpha_{k,N} = C_alpha * N**(1-a)
    D_limit : limiting diffusivity sigma*C_beta^2*C_delta/(gamma^2*C_alpha^2)
    K_limit : covariance prefactor, 2*D_limit
    """

    A_N: float
    D_limit: float
    K_limit: float
    _gamma: float = field(repr=False, default=1.0)
    _sigma: float = field(repr=False, default=1.0)
    _beta_kN: float = field(repr=False, default=0.0)

    def beta0_of_mass(self, m):
        """Bath friction component gamma*m^2 - beta_{k,N} fixed by energy balance."""
        return self._gamma * m * m - self._beta_kN

    def sigma0_of_mass(self, m):
        """Bath noise amplitude sigma*m^2 tied to the common strength sigma."""
        return self._sigma * m * m


def derive_constants(cfg: SystemConfig) -> DerivedConstants:
    A_N = cfg.C_alpha * cfg.N ** (1.0 - cfg.a)
    D = cfg.sigma * cfg.C_beta**2 * cfg.C_delta / (cfg.gamma**2 * cfg.C_alpha**2)
    return DerivedConstants(
        A_N=A_N,
        D_limit=D,
        K_limit=2.0 * D,
        _gamma=cfg.gamma,
        _sigma=cfg.sigma,
        _beta_kN=cfg.beta_kN,
    )


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of the regime check: one (name, passed, detail) row per condition."""

    checks: tuple
    passed: bool

    def __str__(self):
        lines = [f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}" for name, ok, detail in self.checks]
        lines.append("overall: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines)

    def failures(self):
        return [name for name, ok, _ in self.checks if not ok]


def validate_regime(cfg: SystemConfig, law_meta) -> ValidationReport:
    """Check the scaling-regime conditions against a mass law's (d, d', delta).

    Pure predicate: same inputs always produce the same report.  law_meta must
    expose attributes d, d_prime, delta (see mass_laws.MassLawMeta).
    """
    checks = []

    def add(name, ok, detail):
        checks.append((name, bool(ok), detail))

    add("0 < a < 1", 0.0 < cfg.a < 1.0, f"a = {cfg.a}")
    add("b > 0", cfg.b > 0.0, f"b = {cfg.b}")

    lhs = 2.0 * (cfg.a - cfg.b) - cfg.delta
    ok_eq = math.isclose(lhs, 1.0, rel_tol=EQUALITY_RTOL, abs_tol=EQUALITY_RTOL)
    add("2(a-b) - delta = 1", ok_eq, f"2(a-b)-delta = {lhs!r}")

    dp = law_meta.d_prime
    rhs = 5.0 + 8.0 * (cfg.b - cfg.a)
    add("d' < 5 + 8(b-a)", dp < rhs, f"d' = {dp}, bound = {rhs}")

    add("b > d", cfg.b > law_meta.d, f"b = {cfg.b}, d = {law_meta.d}")

    add(
        "cfg.d matches law",
        math.isclose(cfg.d, law_meta.d, rel_tol=1e-9, abs_tol=1e-12),
        f"cfg.d = {cfg.d}, law.d = {law_meta.d}",
    )
    add(
        "cfg.delta matches law",
        math.isclose(cfg.delta, law_meta.delta, rel_tol=1e-9, abs_tol=1e-12),
        f"cfg.delta = {cfg.delta}, law.delta = {law_meta.delta}",
    )

    alpha = cfg.alpha_kN
    beta = cfg.beta_kN
    add(
        "couplings finite and positive",
        math.isfinite(alpha) and math.isfinite(beta) and alpha > 0 and beta > 0,
        f"alpha_kN = {alpha}, beta_kN = {beta}",
    )

    return ValidationReport(checks=tuple(checks), passed=all(ok for _, ok, _ in checks))
