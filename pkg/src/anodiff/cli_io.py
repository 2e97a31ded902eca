"""Config parsing, output formats, run manifests, and the command line.

Config files are flat `key = value` text ('#' starts a comment).  Unknown
keys are rejected, not ignored; errors carry line numbers.  delta may be
omitted, in which case it is derived from the exponent equality
delta = 2(a - b) - 1.

Output contracts:
  * CSV: '#'-prefixed header rows embedding (config hash, seed, grid), then
    one row per trajectory, '.' decimal, columns = grid times.
  * binary: magic "ANOD", u32 version, u64 header length, JSON header,
    u64 n_traj, u64 n_cols, grid as f64, payload row-major f64
    (all little-endian).
  * every run directory gets a manifest.json tying outputs to the config
    hash, seed, and code version.

Exit codes: 0 success, 1 validation error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import struct
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .ensemble import TrajectoryEnsemble
from .kfp import (DensityField, SymbolModel, evolve_density, gaussian_density,
                  suggest_half_width)
from .limit_gauss import (CovarianceFactorizationError, CovarianceModel,
                          sample_limit_paths)
from .mass_laws import FAMILIES, MassLaw, make_mass_law
from .params import RegimeError, SystemConfig, validate_regime
from .particle_sim import SimulationError, simulate_chain, simulate_full_system
from .stats import convergence_sweep, fit_exponent, gaussianity_test, msd
from .superstat import ALaw, HLaw, MixingLaw, SuperstatModel, sample_superstat_paths

__all__ = [
    "ConfigError",
    "ParsedConfig",
    "RunManifest",
    "parse_config",
    "parse_a_law",
    "parse_h_law",
    "config_hash",
    "write_ensemble_csv",
    "read_ensemble_csv",
    "write_ensemble_binary",
    "read_ensemble_binary",
    "write_density_csv",
    "run_command",
    "main",
]

log = logging.getLogger("anodiff")

BINARY_MAGIC = b"ANOD"
BINARY_VERSION = 1
SCHEMA_VERSION = 1

_SYSTEM_KEYS = {
    "system.M": float,
    "system.sigma": float,
    "system.gamma": float,
    "system.C_alpha": float,
    "system.C_beta": float,
    "system.a": float,
    "system.b": float,
    "system.d": float,
    "system.delta": float,
    "system.N": int,
    "system.t0": float,
    "system.n_steps": int,
    "system.seed": int,
}
_MASSLAW_KEYS = {
    "mass_law.family": str,
    "mass_law.H": float,
    "mass_law.H_list": str,
    "mass_law.rate": float,
}
_MIXING_KEYS = {
    "mixing.A_law": str,
    "mixing.H_law": str,
}
_RUN_KEYS = {
    "run.n_traj": int,
    "run.observables": str,
    "run.format": str,
}
VALID_KEYS = {"schema_version": int, **_SYSTEM_KEYS, **_MASSLAW_KEYS, **_MIXING_KEYS, **_RUN_KEYS}

REQUIRED_KEYS = ("schema_version", "mass_law.family")


class ConfigError(ValueError):
    """Schema or validation failure; carries (line, message) pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(f"line {ln}: {msg}" if ln else msg for ln, msg in self.errors))


@dataclass(frozen=True)
class ParsedConfig:
    cfg: SystemConfig
    law: MassLaw
    law_spec: dict
    mixing: object  # MixingLaw or None
    run: dict
    raw: dict
    hash: str


def _read_pairs(path):
    pairs = {}
    errors = []
    for ln, line in enumerate(Path(path).read_text().splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            errors.append((ln, f"expected 'key = value', got {body!r}"))
            continue
        key, val = (s.strip() for s in body.split("=", 1))
        if key not in VALID_KEYS:
            errors.append((ln, f"unknown key {key!r}; valid keys: {', '.join(sorted(VALID_KEYS))}"))
            continue
        if key in pairs:
            errors.append((ln, f"duplicate key {key!r}"))
            continue
        try:
            pairs[key] = (VALID_KEYS[key](val), ln)
        except ValueError:
            errors.append((ln, f"cannot parse {key} value {val!r} as {VALID_KEYS[key].__name__}"))
    return pairs, errors


def parse_a_law(spec: str) -> ALaw:
    """Parse 'kind:p1,p2,...' into an ALaw (kinds: degenerate, exp,
    lognormal, gengamma, sqweibull)."""
    kind, _, rest = spec.partition(":")
    params = tuple(float(x) for x in rest.split(",")) if rest else ()
    names = {"degenerate": "degenerate", "exp": "exponential", "exponential": "exponential",
             "lognormal": "lognormal", "gengamma": "gengamma", "sqweibull": "sqweibull"}
    if kind not in names:
        raise ValueError(f"unknown A law kind {kind!r}")
    return ALaw(kind=names[kind], params=params)


def parse_h_law(spec: str) -> HLaw:
    """Parse H-law strings: 'degenerate:0.75', 'uniform:0.55,0.95',
    'discrete:0.6@0.5,0.9@0.5'."""
    kind, _, rest = spec.partition(":")
    if kind == "degenerate":
        return HLaw("degenerate", (float(rest),))
    if kind == "uniform":
        h0, h1 = (float(x) for x in rest.split(","))
        return HLaw("uniform", (h0, h1))
    if kind == "discrete":
        pts, ws = [], []
        for item in rest.split(","):
            pt, _, w = item.partition("@")
            pts.append((float(pt),))
            ws.append(float(w) if w else 1.0)
        return HLaw("discrete", (tuple(pts), tuple(ws)))
    raise ValueError(f"unknown H law kind {kind!r}")


def config_hash(raw: dict) -> str:
    canon = "\n".join(f"{k} = {raw[k]}" for k in sorted(raw))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def parse_config(path) -> ParsedConfig:
    """Parse, type-check, and regime-validate a config file.

    Raises ConfigError listing every schema problem with its line number;
    regime failures name the violated inequality.
    """
    pairs, errors = _read_pairs(path)
    for key in REQUIRED_KEYS:
        if key not in pairs:
            errors.append((0, f"missing required key {key!r}"))
    if errors:
        raise ConfigError(errors)
    if pairs["schema_version"][0] != SCHEMA_VERSION:
        raise ConfigError([(pairs["schema_version"][1],
                            f"unsupported schema_version {pairs['schema_version'][0]}; "
                            f"supported: {SCHEMA_VERSION}")])

    def get(key, default=None):
        return pairs[key][0] if key in pairs else default

    family = get("mass_law.family")
    if family not in FAMILIES:
        raise ConfigError([(pairs["mass_law.family"][1],
                            f"unknown family {family!r}; valid: {', '.join(FAMILIES)}")])

    a = get("system.a", 0.8)
    b = get("system.b", 0.25)
    delta = get("system.delta")
    if delta is None:
        delta = 2.0 * (a - b) - 1.0
        if delta < -1e-12:
            raise ConfigError([(0, "derived delta = 2(a-b)-1 is negative: "
                                   "the regime requires a >= b + 1/2")])
        delta = max(delta, 0.0)

    fparams = {}
    if family in ("stable_power", "tempered_stable"):
        if "mass_law.H" not in pairs:
            raise ConfigError([(0, f"{family} requires mass_law.H")])
        fparams["H"] = get("mass_law.H")
    elif family == "power_mixture":
        if "mass_law.H_list" not in pairs:
            raise ConfigError([(0, "power_mixture requires mass_law.H_list")])
        fparams["H_list"] = tuple(float(x) for x in get("mass_law.H_list").split(","))
    elif family == "exponential_levy":
        fparams["rate"] = get("mass_law.rate", get("system.gamma", 1.0))

    N = get("system.N", 1024)
    d = get("system.d")
    try:
        if family == "dirac_npower":
            law = make_mass_law(family, fparams, N, delta=delta)
        elif family == "dirac_one":
            law = make_mass_law(family, fparams, N)
        else:
            if d is None:
                raise ConfigError([(0, f"{family} requires system.d")])
            law = make_mass_law(family, fparams, N, d=d, delta=delta)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError([(0, f"mass law construction failed: {exc}")]) from exc

    try:
        cfg = SystemConfig(
            M=get("system.M", 1.0),
            sigma=get("system.sigma", 1.0),
            gamma=get("system.gamma", 1.0),
            C_alpha=get("system.C_alpha", 1.0),
            C_beta=get("system.C_beta", 1.0),
            a=a, b=b,
            d=law.meta.d,
            delta=law.meta.delta,
            C_delta=law.meta.C_delta,
            N=N,
            t0=get("system.t0", 1.0),
            n_steps=get("system.n_steps", 1024),
            seed=get("system.seed", 0),
        )
    except RegimeError as exc:
        raise ConfigError([(0, str(exc))]) from exc

    report = validate_regime(cfg, law.meta)
    if not report.passed:
        raise ConfigError([(0, f"regime violation: {name}") for name in report.failures()])

    mixing = None
    if "mixing.A_law" in pairs or "mixing.H_law" in pairs:
        try:
            alaw = parse_a_law(get("mixing.A_law", "degenerate:1.0"))
            hlaw = parse_h_law(get("mixing.H_law", "degenerate:0.75"))
        except ValueError as exc:
            raise ConfigError([(0, str(exc))]) from exc
        mixing = MixingLaw(A_law=alaw, H_law=hlaw)

    run = {
        "n_traj": get("run.n_traj", 1000),
        "observables": tuple(get("run.observables", "X").split(",")),
        "format": get("run.format", "csv"),
    }
    if run["format"] not in ("csv", "binary"):
        raise ConfigError([(pairs["run.format"][1], f"unknown format {run['format']!r}")])
    for obs in run["observables"]:
        if obs not in ("X", "Xtilde", "Ztilde"):
            raise ConfigError([(0, f"unknown observable {obs!r}; valid: X, Xtilde, Ztilde")])

    raw = {k: v for k, (v, _) in pairs.items()}
    law_spec = {"family": family, "params": fparams, "d": law.meta.d, "delta": law.meta.delta}
    return ParsedConfig(cfg=cfg, law=law, law_spec=law_spec, mixing=mixing,
                        run=run, raw=raw, hash=config_hash(raw))


@dataclass
class RunManifest:
    """Provenance record for one run: every output file references it."""

    config_hash: str
    seed: int
    code_version: str
    command: str
    started_at: float
    finished_at: float = 0.0
    outputs: list = field(default_factory=list)

    def write(self, out_dir: Path):
        self.finished_at = time.time()
        path = Path(out_dir) / "manifest.json"
        path.write_text(json.dumps(dataclasses.asdict(self), indent=2) + "\n")
        return path


def _header_lines(meta: dict, grid):
    lines = [f"# anodiff-ensemble v{BINARY_VERSION}"]
    for k in sorted(meta):
        lines.append(f"# {k} = {meta[k]}")
    lines.append("# grid = " + ",".join(f"{t:.17g}" for t in grid))
    return lines


def write_ensemble_csv(path, ensemble: TrajectoryEnsemble, observable, extra_meta=None):
    meta = dict(ensemble.meta)
    if extra_meta:
        meta.update(extra_meta)
    meta["observable"] = observable
    lines = _header_lines(meta, ensemble.grid)
    paths = ensemble[observable]
    for row in paths:
        lines.append(",".join(f"{x:.17g}" for x in row))
    Path(path).write_text("\n".join(lines) + "\n")
    return Path(path)


def read_ensemble_csv(path):
    meta = {}
    rows = []
    grid = None
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                k, v = (s.strip() for s in body.split("=", 1))
                if k == "grid":
                    grid = np.array([float(x) for x in v.split(",")])
                else:
                    meta[k] = v
            continue
        if line.strip():
            rows.append([float(x) for x in line.split(",")])
    if grid is None:
        raise ValueError(f"{path}: missing '# grid = ...' header")
    name = meta.get("observable", "X")
    return TrajectoryEnsemble(grid=grid, observables={name: np.array(rows)}, meta=meta)


def write_ensemble_binary(path, ensemble: TrajectoryEnsemble, observable, extra_meta=None):
    meta = dict(ensemble.meta)
    if extra_meta:
        meta.update(extra_meta)
    meta["observable"] = observable
    header = json.dumps(meta).encode()
    paths = np.ascontiguousarray(ensemble[observable], dtype="<f8")
    grid = np.ascontiguousarray(ensemble.grid, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(BINARY_MAGIC)
        fh.write(struct.pack("<I", BINARY_VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(struct.pack("<QQ", paths.shape[0], paths.shape[1]))
        fh.write(grid.tobytes())
        fh.write(paths.tobytes())
    return Path(path)


def read_ensemble_binary(path):
    with open(path, "rb") as fh:
        if fh.read(4) != BINARY_MAGIC:
            raise ValueError(f"{path}: bad magic, not an anodiff binary ensemble")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != BINARY_VERSION:
            raise ValueError(f"{path}: unsupported binary version {version}")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        meta = json.loads(fh.read(hlen).decode())
        n_traj, n_cols = struct.unpack("<QQ", fh.read(16))
        grid = np.frombuffer(fh.read(8 * n_cols), dtype="<f8")
        paths = np.frombuffer(fh.read(8 * n_traj * n_cols), dtype="<f8").reshape(n_traj, n_cols)
    name = meta.get("observable", "X")
    return TrajectoryEnsemble(grid=grid.copy(), observables={name: paths.copy()}, meta=meta)


def write_density_csv(path, fields, meta=None):
    """Write one or more DensityField snapshots as (x, u_t1, u_t2, ...) CSV."""
    if isinstance(fields, DensityField):
        fields = [fields]
    lines = [f"# anodiff-density v{BINARY_VERSION}"]
    for k in sorted(meta or {}):
        lines.append(f"# {k} = {meta[k]}")
    lines.append("# t = " + ",".join(f"{f.t:.17g}" for f in fields))
    x = fields[0].x_grid
    for i in range(x.size):
        lines.append(",".join([f"{x[i]:.17g}"] + [f"{f.values[i]:.17g}" for f in fields]))
    Path(path).write_text("\n".join(lines) + "\n")
    return Path(path)


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------


def _ensure_out(ns):
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_outputs(ensemble, names, fmt, out_dir, manifest, extra_meta):
    writer = write_ensemble_csv if fmt == "csv" else write_ensemble_binary
    suffix = ".csv" if fmt == "csv" else ".bin"
    for name in names:
        p = writer(out_dir / f"{name}{suffix}", ensemble, name, extra_meta)
        manifest.outputs.append(str(p))


def _cmd_simulate(ns):
    pc = parse_config(ns.config)
    out = _ensure_out(ns)
    seed = ns.seed if ns.seed is not None else pc.cfg.seed
    cfg = dataclasses.replace(pc.cfg, seed=seed)
    observables = tuple(ns.observables.split(",")) if ns.observables else pc.run["observables"]
    fmt = ns.format or pc.run["format"]
    n_traj = ns.n_traj or pc.run["n_traj"]
    manifest = RunManifest(pc.hash, seed, __version__, "simulate", time.time())
    need_chain = any(o in ("Xtilde", "Ztilde") for o in observables)
    sim = simulate_chain if need_chain else simulate_full_system
    ens = sim(cfg, pc.law, n_traj, seed, n_threads=ns.threads,
              keep_masses=ns.dump_masses)
    _write_outputs(ens, observables, fmt, out, manifest, {"config_hash": pc.hash})
    if ns.dump_masses:
        p = out / "masses.csv"
        lines = ["# anodiff sampled masses (rows = trajectories)",
                 f"# config_hash = {pc.hash}", f"# seed = {seed}"]
        for row in ens.sidecar["masses"]:
            lines.append(",".join(f"{x:.17g}" for x in row))
        p.write_text("\n".join(lines) + "\n")
        manifest.outputs.append(str(p))
    manifest.write(out)
    log.info("simulate: wrote %d observables to %s", len(observables), out)
    return 0


FAMILY_ALIASES = {"fbm": "stable_power", "fbm_mixture": "power_mixture",
                  "wiener": "dirac_npower"}


def _cmd_limit_sample(ns):
    out = _ensure_out(ns)
    ns.family = FAMILY_ALIASES.get(ns.family, ns.family)
    fparams = {}
    if ns.family in ("stable_power", "tempered_stable"):
        fparams["H"] = ns.H
    elif ns.family == "power_mixture":
        fparams["H_list"] = tuple(float(x) for x in ns.H_list.split(","))
    elif ns.family == "exponential_levy":
        fparams["rate"] = ns.gamma
    grid = np.linspace(0.0, ns.t0, ns.n_points + 1)[1:]
    model = CovarianceModel.from_family(
        ns.family, fparams, grid, sigma=ns.sigma, gamma=ns.gamma,
        C_alpha=ns.C_alpha, C_beta=ns.C_beta, C_delta=ns.C_delta,
    )
    ens = sample_limit_paths(model, ns.n_traj, ns.seed)
    raw = {"family": ns.family, **{k: str(v) for k, v in fparams.items()},
           "sigma": ns.sigma, "gamma": ns.gamma, "seed": ns.seed}
    h = config_hash({k: str(v) for k, v in raw.items()})
    manifest = RunManifest(h, ns.seed, __version__, "limit-sample", time.time())
    _write_outputs(ens, ["Z"], ns.format, out, manifest, {"config_hash": h})
    manifest.write(out)
    return 0


def _cmd_superstat(ns):
    out = _ensure_out(ns)
    mixing = MixingLaw(A_law=parse_a_law(ns.A_law), H_law=parse_h_law(ns.H_law))
    model = SuperstatModel(mixing=mixing, sigma=ns.sigma, gamma=ns.gamma,
                           C_beta=ns.C_beta, C_delta=ns.C_delta, h_bucket=ns.h_bucket)
    grid = np.linspace(0.0, ns.t0, ns.n_points + 1)[1:]
    ens = sample_superstat_paths(model, grid, ns.n_traj, ns.seed)
    raw = {"A_law": ns.A_law, "H_law": ns.H_law, "sigma": ns.sigma,
           "gamma": ns.gamma, "seed": ns.seed}
    h = config_hash({k: str(v) for k, v in raw.items()})
    manifest = RunManifest(h, ns.seed, __version__, "superstat", time.time())
    _write_outputs(ens, ["Z"], ns.format, out, manifest, {"config_hash": h})
    side = out / "mixing_draws.csv"
    A, H = ens.sidecar["A"], ens.sidecar["H"]
    lines = ["# anodiff per-path mixing draws", "# columns = A," + ",".join(
        f"H{k+1}" for k in range(H.shape[1]))]
    for i in range(A.size):
        lines.append(",".join([f"{A[i]:.17g}"] + [f"{x:.17g}" for x in H[i]]))
    side.write_text("\n".join(lines) + "\n")
    manifest.outputs.append(str(side))
    manifest.write(out)
    return 0


def _cmd_kfp(ns):
    pc = parse_config(ns.config)
    if pc.mixing is None:
        raise ConfigError([(0, "kfp requires a mixing section in the config")])
    out = _ensure_out(ns)
    model = SymbolModel(
        mixing=pc.mixing,
        D=2.0 * pc.cfg.sigma * pc.cfg.C_beta**2 * pc.cfg.C_delta / pc.cfg.gamma**2,
        gamma=pc.cfg.gamma,
    )
    kind, _, arg = ns.u0.partition(":")
    if kind != "gaussian":
        raise ConfigError([(0, f"unknown u0 spec {ns.u0!r}; expected gaussian:<std>")])
    std = float(arg)
    times = [float(t) for t in ns.t.split(",")]
    L = ns.half_width or suggest_half_width(model, max(times), u0_std=std)
    x = np.linspace(-L, L, ns.nx)
    u0 = DensityField(x_grid=x, values=gaussian_density(x, std), t=0.0)
    fields = [evolve_density(model, u0, t) for t in times]
    manifest = RunManifest(pc.hash, pc.cfg.seed, __version__, "kfp", time.time())
    p = write_density_csv(out / "density.csv", fields,
                          {"config_hash": pc.hash, "seed": pc.cfg.seed, "u0": ns.u0,
                           "half_width": L, "nx": ns.nx})
    manifest.outputs.append(str(p))
    manifest.write(out)
    return 0


def _cmd_estimate(ns):
    out = _ensure_out(ns)
    path = Path(ns.input)
    ens = read_ensemble_binary(path) if path.suffix == ".bin" else read_ensemble_csv(path)
    obs = ens.labels[0]
    dt = ens.grid[1] - ens.grid[0]
    if ns.lags:
        lags = np.array([float(x) for x in ns.lags.split(",")])
    else:
        idx = np.unique(np.geomspace(1, ens.grid.size - 1, 24).astype(int))
        lags = idx * dt
    curve = msd(ens, lags, observable=obs)
    lines = ["# anodiff msd", f"# source = {path.name}", "lag,msd,stderr"]
    for i in range(lags.size):
        lines.append(f"{curve.lags[i]:.17g},{curve.values[i]:.17g},{curve.stderr[i]:.17g}")
    (out / "msd.csv").write_text("\n".join(lines) + "\n")
    report = [f"source = {path.name}", f"n_traj = {curve.n_traj}"]
    if ns.window:
        l1, l2 = (float(x) for x in ns.window.split(","))
        slope, se = fit_exponent(curve, (l1, l2))
        report.append(f"msd exponent on [{l1}, {l2}]: {slope:.4f} +- {se:.4f}")
    if ns.t is not None:
        g = gaussianity_test(ens, ns.t, observable=obs)
        report.append(
            f"gaussianity at t={ns.t}: kurtosis {g.kurtosis:.3f} +- {g.kurtosis_se:.3f}, "
            f"KS p = {g.ks_pvalue:.4g} ({'rejected' if g.rejected() else 'not rejected'} at 1%)"
        )
    (out / "estimate.txt").write_text("\n".join(report) + "\n")
    print("\n".join(report))
    return 0


def _cmd_converge(ns):
    pc = parse_config(ns.config)
    out = _ensure_out(ns)
    N_list = [int(x) for x in ns.N_list.split(",")]
    seed = ns.seed if ns.seed is not None else pc.cfg.seed
    rep = convergence_sweep(pc.cfg, pc.law_spec, N_list, ns.n_traj, seed,
                            n_threads=ns.threads)
    (out / "scaling_report.csv").write_text(rep.summary() + "\n")
    manifest = RunManifest(pc.hash, seed, __version__, "converge", time.time())
    manifest.outputs.append(str(out / "scaling_report.csv"))
    manifest.write(out)
    print(rep.summary())
    return 0


def _cmd_selftest(ns):
    from . import selftest

    ok = selftest.run_all(fast=ns.fast)
    return 0 if ok else 2


def _build_parser():
    p = argparse.ArgumentParser(prog="anodiff", description=__doc__.splitlines()[0])
    p.add_argument("--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed_default=None):
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=seed_default)
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--format", choices=("csv", "binary"), default=None)

    sp = sub.add_parser("simulate", help="integrate the finite-N particle system")
    sp.add_argument("--config", required=True)
    sp.add_argument("--observables", default=None, help="comma list of X,Xtilde,Ztilde")
    sp.add_argument("--n-traj", type=int, default=None)
    sp.add_argument("--dump-masses", dest="dump_masses", action="store_true",
                    help="also write the sampled mass vectors (masses.csv)")
    common(sp)
    sp.set_defaults(fn=_cmd_simulate)

    sp = sub.add_parser("limit-sample", help="sample the exact limit process")
    sp.add_argument("--family", required=True,
                    choices=tuple(FAMILIES) + tuple(FAMILY_ALIASES))
    sp.add_argument("--H", type=float, default=0.75)
    sp.add_argument("--H-list", default="0.6,0.9")
    sp.add_argument("--sigma", type=float, default=1.0)
    sp.add_argument("--gamma", type=float, default=1.0)
    sp.add_argument("--C-alpha", dest="C_alpha", type=float, default=1.0)
    sp.add_argument("--C-beta", dest="C_beta", type=float, default=1.0)
    sp.add_argument("--C-delta", dest="C_delta", type=float, default=1.0)
    sp.add_argument("--t0", type=float, default=1.0)
    sp.add_argument("--n-points", type=int, default=64)
    sp.add_argument("--n-traj", type=int, default=1000)
    common(sp, seed_default=0)
    sp.set_defaults(fn=_cmd_limit_sample, format="csv")

    sp = sub.add_parser("superstat", help="sample the randomly scaled limit process")
    sp.add_argument("--A-law", dest="A_law", required=True)
    sp.add_argument("--H-law", dest="H_law", required=True)
    sp.add_argument("--sigma", type=float, default=1.0)
    sp.add_argument("--gamma", type=float, default=1.0)
    sp.add_argument("--C-beta", dest="C_beta", type=float, default=1.0)
    sp.add_argument("--C-delta", dest="C_delta", type=float, default=1.0)
    sp.add_argument("--h-bucket", dest="h_bucket", type=float, default=1e-3)
    sp.add_argument("--t0", type=float, default=1.0)
    sp.add_argument("--n-points", type=int, default=64)
    sp.add_argument("--n-traj", type=int, default=1000)
    common(sp, seed_default=0)
    sp.set_defaults(fn=_cmd_superstat, format="csv")

    sp = sub.add_parser("kfp", help="evolve a density by the limit symbol")
    sp.add_argument("--config", required=True)
    sp.add_argument("--t", required=True, help="comma list of times")
    sp.add_argument("--u0", default="gaussian:0.1")
    sp.add_argument("--nx", type=int, default=4096)
    sp.add_argument("--half-width", dest="half_width", type=float, default=None)
    common(sp)
    sp.set_defaults(fn=_cmd_kfp)

    sp = sub.add_parser("estimate", help="MSD / exponent / gaussianity from an ensemble file")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--lags", default=None, help="comma list of lag times")
    sp.add_argument("--window", default=None, help="l1,l2 fit window")
    sp.add_argument("--t", type=float, default=None, help="time for the gaussianity test")
    common(sp)  # estimators are deterministic; --seed/--threads accepted for uniformity
    sp.set_defaults(fn=_cmd_estimate)

    sp = sub.add_parser("converge", help="N-sweep of the approximation-chain gaps")
    sp.add_argument("--config", required=True)
    sp.add_argument("--N-list", dest="N_list", required=True)
    sp.add_argument("--n-traj", type=int, default=256)
    common(sp)
    sp.set_defaults(fn=_cmd_converge)

    sp = sub.add_parser("selftest", help="run the built-in invariant checks")
    sp.add_argument("--fast", action="store_true", help="reduced sample sizes")
    sp.set_defaults(fn=_cmd_selftest)

    return p


def run_command(argv) -> int:
    """Entry point used by tests: parse argv, dispatch, map errors to exit codes."""
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if ns.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return ns.fn(ns)
    except (ConfigError, RegimeError, OSError) as exc:
        log.error("validation error: %s", exc)
        return 1
    except (SimulationError, CovarianceFactorizationError, FloatingPointError) as exc:
        log.error("numerical failure: %s", exc)
        return 2
    except ValueError as exc:
        log.error("validation error: %s", exc)
        return 1


def main():
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
