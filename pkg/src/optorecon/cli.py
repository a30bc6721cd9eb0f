"""Command-line experiment runner.

Configs are INI files.  Frequencies are in arbitrary but consistent units
(typically the bare mechanical frequency); single-mode interaction times are
given in mechanical periods and network times in units of ``1/min(nu)``.
Angles are given in units of pi.

Example::

    [scenario]
    name = reconstruct-sweep
    seed = 1234

    [network]
    kind = single
    omega_m = 1.0

    [state]
    kind = thermal
    nbar = 1.0

    [plan]
    thetas_over_pi = 0, 0.25, -0.25, 0.5
    beta_mag = 5
    n_samples = 100, 1000, 10000
    trials = 100

Every run writes CSV files plus ``manifest.json`` (config hash, seed and a
sha256 per file) into the output directory.  No timestamps are recorded, so
a replay with the same config and seed is byte-identical.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .estimator import NETWORK_PAIRS, NETWORK_TAUS, SINGLE_MODE_THETAS, design_network, design_single_mode, fidelity_sweep
from .gaussian import GaussianState, check_physicality, make_squeezed_thermal, make_two_mode_squeezed_thermal
from .network import NetworkSpec, NormalModeBasis, validate_assumptions, williamson_diagonalize
from .profile import profile_to_csv
from .singlephoton import analytic_chi, forward_expectations, reconstruct_chi, ring_scan, ring_to_csv, simulate_ring

SCENARIOS = ("design-profile", "reconstruct-sweep", "loss-sweep", "singlephoton-scan")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkConfig:
    kind: str = "single"
    omega_m: float = 1.0
    omega: float = 2.0
    J: float = 0.7
    K: float = 0.7


@dataclass(frozen=True)
class StateConfig:
    kind: str = "thermal"
    nbar: float = 1.0
    r: float = 0.0
    phase_over_pi: float = 0.0


@dataclass(frozen=True)
class PlanConfig:
    thetas_over_pi: tuple = tuple(t / np.pi for t in SINGLE_MODE_THETAS)
    pairs_over_pi: tuple = tuple(tuple(t / np.pi for t in p) for p in NETWORK_PAIRS)
    taus: tuple = NETWORK_TAUS
    tau_periods: float = 1.0
    beta_mag: float = 5.0
    epsilons: tuple = (0.0,)
    n_samples: tuple = (100, 1000, 10000)
    trials: int = 100
    order: int = 2
    profile_samples: int = 512


@dataclass(frozen=True)
class SinglePhotonConfig:
    g0: float = 0.5
    alpha: complex = 1.0
    state: str = "vacuum"
    nbar: float = 0.0
    gamma: complex = 0.0
    points: int = 64
    shots: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    seed: int
    network: NetworkConfig = field(default_factory=NetworkConfig)
    state: StateConfig = field(default_factory=StateConfig)
    plan: PlanConfig = field(default_factory=PlanConfig)
    singlephoton: SinglePhotonConfig = field(default_factory=SinglePhotonConfig)
    workers: int = 1

    def canonical(self) -> str:
        def enc(o):
            if isinstance(o, complex):
                return [o.real, o.imag]
            raise TypeError(type(o))
        d = asdict(self)
        d.pop("workers")  # does not change results
        return json.dumps(d, sort_keys=True, default=enc)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


# --------------------------------------------------------------------------
# parsing


def _floats(text):
    return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())


def _pairs(text):
    out = []
    for chunk in text.split(";"):
        if chunk.strip():
            out.append(tuple(float(x) for x in chunk.replace(",", " ").split()))
    return tuple(out)


_PARSERS = {
    "network": (NetworkConfig, {"kind": str, "omega_m": float, "omega": float, "J": float, "K": float}),
    "state": (StateConfig, {"kind": str, "nbar": float, "r": float, "phase_over_pi": float}),
    "plan": (PlanConfig, {"thetas_over_pi": _floats, "pairs_over_pi": _pairs, "taus": _floats,
                          "tau_periods": float, "beta_mag": float, "epsilons": _floats,
                          "n_samples": lambda s: tuple(int(float(x)) for x in _floats(s)),
                          "trials": int, "order": int, "profile_samples": int}),
    "singlephoton": (SinglePhotonConfig, {"g0": float, "alpha": complex, "state": str, "nbar": float,
                                          "gamma": complex, "points": int, "shots": int}),
}


def parse_config(text: str) -> ExperimentConfig:
    # ';' separates angle pairs, so only '#' starts an inline comment
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    if not cp.has_section("scenario"):
        raise ConfigError("missing [scenario] section")
    sc = cp["scenario"]
    if "name" not in sc or "seed" not in sc:
        raise ConfigError("[scenario] needs both 'name' and 'seed'")
    kwargs = {"scenario": sc["name"].strip(), "seed": int(sc["seed"]),
              "workers": int(sc.get("workers", "1"))}
    for section in cp.sections():
        if section == "scenario":
            continue
        if section not in _PARSERS:
            raise ConfigError(f"unknown section [{section}]")
        cls, fields = _PARSERS[section]
        vals = {}
        for key, raw in cp[section].items():
            if key not in fields:
                raise ConfigError(f"unknown key '{key}' in [{section}]")
            try:
                vals[key] = fields[key](raw.strip().replace(" ", "") if fields[key] is complex else raw.strip())
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from None
        kwargs[section] = cls(**vals)
    cfg = ExperimentConfig(**kwargs)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> list[str]:
    """Raise :class:`ConfigError` on invalid settings; return informational notes."""
    notes = []
    if cfg.scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario '{cfg.scenario}' (choose from {', '.join(SCENARIOS)})")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    p = cfg.plan
    if p.beta_mag <= 0 or p.trials < 1 or any(n < 1 for n in p.n_samples):
        raise ConfigError("beta_mag, trials and n_samples must be positive")
    if any(not 0 <= e < 1 for e in p.epsilons):
        raise ConfigError("every epsilon must satisfy 0 <= epsilon < 1")
    if p.order < 2:
        raise ConfigError("order must be at least 2 to reach the covariance")
    if cfg.network.kind not in ("single", "two_mode"):
        raise ConfigError("network kind must be 'single' or 'two_mode'")
    if cfg.network.kind == "two_mode":
        if len(p.pairs_over_pi) != len(p.taus) or any(len(q) != 2 for q in p.pairs_over_pi):
            raise ConfigError("pairs_over_pi must list one angle pair per entry of taus")
        try:
            basis = build_basis(cfg)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise ConfigError(f"network: {exc}") from None
        rep = validate_assumptions(basis)
        if not rep.ok:
            raise ConfigError(f"network fails the readout assumptions: {rep}")
        notes.append(f"normal-mode frequencies {np.round(basis.nu, 6).tolist()}")
    try:
        state = build_state(cfg)
    except ValueError as exc:
        raise ConfigError(f"state: {exc}") from None
    if not check_physicality(state).physical:
        raise ConfigError("state covariance is unphysical")
    if cfg.scenario == "singlephoton-scan":
        s = cfg.singlephoton
        if s.state not in ("vacuum", "thermal", "coherent"):
            raise ConfigError("singlephoton state must be vacuum, thermal or coherent")
        if s.alpha == 0 or s.points < 1 or s.shots < 0:
            raise ConfigError("singlephoton needs alpha != 0, points >= 1, shots >= 0")
    return notes


def build_basis(cfg: ExperimentConfig) -> NormalModeBasis:
    n = cfg.network
    if n.kind == "single":
        return NormalModeBasis.single_mode(n.omega_m)
    return williamson_diagonalize(NetworkSpec.two_mode(n.omega, n.J, n.K))


def build_state(cfg: ExperimentConfig) -> GaussianState:
    s = cfg.state
    two = cfg.network.kind == "two_mode"
    if s.kind == "vacuum":
        return GaussianState.vacuum(2 if two else 1)
    if s.kind in ("thermal", "squeezed_thermal"):
        r = s.r if s.kind == "squeezed_thermal" else 0.0
        return make_squeezed_thermal(s.nbar, r, np.pi * s.phase_over_pi, n_modes=2 if two else 1)
    if s.kind == "two_mode_squeezed_thermal":
        if not two:
            raise ConfigError("two_mode_squeezed_thermal needs a two_mode network")
        return make_two_mode_squeezed_thermal(s.nbar, s.r)
    raise ConfigError(f"unknown state kind '{s.kind}'")


def build_design(cfg: ExperimentConfig, beta_mag: float | None = None):
    p = cfg.plan
    mag = p.beta_mag if beta_mag is None else beta_mag
    if cfg.network.kind == "single":
        w = cfg.network.omega_m
        return design_single_mode(w, p.tau_periods * 2 * np.pi / w,
                                  [np.pi * t for t in p.thetas_over_pi], mag), None
    basis = build_basis(cfg)
    pairs = [tuple(np.pi * np.array(q)) for q in p.pairs_over_pi]
    return design_network(basis, pairs, p.taus, mag, p.order), basis


# --------------------------------------------------------------------------
# scenarios


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _design_profile(cfg, out: Path):
    design, basis = build_design(cfg)
    files, rows = [], []
    for i, ds in enumerate(design):
        name = f"profile_{i:02d}.csv"
        times = np.linspace(0.0, ds.profile.tau, cfg.plan.profile_samples)
        profile_to_csv(ds.profile, times, out / name)
        files.append(name)
        rows.append([i, ds.config, *ds.disp.theta, *ds.disp.beta_mag, ds.disp.psi,
                     ds.profile.tau, ds.profile.peak(), name])
    n = design[0].disp.beta.size
    header = (["setting", "config"] + [f"theta_{j + 1}" for j in range(n)]
              + [f"beta_mag_{j + 1}" for j in range(n)] + ["psi", "tau", "peak_g", "file"])
    _write_csv(out / "profiles.csv", header, rows)
    return ["profiles.csv"] + files


_SWEEP_HEADER = ["n_samples", "epsilon", "mean_fidelity", "std_fidelity", "trials", "unphysical"]


def _sweep_rows(cfg, epsilons, design, basis):
    # every epsilon reuses the master seed so the curves share sampling noise
    state = build_state(cfg)
    rows = []
    for eps in epsilons:
        pts = fidelity_sweep(state, design, cfg.plan.n_samples, cfg.plan.trials, eps,
                             cfg.seed, basis, cfg.plan.order, cfg.workers)
        rows += [[p.n_samples, p.epsilon, p.mean, p.std, p.n_trials, p.n_unphysical] for p in pts]
    return rows


def _reconstruct_sweep(cfg, out: Path):
    design, basis = build_design(cfg)
    _write_csv(out / "fidelity.csv", _SWEEP_HEADER, _sweep_rows(cfg, cfg.plan.epsilons, design, basis))
    return ["fidelity.csv"]


def _loss_sweep(cfg, out: Path):
    design, basis = build_design(cfg)
    eps = cfg.plan.epsilons if len(cfg.plan.epsilons) > 1 else (0.0, 0.4, 0.8)
    _write_csv(out / "loss.csv", _SWEEP_HEADER, _sweep_rows(cfg, eps, design, basis))
    return ["loss.csv"]


def _singlephoton_scan(cfg, out: Path):
    s = cfg.singlephoton
    rings = ring_scan(s.g0, cfg.network.omega_m, s.points)

    def chi(b):
        return analytic_chi(s.state, b, nbar=s.nbar, gamma=s.gamma)

    if s.shots > 0:
        est = simulate_ring(s.alpha, rings, chi, s.shots, cfg.seed)
    else:
        est = [reconstruct_chi(*forward_expectations(s.alpha, rp, chi(rp.beta)), s.alpha, rp,
                               provenance="forward-modeled") for rp in rings]
    ring_to_csv(rings, est, out / "ring.csv")
    return ["ring.csv"]


_RUNNERS = {"design-profile": _design_profile, "reconstruct-sweep": _reconstruct_sweep,
            "loss-sweep": _loss_sweep, "singlephoton-scan": _singlephoton_scan}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_scenario(cfg: ExperimentConfig, out_dir) -> dict:
    """Run ``cfg.scenario``, write its CSVs and the manifest; return the manifest."""
    validate(cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        files = _RUNNERS[cfg.scenario](cfg, out)
    except Exception as exc:
        raise RuntimeError(f"{cfg.scenario} failed: {exc}") from exc
    manifest = {"scenario": cfg.scenario, "seed": cfg.seed, "config_sha256": cfg.digest(),
                "package_version": __version__,
                "files": {f: _sha256(out / f) for f in files}}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


# --------------------------------------------------------------------------
# entry point


def _load(args, scenario):
    text = Path(args.config).read_text()
    cfg = parse_config(text)
    if scenario is not None and cfg.scenario != scenario:
        cfg = replace(cfg, scenario=scenario)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.workers is not None:
        cfg = replace(cfg, workers=args.workers)
    validate(cfg)
    return cfg


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="optorecon", description="Pulsed optomechanical state reconstruction experiments.")
    sub = ap.add_subparsers(dest="verb", required=True)
    for verb in SCENARIOS + ("validate-config",):
        p = sub.add_parser(verb)
        p.add_argument("--config", required=True, help="INI experiment config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--workers", type=int, default=None, help="parallel worker processes")
        if verb != "validate-config":
            p.add_argument("--out", required=True, help="output directory")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args, None if args.verb == "validate-config" else args.verb)
        if args.verb == "validate-config":
            notes = validate(cfg)
            print(f"ok: scenario={cfg.scenario} seed={cfg.seed} sha256={cfg.digest()[:16]}")
            for n in notes:
                print(f"  {n}")
            return 0
        manifest = run_scenario(cfg, args.out)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for name in manifest["files"]:
        print(Path(args.out) / name)
    return 0


if __name__ == "__main__":
    sys.exit(main())
