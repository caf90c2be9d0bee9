"""Batch command surface: JSON configs in, machine-readable artifacts out.

One invocation runs one command (chosen inside the config): threshold,
mode-sim, boundary-scan, landscape, flux-audit, energy-audit, or sweep.
Every run writes result.json (the command payload, deterministic for a fixed
config and seed), command-specific CSV side files, and manifest.json (config
echo, tool version, wall time).  Exit status: 0 success, 2 when a landscape
assertion is not satisfied, 1 on any error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .model import (
    PhysicalParams,
    Profile1D,
    SlabDomain,
    VectorField3,
    make_uniform_grid,
    named_profile,
)
from . import dynamics, energy, kinematics, landscape, sampling, threshold


class ConfigError(ValueError):
    """Configuration rejected, with a field-path diagnostic."""


# ---------------------------------------------------------------------------
# deterministic JSON


def _format_json(obj, indent=0) -> str:
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = []
        for k in sorted(obj):
            items.append(f'{pad}  {json.dumps(str(k))}: {_format_json(obj[k], indent + 1).lstrip()}')
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [f"{pad}  {_format_json(v, indent + 1).lstrip()}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return f"{float(obj):.17g}"
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj)!r}")


def write_json(obj, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(_format_json(obj) + "\n")


# ---------------------------------------------------------------------------
# config parsing (strict: unknown keys are fatal)

COMMANDS = ("threshold", "mode-sim", "boundary-scan", "landscape",
            "flux-audit", "energy-audit", "sweep")

_TOP_KEYS = {"command", "params", "domain", "profile", "resolution",
             "tolerances", "seed", "output_dir", "mode", "scan", "landscape",
             "flux", "energy", "stratified", "runs"}


def _reject_unknown(d: dict, allowed: set, path: str):
    for k in d:
        if k not in allowed:
            raise ConfigError(f"unknown key {k!r} at {path}")


def _require(d: dict, key: str, path: str):
    if key not in d:
        raise ConfigError(f"missing key {key!r} at {path}")
    return d[key]


def _positive(x, path: str) -> float:
    x = float(x)
    if not x > 0:
        raise ConfigError(f"value at {path} must be positive, got {x}")
    return x


@dataclasses.dataclass
class RunConfig:
    command: str
    params: PhysicalParams
    domain: SlabDomain
    profile: Profile1D | None
    resolution: dict
    tolerances: dict
    seed: int
    raw: dict
    output_dir: str | None = None


def _parse_params(d, path="params") -> PhysicalParams:
    _reject_unknown(d, {"g", "lambda", "mu", "M_bar", "alpha_beta"}, path)
    try:
        return PhysicalParams(
            g=_positive(_require(d, "g", path), f"{path}.g"),
            lam=_positive(_require(d, "lambda", path), f"{path}.lambda"),
            mu=float(d.get("mu", 0.0)),
            M_bar=tuple(float(x) for x in _require(d, "M_bar", path)),
            alpha_beta=None if d.get("alpha_beta") is None else float(d["alpha_beta"]))
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {path}: {exc}") from exc


def _parse_domain(d, path="domain") -> SlabDomain:
    _reject_unknown(d, {"a", "b", "L1", "L2", "interface"}, path)
    try:
        return SlabDomain(a=float(_require(d, "a", path)),
                          b=float(_require(d, "b", path)),
                          L1=_positive(_require(d, "L1", path), f"{path}.L1"),
                          L2=_positive(_require(d, "L2", path), f"{path}.L2"),
                          interface=None if d.get("interface") is None
                          else float(d["interface"]))
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {path}: {exc}") from exc


def _parse_profile(d, domain: SlabDomain, base_dir: Path, path="profile") -> Profile1D:
    _reject_unknown(d, {"kind", "name", "coefficients", "csv", "n"}, path)
    kind = _require(d, "kind", path)
    if kind not in ("density", "temperature"):
        raise ConfigError(f"{path}.kind must be 'density' or 'temperature'")
    n = int(d.get("n", 257))
    if "csv" in d:
        csv_path = base_dir / d["csv"]
        if not csv_path.exists():
            raise ConfigError(f"{path}.csv: file not found: {csv_path}")
        data = np.loadtxt(csv_path, delimiter=",", ndmin=2)
        if data.shape[1] != 3:
            raise ConfigError(f"{path}.csv must have columns y,value,derivative")
        try:
            return Profile1D.from_samples(data[:, 0], data[:, 1], kind=kind,
                                          derivative=data[:, 2])
        except ValueError as exc:
            raise ConfigError(f"invalid {path}.csv: {exc}") from exc
    name = _require(d, "name", path)
    coeffs = _require(d, "coefficients", path)
    try:
        return named_profile(name, coeffs, domain.a, domain.b, n=n, kind=kind)
    except ValueError as exc:
        raise ConfigError(f"invalid {path}: {exc}") from exc


def parse_config(path) -> RunConfig:
    """Load and fully validate a JSON run configuration."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("top-level config must be a JSON object")
    _reject_unknown(raw, _TOP_KEYS, "top level")
    command = _require(raw, "command", "top level")
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; choose from {COMMANDS}")

    if command == "sweep":
        runs = _require(raw, "runs", "top level")
        if not isinstance(runs, list) or not runs:
            raise ConfigError("sweep needs a nonempty 'runs' list")
        dummy_params = PhysicalParams(g=1.0, lam=1.0, mu=0.0, M_bar=(0, 0, 1))
        dummy_domain = SlabDomain(a=0.0, b=1.0, L1=1.0, L2=1.0)
        return RunConfig(command=command, params=dummy_params, domain=dummy_domain,
                         profile=None, resolution={}, tolerances={},
                         seed=int(raw.get("seed", 0)), raw=raw,
                         output_dir=raw.get("output_dir"))

    params = _parse_params(_require(raw, "params", "top level"))
    domain = _parse_domain(_require(raw, "domain", "top level"))
    profile = None
    if "profile" in raw:
        profile = _parse_profile(raw["profile"], domain, path.parent)

    resolution = dict(raw.get("resolution", {}))
    _reject_unknown(resolution, {"n", "n1", "n2", "n3"}, "resolution")
    resolution.setdefault("n", 1001)
    tolerances = dict(raw.get("tolerances", {}))
    _reject_unknown(tolerances, {"identity", "flux", "relative"}, "tolerances")
    for k, v in tolerances.items():
        if not float(v) > 0:
            raise ConfigError(f"tolerances.{k} must be positive")
    tolerances.setdefault("identity", 1e-8)

    return RunConfig(command=command, params=params, domain=domain,
                     profile=profile, resolution=resolution,
                     tolerances=tolerances, seed=int(raw.get("seed", 0)),
                     raw=raw, output_dir=raw.get("output_dir"))


# ---------------------------------------------------------------------------
# command runners: each returns (payload, verdict_ok)


def _run_threshold(cfg: RunConfig, out: Path, plot: bool):
    if "stratified" in cfg.raw:
        s = cfg.raw["stratified"]
        _reject_unknown(s, {"rho_plus", "rho_minus", "h", "l"}, "stratified")
        res = threshold.threshold_stratified(
            float(_require(s, "rho_plus", "stratified")),
            float(_require(s, "rho_minus", "stratified")),
            _positive(_require(s, "h", "stratified"), "stratified.h"),
            _positive(_require(s, "l", "stratified"), "stratified.l"),
            cfg.params)
    else:
        if cfg.profile is None:
            raise ConfigError("threshold needs a 'profile' (or a 'stratified' block)")
        n = int(cfg.resolution["n"])
        if cfg.profile.kind == "temperature":
            res = threshold.threshold_benard(cfg.profile, cfg.domain, cfg.params,
                                             n=n, richardson=True)
        else:
            res = threshold.threshold_rt(cfg.profile, cfg.domain, cfg.params,
                                         n=n, richardson=True)
    psi_path = out / "psi0.csv"
    with open(psi_path, "w", newline="\n") as fh:
        fh.write("y,psi\n")
        for yv, pv in zip(res.y, res.psi0):
            fh.write(f"{yv:.17g},{pv:.17g}\n")
    payload = res.to_dict()
    payload["psi0_csv"] = psi_path.name
    if plot:
        from . import plotting
        plotting.save_profile_plot(res.y, res.psi0, out / "psi0.png")
    return payload, True


def _mode_spec_from_cfg(cfg: RunConfig) -> tuple[dynamics.ModeSpec, dict]:
    d = dict(_require(cfg.raw, "mode", "top level"))
    _reject_unknown(d, {"n", "rho_bar", "rho_prime", "T", "dt", "eta0", "eta_dot0"},
                    "mode")
    spec = dynamics.ModeSpec(n=int(d.get("n", 1)),
                             rho_bar=_positive(d.get("rho_bar", 1.0), "mode.rho_bar"),
                             rho_prime=float(d.get("rho_prime", 1.0)),
                             params=cfg.params, h=cfg.domain.height)
    return spec, d


def _run_mode_sim(cfg: RunConfig, out: Path, plot: bool):
    spec, d = _mode_spec_from_cfg(cfg)
    T = _positive(d.get("T", 20.0), "mode.T")
    dt = _positive(d.get("dt", 1e-3), "mode.dt")
    initial = dynamics.ModeState(eta=float(d.get("eta0", 1.0)),
                                 eta_dot=float(d.get("eta_dot0", 0.0)))
    series = dynamics.simulate_mode(spec, initial, T, dt)
    series.write_csv(out / "series.csv")
    sol = dynamics.closed_form_solution(spec, initial)
    exact_eta, _ = sol(series.t)
    scale = max(float(np.max(np.abs(exact_eta))), 1e-300)
    audit = dynamics.energy_audit(series, spec)
    r1, r2 = dynamics.characteristic_roots(spec)
    payload = {
        "roots": [[r1.real, r1.imag], [r2.real, r2.imag]],
        "growth_rate": dynamics.growth_rate(spec),
        "damping": spec.damping,
        "stiffness": spec.stiffness,
        "closed_form_max_rel_error": float(np.max(np.abs(series.eta - exact_eta)) / scale),
        "energy_audit_residual": audit.max_residual,
        "dt": dt, "T": T,
        "series_csv": "series.csv",
    }
    if plot:
        from . import plotting
        plotting.save_mode_series_plot(series, out / "series.png")
    return payload, True


def _run_boundary_scan(cfg: RunConfig, out: Path, plot: bool):
    d = dict(_require(cfg.raw, "scan", "top level"))
    _reject_unknown(d, {"M3_values", "n_max", "rho_bar", "rho_prime"}, "scan")
    values = [float(x) for x in _require(d, "M3_values", "scan")]
    base = dynamics.ModeSpec(n=1,
                             rho_bar=_positive(d.get("rho_bar", 1.0), "scan.rho_bar"),
                             rho_prime=_positive(d.get("rho_prime", 1.0), "scan.rho_prime"),
                             params=cfg.params, h=cfg.domain.height)
    rows = dynamics.stability_boundary_scan(base, values, n_max=int(d.get("n_max", 8)))
    dynamics.write_scan_csv(rows, out / "scan.csv")
    m_exact = (cfg.domain.height / np.pi) * np.sqrt(
        cfg.params.g * base.rho_prime / cfg.params.lam)
    payload = {
        "rows": [{"M3": r.M3, "growth_rate": r.growth_rate, "argmax_n": r.argmax_n}
                 for r in rows],
        "signs": ["+" if r.growth_rate > 0 else ("-" if r.growth_rate < 0 else "0")
                  for r in rows],
        "threshold_constant_profile": float(m_exact),
        "scan_csv": "scan.csv",
    }
    if plot:
        from . import plotting
        plotting.save_scan_plot(rows, out / "scan.png", threshold=float(m_exact))
    return payload, True


def _run_landscape(cfg: RunConfig, out: Path, plot: bool):
    d = dict(_require(cfg.raw, "landscape", "top level"))
    _reject_unknown(d, {"condition", "eps", "eps_max", "trials", "stratified",
                        "rho_plus", "rho_minus", "h", "l"}, "landscape")
    condition = _require(d, "condition", "landscape")
    if condition not in (landscape.CONDITION_STABILITY, landscape.CONDITION_INSTABILITY):
        raise ConfigError("landscape.condition must be 'stability' or 'instability'")
    verdicts: list[landscape.LandscapeVerdict]
    if d.get("stratified", False):
        v = landscape.stratified_landscape(
            cfg.params,
            h=_positive(_require(d, "h", "landscape"), "landscape.h"),
            l=_positive(_require(d, "l", "landscape"), "landscape.l"),
            rho_plus=float(_require(d, "rho_plus", "landscape")),
            rho_minus=float(_require(d, "rho_minus", "landscape")),
            eps=_positive(d.get("eps", 1e-2), "landscape.eps"),
            condition=condition, seed=cfg.seed,
            trials=int(d.get("trials", 50)))
        verdicts = [v]
    elif condition == landscape.CONDITION_INSTABILITY:
        if cfg.profile is None:
            raise ConfigError("landscape needs a 'profile'")
        verdicts = [landscape.instability_witness(
            cfg.profile, cfg.domain, cfg.params,
            eps=_positive(d.get("eps", 1e-2), "landscape.eps"))]
    else:
        if cfg.profile is None:
            raise ConfigError("landscape needs a 'profile'")
        verdicts = landscape.stability_certificate(
            cfg.profile, cfg.domain, cfg.params,
            trials=int(d.get("trials", 50)),
            eps_max=_positive(d.get("eps_max", d.get("eps", 0.05)), "landscape.eps_max"),
            seed=cfg.seed)
    landscape.write_verdicts_jsonl(verdicts, out / "verdicts.jsonl")
    ok = all(v.satisfied for v in verdicts)
    payload = {
        "condition": condition,
        "all_satisfied": ok,
        "n_verdicts": len(verdicts),
        "min_value": min(v.functional_value for v in verdicts),
        "max_value": max(v.functional_value for v in verdicts),
        "verdicts_jsonl": "verdicts.jsonl",
    }
    return payload, ok


def _flow_map_from_cfg(cfg: RunConfig, d: dict, rng: np.random.Generator):
    grid = make_uniform_grid(cfg.domain, int(cfg.resolution.get("n1", 12)),
                             int(cfg.resolution.get("n2", 12)),
                             int(cfg.resolution.get("n3", 33)))
    map_type = d.get("map", "shear")
    if map_type == "identity":
        return kinematics.build_flow_map_from_closed_map(kinematics.identity_map(), grid)
    if map_type == "shear":
        zmap = kinematics.random_shear_map(cfg.domain, rng,
                                           n_factors=int(d.get("factors", 3)),
                                           amplitude=float(d.get("amplitude", 0.15)))
        return kinematics.build_flow_map_from_closed_map(zmap, grid)
    if map_type == "flow":
        w = sampling.random_solenoidal_field(cfg.domain, rng,
                                             amplitude=float(d.get("amplitude", 0.3)))
        return kinematics.flow_from_divfree_field(
            w, grid, T=float(d.get("T", 0.25)), steps=int(d.get("steps", 64)))
    raise ConfigError(f"unknown map type {map_type!r} (identity | shear | flow)")


def _run_flux_audit(cfg: RunConfig, out: Path, plot: bool):
    d = dict(cfg.raw.get("flux", {}))
    _reject_unknown(d, {"map", "amplitude", "factors", "T", "steps",
                        "patch_side", "quadrature"}, "flux")
    rng = np.random.default_rng(cfg.seed)
    flow = _flow_map_from_cfg(cfg, d, rng)
    side = float(d.get("patch_side", 1.0))
    nq = int(d.get("quadrature", 32))
    dom = cfg.domain
    center = np.array([np.pi * dom.L1, np.pi * dom.L2, 0.5 * (dom.a + dom.b)])
    surfaces = [kinematics.axis_aligned_patch(center, ax, side, n_alpha=nq, n_beta=nq)
                for ax in range(3)]
    report = kinematics.verify_flux_equivalence(flow, cfg.params, surfaces)
    with open(out / "flux.csv", "w", newline="\n") as fh:
        fh.write("surface,flux_initial,flux_transported,abs_error\n")
        for k, s in enumerate(report.surfaces):
            fh.write(f"{k},{s.flux_initial:.17g},{s.flux_transported:.17g},{s.abs_error:.17g}\n")
    payload = {
        "pointwise_residual": report.pointwise_residual,
        "max_flux_error": report.max_flux_error,
        "patch_reconstruction_residual": report.patch_reconstruction_residual,
        "patch_size": report.patch_size,
        "kronecker_residual": kinematics.kronecker_residual(flow),
        "piola_residual": kinematics.piola_residual(flow),
        "max_jacobian_deviation": float(np.max(np.abs(flow.jacobian - 1.0))),
        "surfaces": [{"flux_initial": s.flux_initial,
                      "flux_transported": s.flux_transported,
                      "abs_error": s.abs_error} for s in report.surfaces],
        "flux_csv": "flux.csv",
    }
    if plot:
        from . import plotting
        plotting.save_flux_plot(report, out / "flux.png")
    return payload, True


def _run_energy_audit(cfg: RunConfig, out: Path, plot: bool):
    if cfg.profile is None:
        raise ConfigError("energy-audit needs a 'profile'")
    d = dict(cfg.raw.get("energy", {}))
    _reject_unknown(d, {"map", "amplitude", "factors", "T", "steps", "epsilons"},
                    "energy")
    d.setdefault("map", "flow")
    rng = np.random.default_rng(cfg.seed)
    flow = _flow_map_from_cfg(cfg, d, rng)
    grid = flow.grid
    report = energy.evaluate_energy_report(flow, cfg.profile, cfg.params)
    pot = energy.potential_variation_exact(flow, cfg.profile, cfg.params)
    eta_field = VectorField3(flow.eta, boundary="free",
                             grad=flow.grad_zeta - np.eye(3))
    check = energy.cubic_remainder_bound_check(eta_field, cfg.profile, cfg.params, grid)
    epsilons = [float(x) for x in d.get("epsilons", [1.0, 0.5, 0.25, 0.125])]
    rows = energy.eps_sweep_rows(eta_field, cfg.profile, cfg.params, grid, epsilons)
    energy.write_eps_sweep_csv(rows, out / "eps_sweep.csv")
    denom = abs(pot.delta_direct) if pot.delta_direct != 0 else 1.0
    payload = {
        "report": report.to_dict(),
        "identity_rel_residual": abs(-pot.v_star - pot.delta_direct) / denom,
        "volume_preserving": pot.volume_preserving,
        "max_jacobian_deviation": pot.max_jacobian_deviation,
        "remainder_bound": {"value": check.value, "bound": check.bound,
                            "holds": check.holds},
        "eps_sweep_csv": "eps_sweep.csv",
    }
    if plot:
        from . import plotting
        plotting.save_sweep_plot(rows, out / "eps_sweep.png")
    return payload, True


_RUNNERS = {
    "threshold": _run_threshold,
    "mode-sim": _run_mode_sim,
    "boundary-scan": _run_boundary_scan,
    "landscape": _run_landscape,
    "flux-audit": _run_flux_audit,
    "energy-audit": _run_energy_audit,
}


def run(cfg: RunConfig, out_dir, seed: int | None = None, threads: int = 1,
        quiet: bool = False, plot: bool = False) -> int:
    """Execute one configured command; returns the process exit status."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    t0 = time.perf_counter()

    if cfg.command == "sweep":
        runs = cfg.raw["runs"]
        statuses = []

        def one(idx_raw):
            idx, raw_sub = idx_raw
            sub_dir = out / f"run_{idx:03d}"
            sub_dir.mkdir(parents=True, exist_ok=True)
            cfg_path = sub_dir / "config.json"
            write_json(raw_sub, cfg_path)
            sub_cfg = parse_config(cfg_path)
            return run(sub_cfg, sub_dir, threads=1, quiet=quiet, plot=plot)

        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            statuses = list(pool.map(one, enumerate(runs)))
        payload = {"runs": len(runs), "statuses": statuses}
        write_json(payload, out / "result.json")
        _write_manifest(cfg, out, t0)
        status = max(statuses) if statuses else 0
        if not quiet:
            print(f"sweep: {len(runs)} runs, worst status {status}")
        return status

    payload, ok = _RUNNERS[cfg.command](cfg, out, plot)
    payload["command"] = cfg.command
    payload["seed"] = cfg.seed
    payload["resolution"] = cfg.resolution
    payload["tolerances"] = cfg.tolerances
    write_json(payload, out / "result.json")
    _write_manifest(cfg, out, t0)
    if not quiet:
        print(f"{cfg.command}: wrote {out / 'result.json'}"
              + ("" if ok else " (verdict failure)"))
    return 0 if ok else 2


def _write_manifest(cfg: RunConfig, out: Path, t0: float) -> None:
    manifest = {
        "command": cfg.command,
        "config": cfg.raw,
        "version": __version__,
        "wall_time_s": time.perf_counter() - t0,
    }
    write_json(manifest, out / "manifest.json")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mhd-inhibit",
        description="Magnetic-inhibition thresholds, energy identities and "
                    "stability certificates on slab domains.")
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads for sweep (fallback: MHD_INHIBIT_THREADS)")
    parser.add_argument("--quiet", action="store_true")
    parser.add_argument("--plot", action="store_true",
                        help="render figures next to the CSV outputs")
    args = parser.parse_args(argv)

    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("MHD_INHIBIT_THREADS", "1"))

    try:
        cfg = parse_config(args.config)
        return run(cfg, args.out, seed=args.seed, threads=threads,
                   quiet=args.quiet, plot=args.plot)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
