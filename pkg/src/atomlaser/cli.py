"""Command-line entry point: presets, sweeps, calibration, dressed-potential
tables and curve fitting.

Every run writes a ``manifest.json`` that embeds the fully resolved
configuration; re-running from the manifest reproduces the data products
byte-for-byte (timestamps live only inside the manifest).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import analysis, protocols
from .config import (
    ConfigError,
    CouplingScheme,
    SimConfig,
    config_from_dict,
    config_to_dict,
    load_config,
)
from .constants import make_rb87
from .dressed import (
    detuning_profile,
    dressed_potentials,
    fall_time,
    gravitational_sag,
    oscillation_frequency,
    sag_detuning,
    shutdown_estimate,
    strong_coupling_threshold,
)
from .engine import TRAPPED, UNTRAPPED, ANTITRAPPED, F2_UNTRAPPED

PRESETS: tuple[tuple[str, str], ...] = (
    ("fig1_dressed", "dressed- and bare-potential curves over z (figure 1 layout)"),
    ("fig2_carpet", "integrated density carpet against oscillation frequency "
                    "(figure 2 layout)"),
    ("fig3_zeeman14ms", "14 ms three-state kicked outcoupling sweep with "
                        "saturating-exponential fit (figure 3 layout)"),
    ("fig5_compare3ms", "matched 3 ms sweeps of all three outcouplers with fits "
                        "and ratios (figure 5 layout)"),
    ("calibration", "100 us pulse transfer against drive with coupling-slope fit "
                    "(figure 2a analogue)"),
    ("custom", "run the protocol found in --config as-is"),
)

_PRESET_NAMES = tuple(name for name, _ in PRESETS)


@dataclass
class RunPlan:
    preset: str
    config_path: str | None
    out_dir: str
    workers: int = 1
    refine: bool = False


def list_presets() -> tuple[tuple[str, str], ...]:
    """Stable (name, description) table of available presets."""
    return PRESETS


# ---------------------------------------------------------------------------
# deterministic output helpers


def _fmt(v) -> str:
    return repr(float(v))


def _write_text(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def _write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    _write_text(path, "\n".join(lines) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def _write_json(path: Path, data) -> None:
    _write_text(path, json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


def _write_manifest(plan: RunPlan, cfg: SimConfig | None, out: Path) -> None:
    manifest = {
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "plan": {
            "preset": plan.preset,
            "workers": plan.workers,
            "refine": plan.refine,
        },
        "config": config_to_dict(cfg) if cfg is not None else None,
    }
    _write_json(out / "manifest.json", manifest)


def _write_curve(path: Path, curve: protocols.ShutdownCurve) -> None:
    _write_csv(path, ["omega0_hz", "fraction", "uncertainty"], curve.points)


def _write_snapshots(out: Path, cfg: SimConfig, result: protocols.ContinuousRunResult) -> None:
    snapdir = out / "snapshots"
    snapdir.mkdir(exist_ok=True)
    for pt in result.points:
        if pt.density_snapshot is None or pt.error is not None:
            continue
        phases = (pt.phase_snapshot if pt.phase_snapshot is not None
                  else np.zeros_like(pt.density_snapshot))
        data = {
            "metadata": {
                "omega0_hz": pt.omega0_hz,
                "rabi_omega": pt.rabi_omega,
                "config": config_to_dict(cfg),
            },
            "z": [float(v) for v in result.z],
            "components": [
                {
                    "label": label,
                    "density": [float(v) for v in dens],
                    "phase": [float(v) for v in ph],
                }
                for label, dens, ph in zip(
                    pt.fractions.keys(), pt.density_snapshot, phases
                )
            ],
        }
        _write_json(snapdir / f"point_{pt.omega0_hz:.3f}Hz.json", data)


def _plateau(curve: protocols.ShutdownCurve) -> float:
    frac = curve.fractions
    k = min(3, frac.size)
    return float(np.mean(frac[-k:]))


def _fit_lines(name: str, curve: protocols.ShutdownCurve, fit: analysis.FitResult) -> list[str]:
    lines = [
        f"{name}: plateau fraction = {_fmt(_plateau(curve))}",
        f"{name}: fitted A = {_fmt(fit.A)}, x0 = {_fmt(fit.x0)} Hz, r = {_fmt(fit.r)} Hz "
        f"(converged={fit.converged})",
        f"{name}: onset x0 + r = {_fmt(fit.x0 + fit.r)} Hz",
    ]
    return lines


# ---------------------------------------------------------------------------
# preset runners


def _run_fig1(plan: RunPlan, cfg: SimConfig | None, out: Path) -> int:
    if cfg is None:
        cfg = protocols.default_config(CouplingScheme.RF_THREE_STATE, None)
    species, trap, coupling = cfg.species, cfg.trap, cfg.coupling
    profile = detuning_profile(trap, species, coupling.detuning_delta, cfg.constants)
    system = dressed_potentials(profile, coupling.rabi_omega)
    z = np.linspace(cfg.grid.z_min, cfg.grid.z_max, 2001)
    rows = zip(
        z,
        profile.delta_of_z(z),
        system.v_plus(z),
        system.v_minus(z),
        system.bare_trapped(z),
        system.bare_untrapped(z),
    )
    _write_csv(out / "dressed.csv",
               ["z", "delta", "V_plus", "V_minus", "V_bare_t", "V_bare_u"], rows)
    zc = gravitational_sag(trap, cfg.constants)
    Delta = sag_detuning(trap, species, cfg.constants)
    lines = [
        f"sag position z_c = {_fmt(zc)} m",
        f"sag detuning = {_fmt(Delta)} rad/s",
        f"coupling strength = {_fmt(coupling.rabi_omega)} rad/s",
        f"on-resonance splitting 2*hbar*Omega = "
        f"{_fmt(2.0 * cfg.constants.hbar * coupling.rabi_omega)} J",
        f"strong-coupling threshold = "
        f"{_fmt(strong_coupling_threshold(trap.omega_z, Delta) / (2.0 * math.pi))} Hz",
    ]
    _write_text(out / "summary.txt", "\n".join(lines) + "\n")
    return 0


def _run_continuous_preset(
    plan: RunPlan, cfg: SimConfig, out: Path, carpet: bool
) -> int:
    result = protocols.run_continuous(
        cfg, workers=plan.workers, keep_snapshots=True, refine=plan.refine
    )
    _write_curve(out / "curve.csv", result.curve)
    _write_snapshots(out, cfg, result)
    if carpet:
        rows = []
        for pt in result.points:
            if pt.density_snapshot is None or pt.error is not None:
                continue
            total = np.sum(pt.density_snapshot, axis=0)
            rows.extend((pt.omega0_hz, zv, dv) for zv, dv in zip(result.z, total))
        _write_csv(out / "carpet.csv", ["omega0_hz", "z_m", "density_per_m"], rows)

    lines: list[str] = []
    failures = [pt for pt in result.points if pt.error is not None]
    fit = None
    if result.curve.fractions.size >= 5:
        fit = analysis.fit_saturating_exponential(result.curve)
        _write_json(out / "fit.json", {
            "A": fit.A, "x0_hz": fit.x0, "r_hz": fit.r,
            "covariance": fit.covariance, "residual_norm": fit.residual_norm,
            "converged": fit.converged,
        })
        lines += _fit_lines(cfg.coupling.scheme.value, result.curve, fit)
    try:
        pl = analysis.power_law_exponent(
            result.curve.omega0_hz, result.curve.fractions, cfg.protocol.coupling_on
        )
        lines.append(
            f"weak-regime scaling exponent = {_fmt(pl.exponent)} "
            f"+- {_fmt(pl.stderr)} ({pl.n_points} points)"
        )
    except analysis.AnalysisError as exc:
        lines.append(f"weak-regime scaling exponent unavailable: {exc}")
    est = shutdown_estimate(
        cfg.trap, cfg.species, cfg.coupling, result.cloud_fwhm, cfg.constants
    )
    lines.append(
        f"fall-time estimate: omega0_max = {_fmt(est.omega0_max)} Hz over "
        f"region width {_fmt(est.region_width)} m"
    )
    if failures:
        lines.append(f"FAILED points: {[pt.omega0_hz for pt in failures]!r}")
        _write_json(out / "error_report.json", {
            "error": "sweep point failures",
            "points": [{"omega0_hz": pt.omega0_hz, "message": pt.error}
                       for pt in failures],
        })
    _write_text(out / "summary.txt", "\n".join(lines) + "\n")
    return 1 if failures else 0


def _run_fig5(plan: RunPlan, cfg_override: SimConfig | None, out: Path) -> int:
    sweep = (cfg_override.protocol.sweep if cfg_override is not None
             and cfg_override.protocol is not None else protocols.DEFAULT_SWEEP)
    status = 0
    fits: dict[str, analysis.FitResult] = {}
    plateaus: dict[str, float] = {}
    lines: list[str] = []
    for scheme in (
        CouplingScheme.RF_THREE_STATE,
        CouplingScheme.RAMAN_THREE_STATE,
        CouplingScheme.RAMAN_TWO_STATE,
    ):
        cfg = protocols.compare3ms_config(scheme, sweep=sweep)
        result = protocols.run_continuous(
            cfg, workers=plan.workers, keep_snapshots=False, refine=plan.refine
        )
        tag = scheme.value
        _write_curve(out / f"curve_{tag}.csv", result.curve)
        if any(pt.error is not None for pt in result.points):
            status = 1
        fit = analysis.fit_saturating_exponential(result.curve)
        fits[tag] = fit
        plateaus[tag] = _plateau(result.curve)
        _write_json(out / f"fit_{tag}.json", {
            "A": fit.A, "x0_hz": fit.x0, "r_hz": fit.r,
            "covariance": fit.covariance, "residual_norm": fit.residual_norm,
            "converged": fit.converged,
        })
        lines += _fit_lines(tag, result.curve, fit)
    r_rf = fits[CouplingScheme.RF_THREE_STATE.value].r
    r_raman2 = fits[CouplingScheme.RAMAN_TWO_STATE.value].r
    r_raman3 = fits[CouplingScheme.RAMAN_THREE_STATE.value].r
    ratio = r_raman2 / r_rf
    lines += [
        f"r ratio (two-state kicked / rf) = {_fmt(ratio)}",
        f"squared r ratio (golden-rule implied flux ratio) = {_fmt(ratio**2)}",
        f"r ordering: raman-2-state {_fmt(r_raman2)} Hz > raman-3-state "
        f"{_fmt(r_raman3)} Hz > rf {_fmt(r_rf)} Hz is "
        f"{r_raman2 > r_raman3 > r_rf}",
        f"plateau ordering: {_fmt(plateaus['raman-2-state'])} > "
        f"{_fmt(plateaus['raman-3-state'])} > {_fmt(plateaus['rf-3-state'])} is "
        f"{plateaus['raman-2-state'] > plateaus['raman-3-state'] > plateaus['rf-3-state']}",
    ]
    _write_text(out / "summary.txt", "\n".join(lines) + "\n")
    return status


def _run_calibration(plan: RunPlan, cfg: SimConfig | None, out: Path,
                     true_slope: float = 2.0 * math.pi * 5000.0) -> int:
    if cfg is None:
        cfg = protocols.calibration_config()
    if cfg.protocol is None or cfg.protocol.kind != "pulse-calibration":
        raise ConfigError(["calibration preset needs a 'pulse-calibration' protocol"])
    drives = cfg.protocol.sweep
    pulse = cfg.protocol.coupling_on
    points = protocols.run_pulse_calibration(cfg, drives, true_slope, pulse)
    _write_csv(
        out / "calibration.csv",
        ["drive", "rabi_omega", "transferred"],
        [(p.drive, p.rabi_omega, p.transferred) for p in points],
    )

    cache: dict[float, float] = {}

    def predictor(rabi: float) -> float:
        key = round(rabi, 9)
        if key not in cache:
            res = protocols.run_pulse_calibration(cfg, [1.0], rabi, pulse)
            cache[key] = res[0].transferred
        return cache[key]

    cal = analysis.fit_rabi_calibration(
        [p.drive for p in points], [p.transferred for p in points], predictor, pulse
    )
    _write_json(out / "calibration_fit.json", {
        "slope_rad_s_per_drive": cal.slope,
        "true_slope_rad_s_per_drive": true_slope,
        "residual_norm": cal.residual_norm,
        "converged": cal.converged,
    })
    rel = abs(cal.slope - true_slope) / true_slope
    _write_text(out / "summary.txt", "\n".join([
        f"true coupling slope = {_fmt(true_slope)} rad/s per drive unit",
        f"recovered slope = {_fmt(cal.slope)} rad/s per drive unit",
        f"relative error = {_fmt(rel)}",
    ]) + "\n")
    return 0 if cal.converged else 1


def execute(plan: RunPlan) -> int:
    """Run the plan; write manifest, data products and summary into the
    output directory.  Returns the process exit status."""
    out = Path(plan.out_dir)
    try:
        if plan.preset not in _PRESET_NAMES:
            raise ConfigError(
                [f"unknown preset {plan.preset!r}; choose from {list(_PRESET_NAMES)!r}"]
            )
        cfg: SimConfig | None = None
        if plan.config_path is not None:
            cfg = load_config(plan.config_path)
        if plan.preset == "custom" and cfg is None:
            raise ConfigError(["preset 'custom' requires --config"])
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "error_report.json", {
            "error": type(exc).__name__,
            "message": str(exc),
            "violations": getattr(exc, "violations", []),
        })
        return 2

    out.mkdir(parents=True, exist_ok=True)
    try:
        if plan.preset == "fig1_dressed":
            status = _run_fig1(plan, cfg, out)
            _write_manifest(plan, cfg, out)
            return status
        if plan.preset == "calibration":
            status = _run_calibration(plan, cfg, out)
            _write_manifest(plan, cfg, out)
            return status
        if plan.preset == "fig5_compare3ms":
            status = _run_fig5(plan, cfg, out)
            _write_manifest(plan, cfg, out)
            return status
        if plan.preset == "fig2_carpet":
            cfg = cfg or protocols.zeeman14ms_config()
            status = _run_continuous_preset(plan, cfg, out, carpet=True)
        elif plan.preset == "fig3_zeeman14ms":
            cfg = cfg or protocols.zeeman14ms_config()
            status = _run_continuous_preset(plan, cfg, out, carpet=False)
        else:  # custom
            assert cfg is not None
            if cfg.protocol is None:
                raise ConfigError(["custom run requires a protocol section"])
            if cfg.protocol.kind == "pulse-calibration":
                status = _run_calibration(plan, cfg, out)
            else:
                status = _run_continuous_preset(plan, cfg, out, carpet=False)
        _write_manifest(plan, cfg, out)
        return status
    except (ConfigError, protocols.ProtocolError, analysis.AnalysisError) as exc:
        _write_json(out / "error_report.json", {
            "error": type(exc).__name__,
            "message": str(exc),
            "violations": getattr(exc, "violations", []),
        })
        return 2


def execute_from_manifest(manifest_path: str | Path, out_dir: str) -> int:
    """Re-run a previous plan from its manifest."""
    with open(manifest_path, "r", encoding="utf-8") as f:
        manifest = json.load(f)
    cfg = manifest.get("config")
    plan = RunPlan(
        preset=manifest["plan"]["preset"],
        config_path=None,
        out_dir=out_dir,
        workers=manifest["plan"]["workers"],
        refine=manifest["plan"]["refine"],
    )
    if cfg is not None:
        # materialize the embedded config for the runners
        tmp = Path(out_dir)
        tmp.mkdir(parents=True, exist_ok=True)
        cfg_path = tmp / "_manifest_config.json"
        _write_json(cfg_path, cfg)
        plan.config_path = str(cfg_path)
    return execute(plan)


# ---------------------------------------------------------------------------
# other subcommands


def _cmd_dressed(args) -> int:
    cfg = load_config(args.config) if args.config else protocols.default_config(
        CouplingScheme.RF_THREE_STATE, None
    )
    plan = RunPlan(preset="fig1_dressed", config_path=None, out_dir=args.out)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.z_min is not None or args.z_max is not None:
        z_min = args.z_min if args.z_min is not None else cfg.grid.z_min
        z_max = args.z_max if args.z_max is not None else cfg.grid.z_max
        from dataclasses import replace as _rep
        cfg = _rep(cfg, grid=_rep(cfg.grid, z_min=z_min, z_max=z_max))
    status = _run_fig1(plan, cfg, out)
    _write_manifest(plan, cfg, out)
    return status


def _cmd_fit(args) -> int:
    rows = Path(args.curve).read_text(encoding="utf-8").strip().splitlines()
    header = rows[0].split(",")
    try:
        xi = header.index("omega0_hz")
        yi = header.index("fraction")
    except ValueError:
        print("curve CSV must have omega0_hz and fraction columns", file=sys.stderr)
        return 2
    data = [line.split(",") for line in rows[1:]]
    x = np.array([float(r[xi]) for r in data])
    y = np.array([float(r[yi]) for r in data])
    fit = analysis.fit_saturating_exponential(x, y)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "fit.json", {
        "A": fit.A, "x0_hz": fit.x0, "r_hz": fit.r,
        "covariance": fit.covariance, "residual_norm": fit.residual_norm,
        "converged": fit.converged,
    })
    resid = y - analysis.saturating_exponential(x, fit.A, fit.x0, fit.r)
    _write_csv(out / "residuals.csv", ["omega0_hz", "fraction", "model", "residual"],
               zip(x, y, y - resid, resid))
    print(f"A={fit.A:.6g} x0={fit.x0:.6g} Hz r={fit.r:.6g} Hz converged={fit.converged}")
    return 0 if fit.converged else 1


def _default_workers() -> int:
    env = os.environ.get("OUTCOUPLER_SIM_THREADS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="atomlaser",
        description="Atom-laser outcoupling simulator and analysis toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a preset or a custom config")
    p_run.add_argument("--preset", default="custom", choices=_PRESET_NAMES)
    p_run.add_argument("--config", default=None, help="JSON configuration path")
    p_run.add_argument("--manifest", default=None,
                       help="re-run from a previous manifest.json")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--workers", type=int, default=None)
    p_run.add_argument("--refine", action="store_true",
                       help="re-run each point at dz/2 for uncertainties")

    p_presets = sub.add_parser("presets", help="list presets")

    p_dressed = sub.add_parser("dressed", help="emit dressed-potential CSV")
    p_dressed.add_argument("--config", default=None)
    p_dressed.add_argument("--z-min", type=float, default=None)
    p_dressed.add_argument("--z-max", type=float, default=None)
    p_dressed.add_argument("--out", required=True)

    p_cal = sub.add_parser("calibrate", help="run the pulse-calibration preset")
    p_cal.add_argument("--config", default=None)
    p_cal.add_argument("--out", required=True)
    p_cal.add_argument("--workers", type=int, default=None)

    p_sweep = sub.add_parser("sweep", help="run a continuous-outcoupling sweep")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--workers", type=int, default=None)
    p_sweep.add_argument("--refine", action="store_true")

    p_fit = sub.add_parser("fit", help="fit a saturating exponential to curve.csv")
    p_fit.add_argument("--curve", required=True)
    p_fit.add_argument("--out", required=True)

    args = parser.parse_args(argv)

    if args.command == "presets":
        for name, desc in list_presets():
            print(f"{name:18s} {desc}")
        return 0
    if args.command == "dressed":
        return _cmd_dressed(args)
    if args.command == "fit":
        return _cmd_fit(args)
    if args.command == "calibrate":
        plan = RunPlan(
            preset="calibration", config_path=args.config, out_dir=args.out,
            workers=args.workers or _default_workers(),
        )
        return execute(plan)
    if args.command == "sweep":
        plan = RunPlan(
            preset="custom", config_path=args.config, out_dir=args.out,
            workers=args.workers or _default_workers(), refine=args.refine,
        )
        return execute(plan)
    # run
    if args.manifest:
        return execute_from_manifest(args.manifest, args.out)
    plan = RunPlan(
        preset=args.preset, config_path=args.config, out_dir=args.out,
        workers=args.workers or _default_workers(), refine=args.refine,
    )
    return execute(plan)


if __name__ == "__main__":
    raise SystemExit(main())
