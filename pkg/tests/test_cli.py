import json
import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from atomlaser import protocols
from atomlaser.analysis import saturating_exponential
from atomlaser.cli import RunPlan, execute, execute_from_manifest, list_presets, main
from atomlaser.config import (
    CouplingScheme,
    GridSpec,
    ProtocolConfig,
    config_to_dict,
    save_config,
)


def small_sweep_config(sweep=(150.0, 600.0)):
    proto = ProtocolConfig(
        kind="continuous", coupling_on=1.5e-3, post_evolve=0.4e-3,
        expansion=1.0e-3, sweep=sweep,
    )
    cfg = protocols.default_config(CouplingScheme.RF_THREE_STATE, proto, n_points=2048)
    return replace(cfg, grid=GridSpec(z_min=-120e-6, z_max=40e-6, n_points=2048, dt=1e-6))


class TestPresets:
    def test_listing_is_stable_and_complete(self):
        names = [name for name, _ in list_presets()]
        assert names == [
            "fig1_dressed", "fig2_carpet", "fig3_zeeman14ms",
            "fig5_compare3ms", "calibration", "custom",
        ]

    def test_descriptions_cite_figures(self):
        table = dict(list_presets())
        assert "figure 3" in table["fig3_zeeman14ms"]
        assert "figure 2" in table["calibration"]

    def test_main_prints_presets(self, capsys):
        assert main(["presets"]) == 0
        out = capsys.readouterr().out
        assert "fig3_zeeman14ms" in out and "calibration" in out


class TestDressedPreset:
    def test_csv_gap_at_resonance(self, tmp_path):
        out = tmp_path / "run"
        plan = RunPlan(preset="fig1_dressed", config_path=None, out_dir=str(out))
        assert execute(plan) == 0
        lines = (out / "dressed.csv").read_text().strip().splitlines()
        assert lines[0] == "z,delta,V_plus,V_minus,V_bare_t,V_bare_u"
        data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
        z, delta, vp, vm = data[:, 0], data[:, 1], data[:, 2], data[:, 3]
        # interpolate the branch gap to the resonance crossing delta = 0
        sign_change = np.nonzero(np.diff(np.sign(delta)))[0]
        assert sign_change.size >= 1
        i = sign_change[0]
        w = -delta[i] / (delta[i + 1] - delta[i])
        gap = (1 - w) * (vp[i] - vm[i]) + w * (vp[i + 1] - vm[i + 1])
        cfg = protocols.default_config(CouplingScheme.RF_THREE_STATE, None)
        expected = 2 * cfg.constants.hbar * cfg.coupling.rabi_omega
        assert gap == pytest.approx(expected, rel=0.01)
        assert (out / "summary.txt").exists()
        assert (out / "manifest.json").exists()

    def test_dressed_subcommand_with_range(self, tmp_path):
        out = tmp_path / "dr"
        assert main(["dressed", "--out", str(out),
                     "--z-min", "-5e-5", "--z-max", "2e-5"]) == 0
        lines = (out / "dressed.csv").read_text().strip().splitlines()
        data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
        assert data[0, 0] == pytest.approx(-5e-5)
        assert data[-1, 0] == pytest.approx(2e-5)


class TestErrorReport:
    def test_invalid_config_exits_nonzero_without_partial_outputs(self, tmp_path):
        bad = tmp_path / "bad.json"
        cfg = small_sweep_config()
        data = config_to_dict(cfg)
        data["trap"]["omega_z"] = 0.0
        bad.write_text(json.dumps(data))
        out = tmp_path / "out"
        plan = RunPlan(preset="custom", config_path=str(bad), out_dir=str(out))
        status = execute(plan)
        assert status != 0
        produced = {p.name for p in out.iterdir()}
        assert produced == {"error_report.json"}
        report = json.loads((out / "error_report.json").read_text())
        assert any("omega_z" in v for v in report["violations"])

    def test_custom_without_config_is_an_error(self, tmp_path):
        out = tmp_path / "out"
        plan = RunPlan(preset="custom", config_path=None, out_dir=str(out))
        assert execute(plan) == 2
        assert (out / "error_report.json").exists()


class TestSweepRoundTrip:
    def test_manifest_reproduces_outputs_byte_identically(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        save_config(small_sweep_config(), cfg_path)
        out1 = tmp_path / "run1"
        assert main(["sweep", "--config", str(cfg_path), "--out", str(out1),
                     "--workers", "1"]) == 0
        curve1 = (out1 / "curve.csv").read_bytes()
        assert (out1 / "manifest.json").exists()
        assert (out1 / "summary.txt").exists()

        out2 = tmp_path / "run2"
        assert execute_from_manifest(out1 / "manifest.json", str(out2)) == 0
        curve2 = (out2 / "curve.csv").read_bytes()
        assert curve1 == curve2

    def test_snapshots_written_for_preset_runs(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        save_config(small_sweep_config(sweep=(300.0,)), cfg_path)
        out = tmp_path / "carpet"
        plan = RunPlan(preset="fig2_carpet", config_path=str(cfg_path),
                       out_dir=str(out), workers=1)
        assert execute(plan) == 0
        snaps = sorted((out / "snapshots").iterdir())
        assert len(snaps) == 1
        snap = json.loads(snaps[0].read_text())
        assert {"metadata", "z", "components"} <= set(snap)
        assert {"label", "density", "phase"} <= set(snap["components"][0])
        carpet = (out / "carpet.csv").read_text().splitlines()
        assert carpet[0] == "omega0_hz,z_m,density_per_m"
        assert len(carpet) == 1 + 2048


class TestFitSubcommand:
    def test_fit_recovers_synthetic_parameters(self, tmp_path):
        x = np.linspace(120.0, 4800.0, 24)
        y = saturating_exponential(x, 0.5, 100.0, 600.0)
        curve = tmp_path / "curve.csv"
        lines = ["omega0_hz,fraction,uncertainty"]
        lines += [f"{repr(float(a))},{repr(float(b))},0.0" for a, b in zip(x, y)]
        curve.write_text("\n".join(lines) + "\n")
        out = tmp_path / "fit"
        assert main(["fit", "--curve", str(curve), "--out", str(out)]) == 0
        fit = json.loads((out / "fit.json").read_text())
        assert fit["converged"]
        assert abs(fit["r_hz"] - 600.0) / 600.0 < 1e-6
        assert (out / "residuals.csv").exists()


class TestWorkerEnvOverride:
    def test_env_var_sets_worker_default(self, monkeypatch):
        from atomlaser.cli import _default_workers

        monkeypatch.setenv("OUTCOUPLER_SIM_THREADS", "3")
        assert _default_workers() == 3
        monkeypatch.delenv("OUTCOUPLER_SIM_THREADS")
        assert _default_workers() >= 1
