"""Validated configuration types and JSON (de)serialization.

All quantities are SI. Configuration dataclasses are plain immutable
holders; every invariant is checked explicitly by :func:`config_violations`
/ :func:`validate_config` so that invalid values can be constructed,
inspected and reported with field names instead of failing piecemeal.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

from .constants import Constants, Species, make_rb87


class ConfigError(ValueError):
    """Raised when a configuration violates one of its invariants."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.violations))


class CouplingScheme(str, Enum):
    RF_THREE_STATE = "rf-3-state"
    RAMAN_TWO_STATE = "raman-2-state"
    RAMAN_THREE_STATE = "raman-3-state"

    @property
    def n_components(self) -> int:
        return 2 if self is CouplingScheme.RAMAN_TWO_STATE else 3


@dataclass(frozen=True)
class TrapConfig:
    """Harmonic magnetic trap: tight vertical axis and weak axis frequencies."""

    omega_z: float                      # rad/s, vertical (simulated) axis
    omega_y: float                      # rad/s, weak axis, used for the 1D reduction
    bias_transition_omega0: float = 0.0  # rad/s, kept for reporting only (rotating frame)


@dataclass(frozen=True)
class OnePhotonConfig:
    """One-photon parameters of a two-photon optical coupling."""

    omega1: float   # rad/s
    omega2: float   # rad/s
    delta_R: float  # rad/s, one-photon detuning


@dataclass(frozen=True)
class CouplingConfig:
    """Outcoupler description: scheme, strength, detuning, momentum kick.

    ``kick_wavenumber`` is the magnitude of the gravity-parallel component
    of the photon momentum transfer (1/m); the propagation engine signs it
    along -z (with gravity).
    """

    scheme: CouplingScheme
    rabi_omega: float           # rad/s
    detuning_delta: float       # rad/s, relative to the transition at the field minimum
    kick_wavenumber: float = 0.0  # 1/m
    one_photon: OnePhotonConfig | None = None


@dataclass(frozen=True)
class InteractionConfig:
    """Effective 1D interaction strengths (J*m) per component pair and atom number."""

    g1d_matrix: tuple[tuple[float, ...], ...]
    atom_number: float

    @staticmethod
    def uniform(g1d: float, atom_number: float, n_components: int) -> "InteractionConfig":
        row = tuple(g1d for _ in range(n_components))
        return InteractionConfig(
            g1d_matrix=tuple(row for _ in range(n_components)),
            atom_number=atom_number,
        )


def g1d_transverse_mean(
    species: Species,
    omega_a: float,
    omega_b: float,
    scattering_length: float,
    constants: Constants | None = None,
) -> float:
    """Effective 1D coupling from integrating out two transverse harmonic
    ground states: g1d = 2 hbar a_s sqrt(omega_a * omega_b)."""
    hbar = (constants.hbar if constants is not None else 1.054571817e-34)
    return 2.0 * hbar * scattering_length * math.sqrt(omega_a * omega_b)


@dataclass(frozen=True)
class GridSpec:
    """Uniform 1D grid and time step for the propagation engine."""

    z_min: float    # m
    z_max: float    # m
    n_points: int   # power of two, >= 256
    dt: float       # s

    @property
    def dz(self) -> float:
        return (self.z_max - self.z_min) / self.n_points


@dataclass(frozen=True)
class ProtocolConfig:
    """Timed outcoupling sequence and the sweep of drive strengths.

    ``sweep`` holds oscillation frequencies (Hz) for continuous runs and
    drive amplitudes for pulse calibration.
    """

    kind: str                   # 'continuous' | 'pulse-calibration'
    coupling_on: float          # s
    post_evolve: float = 0.0    # s, trap stays on
    expansion: float = 0.0      # s, after trap switch-off
    sweep: tuple[float, ...] = ()


@dataclass(frozen=True)
class SimConfig:
    """A fully specified simulation: species, trap, coupling, interactions, grid, protocol."""

    species: Species
    trap: TrapConfig
    coupling: CouplingConfig
    interactions: InteractionConfig
    grid: GridSpec
    protocol: ProtocolConfig | None = None
    constants: Constants = field(default_factory=Constants)


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def config_violations(
    trap: TrapConfig,
    coupling: CouplingConfig,
    interactions: InteractionConfig,
    grid: GridSpec | None = None,
    protocol: ProtocolConfig | None = None,
) -> list[str]:
    """Check every invariant; return one message per violation (empty if valid).

    Pure: the report depends only on the arguments.
    """
    bad: list[str] = []
    if not trap.omega_z > 0.0:
        bad.append(f"trap.omega_z must be > 0, got {trap.omega_z!r}")
    if not trap.omega_y > 0.0:
        bad.append(f"trap.omega_y must be > 0, got {trap.omega_y!r}")
    if trap.bias_transition_omega0 < 0.0:
        bad.append(
            f"trap.bias_transition_omega0 must be >= 0, got {trap.bias_transition_omega0!r}"
        )

    if not isinstance(coupling.scheme, CouplingScheme):
        bad.append(f"coupling.scheme unknown: {coupling.scheme!r}")
    if coupling.rabi_omega < 0.0:
        bad.append(f"coupling.rabi_omega must be >= 0, got {coupling.rabi_omega!r}")
    if coupling.kick_wavenumber < 0.0:
        bad.append(
            f"coupling.kick_wavenumber must be >= 0, got {coupling.kick_wavenumber!r}"
        )
    if (
        coupling.scheme is CouplingScheme.RF_THREE_STATE
        and coupling.kick_wavenumber != 0.0
    ):
        bad.append(
            "coupling.kick_wavenumber must be 0 for rf coupling, got "
            f"{coupling.kick_wavenumber!r}"
        )
    if coupling.one_photon is not None:
        op = coupling.one_photon
        if op.delta_R == 0.0:
            bad.append("coupling.one_photon.delta_R must be nonzero")
        else:
            implied = op.omega1 * op.omega2 / (2.0 * op.delta_R)
            scale = max(abs(coupling.rabi_omega), abs(implied), 1e-300)
            if abs(implied - coupling.rabi_omega) > 1e-12 * scale:
                bad.append(
                    "coupling.rabi_omega inconsistent with one-photon record: "
                    f"omega1*omega2/(2*delta_R) = {implied!r}, got {coupling.rabi_omega!r}"
                )

    n = len(interactions.g1d_matrix)
    if n == 0:
        bad.append("interactions.g1d_matrix must be non-empty")
    else:
        if any(len(row) != n for row in interactions.g1d_matrix):
            bad.append("interactions.g1d_matrix must be square")
        else:
            for i in range(n):
                if interactions.g1d_matrix[i][i] < 0.0:
                    bad.append(
                        f"interactions.g1d_matrix[{i}][{i}] must be >= 0, got "
                        f"{interactions.g1d_matrix[i][i]!r}"
                    )
                for j in range(i + 1, n):
                    if interactions.g1d_matrix[i][j] != interactions.g1d_matrix[j][i]:
                        bad.append(
                            f"interactions.g1d_matrix not symmetric at ({i},{j}): "
                            f"{interactions.g1d_matrix[i][j]!r} != "
                            f"{interactions.g1d_matrix[j][i]!r}"
                        )
    if not interactions.atom_number > 0.0:
        bad.append(f"interactions.atom_number must be > 0, got {interactions.atom_number!r}")

    if grid is not None:
        if not grid.z_max > grid.z_min:
            bad.append(f"grid.z_max must exceed z_min, got [{grid.z_min!r}, {grid.z_max!r}]")
        if grid.n_points < 256 or not _is_power_of_two(grid.n_points):
            bad.append(
                f"grid.n_points must be a power of two >= 256, got {grid.n_points!r}"
            )
        if not grid.dt > 0.0:
            bad.append(f"grid.dt must be > 0, got {grid.dt!r}")

    if protocol is not None:
        if protocol.kind not in ("continuous", "pulse-calibration"):
            bad.append(f"protocol.kind unknown: {protocol.kind!r}")
        for name in ("coupling_on", "post_evolve", "expansion"):
            val = getattr(protocol, name)
            if val < 0.0:
                bad.append(f"protocol.{name} must be >= 0, got {val!r}")
        if len(protocol.sweep) == 0:
            bad.append("protocol.sweep must be non-empty")
        elif any(b <= a for a, b in zip(protocol.sweep, protocol.sweep[1:])):
            bad.append(f"protocol.sweep must be strictly increasing, got {protocol.sweep!r}")

    return bad


def validate_config(
    trap: TrapConfig,
    coupling: CouplingConfig,
    interactions: InteractionConfig,
    grid: GridSpec | None = None,
    protocol: ProtocolConfig | None = None,
) -> tuple[TrapConfig, CouplingConfig, InteractionConfig]:
    """Return the validated bundle or raise :class:`ConfigError` listing every violation."""
    bad = config_violations(trap, coupling, interactions, grid, protocol)
    if bad:
        raise ConfigError(bad)
    return trap, coupling, interactions


# ---------------------------------------------------------------------------
# JSON serialization.  Numbers survive a round trip bit-identically because
# json uses shortest round-trip float repr.

_SECTIONS = ("species", "constants", "trap", "coupling", "interactions", "grid", "protocol")


def config_to_dict(cfg: SimConfig) -> dict[str, Any]:
    d: dict[str, Any] = {
        "species": {
            "name": cfg.species.name,
            "mass": cfg.species.mass,
            "photon_wavenumber_k": cfg.species.photon_wavenumber_k,
        },
        "constants": {"hbar": cfg.constants.hbar, "g_grav": cfg.constants.g_grav},
        "trap": {
            "omega_z": cfg.trap.omega_z,
            "omega_y": cfg.trap.omega_y,
            "bias_transition_omega0": cfg.trap.bias_transition_omega0,
        },
        "coupling": {
            "scheme": cfg.coupling.scheme.value,
            "rabi_omega": cfg.coupling.rabi_omega,
            "detuning_delta": cfg.coupling.detuning_delta,
            "kick_wavenumber": cfg.coupling.kick_wavenumber,
        },
        "interactions": {
            "g1d_matrix": [list(row) for row in cfg.interactions.g1d_matrix],
            "atom_number": cfg.interactions.atom_number,
        },
        "grid": {
            "z_min": cfg.grid.z_min,
            "z_max": cfg.grid.z_max,
            "n_points": cfg.grid.n_points,
            "dt": cfg.grid.dt,
        },
    }
    if cfg.coupling.one_photon is not None:
        op = cfg.coupling.one_photon
        d["coupling"]["one_photon"] = {
            "omega1": op.omega1,
            "omega2": op.omega2,
            "delta_R": op.delta_R,
        }
    if cfg.protocol is not None:
        d["protocol"] = {
            "kind": cfg.protocol.kind,
            "coupling_on": cfg.protocol.coupling_on,
            "post_evolve": cfg.protocol.post_evolve,
            "expansion": cfg.protocol.expansion,
            "sweep": list(cfg.protocol.sweep),
        }
    return d


def _require_keys(section: str, data: dict, allowed: set[str], required: set[str]) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(
            [f"unknown key(s) in '{section}': {sorted(unknown)!r}"]
        )
    missing = required - set(data)
    if missing:
        raise ConfigError([f"missing key(s) in '{section}': {sorted(missing)!r}"])


def config_from_dict(data: dict[str, Any]) -> SimConfig:
    """Build and validate a :class:`SimConfig`; unknown keys are a hard error."""
    if not isinstance(data, dict):
        raise ConfigError(["top-level config must be a JSON object"])
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError([f"unknown top-level section(s): {sorted(unknown)!r}"])
    for sec in ("species", "trap", "coupling", "interactions", "grid"):
        if sec not in data:
            raise ConfigError([f"missing required section '{sec}'"])

    sp = data["species"]
    _require_keys("species", sp, {"name", "mass", "photon_wavenumber_k"}, {"name"})
    if sp["name"] == "rb87" and "mass" not in sp:
        base = make_rb87()
        species = Species(
            name="rb87",
            mass=sp.get("mass", base.mass),
            photon_wavenumber_k=sp.get("photon_wavenumber_k", base.photon_wavenumber_k),
        )
    else:
        _require_keys(
            "species", sp, {"name", "mass", "photon_wavenumber_k"},
            {"name", "mass", "photon_wavenumber_k"},
        )
        species = Species(
            name=sp["name"], mass=sp["mass"], photon_wavenumber_k=sp["photon_wavenumber_k"]
        )

    cd = data.get("constants", {})
    _require_keys("constants", cd, {"hbar", "g_grav"}, set())
    constants = Constants(
        hbar=cd.get("hbar", Constants.hbar), g_grav=cd.get("g_grav", Constants.g_grav)
    )

    td = data["trap"]
    _require_keys("trap", td, {"omega_z", "omega_y", "bias_transition_omega0"},
                  {"omega_z", "omega_y"})
    trap = TrapConfig(
        omega_z=td["omega_z"],
        omega_y=td["omega_y"],
        bias_transition_omega0=td.get("bias_transition_omega0", 0.0),
    )

    kd = data["coupling"]
    _require_keys(
        "coupling", kd,
        {"scheme", "rabi_omega", "detuning_delta", "kick_wavenumber", "one_photon"},
        {"scheme", "rabi_omega", "detuning_delta"},
    )
    try:
        scheme = CouplingScheme(kd["scheme"])
    except ValueError:
        raise ConfigError(
            [f"coupling.scheme must be one of {[s.value for s in CouplingScheme]!r}, "
             f"got {kd['scheme']!r}"]
        ) from None
    one_photon = None
    if kd.get("one_photon") is not None:
        od = kd["one_photon"]
        _require_keys("coupling.one_photon", od, {"omega1", "omega2", "delta_R"},
                      {"omega1", "omega2", "delta_R"})
        one_photon = OnePhotonConfig(od["omega1"], od["omega2"], od["delta_R"])
    coupling = CouplingConfig(
        scheme=scheme,
        rabi_omega=kd["rabi_omega"],
        detuning_delta=kd["detuning_delta"],
        kick_wavenumber=kd.get("kick_wavenumber", 0.0),
        one_photon=one_photon,
    )

    idd = data["interactions"]
    _require_keys("interactions", idd, {"g1d", "g1d_matrix", "atom_number"}, {"atom_number"})
    if "g1d_matrix" in idd and "g1d" in idd:
        raise ConfigError(["interactions: give either 'g1d' or 'g1d_matrix', not both"])
    if "g1d_matrix" in idd:
        interactions = InteractionConfig(
            g1d_matrix=tuple(tuple(row) for row in idd["g1d_matrix"]),
            atom_number=idd["atom_number"],
        )
    else:
        interactions = InteractionConfig.uniform(
            idd.get("g1d", 0.0), idd["atom_number"], scheme.n_components
        )

    gd = data["grid"]
    _require_keys("grid", gd, {"z_min", "z_max", "n_points", "dt"},
                  {"z_min", "z_max", "n_points", "dt"})
    grid = GridSpec(z_min=gd["z_min"], z_max=gd["z_max"], n_points=gd["n_points"], dt=gd["dt"])

    protocol = None
    if "protocol" in data:
        pd = data["protocol"]
        _require_keys("protocol", pd,
                      {"kind", "coupling_on", "post_evolve", "expansion", "sweep"},
                      {"kind", "coupling_on", "sweep"})
        protocol = ProtocolConfig(
            kind=pd["kind"],
            coupling_on=pd["coupling_on"],
            post_evolve=pd.get("post_evolve", 0.0),
            expansion=pd.get("expansion", 0.0),
            sweep=tuple(pd["sweep"]),
        )

    bad = config_violations(trap, coupling, interactions, grid, protocol)
    if bad:
        raise ConfigError(bad)
    return SimConfig(
        species=species, trap=trap, coupling=coupling, interactions=interactions,
        grid=grid, protocol=protocol, constants=constants,
    )


def load_config(path: str | Path) -> SimConfig:
    with open(path, "r", encoding="utf-8") as f:
        return config_from_dict(json.load(f))


def save_config(cfg: SimConfig, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(config_to_dict(cfg), f, indent=2)
        f.write("\n")
