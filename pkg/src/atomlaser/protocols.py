"""Scripted in-silico outcoupling experiments.

Pulse calibration (short coupling pulse, transfer vs drive), continuous
outcoupling sweeps (ground state, sudden coupling window, hold, trap-off
expansion, region accounting), and ballistic region classification.
All sequences are deterministic: identical configurations produce
bit-identical results.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .config import (
    CouplingConfig,
    CouplingScheme,
    GridSpec,
    InteractionConfig,
    ProtocolConfig,
    SimConfig,
    TrapConfig,
    config_violations,
    ConfigError,
)
from .constants import (
    DEFAULT_CONSTANTS,
    Constants,
    RB87_SCATTERING_LENGTH,
    Species,
    make_rb87,
)
from . import config as _config
from .dressed import (
    gravitational_sag,
    rabi_from_oscillation,
    sag_detuning,
)
from .engine import (
    ANTITRAPPED,
    F2_UNTRAPPED,
    FieldState,
    GpeSolver,
    System1D,
    TRAPPED,
    UNTRAPPED,
    build_system,
    densities,
    ledger_defect,
    outcoupled_fraction,
    populations,
    thomas_fermi_radius,
)


class ProtocolError(RuntimeError):
    pass


def recoil_shift(species: Species, kick_wavenumber: float,
                 constants: Constants = DEFAULT_CONSTANTS) -> float:
    """Kinetic energy shift hbar kappa^2 / 2m of the first kicked transition (rad/s)."""
    return constants.hbar * kick_wavenumber**2 / (2.0 * species.mass)


def resonant_detuning(
    trap: TrapConfig,
    species: Species,
    kick_wavenumber: float = 0.0,
    constants: Constants = DEFAULT_CONSTANTS,
) -> float:
    """Detuning that puts the (possibly kicked) transition on resonance at the
    condensate centre (rad/s).

    The outgoing state carries the recoil energy hbar^2 kappa^2 / 2m, so the
    local resonance condition is delta(z) = recoil; centering it on the
    sagged cloud lowers the bare detuning by the recoil shift.
    """
    return sag_detuning(trap, species, constants) - recoil_shift(
        species, kick_wavenumber, constants
    )


def cloud_fwhm(system: System1D, state: FieldState) -> float:
    """Full width at half maximum of the condensate density (m)."""
    idx = system.condensate_index
    dens = np.abs(state.psi[idx]) ** 2
    peak = float(dens.max())
    if peak <= 0.0:
        raise ProtocolError("empty condensate component")
    above = np.nonzero(dens >= 0.5 * peak)[0]
    return float((above[-1] - above[0]) * system.grid.dz)


# ---------------------------------------------------------------------------
# Region classification


@dataclass
class RegionClassification:
    """Ballistic region tallies of a post-expansion snapshot.

    Regions are three disjoint ordered z-intervals covering the window:
    anti-trapped below ``z_fall_edge``, untrapped between ``z_fall_edge``
    and ``z_cloud_edge``, trapped above.  ``region_fractions`` integrate
    the total on-grid density per region; ``component_fractions`` are the
    per-label on-grid norms (ground truth); absorbed norm is attributed by
    component, never by region.
    """

    z_fall_edge: float
    z_cloud_edge: float
    region_fractions: dict[str, float]
    component_fractions: dict[str, float]
    absorbed: dict[str, float]
    discrepancy: float
    warnings: tuple[str, ...]


def classify_regions(
    system: System1D,
    state: FieldState,
    trap: TrapConfig,
    coupling: CouplingConfig,
    flight_time: float,
    cloud_radius: float,
) -> RegionClassification:
    """Classify the snapshot into trapped / untrapped / anti-trapped regions.

    ``flight_time`` is the total time since the coupling switch-on
    (coupling window + hold + expansion); the untrapped envelope is the
    free-fall depth of atoms released at switch-on with the configured
    momentum kick, the anti-trapped region everything below it.
    """
    const = system.constants
    z_c = gravitational_sag(trap, const)
    v0 = const.hbar * coupling.kick_wavenumber / system.species.mass
    d_free = v0 * flight_time + 0.5 * const.g_grav * flight_time**2
    z_cloud_edge = z_c - 2.0 * cloud_radius
    z_fall_edge = z_cloud_edge - d_free - 2.0 * cloud_radius

    warnings: list[str] = []
    g = system.grid
    if z_fall_edge < g.z_min:
        warnings.append(
            "free-fall envelope extends below the grid; fallen atoms appear "
            "only in the absorbed ledger"
        )
    z = system.z
    dens_total = np.sum(densities(system, state), axis=0)
    dz = g.dz
    anti_mask = z < z_fall_edge
    untr_mask = (z >= z_fall_edge) & (z < z_cloud_edge)
    trap_mask = z >= z_cloud_edge
    region_fractions = {
        ANTITRAPPED: float(np.sum(dens_total[anti_mask]) * dz),
        UNTRAPPED: float(np.sum(dens_total[untr_mask]) * dz),
        TRAPPED: float(np.sum(dens_total[trap_mask]) * dz),
    }

    comp_norms = system.grid.dz * np.sum(np.abs(state.psi) ** 2, axis=1)
    component_fractions: dict[str, float] = {}
    absorbed: dict[str, float] = {}
    for i, comp in enumerate(system.components):
        component_fractions[comp.label] = float(comp_norms[i])
        absorbed[comp.label] = float(state.absorbed[i])

    # compare like with like: the F2 untrapped label plays the untrapped role
    def comp_for(region: str) -> float:
        if region == UNTRAPPED:
            return component_fractions.get(UNTRAPPED, 0.0) + component_fractions.get(
                F2_UNTRAPPED, 0.0
            )
        return component_fractions.get(region, 0.0)

    discrepancy = max(
        abs(region_fractions[r] - comp_for(r)) for r in (TRAPPED, UNTRAPPED, ANTITRAPPED)
    )
    overlap = region_fractions[ANTITRAPPED] > 0.0 and comp_for(ANTITRAPPED) == 0.0
    if overlap and region_fractions[ANTITRAPPED] > 1e-3:
        warnings.append(
            "density found in the anti-trapped region without an anti-trapped "
            "component; regions mix states"
        )
    return RegionClassification(
        z_fall_edge=z_fall_edge,
        z_cloud_edge=z_cloud_edge,
        region_fractions=region_fractions,
        component_fractions=component_fractions,
        absorbed=absorbed,
        discrepancy=float(discrepancy),
        warnings=tuple(warnings),
    )


# ---------------------------------------------------------------------------
# Continuous outcoupling sweep


@dataclass
class SweepPoint:
    omega0_hz: float
    rabi_omega: float
    outcoupled: float
    fractions: dict[str, float]          # per component, absorbed included
    ledger_defect: float
    steps: int
    classification: RegionClassification | None
    density_snapshot: np.ndarray | None  # (n_components, nz) final |psi|^2
    phase_snapshot: np.ndarray | None = None  # (n_components, nz) arg psi, lab frame
    uncertainty: float = 0.0
    error: str | None = None


@dataclass
class ShutdownCurve:
    """Outcoupled fraction against oscillation frequency."""

    scheme: str
    points: list[tuple[float, float, float]]  # (omega0_hz, fraction, uncertainty)

    @property
    def omega0_hz(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    @property
    def fractions(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])

    @property
    def uncertainties(self) -> np.ndarray:
        return np.array([p[2] for p in self.points])


@dataclass
class ContinuousRunResult:
    curve: ShutdownCurve
    points: list[SweepPoint]
    z: np.ndarray
    cloud_fwhm: float


def _refined_config(cfg: SimConfig) -> SimConfig:
    g = cfg.grid
    fine = GridSpec(z_min=g.z_min, z_max=g.z_max, n_points=2 * g.n_points, dt=g.dt)
    return replace(cfg, grid=fine)


def run_single_point(
    cfg: SimConfig,
    omega0_hz: float,
    classify: bool = True,
    keep_snapshot: bool = False,
) -> SweepPoint:
    """One continuous-outcoupling sequence at the given oscillation frequency."""
    protocol = cfg.protocol
    if protocol is None:
        raise ProtocolError("configuration has no protocol section")
    rabi = rabi_from_oscillation(omega0_hz, cfg.coupling.scheme)
    coupling = replace(cfg.coupling, rabi_omega=rabi)
    system = build_system(
        cfg.species, cfg.trap, coupling, cfg.interactions, cfg.grid, cfg.constants
    )
    solver = GpeSolver(system)
    state = solver.ground_state()
    r_cloud = 0.5 * cloud_fwhm(system, state)

    solver.evolve(state, protocol.coupling_on, coupling_on=True)
    if protocol.post_evolve > 0.0:
        solver.evolve(state, protocol.post_evolve, coupling_on=False)
    if protocol.expansion > 0.0:
        released = GpeSolver(system.released())
        released.evolve(state, protocol.expansion, coupling_on=False)

    fractions = {
        comp.label: float(p)
        for comp, p in zip(system.components, populations(system, state))
    }
    classification = None
    if classify:
        flight = protocol.coupling_on + protocol.post_evolve + protocol.expansion
        classification = classify_regions(
            system, state, cfg.trap, coupling, flight, r_cloud
        )
    return SweepPoint(
        omega0_hz=omega0_hz,
        rabi_omega=rabi,
        outcoupled=outcoupled_fraction(system, state),
        fractions=fractions,
        ledger_defect=ledger_defect(system, state),
        steps=state.steps,
        classification=classification,
        density_snapshot=densities(system, state) if keep_snapshot else None,
        phase_snapshot=np.angle(solver.lab_frame_psi(state)) if keep_snapshot else None,
    )


def _point_worker(args: tuple[dict, float, bool, bool]) -> SweepPoint:
    cfg_dict, omega0, classify, keep_snapshot = args
    cfg = _config.config_from_dict(cfg_dict)
    try:
        return run_single_point(cfg, omega0, classify=classify, keep_snapshot=keep_snapshot)
    except Exception as exc:  # per-point failures recorded, sweep continues
        return SweepPoint(
            omega0_hz=omega0, rabi_omega=float("nan"), outcoupled=float("nan"),
            fractions={}, ledger_defect=float("nan"), steps=0, classification=None,
            density_snapshot=None, error=f"{type(exc).__name__}: {exc}",
        )


def run_continuous(
    cfg: SimConfig,
    workers: int = 1,
    keep_snapshots: bool = False,
    refine: bool = False,
) -> ContinuousRunResult:
    """Run the configured continuous-outcoupling sweep.

    Sweep points are independent; with ``workers > 1`` they execute in
    separate processes and are merged back in sweep order.  With
    ``refine`` every point is recomputed at half the grid spacing and the
    difference is reported as the per-point uncertainty.
    """
    protocol = cfg.protocol
    if protocol is None or protocol.kind != "continuous":
        raise ProtocolError("run_continuous requires a 'continuous' protocol")
    bad = config_violations(
        cfg.trap, cfg.coupling, cfg.interactions, cfg.grid, protocol
    )
    if bad:
        raise ConfigError(bad)

    sweep = list(protocol.sweep)
    cfg_dict = _config.config_to_dict(cfg)
    jobs = [(cfg_dict, om, True, keep_snapshots) for om in sweep]
    if refine:
        fine_dict = _config.config_to_dict(_refined_config(cfg))
        jobs += [(fine_dict, om, False, False) for om in sweep]

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_point_worker, jobs))
    else:
        results = [_point_worker(j) for j in jobs]

    points = results[: len(sweep)]
    if refine:
        for pt, fine in zip(points, results[len(sweep):]):
            if pt.error is None and fine.error is None:
                pt.uncertainty = abs(pt.outcoupled - fine.outcoupled)

    curve = ShutdownCurve(
        scheme=cfg.coupling.scheme.value,
        points=[
            (p.omega0_hz, p.outcoupled, p.uncertainty)
            for p in points
            if p.error is None
        ],
    )

    # grid positions and cloud width from a representative system
    system = build_system(
        cfg.species, cfg.trap, cfg.coupling, cfg.interactions, cfg.grid, cfg.constants
    )
    solver = GpeSolver(system)
    ground = solver.ground_state()
    return ContinuousRunResult(
        curve=curve, points=points, z=system.z, cloud_fwhm=cloud_fwhm(system, ground)
    )


# ---------------------------------------------------------------------------
# Pulse calibration


@dataclass
class CalibrationPoint:
    drive: float
    rabi_omega: float
    transferred: float               # fraction moved out of the condensate state
    fractions: dict[str, float]


def run_pulse_calibration(
    cfg: SimConfig,
    drive_levels: list[float] | tuple[float, ...],
    omega_per_drive: float,
    pulse_duration: float = 100e-6,
) -> list[CalibrationPoint]:
    """Short-pulse transfer fractions for a list of drive levels.

    ``omega_per_drive`` maps the dimensionless drive amplitude to the
    coupling strength (rad/s per drive unit); it plays the role of the
    unknown hardware calibration that the fitting stage recovers.
    The ground state is computed once and reused (coupling off).
    """
    system0 = build_system(
        cfg.species, cfg.trap, cfg.coupling, cfg.interactions, cfg.grid, cfg.constants
    )
    ground = GpeSolver(system0).ground_state()
    cond = system0.condensate_index

    points = []
    for drive in drive_levels:
        rabi = omega_per_drive * drive
        coupling = replace(cfg.coupling, rabi_omega=rabi)
        system = build_system(
            cfg.species, cfg.trap, coupling, cfg.interactions, cfg.grid, cfg.constants
        )
        solver = GpeSolver(system)
        state = ground.copy()
        solver.evolve(state, pulse_duration, coupling_on=True)
        pops = populations(system, state)
        fractions = {
            comp.label: float(p) for comp, p in zip(system.components, pops)
        }
        points.append(
            CalibrationPoint(
                drive=float(drive),
                rabi_omega=rabi,
                transferred=float(1.0 - pops[cond]),
                fractions=fractions,
            )
        )
    return points


# ---------------------------------------------------------------------------
# Presets

DEFAULT_SWEEP = tuple(
    round(50.0 * (5000.0 / 50.0) ** (i / 19.0), 3) for i in range(20)
)

_KICK_ANGLE = math.radians(140.0)


def zeeman_kick_wavenumber(species: Species) -> float:
    """Gravity-parallel two-photon kick 2 k sin(theta/2) of the coplanar
    beam geometry (theta = 140 deg), 1/m."""
    return 2.0 * species.photon_wavenumber_k * math.sin(_KICK_ANGLE / 2.0)


def default_config(
    scheme: CouplingScheme,
    protocol: ProtocolConfig | None,
    n_points: int = 4096,
    dt: float = 1e-6,
    atom_number: float = 2e5,
) -> SimConfig:
    """Production defaults: the reference trap, a 300 um grid around the
    sagged cloud, transverse-mean interactions, recoil-compensated resonance."""
    species = make_rb87()
    constants = Constants()
    trap = TrapConfig(omega_z=2.0 * math.pi * 120.0, omega_y=2.0 * math.pi * 13.0)
    if scheme is CouplingScheme.RF_THREE_STATE:
        kick = 0.0
    else:
        kick = zeeman_kick_wavenumber(species)
    coupling = CouplingConfig(
        scheme=scheme,
        rabi_omega=rabi_from_oscillation(500.0, scheme),
        detuning_delta=resonant_detuning(trap, species, kick, constants),
        kick_wavenumber=kick,
    )
    g1d = _config.g1d_transverse_mean(
        species, trap.omega_z, trap.omega_y, RB87_SCATTERING_LENGTH, constants
    )
    interactions = InteractionConfig.uniform(g1d, atom_number, scheme.n_components)
    # kicked runs need double resolution for the short kick wavelength and
    # the larger fall momenta
    if kick != 0.0 and n_points < 8192:
        n_points = 8192
    grid = GridSpec(z_min=-240e-6, z_max=60e-6, n_points=n_points, dt=dt)
    return SimConfig(
        species=species, trap=trap, coupling=coupling, interactions=interactions,
        grid=grid, protocol=protocol, constants=constants,
    )


def zeeman14ms_config(sweep: tuple[float, ...] = DEFAULT_SWEEP) -> SimConfig:
    """Long continuous outcoupling between Zeeman sublevels with the optical kick."""
    protocol = ProtocolConfig(
        kind="continuous", coupling_on=14e-3, post_evolve=5e-3, expansion=2e-3,
        sweep=sweep,
    )
    return default_config(CouplingScheme.RAMAN_THREE_STATE, protocol)


def compare3ms_config(
    scheme: CouplingScheme, sweep: tuple[float, ...] = DEFAULT_SWEEP
) -> SimConfig:
    """Short matched-grid sequence used to compare the three outcouplers.

    Hold times follow the imaging constraints of the original sequences:
    schemes with an anti-trapped state hold briefly (0.8 ms), the two-state
    scheme holds 3.5 ms; expansion is 4.5 ms for all.
    """
    post = 3.5e-3 if scheme is CouplingScheme.RAMAN_TWO_STATE else 0.8e-3
    protocol = ProtocolConfig(
        kind="continuous", coupling_on=3e-3, post_evolve=post, expansion=4.5e-3,
        sweep=sweep,
    )
    return default_config(scheme, protocol)


def calibration_config(
    drive_levels: tuple[float, ...] = tuple(round(0.2 * i, 3) for i in range(1, 9)),
) -> SimConfig:
    """Pulse-calibration preset: 100 us pulses over a ramp of drive levels."""
    protocol = ProtocolConfig(
        kind="pulse-calibration", coupling_on=100e-6, sweep=drive_levels
    )
    return default_config(CouplingScheme.RAMAN_THREE_STATE, protocol)
