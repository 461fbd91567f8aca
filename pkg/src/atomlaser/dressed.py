"""Closed-form semiclassical two-level model of the outcoupling region.

Position-dependent detuning, dressed potentials from pointwise
diagonalization (gravity added to the eigenvalues afterwards), bound-state
decay, the weak/strong coupling threshold, and fall-time shutdown
estimates.  Everything here is analytic; the propagation engine provides
the independent dynamical check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .config import CouplingConfig, CouplingScheme, TrapConfig
from .constants import DEFAULT_CONSTANTS, Constants, Species


class DressedModelError(ValueError):
    pass


def gravitational_sag(trap: TrapConfig, constants: Constants = DEFAULT_CONSTANTS) -> float:
    """Equilibrium displacement -g/omega_z^2 of the condensate below the field minimum (m)."""
    if not trap.omega_z > 0.0:
        raise DressedModelError(f"omega_z must be > 0, got {trap.omega_z}")
    return -constants.g_grav / trap.omega_z**2


def sag_detuning(
    trap: TrapConfig, species: Species, constants: Constants = DEFAULT_CONSTANTS
) -> float:
    """Detuning m g^2 / (2 hbar omega_z^2) that puts resonance at the condensate centre (rad/s)."""
    if not trap.omega_z > 0.0:
        raise DressedModelError(f"omega_z must be > 0, got {trap.omega_z}")
    return species.mass * constants.g_grav**2 / (2.0 * constants.hbar * trap.omega_z**2)


@dataclass(frozen=True)
class DetuningProfile:
    """delta(z) = (m omega_z^2 z^2 / 2 - hbar Delta) / hbar and its resonance roots."""

    trap: TrapConfig
    species: Species
    Delta: float                          # rad/s, detuning at the field minimum
    resonance_roots: tuple[float, ...]    # z where delta(z) = 0; empty if Delta < 0
    constants: Constants = DEFAULT_CONSTANTS

    def delta_of_z(self, z):
        """Position-dependent detuning in rad/s; accepts scalars or arrays."""
        coeff = 0.5 * self.species.mass * self.trap.omega_z**2 / self.constants.hbar
        return coeff * np.square(z) - self.Delta


def detuning_profile(
    trap: TrapConfig,
    species: Species,
    Delta: float,
    constants: Constants = DEFAULT_CONSTANTS,
) -> DetuningProfile:
    """Build the quadratic detuning profile; roots exist only for Delta >= 0."""
    if not trap.omega_z > 0.0:
        raise DressedModelError(f"omega_z must be > 0, got {trap.omega_z}")
    if Delta > 0.0:
        root = math.sqrt(2.0 * constants.hbar * Delta / (species.mass * trap.omega_z**2))
        roots: tuple[float, ...] = (-root, root)
    elif Delta == 0.0:
        roots = (0.0,)
    else:
        roots = ()
    return DetuningProfile(
        trap=trap, species=species, Delta=Delta, resonance_roots=roots, constants=constants
    )


@dataclass(frozen=True)
class DressedSystem:
    """Dressed potentials V+-(z) and mixing angle for one trap+coupling pair.

    V_pm(z) = (hbar/2)(delta(z) +- sqrt(delta(z)^2 + 4 Omega^2)) + m g z,
    i.e. the pointwise eigenvalues of the coupled two-level block with the
    gravitational energy added afterwards.  The gravitational term grows
    with z so that the condensate sags to negative z and the untrapped
    branch releases the beam downhill toward -z.
    """

    profile: DetuningProfile
    omega: float   # rad/s, coupling strength entering the 2x2 block
    Delta: float   # rad/s

    def _delta(self, z):
        return self.profile.delta_of_z(z)

    def gravity_energy(self, z):
        """Gravitational potential energy m g z (J)."""
        c = self.profile.constants
        return self.profile.species.mass * c.g_grav * np.asarray(z, dtype=float)

    def v_plus(self, z):
        d = self._delta(z)
        hbar = self.profile.constants.hbar
        return 0.5 * hbar * (d + np.sqrt(d * d + 4.0 * self.omega**2)) + self.gravity_energy(z)

    def v_minus(self, z):
        d = self._delta(z)
        hbar = self.profile.constants.hbar
        return 0.5 * hbar * (d - np.sqrt(d * d + 4.0 * self.omega**2)) + self.gravity_energy(z)

    def gap(self, z):
        """Energy splitting hbar*sqrt(delta^2 + 4 Omega^2) between the branches (J)."""
        d = self._delta(z)
        return self.profile.constants.hbar * np.sqrt(d * d + 4.0 * self.omega**2)

    def mixing_angle(self, z):
        """Rotation angle chi = arctan2(2 Omega, delta(z)) / 2 of the dressed basis (rad)."""
        d = self._delta(z)
        return 0.5 * np.arctan2(2.0 * self.omega, d)

    def bare_trapped(self, z):
        """Rotating-frame bare trapped potential hbar*delta(z) + m g z (J)."""
        return self.profile.constants.hbar * self._delta(z) + self.gravity_energy(z)

    def bare_untrapped(self, z):
        """Rotating-frame bare untrapped potential m g z (J)."""
        return self.gravity_energy(z)


def dressed_potentials(
    profile: DetuningProfile, omega: float, species: Species | None = None
) -> DressedSystem:
    """Dressed potentials for coupling strength omega >= 0 over the given profile."""
    if omega < 0.0:
        raise DressedModelError(f"omega must be >= 0, got {omega}")
    if species is not None and species != profile.species:
        raise DressedModelError("species does not match the detuning profile")
    return DressedSystem(profile=profile, omega=omega, Delta=profile.Delta)


def project_onto_dressed(amplitudes, delta: float, omega: float) -> np.ndarray:
    """Rotate (trapped, untrapped) amplitudes into the dressed (+, -) basis.

    Unitary change of basis; inverse is :func:`project_onto_bare`.
    At delta = 0 the trapped state maps to (1, -1)/sqrt(2).
    """
    if omega == 0.0 and delta == 0.0:
        raise DressedModelError("dressed basis undefined at omega = 0, delta = 0")
    chi = 0.5 * math.atan2(2.0 * omega, delta)
    c, s = math.cos(chi), math.sin(chi)
    a = np.asarray(amplitudes, dtype=complex)
    # columns of the bare->dressed rotation: |+> = (c, s), |-> = (-s, c)
    return np.array([c * a[0] + s * a[1], -s * a[0] + c * a[1]])


def project_onto_bare(amplitudes, delta: float, omega: float) -> np.ndarray:
    """Inverse of :func:`project_onto_dressed`."""
    if omega == 0.0 and delta == 0.0:
        raise DressedModelError("dressed basis undefined at omega = 0, delta = 0")
    chi = 0.5 * math.atan2(2.0 * omega, delta)
    c, s = math.cos(chi), math.sin(chi)
    a = np.asarray(amplitudes, dtype=complex)
    return np.array([c * a[0] - s * a[1], s * a[0] + c * a[1]])


def bound_decay_rate(omega: float, Delta: float, omega_z: float) -> float:
    """Dimensionless decay factor 2*exp(-pi Omega^(3/2) / (sqrt(2) Delta^(1/2) omega_z))
    of the bound dressed branch."""
    if Delta <= 0.0:
        raise DressedModelError(f"Delta must be > 0, got {Delta}")
    if omega_z <= 0.0:
        raise DressedModelError(f"omega_z must be > 0, got {omega_z}")
    if omega < 0.0:
        raise DressedModelError(f"omega must be >= 0, got {omega}")
    exponent = math.pi * omega**1.5 / (math.sqrt(2.0) * math.sqrt(Delta) * omega_z)
    return 2.0 * math.exp(-exponent)


def strong_coupling_threshold(omega_z: float, Delta: float) -> float:
    """Coupling strength (2 omega_z^2 Delta / pi^2)^(1/3) above which the bound
    branch stops leaking (rad/s)."""
    if Delta <= 0.0:
        raise DressedModelError(f"Delta must be > 0, got {Delta}")
    if omega_z <= 0.0:
        raise DressedModelError(f"omega_z must be > 0, got {omega_z}")
    return (2.0 * omega_z**2 * Delta / math.pi**2) ** (1.0 / 3.0)


def oscillation_frequency(omega: float, scheme: CouplingScheme) -> float:
    """Observable population-oscillation frequency Omega_0 in Hz.

    Two-state coupling: Omega/2pi.  Three-state coupling: 2^(3/2) Omega/2pi.
    """
    if omega < 0.0:
        raise DressedModelError(f"omega must be >= 0, got {omega}")
    if scheme is CouplingScheme.RAMAN_TWO_STATE:
        return omega / (2.0 * math.pi)
    return 2.0**1.5 * omega / (2.0 * math.pi)


def rabi_from_oscillation(omega0_hz: float, scheme: CouplingScheme) -> float:
    """Inverse of :func:`oscillation_frequency`: coupling strength Omega in rad/s."""
    if omega0_hz < 0.0:
        raise DressedModelError(f"omega0_hz must be >= 0, got {omega0_hz}")
    if scheme is CouplingScheme.RAMAN_TWO_STATE:
        return 2.0 * math.pi * omega0_hz
    return 2.0 * math.pi * omega0_hz / 2.0**1.5


class KickGeometry(Enum):
    ORTHOGONAL_45 = "orthogonal45"   # beams orthogonal, kick at 45 deg to gravity
    ANGLED = "angled"                # beams separated by theta, kick parallel to gravity
    COUNTERPROP = "counterprop"


@dataclass(frozen=True)
class MomentumKick:
    kappa: float            # 1/m, total two-photon wavenumber transfer
    kappa_parallel: float   # 1/m, component along gravity
    velocity: float         # m/s, hbar*kappa/m
    velocity_parallel: float  # m/s


def momentum_kick(
    species: Species,
    geometry: KickGeometry,
    theta: float | None = None,
    constants: Constants = DEFAULT_CONSTANTS,
) -> MomentumKick:
    """Two-photon momentum transfer for the beam geometry.

    orthogonal45: kappa = sqrt(2) k with a cos(45 deg) gravity-parallel
    component; angled(theta): kappa = 2 k sin(theta/2) parallel to gravity;
    counterprop: kappa = 2 k.
    """
    k = species.photon_wavenumber_k
    if geometry is KickGeometry.ORTHOGONAL_45:
        kappa = math.sqrt(2.0) * k
        parallel = kappa * math.cos(math.pi / 4.0)
    elif geometry is KickGeometry.ANGLED:
        if theta is None or not 0.0 < theta <= math.pi:
            raise DressedModelError(f"theta must be in (0, pi], got {theta}")
        kappa = 2.0 * k * math.sin(theta / 2.0)
        parallel = kappa
    elif geometry is KickGeometry.COUNTERPROP:
        kappa = 2.0 * k
        parallel = kappa
    else:
        raise DressedModelError(f"unknown geometry {geometry!r}")
    v = constants.hbar * kappa / species.mass
    v_par = constants.hbar * parallel / species.mass
    return MomentumKick(kappa=kappa, kappa_parallel=parallel, velocity=v,
                        velocity_parallel=v_par)


def fall_time(
    region_width: float,
    initial_velocity: float = 0.0,
    constants: Constants = DEFAULT_CONSTANTS,
) -> float:
    """Positive root t of w = v0 t + g t^2 / 2 (s); v0 is the gravity-parallel speed."""
    if not region_width > 0.0:
        raise DressedModelError(f"region_width must be > 0, got {region_width}")
    if initial_velocity < 0.0:
        raise DressedModelError(f"initial_velocity must be >= 0, got {initial_velocity}")
    g = constants.g_grav
    if g == 0.0:
        if initial_velocity == 0.0:
            raise DressedModelError("no gravity and no initial velocity: never crosses")
        return region_width / initial_velocity
    return (-initial_velocity + math.sqrt(initial_velocity**2 + 2.0 * g * region_width)) / g


class CouplingRegime(Enum):
    WEAK = "weak"
    INTERMEDIATE = "intermediate"
    STRONG = "strong"


@dataclass(frozen=True)
class ShutdownEstimate:
    """Fall-time crossover estimate: omega0_max * tau_fall = 1 by construction."""

    omega0_max: float       # Hz
    tau_fall: float         # s
    region_width: float     # m
    regime: CouplingRegime
    omega0_requested: float  # Hz


def shutdown_estimate(
    trap: TrapConfig,
    species: Species,
    coupling: CouplingConfig,
    region_width: float,
    constants: Constants = DEFAULT_CONSTANTS,
) -> ShutdownEstimate:
    """Compare the requested oscillation frequency with 1/tau_fall through the
    coupling region.

    Regime boundaries at a factor of 3 around 1/tau_fall are a reporting
    convention; quantitative statements come from the fitted shutdown
    curves instead.
    """
    v0 = constants.hbar * coupling.kick_wavenumber / species.mass
    tau = fall_time(region_width, v0, constants)
    omega0_max = 1.0 / tau
    omega0 = oscillation_frequency(coupling.rabi_omega, coupling.scheme)
    if omega0 < omega0_max / 3.0:
        regime = CouplingRegime.WEAK
    elif omega0 > 3.0 * omega0_max:
        regime = CouplingRegime.STRONG
    else:
        regime = CouplingRegime.INTERMEDIATE
    return ShutdownEstimate(
        omega0_max=omega0_max,
        tau_fall=tau,
        region_width=region_width,
        regime=regime,
        omega0_requested=omega0,
    )
