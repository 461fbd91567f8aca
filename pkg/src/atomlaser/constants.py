"""Physical constants and atomic species data (SI units throughout)."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class Constants:
    """Fundamental constants used by the whole toolkit.

    Overridable for unit tests (e.g. ``Constants(g_grav=0.0)`` switches
    gravity off); instances are immutable after construction.
    """

    hbar: float = 1.054571817e-34  # J*s
    g_grav: float = 9.81           # m/s^2, magnitude of the local acceleration

    def __post_init__(self) -> None:
        if not self.hbar > 0.0:
            raise ValueError(f"hbar must be > 0, got {self.hbar}")
        if self.g_grav < 0.0:
            raise ValueError(f"g_grav must be >= 0, got {self.g_grav}")


DEFAULT_CONSTANTS = Constants()


@dataclass(frozen=True)
class Species:
    """Atomic species: mass and the optical wavenumber of the two-photon transition."""

    name: str
    mass: float                 # kg
    photon_wavenumber_k: float  # 1/m, single-photon k of the optical coupling light

    def __post_init__(self) -> None:
        if not self.mass > 0.0:
            raise ValueError(f"mass must be > 0, got {self.mass}")
        if not self.photon_wavenumber_k > 0.0:
            raise ValueError(
                f"photon_wavenumber_k must be > 0, got {self.photon_wavenumber_k}"
            )

    def recoil_velocity(self, constants: Constants = DEFAULT_CONSTANTS) -> float:
        """Single-photon recoil velocity hbar*k/m in m/s."""
        return constants.hbar * self.photon_wavenumber_k / self.mass


RB87_MASS = 1.44316e-25          # kg
RB87_WAVELENGTH = 780.24e-9      # m, D2 line used for the optical coupling
RB87_SCATTERING_LENGTH = 5.31e-9  # m, s-wave scattering length (~100.4 a0)


def make_rb87() -> Species:
    """Rubidium-87 with the D2-line optical wavenumber."""
    return Species(
        name="rb87",
        mass=RB87_MASS,
        photon_wavenumber_k=2.0 * math.pi / RB87_WAVELENGTH,
    )
