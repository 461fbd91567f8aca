"""Multi-component 1D mean-field solver.

Split-step spectral propagation of coupled Gross-Pitaevskii equations:
half kinetic step in momentum space, exact pointwise matrix exponential of
the Hermitian potential + nonlinearity + coupling block in position space,
half kinetic step, then absorbing boundaries whose removed probability is
accumulated per component so that on-grid norm plus the absorbed ledger
stays exactly unity.

The public surface is SI; internally everything is rescaled to harmonic
oscillator units of the tight trap axis (length sqrt(hbar/m omega_z), time
1/omega_z) to keep the propagator well conditioned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import (
    ConfigError,
    CouplingConfig,
    CouplingScheme,
    GridSpec,
    InteractionConfig,
    TrapConfig,
    config_violations,
)
from .constants import DEFAULT_CONSTANTS, Constants, Species
from .dressed import DetuningProfile, detuning_profile, gravitational_sag

TRAPPED = "trapped"
UNTRAPPED = "untrapped"
ANTITRAPPED = "antitrapped"
F2_UNTRAPPED = "F2_untrapped"

OUTCOUPLED_LABELS = (UNTRAPPED, F2_UNTRAPPED)


class EngineError(RuntimeError):
    pass


@dataclass(frozen=True)
class ComponentSpec:
    """One internal state on the grid.

    ``potential_sign`` multiplies the magnetic term (+1 confining, 0 flat,
    -1 expelling); ``kick_steps`` counts the net photon momentum kicks of
    hbar*kappa received relative to the condensate component.
    """

    label: str
    potential_sign: int
    kick_steps: int = 0


def components_for_scheme(scheme: CouplingScheme) -> tuple[ComponentSpec, ...]:
    if scheme is CouplingScheme.RAMAN_TWO_STATE:
        return (
            ComponentSpec(TRAPPED, +1, 0),
            ComponentSpec(F2_UNTRAPPED, 0, 1),
        )
    return (
        ComponentSpec(TRAPPED, +1, 0),
        ComponentSpec(UNTRAPPED, 0, 1),
        ComponentSpec(ANTITRAPPED, -1, 2),
    )


@dataclass(frozen=True)
class CouplingMatrix:
    """Hermitian off-diagonal coupling block C(z) with H_coupling = hbar C.

    ``pairs`` holds (i, j, omega_eff, kappa_signed): the element C[j, i]
    equals omega_eff * exp(+i kappa_signed z), so transfer i -> j imparts
    momentum hbar*kappa_signed (kappa_signed < 0 points along gravity).
    """

    n: int
    pairs: tuple[tuple[int, int, float, float], ...]

    def matrix(self, z) -> np.ndarray:
        """Full (nz, n, n) complex coupling matrix in rad/s at positions z."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        C = np.zeros((z.size, self.n, self.n), dtype=complex)
        for i, j, omega, kappa in self.pairs:
            phase = np.exp(1j * kappa * z)
            C[:, j, i] += omega * phase
            C[:, i, j] += omega * np.conj(phase)
        return C

    @property
    def is_adjacent_ladder(self) -> bool:
        return all(j == i + 1 for i, j, _, _ in self.pairs)


def build_coupling_matrix(coupling: CouplingConfig) -> CouplingMatrix:
    """Coupling block for the configured scheme.

    Conventions are pinned by the observable oscillation frequencies: the
    two-state block uses off-diagonal Omega/2 (population oscillates at
    Omega/2pi), the three-state ladder uses off-diagonal Omega on adjacent
    pairs (m=0 population oscillates at 2^(3/2) Omega/2pi).
    """
    kappa_signed = -coupling.kick_wavenumber
    omega = coupling.rabi_omega
    if coupling.scheme is CouplingScheme.RAMAN_TWO_STATE:
        return CouplingMatrix(n=2, pairs=((0, 1, 0.5 * omega, kappa_signed),))
    return CouplingMatrix(
        n=3,
        pairs=((0, 1, omega, kappa_signed), (1, 2, omega, kappa_signed)),
    )


@dataclass(frozen=True)
class UnitScale:
    """Harmonic-oscillator scaling used internally by the solver."""

    length: float  # m
    time: float    # s
    energy: float  # J

    @staticmethod
    def from_trap(species: Species, omega_z: float, constants: Constants) -> "UnitScale":
        length = math.sqrt(constants.hbar / (species.mass * omega_z))
        return UnitScale(length=length, time=1.0 / omega_z, energy=constants.hbar * omega_z)


class System1D:
    """Immutable bundle of grid, species, component potentials, interactions
    and coupling for one simulation."""

    def __init__(
        self,
        grid: GridSpec,
        species: Species,
        components: Sequence[ComponentSpec],
        potentials: np.ndarray,
        g_eff: np.ndarray,
        coupling: CouplingMatrix | None,
        scale: UnitScale,
        constants: Constants = DEFAULT_CONSTANTS,
    ):
        self.grid = grid
        self.species = species
        self.components = tuple(components)
        self.potentials = np.asarray(potentials, dtype=float)  # (n, nz) J
        self.g_eff = np.asarray(g_eff, dtype=float)            # (n, n) J*m (atom number folded in)
        self.coupling = coupling
        self.scale = scale
        self.constants = constants
        n = len(self.components)
        if self.potentials.shape != (n, grid.n_points):
            raise EngineError(
                f"potentials shape {self.potentials.shape} != ({n}, {grid.n_points})"
            )
        if self.g_eff.shape != (n, n):
            raise EngineError(f"g_eff shape {self.g_eff.shape} != ({n}, {n})")
        if coupling is not None and coupling.n != n:
            raise EngineError(f"coupling size {coupling.n} != {n} components")

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def z(self) -> np.ndarray:
        g = self.grid
        return g.z_min + g.dz * np.arange(g.n_points)

    def component_index(self, label: str) -> int:
        for i, c in enumerate(self.components):
            if c.label == label:
                return i
        raise KeyError(f"no component labelled {label!r}")

    @property
    def condensate_index(self) -> int:
        idx = [i for i, c in enumerate(self.components) if c.potential_sign == +1]
        if len(idx) != 1:
            raise EngineError(
                f"exactly one component must have potential_sign=+1, found {len(idx)}"
            )
        return idx[0]

    def released(self) -> "System1D":
        """Same system with the magnetic trap switched off: every component
        evolves under gravity alone, coupling removed."""
        z = self.z
        grav = self.species.mass * self.constants.g_grav * z
        potentials = np.broadcast_to(grav, (self.n_components, z.size)).copy()
        return System1D(
            grid=self.grid,
            species=self.species,
            components=self.components,
            potentials=potentials,
            g_eff=self.g_eff,
            coupling=None,
            scale=self.scale,
            constants=self.constants,
        )

    def with_coupling(self, coupling: CouplingMatrix | None) -> "System1D":
        return System1D(
            grid=self.grid, species=self.species, components=self.components,
            potentials=self.potentials, g_eff=self.g_eff, coupling=coupling,
            scale=self.scale, constants=self.constants,
        )


def chemical_potential_tf(
    g1d: float, atom_number: float, omega_z: float, mass: float
) -> float:
    """1D Thomas-Fermi chemical potential (J) for a harmonic trap."""
    if g1d <= 0.0 or atom_number <= 0.0:
        return 0.0
    return (0.75 / math.sqrt(2.0) * atom_number * g1d * omega_z * math.sqrt(mass)) ** (2.0 / 3.0)


def thomas_fermi_radius(
    g1d: float, atom_number: float, omega_z: float, mass: float
) -> float:
    """1D Thomas-Fermi half-width (m)."""
    mu = chemical_potential_tf(g1d, atom_number, omega_z, mass)
    if mu <= 0.0:
        return 0.0
    return math.sqrt(2.0 * mu / (mass * omega_z**2))


def build_system(
    species: Species,
    trap: TrapConfig,
    coupling: CouplingConfig,
    interactions: InteractionConfig,
    grid: GridSpec,
    constants: Constants = DEFAULT_CONSTANTS,
) -> System1D:
    """Assemble the propagation system from validated configuration.

    Component potentials are s_j * hbar * delta(z) + m g z with
    s_j = +1, 0, -1 the rotating-frame ladder signs, so the trapped /
    untrapped / anti-trapped states feel confining / gravity-only /
    expelling magnetic terms and share resonance where delta(z) = 0.
    The gravitational energy grows with z, which puts the sag and the
    falling beam on the negative-z side.
    """
    bad = config_violations(trap, coupling, interactions, grid)
    if bad:
        raise ConfigError(bad)
    components = components_for_scheme(coupling.scheme)
    n = len(components)
    if len(interactions.g1d_matrix) != n:
        raise ConfigError(
            [f"interactions.g1d_matrix is {len(interactions.g1d_matrix)}x"
             f"{len(interactions.g1d_matrix)} but scheme {coupling.scheme.value} "
             f"has {n} components"]
        )

    scale = UnitScale.from_trap(species, trap.omega_z, constants)
    z_c = gravitational_sag(trap, constants)
    g_diag = interactions.g1d_matrix[0][0]
    r_char = max(
        thomas_fermi_radius(g_diag, interactions.atom_number, trap.omega_z, species.mass),
        scale.length,
    )
    if grid.z_min > z_c - 3.0 * r_char or grid.z_max < z_c + 3.0 * r_char:
        raise ConfigError(
            [f"grid.z_range [{grid.z_min!r}, {grid.z_max!r}] must contain the sag "
             f"position {z_c!r} plus 3 cloud radii ({3.0 * r_char!r}) on both sides"]
        )

    profile = detuning_profile(trap, species, coupling.detuning_delta, constants)
    z = grid.z_min + grid.dz * np.arange(grid.n_points)
    hdelta = constants.hbar * profile.delta_of_z(z)
    grav = species.mass * constants.g_grav * z
    potentials = np.empty((n, grid.n_points))
    for j, comp in enumerate(components):
        potentials[j] = comp.potential_sign * hdelta + grav

    g_eff = interactions.atom_number * np.asarray(interactions.g1d_matrix, dtype=float)
    return System1D(
        grid=grid, species=species, components=components, potentials=potentials,
        g_eff=g_eff, coupling=build_coupling_matrix(coupling), scale=scale,
        constants=constants,
    )


@dataclass
class FieldState:
    """Multi-component wavefunction on the grid plus the absorbed-norm ledger."""

    psi: np.ndarray        # (n, nz) complex, normalized with absorbed to 1
    absorbed: np.ndarray   # (n,) float
    time: float = 0.0
    steps: int = 0

    def copy(self) -> "FieldState":
        return FieldState(
            psi=self.psi.copy(), absorbed=self.absorbed.copy(),
            time=self.time, steps=self.steps,
        )


def norms(system: System1D, state: FieldState) -> np.ndarray:
    """On-grid norm per component."""
    return system.grid.dz * np.sum(np.abs(state.psi) ** 2, axis=1)


def populations(system: System1D, state: FieldState) -> np.ndarray:
    """Per-component fraction including that component's absorbed norm."""
    return norms(system, state) + state.absorbed


def population(system: System1D, state: FieldState, component: int | str) -> float:
    idx = component if isinstance(component, int) else system.component_index(component)
    return float(populations(system, state)[idx])


def outcoupled_fraction(system: System1D, state: FieldState) -> float:
    """Total fraction in the atom-laser (untrapped) states, absorbed norm included."""
    pops = populations(system, state)
    return float(sum(
        pops[i] for i, c in enumerate(system.components) if c.label in OUTCOUPLED_LABELS
    ))


def ledger_defect(system: System1D, state: FieldState) -> float:
    """|total on-grid norm + absorbed - 1|."""
    return abs(float(np.sum(norms(system, state)) + np.sum(state.absorbed)) - 1.0)


def center_of_mass(system: System1D, state: FieldState, component: int | str) -> float:
    idx = component if isinstance(component, int) else system.component_index(component)
    dens = np.abs(state.psi[idx]) ** 2
    w = np.sum(dens)
    if w == 0.0:
        raise EngineError(f"component {component!r} is empty")
    return float(np.sum(system.z * dens) / w)


def densities(system: System1D, state: FieldState) -> np.ndarray:
    """|psi_c|^2 per component, units 1/m."""
    return np.abs(state.psi) ** 2


@dataclass
class ObservationSeries:
    """Sampled observables from :meth:`GpeSolver.evolve`."""

    times: np.ndarray
    populations: np.ndarray      # (n_samples, n_components) incl. absorbed
    absorbed: np.ndarray         # (n_samples, n_components)
    densities: np.ndarray | None = None  # (n_samples, n_components, nz) if recorded

    def fluxes(self) -> np.ndarray:
        """Absorbed-norm flux per component between consecutive samples (1/s)."""
        dt = np.diff(self.times)
        return np.diff(self.absorbed, axis=0) / dt[:, None]


# ---------------------------------------------------------------------------
# Pointwise propagators for the Hermitian potential+coupling block.

def _expmih_diag(diag: np.ndarray, t: float) -> np.ndarray:
    return np.exp(-1j * t * diag)


def _expmih_2x2(d0, d1, c, t):
    """exp(-i t M) for M = [[d0, conj(c)], [c, d1]] stacks, via the Pauli form."""
    a = 0.5 * (d0 + d1)
    bz = 0.5 * (d0 - d1)
    b = np.sqrt(bz * bz + np.abs(c) ** 2)
    safe = np.where(b > 0.0, b, 1.0)
    sinc = np.where(b > 0.0, np.sin(b * t) / safe, t)
    cb = np.cos(b * t)
    phase = np.exp(-1j * a * t)
    U00 = phase * (cb - 1j * sinc * bz)
    U11 = phase * (cb + 1j * sinc * bz)
    U10 = phase * (-1j * sinc * c)
    U01 = phase * (-1j * sinc * np.conj(c))
    return U00, U01, U10, U11


def _eigvals3_herm_tridiag(d0, d1, d2, a01, a12):
    """Ascending eigenvalues of [[d0,c01,0],[c01*,d1,c12],[0,c12*,d2]] stacks;
    a01 = |c01|^2, a12 = |c12|^2.  Trigonometric (Cardano) form."""
    q = (d0 + d1 + d2) / 3.0
    e0, e1, e2 = d0 - q, d1 - q, d2 - q
    p2 = (e0 * e0 + e1 * e1 + e2 * e2 + 2.0 * (a01 + a12)) / 6.0
    p = np.sqrt(p2)
    det = e0 * (e1 * e2 - a12) - a01 * e2
    with np.errstate(divide="ignore", invalid="ignore"):
        cosarg = np.where(p2 > 0.0, det / (2.0 * p2 * p), 0.0)
    phi = np.arccos(np.clip(cosarg, -1.0, 1.0)) / 3.0
    l_hi = q + 2.0 * p * np.cos(phi)
    l_lo = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    l_mid = 3.0 * q - l_lo - l_hi
    return l_lo, l_mid, l_hi


def _expmih_3x3_tridiag(d0, d1, d2, c01, c12, t):
    """exp(-i t M) for Hermitian tridiagonal stacks as U = alpha I + beta M + gamma M^2.

    The coefficients interpolate exp(-i t lambda) on the three eigenvalues
    (Lagrange form).  An unreduced tridiagonal Hermitian matrix has simple
    eigenvalues, so the divided differences stay finite; accuracy degrades
    only for gaps near machine precision, far below coupled-run gaps.
    """
    a01 = np.abs(c01) ** 2
    a12 = np.abs(c12) ** 2
    lam = _eigvals3_herm_tridiag(d0, d1, d2, a01, a12)
    exps = [np.exp(-1j * t * l) for l in lam]
    alpha = 0.0
    beta = 0.0
    gamma = 0.0
    others = ((1, 2), (0, 2), (0, 1))
    for k in range(3):
        j1, j2 = others[k]
        den = (lam[k] - lam[j1]) * (lam[k] - lam[j2])
        w = exps[k] / den
        gamma = gamma + w
        beta = beta - w * (lam[j1] + lam[j2])
        alpha = alpha + w * (lam[j1] * lam[j2])
    # M^2 entries for tridiagonal M
    m00 = d0 * d0 + a01
    m11 = a01 + d1 * d1 + a12
    m22 = a12 + d2 * d2
    m01 = c01 * (d0 + d1)
    m12 = c12 * (d1 + d2)
    m02 = c01 * c12
    U = np.empty((3, 3) + np.shape(d0), dtype=complex)
    U[0, 0] = alpha + beta * d0 + gamma * m00
    U[1, 1] = alpha + beta * d1 + gamma * m11
    U[2, 2] = alpha + beta * d2 + gamma * m22
    # lower triangle holds the +i kappa z phases (source -> destination);
    # only the Hermitian M entries conjugate across the diagonal, the
    # interpolation coefficients are complex and shared
    U[1, 0] = beta * c01 + gamma * m01
    U[0, 1] = beta * np.conj(c01) + gamma * np.conj(m01)
    U[2, 1] = beta * c12 + gamma * m12
    U[1, 2] = beta * np.conj(c12) + gamma * np.conj(m12)
    U[2, 0] = gamma * m02
    U[0, 2] = gamma * np.conj(m02)
    return U


def expmih_stack(M: np.ndarray, t: float) -> np.ndarray:
    """exp(-i t M) for a stack (nz, n, n) of Hermitian matrices (generic path)."""
    w, V = np.linalg.eigh(M)
    phase = np.exp(-1j * t * w)
    return np.einsum("zij,zj,zkj->zik", V, phase, V.conj())


class GpeSolver:
    """Split-step propagator owning the precomputed operators for one system.

    Kicked components are stored in a co-moving gauge: the field array
    holds psi_j(z) * exp(-i K_j z) where K_j is the accumulated coupling
    kick of component j.  The gauge makes the coupling block real and puts
    the photon recoil energy into the per-component kinetic factor, where
    it cancels the recoil-compensated detuning exactly instead of through
    the splitting error.  Densities, populations and the absorbed-norm
    ledger are gauge-invariant; :meth:`lab_frame_psi` restores the plain
    wavefunction.

    A :class:`FieldState` is advanced in place and must not be shared
    between concurrently running solvers.
    """

    def __init__(
        self,
        system: System1D,
        absorber_fraction: float = 0.1,
        absorber_rate: float = 1.5e5,
        kfilter_fraction: float = 0.9,
        kfilter_rate: float = 0.2,
    ):
        self.system = system
        g = system.grid
        s = system.scale
        self._dtau = g.dt / s.time
        self._zeta = system.z / s.length
        k = 2.0 * np.pi * np.fft.fftfreq(g.n_points, d=g.dz)
        self._ktilde = k * s.length
        hbar = system.constants.hbar
        n = system.n_components

        # per-component gauge wavenumbers from the coupling ladder
        self._gauge_k = np.zeros(n)
        self._coupling_terms = None
        if system.coupling is not None:
            terms = []
            if system.coupling.is_adjacent_ladder:
                for i, j, omega, kappa in system.coupling.pairs:
                    self._gauge_k[j] = self._gauge_k[i] + kappa
                    terms.append((i, j, omega * s.time))
            else:
                # generic couplings stay in the lab gauge with z-dependent phases
                for i, j, omega, kappa in system.coupling.pairs:
                    phase = np.exp(1j * (kappa * s.length) * self._zeta)
                    terms.append((i, j, (omega * s.time) * phase))
            self._coupling_terms = terms

        # kinetic angular rate hbar (k + K_j)^2 / 2m per scaled time unit
        kin = (hbar * (k[None, :] + self._gauge_k[:, None]) ** 2
               / (2.0 * system.species.mass)) * s.time
        self._kin_half = np.exp(-0.5j * kin * self._dtau)
        self._gauge_phase = np.exp(1j * self._gauge_k[:, None] * system.z[None, :])
        # dimensionless potentials; interaction kernel in meters so that it
        # multiplies SI densities |psi(z)|^2 directly
        self._u = system.potentials / s.energy
        self._g_over_e = system.g_eff / s.energy

        # spatial absorber: sin^2 ramp over the outer absorber_fraction each side
        self._zmask = None
        if absorber_rate > 0.0 and absorber_fraction > 0.0:
            width = absorber_fraction * (g.z_max - g.z_min)
            z = system.z
            ramp = np.zeros(g.n_points)
            lo = z < g.z_min + width
            hi = z > g.z_max - width
            ramp[lo] = np.sin(0.5 * np.pi * (g.z_min + width - z[lo]) / width) ** 2
            ramp[hi] = np.sin(0.5 * np.pi * (z[hi] - (g.z_max - width)) / width) ** 2
            self._zmask = np.exp(-absorber_rate * g.dt * ramp)

        # momentum-space absorber for atoms approaching the band edge
        self._kmask = None
        if kfilter_rate > 0.0 and 0.0 < kfilter_fraction < 1.0:
            kmax = np.pi / g.dz
            akk = np.abs(k)
            start = kfilter_fraction * kmax
            rampk = np.clip((akk - start) / (kmax - start), 0.0, 1.0)
            mask = np.exp(-kfilter_rate * np.sin(0.5 * np.pi * rampk) ** 2)
            self._kmask = np.where(akk > start, mask, 1.0)

    # -- state constructors -------------------------------------------------

    def blank_state(self) -> FieldState:
        n = self.system.n_components
        return FieldState(
            psi=np.zeros((n, self.system.grid.n_points), dtype=complex),
            absorbed=np.zeros(n),
        )

    def state_from_wavefunction(self, component: int | str, psi_z: np.ndarray) -> FieldState:
        """Normalized single-component state from an SI-units lab-frame sample."""
        idx = (component if isinstance(component, int)
               else self.system.component_index(component))
        state = self.blank_state()
        amp = np.asarray(psi_z, dtype=complex)
        nrm = math.sqrt(self.system.grid.dz * float(np.sum(np.abs(amp) ** 2)))
        if nrm == 0.0:
            raise EngineError("cannot normalize an all-zero wavefunction")
        state.psi[idx] = amp / nrm * np.conj(self._gauge_phase[idx])
        return state

    def lab_frame_psi(self, state: FieldState) -> np.ndarray:
        """Wavefunctions with the internal gauge removed (plain lab frame)."""
        return state.psi * self._gauge_phase

    # -- ground state -------------------------------------------------------

    def ground_state(
        self,
        dtau: float = 5e-3,
        tol: float = 1e-10,
        max_steps: int = 200_000,
    ) -> FieldState:
        """Imaginary-time ground state of the condensate component (coupling off).

        Converged when the relative energy change per step drops below
        ``tol``; raises :class:`EngineError` with the residual otherwise.
        """
        sys_ = self.system
        idx = sys_.condensate_index
        g = sys_.grid
        zc_guess = self._zeta[int(np.argmin(self._u[idx]))]
        width = max(1.0, 0.5 * self._tf_radius_scaled(idx))
        phi = np.exp(-((self._zeta - zc_guess) ** 2) / (2.0 * width**2)).astype(complex)
        phi /= math.sqrt(g.dz / sys_.scale.length * float(np.sum(np.abs(phi) ** 2)))

        k = self._ktilde / sys_.scale.length + self._gauge_k[idx]
        kin = (sys_.constants.hbar * k**2 / (2.0 * sys_.species.mass)) * sys_.scale.time
        kin_half_im = np.exp(-0.5 * dtau * kin)
        dzeta = g.dz / sys_.scale.length
        u = self._u[idx]
        gam = self._g_over_e[idx, idx] / sys_.scale.length  # multiplies |phi(zeta)|^2

        def energy(phi):
            phik = np.fft.fft(phi)
            t = dzeta / phi.size * float(np.sum(kin * np.abs(phik) ** 2))
            dens = np.abs(phi) ** 2
            v = dzeta * float(np.sum(u * dens))
            i = 0.5 * gam * dzeta * float(np.sum(dens**2))
            return t + v + i

        e_prev = energy(phi)
        rel = math.inf
        for _ in range(max_steps):
            phik = np.fft.fft(phi)
            phi = np.fft.ifft(kin_half_im * phik)
            dens = np.abs(phi) ** 2
            phi = phi * np.exp(-dtau * (u + gam * dens))
            phi = np.fft.ifft(kin_half_im * np.fft.fft(phi))
            phi /= math.sqrt(dzeta * float(np.sum(np.abs(phi) ** 2)))
            e = energy(phi)
            rel = abs(e - e_prev) / max(abs(e), 1e-300)
            e_prev = e
            if rel < tol:
                break
        else:
            raise EngineError(
                f"imaginary-time evolution did not converge in {max_steps} steps; "
                f"last relative energy change {rel:.3e}"
            )

        state = self.blank_state()
        state.psi[idx] = phi / math.sqrt(sys_.scale.length) * np.conj(self._gauge_phase[idx])
        return state

    def _tf_radius_scaled(self, idx: int) -> float:
        sys_ = self.system
        g1d = sys_.g_eff[idx, idx]
        if g1d <= 0.0:
            return 0.0
        mu = (0.75 / math.sqrt(2.0) * g1d / sys_.scale.energy / sys_.scale.length) ** (2.0 / 3.0)
        return math.sqrt(2.0 * mu)

    # -- real-time propagation ----------------------------------------------

    def step(self, state: FieldState, coupling_on: bool = True) -> FieldState:
        """One split step of grid.dt; advances ``state`` in place."""
        psi = state.psi
        psik = np.fft.fft(psi, axis=1)
        psik *= self._kin_half
        if self._kmask is not None:
            before = np.sum(np.abs(psik) ** 2, axis=1)
            psik *= self._kmask
            after = np.sum(np.abs(psik) ** 2, axis=1)
            state.absorbed += self.system.grid.dz * (before - after) / psi.shape[1]
        psi = np.fft.ifft(psik, axis=1)

        psi = self._apply_pointwise_block(psi, coupling_on)

        psik = np.fft.fft(psi, axis=1)
        psik *= self._kin_half
        psi = np.fft.ifft(psik, axis=1)

        if self._zmask is not None:
            before = np.sum(np.abs(psi) ** 2, axis=1)
            psi *= self._zmask
            after = np.sum(np.abs(psi) ** 2, axis=1)
            state.absorbed += self.system.grid.dz * (before - after)

        state.psi = psi
        state.time += self.system.grid.dt
        state.steps += 1
        if not np.isfinite(psi).all():
            raise EngineError(f"non-finite amplitudes at step {state.steps}")
        return state

    def _apply_pointwise_block(self, psi: np.ndarray, coupling_on: bool) -> np.ndarray:
        dtau = self._dtau
        dens = np.abs(psi) ** 2
        diag = self._u + self._g_over_e @ dens

        terms = self._coupling_terms if coupling_on else None
        if not terms:
            return _expmih_diag(diag, dtau) * psi

        n = self.system.n_components
        if n == 2 and self.system.coupling.is_adjacent_ladder and len(terms) == 1:
            c = terms[0][2]
            U00, U01, U10, U11 = _expmih_2x2(diag[0], diag[1], c, dtau)
            out = np.empty_like(psi)
            out[0] = U00 * psi[0] + U01 * psi[1]
            out[1] = U10 * psi[0] + U11 * psi[1]
            return out
        if n == 3 and self.system.coupling.is_adjacent_ladder and len(terms) == 2:
            c01 = terms[0][2]
            c12 = terms[1][2]
            U = _expmih_3x3_tridiag(diag[0], diag[1], diag[2], c01, c12, dtau)
            out = np.empty_like(psi)
            out[0] = U[0, 0] * psi[0] + U[0, 1] * psi[1] + U[0, 2] * psi[2]
            out[1] = U[1, 0] * psi[0] + U[1, 1] * psi[1] + U[1, 2] * psi[2]
            out[2] = U[2, 0] * psi[0] + U[2, 1] * psi[1] + U[2, 2] * psi[2]
            return out

        # generic path: dense pointwise matrices
        nz = psi.shape[1]
        M = np.zeros((nz, n, n), dtype=complex)
        M[:, np.arange(n), np.arange(n)] = diag.T
        for i, j, c in terms:
            M[:, j, i] += c
            M[:, i, j] += np.conj(c)
        U = expmih_stack(M, dtau)
        return np.einsum("zij,jz->iz", U, psi)

    def evolve(
        self,
        state: FieldState,
        duration: float,
        coupling_on: bool = True,
        record_every: int = 0,
        record_density: bool = False,
    ) -> ObservationSeries:
        """Propagate for ``duration`` (must be a multiple of grid.dt).

        Sudden switching: the coupling acts at full strength from the first
        step when ``coupling_on``.  Observables are sampled every
        ``record_every`` steps (0 records only the endpoints).
        """
        dt = self.system.grid.dt
        n_steps_f = duration / dt
        n_steps = int(round(n_steps_f))
        if abs(n_steps_f - n_steps) > 1e-9 * max(1.0, n_steps_f):
            raise EngineError(
                f"duration {duration!r} is not a multiple of dt {dt!r}"
            )
        times = [state.time]
        pops = [populations(self.system, state)]
        absorbed = [state.absorbed.copy()]
        dens = [densities(self.system, state)] if record_density else None
        for i in range(n_steps):
            self.step(state, coupling_on=coupling_on)
            if (record_every and (i + 1) % record_every == 0) or i == n_steps - 1:
                times.append(state.time)
                pops.append(populations(self.system, state))
                absorbed.append(state.absorbed.copy())
                if record_density:
                    dens.append(densities(self.system, state))
        return ObservationSeries(
            times=np.array(times),
            populations=np.array(pops),
            absorbed=np.array(absorbed),
            densities=np.array(dens) if record_density else None,
        )

    # -- diagnostics ----------------------------------------------------------

    def energy_breakdown(self, state: FieldState, coupling_on: bool = False) -> dict[str, float]:
        """Kinetic / potential / interaction / coupling energies in Joules."""
        sys_ = self.system
        dz = sys_.grid.dz
        hbar = sys_.constants.hbar
        m = sys_.species.mass
        k = self._ktilde / sys_.scale.length
        kin = 0.0
        for j in range(sys_.n_components):
            psik = np.fft.fft(state.psi[j])
            kj = k + self._gauge_k[j]
            kin += dz / psik.size * float(
                np.sum(hbar**2 * kj**2 / (2.0 * m) * np.abs(psik) ** 2)
            )
        dens = np.abs(state.psi) ** 2
        pot = dz * float(np.sum(sys_.potentials * dens))
        inter = 0.5 * dz * float(np.einsum("jk,jz,kz->", sys_.g_eff, dens, dens))
        coup = 0.0
        if coupling_on and sys_.coupling is not None:
            z = sys_.z
            psi_lab = self.lab_frame_psi(state)
            for i, j, omega, kappa in sys_.coupling.pairs:
                phase = np.exp(1j * kappa * z)
                coup += 2.0 * hbar * omega * dz * float(
                    np.real(np.sum(np.conj(psi_lab[j]) * phase * psi_lab[i]))
                )
        total = kin + pot + inter + coup
        return {
            "kinetic": kin, "potential": pot, "interaction": inter,
            "coupling": coup, "total": total,
        }
