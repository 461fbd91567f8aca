import math

import numpy as np
import pytest
from scipy.optimize import brentq

from atomlaser.config import CouplingConfig, CouplingScheme, TrapConfig
from atomlaser.constants import Constants, make_rb87
from atomlaser.dressed import (
    CouplingRegime,
    DressedModelError,
    KickGeometry,
    bound_decay_rate,
    detuning_profile,
    dressed_potentials,
    fall_time,
    gravitational_sag,
    momentum_kick,
    oscillation_frequency,
    project_onto_bare,
    project_onto_dressed,
    rabi_from_oscillation,
    sag_detuning,
    shutdown_estimate,
    strong_coupling_threshold,
)

RB = make_rb87()
CONST = Constants()
TRAP = TrapConfig(omega_z=2 * math.pi * 120, omega_y=2 * math.pi * 13)


class TestGravitationalSag:
    def test_paper_trap_value(self):
        expected = -9.81 / (2 * math.pi * 120) ** 2
        zc = gravitational_sag(TRAP)
        assert zc == pytest.approx(expected, rel=1e-12)
        assert zc == pytest.approx(-1.726e-5, rel=1e-3)

    def test_within_20_percent_of_reference_crossing(self):
        assert abs(gravitational_sag(TRAP)) == pytest.approx(20e-6, rel=0.2)

    def test_quadratic_scaling(self):
        tighter = TrapConfig(omega_z=10 * TRAP.omega_z, omega_y=TRAP.omega_y)
        assert gravitational_sag(tighter) == pytest.approx(
            gravitational_sag(TRAP) / 100.0, rel=1e-12
        )


class TestSagDetuning:
    def test_paper_trap_value(self):
        expected = RB.mass * 9.81**2 / (2 * 1.054571817e-34 * (2 * math.pi * 120) ** 2)
        got = sag_detuning(TRAP, RB)
        assert got == pytest.approx(expected, rel=1e-12)
        assert got == pytest.approx(1.158e5, rel=1e-3)
        assert got / (2 * math.pi) == pytest.approx(18.4e3, rel=2e-3)

    def test_no_gravity_no_sag(self):
        assert sag_detuning(TRAP, RB, Constants(g_grav=0.0)) == 0.0

    def test_inverse_square_scaling(self):
        double = TrapConfig(omega_z=2 * TRAP.omega_z, omega_y=TRAP.omega_y)
        assert sag_detuning(double, RB) == pytest.approx(
            sag_detuning(TRAP, RB) / 4.0, rel=1e-12
        )


class TestDetuningProfile:
    def test_lower_root_is_sag_position(self):
        Delta = sag_detuning(TRAP, RB)
        prof = detuning_profile(TRAP, RB, Delta)
        zc = gravitational_sag(TRAP)
        assert prof.resonance_roots[0] == pytest.approx(zc, rel=1e-12)
        assert prof.delta_of_z(prof.resonance_roots[0]) == pytest.approx(
            0.0, abs=1e-12 * Delta
        )

    def test_zero_detuning_single_root(self):
        prof = detuning_profile(TRAP, RB, 0.0)
        assert prof.resonance_roots == (0.0,)

    def test_delta_at_origin(self):
        prof = detuning_profile(TRAP, RB, 5.0e4)
        assert prof.delta_of_z(0.0) == pytest.approx(-5.0e4, rel=1e-12)

    def test_negative_detuning_no_roots(self):
        prof = detuning_profile(TRAP, RB, -1.0e4)
        assert prof.resonance_roots == ()
        # formula still valid
        assert prof.delta_of_z(0.0) == pytest.approx(1.0e4, rel=1e-12)


class TestDressedPotentials:
    def test_on_resonance_splitting(self):
        Delta = sag_detuning(TRAP, RB)
        prof = detuning_profile(TRAP, RB, Delta)
        omega = 2 * math.pi * 300.0
        sys_ = dressed_potentials(prof, omega)
        z0 = prof.resonance_roots[0]
        gap = sys_.v_plus(z0) - sys_.v_minus(z0)
        assert gap == pytest.approx(2 * CONST.hbar * omega, rel=1e-12)

    def test_zero_coupling_reduces_to_bare_extrema(self):
        prof = detuning_profile(TRAP, RB, sag_detuning(TRAP, RB))
        sys_ = dressed_potentials(prof, 0.0)
        z = np.linspace(-60e-6, 30e-6, 501)
        bt, bu = sys_.bare_trapped(z), sys_.bare_untrapped(z)
        assert np.allclose(sys_.v_plus(z), np.maximum(bt, bu), rtol=0, atol=1e-45)
        assert np.allclose(sys_.v_minus(z), np.minimum(bt, bu), rtol=0, atol=1e-45)

    def test_matches_independent_eigensolver(self):
        # oracle: eigenvalues of hbar*[[delta, Omega], [Omega, 0]] plus gravity
        rng = np.random.default_rng(11)
        Delta = sag_detuning(TRAP, RB)
        prof = detuning_profile(TRAP, RB, Delta)
        z = rng.uniform(-80e-6, 40e-6, size=200)
        for omega in (0.0, 137.0, 2 * math.pi * 450.0):
            sys_ = dressed_potentials(prof, omega)
            vp, vm = sys_.v_plus(z), sys_.v_minus(z)
            for i, zi in enumerate(z):
                h = CONST.hbar * np.array(
                    [[prof.delta_of_z(zi), omega], [omega, 0.0]]
                )
                lo, hi = np.linalg.eigvalsh(h)
                grav = RB.mass * CONST.g_grav * zi
                scale = max(abs(hi + grav), abs(lo + grav), CONST.hbar * 1.0)
                assert abs(vp[i] - (hi + grav)) <= 1e-12 * scale
                assert abs(vm[i] - (lo + grav)) <= 1e-12 * scale

    def test_branch_order_and_gap_formula(self):
        prof = detuning_profile(TRAP, RB, sag_detuning(TRAP, RB))
        sys_ = dressed_potentials(prof, 2 * math.pi * 200.0)
        z = np.linspace(-100e-6, 50e-6, 2001)
        vp, vm = sys_.v_plus(z), sys_.v_minus(z)
        assert np.all(vp >= vm)
        gap = sys_.gap(z)
        assert np.allclose(vp - vm, gap, rtol=1e-12, atol=0)

    def test_upper_branch_has_interior_minimum(self):
        prof = detuning_profile(TRAP, RB, sag_detuning(TRAP, RB))
        sys_ = dressed_potentials(prof, 2 * math.pi * 500.0)
        z = np.linspace(-120e-6, 60e-6, 4001)
        vp = sys_.v_plus(z)
        imin = int(np.argmin(vp))
        assert 0 < imin < z.size - 1

    def test_lower_branch_decreases_below_lower_root(self):
        prof = detuning_profile(TRAP, RB, sag_detuning(TRAP, RB))
        sys_ = dressed_potentials(prof, 2 * math.pi * 500.0)
        z = np.linspace(-150e-6, prof.resonance_roots[0], 2001)
        vm = sys_.v_minus(z)
        assert np.all(np.diff(vm) > 0)  # decreasing toward -z

    def test_asymptotes(self):
        Delta = sag_detuning(TRAP, RB)
        prof = detuning_profile(TRAP, RB, Delta)
        omega = 2 * math.pi * 400.0
        sys_ = dressed_potentials(prof, omega)
        root = prof.resonance_roots[1]
        z = np.linspace(5 * root, 8 * root, 200)
        for zs in (z, -z):
            vp = sys_.v_plus(zs)
            vm = sys_.v_minus(zs)
            trapped_asym = sys_.bare_trapped(zs)
            untrapped_asym = sys_.bare_untrapped(zs)
            scale = np.maximum(np.abs(trapped_asym), CONST.hbar * omega)
            assert np.all(np.abs(vp - trapped_asym) <= 0.01 * scale)
            scale_u = np.maximum(np.abs(untrapped_asym), CONST.hbar * omega)
            assert np.all(np.abs(vm - untrapped_asym) <= 0.01 * scale_u)

    def test_mixing_angle_limits(self):
        prof = detuning_profile(TRAP, RB, sag_detuning(TRAP, RB))
        sys_ = dressed_potentials(prof, 2 * math.pi * 100.0)
        z0 = prof.resonance_roots[0]
        assert sys_.mixing_angle(z0) == pytest.approx(math.pi / 4, rel=1e-9)


class TestProjection:
    def test_trapped_state_projects_to_equal_superposition(self):
        out = project_onto_dressed(np.array([1.0, 0.0]), delta=0.0, omega=100.0)
        # (1/sqrt2, -1/sqrt2) up to a global phase
        phase = out[0] / abs(out[0])
        out = out / phase
        assert out[0] == pytest.approx(1 / math.sqrt(2), rel=1e-12)
        assert out[1] == pytest.approx(-1 / math.sqrt(2), rel=1e-12)

    def test_adiabatic_limit(self):
        out = project_onto_dressed(np.array([1.0, 0.0]), delta=1e9, omega=1.0)
        assert abs(out[0]) == pytest.approx(1.0, abs=1e-8)

    def test_unitarity_on_random_inputs(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            amps = rng.normal(size=2) + 1j * rng.normal(size=2)
            delta = rng.normal() * 1e4
            omega = abs(rng.normal()) * 1e3 + 1.0
            out = project_onto_dressed(amps, delta, omega)
            assert np.sum(np.abs(out) ** 2) == pytest.approx(
                np.sum(np.abs(amps) ** 2), rel=1e-14
            )

    def test_round_trip_identity(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            amps = rng.normal(size=2) + 1j * rng.normal(size=2)
            delta = rng.normal() * 1e4
            omega = abs(rng.normal()) * 1e3 + 1.0
            back = project_onto_bare(project_onto_dressed(amps, delta, omega), delta, omega)
            assert np.max(np.abs(back - amps)) < 1e-14 * max(1.0, np.max(np.abs(amps)))

    def test_degenerate_basis_error(self):
        with pytest.raises(DressedModelError):
            project_onto_dressed(np.array([1.0, 0.0]), delta=0.0, omega=0.0)


class TestBoundDecay:
    def test_zero_coupling(self):
        assert bound_decay_rate(0.0, 1.0e5, 754.0) == pytest.approx(2.0, rel=1e-15)

    def test_threshold_value(self):
        Delta = sag_detuning(TRAP, RB)
        om_c = strong_coupling_threshold(TRAP.omega_z, Delta)
        # at the threshold the exponent is exactly 1 (algebraic identity)
        exponent = math.pi * om_c**1.5 / (math.sqrt(2) * math.sqrt(Delta) * TRAP.omega_z)
        assert exponent == pytest.approx(1.0, rel=1e-12)
        assert bound_decay_rate(om_c, Delta, TRAP.omega_z) == pytest.approx(
            2.0 / math.e, rel=1e-12
        )
        assert bound_decay_rate(2371.0, 1.158e5, 754.0) == pytest.approx(0.736, rel=2e-3)

    def test_monotonic_in_coupling(self):
        Delta = 1.158e5
        omegas = np.linspace(0, 5000, 200)
        vals = [bound_decay_rate(o, Delta, 754.0) for o in omegas]
        assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_domain_errors(self):
        with pytest.raises(DressedModelError):
            bound_decay_rate(100.0, 0.0, 754.0)
        with pytest.raises(DressedModelError):
            bound_decay_rate(100.0, -1.0, 754.0)


class TestStrongCouplingThreshold:
    def test_paper_trap_value(self):
        Delta = sag_detuning(TRAP, RB)
        expected = (2 * TRAP.omega_z**2 * Delta / math.pi**2) ** (1 / 3)
        got = strong_coupling_threshold(TRAP.omega_z, Delta)
        assert got == pytest.approx(expected, rel=1e-12)
        assert got == pytest.approx(2.37e3, rel=1e-3)
        assert got / (2 * math.pi) == pytest.approx(377.0, rel=2e-3)

    def test_same_order_as_observed_onset(self):
        got_hz = strong_coupling_threshold(TRAP.omega_z, sag_detuning(TRAP, RB)) / (
            2 * math.pi
        )
        assert 500.0 / 3 < got_hz < 500.0 * 3

    def test_omega_z_scaling(self):
        Delta = 1.0e5
        assert strong_coupling_threshold(8 * 754.0, Delta) == pytest.approx(
            4 * strong_coupling_threshold(754.0, Delta), rel=1e-12
        )


class TestOscillationFrequency:
    def test_two_state(self):
        assert oscillation_frequency(
            2 * math.pi * 500.0, CouplingScheme.RAMAN_TWO_STATE
        ) == pytest.approx(500.0, rel=1e-12)

    def test_three_state(self):
        got = oscillation_frequency(2 * math.pi * 500.0, CouplingScheme.RF_THREE_STATE)
        assert got == pytest.approx(1414.2, rel=1e-4)

    def test_round_trip(self):
        for scheme in CouplingScheme:
            for om0 in (10.0, 500.0, 4000.0):
                om = rabi_from_oscillation(om0, scheme)
                assert oscillation_frequency(om, scheme) == pytest.approx(om0, rel=1e-12)


class TestMomentumKick:
    def test_angled_140(self):
        kick = momentum_kick(RB, KickGeometry.ANGLED, theta=math.radians(140))
        assert kick.kappa == pytest.approx(
            2 * RB.photon_wavenumber_k * math.sin(math.radians(70)), rel=1e-12
        )
        assert kick.kappa / RB.photon_wavenumber_k == pytest.approx(1.879, rel=1e-3)
        assert kick.kappa_parallel == kick.kappa

    def test_counterpropagating(self):
        kick = momentum_kick(RB, KickGeometry.COUNTERPROP)
        assert kick.kappa == pytest.approx(2 * RB.photon_wavenumber_k, rel=1e-12)

    def test_orthogonal_parallel_component(self):
        kick = momentum_kick(RB, KickGeometry.ORTHOGONAL_45)
        assert kick.kappa == pytest.approx(math.sqrt(2) * RB.photon_wavenumber_k, rel=1e-12)
        assert kick.kappa_parallel == pytest.approx(RB.photon_wavenumber_k, rel=1e-12)

    def test_kick_velocity(self):
        kick = momentum_kick(RB, KickGeometry.ANGLED, theta=math.radians(140))
        expected = 1.879385241571817 * RB.recoil_velocity()
        assert kick.velocity == pytest.approx(expected, rel=1e-9)
        assert kick.velocity == pytest.approx(1.106e-2, rel=1e-3)

    def test_bad_theta(self):
        with pytest.raises(DressedModelError):
            momentum_kick(RB, KickGeometry.ANGLED, theta=0.0)


class TestFallTime:
    def test_pure_gravity(self):
        t = fall_time(5e-6, 0.0)
        assert t == pytest.approx(math.sqrt(2 * 5e-6 / 9.81), rel=1e-12)
        assert t == pytest.approx(1.01e-3, rel=1e-2)
        # independent numeric root of the quadratic
        root = brentq(lambda tt: 0.5 * 9.81 * tt**2 - 5e-6, 1e-6, 1.0)
        assert t == pytest.approx(root, rel=1e-9)

    def test_with_kick(self):
        v0 = 1.106e-2
        t = fall_time(5e-6, v0)
        root = brentq(lambda tt: v0 * tt + 0.5 * 9.81 * tt**2 - 5e-6, 1e-7, 1.0)
        assert t == pytest.approx(root, rel=1e-9)
        assert t == pytest.approx(4.0e-4, rel=5e-2)

    def test_ballistic_limit(self):
        t = fall_time(5e-6, 1e-2, Constants(g_grav=0.0))
        assert t == pytest.approx(5e-6 / 1e-2, rel=1e-12)


class TestShutdownEstimate:
    def test_rf_kilohertz_scale(self):
        coup = CouplingConfig(
            scheme=CouplingScheme.RF_THREE_STATE,
            rabi_omega=rabi_from_oscillation(100.0, CouplingScheme.RF_THREE_STATE),
            detuning_delta=0.0,
        )
        est = shutdown_estimate(TRAP, RB, coup, region_width=5e-6)
        assert est.omega0_max == pytest.approx(1.0e3, rel=2e-2)
        assert est.omega0_max * est.tau_fall == pytest.approx(1.0, rel=1e-12)
        assert est.regime is CouplingRegime.WEAK

    def test_kicked_two_state(self):
        kappa = 1.879385241571817 * RB.photon_wavenumber_k
        coup = CouplingConfig(
            scheme=CouplingScheme.RAMAN_TWO_STATE,
            rabi_omega=rabi_from_oscillation(10e3, CouplingScheme.RAMAN_TWO_STATE),
            detuning_delta=0.0,
            kick_wavenumber=kappa,
        )
        est = shutdown_estimate(TRAP, RB, coup, region_width=5e-6)
        assert est.omega0_max == pytest.approx(2.5e3, rel=5e-2)
        # same order as the semiclassical ~1 kHz statement
        assert 1e3 / 3 < est.omega0_max < 1e3 * 10
        assert est.regime is CouplingRegime.STRONG

    def test_kick_strictly_raises_limit(self):
        rf = CouplingConfig(
            scheme=CouplingScheme.RF_THREE_STATE, rabi_omega=100.0, detuning_delta=0.0
        )
        kicked = CouplingConfig(
            scheme=CouplingScheme.RAMAN_TWO_STATE, rabi_omega=100.0,
            detuning_delta=0.0, kick_wavenumber=8.05e6,
        )
        w = 5e-6
        assert (
            shutdown_estimate(TRAP, RB, kicked, w).omega0_max
            > shutdown_estimate(TRAP, RB, rf, w).omega0_max
        )

    def test_intermediate_band(self):
        coup = CouplingConfig(
            scheme=CouplingScheme.RF_THREE_STATE,
            rabi_omega=rabi_from_oscillation(1000.0, CouplingScheme.RF_THREE_STATE),
            detuning_delta=0.0,
        )
        est = shutdown_estimate(TRAP, RB, coup, region_width=5e-6)
        assert est.regime is CouplingRegime.INTERMEDIATE
