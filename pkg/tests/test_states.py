import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twomode.errors import GridTooNarrow, NormalizationError, TruncationOverflow
from twomode.states import (
    FIELD,
    MOMENTUM,
    FockState,
    apply_lo_phase,
    apply_rotation,
    coherent_state,
    default_grid,
    field_moments,
    hermite_basis,
    hermite_psi,
    joint_wavefunction,
    momentum_window_projector,
    noon2,
    product_state,
    quadrature_density,
    reduced_density,
    vacuum_state,
)


def random_state(rng, dim=6, modes=2):
    amps = rng.normal(size=(dim,) * modes) + 1j * rng.normal(size=(dim,) * modes)
    return FockState(amps / np.linalg.norm(amps))


class TestHermite:
    def test_ground_state_value(self):
        assert hermite_psi(0, 0.0) == pytest.approx((2.0 / math.pi) ** 0.25, abs=1e-15)

    def test_orthonormality(self):
        g = default_grid(20, points=2048)
        basis = hermite_basis(20, g)
        gram = np.trapezoid(basis[:, None, :] * basis[None, :, :], g, axis=2)
        assert np.max(np.abs(gram - np.eye(21))) < 1e-10

    def test_second_moment(self):
        # quadrature oracle: int x^2 psi_n^2 dx = (2n+1)/4
        g = default_grid(40, points=4001)
        basis = hermite_basis(40, g)
        x2 = np.trapezoid(g * g * basis**2, g, axis=1)
        assert np.max(np.abs(x2 - (2 * np.arange(41) + 1) / 4.0)) < 1e-8

    def test_negative_photon_number_rejected(self):
        with pytest.raises(ValueError):
            hermite_psi(-1, 0.0)


class TestCoherent:
    def test_vacuum_limit(self):
        c = coherent_state(0.0, 10)
        assert c[0] == 1.0
        assert np.all(c[1:] == 0.0)

    def test_norm_at_large_amplitude(self):
        c = coherent_state(4.0, 60)
        assert abs(np.sum(np.abs(c) ** 2) - 1.0) < 1e-10

    def test_truncation_guard(self):
        with pytest.raises(TruncationOverflow):
            coherent_state(4.0, 20)

    def test_mean_field_from_density(self):
        alpha = 1.3 - 0.4j
        state = product_state(coherent_state(alpha, 30), coherent_state(0.0, 30))
        g = default_grid(30)
        qf = quadrature_density(state, 0, FIELD, g)
        mean = np.trapezoid(g * qf.values, g)
        assert mean == pytest.approx(alpha.real, abs=1e-8)
        var = np.trapezoid((g - mean) ** 2 * qf.values, g)
        assert var == pytest.approx(0.25, abs=1e-8)


class TestNoon2:
    def test_norm_and_mean_fields(self):
        st2 = noon2()
        assert abs(st2.norm() - 1.0) < 1e-12
        for mode in (0, 1):
            mean, _ = field_moments(st2, mode)
            assert abs(mean) < 1e-12

    def test_reduced_density_by_hand(self):
        # partial-trace oracle: explicit sum over the traced index
        st2 = noon2(4)
        amps = st2.amplitudes
        rho_hand = np.zeros((5, 5), dtype=complex)
        for n in range(5):
            for m in range(5):
                rho_hand[n, m] = np.sum(amps[n, :] * np.conj(amps[m, :]))
        assert np.max(np.abs(reduced_density(st2, 0) - rho_hand)) < 1e-14
        diag = np.real(np.diag(rho_hand))
        assert diag[:3] == pytest.approx([0.5, 0.0, 0.5], abs=1e-14)

    def test_cutoff_guard(self):
        with pytest.raises(ValueError):
            noon2(cutoff=1)


class TestRotation:
    def test_identity(self, rng):
        st2 = random_state(rng)
        out = apply_rotation(st2, 0.0)
        assert out.fidelity(st2) == pytest.approx(1.0, abs=1e-12)

    def test_quarter_rotation_swaps_single_photon(self):
        amps = np.zeros((3, 3), dtype=complex)
        amps[1, 0] = 1.0
        out = apply_rotation(FockState(amps), math.pi / 2)
        assert abs(abs(out.amplitudes[0, 1]) - 1.0) < 1e-12
        assert abs(out.amplitudes[1, 0]) < 1e-12

    def test_coherent_states_stay_coherent(self):
        chi = 0.7
        a1, a2 = 2.0 + 0.5j, -1.0 + 1.5j
        st2 = product_state(coherent_state(a1, 40), coherent_state(a2, 40))
        rotated = apply_rotation(st2, chi)
        b1 = a1 * math.cos(chi) + a2 * math.sin(chi)
        b2 = -a1 * math.sin(chi) + a2 * math.cos(chi)
        ref = product_state(coherent_state(b1, 40), coherent_state(b2, 40))
        assert rotated.fidelity(ref) > 1.0 - 1e-8

    def test_sign_flips_off_diagonals(self):
        chi = 0.3
        st2 = product_state(coherent_state(1.0, 20), coherent_state(0.5j, 20))
        plus = apply_rotation(st2, chi, sign=1)
        minus = apply_rotation(st2, -chi, sign=-1)
        assert plus.fidelity(minus) == pytest.approx(1.0, abs=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(chi1=st.floats(-3.0, 3.0), chi2=st.floats(-3.0, 3.0))
    def test_group_property(self, chi1, chi2):
        st2 = noon2(8)
        combined = apply_rotation(apply_rotation(st2, chi1), chi2)
        direct = apply_rotation(st2, chi1 + chi2)
        assert combined.fidelity(direct) > 1.0 - 1e-9

    def test_norm_preserved(self, rng):
        st2 = random_state(rng, dim=8)
        out = apply_rotation(st2, 1.234)
        assert abs(out.norm() - 1.0) < 1e-9


class TestLoPhase:
    def test_identity_phases(self, rng):
        st2 = random_state(rng)
        for psi in (0.0, 2.0 * math.pi):
            out = apply_lo_phase(st2, psi, mode=0)
            assert out.fidelity(st2) == pytest.approx(1.0, abs=1e-10)

    def test_coherent_phase_advance(self):
        alpha, psi = 2.0 + 1.0j, 0.9
        st2 = product_state(coherent_state(alpha, 40), coherent_state(0.0, 40))
        out = apply_lo_phase(st2, psi, mode=0)
        ref = product_state(coherent_state(alpha * np.exp(-1j * psi), 40), coherent_state(0.0, 40))
        assert out.fidelity(ref) > 1.0 - 1e-10

    def test_photon_number_distribution_unchanged(self, rng):
        st2 = random_state(rng)
        out = apply_lo_phase(st2, 1.1, mode=1)
        assert np.allclose(np.abs(out.amplitudes), np.abs(st2.amplitudes), atol=1e-12)


class TestQuadratureDensity:
    def test_vacuum_variance(self):
        vac = vacuum_state(2, 10)
        g = default_grid(10)
        qf = quadrature_density(vac, 0, FIELD, g)
        var = np.trapezoid(g * g * qf.values, g)
        assert var == pytest.approx(0.25, abs=1e-9)

    def test_noon_momentum_marginal(self):
        # partial trace + Hermite oracle: (|psi_0|^2 + |psi_2|^2)/2
        g = default_grid(12)
        qf = quadrature_density(noon2(), 0, MOMENTUM, g)
        basis = hermite_basis(2, g)
        ref = 0.5 * (basis[0] ** 2 + basis[2] ** 2)
        assert np.max(np.abs(qf.values - ref)) < 1e-12

    def test_fourier_consistency(self, rng):
        # direct Fourier-transform oracle with kernel exp(2ipx)/sqrt(pi)
        st2 = random_state(rng, dim=6)
        g = default_grid(5, points=1501, pad=6.0)
        wf = joint_wavefunction(st2, (g, g), FIELD)
        h = g[1] - g[0]
        kernel = np.exp(2j * np.outer(g, g)) * h / math.sqrt(math.pi)
        transformed = kernel @ wf.values @ kernel.T
        dens_p = quadrature_density(st2, 0, MOMENTUM, g)
        marginal = np.trapezoid(np.abs(transformed) ** 2, g, axis=1)
        assert np.max(np.abs(marginal - dens_p.values)) < 1e-6

    def test_grid_guard(self):
        st2 = product_state(coherent_state(3.0, 40), coherent_state(0.0, 40))
        with pytest.raises(GridTooNarrow):
            quadrature_density(st2, 0, FIELD, np.linspace(-2.0, 2.0, 256))


class TestJointWavefunction:
    def test_vacuum_product_gaussian(self):
        vac = vacuum_state(2, 8)
        g = default_grid(8)
        wf = joint_wavefunction(vac, (g, g), FIELD)
        ref = np.outer(hermite_basis(0, g)[0], hermite_basis(0, g)[0])
        assert np.max(np.abs(wf.values - ref)) < 1e-12
        assert np.max(np.abs(wf.phase)) < 1e-12

    def test_squared_modulus_normalized(self, rng):
        st2 = random_state(rng, dim=6)
        g = default_grid(5, points=1024, pad=6.0)
        wf = joint_wavefunction(st2, (g, g), FIELD)
        assert wf.mass() == pytest.approx(1.0, abs=1e-6)

    def test_noon_phase_jump_on_diagonal(self):
        # along the p1 = p2 line the phase flips by ~pi where 2 p^2 = 1
        g = np.linspace(-3.5, 3.5, 701)
        wf = joint_wavefunction(noon2(), (g, g), MOMENTUM)
        diag_phase = np.array([wf.phase[i, i] for i in range(g.size)])
        r = g * math.sqrt(2.0)  # radius along the diagonal
        inner = np.abs(r) < 0.6
        outer = (np.abs(r) > 0.8) & (np.abs(r) < 2.0)
        jump = np.angle(
            np.exp(1j * (np.median(diag_phase[outer]) - np.median(diag_phase[inner])))
        )
        assert abs(abs(jump) - math.pi) < 0.05

    def test_momentum_amplitude_matches_field_for_stationary_state(self):
        # fixed total photon number: the i^n factors are a global phase
        g = np.linspace(-3.5, 3.5, 301)
        wf_e = joint_wavefunction(noon2(), (g, g), FIELD)
        wf_p = joint_wavefunction(noon2(), (g, g), MOMENTUM)
        assert np.max(np.abs(wf_e.amplitude - wf_p.amplitude)) < 1e-6


class TestFockState:
    def test_normalization_guard(self):
        amps = np.zeros((3, 3), dtype=complex)
        amps[0, 0] = 0.5
        with pytest.raises(NormalizationError):
            FockState(amps)

    def test_window_projector_matches_error_function(self):
        from scipy.special import erf

        w = 0.35
        proj = momentum_window_projector(13, w, points=4001)
        vac = np.zeros(13)
        vac[0] = 1.0
        mass = float(np.real(vac @ proj @ vac))
        assert mass == pytest.approx(float(erf(w * math.sqrt(2.0))), abs=1e-9)

    def test_field_moments_against_ladder_oracle(self, rng):
        # ladder oracle built two levels above the truncation so the raising
        # action inside E^2 is not clipped
        st2 = random_state(rng, dim=7)
        rho = reduced_density(st2, 0)
        d = rho.shape[0]
        big = np.zeros((d + 2, d + 2), dtype=complex)
        big[:d, :d] = rho
        a = np.diag(np.sqrt(np.arange(1, d + 2)), k=1)
        e_op = (a + a.conj().T) / 2.0
        mean_ref = float(np.real(np.trace(big @ e_op)))
        var_ref = float(np.real(np.trace(big @ e_op @ e_op))) - mean_ref**2
        mean, var = field_moments(st2, 0)
        assert mean == pytest.approx(mean_ref, abs=1e-12)
        assert var == pytest.approx(var_ref, abs=1e-12)
