import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq

from stochns2d.lattice import (FieldError, NormParams, Truncation, VorticityField, d_norm, energy_spectrum,
                               enstrophy, hermitian_defect, in_region_U, lattice_grids, log_d_norm, minimal_D,
                               region_mask, saturating_profile, velocity_from_vorticity)

P = NormParams(1.5, 3.5, 2.0)


def random_field(seed, k_max=6, scale=1.0):
    return VorticityField.random(k_max, np.random.default_rng(seed)).scaled(scale)


class TestConstruction:
    def test_from_modes_completes_partner(self):
        f = VorticityField.from_modes(4, {(1, 2): 3j})
        assert f[(-1, -2)] == -3j
        assert hermitian_defect(f.amplitudes) == 0

    def test_rejects_nonhermitian(self):
        a = np.zeros((9, 9), complex)
        a[5, 4] = 1.0
        with pytest.raises(FieldError):
            VorticityField(Truncation(4), a)

    def test_rejects_zero_mode_and_outside_disk(self):
        a = np.zeros((9, 9), complex)
        a[4, 4] = 1.0
        with pytest.raises(FieldError):
            VorticityField(Truncation(4), a)
        with pytest.raises(FieldError):
            VorticityField.from_modes(4, {(4, 1): 1.0})

    def test_rejects_nonfinite_and_bad_shape(self):
        a = np.zeros((9, 9), complex)
        a[5, 4] = a[3, 4] = np.nan
        with pytest.raises(FieldError):
            VorticityField(Truncation(4), a)
        with pytest.raises(FieldError):
            VorticityField(Truncation(4), np.zeros((7, 7)))

    def test_inconsistent_partners(self):
        with pytest.raises(FieldError):
            VorticityField.from_modes(4, {(1, 0): 1.0, (-1, 0): 2.0})

    def test_amplitudes_read_only(self):
        f = random_field(0)
        with pytest.raises(ValueError):
            f.amplitudes[0, 0] = 1

    def test_norm_params_validation(self):
        with pytest.raises(FieldError):
            NormParams(0.5, 3.5, 1.0)
        with pytest.raises(FieldError):
            NormParams(1.5, 2.4, 1.0)
        with pytest.raises(FieldError):
            NormParams(1.5, 3.5, 0.0)


class TestEnstrophy:
    def test_zero(self):
        assert enstrophy(VorticityField.zeros(4)) == 0

    def test_unit_pair(self):
        assert enstrophy(VorticityField.from_modes(4, {(1, 0): 1.0})) == 1.0

    def test_imaginary_pair(self):
        assert enstrophy(VorticityField.from_modes(4, {(1, 2): 3j})) == pytest.approx(9.0, abs=1e-14)

    def test_batched_matches_scalar(self):
        fs = [random_field(s) for s in range(4)]
        batch = enstrophy(np.stack([f.amplitudes for f in fs]))
        assert np.allclose(batch, [enstrophy(f) for f in fs], rtol=1e-15)


class TestNorm:
    def test_zero(self):
        assert d_norm(VorticityField.zeros(4), P) == 0

    def test_pair_value(self):
        # r = 2, alpha = 3 sits outside the admissible exponents, so use the raw functional
        f = VorticityField.from_modes(4, {(2, 0): 1.0})
        val = math.exp(log_d_norm(f, 2.0, 3.0, 2.0))
        assert val == pytest.approx(4 * math.exp(0.25), rel=1e-14)
        assert val == pytest.approx(5.1361, abs=1e-4)

    def test_pair_value_admissible(self):
        f = VorticityField.from_modes(4, {(2, 0): 1.0})
        assert d_norm(f, NormParams(2.0, 3.5, 2.0)) == pytest.approx(4 * math.exp(2 * 2 ** -3.5), rel=1e-14)

    @given(st.integers(0, 2 ** 32), st.floats(0.5, 5.0), st.floats(1.0, 3.0))
    def test_decreasing_in_D(self, seed, D, factor):
        f = random_field(seed)
        assert d_norm(f, P.with_D(D * factor)) <= d_norm(f, P.with_D(D)) * (1 + 1e-15)

    @given(st.integers(0, 2 ** 32), st.floats(-10, 10), st.floats(-10, 10))
    def test_homogeneous(self, seed, re, im):
        f = random_field(seed)
        c = complex(re, im)
        scaled = f.amplitudes * c
        assert d_norm(scaled, P) == pytest.approx(abs(c) * d_norm(f, P), rel=1e-13, abs=1e-300)

    def test_batched_D(self):
        f = random_field(3)
        Ds = np.array([1.0, 2.0, 3.0])
        vals = log_d_norm(f, 1.5, 3.5, Ds)
        assert np.allclose(vals, [log_d_norm(f, 1.5, 3.5, D) for D in Ds])


class TestRegion:
    def test_zero_inside(self):
        assert in_region_U(VorticityField.zeros(4), P)

    def test_boundary_included(self):
        p = NormParams(1.5, 3.5, 2.0)
        f = saturating_profile(8, p)
        # the saturating profile sits on the boundary; rescale so both equalities hold for a pair
        c = p.D ** p.alpha / math.exp(p.D ** -p.alpha)
        pair = VorticityField.from_modes(8, {(1, 0): c})
        assert d_norm(pair, p) == pytest.approx(p.D ** p.alpha, rel=1e-15)
        phi_ok = enstrophy(pair) <= p.D ** 2
        assert in_region_U(pair, p) == phi_ok
        assert in_region_U(f, NormParams(p.r, p.alpha, p.D * (1 + 1e-12)))

    def test_exact_boundary_both_constraints(self):
        # enstrophy = D^2 exactly and norm = D^alpha exactly with dyadic numbers
        r, alpha = 2.0, 4.0
        D = 1.0
        # single pair at k = (1, 0): norm = |w| e^{1}, enstrophy = |w|^2; pick |w| = e^-1 and D where both bind
        w = 1.0
        f = VorticityField.from_modes(2, {(1, 0): w})
        assert enstrophy(f) == D ** 2
        Dn = brentq(lambda x: w * math.exp(x ** -alpha) - x ** alpha, 0.5, 5.0)
        assert not in_region_U(f, NormParams(r, alpha, D))
        assert in_region_U(f, NormParams(r, alpha, Dn * (1 + 1e-12)))

    def test_pair_just_outside(self):
        p = NormParams(1.5, 3.5, 2.0)
        c = 1.01 * p.D ** p.alpha / math.exp(p.D ** -p.alpha)
        pair = VorticityField.from_modes(8, {(1, 0): c})
        assert d_norm(pair, p) == pytest.approx(1.01 * p.D ** p.alpha, rel=1e-14)
        assert not in_region_U(pair, p)

    @given(st.integers(0, 2 ** 32), st.floats(0.3, 4.0), st.floats(1.0, 2.0))
    def test_nesting(self, seed, D, factor):
        f = random_field(seed, scale=3.0)
        if in_region_U(f, P.with_D(D)):
            assert in_region_U(f, P.with_D(D * factor))


def pair_minimal_D_oracle(c, r, alpha):
    """Independent root-find for a pair at |k| = 1."""
    d_norm_root = brentq(lambda D: math.log(c) + D ** -alpha - alpha * math.log(D), 1e-3, 1e3)
    return max(d_norm_root, abs(c))


class TestMinimalD:
    def test_zero(self):
        assert minimal_D(VorticityField.zeros(4), 1.5, 3.5) == 0.0

    @pytest.mark.parametrize("c", [0.3, 1.0, 2.5, 17.0])
    def test_pair_oracle(self, c):
        f = VorticityField.from_modes(6, {(1, 0): c})
        got = minimal_D(f, 1.5, 3.5, tol=1e-9)
        assert got == pytest.approx(pair_minimal_D_oracle(c, 1.5, 3.5), abs=2e-9)

    @given(st.integers(0, 2 ** 32), st.floats(0.1, 20.0))
    def test_bracketing(self, seed, scale):
        f = random_field(seed, scale=scale)
        tol = 1e-6
        M = minimal_D(f, 1.5, 3.5, tol=tol)
        assert region_mask(f, 1.5, 3.5, M + tol)
        if M > tol:
            assert not region_mask(f, 1.5, 3.5, M - tol)

    @given(st.integers(0, 2 ** 32))
    def test_rescaling_monotone(self, seed):
        f = random_field(seed)
        assert minimal_D(f.amplitudes * 2, 1.5, 3.5) >= minimal_D(f, 1.5, 3.5)

    def test_ceiling_sentinel(self):
        f = VorticityField.from_modes(4, {(1, 0): 1e8})
        assert minimal_D(f, 1.5, 3.5, ceiling=100.0) == math.inf

    def test_batched(self):
        fs = np.stack([random_field(s).amplitudes for s in range(3)])
        assert np.allclose(minimal_D(fs, 1.5, 3.5), [minimal_D(f, 1.5, 3.5) for f in fs])

    def test_bad_tol(self):
        with pytest.raises(ValueError):
            minimal_D(VorticityField.zeros(2), 1.5, 3.5, tol=0)


class TestSpectrum:
    def test_single_pair(self):
        est = energy_spectrum([VorticityField.from_modes(4, {(1, 0): 1.0})])
        assert est.e_k[0] == 2.0 and est.k[0] == 1.0
        assert np.all(est.e_k[1:] == 0)

    def test_zero_ensemble(self):
        est = energy_spectrum([VorticityField.zeros(4)] * 3)
        assert np.all(est.e_k == 0)

    def test_empty_is_error(self):
        with pytest.raises(ValueError):
            energy_spectrum([])

    def test_mixed_truncations(self):
        with pytest.raises(FieldError):
            energy_spectrum([VorticityField.zeros(3), VorticityField.zeros(4)])

    @given(st.integers(0, 2 ** 32))
    def test_quadratic_and_enstrophy_identity(self, seed):
        f = random_field(seed)
        e1 = energy_spectrum([f])
        e2 = energy_spectrum([f.scaled(2.0)])
        assert np.allclose(e2.e_k, 4 * e1.e_k, rtol=1e-14)
        assert 0.5 * np.sum(e1.k * e1.e_k) == pytest.approx(enstrophy(f), rel=1e-13)

    def test_angular_form(self):
        est = energy_spectrum([VorticityField.from_modes(4, {(1, 0): 1.0})])
        # shell [1/2, 3/2) holds eight modes with total |w|^2 = 2: mean 1/4, times 2 pi / k
        assert est.mode_count[0] == 8
        assert est.angular[0] == pytest.approx(math.pi / 2)

    def test_shell_counts(self):
        est = energy_spectrum([VorticityField.zeros(3)])
        g = lattice_grids(3)
        assert est.mode_count.sum() == g.active.sum()


class TestVelocity:
    def test_examples(self):
        u = velocity_from_vorticity(VorticityField.from_modes(4, {(1, 0): 1.0}))
        assert u[0, 5, 4] == 0 and u[1, 5, 4] == 1j
        u = velocity_from_vorticity(VorticityField.from_modes(4, {(0, 2): 4.0}))
        assert u[0, 4, 6] == -2j and u[1, 4, 6] == 0

    @given(st.integers(0, 2 ** 32))
    def test_divergence_free_and_curl(self, seed):
        f = random_field(seed)
        g = lattice_grids(f.k_max)
        u = velocity_from_vorticity(f)
        assert np.max(np.abs(g.kx * u[0] + g.ky * u[1])) <= 1e-15 * np.max(np.abs(u))
        # curl with d_j -> -i k_j
        curl = -1j * g.kx * u[1] + 1j * g.ky * u[0]
        assert np.allclose(curl, f.amplitudes, atol=1e-14)


def test_saturating_profile_on_boundary():
    for D in (1.5, 2.0, 3.0, 5.0):
        p = P.with_D(D)
        f = saturating_profile(16, p)
        phi_gap = enstrophy(f) / D ** 2
        norm_gap = d_norm(f, p) / D ** p.alpha
        assert max(phi_gap, norm_gap) == pytest.approx(1.0, rel=1e-12)
        assert min(phi_gap, norm_gap) <= 1.0 + 1e-12
