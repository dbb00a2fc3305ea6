import math

import numpy as np
import pytest

from stochns2d.forcing import (A_D_bound, NoiseSpec, OUState, PhysicalParams, A_D_probability, dump_noise_spec,
                               event_A_D_indicator, load_noise_spec, nondimensionalize, noise_from_normals, ou_step,
                               ou_sup_tail_estimate, reynolds, sample_ou_path, stationary_variance)
from stochns2d.lattice import FieldError, lattice_grids, reflect
from stochns2d import rng as rngmod


def four_mode(k_max=4, value=1.0):
    return NoiseSpec.from_modes(k_max, {(1, 0): value, (0, 1): value})


class TestNoiseSpec:
    def test_reynolds(self):
        assert reynolds(NoiseSpec.zero(4)) == 0
        assert reynolds(four_mode()) == 2.0
        assert four_mode().scaled(3.0).R == 6.0

    def test_validation(self):
        g = np.zeros((9, 9))
        g[5, 4] = 1.0
        with pytest.raises(FieldError):
            NoiseSpec(four_mode().truncation, g)  # not symmetric
        with pytest.raises(FieldError):
            NoiseSpec.from_modes(4, {(1, 0): -1.0})
        with pytest.raises(FieldError):
            NoiseSpec.from_modes(4, {(1, 0): 1.0, (-1, 0): 2.0})
        with pytest.raises(FieldError):
            NoiseSpec.from_modes(4, {(0, 0): 1.0})

    def test_decay_bound(self):
        # a lone high mode breaks gamma_k <= c R exp(-|k|)
        with pytest.raises(FieldError, match="decay"):
            NoiseSpec.from_modes(8, {(6, 0): 1.0})
        NoiseSpec.from_modes(8, {(6, 0): 1.0}, c_gamma=1e4)

    def test_constructors(self):
        s = NoiseSpec.shell(8, 10.0)
        assert s.R == pytest.approx(10.0)
        assert len(s.forced_half) == 4
        e = NoiseSpec.exponential(8, 5.0)
        assert e.R == pytest.approx(5.0)

    def test_forced_half_order(self):
        s = four_mode()
        K = s.k_max
        assert [tuple(ix - K for ix in row) for row in s.forced_half] == [(0, 1), (1, 0)]


class TestNondimensionalize:
    def test_identity_scaling(self):
        p = PhysicalParams.with_modes(1.0, 1.0, 3.0, 4, {(1, 0): 0.25, (0, 1): 0.25})
        assert np.allclose(nondimensionalize(p).gamma, 3.0 * p.gamma_shape)

    def test_example(self):
        p = PhysicalParams.with_modes(2.0, 1.0, 16.0, 4, {(1, 0): 0.5})
        spec = nondimensionalize(p)
        assert spec.gamma[5, 4] == 1.0 and spec.gamma[3, 4] == 1.0
        assert spec.R == 1.0

    def test_L_scaling_and_R(self):
        p1 = PhysicalParams.with_modes(1.5, 1.0, 2.0, 4, {(1, 0): 0.5})
        p2 = PhysicalParams.with_modes(1.5, 2.0, 2.0, 4, {(1, 0): 0.5})
        assert np.allclose(nondimensionalize(p2).gamma, 4 * nondimensionalize(p1).gamma)
        assert nondimensionalize(p1).R == pytest.approx(0.5 * 1.0 / 1.5 ** 3 * 2.0, rel=1e-15)

    def test_validation(self):
        with pytest.raises(FieldError):
            PhysicalParams.with_modes(0.0, 1.0, 1.0, 4, {(1, 0): 0.5})
        with pytest.raises(FieldError):
            PhysicalParams.with_modes(1.0, 1.0, 1.0, 4, {(1, 0): 0.3})


class TestOU:
    def test_zero_noise_stays_zero(self):
        s = NoiseSpec.zero(4)
        st = OUState.zero(4)
        for i in range(5):
            st = ou_step(st, s, 0.1, rngmod.stream(0, 0, i))
        assert np.all(st.z == 0) and st.t == pytest.approx(0.5)

    def test_hermitian_increments(self):
        s = NoiseSpec.shell(6, 3.0, k_force=3.0)
        xi = rngmod.normals(1, 0, 0, (2, len(s.forced_half)))
        dz = noise_from_normals(s, 0.1, xi)
        assert np.array_equal(dz, reflect(dz))

    def test_closed_form_variance_mc(self):
        # E|z_(1,0)(0.5)|^2 = (1 - e^-1)/2 ~ 0.31606 with gamma = 1, from 1e5 exact one-step samples
        s = NoiseSpec.from_modes(2, {(1, 0): 1.0})
        n = 100_000
        xi = np.random.Generator(np.random.Philox(5)).standard_normal((n, 2, 1))
        z = noise_from_normals(s, 0.5, xi)[:, 3, 2]
        m2 = np.abs(z) ** 2
        expected = (1 - math.exp(-1)) / 2
        assert expected == pytest.approx(0.31606, abs=1e-5)
        assert abs(m2.mean() - expected) < 3 * m2.std() / math.sqrt(n)

    def test_composition_matches_single_step(self):
        s = NoiseSpec.from_modes(2, {(1, 1): 1.0})
        n = 100_000
        gen = np.random.Generator(np.random.Philox(9))
        z1 = noise_from_normals(s, 0.3, gen.standard_normal((n, 2, 1)))
        z2 = np.exp(-2 * 0.2) * z1 + noise_from_normals(s, 0.2, gen.standard_normal((n, 2, 1)))
        m2 = np.abs(z2[:, 3, 3]) ** 2
        expected = (1 - math.exp(-2 * 2 * 0.5)) / (2 * 2)
        assert abs(m2.mean() - expected) < 4 * m2.std() / math.sqrt(n)

    def test_stationary_limit(self):
        s = NoiseSpec.from_modes(2, {(1, 0): 1.0})
        assert stationary_variance(s)[3, 2] == 0.5
        n, steps = 20_000, 40
        z = np.zeros(n, complex)
        for j in range(steps):
            xi = np.random.Generator(np.random.Philox([4, j])).standard_normal((n, 2, 1))
            z = math.exp(-0.25) * z + noise_from_normals(s, 0.25, xi)[:, 3, 2]
        m2 = np.abs(z) ** 2
        assert abs(m2.mean() - 0.5) < 4 * m2.std() / math.sqrt(n)

    def test_sample_path_deterministic(self):
        s = NoiseSpec.shell(4, 1.0)
        a = sample_ou_path(s, 0.01, 16, seed=3, trajectory=2, step=5)
        b = sample_ou_path(s, 0.01, 16, seed=3, trajectory=2, step=5)
        assert a.shape == (17, 9, 9) and np.array_equal(a, b)
        assert np.all(a[0] == 0)
        assert not np.array_equal(a, sample_ou_path(s, 0.01, 16, seed=3, trajectory=2, step=6))


class TestOUSup:
    def test_B_zero_and_unforced(self):
        s = NoiseSpec.from_modes(4, {(1, 0): 1.0})
        assert ou_sup_tail_estimate(s, (1, 0), 0.01, 0.0, 200, 100, 1).p_hat == 1.0
        assert ou_sup_tail_estimate(s, (0, 1), 0.01, 1.0, 200, 100, 1).p_hat == 0.0

    def test_errors(self):
        s = NoiseSpec.from_modes(4, {(1, 0): 1.0})
        with pytest.raises(ValueError):
            ou_sup_tail_estimate(s, (1, 0), 0.01, 1.0, 0, 100, 1)
        with pytest.raises(ValueError):
            ou_sup_tail_estimate(s, (1, 0), 0.01, 1.0, 10, 50, 1)
        with pytest.raises(FieldError):
            ou_sup_tail_estimate(s, (9, 0), 0.01, 1.0, 10, 100, 1)

    def test_decreasing_in_B(self):
        s = NoiseSpec.from_modes(4, {(1, 0): 1.0})
        res = ou_sup_tail_estimate(s, (1, 0), 0.01, [0.5, 1.0, 1.5, 2.0], 5000, 100, 2)
        p = [r.p_hat for r in res]
        assert all(a > b for a, b in zip(p, p[1:]))
        assert all(r.ci95[0] <= r.p_hat <= r.ci95[1] for r in res)


class TestAD:
    def test_zero_path(self):
        path = np.zeros((5, 9, 9), complex)
        assert event_A_D_indicator(path, 1.0, 0.01)

    def test_single_violation(self):
        path = np.zeros((5, 9, 9), complex)
        bound = A_D_bound(4, 1.0, 0.01)
        path[3, 5, 4] = path[3, 3, 4] = 1.0001 * bound[5, 4]
        assert not event_A_D_indicator(path, 1.0, 0.01)
        assert event_A_D_indicator(path, 1.001, 0.01)

    def test_state_sequence_input(self):
        states = [OUState.zero(4), OUState.zero(4)]
        assert event_A_D_indicator(states, 1.0, 0.01)

    def test_probability_increases_with_D(self):
        s = NoiseSpec.shell(4, 1.0)
        res = A_D_probability(s, [0.5, 1.0, 2.0, 4.0], 0.01, 400, 100, 3)
        p = [r.p_hat for r in res]
        assert all(a <= b for a, b in zip(p, p[1:]))
        assert p[0] < p[-1] and p[-1] > 0.95


def test_noise_file_round_trip(tmp_path):
    s = NoiseSpec.exponential(5, 2.0, c_gamma=12.0)
    p = tmp_path / "noise.ini"
    p.write_text(dump_noise_spec(s))
    t = load_noise_spec(p)
    assert t.c_gamma == 12.0 and np.array_equal(t.gamma, s.gamma)


def test_noise_file_rejects_unknown(tmp_path):
    p = tmp_path / "noise.ini"
    p.write_text("[noise]\nk_max = 4\nbogus = 1\n")
    with pytest.raises(FieldError):
        load_noise_spec(p)
    p.write_text("[noise]\nk_max = 4\n[extra]\n")
    with pytest.raises(FieldError):
        load_noise_spec(p)


def test_ou_estimators_thread_independent():
    spec = NoiseSpec.exponential(4, 5.0)
    a = ou_sup_tail_estimate(spec, (1, 0), 0.01, [1.0, 2.0], 600, 100, 3)
    b = ou_sup_tail_estimate(spec, (1, 0), 0.01, [1.0, 2.0], 600, 100, 3, threads=3)
    assert a == b
    c = A_D_probability(spec, [1.0, 3.0], 0.01, 300, 100, 2)
    d = A_D_probability(spec, [1.0, 3.0], 0.01, 300, 100, 2, threads=2)
    assert c == d
