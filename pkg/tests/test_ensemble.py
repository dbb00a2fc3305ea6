import numpy as np
import pytest

from stochns2d.ensemble import run_ensemble
from stochns2d.forcing import NoiseSpec
from stochns2d.integrator import ExponentialStepper, NumericalError
from stochns2d.lattice import VorticityField, enstrophy

K = 5
SPEC = NoiseSpec.shell(K, 4.0)


def _run(**kw):
    args = dict(n_steps=8, n_traj=23, seed=3, record=lambda j, t, a: {"a": a.copy(), "phi": enstrophy(a)},
                record_steps=[0, 4, 8])
    args.update(kw)
    return run_ensemble(ExponentialStepper(K, 0.05), SPEC, np.zeros((11, 11), complex), **args)


def test_thread_and_chunk_independence():
    base = _run(chunk_size=5)
    for threads, chunk in [(1, 23), (3, 5), (4, 7), (2, 1)]:
        other = _run(threads=threads, chunk_size=chunk)
        for key in base:
            assert np.array_equal(base[key], other[key])


def test_shapes_and_times():
    res = _run()
    assert res["a"].shape == (23, 3, 11, 11)
    assert res["phi"].shape == (23, 3)
    assert np.allclose(res["times"], [0, 0.2, 0.4])
    assert np.all(res["phi"][:, 0] == 0)


def test_trajectories_differ_and_seed_matters():
    res = _run()
    assert not np.array_equal(res["a"][0, -1], res["a"][1, -1])
    assert not np.array_equal(res["a"][:, -1], _run(seed=4)["a"][:, -1])


def test_prefix_stability():
    # trajectory i does not depend on how many others run alongside it
    small = _run(n_traj=5)
    big = _run()
    assert np.array_equal(small["a"], big["a"][:5])


def test_callable_initial_data():
    f = [VorticityField.random(K, np.random.default_rng(i), enstrophy_target=1.0).amplitudes for i in range(6)]
    res = run_ensemble(ExponentialStepper(K, 0.05), NoiseSpec.zero(K), lambda idx: np.stack([f[i] for i in idx]),
                       n_steps=1, n_traj=6, seed=0, record=lambda j, t, a: {"a": a.copy()}, record_steps=[0],
                       chunk_size=4)
    assert np.array_equal(res["a"][:, 0], np.stack(f))


def test_errors():
    with pytest.raises(ValueError):
        _run(n_traj=0)
    with pytest.raises(ValueError):
        _run(record_steps=[9])
    with pytest.raises(ValueError):
        _run(seed=-1)
    with pytest.raises(ValueError):
        run_ensemble(ExponentialStepper(4, 0.1), SPEC, 0, n_steps=1, n_traj=1, seed=0,
                     record=lambda j, t, a: {}, record_steps=[1])
    with pytest.raises(ValueError):
        _run(record_steps=[])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_blowup_reports_trajectories():
    big = VorticityField.from_modes(K, {(1, 0): 1e6, (1, 2): 1e6j}).amplitudes
    with pytest.raises(NumericalError, match="trajectories"):
        run_ensemble(ExponentialStepper(K, 0.5), NoiseSpec.zero(K), big, n_steps=40, n_traj=2, seed=0,
                     record=lambda j, t, a: {"phi": enstrophy(a)}, record_steps=[40])
