"""Vectorised ensembles of independent trajectories.

Trajectories are integrated in fixed-size chunks.  Chunk boundaries depend
only on ``chunk_size`` and ``n_traj``, and every trajectory draws its forcing
from its own counter-based stream, so outputs are bit-identical for any
number of worker threads.  Results are merged in trajectory order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable

import numpy as np

from . import rng as rngmod
from .forcing import NoiseSpec, noise_from_normals
from .integrator import ExponentialStepper, NumericalError

DEFAULT_CHUNK = 250

Recorder = Callable[[int, float, np.ndarray], dict]


def _initial(init, idx: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if callable(init):
        a = np.asarray(init(idx), dtype=np.complex128)
    else:
        a = np.broadcast_to(np.asarray(init, dtype=np.complex128), (len(idx),) + shape).copy()
    if a.shape != (len(idx),) + shape:
        raise ValueError(f"initial data has shape {a.shape}, expected {(len(idx),) + shape}")
    return a


def run_ensemble(stepper: ExponentialStepper, spec: NoiseSpec, init, *, n_steps: int, n_traj: int,
                 seed: int, record: Recorder, record_steps: Iterable[int], threads: int = 1,
                 chunk_size: int = DEFAULT_CHUNK) -> dict[str, np.ndarray]:
    """Integrate ``n_traj`` trajectories for ``n_steps`` steps of ``stepper.h``.

    ``init`` is a single amplitude array shared by all trajectories or a
    callable mapping trajectory indices to a batch of arrays.  At each step
    in ``record_steps`` (0 is the initial state) ``record(step, t, batch)``
    returns per-trajectory arrays; the result stacks them as
    ``(n_traj, n_records, ...)`` and adds the sample ``times``.
    """
    if n_traj <= 0:
        raise ValueError("n_traj must be positive")
    if spec.k_max != stepper.k_max:
        raise ValueError("noise spec and stepper use different truncations")
    steps = sorted(set(int(s) for s in record_steps))
    if not steps or steps[0] < 0 or steps[-1] > n_steps:
        raise ValueError("record_steps must lie in [0, n_steps]")
    rngmod.check_seed(seed)
    shape = spec.truncation.shape
    n_forced = len(spec.forced_half)
    h = stepper.h
    want = set(steps)

    def run_chunk(lo: int) -> list[dict]:
        idx = np.arange(lo, min(lo + chunk_size, n_traj))
        a = _initial(init, idx, shape)
        out = []
        if 0 in want:
            out.append(record(0, 0.0, a))
        for j in range(n_steps):
            dz = None
            if n_forced:
                xi = np.stack([rngmod.normals(seed, i, j, (2, n_forced)) for i in idx])
                dz = noise_from_normals(spec, h, xi)
            a = stepper.step(a, dz)
            if not np.all(np.isfinite(a)):
                bad = idx[~np.all(np.isfinite(a), axis=(-2, -1))]
                raise NumericalError(
                    f"non-finite amplitudes at step {j + 1} (t={(j + 1) * h:.6g}) in trajectories {bad[:5].tolist()}")
            if j + 1 in want:
                out.append(record(j + 1, (j + 1) * h, a))
        return out

    starts = range(0, n_traj, chunk_size)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(run_chunk, starts))
    else:
        chunks = [run_chunk(lo) for lo in starts]

    result = {}
    for key in chunks[0][0]:
        per_chunk = [np.stack([rec[key] for rec in recs], axis=1) for recs in chunks]
        result[key] = np.concatenate(per_chunk, axis=0)
    result["times"] = np.array(steps, dtype=float) * h
    return result
