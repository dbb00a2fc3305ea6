"""Noise covariance, Reynolds number and exact Ornstein-Uhlenbeck sampling.

Each forced mode ``z_k`` solves ``dz = -|k|^2 z dt + df_k`` with
``E|f_k(t)|^2 = gamma_k t``.  Updates are exact in distribution: over a step
``h`` the mode decays by ``exp(-|k|^2 h)`` and picks up a complex Gaussian of
variance ``gamma_k (1 - exp(-2|k|^2 h)) / (2|k|^2)``.  Only the half lattice
is sampled; the other half is the complex conjugate, so symmetry is exact.
"""

from __future__ import annotations

import configparser
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import rng as rngmod
from .lattice import FieldError, Truncation, lattice_grids
from .stats import EnsembleResult, digest

C_GAMMA_DEFAULT = 10.0


@dataclass(frozen=True)
class NoiseSpec:
    """Forcing intensities ``gamma_k`` on a truncated lattice."""

    truncation: Truncation
    gamma: np.ndarray = field(repr=False)
    c_gamma: float = C_GAMMA_DEFAULT

    def __post_init__(self):
        g = self.truncation.grids
        gam = np.array(self.gamma, dtype=float)
        if gam.shape != self.truncation.shape:
            raise FieldError(f"gamma must have shape {self.truncation.shape}, got {gam.shape}")
        if not np.all(np.isfinite(gam)) or np.any(gam < 0):
            raise FieldError("gamma must be finite and nonnegative")
        if np.any(gam[~g.active] != 0):
            raise FieldError("gamma must vanish at k = 0 and outside the truncation")
        if not np.array_equal(gam, gam[::-1, ::-1]):
            raise FieldError("gamma must satisfy gamma_k = gamma_-k")
        R = 0.5 * float(gam.sum())
        bound = self.c_gamma * R * np.exp(-g.kabs)
        bad = gam > bound * (1 + 1e-12)
        if np.any(bad):
            kx, ky = np.argwhere(bad)[0] - self.truncation.k_max
            raise FieldError(
                f"gamma violates the decay bound gamma_k <= {self.c_gamma} R exp(-|k|) at k=({kx}, {ky})")
        gam.setflags(write=False)
        object.__setattr__(self, "gamma", gam)

    @property
    def k_max(self) -> int:
        return self.truncation.k_max

    @property
    def R(self) -> float:
        return reynolds(self)

    def scaled(self, s: float) -> "NoiseSpec":
        return NoiseSpec(self.truncation, self.gamma * s, self.c_gamma)

    @property
    def forced_half(self) -> np.ndarray:
        """``(n, 2)`` lattice indices of forced half-lattice modes, lexicographic in k."""
        g = self.truncation.grids
        return np.argwhere(g.half & (self.gamma > 0))

    @classmethod
    def zero(cls, k_max: int) -> "NoiseSpec":
        t = Truncation(k_max)
        return cls(t, np.zeros(t.shape))

    @classmethod
    def from_modes(cls, k_max: int, gamma: Mapping[tuple[int, int], float],
                   c_gamma: float = C_GAMMA_DEFAULT) -> "NoiseSpec":
        """Hermitian completion: giving ``gamma_k`` also sets ``gamma_-k``."""
        t = Truncation(k_max)
        gam = np.zeros(t.shape)
        for (kx, ky), v in gamma.items():
            if (kx, ky) == (0, 0) or kx * kx + ky * ky > k_max * k_max:
                raise FieldError(f"mode {(kx, ky)} is not an active mode")
            partner = gamma.get((-kx, -ky))
            if partner is not None and partner != v:
                raise FieldError(f"gamma at {(kx, ky)} and {(-kx, -ky)} differ")
            gam[kx + k_max, ky + k_max] = v
            gam[-kx + k_max, -ky + k_max] = v
        return cls(t, gam, c_gamma)

    @classmethod
    def shell(cls, k_max: int, R: float, k_force: float = 1.5,
              c_gamma: float = C_GAMMA_DEFAULT) -> "NoiseSpec":
        """Equal intensity on every mode with ``|k| <= k_force``, scaled to Reynolds number R."""
        g = lattice_grids(k_max)
        sel = g.active & (g.kabs <= k_force)
        if not sel.any():
            raise FieldError(f"no active modes with |k| <= {k_force}")
        gam = np.where(sel, 2.0 * R / sel.sum(), 0.0)
        return cls(Truncation(k_max), gam, c_gamma)

    @classmethod
    def exponential(cls, k_max: int, R: float, c_gamma: float = C_GAMMA_DEFAULT) -> "NoiseSpec":
        """``gamma_k ~ exp(-|k|)`` on every active mode, scaled to Reynolds number R."""
        g = lattice_grids(k_max)
        shape = np.where(g.active, np.exp(-g.kabs), 0.0)
        return cls(Truncation(k_max), shape * (2.0 * R / shape.sum()), c_gamma)


def reynolds(spec: NoiseSpec) -> float:
    """Half the total injection rate, ``R = sum_k gamma_k / 2``."""
    return 0.5 * float(np.sum(spec.gamma))


@dataclass(frozen=True)
class PhysicalParams:
    """Dimensional viscosity, box scale and vorticity-forcing strength.

    ``gamma_shape`` lives on the lattice and sums to one.
    """

    nu: float
    L: float
    Gamma0: float
    gamma_shape: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not (self.nu > 0 and self.L > 0):
            raise FieldError("nu and L must be positive")
        if self.Gamma0 < 0:
            raise FieldError("Gamma0 must be nonnegative")
        shape = np.asarray(self.gamma_shape, dtype=float)
        if not math.isclose(float(shape.sum()), 1.0, rel_tol=1e-12):
            raise FieldError(f"gamma_shape must sum to 1, got {shape.sum()}")

    @classmethod
    def with_modes(cls, nu: float, L: float, Gamma0: float, k_max: int,
                   shape: Mapping[tuple[int, int], float]) -> "PhysicalParams":
        return cls(nu, L, Gamma0, NoiseSpec.from_modes(k_max, shape, c_gamma=math.inf).gamma)


def nondimensionalize(p: PhysicalParams, c_gamma: float = C_GAMMA_DEFAULT) -> NoiseSpec:
    """Noise spec in units where viscosity and box size are one: ``gamma = L^2/nu^3 Gamma``."""
    scale = p.L ** 2 / p.nu ** 3 * p.Gamma0
    shape = np.asarray(p.gamma_shape, dtype=float)
    return NoiseSpec(Truncation((shape.shape[-1] - 1) // 2), scale * shape, c_gamma)


@dataclass(frozen=True)
class OUState:
    z: np.ndarray = field(repr=False)
    t: float = 0.0

    @classmethod
    def zero(cls, k_max: int) -> "OUState":
        return cls(np.zeros(Truncation(k_max).shape, dtype=np.complex128), 0.0)


def ou_decay(k_max: int, h: float) -> np.ndarray:
    g = lattice_grids(k_max)
    return np.where(g.active, np.exp(-g.k2 * h), 0.0)


def ou_variance(spec: NoiseSpec, h: float) -> np.ndarray:
    """``E|xi_k|^2 = gamma_k (1 - exp(-2|k|^2 h)) / (2|k|^2)`` for a step ``h``."""
    g = spec.truncation.grids
    return spec.gamma * -np.expm1(-2.0 * g.k2 * h) * 0.5 * g.inv_k2


def noise_from_normals(spec: NoiseSpec, h: float, xi: np.ndarray) -> np.ndarray:
    """Hermitian Gaussian increment built from standard normals.

    ``xi`` has shape ``(..., 2, n_forced)`` (real and imaginary parts, modes
    in ``spec.forced_half`` order).  Each part is scaled to variance
    ``sigma^2 / 2`` so that ``E|increment_k|^2 = sigma_k^2``.
    """
    idx = spec.forced_half
    sigma = np.sqrt(ou_variance(spec, h)[idx[:, 0], idx[:, 1]] * 0.5)
    lead = xi.shape[:-2]
    out = np.zeros(lead + spec.truncation.shape, dtype=np.complex128)
    vals = sigma * (xi[..., 0, :] + 1j * xi[..., 1, :])
    out[..., idx[:, 0], idx[:, 1]] = vals
    n = spec.truncation.size - 1
    out[..., n - idx[:, 0], n - idx[:, 1]] = np.conj(vals)
    return out


def ou_step(state: OUState, spec: NoiseSpec, h: float, rng_stream: np.random.Generator) -> OUState:
    """Exact OU update over ``h``; unforced modes only decay."""
    if not h > 0:
        raise ValueError("h must be positive")
    xi = rng_stream.standard_normal((2, len(spec.forced_half)))
    z = ou_decay(spec.k_max, h) * state.z + noise_from_normals(spec, h, xi)
    return OUState(z, state.t + h)


def sample_ou_path(spec: NoiseSpec, tau: float, n_substeps: int, seed: int,
                   trajectory: int = 0, step: int = 0) -> np.ndarray:
    """One OU path from ``z(0) = 0`` on a uniform grid of ``n_substeps + 1`` times.

    All substeps are drawn from the single stream block ``(seed, trajectory, step)``.
    """
    h = tau / n_substeps
    xi = rngmod.normals(seed, trajectory, step, (n_substeps, 2, len(spec.forced_half)))
    incr = noise_from_normals(spec, h, xi)
    decay = ou_decay(spec.k_max, h)
    path = np.zeros((n_substeps + 1,) + spec.truncation.shape, dtype=np.complex128)
    for j in range(n_substeps):
        path[j + 1] = decay * path[j] + incr[j]
    return path


def _map_chunks(fn, n_traj: int, threads: int, chunk_size: int = 250) -> np.ndarray:
    """``fn(idx)`` over fixed trajectory chunks, concatenated in trajectory order."""
    chunks = [np.arange(lo, min(lo + chunk_size, n_traj)) for lo in range(0, n_traj, chunk_size)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(fn, chunks))
    else:
        parts = [fn(idx) for idx in chunks]
    return np.concatenate(parts, axis=0)


def _mode_paths(spec: NoiseSpec, k: tuple[int, int], tau: float, n_traj: int,
                n_substeps: int, seed: int, threads: int = 1) -> np.ndarray:
    """``|z_k|`` on the grid for ``n_traj`` independent paths of one mode."""
    K = spec.k_max
    kx, ky = k
    if kx * kx + ky * ky == 0 or kx * kx + ky * ky > K * K:
        raise FieldError(f"mode {k} is not active")
    lam = float(kx * kx + ky * ky)
    gam = float(spec.gamma[kx + K, ky + K])
    h = tau / n_substeps
    sigma = math.sqrt(gam * -math.expm1(-2 * lam * h) / (2 * lam) * 0.5)
    decay = math.exp(-lam * h)

    def run(idx):
        xi = np.stack([rngmod.normals(seed, i, 0, (n_substeps, 2)) for i in idx])
        incr = sigma * (xi[..., 0] + 1j * xi[..., 1])
        z = np.zeros(len(idx), dtype=np.complex128)
        mags = np.zeros((len(idx), n_substeps + 1))
        for j in range(n_substeps):
            z = decay * z + incr[:, j]
            mags[:, j + 1] = np.abs(z)
        return mags

    return _map_chunks(run, n_traj, threads)


def ou_sup_tail_estimate(spec: NoiseSpec, k: tuple[int, int], tau: float, B,
                         n_traj: int, n_substeps: int, seed: int, threads: int = 1):
    """Empirical ``P(max_grid |z_k| >= B sqrt(tau))`` with exact 95% intervals.

    The grid maximum underestimates the continuous-time supremum, so
    ``p_hat`` is biased low.  ``B`` may be a scalar or a sequence; a sequence
    returns one result per value, all from the same paths.
    """
    if n_traj <= 0:
        raise ValueError("n_traj must be positive")
    if n_substeps < 100:
        raise ValueError("n_substeps must be at least 100")
    Bs = np.atleast_1d(np.asarray(B, dtype=float))
    sup = _mode_paths(spec, k, tau, n_traj, n_substeps, seed, threads).max(axis=1)
    cfg = digest({"kind": "ou_sup", "gamma": spec.gamma, "k": list(k), "tau": tau,
                  "n_substeps": n_substeps, "n_traj": n_traj})
    out = [EnsembleResult.from_hits(sup >= b * math.sqrt(tau), seed, cfg) for b in Bs]
    return out[0] if np.ndim(B) == 0 else out


def A_D_bound(k_max: int, D: float, tau: float) -> np.ndarray:
    g = lattice_grids(k_max)
    return math.sqrt(tau) * D * np.exp(-g.kabs / 4.0)


def event_A_D_indicator(ou_path, D: float, tau: float):
    """Whether every mode stays below ``sqrt(tau) D exp(-|k|/4)`` on the grid.

    ``ou_path`` is an array ``(..., n_grid, 2K+1, 2K+1)`` or a sequence of
    :class:`OUState`; leading axes are treated as independent paths.
    """
    if not isinstance(ou_path, np.ndarray):
        ou_path = np.stack([s.z for s in ou_path])
    K = (ou_path.shape[-1] - 1) // 2
    sup = np.max(np.abs(ou_path), axis=-3)
    ok = np.all(sup <= A_D_bound(K, D, tau), axis=(-2, -1))
    return bool(ok) if np.ndim(ok) == 0 else ok


def A_D_probability(spec: NoiseSpec, D_grid: Sequence[float], tau: float, n_traj: int,
                    n_substeps: int, seed: int, threads: int = 1) -> list[EnsembleResult]:
    """Monte Carlo estimate of ``P(A_D)`` for each ``D`` from one set of paths."""
    if n_traj <= 0:
        raise ValueError("n_traj must be positive")
    idx = spec.forced_half

    def run(traj):
        sups = np.empty((len(traj), len(idx)))
        for n, i in enumerate(traj):
            path = sample_ou_path(spec, tau, n_substeps, seed, int(i))
            sups[n] = np.abs(path[:, idx[:, 0], idx[:, 1]]).max(axis=0)
        return sups

    sups = _map_chunks(run, n_traj, threads)
    cfg = digest({"kind": "A_D", "gamma": spec.gamma, "tau": tau, "n_substeps": n_substeps,
                  "n_traj": n_traj})
    out = []
    for D in D_grid:
        bound = A_D_bound(spec.k_max, D, tau)[idx[:, 0], idx[:, 1]]
        out.append(EnsembleResult.from_hits(np.all(sups <= bound, axis=1), seed, cfg))
    return out


def load_noise_spec(path: str | Path) -> NoiseSpec:
    """Read a key-value noise file.

    ::

        [noise]
        k_max = 16
        c_gamma = 10
        [gamma]
        1,0 = 0.25
        0,1 = 0.25
    """
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp.read_string(Path(path).read_text())
    if set(cp.sections()) - {"noise", "gamma"}:
        raise FieldError(f"unknown sections in noise file: {set(cp.sections()) - {'noise', 'gamma'}}")
    noise = dict(cp["noise"]) if cp.has_section("noise") else {}
    unknown = set(noise) - {"k_max", "c_gamma"}
    if unknown:
        raise FieldError(f"unknown keys in [noise]: {sorted(unknown)}")
    k_max = int(noise["k_max"])
    c_gamma = float(noise.get("c_gamma", C_GAMMA_DEFAULT))
    modes = {}
    if cp.has_section("gamma"):
        for key, val in cp["gamma"].items():
            kx, ky = (int(s) for s in key.split(","))
            modes[(kx, ky)] = float(val)
    return NoiseSpec.from_modes(k_max, modes, c_gamma)


def dump_noise_spec(spec: NoiseSpec) -> str:
    lines = ["[noise]", f"k_max = {spec.k_max}", f"c_gamma = {spec.c_gamma!r}", "[gamma]"]
    K = spec.k_max
    for ix, iy in spec.forced_half:
        lines.append(f"{ix - K},{iy - K} = {float(spec.gamma[ix, iy])!r}")
    return "\n".join(lines) + "\n"


def stationary_variance(spec: NoiseSpec) -> np.ndarray:
    """``gamma_k / (2|k|^2)``, the long-time limit of ``E|z_k|^2``."""
    return 0.5 * spec.gamma * spec.truncation.grids.inv_k2
