"""Time stepping for the stochastic vorticity equation.

Production steps use an exponential integrator: the viscous factor
``exp(-|k|^2 h)`` is applied exactly, the transport term is weighted by the
usual phi-functions, and the forcing enters through the exact OU increment.
The certified path solves the mild (integral) form on a short interval by
Picard iteration and checks contraction in the time-weighted analyticity
norm ``sup_t ||v(t)||_{D(t)}`` with ``D(t) = exp(-t/2) D``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import rng as rngmod
from .forcing import NoiseSpec, OUState, noise_from_normals, ou_decay, sample_ou_path
from .lattice import (
    NormParams,
    VorticityField,
    _amps,
    enstrophy,
    hermitian_defect,
    lattice_grids,
    log_d_norm,
    minimal_D,
    region_mask,
    symmetrize,
)
from .nonlinear import quadratic_invariants, spectral_operator

log = logging.getLogger(__name__)

MODES = ("production", "certified")


class NumericalError(RuntimeError):
    """Non-finite values appeared during time stepping."""


class CertificationError(RuntimeError):
    """The Picard map failed to certify a solution on the interval."""

    def __init__(self, message: str, ratio: float | None = None, iterations: int = 0):
        super().__init__(message)
        self.ratio = ratio
        self.iterations = iterations


@dataclass(frozen=True)
class StepParams:
    h: float = 0.01
    delta: float = 0.05
    tau_mode: str = "production"
    picard_max_iter: int = 50
    picard_tol: float = 1e-13
    order: int = 2
    nonlinear: bool = True
    picard_grid: int = 64

    def __post_init__(self):
        if not (self.h > 0 and self.delta > 0 and self.picard_tol > 0):
            raise ValueError("h, delta and picard_tol must be positive")
        if self.tau_mode not in MODES:
            raise ValueError(f"tau_mode must be one of {MODES}")
        if self.order not in (1, 2):
            raise ValueError("order must be 1 (exponential Euler) or 2 (Heun)")
        if self.picard_max_iter < 1 or self.picard_grid < 1:
            raise ValueError("picard_max_iter and picard_grid must be positive")


@dataclass
class PicardCertificate:
    tau: float
    iterations: int
    distances: list[float]
    ratios: list[float]
    ball_radius: float
    lemma3_norm_ok: np.ndarray
    lemma3_enstrophy_ok: np.ndarray
    lemma4_ok: bool
    noise_in_A_D: bool

    @property
    def max_ratio(self) -> float:
        return max(self.ratios, default=0.0)

    @property
    def lemma3_ok(self) -> bool:
        return bool(np.all(self.lemma3_norm_ok) and np.all(self.lemma3_enstrophy_ok))


@dataclass
class Trajectory:
    times: np.ndarray
    fields: list[VorticityField]
    observables: dict[str, np.ndarray] = field(default_factory=dict)
    certificates: list[PicardCertificate] = field(default_factory=list)

    @property
    def certificate(self) -> PicardCertificate | None:
        return self.certificates[0] if self.certificates else None


def phi1(x: np.ndarray) -> np.ndarray:
    """``(1 - exp(-x)) / x`` with the limit 1 at ``x = 0``."""
    x = np.asarray(x, dtype=float)
    safe = np.where(x > 0, x, 1.0)
    return np.where(x > 0, -np.expm1(-safe) / safe, 1.0)


def phi2(x: np.ndarray) -> np.ndarray:
    """``(exp(-x) - 1 + x) / x^2`` with a series below ``x = 1e-2``."""
    x = np.asarray(x, dtype=float)
    small = x < 1e-2
    safe = np.where(small, 1.0, x)
    direct = (np.expm1(-safe) + safe) / (safe * safe)
    series = 0.5 - x / 6 + x ** 2 / 24 - x ** 3 / 120 + x ** 4 / 720 - x ** 5 / 5040
    return np.where(small, series, direct)


def certified_timestep(D: float, alpha: float, delta: float) -> float:
    """Interval length ``delta * D^(-4 alpha)`` of the contraction argument."""
    if not D > 0:
        raise ValueError("D must be positive")
    return delta * D ** (-4.0 * alpha)


class ExponentialStepper:
    """Batched exponential-integrator step for one truncation and step size."""

    def __init__(self, k_max: int, h: float, order: int = 2, nonlinear: bool = True):
        if not h > 0:
            raise ValueError("h must be positive")
        self.k_max, self.h, self.order, self.nonlinear = k_max, h, order, nonlinear
        g = lattice_grids(k_max)
        x = g.k2 * h
        self.decay = np.where(g.active, np.exp(-x), 0.0)
        self.w1 = np.where(g.active, h * phi1(x), 0.0)
        self.w2 = np.where(g.active, h * phi2(x), 0.0)
        self.op = spectral_operator(k_max)

    def step(self, a: np.ndarray, dz: np.ndarray | None = None) -> np.ndarray:
        """Advance amplitudes ``a`` by one step; ``dz`` is the OU increment."""
        out = self.decay * a
        if dz is not None:
            out = out + dz
        if self.nonlinear:
            n0 = self.op(a)
            out = out + self.w1 * n0
            if self.order == 2:
                out = out + self.w2 * (self.op(out) - n0)
        if log.isEnabledFor(logging.DEBUG):
            log.debug("hermitian drift before projection: %.3e", hermitian_defect(out))
        return symmetrize(out)


def step_exponential(field_or_array, noise: tuple[OUState, OUState] | None, h: float,
                     spec: NoiseSpec | None = None, order: int = 2,
                     nonlinear: bool = True) -> VorticityField:
    """One exponential-integrator step.

    ``noise`` is the OU state at the two ends of the step; the forcing
    contribution is ``z(t+h) - exp(-|k|^2 h) z(t)``.  ``None`` means no noise.
    """
    a = np.asarray(_amps(field_or_array), dtype=np.complex128)
    K = (a.shape[-1] - 1) // 2
    dz = None
    if noise is not None:
        z0, z1 = noise
        dz = z1.z - ou_decay(K, h) * z0.z
    out = ExponentialStepper(K, h, order, nonlinear).step(a, dz)
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite amplitudes after exponential step")
    return VorticityField.from_array(out)


def _picard_weights(k_max: int, dt: float):
    g = lattice_grids(k_max)
    x = g.k2 * dt
    decay = np.where(g.active, np.exp(-x), 0.0)
    w_new = np.where(g.active, dt * phi2(x), 0.0)
    w_old = np.where(g.active, dt * (phi1(x) - phi2(x)), 0.0)
    return decay, w_old, w_new


def duhamel_integral(b: np.ndarray, k_max: int, dt: float) -> np.ndarray:
    """``int_0^t exp((s-t)|k|^2) B(s) ds`` on a uniform grid.

    ``b`` holds ``B`` at the grid times along axis 0; between nodes it is
    taken piecewise linear and integrated exactly against the exponential.
    """
    decay, w_old, w_new = _picard_weights(k_max, dt)
    out = np.zeros_like(b)
    for j in range(1, b.shape[0]):
        out[j] = decay * out[j - 1] + w_old * b[j - 1] + w_new * b[j]
    return out


def _xd_sup(diff: np.ndarray, r: float, alpha: float, D_t: np.ndarray) -> float:
    return float(np.exp(np.max(log_d_norm(diff, r, alpha, D_t))))


def picard_solve(omega0, ou_path: np.ndarray, params: NormParams, step: StepParams) -> Trajectory:
    """Certified solution of the integral equation on ``[0, tau]``.

    ``ou_path`` holds ``z`` at the ``step.picard_grid + 1`` uniform grid times
    of ``[0, tau]`` with ``tau = delta D^(-4 alpha)``; ``z(0)`` must be zero.
    Iterates ``v -> w0 + N(v)`` from the free evolution ``w0`` until the
    time-weighted norm distance between iterates drops below
    ``step.picard_tol``.  Raises :class:`CertificationError` if the observed
    contraction ratio reaches 1, an iterate leaves the unit ball around
    ``w0``, or the iteration budget runs out.
    """
    a0 = np.asarray(_amps(omega0), dtype=np.complex128)
    K = (a0.shape[-1] - 1) // 2
    r, alpha, D = params.r, params.alpha, params.D
    n = step.picard_grid
    tau = certified_timestep(D, alpha, step.delta)
    z = np.asarray(ou_path, dtype=np.complex128)
    if z.shape != (n + 1,) + a0.shape:
        raise ValueError(f"ou_path must have shape {(n + 1,) + a0.shape}, got {z.shape}")
    if np.any(z[0] != 0):
        raise ValueError("ou_path must start at z(0) = 0")

    if log_d_norm(a0, r, alpha, D) > alpha * math.log(D) or enstrophy(a0) > 1.5 * D * D:
        raise CertificationError("initial data violates ||w(0)||_D <= D^alpha, enstrophy <= 3/2 D^2")

    g = lattice_grids(K)
    dt = tau / n
    times = dt * np.arange(n + 1)
    D_t = D * np.exp(-times / 2)
    free = np.exp(-g.k2[None] * times[:, None, None]) * a0 * g.active + z
    op = spectral_operator(K)

    v = free
    distances: list[float] = []
    ratios: list[float] = []
    ball = 0.0
    converged = False
    it = 0
    for it in range(1, step.picard_max_iter + 1):
        v_new = symmetrize(free + (duhamel_integral(op(v), K, dt) if step.nonlinear else 0.0))
        if not np.all(np.isfinite(v_new)):
            raise NumericalError("non-finite Picard iterate")
        dist = _xd_sup(v_new - v, r, alpha, D_t)
        ball = max(ball, _xd_sup(v_new - free, r, alpha, D_t))
        if ball > 1.0:
            raise CertificationError(f"iterate left the unit ball (radius {ball:.3e})", iterations=it)
        if distances and distances[-1] > 0:
            ratio = dist / distances[-1]
            ratios.append(ratio)
            if ratio >= 1.0:
                raise CertificationError(f"Picard map not contracting (ratio {ratio:.3e})",
                                         ratio=ratio, iterations=it)
        distances.append(dist)
        v = v_new
        if dist <= step.picard_tol:
            converged = True
            break
    if not converged:
        raise CertificationError(f"no convergence in {step.picard_max_iter} iterations",
                                 ratio=max(ratios, default=None), iterations=it)

    sqrt2D = math.sqrt(2.0) * D_t
    norm_ok = log_d_norm(v, r, alpha, sqrt2D) <= alpha * np.log(sqrt2D)
    phi = enstrophy(v)
    ens_ok = phi <= 2.0 * D_t ** 2
    lemma4 = bool(log_d_norm(v[-1], r, alpha, D_t[-1]) <= alpha * math.log(D_t[-1]))
    bound = math.sqrt(tau) * D * np.exp(-g.kabs / 4)
    in_A_D = bool(np.all(np.abs(z) <= bound))
    cert = PicardCertificate(tau, it, distances, ratios, ball, norm_ok, ens_ok, lemma4, in_A_D)
    fields = [VorticityField.from_array(x, resymmetrize=True) for x in v]
    obs = {"Phi": phi, "d_norm": np.exp(log_d_norm(v, r, alpha, D_t))}
    return Trajectory(times, fields, obs, [cert])


def _record(a: np.ndarray, t: float, p: NormParams, D_grid: Sequence[float], stepper=None,
            diagnostics: bool = True) -> dict:
    phi = enstrophy(a)
    if not diagnostics:
        return {"t": t, "Phi": phi}
    rec = {
        "t": t,
        "Phi": phi,
        "minimal_D": minimal_D(a, p.r, p.alpha),
        "in_U_prop": region_mask(a, p.r, p.alpha, math.sqrt(2 * math.exp(-t)) * p.D),
    }
    for D in D_grid:
        rec[f"in_U_{D:g}"] = region_mask(a, p.r, p.alpha, D)
        rec[f"d_norm_{D:g}"] = float(np.exp(log_d_norm(a, p.r, p.alpha, D)))
    if stepper is not None and stepper.nonlinear:
        flux, _ = quadratic_invariants(a, stepper.op(a))
        rec["enstrophy_flux_residual"] = abs(flux) / phi ** 1.5 if phi > 0 else 0.0
    else:
        rec["enstrophy_flux_residual"] = 0.0
    return rec


def _n_steps(T: float, h: float) -> int:
    n = int(round(T / h))
    if n < 1 or abs(n * h - T) > 1e-9 * max(T, 1.0):
        raise ValueError(f"T={T} is not an integer multiple of h={h}")
    return n


def evolve(omega0, T: float, spec: NoiseSpec, p: NormParams, step: StepParams, seed: int = 0,
           *, trajectory: int = 0, sample_every: int = 1, D_grid: Sequence[float] = (),
           checkpoint=None, checkpoint_every: int = 0, diagnostics: bool = True) -> Trajectory:
    """Advance one trajectory to time ``T`` and record observables.

    Production mode draws the forcing of step ``j`` from the stream
    ``(seed, trajectory, j)``; certified mode chains :func:`picard_solve`
    over intervals of length ``tau`` and draws interval ``n`` from
    ``(seed, trajectory, n)``.  ``checkpoint(step_index, field)`` is called
    every ``checkpoint_every`` steps when given.  With ``diagnostics=False``
    only ``Phi`` is recorded, which skips the per-sample norm bisection.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    a = np.array(_amps(omega0), dtype=np.complex128)
    K = (a.shape[-1] - 1) // 2
    if spec.k_max != K:
        raise ValueError("noise spec and initial field use different truncations")
    records: list[dict] = []
    fields: list[VorticityField] = []
    certs: list[PicardCertificate] = []

    def sample(t, arr, stepper=None):
        records.append(_record(arr, t, p, D_grid, stepper, diagnostics))
        fields.append(VorticityField.from_array(arr, resymmetrize=True))

    if step.tau_mode == "production":
        n_steps = _n_steps(T, step.h)
        h = T / n_steps
        stepper = ExponentialStepper(K, h, step.order, step.nonlinear)
        n_forced = len(spec.forced_half)
        sample(0.0, a, stepper)
        for j in range(n_steps):
            dz = None
            if n_forced:
                dz = noise_from_normals(spec, h, rngmod.normals(seed, trajectory, j, (2, n_forced)))
            a = stepper.step(a, dz)
            if not np.all(np.isfinite(a)):
                raise NumericalError(f"non-finite amplitudes at step {j + 1} (t={(j + 1) * h:.6g})")
            if checkpoint is not None and checkpoint_every and (j + 1) % checkpoint_every == 0:
                checkpoint(j + 1, VorticityField.from_array(a, resymmetrize=True))
            if (j + 1) % sample_every == 0 or j + 1 == n_steps:
                sample((j + 1) * h, a, stepper)
    else:
        tau = certified_timestep(p.D, p.alpha, step.delta)
        n_int = max(1, math.ceil(T / tau - 1e-9))
        sample(0.0, a)
        for i in range(n_int):
            t0 = i * tau
            path = sample_ou_path(spec, tau, step.picard_grid, seed, trajectory, step=i)
            traj = picard_solve(a, path, p.with_D(p.D * math.exp(-t0 / 2)), step)
            certs.extend(traj.certificates)
            a = np.array(traj.fields[-1].amplitudes)
            if checkpoint is not None and checkpoint_every and (i + 1) % checkpoint_every == 0:
                checkpoint(i + 1, traj.fields[-1])
            if (i + 1) % sample_every == 0 or i + 1 == n_int:
                sample((i + 1) * tau, a)

    times = np.array([rec["t"] for rec in records])
    obs = {key: np.array([rec[key] for rec in records]) for key in records[0] if key != "t"}
    return Trajectory(times, fields, obs, certs)
