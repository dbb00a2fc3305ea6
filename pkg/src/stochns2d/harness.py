"""Monte Carlo estimates of the long-time probabilistic bounds.

Every estimator runs a seeded ensemble through :func:`run_ensemble`, turns a
per-trajectory event indicator into an :class:`EnsembleResult` (exact
binomial interval) and never asserts any of the unspecified constants; the
checks built on top are shape checks (signs, monotonicity, scaling ratios)
plus the one inequality whose constants are explicit, the exponential
moment bound.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .ensemble import DEFAULT_CHUNK, run_ensemble
from .forcing import NoiseSpec, ou_variance
from .integrator import ExponentialStepper, _n_steps
from .lattice import (FieldError, NormParams, Truncation, VorticityField, decaying_profile, energy_spectrum,
                      enstrophy, in_region_U, lattice_grids, log_d_norm, region_mask, saturating_profile)
from .stats import EnsembleResult, digest, loglinear_slope

EXP_MOMENT_C = math.exp(-1.0) / 4.0

EVENT_PARAMS = {
    "enstrophy_tail": ("Phi0", "t", "D2"),
    "region_escape": ("D", "r", "alpha", "T"),
    "region_membership": ("D", "r", "alpha", "t"),
    "ou_sup": ("k", "tau", "B"),
    "time_avg_mode": ("k", "t", "T", "D", "r", "alpha"),
    "A_D": ("D", "tau"),
}


class HarnessError(ValueError):
    pass


@dataclass(frozen=True)
class EventSpec:
    kind: str
    params: dict

    def __post_init__(self):
        if self.kind not in EVENT_PARAMS:
            raise HarnessError(f"unknown event kind {self.kind!r}")
        missing = [k for k in EVENT_PARAMS[self.kind] if k not in self.params]
        if missing:
            raise HarnessError(f"event {self.kind} is missing parameters {missing}")

    def to_dict(self) -> dict:
        return {"event_kind": self.kind, "parameters": dict(self.params)}


@dataclass(frozen=True)
class Numerics:
    """Integration and scheduling settings shared by the estimators."""
    h: float = 0.05
    order: int = 2
    nonlinear: bool = True
    threads: int = 1
    chunk_size: int = DEFAULT_CHUNK

    def stepper(self, k_max: int) -> ExponentialStepper:
        return ExponentialStepper(k_max, self.h, self.order, self.nonlinear)

    def key(self) -> dict:
        # threads and chunking never change results, so they stay out of digests
        return {"h": self.h, "order": self.order, "nonlinear": self.nonlinear}


@dataclass(frozen=True)
class LadderSpec:
    a_hat: float
    R: float
    levels: int

    def __post_init__(self):
        if not self.a_hat > 0:
            raise HarnessError("a_hat must be positive")
        if not self.R > 0:
            raise HarnessError("ladder needs R > 0")
        if self.levels < 0:
            raise HarnessError("levels must be nonnegative")

    def D2(self, n: int) -> float:
        if not 0 <= n <= self.levels:
            raise HarnessError(f"ladder level {n} outside [0, {self.levels}]")
        return 2.0 / self.a_hat * self.R * (math.e / 2.0) ** n

    def D(self, n: int) -> float:
        return math.sqrt(self.D2(n))

    @staticmethod
    def pi(n: int) -> float:
        return math.exp(-(math.e / 2.0) ** n)


def _spec_key(spec: NoiseSpec) -> dict:
    return {"k_max": spec.k_max, "gamma": digest(spec.gamma), "c_gamma": spec.c_gamma}


def _check_n(n_traj: int) -> None:
    if n_traj <= 0:
        raise HarnessError("n_traj must be positive")


def _initial_array(spec: NoiseSpec, omega0, Phi0: float | None = None) -> np.ndarray:
    if omega0 is None:
        omega0 = decaying_profile(spec.k_max, Phi0 or 0.0)
    a = np.asarray(getattr(omega0, "amplitudes", omega0), dtype=np.complex128)
    if a.shape != spec.truncation.shape:
        raise FieldError("initial field and noise spec use different truncations")
    return a


def enstrophy_samples(Phi0: float, t: float, spec: NoiseSpec, n_traj: int, seed: int,
                      numerics: Numerics = Numerics(), omega0=None) -> np.ndarray:
    """``Phi(t)`` for each trajectory, started from a field of enstrophy ``Phi0``."""
    _check_n(n_traj)
    a0 = _initial_array(spec, omega0, Phi0)
    n = _n_steps(t, numerics.h) if t > 0 else 0
    res = run_ensemble(numerics.stepper(spec.k_max), spec, a0, n_steps=n, n_traj=n_traj, seed=seed,
                       record=lambda j, s, a: {"phi": enstrophy(a)}, record_steps=[n],
                       threads=numerics.threads, chunk_size=numerics.chunk_size)
    return res["phi"][:, 0]


def _samples(samples, n_traj: int) -> np.ndarray:
    phi = np.asarray(samples, dtype=float)
    if phi.shape != (n_traj,):
        raise HarnessError(f"expected {n_traj} enstrophy samples, got shape {phi.shape}")
    return phi


@dataclass(frozen=True)
class TailTable:
    t: float
    Phi0: float
    R: float
    D2: np.ndarray
    results: list
    slope: float
    samples: np.ndarray = field(repr=False)

    @property
    def p_hat(self) -> np.ndarray:
        return np.array([r.p_hat for r in self.results])

    def rows(self) -> list[tuple]:
        return [(float(d), r.p_hat, r.ci95[0], r.ci95[1]) for d, r in zip(self.D2, self.results)]


def lemma1_tail(Phi0: float, t: float, D2_grid: Sequence[float], spec: NoiseSpec, n_traj: int, seed: int,
                numerics: Numerics = Numerics(), omega0=None, samples: np.ndarray | None = None) -> TailTable:
    """Empirical ``P(Phi(t) >= D^2)`` over a grid of ``D^2`` from one ensemble.

    ``slope`` is the least-squares slope of ``log p_hat`` against ``D^2``
    over points with ``p_hat > 0`` (``nan`` when fewer than two remain).
    Pass ``samples`` from :func:`enstrophy_samples` to reuse an ensemble.
    """
    D2 = np.asarray(D2_grid, dtype=float)
    if D2.size == 0:
        raise HarnessError("empty D grid")
    if not 0 <= t <= 1:
        raise HarnessError("t must lie in [0, 1]")
    phi = _samples(samples, n_traj) if samples is not None else \
        enstrophy_samples(Phi0, t, spec, n_traj, seed, numerics, omega0)
    cfg = digest({"kind": "enstrophy_tail", "Phi0": Phi0, "t": t, "spec": _spec_key(spec),
                  "numerics": numerics.key(), "n_traj": n_traj})
    results = [EnsembleResult.from_hits(phi >= d, seed, cfg) for d in D2]
    p = np.array([r.p_hat for r in results])
    slope = loglinear_slope(D2, p) if np.count_nonzero(p) >= 2 else float("nan")
    return TailTable(t, Phi0, spec.R, D2, results, slope, phi)


@dataclass(frozen=True)
class ExpMoment:
    lhs: float
    lhs_upper: float
    rhs: float
    passed: bool
    log_lhs: float
    log_lhs_upper: float
    log_rhs: float


def _exp(x: float) -> float:
    return math.exp(x) if x < 709.0 else math.inf


def exp_moment_check(Phi0: float, t: float, spec: NoiseSpec, n_traj: int, seed: int,
                     numerics: Numerics = Numerics(), omega0=None, R: float | None = None,
                     z: float = 1.96, samples: np.ndarray | None = None) -> ExpMoment:
    """Compare ``E exp((c/R) Phi(t) e^t)`` with ``3 exp((c/R) Phi0)``, ``c = e^-1/4``.

    The check passes when the upper edge of a normal-approximation interval
    for the mean (``mean + z * standard error``) stays below the bound.  All
    sums are taken in log space.  ``R`` defaults to ``spec.R`` and must be
    given explicitly for unforced runs.
    """
    R = spec.R if R is None else float(R)
    if not R > 0:
        raise HarnessError("exp_moment_check needs R > 0; pass R explicitly for unforced runs")
    phi = _samples(samples, n_traj) if samples is not None else \
        enstrophy_samples(Phi0, t, spec, n_traj, seed, numerics, omega0)
    x = (EXP_MOMENT_C / R) * phi * math.exp(t)
    n = x.size
    log_mean = float(logsumexp(x) - math.log(n))
    m = float(np.max(x))
    w = np.exp(x - m)
    se = float(np.std(w, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    log_upper = m + math.log(float(np.mean(w)) + z * se)
    log_rhs = math.log(3.0) + (EXP_MOMENT_C / R) * Phi0
    return ExpMoment(_exp(log_mean), _exp(log_upper), _exp(log_rhs),
                     log_upper <= log_rhs, log_mean, log_upper, log_rhs)


def _escape_record(p: NormParams):
    def record(j, t, a):
        return {"inside": region_mask(a, p.r, p.alpha, math.sqrt(2.0 * math.exp(-t)) * p.D)}
    return record


def escape_hits(omega0, spec: NoiseSpec, p: NormParams, n_traj: int, seed: int,
                numerics: Numerics = Numerics(), T: float = 1.0, n_checks: int | None = None) -> np.ndarray:
    """Per-trajectory indicator of leaving ``U_{sqrt(2 exp(-t)) D}`` at some check time."""
    _check_n(n_traj)
    a0 = _initial_array(spec, omega0)
    n = _n_steps(T, numerics.h)
    if n_checks is None:
        n_checks = n
    if n_checks <= 0 or n % n_checks:
        raise HarnessError(f"n_checks={n_checks} must divide the {n} steps")
    every = n // n_checks
    res = run_ensemble(numerics.stepper(spec.k_max), spec, a0, n_steps=n, n_traj=n_traj, seed=seed,
                       record=_escape_record(p), record_steps=range(0, n + 1, every),
                       threads=numerics.threads, chunk_size=numerics.chunk_size)
    return ~np.all(res["inside"], axis=1)


def proposition_escape(D: float, spec: NoiseSpec, p: NormParams, n_traj: int, seed: int,
                       numerics: Numerics = Numerics(), n_checks: int | None = None, omega0=None,
                       T: float = 1.0) -> EnsembleResult:
    """Probability of leaving ``U_{sqrt(2 exp(-t)) D}`` at some check time in ``(0, T]``.

    The initial field defaults to the boundary-saturating profile of
    ``U_D``; checks run every step unless ``n_checks`` is given.  The hit
    count is the number of escaping trajectories.
    """
    _check_n(n_traj)
    p = p.with_D(D)
    if omega0 is None:
        omega0 = saturating_profile(spec.k_max, p)
    if not in_region_U(omega0, NormParams(p.r, p.alpha, D * (1 + 1e-9))):
        raise HarnessError(f"initial data is not in U_D for D={D}")
    hits = escape_hits(omega0, spec, p, n_traj, seed, numerics, T, n_checks)
    cfg = digest({"kind": "region_escape", "D": D, "r": p.r, "alpha": p.alpha, "T": T,
                  "omega0": digest(np.asarray(getattr(omega0, "amplitudes", omega0))),
                  "spec": _spec_key(spec), "numerics": numerics.key(), "n_checks": n_checks, "n_traj": n_traj})
    return EnsembleResult.from_hits(hits, seed, cfg)


def saturating_family(k_max: int, p: NormParams, n_members: int = 4) -> list[VorticityField]:
    """Fields with enstrophy ``D^2`` and norm ``D^alpha``, both to rounding.

    Member 0 is the smooth saturating profile with its slack constraint
    closed by a single spike mode pair; further members move the spike
    outward along the axis.  Used as a finite stand-in for a supremum over
    ``U_D``, so maxima over the family are lower bounds on that supremum.
    """
    g = lattice_grids(k_max)
    K = k_max
    base = saturating_profile(k_max, p).amplitudes
    target_norm = p.alpha * math.log(p.D)
    members = []
    for kk in range(1, k_max + 1):
        if len(members) >= n_members:
            break
        s = math.exp(target_norm - p.r * math.log(kk) - p.D ** -p.alpha * kk)
        if s * s >= p.D ** 2:
            continue
        a = base.copy()
        a[K + kk, K] = a[K - kk, K] = 0.0
        rest = enstrophy(a)
        scale = math.sqrt((p.D ** 2 - s * s) / rest)
        a = a * scale
        if log_d_norm(a, p.r, p.alpha, p.D) > target_norm:
            continue
        a[K + kk, K] = a[K - kk, K] = s
        members.append(VorticityField(Truncation(K), a * g.active))
    if not members:
        members.append(saturating_profile(k_max, p))
    return members


@dataclass(frozen=True)
class TransitionEstimate:
    m: int
    n: int
    D_m: float
    D_n: float
    per_profile: list
    worst: EnsembleResult
    pi_n: float


def transition_estimate(ladder: LadderSpec, m: int, n: int, spec: NoiseSpec, p: NormParams, n_traj: int,
                        seed: int, numerics: Numerics = Numerics(), family: Sequence | None = None,
                        n_checks: int = 1) -> TransitionEstimate:
    """Estimate ``p(w, U_n^c)`` over unit time from boundary-saturating ``w`` in ``U_m``.

    Exit from ``U_n`` is checked at ``n_checks`` equally spaced times (the
    default, one check at ``t = 1``, is the chain's transition).  The
    reported ``worst`` is the maximum over the profile family.
    """
    if not (0 <= m <= ladder.levels and 0 <= n <= ladder.levels):
        raise HarnessError(f"ladder indices ({m}, {n}) outside [0, {ladder.levels}]")
    if m > n + 1:
        raise HarnessError("transition estimates need m <= n + 1")
    _check_n(n_traj)
    Dm, Dn = ladder.D(m), ladder.D(n)
    if family is None:
        family = saturating_family(spec.k_max, p.with_D(Dm))
    steps = _n_steps(1.0, numerics.h)
    if n_checks <= 0 or steps % n_checks:
        raise HarnessError(f"n_checks={n_checks} must divide the {steps} steps")
    every = steps // n_checks

    def record(j, t, a):
        return {"inside": region_mask(a, p.r, p.alpha, Dn)}

    out = []
    for member in family:
        a0 = _initial_array(spec, member)
        res = run_ensemble(numerics.stepper(spec.k_max), spec, a0, n_steps=steps, n_traj=n_traj, seed=seed,
                           record=record, record_steps=range(every, steps + 1, every),
                           threads=numerics.threads, chunk_size=numerics.chunk_size)
        cfg = digest({"kind": "transition", "ladder": [ladder.a_hat, ladder.R, ladder.levels], "m": m, "n": n,
                      "omega0": digest(a0), "r": p.r, "alpha": p.alpha, "spec": _spec_key(spec),
                      "numerics": numerics.key(), "n_checks": n_checks, "n_traj": n_traj})
        out.append(EnsembleResult.from_hits(~np.all(res["inside"], axis=1), seed, cfg))
    worst = max(out, key=lambda r: r.p_hat)
    return TransitionEstimate(m, n, Dm, Dn, out, worst, LadderSpec.pi(n))


def mode_threshold(k: tuple[int, int], p: NormParams) -> float:
    """``D^(2 alpha) |k|^(-2r) exp(-2 D^-alpha |k|)``."""
    kk = math.hypot(*k)
    return math.exp(2 * p.alpha * math.log(p.D) - 2 * p.r * math.log(kk) - 2 * p.D ** -p.alpha * kk)


def mode_time_averages(k: tuple[int, int], t: float, T: float, spec: NoiseSpec, n_traj: int, seed: int,
                       numerics: Numerics = Numerics(), omega0=None) -> np.ndarray:
    """Trapezoid average of ``|w_k(s)|^2`` over ``[t, t+T]`` for each trajectory."""
    if not T > 0:
        raise HarnessError("T must be positive")
    _check_n(n_traj)
    K = spec.k_max
    kx, ky = k
    if not 0 < kx * kx + ky * ky <= K * K:
        raise FieldError(f"mode {k} is not active")
    a0 = _initial_array(spec, omega0)
    j0 = _n_steps(t, numerics.h) if t > 0 else 0
    nT = _n_steps(T, numerics.h)
    res = run_ensemble(numerics.stepper(K), spec, a0, n_steps=j0 + nT, n_traj=n_traj, seed=seed,
                       record=lambda j, s, a: {"m2": np.abs(a[..., kx + K, ky + K]) ** 2},
                       record_steps=range(j0, j0 + nT + 1),
                       threads=numerics.threads, chunk_size=numerics.chunk_size)
    m2 = res["m2"]
    return (m2[:, 1:-1].sum(axis=1) + 0.5 * (m2[:, 0] + m2[:, -1])) / nT


def time_average_mode(k: tuple[int, int], t: float, T: float, D: float, p: NormParams, spec: NoiseSpec,
                      n_traj: int, seed: int, numerics: Numerics = Numerics(), omega0=None,
                      averages: np.ndarray | None = None) -> EnsembleResult:
    """``P(time average of |w_k|^2 over [t, t+T] > D^(2 alpha) |k|^-2r exp(-2 D^-alpha |k|))``.

    Pass ``averages`` from :func:`mode_time_averages` to reuse one ensemble
    across thresholds.
    """
    p = p.with_D(D)
    if averages is None:
        averages = mode_time_averages(k, t, T, spec, n_traj, seed, numerics, omega0)
    cfg = digest({"kind": "time_avg_mode", "k": list(k), "t": t, "T": T, "D": D, "r": p.r, "alpha": p.alpha,
                  "spec": _spec_key(spec), "numerics": numerics.key(), "n_traj": n_traj})
    return EnsembleResult.from_hits(averages > mode_threshold(k, p), seed, cfg)


def stationary_snapshots(spec: NoiseSpec, n_traj: int, burn_in: float, n_snapshots: int, spacing: float,
                         seed: int, numerics: Numerics = Numerics(), omega0=None) -> np.ndarray:
    """Fields sampled at ``burn_in + i * spacing``; shape ``(n_traj * n_snapshots, 2K+1, 2K+1)``."""
    _check_n(n_traj)
    a0 = _initial_array(spec, omega0)
    j0 = _n_steps(burn_in, numerics.h)
    dj = _n_steps(spacing, numerics.h)
    steps = [j0 + i * dj for i in range(n_snapshots)]
    res = run_ensemble(numerics.stepper(spec.k_max), spec, a0, n_steps=steps[-1], n_traj=n_traj, seed=seed,
                       record=lambda j, s, a: {"a": a.copy()}, record_steps=steps,
                       threads=numerics.threads, chunk_size=numerics.chunk_size)
    return res["a"].reshape((-1,) + spec.truncation.shape)


@dataclass(frozen=True)
class SpectrumReport:
    k: np.ndarray
    e_k: np.ndarray
    fit_range: tuple[float, float]
    slope: float
    intercept: float
    exponent_bound: float
    slack: float
    C_hat: float
    passed: bool
    shell_slope: float

    def to_dict(self) -> dict:
        return {"k": self.k.tolist(), "e_k": self.e_k.tolist(), "fit_range": list(self.fit_range),
                "slope": self.slope, "intercept": self.intercept, "exponent_bound": self.exponent_bound,
                "slack": self.slack, "C_hat": self.C_hat, "passed": self.passed, "shell_slope": self.shell_slope}


def spectrum_bound_report(ensemble, r: float, alpha_tilde: float, R: float,
                          k_range: tuple[float, float] = (4, 20), slack: float = 0.5) -> SpectrumReport:
    """Fit ``log e(k)`` against ``log k`` and compare with ``e(k) <= C R^alpha_tilde k^-(2r+1)``.

    ``e(k)`` here is the angular form (shell mean times ``2 pi / k``), the
    quantity the bound is stated for; ``shell_slope`` is the same fit on the
    shell-sum spectrum.  ``C_hat`` is the smallest constant for which the
    bound holds on every shell with ``k >= 1``; ``passed`` compares the
    fitted exponent over ``k_range`` with ``-(2r+1) + slack``.
    """
    est = energy_spectrum(ensemble)
    k, e = est.k, est.angular
    nonzero = e > 0
    if np.count_nonzero(nonzero) < 3:
        raise HarnessError("spectrum fit needs at least three nonzero shells")
    sel = nonzero & (k >= k_range[0]) & (k <= k_range[1])
    if np.count_nonzero(sel) < 3:
        raise HarnessError(f"fewer than three nonzero shells in {k_range}")
    slope, intercept = np.polyfit(np.log(k[sel]), np.log(e[sel]), 1)
    shell_slope = float(np.polyfit(np.log(k[sel]), np.log(est.e_k[sel]), 1)[0])
    bound = -(2 * r + 1)
    scale = R ** alpha_tilde if R > 0 else 1.0
    C_hat = float(np.max(e * k ** (2 * r + 1)) / scale)
    return SpectrumReport(k, e, (float(k_range[0]), float(k_range[1])), float(slope), float(intercept),
                          bound, slack, C_hat, bool(slope <= bound + slack), shell_slope)


@dataclass(frozen=True)
class MomentRow:
    k: tuple[int, int]
    t: float
    mean: float
    stderr: float
    expected: float

    @property
    def z(self) -> float:
        return abs(self.mean - self.expected) / self.stderr if self.stderr > 0 else float("inf")


def ou_moment_table(spec: NoiseSpec, modes: Sequence[tuple[int, int]], times: Sequence[float], n_traj: int,
                    seed: int, numerics: Numerics = Numerics(nonlinear=False), omega0=None) -> list[MomentRow]:
    """Empirical ``E|w_k(t)|^2`` with standard errors against the closed-form OU variance.

    Meant for linear runs from zero data, where ``w_k(t)`` is the OU process.
    """
    _check_n(n_traj)
    K = spec.k_max
    a0 = _initial_array(spec, omega0)
    steps = [_n_steps(t, numerics.h) for t in times]
    idx = np.array([[kx + K, ky + K] for kx, ky in modes])
    res = run_ensemble(numerics.stepper(K), spec, a0, n_steps=max(steps), n_traj=n_traj, seed=seed,
                       record=lambda j, s, a: {"m2": np.abs(a[..., idx[:, 0], idx[:, 1]]) ** 2},
                       record_steps=steps, threads=numerics.threads, chunk_size=numerics.chunk_size)
    recorded = sorted(set(steps))
    rows = []
    for t, j in zip(times, steps):
        col = recorded.index(j)
        var = ou_variance(spec, t)
        for m, (kx, ky) in enumerate(modes):
            x = res["m2"][:, col, m]
            rows.append(MomentRow((kx, ky), float(t), float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size)),
                                  float(var[kx + K, ky + K])))
    return rows


def membership_curve(samples: np.ndarray, D_grid: Sequence[float], r: float, alpha: float) -> np.ndarray:
    """Fraction of samples in ``U_D`` for each ``D``, evaluated per sample.

    Because ``U_D`` grows with ``D``, the curve is nondecreasing on any fixed
    set of samples.
    """
    masks = np.stack([region_mask(samples, r, alpha, D) for D in D_grid])
    return masks.reshape(len(D_grid), -1).mean(axis=1)


@dataclass(frozen=True)
class UnionCheck:
    joint_success: float
    per_time_failure: np.ndarray
    union_lower: float
    n_traj: int = 0
    n_joint: int = 0
    n_failures: int = 0

    @property
    def consistent(self) -> bool:
        # exact in counts: n_joint / n >= 1 - sum_i failures_i / n
        return self.n_joint >= self.n_traj - self.n_failures


def union_bound_check(failures: np.ndarray) -> UnionCheck:
    """Compare joint success over check times with ``1 - sum`` of per-time failure rates.

    ``failures`` is boolean ``(n_traj, n_times)`` on one sample set.
    """
    f = np.asarray(failures, dtype=bool)
    if f.ndim != 2 or f.shape[0] == 0:
        raise HarnessError("failures must be a nonempty (n_traj, n_times) array")
    n = f.shape[0]
    n_joint = int(np.count_nonzero(~f.any(axis=1)))
    n_fail = int(np.count_nonzero(f))
    rates = f.mean(axis=0)
    return UnionCheck(n_joint / n, rates, 1.0 - n_fail / n, n, n_joint, n_fail)


def corollary_failures(Phi0: float, D: float, check_times: Sequence[float], spec: NoiseSpec, n_traj: int,
                       seed: int, numerics: Numerics = Numerics(), omega0=None) -> np.ndarray:
    """Indicators of ``Phi(t_i) > 2 D(t_i)^2`` with ``D(t) = exp(-t/2) D``."""
    _check_n(n_traj)
    a0 = _initial_array(spec, omega0, Phi0)
    steps = [_n_steps(t, numerics.h) for t in check_times]
    res = run_ensemble(numerics.stepper(spec.k_max), spec, a0, n_steps=max(steps), n_traj=n_traj, seed=seed,
                       record=lambda j, s, a: {"phi": enstrophy(a)}, record_steps=steps,
                       threads=numerics.threads, chunk_size=numerics.chunk_size)
    times = res["times"]
    return res["phi"] > 2.0 * np.exp(-times) * D * D


def result_document(event: EventSpec, result: EnsembleResult, wall_time: float) -> dict:
    doc = event.to_dict()
    doc.update(result.to_dict())
    doc["wall_time"] = wall_time
    return doc


def write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, default=_plain) + "\n")


def _plain(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.integer, np.floating, np.bool_)):
        return x.item()
    raise TypeError(f"not serialisable: {type(x)!r}")


def write_curve_csv(path, grid: Sequence[float], results: Sequence[EnsembleResult],
                    grid_name: str = "grid") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([grid_name, "p_hat", "ci_lo", "ci_hi"])
        for x, r in zip(grid, results):
            w.writerow([repr(float(x)), repr(r.p_hat), repr(r.ci95[0]), repr(r.ci95[1])])
