"""Truncated Fourier vorticity fields on the unit torus.

Fields are stored densely on the square ``[-k_max, k_max]^2`` with index
``[kx + k_max, ky + k_max]``.  Entries at ``k = 0`` and outside the disk
``|k| <= k_max`` are identically zero.  Every scalar functional in this
module also accepts a raw ndarray whose last two axes are that square, and
then broadcasts over any leading (ensemble) axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

HERMITIAN_RTOL = 1e-12
D_CEILING = 1e6


class FieldError(ValueError):
    """Raised when an amplitude array violates a field invariant."""


@dataclass(frozen=True)
class Truncation:
    k_max: int

    def __post_init__(self):
        if int(self.k_max) != self.k_max or self.k_max < 1:
            raise FieldError(f"k_max must be a positive integer, got {self.k_max!r}")

    @property
    def size(self) -> int:
        return 2 * self.k_max + 1

    @property
    def shape(self) -> tuple[int, int]:
        return (self.size, self.size)

    @property
    def grids(self) -> "LatticeGrids":
        return lattice_grids(self.k_max)


@dataclass(frozen=True)
class LatticeGrids:
    """Precomputed wave-vector arrays for one truncation (read-only)."""

    k_max: int
    kx: np.ndarray
    ky: np.ndarray
    k2: np.ndarray
    kabs: np.ndarray
    active: np.ndarray
    inv_k2: np.ndarray
    shell: np.ndarray
    half: np.ndarray


@lru_cache(maxsize=None)
def lattice_grids(k_max: int) -> LatticeGrids:
    ks = np.arange(-k_max, k_max + 1)
    kx, ky = np.meshgrid(ks, ks, indexing="ij")
    k2 = (kx * kx + ky * ky).astype(float)
    kabs = np.sqrt(k2)
    active = (k2 > 0) & (k2 <= k_max * k_max)
    inv_k2 = np.zeros_like(k2)
    inv_k2[active] = 1.0 / k2[active]
    # nearest-integer shells [k - 1/2, k + 1/2)
    shell = np.where(active, np.floor(kabs + 0.5), 0).astype(int)
    half = active & ((kx > 0) | ((kx == 0) & (ky > 0)))
    arrays = [kx, ky, k2, kabs, active, inv_k2, shell, half]
    for a in arrays:
        a.setflags(write=False)
    return LatticeGrids(k_max, *arrays)


def k_max_of(a: np.ndarray) -> int:
    n = a.shape[-1]
    if a.ndim < 2 or a.shape[-2] != n or n % 2 != 1 or n < 3:
        raise FieldError(f"amplitude array must end in a (2K+1, 2K+1) square, got {a.shape}")
    return (n - 1) // 2


def reflect(a: np.ndarray) -> np.ndarray:
    """Return the array of ``conj(a[-k])`` values."""
    return np.conj(a[..., ::-1, ::-1])


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Project onto hermitian, zero-mean, disk-supported amplitudes."""
    g = lattice_grids(k_max_of(a))
    out = 0.5 * (a + reflect(a))
    out *= g.active
    return out


def hermitian_defect(a: np.ndarray) -> float:
    """Largest ``|a(k) - conj(a(-k))|`` relative to the largest amplitude."""
    scale = float(np.max(np.abs(a), initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(a - reflect(a)))) / scale


@dataclass(frozen=True)
class VorticityField:
    """Immutable hermitian vorticity amplitudes on a truncated lattice."""

    truncation: Truncation
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.array(self.amplitudes, dtype=np.complex128)
        if a.shape != self.truncation.shape:
            raise FieldError(f"expected shape {self.truncation.shape}, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise FieldError("amplitudes must be finite")
        g = self.truncation.grids
        if np.any(a[~g.active] != 0):
            raise FieldError("amplitudes at k = 0 or |k| > k_max must vanish")
        defect = hermitian_defect(a)
        if defect > HERMITIAN_RTOL:
            raise FieldError(f"field is not hermitian (relative defect {defect:.3e})")
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)

    @property
    def k_max(self) -> int:
        return self.truncation.k_max

    def __getitem__(self, k: tuple[int, int]) -> complex:
        kx, ky = k
        K = self.k_max
        if abs(kx) > K or abs(ky) > K:
            return 0j
        return complex(self.amplitudes[kx + K, ky + K])

    def scaled(self, c: float) -> "VorticityField":
        return VorticityField(self.truncation, self.amplitudes * c)

    @classmethod
    def zeros(cls, k_max: int) -> "VorticityField":
        t = Truncation(k_max)
        return cls(t, np.zeros(t.shape, dtype=np.complex128))

    @classmethod
    def from_array(cls, a: np.ndarray, *, resymmetrize: bool = False) -> "VorticityField":
        a = np.asarray(a, dtype=np.complex128)
        if resymmetrize:
            a = symmetrize(a)
        return cls(Truncation(k_max_of(a)), a)

    @classmethod
    def from_modes(cls, k_max: int, modes: Mapping[tuple[int, int], complex]) -> "VorticityField":
        """Build a field from ``{(kx, ky): amplitude}``.

        A mode given without its partner ``-k`` is completed by hermitian
        symmetry; giving both with inconsistent values is an error.
        """
        t = Truncation(k_max)
        a = np.zeros(t.shape, dtype=np.complex128)
        for (kx, ky), v in modes.items():
            if (kx, ky) == (0, 0):
                raise FieldError("the zero mode cannot carry amplitude")
            if kx * kx + ky * ky > k_max * k_max:
                raise FieldError(f"mode {(kx, ky)} lies outside |k| <= {k_max}")
            partner = modes.get((-kx, -ky))
            if partner is not None and not np.isclose(partner, np.conj(v), rtol=HERMITIAN_RTOL, atol=0):
                raise FieldError(f"modes {(kx, ky)} and {(-kx, -ky)} are not conjugate")
            a[kx + k_max, ky + k_max] = v
            a[-kx + k_max, -ky + k_max] = np.conj(v)
        return cls(t, a)

    @classmethod
    def random(cls, k_max: int, rng: np.random.Generator, *, slope: float = 2.0,
               enstrophy_target: float | None = None) -> "VorticityField":
        """Random-phase field with amplitude envelope ``|k|^-slope``."""
        g = lattice_grids(k_max)
        env = np.where(g.active, np.power(np.maximum(g.kabs, 1.0), -slope), 0.0)
        z = rng.standard_normal(g.kx.shape) + 1j * rng.standard_normal(g.kx.shape)
        a = symmetrize(env * z)
        if enstrophy_target is not None:
            phi = enstrophy(a)
            if phi > 0:
                a *= math.sqrt(enstrophy_target / phi)
        return cls(Truncation(k_max), a)


@dataclass(frozen=True)
class NormParams:
    r: float
    alpha: float
    D: float

    def __post_init__(self):
        validate_exponents(self.r, self.alpha)
        if not self.D > 0:
            raise FieldError(f"D must be positive, got {self.D}")

    def with_D(self, D: float) -> "NormParams":
        return NormParams(self.r, self.alpha, D)


def validate_exponents(r: float, alpha: float) -> None:
    if not r > 1:
        raise FieldError(f"r must exceed 1, got {r}")
    if not alpha > max(2.0, 1.0 + r):
        raise FieldError(f"alpha must exceed max(2, 1 + r) = {max(2.0, 1.0 + r)}, got {alpha}")


@dataclass(frozen=True)
class SpectrumEstimate:
    k: np.ndarray
    e_k: np.ndarray
    mode_count: np.ndarray

    @property
    def shells(self) -> list[tuple[float, float, int]]:
        return [(float(k), float(e), int(c)) for k, e, c in zip(self.k, self.e_k, self.mode_count)]

    @property
    def angular(self) -> np.ndarray:
        """``k^-1 * 2 pi * <shell mean of |w|^2>``: the shell sum replaced by an angular integral.

        The two agree up to the lattice shell measure ``mode_count / (2 pi k)``
        (about 1), so the angular form decays one power of ``k`` faster.
        """
        return 2 * np.pi * self.e_k / self.mode_count


def _amps(field_or_array) -> np.ndarray:
    if isinstance(field_or_array, VorticityField):
        return field_or_array.amplitudes
    return np.asarray(field_or_array)


def enstrophy(field_or_array):
    """Half the sum of ``|w_k|^2`` over all active modes (both k and -k)."""
    a = _amps(field_or_array)
    out = 0.5 * np.sum(a.real ** 2 + a.imag ** 2, axis=(-2, -1))
    return float(out) if out.ndim == 0 else out


def log_d_norm(field_or_array, r: float, alpha: float, D):
    """Natural log of the analyticity norm (``-inf`` for the zero field).

    ``D`` may be an array broadcasting against the leading axes.
    """
    a = _amps(field_or_array)
    g = lattice_grids(k_max_of(a))
    mag = np.abs(a)
    with np.errstate(divide="ignore"):
        logmag = np.log(mag)
    base = logmag + r * np.log(np.where(g.active, g.kabs, 1.0))
    base = np.where(g.active & (mag > 0), base, -np.inf)
    D = np.asarray(D, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        rate = np.power(D, -alpha)[..., None, None]
    with np.errstate(invalid="ignore"):
        terms = base + rate * g.kabs
    terms = np.where(np.isneginf(base), -np.inf, terms)
    out = np.max(terms, axis=(-2, -1))
    return float(out) if out.ndim == 0 else out


def d_norm(field_or_array, p: NormParams):
    """``sup_k |w_k| |k|^r exp(D^-alpha |k|)`` over the active set."""
    with np.errstate(over="ignore"):
        out = np.exp(log_d_norm(field_or_array, p.r, p.alpha, p.D))
    return float(out) if np.ndim(out) == 0 else out


def in_region_U(field_or_array, p: NormParams):
    """Membership in ``{ ||w||_D <= D^alpha and enstrophy <= D^2 }``."""
    return region_mask(field_or_array, p.r, p.alpha, p.D)


def region_mask(field_or_array, r: float, alpha: float, D):
    a = _amps(field_or_array)
    D = np.asarray(D, dtype=float)
    norm_ok = log_d_norm(a, r, alpha, D) <= alpha * np.log(D)
    phi_ok = enstrophy(a) <= D * D
    out = np.logical_and(norm_ok, phi_ok)
    return bool(out) if np.ndim(out) == 0 else out


def minimal_D(field_or_array, r: float, alpha: float, tol: float = 1e-6,
              ceiling: float = D_CEILING):
    """Smallest ``D`` (to ``tol``) for which the field lies in ``U_D``.

    Returns 0 for the zero field and ``inf`` when even ``D = ceiling`` fails.
    Bisection relies on both membership conditions being monotone in ``D``;
    the returned value is always a member, ``value - tol`` never is.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    validate_exponents(r, alpha)
    a = _amps(field_or_array)
    lead = a.shape[:-2]
    zero = enstrophy(a) == 0
    lo = np.zeros(lead)
    hi = np.full(lead, float(ceiling))
    ok_top = region_mask(a, r, alpha, hi)
    n_iter = max(1, math.ceil(math.log2(ceiling / tol)) + 1)
    for _ in range(n_iter):
        if np.all(hi - lo <= tol):
            break
        mid = 0.5 * (lo + hi)
        inside = region_mask(a, r, alpha, np.where(mid > 0, mid, tol))
        hi = np.where(inside, mid, hi)
        lo = np.where(inside, lo, mid)
    out = np.where(zero, 0.0, np.where(ok_top, hi, np.inf))
    return float(out) if out.ndim == 0 else out


def energy_spectrum(ensemble: Sequence | np.ndarray) -> SpectrumEstimate:
    """Shell-binned spectrum ``e(k) = k^-1 <sum_{|k'| in [k-1/2, k+1/2)} |w_k'|^2>``.

    See :attr:`SpectrumEstimate.angular` for the variant that replaces the
    shell sum by an angular integral.
    """
    if isinstance(ensemble, np.ndarray):
        stack = ensemble.reshape((-1,) + ensemble.shape[-2:])
    else:
        items = list(ensemble)
        if not items:
            raise ValueError("energy_spectrum needs a nonempty ensemble")
        k_maxes = {k_max_of(_amps(f)) for f in items}
        if len(k_maxes) != 1:
            raise FieldError("ensemble members must share a truncation")
        stack = np.stack([_amps(f) for f in items])
    if stack.shape[0] == 0:
        raise ValueError("energy_spectrum needs a nonempty ensemble")
    K = k_max_of(stack)
    g = lattice_grids(K)
    power = np.mean(stack.real ** 2 + stack.imag ** 2, axis=0)
    idx = g.shell[g.active]
    sums = np.bincount(idx, weights=power[g.active], minlength=K + 1)
    counts = np.bincount(idx, minlength=K + 1)
    ks = np.arange(K + 1)
    keep = counts > 0
    return SpectrumEstimate(ks[keep].astype(float), sums[keep] / ks[keep], counts[keep])


def velocity_from_vorticity(field_or_array) -> np.ndarray:
    """Velocity amplitudes ``u_k = i (-ky, kx) / |k|^2 w_k``, stacked on axis -3."""
    a = _amps(field_or_array)
    g = lattice_grids(k_max_of(a))
    u1 = 1j * (-g.ky) * g.inv_k2 * a
    u2 = 1j * g.kx * g.inv_k2 * a
    return np.stack([u1, u2], axis=-3)


def saturating_profile(k_max: int, p: NormParams) -> VorticityField:
    """Deterministic member of U_D on its boundary.

    ``w_k ~ |k|^(-r-1) exp(-D^-alpha |k|)`` rescaled until the binding one of
    the two region constraints holds with equality.
    """
    g = lattice_grids(k_max)
    base = np.where(g.active, np.power(np.maximum(g.kabs, 1.0), -p.r - 1.0)
                    * np.exp(-p.D ** -p.alpha * g.kabs), 0.0).astype(np.complex128)
    scale_phi = p.D / math.sqrt(enstrophy(base))
    scale_norm = math.exp(p.alpha * math.log(p.D) - log_d_norm(base, p.r, p.alpha, p.D))
    return VorticityField(Truncation(k_max), base * min(scale_phi, scale_norm))


def decaying_profile(k_max: int, enstrophy_value: float, slope: float = 2.5) -> VorticityField:
    """Real profile ``~ |k|^-slope`` with enstrophy exactly ``enstrophy_value``."""
    g = lattice_grids(k_max)
    if enstrophy_value == 0:
        return VorticityField.zeros(k_max)
    base = np.where(g.active, np.power(np.maximum(g.kabs, 1.0), -slope), 0.0).astype(np.complex128)
    return VorticityField(Truncation(k_max), base * math.sqrt(enstrophy_value / enstrophy(base)))
