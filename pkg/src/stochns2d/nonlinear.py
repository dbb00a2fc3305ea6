"""Galerkin-truncated vorticity transport term.

    N_k = sum_l (k x l) |l|^-2 w_{k-l} w_l,     k x l = k1 l2 - l1 k2,

restricted so that ``l``, ``k - l`` and ``k`` all lie in the truncation.
Two routes evaluate it: a direct lattice convolution (the oracle) and a
pseudo-spectral evaluation of ``-(u . grad w)`` on a zero-padded grid with at
least ``3 k_max + 1`` points per side, which removes all quadratic aliasing.

Physical values use the convention ``w(x) = sum_k w_k exp(-i k.x)``, under
which ``u_k = i (-k2, k1) / |k|^2 w_k`` and a derivative ``d_j`` multiplies
by ``-i k_j``.
"""

from __future__ import annotations

import logging
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .lattice import FieldError, VorticityField, _amps, k_max_of, lattice_grids, reflect

log = logging.getLogger(__name__)


def convolution_direct(field_or_array) -> np.ndarray:
    """Bilinear term by explicit summation over active ``l``."""
    a = np.asarray(_amps(field_or_array), dtype=np.complex128)
    K = k_max_of(a)
    g = lattice_grids(K)
    n = 2 * K + 1
    out = np.zeros_like(a)
    for ix, iy in np.argwhere(g.active):
        lx, ly = ix - K, iy - K
        wl = a[..., ix, iy]
        if np.all(wl == 0):
            continue
        # shifted[k] = a[k - l], zero where k - l leaves the square
        shifted = np.zeros_like(a)
        xs = slice(max(0, lx), n + min(0, lx))
        ys = slice(max(0, ly), n + min(0, ly))
        xs_src = slice(max(0, -lx), n + min(0, -lx))
        ys_src = slice(max(0, -ly), n + min(0, -ly))
        shifted[..., xs, ys] = a[..., xs_src, ys_src]
        coef = (g.kx * ly - lx * g.ky) / float(lx * lx + ly * ly)
        out += coef * shifted * np.asarray(wl)[..., None, None]
    out *= g.active
    return out


class SpectralOperator:
    """Dealiased pseudo-spectral evaluation of the bilinear term.

    Uses the divergence-free rewriting

        u . grad w = (dx^2 - dy^2)(u1 u2) + dx dy (u2^2 - u1^2),

    so only the two velocity components go to the grid and two products come
    back.  Works on arrays shaped ``(..., 2K+1, 2K+1)``.  Instances hold only
    read-only tables; each call allocates its own workspace.
    """

    def __init__(self, k_max: int, grid: int | None = None):
        min_grid = 3 * k_max + 1
        M = sfft.next_fast_len(min_grid, real=True) if grid is None else int(grid)
        if M < min_grid:
            raise FieldError(f"grid {M} too small to dealias k_max={k_max}; need >= {min_grid}")
        self.k_max = K = k_max
        self.M = M
        g = lattice_grids(K)
        self.grids = g
        upper = (slice(None), slice(K, 2 * K + 1))
        # conj(multiplier) for u1, u2 on the ky >= 0 half
        mult = np.stack([1j * (-g.ky) * g.inv_k2, 1j * g.kx * g.inv_k2])
        self._mult = np.conj(mult[(slice(None),) + upper])
        # -(u . grad w)_k = (kx^2 - ky^2) F[u1 u2] + kx ky F[u2^2 - u1^2]
        self._comb = np.stack([(g.kx ** 2 - g.ky ** 2)[upper], (g.kx * g.ky)[upper]]).astype(float)
        for t in (self._mult, self._comb):
            t.setflags(write=False)

    def to_physical(self, upper: np.ndarray) -> np.ndarray:
        """Grid values from amplitudes on the ``ky >= 0`` half, shape ``(..., 2K+1, K+1)``."""
        K, M = self.k_max, self.M
        H = np.zeros(upper.shape[:-2] + (M, K + 1), dtype=np.complex128)
        H[..., :K + 1, :] = upper[..., K:, :]
        H[..., M - K:, :] = upper[..., :K, :]
        np.conjugate(H, out=H)
        return sfft.irfft2(H, s=(M, M), workers=1) * float(M * M)

    def _upper_spectral(self, f: np.ndarray) -> np.ndarray:
        K, M = self.k_max, self.M
        F = sfft.rfft2(f, workers=1)
        up = np.empty(f.shape[:-2] + (2 * K + 1, K + 1), dtype=np.complex128)
        up[..., K:, :] = F[..., :K + 1, :K + 1]
        up[..., :K, :] = F[..., M - K:, :K + 1]
        return np.conj(up) / float(M * M)

    def _complete(self, up: np.ndarray) -> np.ndarray:
        K = self.k_max
        out = np.empty(up.shape[:-2] + (2 * K + 1, 2 * K + 1), dtype=np.complex128)
        out[..., :, K:] = up
        out[..., :, :K] = np.conj(up[..., ::-1, ::-1][..., :, :K])
        # the ky = 0 column is only conjugate-symmetric to rounding; pin it
        col = out[..., :, K]
        out[..., :, K] = 0.5 * (col + np.conj(col[..., ::-1]))
        out *= self.grids.active
        return out

    def to_spectral(self, f: np.ndarray) -> np.ndarray:
        """Full hermitian amplitude array (masked to the disk) from grid values."""
        return self._complete(self._upper_spectral(f))

    def __call__(self, a: np.ndarray) -> np.ndarray:
        K = self.k_max
        upper = a[..., :, K:]
        u = self.to_physical(self._mult * upper[..., None, :, :])
        u1, u2 = u[..., 0, :, :], u[..., 1, :, :]
        prod = np.stack([u1 * u2, (u2 - u1) * (u2 + u1)], axis=-3)
        up = self._upper_spectral(prod)
        return self._complete(self._comb[0] * up[..., 0, :, :] + self._comb[1] * up[..., 1, :, :])


@lru_cache(maxsize=16)
def spectral_operator(k_max: int, grid: int | None = None) -> SpectralOperator:
    return SpectralOperator(k_max, grid)


def convolution_fft(field_or_array, grid: int | None = None) -> np.ndarray:
    """Bilinear term via the dealiased pseudo-spectral route."""
    a = np.asarray(_amps(field_or_array), dtype=np.complex128)
    out = spectral_operator(k_max_of(a), grid)(a)
    return out


def quadratic_invariants(field_or_array, b) -> tuple:
    """Enstrophy and energy fluxes ``Re sum conj(w) N`` and ``Re sum |k|^-2 conj(w) N``.

    Both vanish for the Galerkin-truncated term up to rounding.
    """
    a = _amps(field_or_array)
    b = _amps(b)
    if a.shape != b.shape:
        raise FieldError("field and bilinear term must share a truncation")
    g = lattice_grids(k_max_of(a))
    prod = (np.conj(a) * b).real
    ens = np.sum(prod, axis=(-2, -1))
    eng = np.sum(prod * g.inv_k2, axis=(-2, -1))
    if np.ndim(ens) == 0:
        return float(ens), float(eng)
    return ens, eng


def bilinear_field(field: VorticityField) -> VorticityField:
    """Convenience wrapper returning the FFT-route term as a field."""
    return VorticityField(field.truncation, convolution_fft(field))
