"""Fourier transform, Dirichlet-to-Neumann map and radiation propagators.

Everything lives on a laterally periodic grid of period ``Lambda`` with ``n``
samples per axis.  The discrete transform is the unitary FFT, so Plancherel
holds exactly.  The DtN operator ``T`` multiplies Fourier coefficients by

    z(xi) = -i sqrt(k^2 - xi^2)   for |xi| <= k,
    z(xi) =    sqrt(xi^2 - k^2)   for |xi| >  k,

and sends the trace of an upward-radiating field to minus its vertical
derivative.  A nonzero ``xi_offset`` gives quasi-periodic traces
``exp(i alpha x) * (periodic)``; the offset is removed before transforming.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

logger = logging.getLogger(__name__)

__all__ = [
    "LateralGrid",
    "Spectrum",
    "TraceFunction",
    "DtnSymbol",
    "PropagatedField",
    "make_symbol",
    "fourier_forward",
    "fourier_inverse",
    "apply_T",
    "apply_symbol",
    "operator_norm_T",
    "h_s_norm",
    "vertical_wavenumber",
    "propagate_up",
    "propagate_down",
]


def _workers():
    val = os.environ.get("ROUGH_SCATTER_THREADS")
    try:
        return max(1, int(val)) if val else 1
    except ValueError:
        return 1


@dataclass(frozen=True)
class LateralGrid:
    """Periodic lateral sampling.

    Attributes
    ----------
    dim_lateral : int
        1 or 2.
    period : float
        Period ``Lambda`` along each axis.
    n : int
        Samples per axis, a power of two and at least 16.
    xi_offset : float
        Quasi-periodicity shift added to every frequency (same on each axis).
    """

    dim_lateral: int
    period: float
    n: int
    xi_offset: float = 0.0

    def __post_init__(self):
        if self.dim_lateral not in (1, 2):
            raise ValueError("dim_lateral must be 1 or 2")
        if not self.period > 0:
            raise ValueError("period must be positive")
        if self.n < 16 or self.n & (self.n - 1):
            raise ValueError("n must be a power of two and at least 16")

    @property
    def shape(self):
        return (self.n,) * self.dim_lateral

    @property
    def spacing(self):
        return self.period / self.n

    @property
    def cell_area(self):
        return self.spacing**self.dim_lateral

    @property
    def x(self):
        """Sample coordinates along one axis, ``-Lambda/2 + j Lambda/n``."""
        return -self.period / 2 + self.spacing * np.arange(self.n)

    @property
    def points(self):
        """Sample points, shape ``shape + (dim_lateral,)``."""
        axes = np.meshgrid(*([self.x] * self.dim_lateral), indexing="ij")
        return np.stack(axes, axis=-1)

    @property
    def xi(self):
        """Discrete frequencies along one axis (FFT order)."""
        return 2 * np.pi * sfft.fftfreq(self.n, d=self.spacing) + self.xi_offset

    @property
    def xi_squared(self):
        """``|xi|^2`` on the frequency grid."""
        axes = np.meshgrid(*([self.xi] * self.dim_lateral), indexing="ij")
        return sum(a * a for a in axes)

    def _phase(self):
        if self.xi_offset == 0.0:
            return None
        pts = self.points
        return np.exp(1j * self.xi_offset * np.sum(pts, axis=-1))


@dataclass(frozen=True)
class Spectrum:
    """Unitary Fourier coefficients on ``grid`` (FFT ordering)."""

    grid: LateralGrid
    coeffs: np.ndarray


@dataclass(frozen=True)
class TraceFunction:
    """Samples of a function on the line/plane ``x_n = const``."""

    grid: LateralGrid
    samples: np.ndarray

    def __post_init__(self):
        if np.shape(self.samples) != self.grid.shape:
            raise ValueError(f"samples of shape {np.shape(self.samples)} do not match grid {self.grid.shape}")


@dataclass(frozen=True)
class DtnSymbol:
    """Sampled multiplier ``z(xi)`` of the DtN map for wavenumber ``k``."""

    grid: LateralGrid
    k: float
    z_values: np.ndarray


@dataclass(frozen=True)
class PropagatedField:
    """Field values at several heights; ``values[i]`` lives at ``heights[i]``."""

    grid: LateralGrid
    heights: np.ndarray
    values: np.ndarray


def _axes(grid):
    return tuple(range(-grid.dim_lateral, 0))


def fourier_forward(t):
    """Unitary discrete Fourier transform of a trace."""
    samples = np.asarray(t.samples, dtype=complex)
    if samples.shape != t.grid.shape:
        raise ValueError("sample count does not match grid")
    ph = t.grid._phase()
    if ph is not None:
        samples = samples * np.conj(ph)
    return Spectrum(t.grid, sfft.fftn(samples, axes=_axes(t.grid), norm="ortho", workers=_workers()))


def fourier_inverse(s):
    """Inverse of :func:`fourier_forward`."""
    coeffs = np.asarray(s.coeffs, dtype=complex)
    if coeffs.shape != s.grid.shape:
        raise ValueError("coefficient count does not match grid")
    out = sfft.ifftn(coeffs, axes=_axes(s.grid), norm="ortho", workers=_workers())
    ph = s.grid._phase()
    if ph is not None:
        out = out * ph
    return TraceFunction(s.grid, out)


def vertical_wavenumber(xi_squared, k):
    """``sqrt(k^2 - xi^2)`` on the branch with ``i sqrt(xi^2 - k^2)`` above cutoff."""
    d = k * k - np.asarray(xi_squared, dtype=float)
    return np.where(d >= 0, np.sqrt(np.abs(d)) + 0j, 1j * np.sqrt(np.abs(d)))


def make_symbol(grid, k):
    """DtN multiplier ``z = -i sqrt(k^2 - xi^2)`` sampled on ``grid``."""
    k = float(k)
    if not k > 0:
        raise ValueError("k must be positive")
    z = -1j * vertical_wavenumber(grid.xi_squared, k)
    return DtnSymbol(grid, k, z)


def apply_symbol(grid, multiplier, samples):
    """Apply a Fourier multiplier to raw samples (batch over leading axes)."""
    axes = _axes(grid)
    ph = grid._phase()
    data = np.asarray(samples, dtype=complex)
    if ph is not None:
        data = data * np.conj(ph)
    c = sfft.fftn(data, axes=axes, norm="ortho", workers=_workers())
    out = sfft.ifftn(c * multiplier, axes=axes, norm="ortho", workers=_workers())
    if ph is not None:
        out = out * ph
    return out


def apply_T(sym, t):
    """``T phi = F^{-1} z F phi``."""
    if t.grid != sym.grid:
        raise ValueError("trace and symbol live on different grids")
    return TraceFunction(t.grid, apply_symbol(t.grid, sym.z_values, t.samples))


def operator_norm_T(sym):
    """Norm of ``T`` from ``H^{1/2}`` to ``H^{-1/2}``: ``max |z| / sqrt(k^2 + xi^2)``."""
    ratio = np.abs(sym.z_values) / np.sqrt(sym.k**2 + sym.grid.xi_squared)
    return float(np.max(ratio))


def h_s_norm(t, k, s):
    """Discrete ``H^s`` norm ``(cell * sum (k^2 + xi^2)^s |c|^2)^{1/2}``."""
    c = fourier_forward(t).coeffs
    w = (k * k + t.grid.xi_squared) ** s
    return float(np.sqrt(t.grid.cell_area * np.sum(w * np.abs(c) ** 2)))


def propagate_up(F_H, k, H, targets):
    """Upward-radiating extension of the trace ``F_H`` on ``x_n = H``.

    Each Fourier mode is multiplied by ``exp(i (x_n - H) sqrt(k^2 - xi^2))``.

    Parameters
    ----------
    F_H : TraceFunction
    k : float
    H : float
    targets : sequence of float
        Heights ``>= H``.

    Returns
    -------
    PropagatedField
    """
    heights = np.atleast_1d(np.asarray(targets, dtype=float))
    if np.any(heights < H):
        raise ValueError("propagate_up targets must lie at or above H")
    spec = fourier_forward(F_H)
    mu = vertical_wavenumber(F_H.grid.xi_squared, k)
    lift = (heights - H).reshape((-1,) + (1,) * F_H.grid.dim_lateral)
    coeffs = spec.coeffs[None] * np.exp(1j * lift * mu[None])
    out = sfft.ifftn(coeffs, axes=_axes(F_H.grid), norm="ortho", workers=_workers())
    ph = F_H.grid._phase()
    if ph is not None:
        out = out * ph
    return PropagatedField(F_H.grid, heights, out)


def propagate_down(F_h, k, h, targets):
    """Downward-radiating extension below ``x_n = h`` by reflection about ``h``."""
    heights = np.atleast_1d(np.asarray(targets, dtype=float))
    if np.any(heights > h):
        raise ValueError("propagate_down targets must lie at or below h")
    up = propagate_up(F_h, k, h, 2 * h - heights)
    return PropagatedField(F_h.grid, heights, up.values)
