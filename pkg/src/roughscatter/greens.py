"""Helmholtz fundamental solutions and the half-space Dirichlet Green's function.

``phi(x, y) = exp(ik r) / (4 pi r)`` in 3D and ``(i/4) H_0^(1)(k r)`` in 2D.
The half-space function ``G(x, y) = phi(x, y) - phi(x, y')`` with
``y' = (y~, -y_n)`` vanishes on the plane ``x_n = 0``.

All functions broadcast over leading axes: points have shape ``(..., dim)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_genlaguerre

logger = logging.getLogger(__name__)

SERIES_RADIUS = 8.0
LAGUERRE_NODES = 60
EULER_GAMMA = 0.57721566490153286061
NEAR_SINGULAR_RATIO = 1e6

__all__ = [
    "KernelEval",
    "hankel1_0",
    "hankel1_0_series",
    "hankel1_0_asymptotic",
    "phi",
    "grad_y_phi",
    "greens_halfspace",
    "grad_y_halfspace",
    "kernel_eval",
    "dG_dnu",
    "expansion_remainder",
    "normal_expansion_remainder",
    "gbound_ratio",
]


# ---------------------------------------------------------------- Hankel H_0^(1)

def hankel1_0_series(z):
    """Ascending series ``J_0 + i Y_0``; accurate for ``|z|`` up to about 10."""
    z = np.asarray(z, dtype=complex)
    q = -(z * z) / 4.0
    term = np.ones_like(z)
    j0 = np.ones_like(z)
    ysum = np.zeros_like(z)
    harmonic = 0.0
    for m in range(1, 60):
        term = term * q / (m * m)
        harmonic += 1.0 / m
        j0 = j0 + term
        ysum = ysum - harmonic * term
    y0 = (2 / np.pi) * ((np.log(z / 2) + EULER_GAMMA) * j0 + ysum)
    return j0 + 1j * y0


@lru_cache(maxsize=4)
def _laguerre(n):
    u, w = roots_genlaguerre(n, -0.5)
    return u, w


def hankel1_0_asymptotic(z, nodes=LAGUERRE_NODES):
    """Large-argument form via the Laplace integral of the Hankel expansion.

    ``H_0(z) = sqrt(2/(pi z)) e^{i(z - pi/4)} / sqrt(pi) *
    int_0^inf e^{-u} u^{-1/2} (1 + i u / (2z))^{-1/2} du``, evaluated by
    generalized Gauss-Laguerre quadrature.  Expanding the last factor
    term by term gives the classical asymptotic series; integrating it
    instead removes the optimal-truncation error of that series.
    """
    z = np.asarray(z, dtype=complex)
    u, w = _laguerre(nodes)
    integrand = (1.0 + 1j * u / (2.0 * z[..., None])) ** -0.5
    integral = np.sum(w * integrand, axis=-1)
    return np.sqrt(2.0 / (np.pi * z)) * np.exp(1j * (z - np.pi / 4)) * integral / np.sqrt(np.pi)


def hankel1_0(z):
    """Hankel function ``H_0^(1)(z)`` for ``z`` with ``Re z > 0`` or ``Im z >= 0``."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    small = np.abs(z) < SERIES_RADIUS
    if np.any(small):
        out[small] = hankel1_0_series(z[small])
    if np.any(~small):
        out[~small] = hankel1_0_asymptotic(z[~small])
    return out


def _hankel1_1(z):
    """``H_1^(1)`` via ``-d/dz H_0`` using the same two regimes (gradient support)."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    small = np.abs(z) < SERIES_RADIUS
    if np.any(small):
        zs = z[small]
        q = -(zs * zs) / 4.0
        # J_1 = (z/2) sum (-z^2/4)^m / (m! (m+1)!)
        term = zs / 2
        j1 = term.copy()
        # Y_1 = (2/pi)(ln(z/2)+gamma) J_1 - 2/(pi z)
        #       - (1/pi) sum (-z^2/4)^m (H_m + H_{m+1}) / (m!(m+1)!) * (z/2)
        hsum = 1.0
        corr = term * hsum
        hm = 0.0
        for m in range(1, 60):
            term = term * q / (m * (m + 1))
            hm += 1.0 / m
            j1 = j1 + term
            corr = corr + term * (hm + hm + 1.0 / (m + 1))
        y1 = (2 / np.pi) * (np.log(zs / 2) + EULER_GAMMA) * j1 - 2 / (np.pi * zs) - corr / np.pi
        out[small] = j1 + 1j * y1
    if np.any(~small):
        zl = z[~small]
        u, w = _laguerre(LAGUERRE_NODES)
        a = 1.0 + 1j * u / (2.0 * zl[..., None])
        # weight e^{-u} u^{1/2} / Gamma(3/2) written against the u^{-1/2} rule
        integral = np.sum(w * u * a**0.5, axis=-1)
        out[~small] = (np.sqrt(2.0 / (np.pi * zl)) * np.exp(1j * (zl - 3 * np.pi / 4))
                       * 2 * integral / np.sqrt(np.pi))
    return out


# ---------------------------------------------------------------- fundamental solutions

def _check_k(k):
    k = complex(k)
    if k.imag < 0:
        raise ValueError("wavenumber must satisfy Im k >= 0")
    return k


def _distance(x, y):
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r = np.sqrt(np.sum(d * d, axis=-1))
    return d, r


def phi(x, y, k, dim=3):
    """Outgoing fundamental solution of ``Delta u + k^2 u = 0``.

    Parameters
    ----------
    x, y : array_like
        Points of shape ``(..., dim)``.
    k : complex
        Wavenumber, ``Im k >= 0``.
    dim : {2, 3}

    Raises
    ------
    ValueError
        If any ``x`` coincides with ``y``.
    """
    k = _check_k(k)
    _, r = _distance(x, y)
    if np.any(r == 0):
        raise ValueError("phi is singular at coincident points")
    if dim == 3:
        return np.exp(1j * k * r) / (4 * np.pi * r)
    if dim == 2:
        return 0.25j * hankel1_0(k * r)
    raise ValueError("dim must be 2 or 3")


def grad_y_phi(x, y, k, dim=3):
    """Gradient of ``phi(x, y)`` with respect to ``y``, shape ``(..., dim)``."""
    k = _check_k(k)
    d, r = _distance(x, y)
    if np.any(r == 0):
        raise ValueError("phi is singular at coincident points")
    if dim == 3:
        radial = (1j * k * r - 1) * np.exp(1j * k * r) / (4 * np.pi * r * r)
    elif dim == 2:
        radial = -0.25j * k * _hankel1_1(k * r)
    else:
        raise ValueError("dim must be 2 or 3")
    # d phi / d y = phi'(r) * (y - x) / r
    return (radial / r)[..., None] * (-d)


def _reflect(y):
    y = np.array(y, dtype=float, copy=True)
    y[..., -1] *= -1
    return y


def greens_halfspace(x, y, k, dim=3):
    """Dirichlet Green's function of the half-space ``x_n > 0``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    yr = _reflect(y)
    _, r1 = _distance(x, y)
    _, r2 = _distance(x, yr)
    if np.any(r1 == 0) or np.any(r2 == 0):
        raise ValueError("coincident points (or point coincides with an image)")
    on_plane = y[..., -1] == 0
    out = phi(x, y, k, dim) - phi(x, yr, k, dim)
    if np.any(on_plane):
        out = np.where(on_plane, 0.0, out)
    return out


def grad_y_halfspace(x, y, k, dim=3):
    """Gradient in ``y`` of :func:`greens_halfspace`."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    g1 = grad_y_phi(x, y, k, dim)
    g2 = grad_y_phi(x, _reflect(y), k, dim)
    g2[..., -1] *= -1
    return g1 - g2


@dataclass(frozen=True)
class KernelEval:
    """Half-space kernel value and optional gradient in ``y``."""

    value: complex | np.ndarray
    gradient_y: np.ndarray | None = None


def kernel_eval(x, y, k, dim=3, gradient=False):
    """Evaluate ``G(x, y)`` and optionally its ``y``-gradient."""
    val = greens_halfspace(x, y, k, dim)
    grad = grad_y_halfspace(x, y, k, dim) if gradient else None
    return KernelEval(val, grad)


def dG_dnu(x, y, normal, k):
    """Normal derivative ``dG/dnu(y)`` of the 3D half-space Green's function.

    Implements the six-term closed form (direct and image contributions,
    lateral and vertical normal components) divided by ``4 pi``.

    Parameters
    ----------
    x, y : array_like, shape (..., 3)
    normal : array_like, shape (..., 3)
        Unit normal at ``y``.
    k : complex
        Wavenumber, nonzero.
    """
    k = _check_k(k)
    if k == 0:
        raise ValueError("dG_dnu requires k > 0")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    nu = np.asarray(normal, dtype=float)
    dl = x[..., :2] - y[..., :2]
    r = np.sqrt(np.sum(dl * dl, axis=-1) + (x[..., 2] - y[..., 2]) ** 2)
    rp = np.sqrt(np.sum(dl * dl, axis=-1) + (x[..., 2] + y[..., 2]) ** 2)
    if np.any(r == 0) or np.any(rp == 0):
        raise ValueError("coincident points")
    e = np.exp(1j * k * r)
    ep = np.exp(1j * k * rp)
    lat = np.sum(nu[..., :2] * dl, axis=-1)
    n3 = nu[..., 2]
    dm = x[..., 2] - y[..., 2]
    dp = x[..., 2] + y[..., 2]
    total = (-1j * k * lat * (e / r**2 - ep / rp**2)
             + lat * (e / r**3 - ep / rp**3)
             - 1j * k * n3 * dm * e / r**2
             + n3 * dm * e / r**3
             - 1j * k * n3 * dp * ep / rp**2
             + n3 * dp * ep / rp**3)
    return total / (4 * np.pi)


# ---------------------------------------------------------------- expansions and decay

def _check_heights(h, s, c):
    h = np.asarray(h, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(h < 0) or np.any(s < 0) or np.any(h > c) or np.any(s > c):
        raise ValueError(f"heights must lie in [0, {c}]")
    return h, s


def expansion_remainder(xt, yt, h, s, k, c=2.0):
    """Scaled remainder of the far-field expansion of ``G`` between two heights.

    Returns ``|G(x~ + h e3, y~ + s e3) + (2hs / 4 pi) i k e^{ikr} / r^2| * r^3``
    with ``r = |x~ - y~|``.  Boundedness in ``r`` certifies that the leading
    term captures ``G`` up to ``O(r^-3)``.
    """
    h, s = _check_heights(h, s, c)
    xt = np.asarray(xt, dtype=float)
    yt = np.asarray(yt, dtype=float)
    r = np.sqrt(np.sum((xt - yt) ** 2, axis=-1))
    if np.any(r == 0):
        raise ValueError("lateral points must differ")
    x = np.concatenate([xt, np.broadcast_to(h, xt.shape[:-1])[..., None]], axis=-1)
    y = np.concatenate([yt, np.broadcast_to(s, yt.shape[:-1])[..., None]], axis=-1)
    lead = (2 * h * s / (4 * np.pi)) * 1j * k * np.exp(1j * k * r) / r**2
    return np.abs(greens_halfspace(x, y, k) + lead) * r**3


def normal_expansion_remainder(xt, yt, h, s, normal, k, c=2.0):
    """Scaled remainder of the far-field expansion of ``4 pi dG/dnu(y)``.

    Leading term: ``-k^2 (nu~ . (x~ - y~)) / r * e^{ikr} / r^2 * 2hs
    - i k nu_3 e^{ikr} / r^2 * 2h``; the returned value is
    ``|4 pi dG/dnu - leading| * r^3``.
    """
    h, s = _check_heights(h, s, c)
    xt = np.asarray(xt, dtype=float)
    yt = np.asarray(yt, dtype=float)
    nu = np.broadcast_to(np.asarray(normal, dtype=float), xt.shape[:-1] + (3,))
    d = xt - yt
    r = np.sqrt(np.sum(d * d, axis=-1))
    if np.any(r == 0):
        raise ValueError("lateral points must differ")
    x = np.concatenate([xt, np.broadcast_to(h, xt.shape[:-1])[..., None]], axis=-1)
    y = np.concatenate([yt, np.broadcast_to(s, yt.shape[:-1])[..., None]], axis=-1)
    e = np.exp(1j * k * r)
    lat = np.sum(nu[..., :2] * d, axis=-1)
    lead = -k**2 * lat / r * e / r**2 * 2 * h * s - 1j * k * nu[..., 2] * e / r**2 * 2 * h
    return np.abs(4 * np.pi * dG_dnu(x, y, nu, k) - lead) * r**3


def gbound_ratio(x, y, k):
    """``|G(x, y)| |x - y|^2 / ((1 + x_3)(1 + y_3))`` for points in the upper half-space.

    The ratio is bounded over the closed half-space away from ``x = y``.
    Near-coincident pairs produce large values; these are logged, not raised.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x[..., -1] < 0) or np.any(y[..., -1] < 0):
        raise ValueError("points must have nonnegative heights")
    _, r = _distance(x, y)
    g = greens_halfspace(x, y, k)
    ratio = np.abs(g) * r**2 / ((1 + x[..., -1]) * (1 + y[..., -1]))
    big = ratio > NEAR_SINGULAR_RATIO
    if np.any(big):
        logger.warning("gbound_ratio: %d near-coincident pairs with ratio above %g",
                       int(np.sum(big)), NEAR_SINGULAR_RATIO)
    return ratio
