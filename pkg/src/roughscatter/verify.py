"""Independent oracles and residual checks.

Nothing here reuses the discretizations it is meant to check: the mode
oracle assembles its own one-dimensional problem, and the layer-potential
and jump probes integrate the Green's-function primitives with their own
adaptive polar quadrature.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import RectBivariateSpline
from scipy.linalg import solve_banded

from . import greens

logger = logging.getLogger(__name__)

MIN_OFFSET = 1e-6

__all__ = [
    "OracleField",
    "image_oracle",
    "helmholtz_residual",
    "ResidualReport",
    "mode_ode_oracle",
    "ModeSolution",
    "manufactured_layer_mode",
    "jump_probe",
    "JumpReport",
    "layer_potential_oracle",
    "richardson_limit",
]


@dataclass(frozen=True)
class OracleField:
    """A closed-form field ``evaluate(points) -> values``."""

    evaluate: Callable
    description: str

    def __call__(self, points):
        return self.evaluate(np.asarray(points, dtype=float))


def image_oracle(z, h, k, dim=3):
    """Field of a point source at ``z`` above the sound-soft plane ``x_n = h``.

    ``G_h(x, z) = Phi(x, z) - Phi(x, z*)`` with ``z*`` the mirror image of
    ``z`` in the plane.

    Raises
    ------
    ValueError
        If the source is on or below the plane.
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (dim,):
        raise ValueError(f"source must have {dim} coordinates")
    if not z[-1] > h:
        raise ValueError("source must lie above the plane")
    zi = z.copy()
    zi[-1] = 2 * h - z[-1]

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        out = greens.phi(x, z, k, dim) - greens.phi(x, zi, k, dim)
        return np.where(x[..., -1] == h, 0.0, out)

    return OracleField(evaluate, f"image field, source {z.tolist()}, plane x_n = {h}")


# ---------------------------------------------------------------- Helmholtz residual

@dataclass(frozen=True)
class ResidualReport:
    """Residual of ``Delta u + k^2 u`` per stencil width and fitted order."""

    widths: list
    residuals: list
    order: float | None

    def to_dict(self):
        return asdict(self)


def helmholtz_residual(sampler, k, probes, widths, matched=True):
    """Finite-difference Helmholtz residual at probe points.

    Uses the (2d+1)-point Laplacian.  With ``matched`` the wavenumber is
    replaced by ``(2/w) sin(k w / 2)``, which the stencil reproduces exactly
    for axis-aligned plane waves; the truncation error stays ``O(w^2)``.

    Parameters
    ----------
    sampler : callable
        ``sampler(points)`` with points of shape ``(..., d)``.
    k : float
    probes : array_like, shape (P, d)
    widths : sequence of float
        Stencil widths, typically decreasing by 2.

    Returns
    -------
    ResidualReport
        Maximum absolute residual per width and the least-squares slope of
        ``log residual`` against ``log width`` (``None`` when residuals
        vanish to rounding).
    """
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    d = probes.shape[-1]
    res = []
    for w in widths:
        centre = sampler(probes)
        lap = -2 * d * centre
        for a in range(d):
            e = np.zeros(d)
            e[a] = w
            lap = lap + sampler(probes + e) + sampler(probes - e)
        lap = lap / (w * w)
        kk = (2 / w * np.sin(k * w / 2)) ** 2 if matched else k * k
        res.append(float(np.max(np.abs(lap + kk * centre))))
    r = np.asarray(res)
    order = None
    if np.all(r > 0) and len(widths) > 1:
        scale = np.max(np.abs(sampler(probes)))
        if np.min(r) > 1e-12 * max(scale, 1.0) / min(widths) ** 2:
            order = float(np.polyfit(np.log(widths), np.log(r), 1)[0])
    return ResidualReport(list(map(float, widths)), res, order)


# ---------------------------------------------------------------- mode ODE oracle

@dataclass(frozen=True)
class ModeSolution:
    """Solution of the separated vertical problem at the nodes ``heights``."""

    heights: np.ndarray
    values: np.ndarray
    xi: float
    scheme: str

    def __call__(self, y):
        return np.interp(y, self.heights, self.values.real) + 1j * np.interp(y, self.heights, self.values.imag)


def _as_profile(p):
    if callable(p):
        return lambda y: np.asarray(p(np.asarray(y, dtype=float)), dtype=complex) * np.ones(np.shape(y))
    return lambda y: complex(p) * np.ones(np.shape(y), dtype=complex)


def _mu(k2_top, xi):
    d = k2_top - xi * xi
    return np.sqrt(complex(d)) if np.real(d) >= 0 else 1j * np.sqrt(complex(-d))


def mode_ode_oracle(xi, k2, f, H, g, n_nodes=2000, scheme="numerov", lateral_spacing=None,
                    robin_data=0.0):
    """Solve ``-u'' + (xi^2 - k^2) u = -g`` on ``[f, H]`` with ``u(f) = 0`` and ``u'(H) = i mu u(H)``.

    ``mu = sqrt(k^2(H) - xi^2)`` on the branch with ``i sqrt(xi^2 - k^2)``
    above cutoff, so the closure is the exact radiation condition of the
    outgoing mode.

    Parameters
    ----------
    xi : float
        Lateral frequency.
    k2 : callable or complex
        ``k^2`` as a function of height.
    f, H : float
        Bottom and top of the interval.
    g : callable or complex
        Vertical profile of the source.
    n_nodes : int
        Number of nodes including both ends.
    scheme : {"numerov", "consistent"}
        ``numerov``: fourth-order compact differences with a fourth-order
        Robin closure.  ``consistent``: piecewise-linear finite elements
        on the same uniform nodes with two-point Gauss integration of
        ``k^2``, the radiation term evaluated exactly and ``xi^2`` replaced
        by the discrete lateral eigenvalue ``lambda_K / lambda_M`` of
        periodic linear elements of size ``lateral_spacing`` (this is the
        exact separation of a tensor-product bilinear discretization).
    robin_data : complex
        Inhomogeneous closure ``u'(H) - i mu u(H) = robin_data``
        (numerov only; used by manufactured checks).
    """
    k2f = _as_profile(k2)
    gf = _as_profile(g)
    y = np.linspace(f, H, n_nodes)
    h = y[1] - y[0]
    mu = _mu(k2f(np.array([H]))[0], xi)
    if scheme == "consistent":
        if lateral_spacing is None:
            xi2 = xi * xi
        else:
            dx = lateral_spacing
            lam_k = 2 / dx * (1 - np.cos(xi * dx))
            lam_m = dx * (4 + 2 * np.cos(xi * dx)) / 6
            xi2 = lam_k / lam_m
        vals = _fe_mode(y, xi2, k2f, gf, -1j * mu)
    elif scheme == "numerov":
        vals = _numerov_mode(y, h, xi, k2f, gf, mu, robin_data)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return ModeSolution(y, vals, float(xi), scheme)


def _fe_mode(y, xi2, k2f, gf, z):
    n = len(y)
    h = np.diff(y)
    gp, gw = np.polynomial.legendre.leggauss(2)
    s = 0.5 * (gp + 1)
    w = 0.5 * gw
    A = np.zeros((n, n), dtype=complex)
    Mg = np.zeros((n, n))
    for e in range(n - 1):
        he = h[e]
        ke = np.array([[1, -1], [-1, 1]]) / he
        me = he * np.array([[2, 1], [1, 2]]) / 6
        yq = y[e] + s * he
        N = np.stack([1 - s, s], 1)
        mk = he * np.einsum("q,q,qa,qb->ab", w, k2f(yq), N, N)
        sl = slice(e, e + 2)
        A[sl, sl] += ke + xi2 * me - mk
        Mg[sl, sl] += me
    A[-1, -1] += z
    b = -(Mg @ gf(y))
    u = np.zeros(n, dtype=complex)
    u[1:] = np.linalg.solve(A[1:, 1:], b[1:])
    return u


def _numerov_mode(y, h, xi, k2f, gf, mu, robin):
    # u'' = q u - r with q = xi^2 - k^2, r = -g
    n = len(y)
    top = y[-1]
    ye = np.append(y, top + h)
    q = xi * xi - k2f(ye)
    r = -gf(ye)
    step = 1e-4 * max(1.0, abs(top))
    dq = -(k2f(np.array([top + step])) - k2f(np.array([top - step])))[0] / (2 * step)
    dr = -(gf(np.array([top + step])) - gf(np.array([top - step])))[0] / (2 * step)
    m = n - 1  # unknowns u_1..u_{n-1}
    ab = np.zeros((3, m), dtype=complex)
    rhs = np.zeros(m, dtype=complex)
    c = h * h / 12
    for j in range(1, n):
        row = j - 1
        ab[1, row] = -2 - 10 * c * q[j]
        rhs[row] = -c * (r[j + 1] + 10 * r[j] + r[j - 1])
        if j > 1:
            ab[2, row - 1] = 1 - c * q[j - 1]
        if j < n - 1:
            ab[0, row + 1] = 1 - c * q[j + 1]
    # top row: ghost u_{n} = u_{n-2} + 2h [u'(H) + h^2/6 (q' u + q u' - r')]
    qt = q[n - 1]
    coef_u = 2 * h * (1j * mu * (1 + h * h * qt / 6) + h * h * dq / 6)
    const = 2 * h * (robin * (1 + h * h * qt / 6) - h * h * dr / 6)
    a_ghost = 1 - c * q[n]
    row = m - 1
    ab[1, row] += a_ghost * coef_u
    ab[2, row - 1] += a_ghost
    rhs[row] -= a_ghost * const
    sol = solve_banded((1, 1), ab, rhs)
    return np.concatenate([[0.0], sol])


def manufactured_layer_mode(surface, H, k, xi):
    """Exact field and source for the layer problem on a 1D-lateral surface.

    ``w = E q(t)`` with ``E = exp(i xi x + i beta (y - H))``,
    ``beta = sqrt(k^2 - xi^2)``, ``t = (y - f(x)) / (H - f(x))`` and
    ``q(t) = sin(pi t / 2)``.  ``w`` vanishes on the surface, its top trace
    is the outgoing mode ``E`` and ``dw/dy = i beta E`` on ``y = H``
    (``q'(1) = 0``), so it satisfies the radiation closure exactly.

    Returns
    -------
    (w, g) : callables of ``(x, y)`` with ``g = Delta w + k^2 w``.
    """
    beta = _mu(k * k, xi)
    c = np.pi / 2

    def parts(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        f = surface.height(x)
        fp = surface.gradient(x)[..., 0]
        fpp = surface.hessian(x)[..., 0, 0]
        D = H - f
        t = (y - f) / D
        E = np.exp(1j * xi * x + 1j * beta * (y - H))
        return f, fp, fpp, D, t, E

    def w(x, y):
        _, _, _, _, t, E = parts(x, y)
        return E * np.sin(c * t)

    def g(x, y):
        f, fp, fpp, D, t, E = parts(x, y)
        q1 = c * np.cos(c * t)
        q2 = -c * c * np.sin(c * t)
        tx = fp * (t - 1) / D
        ty = 1 / D
        txx = (t - 1) * (fpp / D + 2 * fp * fp / (D * D))
        lapQ = q2 * (tx * tx + ty * ty) + q1 * txx
        return E * (lapQ + 2j * xi * q1 * tx + 2j * beta * q1 * ty)

    return w, g


# ---------------------------------------------------------------- surface quadrature

def _smooth_step(s):
    """C-infinity step: 0 for ``s <= 0``, 1 for ``s >= 1``."""
    s = np.clip(s, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(s > 0, np.exp(-1 / np.where(s > 0, s, 1)), 0.0)
        b = np.where(s < 1, np.exp(-1 / np.where(s < 1, 1 - s, 1)), 0.0)
    return a / (a + b)


def _near_cut(rho, rho0):
    """1 for ``rho < rho0 / 2``, 0 for ``rho > rho0``, smooth in between."""
    return 1 - _smooth_step(2 * rho / rho0 - 1)


def _surface_geometry(surface, lat):
    f = surface.height(lat)
    gr = surface.gradient(lat)
    J = np.sqrt(1 + np.sum(gr * gr, -1))
    nu = np.concatenate([-gr, np.ones(gr.shape[:-1] + (1,))], -1) / J[..., None]
    pts = np.concatenate([lat, f[..., None]], -1)
    return pts, nu, J


def _polar_nodes(centre, rho0, rho_min, n_radial=12, n_angle=64):
    edges = [0.0]
    r = rho_min
    while r < rho0:
        edges.append(r)
        r *= 2
    edges.append(rho0)
    gx, gw = np.polynomial.legendre.leggauss(n_radial)
    rr, ww = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        rr.append(0.5 * (b - a) * gx + 0.5 * (a + b))
        ww.append(0.5 * (b - a) * gw)
    rr = np.concatenate(rr)
    ww = np.concatenate(ww)
    th = 2 * np.pi * np.arange(n_angle) / n_angle
    R, TH = np.meshgrid(rr, th, indexing="ij")
    lat = centre + np.stack([R * np.cos(TH), R * np.sin(TH)], -1)
    W = (ww * rr)[:, None] * (2 * np.pi / n_angle) * np.ones_like(TH)
    return lat.reshape(-1, 2), W.ravel(), R.ravel()


def _tensor_nodes(R, panel=0.5, order=6):
    n = max(1, int(np.ceil(2 * R / panel)))
    edges = np.linspace(-R, R, n + 1)
    gx, gw = np.polynomial.legendre.leggauss(order)
    x = (0.5 * np.diff(edges)[:, None] * gx + 0.5 * (edges[1:] + edges[:-1])[:, None]).ravel()
    w = (0.5 * np.diff(edges)[:, None] * gw).ravel()
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    return np.stack([X1.ravel(), X2.ravel()], -1), np.outer(w, w).ravel()


def _density_callable(mesh, phi):
    if callable(phi):
        return phi
    samples = np.asarray(getattr(phi, "samples", phi), dtype=complex).reshape(mesh.m, mesh.m)
    c = -mesh.R + (np.arange(mesh.m) + 0.5) * mesh.spacing
    sr = RectBivariateSpline(c, c, samples.real, kx=3, ky=3)
    si = RectBivariateSpline(c, c, samples.imag, kx=3, ky=3)

    def fn(lat):
        lat = np.asarray(lat, dtype=float)
        return sr.ev(lat[..., 0], lat[..., 1]) + 1j * si.ev(lat[..., 0], lat[..., 1])

    return fn


def _taper(mesh, lat):
    def t1(s):
        a = np.abs(s)
        t = np.clip((a - (mesh.R - mesh.taper_width)) / mesh.taper_width, 0.0, 1.0)
        return 0.5 * (1 + np.cos(np.pi * t))

    return t1(lat[..., 0]) * t1(lat[..., 1])


def _kernel(kind, x, y, nu, k):
    if kind == "double":
        return greens.dG_dnu(x, y, nu, k)
    return greens.greens_halfspace(x, y, k)


def _boundary_integral(mesh, density, x_lat, targets, kind, rho0, rho_min, subtract_boundary):
    """``int [a(target, y) - a(x, y)] psi(y) ds`` (or without the subtraction) for each target."""
    surface = mesh.surface
    k = mesh.k
    xb = _surface_geometry(surface, x_lat[None])[0][0]
    lat_n, w_n, rho_n = _polar_nodes(x_lat, rho0, rho_min)
    lat_f, w_f = _tensor_nodes(mesh.R)
    dist_f = np.sqrt(np.sum((lat_f - x_lat) ** 2, -1))
    keep = dist_f > rho0 / 2
    lat_f, w_f, dist_f = lat_f[keep], w_f[keep], dist_f[keep]
    out = []
    parts = []
    for lat, w, cut in ((lat_n, w_n, _near_cut(rho_n, rho0)), (lat_f, w_f, 1 - _near_cut(dist_f, rho0))):
        pts, nu, J = _surface_geometry(surface, lat)
        psi = density(lat) * _taper(mesh, lat)
        parts.append((pts, nu, w * J * cut * psi))
    for tgt in targets:
        total = 0j
        for pts, nu, wp in parts:
            vals = _kernel(kind, np.broadcast_to(tgt, pts.shape), pts, nu, k)
            if subtract_boundary:
                near0 = np.sum((pts - xb) ** 2, -1) > 0
                base = np.zeros_like(vals)
                base[near0] = _kernel(kind, np.broadcast_to(xb, pts[near0].shape), pts[near0], nu[near0], k)
                vals = vals - base
            total += np.sum(vals * wp)
        out.append(total)
    return np.asarray(out), xb


def richardson_limit(offsets, values):
    """Polynomial extrapolation of ``values(offsets)`` to offset zero."""
    offsets = np.asarray(offsets, dtype=float)
    V = np.vander(offsets, len(offsets), increasing=True)
    coef = np.linalg.solve(V, np.asarray(values, dtype=complex))
    return complex(coef[0])


@dataclass(frozen=True)
class JumpReport:
    """Extrapolated boundary jump of a layer potential at one boundary point."""

    kind: str
    point: list
    offsets: list
    raw: list
    jump: complex
    expected: complex
    error: float

    def to_dict(self):
        d = asdict(self)
        for key in ("jump", "expected"):
            d[key] = [d[key].real, d[key].imag]
        d["raw"] = [[v.real, v.imag] for v in self.raw]
        return d


def jump_probe(mesh, phi, x, offsets, kind="double", rho0=1.0):
    """Extrapolated jump of the double- (or single-) layer potential at a boundary point.

    Computes ``P(x + eps e_n) - P_Gamma(x)`` for each offset, where ``P`` is
    the (undoubled) half-space potential of the tapered density and
    ``P_Gamma`` its boundary value (``K phi / 2`` or ``S phi / 2``), and
    extrapolates to ``eps = 0``.  The contract is a jump of ``phi(x) / 2``
    for the double layer and ``0`` for the single layer.

    Parameters
    ----------
    mesh : BoundaryMesh
        Supplies the surface, the window and taper, and ``k``.
    phi : BoundaryDensity, array or callable
        Density; samples are interpolated by bicubic splines.
    x : int or array_like
        Node index or lateral point.
    offsets : sequence of float
        Decreasing positive offsets (at least two).
    kind : {"double", "single"}

    Raises
    ------
    ValueError
        Offsets not decreasing, non-positive, or below ``1e-6``.
    """
    offsets = np.asarray(offsets, dtype=float)
    if len(offsets) < 2 or np.any(np.diff(offsets) >= 0):
        raise ValueError("offsets must be a decreasing list of at least two values")
    if np.any(offsets <= 0) or np.any(offsets < MIN_OFFSET):
        raise ValueError(f"offsets must be at least {MIN_OFFSET:g} (quadrature resolution)")
    if kind not in ("double", "single"):
        raise ValueError("kind must be 'double' or 'single'")
    x_lat = mesh.lateral[int(x)] if np.ndim(x) == 0 else np.asarray(x, dtype=float)
    density = _density_callable(mesh, phi)
    xb = _surface_geometry(mesh.surface, x_lat[None])[0][0]
    targets = [xb + np.array([0.0, 0.0, e]) for e in offsets]
    raw, _ = _boundary_integral(mesh, density, x_lat, targets, kind, rho0,
                                offsets.min() / 16, subtract_boundary=True)
    jump = richardson_limit(offsets, raw)
    psi = complex(density(x_lat[None])[0] * _taper(mesh, x_lat[None])[0])
    expected = 0.5 * psi if kind == "double" else 0j
    return JumpReport(kind, x_lat.tolist(), offsets.tolist(), [complex(v) for v in raw], jump, expected,
                      float(abs(jump - expected)))


def layer_potential_oracle(mesh, phi, x, which="S", rho0=1.0):
    """``S phi`` or ``K phi`` at a boundary point by adaptive polar quadrature.

    The singular neighbourhood is integrated in polar coordinates centred
    at ``x`` (geometric radial panels down to ``1e-8 rho0``), the rest by
    tensor Gauss panels, blended by a smooth partition of unity.  The
    density is tapered exactly as in the Nyström mesh.
    """
    x_lat = mesh.lateral[int(x)] if np.ndim(x) == 0 else np.asarray(x, dtype=float)
    density = _density_callable(mesh, phi)
    kind = "single" if which == "S" else "double"
    xb = _surface_geometry(mesh.surface, x_lat[None])[0][0]
    surface = mesh.surface
    lat_n, w_n, rho_n = _polar_nodes(x_lat, rho0, 1e-8 * rho0)
    keep = rho_n > 0
    lat_n, w_n, rho_n = lat_n[keep], w_n[keep], rho_n[keep]
    lat_f, w_f = _tensor_nodes(mesh.R)
    dist_f = np.sqrt(np.sum((lat_f - x_lat) ** 2, -1))
    keepf = dist_f > rho0 / 2
    lat_f, w_f, dist_f = lat_f[keepf], w_f[keepf], dist_f[keepf]
    total = 0j
    for lat, w, cut in ((lat_n, w_n, _near_cut(rho_n, rho0)), (lat_f, w_f, 1 - _near_cut(dist_f, rho0))):
        pts, nu, J = _surface_geometry(surface, lat)
        psi = density(lat) * _taper(mesh, lat)
        vals = _kernel(kind, np.broadcast_to(xb, pts.shape), pts, nu, mesh.k)
        total += np.sum(vals * w * J * cut * psi)
    return complex(2 * total)
