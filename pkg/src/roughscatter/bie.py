"""Nyström discretization of the half-space layer operators on a truncated 3D graph surface.

Nodes are cell centres of a uniform ``m x m`` lateral grid on ``[-R, R]^2``.
Each node carries the weight ``Delta^2 J_f tau`` where ``tau`` is a cosine
taper that ramps the density support to zero over the outer
``taper_width`` annulus.

Operators (all with the half-space Green's function ``G``):

* ``S phi = 2 int G phi ds``
* ``K phi = 2 int dG/dnu(y) phi ds``
* ``A = I + K - i eta S``

Normals point *up*, into the propagation domain.  With this choice the
double-layer potential approaches ``+phi/2 + K phi/2`` from above, so
``v = DLP - i eta SLP`` has boundary trace ``A phi / 2`` and ``A phi = 2 g``
yields a field with trace ``g``.

Diagonal entries integrate the static singularity over the self cell in
polar coordinates on the tangent plane and add the lattice correction for
the midpoint rule on the neighbouring cells; the smooth remainder
(``ik / 4 pi`` for ``S``) and the image term are added pointwise.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .errors import SolverError
from .geometry import SurfaceProfile

logger = logging.getLogger(__name__)

DENSE_LIMIT = 48
BLOCK_ROWS = 256
LATTICE_RADIUS = 4

__all__ = [
    "BoundaryMesh",
    "BoundaryDensity",
    "build_mesh",
    "apply_S",
    "apply_K",
    "apply_A",
    "split_operator",
    "dense_operators",
    "solve_density",
    "eval_field",
    "inverse_norm_estimate",
    "static_self_coefficient",
]


@dataclass(frozen=True)
class BoundaryMesh:
    """Cell-centred quadrature nodes on the truncated surface.

    Attributes
    ----------
    surface : SurfaceProfile
        Two-dimensional-lateral graph surface.
    R, taper_width : float
        Window half-width and taper annulus width.
    m : int
        Nodes per axis.
    k : float
        Wavenumber.
    lateral : ndarray, shape (N, 2)
    points : ndarray, shape (N, 3)
    normals : ndarray, shape (N, 3)
        Unit normals pointing up (into the domain above the surface).
    jacobian, taper, weights : ndarray, shape (N,)
    self_S, self_K : ndarray, shape (N,)
        Diagonal entries of the discrete ``S`` and ``K``.
    """

    surface: SurfaceProfile
    R: float
    m: int
    taper_width: float
    k: float
    lateral: np.ndarray = field(repr=False)
    points: np.ndarray = field(repr=False)
    normals: np.ndarray = field(repr=False)
    jacobian: np.ndarray = field(repr=False)
    taper: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    self_S: np.ndarray = field(repr=False)
    self_K: np.ndarray = field(repr=False)
    warnings: tuple = ()

    @property
    def spacing(self):
        return 2 * self.R / self.m

    @property
    def size(self):
        return self.m * self.m

    @property
    def untapered(self):
        """Mask of nodes with full weight (taper equal to one)."""
        return self.taper >= 1.0


@dataclass(frozen=True)
class BoundaryDensity:
    """Density samples at the mesh nodes."""

    mesh: BoundaryMesh
    samples: np.ndarray

    def __post_init__(self):
        if np.shape(self.samples) != (self.mesh.size,):
            raise ValueError(f"density has shape {np.shape(self.samples)}, mesh has {self.mesh.size} nodes")


def _taper_1d(s, R, width):
    a = np.abs(s)
    t = np.clip((a - (R - width)) / width, 0.0, 1.0)
    return 0.5 * (1 + np.cos(np.pi * t))


def _polar_rule(n_per_octant=24):
    """Gauss rule on ``[0, 2 pi)`` split at multiples of ``pi / 4``."""
    x, w = np.polynomial.legendre.leggauss(n_per_octant)
    th = []
    wt = []
    for j in range(8):
        a, b = j * np.pi / 4, (j + 1) * np.pi / 4
        th.append(0.5 * (b - a) * x + 0.5 * (a + b))
        wt.append(0.5 * (b - a) * w)
    return np.concatenate(th), np.concatenate(wt)


def static_self_coefficient(M, P=LATTICE_RADIUS):
    """Corrected midpoint coefficient for ``int |q|_M^{-1} dq`` on the unit lattice.

    Returns ``C(M)`` such that, for a unit-spaced cell-centred lattice, the
    integral of ``(q^T M q)^{-1/2} psi(q)`` over the plane equals the
    midpoint sum over nonzero lattice points plus ``C(M) psi(0)`` up to
    terms that vanish for slowly varying ``psi``.  It is the exact self-cell
    polar integral, plus the cell-integral-minus-midpoint differences over
    ``0 < |p|_inf <= P``, plus an asymptotic tail.

    Parameters
    ----------
    M : ndarray, shape (..., 2, 2)
        Symmetric positive definite metric tensors.
    P : int
        Lattice radius summed explicitly.
    """
    M = np.asarray(M, dtype=float)
    th, wt = _polar_rule()
    e = np.stack([np.cos(th), np.sin(th)], -1)
    eMe = np.einsum("ta,...ab,tb->...t", e, M, e)
    M2 = M @ M
    eM2e = np.einsum("ta,...ab,tb->...t", e, M2, e)
    tr = np.trace(M, axis1=-2, axis2=-1)[..., None]
    rmax = 0.5 / np.maximum(np.abs(e[:, 0]), np.abs(e[:, 1]))
    self_cell = np.sum(wt * rmax / np.sqrt(eMe), axis=-1)

    g, gw = np.polynomial.legendre.leggauss(8)
    g, gw = 0.5 * g, 0.5 * gw
    pr = np.arange(-P, P + 1)
    p1, p2 = np.meshgrid(pr, pr, indexing="ij")
    keep = (p1 != 0) | (p2 != 0)
    p = np.stack([p1[keep], p2[keep]], -1).astype(float)
    s1, s2 = np.meshgrid(g, g, indexing="ij")
    sub = np.stack([s1.ravel(), s2.ravel()], -1)
    sw = np.outer(gw, gw).ravel()
    q = p[:, None, :] + sub[None, :, :]

    m00 = M[..., 0, 0][..., None]
    m01 = M[..., 0, 1][..., None]
    m11 = M[..., 1, 1][..., None]

    def inv_norm(v):
        v0 = v[..., 0].ravel()
        v1 = v[..., 1].ravel()
        quad = m00 * v0 * v0 + 2 * m01 * v0 * v1 + m11 * v1 * v1
        return (quad ** -0.5).reshape(M.shape[:-2] + v.shape[:-1])

    cell = np.sum(sw * inv_norm(q), axis=-1)
    mid = inv_norm(p)
    lattice = np.sum(cell - mid, axis=-1)

    lap = -tr * eMe ** -1.5 + 3 * eM2e * eMe ** -2.5
    rP = (P + 0.5) / np.maximum(np.abs(e[:, 0]), np.abs(e[:, 1]))
    tail = np.sum(wt * lap / rP, axis=-1) / 24.0
    return self_cell + lattice + tail


def _curvature_self(M, Hs):
    """``int_theta e^T H e (e^T M e)^{-3/2} rho_max(theta) dtheta`` in unit-cell coordinates."""
    th, wt = _polar_rule()
    e = np.stack([np.cos(th), np.sin(th)], -1)
    eMe = np.einsum("ta,nab,tb->nt", e, M, e)
    eHe = np.einsum("ta,nab,tb->nt", e, Hs, e)
    rmax = 0.5 / np.maximum(np.abs(e[:, 0]), np.abs(e[:, 1]))
    return np.sum(wt * eHe * eMe ** -1.5 * rmax, axis=-1)


def build_mesh(surface, R, m, taper_width, k=1.0):
    """Cell-centred Nyström mesh of the surface over ``[-R, R]^2``.

    Parameters
    ----------
    surface : SurfaceProfile
        Must have two lateral variables.
    R : float
        Window half-width.
    m : int
        Even number of nodes per axis.
    taper_width : float
        Width of the cosine taper annulus, ``0 < taper_width < R``.
    k : float
        Wavenumber.

    Raises
    ------
    ValueError
        Bad window, taper or node count, a one-dimensional surface, or a
        surface below the plane ``x_3 = 0``.
    """
    if surface.dim_lateral != 2:
        raise ValueError("the integral-equation solver needs a surface over the plane")
    if not (R > taper_width > 0):
        raise ValueError("need R > taper_width > 0")
    if m < 2 or m % 2:
        raise ValueError("m must be an even positive integer")
    if not k > 0:
        raise ValueError("k must be positive")
    if surface.f_minus <= 0:
        raise ValueError("surface must lie strictly above x_3 = 0")
    notes = []
    if R < 2 * np.pi / k:
        msg = f"window half-width {R:g} is below one wavelength {2 * np.pi / k:.4g}"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
    delta = 2 * R / m
    c = -R + (np.arange(m) + 0.5) * delta
    X1, X2 = np.meshgrid(c, c, indexing="ij")
    lat = np.stack([X1.ravel(), X2.ravel()], -1)
    f = surface.height(lat)
    grad = surface.gradient(lat)
    J = np.sqrt(1 + np.sum(grad * grad, -1))
    normals = np.concatenate([-grad, np.ones((len(lat), 1))], -1) / J[:, None]
    taper = _taper_1d(lat[:, 0], R, taper_width) * _taper_1d(lat[:, 1], R, taper_width)
    w = delta * delta * J * taper
    points = np.concatenate([lat, f[:, None]], -1)

    Mt = np.eye(2)[None] + grad[:, :, None] * grad[:, None, :]
    if surface.kind == "flat":
        C = np.full(len(lat), static_self_coefficient(np.eye(2)))
        curv = np.zeros(len(lat))
    else:
        C = static_self_coefficient(Mt)
        curv = _curvature_self(Mt, surface.hessian(lat))
    image = points.copy()
    image[:, 2] *= -1
    d_img = 2 * f
    phi_img = np.exp(1j * k * d_img) / (4 * np.pi * d_img)
    # S diagonal: static self integral + smooth remainder ik/(4 pi) - image term, doubled
    self_S = 2 * (J * taper * delta * C / (4 * np.pi) + w * (1j * k / (4 * np.pi) - phi_img))
    # K diagonal: curvature term of the static kernel plus image normal derivative, doubled
    dimg = _dgdnu_image_only(points, points, normals, k)
    self_K = 2 * (taper * delta * curv / (8 * np.pi) + w * dimg)
    return BoundaryMesh(surface, float(R), int(m), float(taper_width), float(k), lat, points, normals,
                        J, taper, w, self_S, self_K, tuple(notes))


def _dgdnu_image_only(x, y, nu, k):
    """``-dPhi(x, y')/dnu(y)`` for coincident ``x = y`` (image part of dG/dnu)."""
    dp = x[..., 2] + y[..., 2]
    rp = np.abs(dp)
    ep = np.exp(1j * k * rp)
    n3 = nu[..., 2]
    return (-1j * k * n3 * dp * ep / rp**2 + n3 * dp * ep / rp**3) / (4 * np.pi)


def _kernels(xs, ys, nus, k):
    """Half-space ``G`` and ``dG/dnu(y)`` for all pairs (rows ``xs``, columns ``ys``)."""
    dl0 = xs[:, None, 0] - ys[None, :, 0]
    dl1 = xs[:, None, 1] - ys[None, :, 1]
    lat2 = dl0 * dl0 + dl1 * dl1
    dm = xs[:, None, 2] - ys[None, :, 2]
    dp = xs[:, None, 2] + ys[None, :, 2]
    r = np.sqrt(lat2 + dm * dm)
    rp = np.sqrt(lat2 + dp * dp)
    with np.errstate(divide="ignore", invalid="ignore"):
        e = np.exp(1j * k * r) / r
        ep = np.exp(1j * k * rp) / rp
        G = (e - ep) / (4 * np.pi)
        lat = nus[None, :, 0] * dl0 + nus[None, :, 1] * dl1
        n3 = nus[None, :, 2]
        a = (1 - 1j * k * r) * e / (r * r)
        b = (1 - 1j * k * rp) * ep / (rp * rp)
        dG = (lat * (a - b) + n3 * (dm * a + dp * b)) / (4 * np.pi)
    return G, dG


def _rows(mesh, start, stop, which, eta=0.0):
    """Rows ``start:stop`` of ``S``, ``K`` or ``K - i eta S`` (weights included)."""
    xs = mesh.points[start:stop]
    G, dG = _kernels(xs, mesh.points, mesh.normals, mesh.k)
    w = mesh.weights[None, :]
    idx = np.arange(start, stop)
    loc = idx - start
    if which == "S":
        out = 2 * G * w
        out[loc, idx] = mesh.self_S[idx]
    elif which == "K":
        out = 2 * dG * w
        out[loc, idx] = mesh.self_K[idx]
    else:
        out = 2 * (dG - 1j * eta * G) * w
        out[loc, idx] = mesh.self_K[idx] - 1j * eta * mesh.self_S[idx]
    return out


def _apply(mesh, samples, which, eta=0.0):
    samples = np.asarray(samples, dtype=complex)
    out = np.empty(mesh.size, dtype=complex)
    for s in range(0, mesh.size, BLOCK_ROWS):
        e = min(s + BLOCK_ROWS, mesh.size)
        out[s:e] = _rows(mesh, s, e, which, eta) @ samples
    return out


def _check(mesh, phi):
    if phi.mesh is not mesh and phi.mesh != mesh:
        raise ValueError("density belongs to a different mesh")


def apply_S(mesh, phi):
    """``S phi = 2 int G(x, y) phi(y) ds(y)`` at the mesh nodes."""
    _check(mesh, phi)
    return BoundaryDensity(mesh, _apply(mesh, phi.samples, "S"))


def apply_K(mesh, phi):
    """``K phi = 2 int dG/dnu(y) phi(y) ds(y)`` at the mesh nodes.

    Raises
    ------
    ValueError
        For surfaces with slope discontinuities; mollify them first.
    """
    _check(mesh, phi)
    if not mesh.surface.smooth:
        raise ValueError("K needs a smooth surface; apply geometry.mollify to Lipschitz profiles first")
    return BoundaryDensity(mesh, _apply(mesh, phi.samples, "K"))


def apply_A(mesh, phi, eta, operators=None):
    """``A phi = phi + K phi - i eta S phi``.

    Parameters
    ----------
    operators : tuple of callables, optional
        Replacement ``(S, K)`` maps on sample arrays (used to isolate parts
        of the operator).
    """
    _check(mesh, phi)
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    if eta == 0:
        warnings.warn("eta = 0: A = I + K is not guaranteed invertible", RuntimeWarning, stacklevel=2)
    if operators is not None:
        S_op, K_op = operators
        return BoundaryDensity(mesh, phi.samples + K_op(phi.samples) - 1j * eta * S_op(phi.samples))
    if not mesh.surface.smooth:
        raise ValueError("K needs a smooth surface; apply geometry.mollify to Lipschitz profiles first")
    return BoundaryDensity(mesh, phi.samples + _apply(mesh, phi.samples, "A", eta))


def split_operator(mesh, phi, which="S", cutoff=1.0):
    """Global and local parts of ``S`` or ``K`` split by lateral distance.

    The global part keeps pairs with ``|x~ - y~| >= cutoff``; the local part
    keeps the rest, including the diagonal.  Their sum is the full operator.
    """
    _check(mesh, phi)
    glob = np.empty(mesh.size, dtype=complex)
    loc = np.empty(mesh.size, dtype=complex)
    for s in range(0, mesh.size, BLOCK_ROWS):
        e = min(s + BLOCK_ROWS, mesh.size)
        rows = _rows(mesh, s, e, which)
        d = mesh.lateral[s:e, None, :] - mesh.lateral[None, :, :]
        far = np.sqrt(np.sum(d * d, -1)) >= cutoff
        glob[s:e] = np.where(far, rows, 0) @ phi.samples
        loc[s:e] = np.where(far, 0, rows) @ phi.samples
    return BoundaryDensity(mesh, glob), BoundaryDensity(mesh, loc)


def dense_operators(mesh):
    """Dense ``S`` and ``K`` matrices (only for ``m <= 48``)."""
    if mesh.m > DENSE_LIMIT:
        raise ValueError(f"dense materialization is limited to m <= {DENSE_LIMIT}")
    S = np.empty((mesh.size, mesh.size), dtype=complex)
    K = np.empty_like(S)
    for s in range(0, mesh.size, BLOCK_ROWS):
        e = min(s + BLOCK_ROWS, mesh.size)
        S[s:e] = _rows(mesh, s, e, "S")
        K[s:e] = _rows(mesh, s, e, "K")
    return S, K


def _A_matrix(mesh, eta):
    A = np.empty((mesh.size, mesh.size), dtype=complex)
    for s in range(0, mesh.size, BLOCK_ROWS):
        e = min(s + BLOCK_ROWS, mesh.size)
        A[s:e] = _rows(mesh, s, e, "A", eta)
    A[np.diag_indices(mesh.size)] += 1
    return A


@dataclass
class SolveReport:
    """Iteration record of :func:`solve_density`."""

    iterations: int
    residual: float
    history: list
    heuristic_limit: float | None = None
    dense: bool = False


def solve_density(mesh, g, eta=None, tol=1e-8, maxiter=500, restart=60, bound=None):
    """Solve ``A phi = 2 g`` by restarted GMRES.

    Parameters
    ----------
    mesh : BoundaryMesh
    g : array_like or BoundaryDensity
        Boundary data at the nodes.
    eta : float, optional
        Coupling parameter, default ``k``.
    tol : float
        Relative residual, in ``(1e-12, 1e-2)``.
    bound : float, optional
        Operator bound ``B``; ``4 B^2`` is logged as the expected iteration scale.

    Returns
    -------
    (BoundaryDensity, SolveReport)

    Raises
    ------
    SolverError
        If GMRES stops before reaching ``tol``; carries the residual history.
    """
    if not 1e-12 < tol < 1e-2:
        raise ValueError("tol must lie in (1e-12, 1e-2)")
    eta = mesh.k if eta is None else float(eta)
    if not mesh.surface.smooth:
        raise ValueError("K needs a smooth surface; apply geometry.mollify to Lipschitz profiles first")
    gv = np.asarray(g.samples if isinstance(g, BoundaryDensity) else g, dtype=complex)
    if gv.shape != (mesh.size,):
        raise ValueError("boundary data does not match mesh")
    rhs = 2 * gv
    norm = np.linalg.norm(rhs)
    limit = 4 * bound**2 if bound is not None else None
    if norm == 0:
        return BoundaryDensity(mesh, np.zeros(mesh.size, dtype=complex)), SolveReport(0, 0.0, [], limit)
    dense = mesh.m <= DENSE_LIMIT
    if dense:
        Amat = _A_matrix(mesh, eta)
        op = spla.aslinearoperator(Amat)
    else:
        op = spla.LinearOperator((mesh.size, mesh.size), dtype=complex,
                                 matvec=lambda v: v + _apply(mesh, v, "A", eta))
    history = []
    x, code = spla.gmres(op, rhs, rtol=tol, atol=0.0, restart=restart, maxiter=maxiter,
                         callback=lambda r: history.append(float(r)), callback_type="pr_norm")
    res = float(np.linalg.norm(op.matvec(x) - rhs) / norm)
    if code != 0 or res > tol * 1.01:
        raise SolverError(f"GMRES stopped with relative residual {res:.3e} (target {tol:g})", history)
    if limit is not None:
        logger.info("GMRES iterations %d (heuristic scale 4B^2 = %.1f)", len(history), limit)
    return BoundaryDensity(mesh, x), SolveReport(len(history), res, history, limit, dense)


def eval_field(mesh, phi, eta, points):
    """Combined potential ``v(x) = int [dG/dnu(y) - i eta G] phi ds`` at points in the domain.

    Raises
    ------
    ValueError
        If a point lies on or below the surface.
    """
    _check(mesh, phi)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    f = mesh.surface.height(pts[:, :2])
    if np.any(pts[:, 2] <= f):
        raise ValueError("evaluation points must lie above the surface")
    out = np.empty(len(pts), dtype=complex)
    wphi = mesh.weights * phi.samples
    for s in range(0, len(pts), BLOCK_ROWS):
        e = min(s + BLOCK_ROWS, len(pts))
        G, dG = _kernels(pts[s:e], mesh.points, mesh.normals, mesh.k)
        out[s:e] = (dG - 1j * eta * G) @ wphi
    return out


def inverse_norm_estimate(mesh, eta=None):
    """``||A^{-1}||_2`` of the discrete operator from its smallest singular value.

    The norm is the discrete ``L^2(Gamma)`` norm ``sum Delta^2 J |phi|^2``
    (the plain Euclidean norm on flat surfaces).  Requires a dense-size mesh.
    """
    if mesh.m > DENSE_LIMIT:
        raise ValueError(f"dense materialization is limited to m <= {DENSE_LIMIT}")
    eta = mesh.k if eta is None else float(eta)
    A = _A_matrix(mesh, eta)
    sq = np.sqrt(mesh.jacobian)
    if np.allclose(sq, 1.0):
        s = np.linalg.svd(A, compute_uv=False)
    else:
        s = np.linalg.svd(sq[:, None] * A / sq[None, :], compute_uv=False)
    return float(1.0 / s.min())
