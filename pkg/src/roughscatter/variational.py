"""Finite-element discretization of the strip problems with DtN radiation coupling.

The strip ``S_H`` between the surface and ``x_n = H`` is meshed by a
terrain-following tensor grid: column ``i`` sits at ``x_i`` and its vertices
at ``f(x_i) + t_j (H - f(x_i))`` with uniform ``t_j``.  Elements are
isoparametric bilinear quadrilaterals, laterally periodic.  The transmission
problem uses a plain tensor grid on ``[h_minus, h_plus]``.

A discrete field ``u`` and test field ``v`` (nodal vectors) pair through
``form(u, v) = v^H A u`` with ``A = K - M_{k^2} + D`` (+ boundary terms), where
the DtN block on the top row is ``D = M_x T_h``: the periodic 1D mass matrix
of the top row times the nodal Fourier multiplier ``z(xi)``.  ``M_x`` and
``T_h`` are commuting symmetric circulants, so ``D`` is complex symmetric with
eigenvalues ``lambda_M(xi) z(xi)``; these have nonnegative real and
nonpositive imaginary parts, like the continuous operator.

The weak problem ``form(u, v) = -(g, v)`` becomes ``A u = -M g`` on the free
nodes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import dtn
from .bounds import BoundCertificate, ellipticity_constant
from .errors import HypothesisError, SolverError
from .geometry import SurfaceProfile

logger = logging.getLogger(__name__)

DIRECT_LIMIT = 200_000
DIRECT_TOL = 1e-10
NORM_SLACK = 1e-9

__all__ = [
    "StripMesh",
    "StripField",
    "AssembledSystem",
    "make_strip_mesh",
    "make_flat_strip_mesh",
    "assemble_layer",
    "assemble_impedance",
    "assemble_transmission",
    "solve",
    "check_coercivity",
    "check_apriori",
    "random_fields",
    "gaussian_sources",
    "FieldNorms",
    "collar_quantities",
]


# ---------------------------------------------------------------- mesh

@dataclass(frozen=True)
class StripMesh:
    """Terrain-following (or flat) tensor mesh of a laterally periodic strip.

    Attributes
    ----------
    grid : LateralGrid
        One-dimensional lateral grid; columns sit at ``grid.x``.
    n_vertical : int
        Number of element layers.
    kind : str
        ``terrain`` or ``flat``.
    H : float
        Top height.
    bottom : ndarray
        Bottom height of each column.
    surface : SurfaceProfile or None
        Bottom surface for terrain meshes.
    X, Y : ndarray
        Vertex coordinates, shape ``(n_vertical + 1, n)``; row 0 is the bottom.
    """

    grid: dtn.LateralGrid
    n_vertical: int
    kind: str
    H: float
    bottom: np.ndarray
    surface: SurfaceProfile | None
    X: np.ndarray = field(repr=False)
    Y: np.ndarray = field(repr=False)

    @property
    def n(self):
        return self.grid.n

    @property
    def rows(self):
        return self.n_vertical + 1

    @property
    def n_nodes(self):
        return self.rows * self.n

    @property
    def t(self):
        return np.linspace(0.0, 1.0, self.rows)

    def node(self, j, i):
        return j * self.n + i

    @property
    def top_nodes(self):
        return np.arange((self.rows - 1) * self.n, self.rows * self.n)

    @property
    def bottom_nodes(self):
        return np.arange(self.n)


def make_strip_mesh(surface, H, grid, n_vertical):
    """Terrain-following mesh between ``surface`` and ``x_n = H``.

    Raises
    ------
    ValueError
        If ``H <= f_plus`` (degenerate mapping) or the grid is not 1D.
    """
    if grid.dim_lateral != 1:
        raise ValueError("strip meshes need a one-dimensional lateral grid")
    if not H > surface.f_plus:
        raise ValueError("H must exceed f_plus so the terrain mapping is nondegenerate")
    if n_vertical < 1:
        raise ValueError("n_vertical must be positive")
    x = grid.x
    f = surface.height(x)
    t = np.linspace(0.0, 1.0, n_vertical + 1)
    Y = f[None, :] + t[:, None] * (H - f[None, :])
    Y[-1] = H
    X = np.broadcast_to(x, Y.shape).copy()
    return StripMesh(grid, n_vertical, "terrain", float(H), f, surface, X, Y)


def make_flat_strip_mesh(grid, h_minus, h_plus, n_vertical):
    """Plain tensor mesh of ``[h_minus, h_plus]`` (transmission problems)."""
    if grid.dim_lateral != 1:
        raise ValueError("strip meshes need a one-dimensional lateral grid")
    if not h_plus > h_minus:
        raise ValueError("h_plus must exceed h_minus")
    t = np.linspace(0.0, 1.0, n_vertical + 1)
    y = h_minus + t * (h_plus - h_minus)
    Y = np.broadcast_to(y[:, None], (n_vertical + 1, grid.n)).copy()
    X = np.broadcast_to(grid.x, Y.shape).copy()
    return StripMesh(grid, n_vertical, "flat", float(h_plus), np.full(grid.n, float(h_minus)),
                     None, X, Y)


def _gauss01(order):
    s, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (s + 1), 0.5 * w


def _element_data(mesh, order=2):
    """Connectivity, quadrature points, Jacobians and shape gradients for all elements."""
    n, nv = mesh.n, mesh.n_vertical
    dx = mesh.grid.spacing
    jj, ii = np.meshgrid(np.arange(nv), np.arange(n), indexing="ij")
    jj, ii = jj.ravel(), ii.ravel()
    ip = (ii + 1) % n
    conn = np.stack([jj * n + ii, jj * n + ip, (jj + 1) * n + ip, (jj + 1) * n + ii], axis=1)
    x0 = mesh.X[jj, ii]
    xe = np.stack([x0, x0 + dx, x0 + dx, x0], axis=1)
    ye = np.stack([mesh.Y[jj, ii], mesh.Y[jj, ip], mesh.Y[jj + 1, ip], mesh.Y[jj + 1, ii]], axis=1)
    g, w = _gauss01(order)
    S, T = np.meshgrid(g, g, indexing="ij")
    S, T = S.ravel(), T.ravel()
    W = np.outer(w, w).ravel()
    N = np.stack([(1 - S) * (1 - T), S * (1 - T), S * T, (1 - S) * T], axis=1)
    Ns = np.stack([-(1 - T), (1 - T), T, -T], axis=1)
    Nt = np.stack([-(1 - S), -S, S, (1 - S)], axis=1)
    xs = xe @ Ns.T
    xt = xe @ Nt.T
    ys = ye @ Ns.T
    yt = ye @ Nt.T
    det = xs * yt - xt * ys
    if np.any(det <= 0):
        raise ValueError("mesh mapping has a nonpositive Jacobian")
    Nx = (yt[..., None] * Ns[None] - ys[..., None] * Nt[None]) / det[..., None]
    Ny = (-xt[..., None] * Ns[None] + xs[..., None] * Nt[None]) / det[..., None]
    px = xe @ N.T
    py = ye @ N.T
    return conn, N, Nx, Ny, det * W[None, :], px, py


def _assemble(conn, local, size):
    rows = np.repeat(conn, 4, axis=1).ravel()
    cols = np.tile(conn, (1, 4)).ravel()
    return sp.csr_matrix((local.reshape(len(conn), 16).ravel(), (rows, cols)), shape=(size, size))


def _volume_matrices(mesh, medium, order=2):
    conn, N, Nx, Ny, dw, px, py = _element_data(mesh, order)
    size = mesh.n_nodes
    K = np.einsum("eq,eqa,eqb->eab", dw, Nx, Nx) + np.einsum("eq,eqa,eqb->eab", dw, Ny, Ny)
    Kn = np.einsum("eq,eqa,eqb->eab", dw, Ny, Ny)
    M = np.einsum("eq,qa,qb->eab", dw, N, N)
    k2 = medium.k_squared(np.stack([px, py], axis=-1))
    Mk = np.einsum("eq,qa,qb->eab", dw * k2, N, N)
    return (_assemble(conn, K, size), _assemble(conn, Kn, size), _assemble(conn, M, size),
            _assemble(conn, Mk, size))


def _mass_symbol(grid):
    dx = grid.spacing
    return dx * (4 + 2 * np.cos(grid.xi * dx)) / 6


def _dtn_block(grid, k):
    """Dense circulant ``M_x T_h`` for the row nodes of a periodic line."""
    sym = dtn.make_symbol(grid, k)
    s = _mass_symbol(grid) * sym.z_values
    col = np.fft.ifft(s)
    n = grid.n
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    return col[idx], s


def _embed(block, nodes, size):
    r = np.repeat(nodes, len(nodes))
    c = np.tile(nodes, len(nodes))
    return sp.csr_matrix((block.ravel(), (r, c)), shape=(size, size))


def _boundary_mass(mesh, weight=None, order=2):
    """Mass matrix of the bottom polyline with optional weight ``weight(x~)``."""
    n = mesh.n
    dx = mesh.grid.spacing
    i = np.arange(n)
    ip = (i + 1) % n
    x0 = mesh.X[0, i]
    dy = mesh.Y[0, ip] - mesh.Y[0, i]
    length = np.sqrt(dx * dx + dy * dy)
    g, w = _gauss01(order)
    N = np.stack([1 - g, g], axis=1)
    xs = x0[:, None] + g[None, :] * dx
    if weight is None:
        beta = np.ones_like(xs, dtype=complex)
    else:
        beta = np.asarray(weight(xs.ravel()), dtype=complex).reshape(xs.shape)
    local = np.einsum("e,q,eq,qa,qb->eab", length, w, beta, N, N)
    conn = np.stack([i, ip], axis=1)
    rows = np.repeat(conn, 2, axis=1).ravel()
    cols = np.tile(conn, (1, 2)).ravel()
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes))


# ---------------------------------------------------------------- systems

@dataclass
class AssembledSystem:
    """Discrete sesquilinear form and the data needed to solve and measure.

    Attributes
    ----------
    kind : str
        ``layer``, ``impedance`` or ``transmission``.
    mesh : StripMesh
    medium : MediumProfile
    matrix : scipy.sparse.csr_matrix
        Full nodal matrix ``A`` with ``form(u, v) = v^H A u``.
    free : ndarray
        Indices of unknown nodes (the bottom row is removed for ``layer``).
    K, Kn, M, Mk2 : sparse matrices
        Stiffness, vertical-derivative stiffness, mass, and ``k^2``-weighted mass.
    Mb : sparse matrix or None
        Unit-weight boundary mass on the bottom polyline.
    dtn_symbols : dict
        Per-boundary eigenvalues ``lambda_M z`` of the DtN blocks.
    k_norm : float
        Wavenumber weighting the ``H^1`` norms (``k_plus``).
    """

    kind: str
    mesh: StripMesh
    medium: object
    matrix: sp.csr_matrix
    free: np.ndarray
    K: sp.csr_matrix
    Kn: sp.csr_matrix
    M: sp.csr_matrix
    Mk2: sp.csr_matrix
    Mb: sp.csr_matrix | None
    dtn_symbols: dict
    k_norm: float
    volume: sp.csr_matrix = field(repr=False, default=None)
    admittance: object = None

    def form(self, u, v):
        """``form(u, v) = v^H A u`` for full nodal vectors."""
        return complex(np.vdot(np.ravel(v), self.matrix @ np.ravel(u)))

    def rhs(self, g):
        """``-M g`` (full nodal vector)."""
        return -(self.M @ np.ravel(g))

    def reduced(self):
        return self.matrix[self.free][:, self.free].tocsc()

    def conforming(self, u):
        """Zero the constrained nodes of a full nodal vector."""
        u = np.array(np.ravel(u), dtype=complex)
        mask = np.ones(self.mesh.n_nodes, dtype=bool)
        mask[self.free] = False
        u[mask] = 0
        return u


def _check_top(mesh, medium, k_ref, where="top"):
    rowy = mesh.Y[-1] if where == "top" else mesh.Y[0]
    pts = np.stack([mesh.X[-1], rowy], -1)
    vals = medium.k_squared(pts)
    if not np.allclose(vals, k_ref**2, rtol=1e-12, atol=1e-12):
        raise ValueError(f"medium must equal the exterior wavenumber on the {where} row")


def assemble_layer(mesh, medium, sym=None, order=2):
    """Dirichlet-layer form ``b(u, v) = (grad u, grad v) - (k^2 u, v) + <T u, v>_{Gamma_H}``.

    Parameters
    ----------
    mesh : StripMesh
        Terrain mesh.
    medium : MediumProfile
        Must equal ``k_plus`` on the top row and have ``k0 > 0``.
    sym : DtnSymbol, optional
        Only its wavenumber is used; defaults to ``medium.k_plus``.
    order : int
        Gauss points per direction.
    """
    return _assemble_strip("layer", mesh, medium, sym, order)


def assemble_impedance(mesh, medium, admittance, sym=None, order=2):
    """Impedance form ``c(u, v) = b(u, v) - i k int_Gamma beta u conj(v) ds``.

    The boundary term integrates along the bottom polyline with its true
    length element; ``beta`` is sampled at Gauss points.

    Raises
    ------
    ValueError
        If ``Re beta < 0`` at a boundary quadrature point.
    """
    return _assemble_strip("impedance", mesh, medium, sym, order, admittance)


def _assemble_strip(kind, mesh, medium, sym, order, admittance=None):
    if mesh.kind != "terrain":
        raise ValueError("layer and impedance problems need a terrain mesh")
    if not medium.k0 > 0:
        raise ValueError("medium must have k0 > 0")
    k = medium.k_plus if sym is None else sym.k
    _check_top(mesh, medium, k)
    K, Kn, M, Mk = _volume_matrices(mesh, medium, order)
    size = mesh.n_nodes
    block, s = _dtn_block(mesh.grid, k)
    D = _embed(block, mesh.top_nodes, size)
    volume = (K - Mk).tocsr()
    A = volume + D
    Mb = _boundary_mass(mesh, None, order)
    if kind == "impedance":
        xs = mesh.grid.x
        bvals = np.asarray(admittance.beta(np.asarray(xs)), dtype=complex)
        if np.any(bvals.real < -1e-14):
            raise ValueError("admittance violates Re beta >= 0")
        Mbeta = _boundary_mass(mesh, admittance.beta, order)
        Aimp = -1j * k * Mbeta
        volume = (volume + Aimp).tocsr()
        A = A + Aimp
        free = np.arange(size)
    else:
        free = np.arange(mesh.n, size)
    logger.debug("assembled %s system: %d nodes, %d free", kind, size, len(free))
    return AssembledSystem(kind, mesh, medium, A.tocsr(), free, K, Kn, M, Mk, Mb,
                           {"top": s}, k, volume, admittance)


def assemble_transmission(mesh, medium, sym_plus=None, sym_minus=None, order=2):
    """Transmission form with DtN couplings ``T_+`` on the top and ``T_-`` on the bottom row."""
    if mesh.kind != "flat":
        raise ValueError("transmission problems use a flat tensor mesh")
    kp = medium.k_plus if sym_plus is None else sym_plus.k
    km = medium.k_minus if sym_minus is None else sym_minus.k
    if km is None or not (kp > 0 and km > 0):
        raise ValueError("k_plus and k_minus must be positive")
    _check_top(mesh, medium, kp, "top")
    _check_top(mesh, medium, km, "bottom")
    K, Kn, M, Mk = _volume_matrices(mesh, medium, order)
    size = mesh.n_nodes
    bp, sp_ = _dtn_block(mesh.grid, kp)
    bm, sm = _dtn_block(mesh.grid, km)
    volume = (K - Mk).tocsr()
    A = volume + _embed(bp, mesh.top_nodes, size) + _embed(bm, mesh.bottom_nodes, size)
    return AssembledSystem("transmission", mesh, medium, A.tocsr(), np.arange(size), K, Kn, M, Mk,
                           None, {"top": sp_, "bottom": sm}, kp, volume)


# ---------------------------------------------------------------- fields and solves

@dataclass
class StripField:
    """Nodal field on a strip mesh; ``values`` has shape ``(rows, n)``."""

    mesh: StripMesh
    values: np.ndarray
    system: AssembledSystem | None = None
    info: dict = field(default_factory=dict)

    @property
    def vector(self):
        return self.values.ravel()

    def top_trace(self):
        return dtn.TraceFunction(self.mesh.grid, self.values[-1].copy())

    def extend_up(self, heights, k=None):
        """Continue the field above ``H`` by the upward radiation representation."""
        k = self.system.k_norm if k is None else k
        return dtn.propagate_up(self.top_trace(), k, self.mesh.H, heights)


def _dtn_apply_factory(sys):
    """Matrix-free DtN action on a full nodal vector."""
    mesh = sys.mesh
    parts = [(mesh.top_nodes, sys.dtn_symbols["top"])]
    if "bottom" in sys.dtn_symbols:
        parts.append((mesh.bottom_nodes, sys.dtn_symbols["bottom"]))

    def apply(u):
        out = np.zeros_like(u)
        for nodes, s in parts:
            out[nodes] += np.fft.ifft(s * np.fft.fft(u[nodes]))
        return out

    return apply


def solve(sys, g, method="auto", tol=1e-10, maxiter=2000):
    """Solve ``form(u, v) = -(g, v)`` for all discrete test fields ``v``.

    Parameters
    ----------
    sys : AssembledSystem
    g : array_like
        Source sampled at the vertices (shape ``(rows, n)`` or flat).
    method : {"auto", "direct", "gmres"}
        ``auto`` uses a sparse LU up to 200000 unknowns.
    tol : float
        Relative residual target for GMRES.

    Returns
    -------
    StripField
        With ``info`` holding the relative residual and solver details.

    Raises
    ------
    SolverError
        Singular factorization or GMRES non-convergence.
    """
    mesh = sys.mesh
    g = np.asarray(g, dtype=complex).ravel()
    if g.shape != (mesh.n_nodes,):
        raise ValueError("source does not match mesh")
    b = sys.rhs(g)[sys.free]
    bnorm = np.linalg.norm(b)
    u = np.zeros(mesh.n_nodes, dtype=complex)
    if bnorm == 0:
        return StripField(mesh, u.reshape(mesh.rows, mesh.n), sys, {"residual": 0.0, "method": "trivial"})
    nfree = len(sys.free)
    if method == "auto":
        method = "direct" if nfree <= DIRECT_LIMIT else "gmres"
    if method == "direct":
        A = sys.reduced()
        try:
            lu = spla.splu(A)
        except RuntimeError as exc:
            raise SolverError(f"sparse factorization failed: {exc}") from exc
        x = lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise SolverError("factorization produced non-finite values (singular system)")
        info = {"method": "direct"}
    elif method == "gmres":
        x, info = _gmres(sys, b, tol, maxiter)
    else:
        raise ValueError(f"unknown method {method!r}")
    res = np.linalg.norm(sys.matrix[sys.free][:, sys.free] @ x - b) / bnorm
    info["residual"] = float(res)
    if method == "direct" and res > DIRECT_TOL:
        diag = np.abs(sys.reduced().diagonal())
        info["diag_ratio"] = float(diag.max() / max(diag.min(), 1e-300))
        raise SolverError(f"direct solve residual {res:.3e} exceeds {DIRECT_TOL:g}; "
                          f"system near-singular (diagonal ratio {info['diag_ratio']:.3e})")
    u[sys.free] = x
    return StripField(mesh, u.reshape(mesh.rows, mesh.n), sys, info)


def _gmres(sys, b, tol, maxiter):
    dtn_apply = _dtn_apply_factory(sys)
    free = sys.free
    size = sys.mesh.n_nodes
    Vf = sys.volume[free][:, free]

    def matvec(x):
        full = np.zeros(size, dtype=complex)
        full[free] = x
        return Vf @ x + dtn_apply(full)[free]

    A = spla.LinearOperator((len(free), len(free)), matvec=matvec, dtype=complex)
    d = sys.matrix[free][:, free].diagonal()
    d = np.where(np.abs(d) > 0, d, 1.0)
    P = spla.LinearOperator(A.shape, matvec=lambda x: x / d, dtype=complex)
    history = []
    x, code = spla.gmres(A, b, rtol=tol, restart=100, maxiter=maxiter, M=P,
                         callback=lambda r: history.append(float(r)), callback_type="pr_norm")
    if code != 0:
        raise SolverError(f"GMRES did not converge (code {code})", history)
    return x, {"method": "gmres", "iterations": len(history), "history": history}


# ---------------------------------------------------------------- norms

@dataclass(frozen=True)
class FieldNorms:
    """Discrete norms of a nodal field.

    ``h1`` is ``(||grad u||^2 + k^2 ||u||^2)^{1/2}`` with ``k = k_norm``.
    """

    l2: float
    grad: float
    dn: float
    h1: float
    boundary_l2: float | None
    trace_h_half: float

    @classmethod
    def of(cls, sys, u, k=None):
        u = np.ravel(u)
        k = sys.k_norm if k is None else k
        m = float(np.real(np.vdot(u, sys.M @ u)))
        kk = float(np.real(np.vdot(u, sys.K @ u)))
        kn = float(np.real(np.vdot(u, sys.Kn @ u)))
        b = None if sys.Mb is None else float(np.sqrt(max(np.real(np.vdot(u, sys.Mb @ u)), 0.0)))
        return cls(np.sqrt(m), np.sqrt(kk), np.sqrt(kn), np.sqrt(kk + k * k * m), b,
                   trace_h_half(sys.mesh, u, k))


def trace_h_half(mesh, u, k):
    """Discrete ``H^{1/2}`` norm of the top-row trace: ``sum lambda_M (k^2 + xi^2)^{1/2} |c|^2``.

    For a piecewise-linear trace this never exceeds the continuous norm,
    because aliased frequencies carry weights at least as large.
    """
    top = np.ravel(u)[mesh.top_nodes]
    c = np.fft.fft(top, norm="ortho")
    w = _mass_symbol(mesh.grid) * np.sqrt(k * k + mesh.grid.xi**2)
    return float(np.sqrt(np.sum(w * np.abs(c) ** 2)))


def _bilinear_eval(mesh, xq, yq):
    """Evaluation operator of the bilinear interpolant at points of a flat mesh."""
    n = mesh.n
    dx = mesh.grid.spacing
    y = mesh.Y[:, 0]
    x0 = mesh.grid.x[0]
    s = (xq - x0) / dx
    i = np.floor(s).astype(int)
    a = s - i
    i = np.mod(i, n)
    j = np.clip(np.searchsorted(y, yq, side="right") - 1, 0, mesh.n_vertical - 1)
    hy = y[j + 1] - y[j]
    b = (yq - y[j]) / hy
    ip = (i + 1) % n
    nodes = np.stack([j * n + i, j * n + ip, (j + 1) * n + ip, (j + 1) * n + i], -1)
    val_w = np.stack([(1 - a) * (1 - b), a * (1 - b), a * b, (1 - a) * b], -1)
    dy_w = np.stack([-(1 - a), -a, a, (1 - a)], -1) / hy[..., None]
    return nodes, val_w, dy_w


def collar_quantities(sys, u, surface, eps, per_cell=6):
    """Interface and collar integrals on a flat mesh.

    Returns ``(int_Gamma |u|^2 ds, ||du/dx_n||^2_C, ||u||^2_C)`` where ``Gamma``
    is the graph of ``surface`` and ``C = {|x_n - f(x~)| <= eps}``.  Collar
    integrals use ``per_cell`` Gauss points per direction in each element
    with the indicator of ``C``.
    """
    mesh = sys.mesh
    if mesh.kind != "flat":
        raise ValueError("collar quantities need a flat mesh")
    u = np.ravel(u)
    dx = mesh.grid.spacing
    g, w = _gauss01(per_cell)
    xs = (mesh.grid.x[:, None] + g[None, :] * dx).ravel()
    wx = np.tile(w * dx, mesh.n)
    f = surface.height(xs)
    J = surface.slope_weight(xs)
    nodes, vw, _ = _bilinear_eval(mesh, xs, f)
    ug = np.sum(u[nodes] * vw, -1)
    gamma = float(np.sum(wx * J * np.abs(ug) ** 2))
    y = mesh.Y[:, 0]
    yq = (y[:-1, None] + g[None, :] * np.diff(y)[:, None]).ravel()
    wy = (np.diff(y)[:, None] * w[None, :]).ravel()
    XQ, YQ = np.meshgrid(xs, yq, indexing="ij")
    WQ = np.outer(wx, wy)
    FQ = np.broadcast_to(f[:, None], XQ.shape)
    inside = np.abs(YQ - FQ) <= eps
    nodes, vw, dw = _bilinear_eval(mesh, XQ[inside], YQ[inside])
    uv = np.sum(u[nodes] * vw, -1)
    ud = np.sum(u[nodes] * dw, -1)
    ww = WQ[inside]
    return gamma, float(np.sum(ww * np.abs(ud) ** 2)), float(np.sum(ww * np.abs(uv) ** 2))


# ---------------------------------------------------------------- random data

def random_fields(sys, count, rng, smooth=True, modes=4):
    """Random conforming nodal fields (constrained nodes set to zero).

    ``smooth`` fields combine low lateral Fourier modes with low vertical
    sine/cosine modes in the mapped coordinate ``t``; otherwise nodal values
    are i.i.d. complex normal.
    """
    mesh = sys.mesh
    out = []
    lam = mesh.grid.period
    x = mesh.X
    t = mesh.t[:, None]
    for _ in range(count):
        if smooth:
            u = np.zeros((mesh.rows, mesh.n), dtype=complex)
            for p in range(-modes, modes + 1):
                for q in range(modes + 1):
                    c = (rng.normal() + 1j * rng.normal()) / (1 + abs(p) + q) ** 1.5
                    vert = np.sin((q + 0.5) * np.pi * t) if sys.kind == "layer" else np.cos(q * np.pi * t)
                    u += c * np.exp(2j * np.pi * p * x / lam) * vert
            u = u.ravel()
        else:
            u = rng.normal(size=mesh.n_nodes) + 1j * rng.normal(size=mesh.n_nodes)
        out.append(sys.conforming(u))
    return out


def gaussian_sources(mesh, rng, count=1, width_cells=2.0, keep_top_clear=True, centers=None):
    """Sum of Gaussian blobs (width ``width_cells`` cells) standing in for point sources.

    Centers are drawn uniformly over the interior of the strip unless given
    as ``(x, t)`` pairs with ``t`` the mapped vertical coordinate.
    """
    dx = mesh.grid.spacing
    lam = mesh.grid.period
    depth = mesh.H - mesh.bottom
    dy = float(np.max(depth)) / mesh.n_vertical
    w = width_cells * max(dx, dy)
    g = np.zeros((mesh.rows, mesh.n), dtype=complex)
    if centers is None:
        centers = [(rng.uniform(-lam / 2, lam / 2), rng.uniform(0.25, 0.6)) for _ in range(count)]
    for cx, ct in centers:
        col = int(np.argmin(np.abs(mesh.grid.x - cx)))
        cy = mesh.bottom[col] + ct * depth[col]
        ddx = (mesh.X - cx + lam / 2) % lam - lam / 2
        amp = complex(rng.normal(), rng.normal()) if rng is not None else 1.0
        g += amp * np.exp(-(ddx**2 + (mesh.Y - cy) ** 2) / (2 * w * w))
    if keep_top_clear:
        g[-1] = 0
    return g


# ---------------------------------------------------------------- checks

@dataclass(frozen=True)
class CheckReport:
    """Result of a discrete inequality check."""

    name: str
    status: str
    passed: bool
    worst_ratio: float | None
    constant: float | None
    details: dict = field(default_factory=dict)

    def to_dict(self):
        from dataclasses import asdict
        return asdict(self)


def _layer_kappas(sys):
    m = sys.medium
    depth = sys.mesh.H - float(np.min(sys.mesh.bottom))
    if sys.mesh.surface is not None:
        depth = sys.mesh.H - sys.mesh.surface.f_minus
    return m.k_inf * depth, m.k_plus * depth, m.k0 * depth, m.theta


def check_coercivity(sys, trials=200, rng=None, smooth_fraction=0.75):
    """Check ``|b(u, u)| >= alpha ||u||_V^2`` on random conforming fields.

    ``alpha`` is the reciprocal ellipticity constant for the sampled medium
    parameters.  Returns a report with status ``no-guarantee`` (and the check
    skipped) when neither ellipticity hypothesis holds.
    """
    if sys.kind != "layer":
        raise ValueError("coercivity check applies to the Dirichlet layer form")
    rng = np.random.default_rng(0) if rng is None else rng
    ki, kp, k0, theta = _layer_kappas(sys)
    try:
        cert = ellipticity_constant(ki, kp, k0, theta)
    except HypothesisError as exc:
        return CheckReport("coercivity", "no-guarantee", False, None, None, {"reason": str(exc)})
    alpha = cert.extras["alpha"]
    n_smooth = int(round(trials * smooth_fraction))
    fields = (random_fields(sys, n_smooth, rng, smooth=True)
              + random_fields(sys, trials - n_smooth, rng, smooth=False))
    worst = np.inf
    for u in fields:
        nrm = FieldNorms.of(sys, u).h1
        u = u / nrm
        worst = min(worst, abs(sys.form(u, u)))
    passed = worst >= alpha - NORM_SLACK
    return CheckReport("coercivity", "checked", bool(passed), float(worst), float(alpha),
                       {"trials": trials, "kappa_inf": ki, "kappa_plus": kp, "branch": cert.extras["branch"]})


def check_apriori(u, g, cert):
    """Check the a-priori estimate certified by ``cert`` on a computed solution.

    Supported certificates: ``layer_arbitrary_freq`` (``k_0 ||u||_V``),
    ``impedance_E`` and ``impedance_small_k`` (``k ||u||_{H^1}``),
    ``transmission_constants`` (``k_inf ||u||_{H^1(S)}``) and
    ``ellipticity_constant`` (``k_+ ||u||_V <= kappa_+ C / sqrt(2) ||g||``).

    Raises
    ------
    HypothesisError
        If the certificate's hypotheses were not validated.
    """
    if not cert.hypotheses_ok:
        raise HypothesisError(f"certificate {cert.name} has unvalidated hypotheses")
    sys = u.system
    gv = np.ravel(g)
    gnorm = float(np.sqrt(max(np.real(np.vdot(gv, sys.M @ gv)), 0.0)))
    norms = FieldNorms.of(sys, u.vector)
    m = sys.medium
    constant = cert.value
    details = {}
    if cert.name == "layer_arbitrary_freq":
        lhs = m.k0 * norms.h1
    elif cert.name in ("impedance_E", "impedance_small_k"):
        lhs = m.k_plus * norms.h1
        if cert.name == "impedance_E":
            details["solution_constant"] = cert.extras["solution_constant"]
            details["solution_bound_ok"] = bool(lhs <= cert.extras["solution_constant"] * gnorm * (1 + NORM_SLACK) + 1e-14)
    elif cert.name == "transmission_constants":
        lhs = m.k_inf * norms.h1
    elif cert.name == "ellipticity_constant":
        lhs = m.k_plus * norms.h1
        constant = cert.inputs["kappa_plus"] * cert.value / np.sqrt(2)
    else:
        raise ValueError(f"no a-priori check for certificate {cert.name}")
    rhs = constant * gnorm
    passed = lhs <= rhs * (1 + NORM_SLACK) + 1e-14
    ratio = lhs / gnorm if gnorm > 0 else 0.0
    details.update({"lhs": float(lhs), "rhs": float(rhs), "g_norm": gnorm})
    return CheckReport(f"apriori:{cert.name}", "checked", bool(passed), float(ratio), float(constant), details)
