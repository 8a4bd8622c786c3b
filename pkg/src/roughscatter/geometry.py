"""Rough surfaces given as graphs of Lipschitz functions.

A surface is the graph ``x_n = f(x~)`` of a bounded Lipschitz function over
one lateral variable (2D problems) or two (3D problems).  Four families are
supported (flat, sinusoid, piecewise-linear, tabulated) plus the smooth
approximants produced by :func:`mollify`.

Mollification uses the unit-mass bump ``psi(t) ~ (1 - |t|^2)^4`` supported in
the unit ball and scaled to radius ``delta = eps / (3 L)``.  Convolution with a
nonnegative unit-mass kernel never increases the Lipschitz constant and moves
``f`` by at most ``L * delta = eps / 3``, so ``f_eps = psi_delta * f + eps / 2``
lies between ``f + eps / 6`` and ``f + 5 eps / 6``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import beta as beta_fn
from scipy.special import betainc

logger = logging.getLogger(__name__)

SLOPE_SLACK = 1e-9
GAUSS_POINTS = 16
BUMP_POWER = 4

__all__ = [
    "SurfaceProfile",
    "NonTangentialCone",
    "make_surface",
    "mollify",
    "cone_contains",
    "cone_alpha",
    "sampled_lipschitz",
]


@dataclass(frozen=True)
class SurfaceProfile:
    """Graph surface ``x_n = f(x~)``.

    Attributes
    ----------
    kind : str
        One of ``flat``, ``sinusoid``, ``piecewise-linear``, ``tabulated`` or
        ``mollified``.
    params : dict
        Parameters the profile was built from.
    L : float
        Lipschitz constant (bound on the slope).
    f_minus, f_plus : float
        Lower and upper height bounds.
    dim_lateral : int
        Number of lateral variables (1 or 2).
    smooth : bool
        True when ``f`` is infinitely (flat, sinusoid) or at least three
        times (mollified) differentiable.
    """

    kind: str
    params: dict
    L: float
    f_minus: float
    f_plus: float
    dim_lateral: int
    smooth: bool
    _f: Callable = field(repr=False, compare=False)
    _grad: Callable = field(repr=False, compare=False)
    _hess: Callable | None = field(default=None, repr=False, compare=False)

    def _lateral(self, x):
        x = np.asarray(x, dtype=float)
        if self.dim_lateral == 1:
            if x.ndim >= 1 and x.shape[-1] == 1 and x.ndim > 1:
                x = x[..., 0]
            return x[..., None]
        if x.shape[-1] != 2:
            raise ValueError("two-dimensional lateral points need a trailing axis of length 2")
        return x

    def height(self, x):
        """Evaluate ``f`` at lateral points ``x`` (shape ``(...)`` or ``(..., d)``)."""
        return self._f(self._lateral(x))

    __call__ = height

    def gradient(self, x):
        """Gradient of ``f``, shape ``(..., d)``; one-sided (from the right) at kinks."""
        return self._grad(self._lateral(x))

    def slope_weight(self, x):
        """Area element ``J_f = sqrt(1 + |grad f|^2)``."""
        g = self.gradient(x)
        return np.sqrt(1.0 + np.sum(g * g, axis=-1))

    def hessian(self, x, step=1e-5):
        """Second derivatives, shape ``(..., d, d)``.

        Analytic where available, otherwise central differences of the
        gradient with relative step ``step``.
        """
        xl = self._lateral(x)
        if self._hess is not None:
            return self._hess(xl)
        d = self.dim_lateral
        out = np.empty(xl.shape[:-1] + (d, d))
        for a in range(d):
            e = np.zeros(d)
            e[a] = step
            gp = self._grad(xl + e)
            gm = self._grad(xl - e)
            out[..., :, a] = (gp - gm) / (2 * step)
        return 0.5 * (out + np.swapaxes(out, -1, -2))

    @property
    def L_prime(self):
        return float(np.sqrt(1.0 + self.L**2))

    def to_dict(self):
        return {"kind": self.kind, "params": _jsonable(self.params), "L": self.L,
                "f_minus": self.f_minus, "f_plus": self.f_plus}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, SurfaceProfile):
        return obj.to_dict()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


# ---------------------------------------------------------------- families

def _flat(height, dim):
    h = float(height)

    def f(x):
        return np.full(x.shape[:-1], h)

    def g(x):
        return np.zeros(x.shape)

    def hess(x):
        return np.zeros(x.shape + (x.shape[-1],))

    return SurfaceProfile("flat", {"height": h, "dim": dim}, 0.0, h, h, dim, True, f, g, hess)


def _sinusoid(amplitude, period, offset, dim, phase=0.0):
    a, lam, c, ph = float(amplitude), float(period), float(offset), float(phase)
    if lam <= 0:
        raise ValueError("sinusoid period must be positive")
    w = 2 * np.pi / lam
    if dim == 1:
        def f(x):
            return c + a * np.sin(w * x[..., 0] + ph)

        def g(x):
            return (a * w * np.cos(w * x[..., 0] + ph))[..., None]

        def hess(x):
            return (-a * w * w * np.sin(w * x[..., 0] + ph))[..., None, None]
    else:
        def f(x):
            return c + a * np.sin(w * x[..., 0] + ph) * np.sin(w * x[..., 1])

        def g(x):
            s1, c1 = np.sin(w * x[..., 0] + ph), np.cos(w * x[..., 0] + ph)
            s2, c2 = np.sin(w * x[..., 1]), np.cos(w * x[..., 1])
            return a * w * np.stack([c1 * s2, s1 * c2], axis=-1)

        def hess(x):
            s1, c1 = np.sin(w * x[..., 0] + ph), np.cos(w * x[..., 0] + ph)
            s2, c2 = np.sin(w * x[..., 1]), np.cos(w * x[..., 1])
            h11 = -a * w * w * s1 * s2
            h12 = a * w * w * c1 * c2
            return np.stack([np.stack([h11, h12], -1), np.stack([h12, h11], -1)], -2)
    # max |grad| is a*w in both cases: in 2D |grad|^2 = (aw)^2 (s+t-2st) <= (aw)^2
    L = abs(a) * w
    params = {"amplitude": a, "period": lam, "offset": c, "phase": ph, "dim": dim}
    return SurfaceProfile("sinusoid", params, L, c - abs(a), c + abs(a), dim, True, f, g, hess)


@dataclass(frozen=True)
class _Polyline:
    """Piecewise-linear function with constant extension, stored in ramp form."""

    knots: np.ndarray
    values: np.ndarray
    period: float | None

    @property
    def slopes(self):
        return np.diff(self.values) / np.diff(self.knots)

    def expanded(self):
        """Knots and slope jumps, with one extra period on each side when periodic."""
        x, y = self.knots, self.values
        if self.period is not None:
            p = self.period
            x = np.concatenate([x[:-1] - p, x[:-1], x + p])
            y = np.concatenate([y[:-1], y[:-1], y])
        s = np.diff(y) / np.diff(x)
        s_full = np.concatenate([[0.0], s, [0.0]])
        return x, y[0], np.diff(s_full)

    def wrap(self, t):
        if self.period is None:
            return t
        x0 = self.knots[0]
        return x0 + np.mod(t - x0, self.period)

    def __call__(self, t):
        t = self.wrap(t)
        return np.interp(t, self.knots, self.values)

    def derivative(self, t):
        t = self.wrap(t)
        s = self.slopes
        idx = np.searchsorted(self.knots, t, side="right") - 1
        inside = (idx >= 0) & (idx < len(s))
        out = np.zeros_like(t, dtype=float)
        out[inside] = s[idx[inside]]
        return out


def _polyline_surface(kind, poly, dim, axis, params):
    ax = int(axis)

    def f(x):
        return poly(x[..., ax])

    def g(x):
        out = np.zeros(x.shape)
        out[..., ax] = poly.derivative(x[..., ax])
        return out

    L = float(np.max(np.abs(poly.slopes))) if len(poly.knots) > 1 else 0.0
    return SurfaceProfile(kind, params, L, float(poly.values.min()), float(poly.values.max()),
                          dim, False, f, g)


def _make_polyline(knots, values, periodic):
    x = np.asarray(knots, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.shape != y.shape or len(x) < 2:
        raise ValueError("piecewise-linear profile needs matching 1D knot and value lists (>= 2)")
    if np.any(np.diff(x) <= 0):
        raise ValueError("knots must be strictly increasing")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("profile parameters must be finite")
    period = None
    if periodic:
        if abs(y[0] - y[-1]) > 1e-12:
            raise ValueError("periodic profile needs equal first and last values")
        period = float(x[-1] - x[0])
    return _Polyline(x, y, period)


# ---------------------------------------------------------------- public API

def make_surface(spec):
    """Build a :class:`SurfaceProfile` from a JSON-style description.

    Parameters
    ----------
    spec : dict
        ``{"kind": ..., "params": {...}}`` with optional declared ``L``,
        ``f_minus`` and ``f_plus``.  Kind-specific parameters:

        * ``flat``: ``height``, ``dim``
        * ``sinusoid``: ``amplitude``, ``period``, ``offset``, ``phase``, ``dim``
        * ``piecewise-linear``: ``knots``, ``values``, ``periodic``, ``dim``, ``axis``
        * ``tabulated``: ``values``, ``spacing``, ``start``, ``periodic``, ``dim``, ``axis``

        For ``dim = 2`` the piecewise-linear and tabulated kinds are ridges
        varying along lateral axis ``axis``.

    Returns
    -------
    SurfaceProfile

    Raises
    ------
    ValueError
        Unknown kind, non-finite parameters, ``f_minus > f_plus``, a declared
        ``L`` below the actual slope, or declared height bounds that do not
        bracket the profile.
    """
    if isinstance(spec, SurfaceProfile):
        return spec
    kind = spec.get("kind")
    p = dict(spec.get("params", {}))
    dim = int(p.get("dim", 1))
    if dim not in (1, 2):
        raise ValueError("dim must be 1 or 2")
    for key, val in p.items():
        if isinstance(val, (int, float)) and not isinstance(val, bool) and not np.isfinite(val):
            raise ValueError(f"parameter {key} is not finite")
    if kind == "flat":
        surf = _flat(p.get("height", 0.0), dim)
    elif kind == "sinusoid":
        surf = _sinusoid(p["amplitude"], p["period"], p.get("offset", 0.0), dim, p.get("phase", 0.0))
    elif kind == "piecewise-linear":
        poly = _make_polyline(p["knots"], p["values"], bool(p.get("periodic", False)))
        surf = _polyline_surface(kind, poly, dim, p.get("axis", 0), p)
    elif kind == "tabulated":
        vals = np.asarray(p["values"], dtype=float)
        dx = float(p.get("spacing", 1.0))
        if dx <= 0:
            raise ValueError("spacing must be positive")
        knots = float(p.get("start", 0.0)) + dx * np.arange(len(vals))
        poly = _make_polyline(knots, vals, bool(p.get("periodic", False)))
        surf = _polyline_surface(kind, poly, dim, p.get("axis", 0), p)
    else:
        raise ValueError(f"unknown surface kind {kind!r}")
    return _apply_declared(surf, spec)


def _apply_declared(surf, spec):
    L_decl = spec.get("L")
    fm, fp = spec.get("f_minus"), spec.get("f_plus")
    if fm is not None and fp is not None and fm > fp:
        raise ValueError("f_minus exceeds f_plus")
    if L_decl is not None:
        if surf.L > L_decl + SLOPE_SLACK:
            raise ValueError(f"declared L={L_decl} is below the actual slope {surf.L:.12g}")
    if fm is not None and fm > surf.f_minus + SLOPE_SLACK:
        raise ValueError("declared f_minus exceeds the minimum of the profile")
    if fp is not None and fp < surf.f_plus - SLOPE_SLACK:
        raise ValueError("declared f_plus is below the maximum of the profile")
    changes = {}
    if L_decl is not None:
        changes["L"] = float(L_decl)
    if fm is not None:
        changes["f_minus"] = float(fm)
    if fp is not None:
        changes["f_plus"] = float(fp)
    if not changes:
        return surf
    from dataclasses import replace
    return replace(surf, **changes)


def _bump_nodes(dim):
    """Quadrature nodes and normalized weights for the unit bump on the unit ball."""
    t, w = np.polynomial.legendre.leggauss(GAUSS_POINTS)
    if dim == 1:
        nodes = t[:, None]
        wts = w * (1 - t**2) ** BUMP_POWER
    else:
        t1, t2 = np.meshgrid(t, t, indexing="ij")
        w2 = np.outer(w, w)
        r2 = t1**2 + t2**2
        psi = np.where(r2 < 1, (1 - np.minimum(r2, 1)) ** BUMP_POWER, 0.0)
        keep = psi > 0
        nodes = np.stack([t1[keep], t2[keep]], axis=-1)
        wts = (w2 * psi)[keep]
    return nodes, wts / wts.sum()


def _ramp_primitives(power):
    """Return ``R(u)`` and ``R'(u)``, the convolution of ``max(u, 0)`` with the bump.

    The bump here is the one-dimensional kernel ``c (1 - t^2)^power`` on
    ``[-1, 1]``.  With ``P0(u) = int_{-1}^u psi`` and ``P1(u) = int_{-1}^u t psi``
    one gets ``R = u P0 - P1`` and ``R' = P0``.
    """
    a = float(power)
    c = 1.0 / (2.0 ** (2 * a + 1) * beta_fn(a + 1, a + 1))

    def p0(u):
        return betainc(a + 1, a + 1, (np.clip(u, -1, 1) + 1) / 2)

    def p1(u):
        uc = np.clip(u, -1, 1)
        return -c * (1 - uc**2) ** (a + 1) / (2 * (a + 1))

    def ramp(u):
        return np.where(u >= 1, u, np.where(u <= -1, 0.0, u * p0(u) - p1(u)))

    return ramp, p0


def mollify(f, eps):
    """Smooth approximation ``f_eps = psi_delta * f + eps / 2`` with ``delta = eps / (3 L)``.

    Parameters
    ----------
    f : SurfaceProfile
    eps : float
        Positive target distance.

    Returns
    -------
    SurfaceProfile
        Smooth profile with the same Lipschitz constant satisfying
        ``f + eps/6 <= f_eps <= f + 5 eps / 6``.

    Notes
    -----
    Smooth bases are convolved by tensor Gauss quadrature over the bump
    support.  Piecewise-linear bases are convolved exactly through the ramp
    primitive of the bump, since a quadrature rule applied to a kinked
    integrand would leave kinks in the result.  On two-dimensional ridges the
    radial bump reduces to its one-dimensional marginal ``(1 - t^2)^{9/2}``.
    """
    eps = float(eps)
    if not eps > 0:
        raise ValueError("eps must be positive")
    if f.L == 0 or f.kind == "flat":
        base = float(np.mean(f.height(np.zeros(f.dim_lateral))))
        if f.kind != "flat":
            raise ValueError("L = 0 is only supported for flat surfaces")
        out = _flat(base + eps / 2, f.dim_lateral)
        return out
    delta = eps / (3 * f.L)
    params = {"base": f.to_dict(), "eps": eps, "delta": delta, "dim": f.dim_lateral}
    if f.kind in ("piecewise-linear", "tabulated"):
        fn, gr = _mollify_polyline(f, delta, eps)
    else:
        fn, gr = _mollify_quadrature(f, delta, eps)
    logger.debug("mollified %s surface with eps=%g, delta=%g", f.kind, eps, delta)
    return SurfaceProfile("mollified", params, f.L, f.f_minus + eps / 6, f.f_plus + 5 * eps / 6,
                          f.dim_lateral, True, fn, gr)


def _mollify_quadrature(f, delta, eps):
    nodes, wts = _bump_nodes(f.dim_lateral)
    shifts = delta * nodes

    def fn(x):
        acc = np.zeros(x.shape[:-1])
        for s, w in zip(shifts, wts):
            acc += w * f._f(x - s)
        return acc + eps / 2

    def gr(x):
        acc = np.zeros(x.shape)
        for s, w in zip(shifts, wts):
            acc += w * f._grad(x - s)
        return acc

    return fn, gr


def _mollify_polyline(f, delta, eps):
    p = f.params
    if f.kind == "tabulated":
        vals = np.asarray(p["values"], dtype=float)
        knots = float(p.get("start", 0.0)) + float(p.get("spacing", 1.0)) * np.arange(len(vals))
    else:
        knots, vals = p["knots"], p["values"]
    poly = _make_polyline(knots, vals, bool(p.get("periodic", False)))
    if poly.period is not None and delta >= poly.period:
        raise ValueError("mollifier radius exceeds the profile period")
    xk, y0, jumps = poly.expanded()
    power = BUMP_POWER if f.dim_lateral == 1 else BUMP_POWER + 0.5
    ramp, dramp = _ramp_primitives(power)
    ax = int(p.get("axis", 0))

    def fn(x):
        t = poly.wrap(x[..., ax])
        u = (t[..., None] - xk) / delta
        return y0 + delta * np.sum(jumps * ramp(u), axis=-1) + eps / 2

    def gr(x):
        t = poly.wrap(x[..., ax])
        u = (t[..., None] - xk) / delta
        out = np.zeros(x.shape)
        out[..., ax] = np.sum(jumps * dramp(u), axis=-1)
        return out

    return fn, gr


# ---------------------------------------------------------------- cones

@dataclass(frozen=True)
class NonTangentialCone:
    """Upward cone of slope ``L_star`` with apex on the surface above ``apex``.

    Attributes
    ----------
    surface : SurfaceProfile
    apex : ndarray
        Lateral coordinates of the apex.
    L_star : float
        Cone slope; must exceed the surface Lipschitz constant.
    """

    surface: SurfaceProfile
    apex: np.ndarray
    L_star: float

    def __post_init__(self):
        if not self.L_star > self.surface.L:
            raise ValueError("cone slope must exceed the surface Lipschitz constant")
        object.__setattr__(self, "apex", np.atleast_1d(np.asarray(self.apex, dtype=float)))

    @property
    def apex_point(self):
        return np.append(self.apex, self.surface.height(self.apex))

    def contains(self, y):
        y = np.asarray(y, dtype=float)
        lat = y[..., :-1] - self.apex
        rise = y[..., -1] - float(self.surface.height(self.apex))
        return rise >= self.L_star * np.sqrt(np.sum(lat * lat, axis=-1))


def cone_contains(cone, y):
    """True iff ``y_n - f(apex) >= L_star |y~ - apex|``."""
    return cone.contains(y)


def cone_alpha(L, L_star):
    """Constant ``alpha`` with ``|z - x| <= alpha |z - y|`` for cone points ``z``.

    Here ``x`` is the apex and ``y`` any point of a graph of slope at most
    ``L`` through ``x``.  The value ``sqrt((1 + L_star^2)(1 + L^2)) / (L_star - L)``
    is the reciprocal sine of the smallest angle between a cone generator and
    the double cone ``|y_n| <= L |y~|`` that contains the graph.
    """
    if not L_star > L >= 0:
        raise ValueError("need L_star > L >= 0")
    return float(np.sqrt((1 + L_star**2) * (1 + L**2)) / (L_star - L))


def sampled_lipschitz(surface, points):
    """Largest difference quotient of ``surface`` over all pairs in ``points``."""
    pts = np.asarray(points, dtype=float)
    if surface.dim_lateral == 1:
        pts = pts.reshape(-1, 1)
    vals = surface.height(pts)
    best = 0.0
    for i in range(len(pts) - 1):
        d = np.sqrt(np.sum((pts[i + 1:] - pts[i]) ** 2, axis=-1))
        dv = np.abs(vals[i + 1:] - vals[i])
        ok = d > 0
        if np.any(ok):
            best = max(best, float(np.max(dv[ok] / d[ok])))
    return best
