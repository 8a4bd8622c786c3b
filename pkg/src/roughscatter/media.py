"""Wavenumber fields, impedance admittances and validators for their structural assumptions.

Media are described by ``k^2(x)`` as a complex field; the last coordinate of
a point is vertical.  Validators sample the field on a grid and report the
worst margin of the inequality they check together with the point where it
is attained, so failures can be reproduced.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .errors import HypothesisError
from .geometry import SurfaceProfile, make_surface

logger = logging.getLogger(__name__)

FD_DIVISIONS = 512
SLACK = 1e-8
ADMITTANCE_SLACK = 1e-12
LATERAL_SAMPLES = 64

__all__ = [
    "MediumProfile",
    "AdmittanceProfile",
    "ValidationReport",
    "make_medium",
    "make_admittance",
    "validate_assumption1",
    "validate_assumptions_4_5",
    "validate_admittance",
]


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of a sampled hypothesis check.

    Attributes
    ----------
    name : str
    passed : bool
    margin : float
        Worst sampled margin; negative means violated.
    argmin : list of float
        Point where the worst margin occurs.
    details : dict
        Check-specific extras.
    messages : list of str
    """

    name: str
    passed: bool
    margin: float
    argmin: list
    details: dict = field(default_factory=dict)
    messages: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class MediumProfile:
    """Spatially varying wavenumber.

    Attributes
    ----------
    kind : str
    params : dict
    k_plus : float
        Wavenumber at and above ``H`` (layer problems) or ``h_plus``.
    k_minus : float or None
        Wavenumber at and below ``h_minus`` (transmission problems).
    H, f_minus : float or None
        Layer geometry: top of the strip and lowest surface height.
    h_plus, h_minus : float or None
        Transmission strip bounds.
    k0, k_inf : float
        Sampled lower and upper bounds of ``|k|`` over the strip.
    theta : float
        Sampled minimum of ``arg k^2`` (radians, in ``[0, pi/2]``).
    """

    kind: str
    params: dict
    k_plus: float
    k_minus: float | None
    H: float | None
    f_minus: float | None
    h_plus: float | None
    h_minus: float | None
    k0: float
    k_inf: float
    theta: float
    _k2: Callable = field(repr=False, compare=False)

    def k_squared(self, x):
        """Complex ``k^2`` at points ``x`` of shape ``(..., n)``."""
        return self._k2(np.asarray(x, dtype=float))

    @property
    def strip(self):
        if self.h_plus is not None:
            return self.h_minus, self.h_plus
        return self.f_minus, self.H

    @property
    def is_constant(self):
        return self.kind == "constant"

    def to_dict(self):
        return {"kind": self.kind, "params": self.params, "k_plus": self.k_plus,
                "k_minus": self.k_minus, "k0": self.k0, "k_inf": self.k_inf, "theta": self.theta}


def _plateau(s, halfwidth, ramp):
    """1 on ``|s| <= halfwidth``, smooth cosine ramp to 0 over ``ramp``."""
    a = np.abs(s)
    if ramp <= 0:
        return (a <= halfwidth).astype(float)
    t = np.clip((a - halfwidth) / ramp, 0.0, 1.0)
    return 0.5 * (1 + np.cos(np.pi * t))


def make_medium(spec, *, H=None, f_minus=None, h_plus=None, h_minus=None, dim=2):
    """Build a :class:`MediumProfile`.

    Parameters
    ----------
    spec : dict
        ``{"kind": "constant|vertical-ramp|two-layer|tabulated", ...}``.

        * ``constant``: ``k``
        * ``vertical-ramp``: ``k_plus``, ``slope`` (d Re k^2 / d x_n below H),
          ``absorption`` (Im k^2 below H)
        * ``two-layer``: ``k_plus``, ``k_minus``, ``interface`` (height or
          surface spec), optional ``dip`` removed from ``k^2`` on a plateau of
          half-width ``dip_halfwidth`` with cosine ``dip_ramp`` around
          ``dip_center``
        * ``tabulated``: ``heights`` and ``k2_re`` (optional ``k2_im``),
          interpolated linearly in ``x_n`` and held constant outside
    H, f_minus : float, optional
        Layer geometry (Dirichlet and impedance problems).
    h_plus, h_minus : float, optional
        Strip bounds (transmission problems).
    dim : int
        Spatial dimension used when sampling bounds.
    """
    if isinstance(spec, MediumProfile):
        return spec
    kind = spec.get("kind")
    k_minus = None
    if kind == "constant":
        k = float(spec["k"])
        if not k > 0:
            raise ValueError("wavenumber must be positive")
        k_plus = k

        def k2(x):
            return np.full(x.shape[:-1], k * k, dtype=complex)
        if h_plus is not None:
            k_minus = k
    elif kind == "vertical-ramp":
        k_plus = float(spec["k_plus"])
        slope = float(spec.get("slope", 0.0))
        absorption = float(spec.get("absorption", 0.0))
        top = float(spec.get("H", H))
        if top is None:
            raise ValueError("vertical-ramp needs H")
        if absorption < 0:
            raise ValueError("Im k^2 must be nonnegative")

        def k2(x):
            d = np.minimum(x[..., -1] - top, 0.0)
            below = d < 0
            return k_plus**2 + slope * d + 1j * absorption * below
    elif kind == "two-layer":
        k_plus = float(spec["k_plus"])
        k_minus = float(spec["k_minus"])
        iface = spec.get("interface", 0.0)
        surf = make_surface(iface) if isinstance(iface, dict) else None
        level = None if surf is not None else float(iface)
        dip = float(spec.get("dip", 0.0))
        half = float(spec.get("dip_halfwidth", 0.0))
        ramp = float(spec.get("dip_ramp", 0.0))
        center = float(spec.get("dip_center", level if level is not None else 0.0))

        def k2(x):
            xn = x[..., -1]
            if surf is None:
                f = level
            else:
                f = surf.height(x[..., :-1] if surf.dim_lateral == 2 else x[..., 0])
            base = np.where(xn >= f, k_plus**2, k_minus**2)
            return (base - dip * _plateau(xn - center, half, ramp)).astype(complex)
    elif kind == "tabulated":
        zs = np.asarray(spec["heights"], dtype=float)
        re = np.asarray(spec["k2_re"], dtype=float)
        im = np.asarray(spec.get("k2_im", np.zeros_like(re)), dtype=float)
        if np.any(np.diff(zs) <= 0) or zs.shape != re.shape or re.shape != im.shape:
            raise ValueError("tabulated medium needs increasing heights and matching values")
        k_plus = float(np.sqrt(re[-1])) if im[-1] == 0 else float(abs(np.sqrt(re[-1] + 1j * im[-1])))
        if "k_minus" in spec:
            k_minus = float(spec["k_minus"])

        def k2(x):
            xn = x[..., -1]
            return np.interp(xn, zs, re) + 1j * np.interp(xn, zs, im)
    else:
        raise ValueError(f"unknown medium kind {kind!r}")
    if not k_plus > 0:
        raise ValueError("k_plus must be positive")
    if k_minus is not None and not k_minus > 0:
        raise ValueError("k_minus must be positive")

    lo, hi = (h_minus, h_plus) if h_plus is not None else (f_minus, H)
    if lo is None or hi is None:
        lo, hi = -1.0, 1.0
    vals = _sample(k2, lo, hi, dim)
    if np.any(vals.real < -SLACK) or np.any(vals.imag < -SLACK):
        raise ValueError("medium violates Re k^2 >= 0 and Im k^2 >= 0 on the strip")
    absk = np.sqrt(np.abs(vals))
    k0 = float(absk.min())
    if not k0 > 0:
        raise ValueError("medium has k = 0 somewhere in the strip (k0 must be positive)")
    theta = float(np.clip(np.min(np.angle(vals)), 0.0, np.pi / 2))
    return MediumProfile(kind, dict(spec), k_plus, k_minus, H, f_minus, h_plus, h_minus,
                         k0, float(absk.max()), theta, k2)


def _sample(k2, lo, hi, dim, n_lat=LATERAL_SAMPLES):
    zs = np.linspace(lo, hi, FD_DIVISIONS + 1)
    xs = np.linspace(-4.0, 4.0, n_lat)
    if dim == 2:
        X, Z = np.meshgrid(xs, zs, indexing="ij")
        pts = np.stack([X, Z], -1)
    else:
        X, Y, Z = np.meshgrid(xs[::4], xs[::4], zs, indexing="ij")
        pts = np.stack([X, Y, Z], -1)
    return k2(pts)


def _lateral_grid(dim, grid):
    if grid is not None:
        g = np.asarray(grid, dtype=float)
        return g.reshape(-1, dim - 1)
    xs = np.linspace(-4.0, 4.0, LATERAL_SAMPLES)
    if dim == 2:
        return xs[:, None]
    X, Y = np.meshgrid(xs[::4], xs[::4], indexing="ij")
    return np.stack([X.ravel(), Y.ravel()], -1)


def validate_assumption1(m, lambda1, lambda2, grid=None, dim=2, allow_zero=False):
    """Check ``d Re(k^2)/d x_n >= -lambda1 - lambda2 Im(k^2)`` on a sample grid.

    Derivatives are forward differences with step ``(H - f_minus)/512``
    evaluated at interval midpoints; ``Im k^2`` is averaged over each interval.

    Parameters
    ----------
    m : MediumProfile
        Layer medium with ``H`` and ``f_minus`` set.
    lambda1, lambda2 : float
        Require ``0 < lambda1 < 4/(H - f_minus)^3`` and ``lambda2 >= 0``.
    grid : array_like, optional
        Lateral sample points (default: 64 points on ``[-4, 4]`` per axis).
    allow_zero : bool
        Accept ``lambda1 = 0``, the limit case (a medium satisfying the
        inequality with ``lambda1 = 0`` satisfies it for every admissible
        ``lambda1``).

    Raises
    ------
    HypothesisError
        ``lambda1`` or ``lambda2`` outside the admissible range.
    """
    if m.H is None or m.f_minus is None:
        raise ValueError("medium needs H and f_minus for Assumption 1")
    depth = m.H - m.f_minus
    upper = 4.0 / depth**3
    lower_ok = lambda1 >= 0 if allow_zero else lambda1 > 0
    if not (lower_ok and lambda1 < upper):
        raise HypothesisError(
            f"Assumption 1 requires 0 < lambda1 < 4/(H-f_-)^3 = {upper:.6g}; got lambda1={lambda1}")
    if lambda2 < 0:
        raise HypothesisError("Assumption 1 requires lambda2 >= 0")
    lat = _lateral_grid(dim, grid)
    zs = np.linspace(m.f_minus, m.H, FD_DIVISIONS + 1)
    h = zs[1] - zs[0]
    pts = np.concatenate([np.repeat(lat[:, None, :], len(zs), 1),
                          np.broadcast_to(zs[None, :, None], (len(lat), len(zs), 1))], -1)
    vals = m.k_squared(pts)
    dre = np.diff(vals.real, axis=1) / h
    im_mid = 0.5 * (vals.imag[:, 1:] + vals.imag[:, :-1])
    margin = dre + lambda1 + lambda2 * im_mid
    idx = np.unravel_index(np.argmin(margin), margin.shape)
    worst = float(margin[idx])
    point = list(lat[idx[0]]) + [float(zs[idx[1]] + h / 2)]
    passed = worst >= -SLACK
    msgs = [] if passed else [f"Assumption 1 violated: margin {worst:.6g} at {point}"]
    return ValidationReport("assumption1", passed, worst, point,
                            {"lambda1": lambda1, "lambda2": lambda2, "step": h}, msgs)


def validate_assumptions_4_5(m, beta_height, lambda3, eps, collar_surface, grid=None, dim=2):
    """Sampled checks of the transmission monotonicity and collar assumptions.

    Assumption 4: ``Re k^2`` non-increasing in ``x_n`` on ``[h_minus, beta]`` and
    non-decreasing on ``[beta, h_plus]``.  Assumption 5: ``k~^2 - k^2 >= lambda3``
    on the collar ``|x_n - f(x~)| <= eps`` where ``k~ = k_plus`` above ``beta``
    and ``k_minus`` below.

    Returns
    -------
    ValidationReport
        ``details`` holds the individual margins of both assumptions.

    Raises
    ------
    ValueError
        Collar not contained in the strip, or invalid parameters.
    """
    if m.h_plus is None or m.h_minus is None or m.k_minus is None:
        raise ValueError("transmission medium needs h_plus, h_minus and k_minus")
    if not (m.h_minus <= beta_height <= m.h_plus):
        raise ValueError("beta_height must lie in [h_minus, h_plus]")
    if not (lambda3 > 0 and eps > 0):
        raise ValueError("lambda3 and eps must be positive")
    surf = make_surface(collar_surface) if isinstance(collar_surface, dict) else collar_surface
    if surf.f_minus - eps < m.h_minus or surf.f_plus + eps > m.h_plus:
        raise ValueError("collar around the interface is not contained in the strip")
    lat = _lateral_grid(dim, grid)
    zs = np.linspace(m.h_minus, m.h_plus, FD_DIVISIONS + 1)
    pts = np.concatenate([np.repeat(lat[:, None, :], len(zs), 1),
                          np.broadcast_to(zs[None, :, None], (len(lat), len(zs), 1))], -1)
    k2 = m.k_squared(pts).real
    dk = np.diff(k2, axis=1)
    zmid = 0.5 * (zs[1:] + zs[:-1])
    sign = np.where(zmid < beta_height, -1.0, 1.0)
    # an interval straddling beta carries no constraint
    straddle = (zs[:-1] < beta_height) & (zs[1:] > beta_height)
    mono = np.where(straddle[None, :], np.inf, sign[None, :] * dk)
    i4 = np.unravel_index(np.argmin(mono), mono.shape)
    m4 = float(mono[i4]) if np.isfinite(mono[i4]) else 0.0
    p4 = list(lat[i4[0]]) + [float(zmid[i4[1]])]
    pass4 = m4 >= -SLACK

    offs = np.linspace(-eps, eps, 65)
    fl = surf.height(lat if surf.dim_lateral == 2 else lat[:, 0])
    cz = fl[:, None] + offs[None, :]
    cpts = np.concatenate([np.repeat(lat[:, None, :], len(offs), 1), cz[..., None]], -1)
    kt2 = np.where(cz >= beta_height, m.k_plus**2, m.k_minus**2)
    gap = kt2 - m.k_squared(cpts).real - lambda3
    i5 = np.unravel_index(np.argmin(gap), gap.shape)
    m5 = float(gap[i5])
    p5 = [float(v) for v in cpts[i5]]
    pass5 = m5 >= -SLACK

    msgs = []
    if not pass4:
        msgs.append(f"Assumption 4 violated: monotonicity margin {m4:.6g} at {p4}")
    if not pass5:
        msgs.append(f"Assumption 5 violated: collar margin {m5:.6g} at {p5}")
    worst, where = (m4, p4) if m4 <= m5 else (m5, p5)
    details = {"assumption4": {"passed": bool(pass4), "margin": m4, "argmin": p4},
               "assumption5": {"passed": bool(pass5), "margin": m5, "argmin": p5},
               "beta_height": beta_height, "lambda3": lambda3, "eps": eps}
    return ValidationReport("assumptions4_5", bool(pass4 and pass5), worst, where, details, msgs)


@dataclass(frozen=True)
class AdmittanceProfile:
    """Impedance admittance ``beta`` on the boundary.

    Attributes
    ----------
    beta : callable
        ``beta(x~)`` complex values at lateral points.
    eta : float
        Declared positivity margin.
    alpha1 : float
        Rotation angle for the A2 condition.
    samples : ndarray
        Lateral sample points used for ``B`` and ``Phi``.
    """

    beta: Callable
    eta: float
    alpha1: float = 0.0
    samples: np.ndarray = field(default_factory=lambda: np.linspace(-4, 4, 257))
    params: dict = field(default_factory=dict)

    def values(self):
        return np.asarray(self.beta(self.samples), dtype=complex)

    @property
    def B(self):
        return float(np.max(np.abs(self.values())))

    @property
    def Phi(self):
        return float(np.clip(min(0.0, float(np.min(np.angle(self.values())))), -np.pi / 2, 0.0))


def make_admittance(spec, samples=None):
    """Build an :class:`AdmittanceProfile` from ``{"kind": "constant"|"sinusoid", ...}``.

    ``constant`` takes ``re`` and ``im``; ``sinusoid`` takes ``re``, ``im``,
    ``amplitude`` and ``period`` and adds ``amplitude * cos(2 pi x / period)``
    to the real part.  Both take ``eta`` and optional ``alpha1``.
    """
    kind = spec.get("kind", "constant")
    re, im = float(spec.get("re", 1.0)), float(spec.get("im", 0.0))
    if kind == "constant":
        value = complex(re, im)

        def beta(x):
            x = np.asarray(x, dtype=float)
            shape = x.shape[:-1] if x.ndim > 1 and x.shape[-1] == 2 else x.shape
            return np.full(shape, value, dtype=complex)
    elif kind == "sinusoid":
        amp, per = float(spec["amplitude"]), float(spec["period"])

        def beta(x):
            x = np.asarray(x, dtype=float)
            t = x[..., 0] if x.ndim > 1 and x.shape[-1] == 2 else x
            return (re + amp * np.cos(2 * np.pi * t / per)) + 1j * im
    else:
        raise ValueError(f"unknown admittance kind {kind!r}")
    kw = {}
    if samples is not None:
        kw["samples"] = np.asarray(samples, dtype=float)
    return AdmittanceProfile(beta, float(spec.get("eta", 1.0)), float(spec.get("alpha1", 0.0)),
                             params=dict(spec), **kw)


def validate_admittance(a, mode):
    """Check A2 (``Im(e^{i alpha1} beta) >= eta``) or A3 (``Re beta >= eta``).

    Also reports ``Re beta >= 0``, ``B = sup |beta|``, ``Phi`` and
    ``eta_alpha = eta sec(alpha1)``.
    """
    vals = a.values()
    if mode == "A2":
        if not 0 <= a.alpha1 < np.pi / 2:
            raise ValueError("A2 needs alpha1 in [0, pi/2)")
        margin = np.imag(np.exp(1j * a.alpha1) * vals) - a.eta
    elif mode == "A3":
        margin = vals.real - a.eta
    else:
        raise ValueError("mode must be 'A2' or 'A3'")
    i = int(np.argmin(margin))
    worst = float(margin[i])
    nonneg = float(np.min(vals.real))
    passed = worst >= -ADMITTANCE_SLACK and nonneg >= -ADMITTANCE_SLACK
    msgs = []
    if worst < -ADMITTANCE_SLACK:
        msgs.append(f"{mode} violated: margin {worst:.6g}")
    if nonneg < -ADMITTANCE_SLACK:
        msgs.append("Re beta >= 0 violated")
    pt = np.atleast_1d(a.samples[i]).tolist()
    details = {"mode": mode, "B": a.B, "Phi": a.Phi, "eta": a.eta, "alpha1": a.alpha1,
               "eta_alpha": a.eta / np.cos(a.alpha1), "min_re_beta": nonneg}
    return ValidationReport("admittance", bool(passed), worst, pt, details, msgs)
