"""Explicit stability constants for the layer, impedance, transmission and integral-equation problems.

Every calculator returns a :class:`BoundCertificate`.  ``value`` is the
constant multiplying ``||g||_2`` in the corresponding a-priori estimate
(or the operator-norm bound for the integral equation); ``extras`` carries
the intermediate quantities.  Inputs outside a formula's hypotheses raise
:class:`~roughscatter.errors.HypothesisError`; no calculator ever returns
NaN or infinity.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

from .errors import HypothesisError

__all__ = [
    "BoundCertificate",
    "ellipticity_constant",
    "layer_arbitrary_freq",
    "impedance_small_k",
    "impedance_E",
    "transmission_constants",
    "bie_operator_bound",
]

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class BoundCertificate:
    """A named explicit constant with its inputs and hypothesis status."""

    name: str
    inputs: dict
    value: float
    hypotheses_ok: bool = True
    messages: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def _finite(name, inputs, value, extras, messages=()):
    vals = [value] + [v for v in extras.values() if isinstance(v, float)]
    if not all(math.isfinite(v) for v in vals) or not value > 0:
        raise HypothesisError(f"{name}: constant is not finite and positive for inputs {inputs}")
    return BoundCertificate(name, dict(inputs), float(value), True, list(messages), dict(extras))


def ellipticity_constant(kappa_inf, kappa_plus, kappa_0, theta):
    """Ellipticity constant ``C`` of the layer form (``alpha = 1/C``).

    ``C <= (2 + kp^2) / (2 - ki^2)`` when ``ki < sqrt(2)``, and
    ``C <= csc(theta) (1 + kp^2 / max(2, k0^2))`` when ``theta > 0``;
    the smaller applicable value is returned.
    """
    inputs = {"kappa_inf": kappa_inf, "kappa_plus": kappa_plus, "kappa_0": kappa_0, "theta": theta}
    options = {}
    if kappa_inf < SQRT2:
        options["real"] = (2 + kappa_plus**2) / (2 - kappa_inf**2)
    if theta > 0:
        options["absorbing"] = (1 + kappa_plus**2 / max(2.0, kappa_0**2)) / math.sin(theta)
    if not options:
        raise HypothesisError("ellipticity needs kappa_inf < sqrt(2) or theta > 0")
    branch = min(options, key=options.get)
    C = options[branch]
    extras = {"alpha": 1.0 / C, "branch": branch}
    extras.update({f"C_{k}": v for k, v in options.items()})
    return _finite("ellipticity_constant", inputs, C, extras)


def layer_arbitrary_freq(kappa_plus, kappa_inf, kappa_0, lambda1, lambda2, depth, k_plus, k_inf, k_0):
    """Arbitrary-frequency layer constants.

    ``A = 2 - lambda1 depth^3 / 2``,
    ``B = 2 kp + 1 + 2 sqrt(2) + lambda2 depth + 2 ki^2 / A`` and the
    factor ``sqrt([(kp^2 + ki^2) B/A + 1] k0^2 B/A)`` in
    ``k_0 ||u||_V <= factor ||g||_2``.  The full inf-sup constant
    ``C = 1 + k_0^{-1} (k_+ + k_inf^2 / k_+) factor`` is returned in ``extras``.

    ``lambda1 = 0`` is accepted as the limit of admissible values: a medium
    satisfying the monotonicity condition for ``lambda1 = 0`` satisfies it
    for every ``lambda1 > 0`` and the constants are continuous there.
    """
    inputs = {"kappa_plus": kappa_plus, "kappa_inf": kappa_inf, "kappa_0": kappa_0,
              "lambda1": lambda1, "lambda2": lambda2, "depth": depth,
              "k_plus": k_plus, "k_inf": k_inf, "k_0": k_0}
    if depth <= 0:
        raise HypothesisError("depth H - f_minus must be positive")
    upper = 4.0 / depth**3
    if not (0 <= lambda1 < upper):
        raise HypothesisError(f"lambda1 must satisfy 0 < lambda1 < 4/(H-f_-)^3 = {upper:.6g}")
    if lambda2 < 0:
        raise HypothesisError("lambda2 must be nonnegative")
    A = 2.0 - lambda1 * depth**3 / 2.0
    B = 2 * kappa_plus + 1 + 2 * SQRT2 + lambda2 * depth + 2 * kappa_inf**2 / A
    factor = math.sqrt(((kappa_plus**2 + kappa_inf**2) * B / A + 1) * kappa_0**2 * B / A)
    C = 1 + (k_plus + k_inf**2 / k_plus) * factor / k_0
    return _finite("layer_arbitrary_freq", inputs, factor, {"A": A, "B": B, "factor": factor, "C": C})


def impedance_small_k(kappa, eta, alpha1=0.0, Phi=0.0, mode="A3"):
    """Small-wavenumber impedance constants ``C_1`` (A2) or ``C_2`` (A3).

    Both bound ``k ||u||_{H^1} <= C ||g||_2``.
    """
    inputs = {"kappa": kappa, "eta": eta, "alpha1": alpha1, "Phi": Phi, "mode": mode}
    if eta <= 0:
        raise HypothesisError("eta must be positive")
    if kappa < 0:
        raise HypothesisError("kappa must be nonnegative")
    if mode == "A2":
        if not 0 <= alpha1 < math.pi / 2:
            raise HypothesisError("alpha1 must lie in [0, pi/2)")
        ea = eta / math.cos(alpha1)
        threshold = 2 * ea / (1 + math.sqrt(1 + 2 * ea**2))
        if not kappa < threshold:
            raise HypothesisError(f"A2 branch needs kappa < {threshold:.12g}")
        root = math.sqrt((ea * (2 + kappa**2) - 4 * kappa) ** 2 + 16 * kappa**3 * ea)
        num = 2 * ea + ea * kappa**2 + 4 * kappa + root
        den = 6 * ea - ea * kappa**2 - 4 * kappa - root
        if not den > 0:
            raise HypothesisError("A2 quotient denominator is not positive")
        C = num / den / math.cos(alpha1)
        return _finite("impedance_small_k", inputs, C, {"eta_alpha": ea, "threshold": threshold})
    if mode == "A3":
        if not kappa < SQRT2:
            raise HypothesisError("A3 branch needs kappa < sqrt(2)")
        if not -math.pi / 2 < Phi <= 0:
            raise HypothesisError("Phi must lie in (-pi/2, 0]")
        shift = eta * math.tan(-Phi) + (8 * kappa / (6 + kappa**2)) * (2 + kappa**2) / (2 - kappa**2)
        C = (6 + kappa**2) / (2 - kappa**2) * math.sqrt(1 + shift**2 / eta**2)
        alpha2 = math.atan(shift / eta)
        return _finite("impedance_small_k", inputs, C, {"alpha2": alpha2})
    raise HypothesisError("mode must be 'A2' or 'A3'")


def impedance_E(kappa, eta, B_adm, L, Phi):
    """Arbitrary-frequency impedance constant ``E``.

    ``k ||u||_{H^1} <= E ||g||_2``; the solution-operator constant
    ``sec(Phi)(1 + 2E)`` (bounding ``||u||`` by the dual norm of the data)
    is returned in ``extras["solution_constant"]``.
    """
    inputs = {"kappa": kappa, "eta": eta, "B_adm": B_adm, "L": L, "Phi": Phi}
    if eta <= 0:
        raise HypothesisError("eta must be positive")
    if not -math.pi / 2 < Phi <= 0:
        raise HypothesisError("Phi must lie in (-pi/2, 0]")
    sec = 1.0 / math.cos(Phi)
    E = (2 * SQRT2 * kappa * ((2 + kappa**2 * (1 + B_adm**2 * (1 + L))) / eta + kappa * (SQRT2 + sec))
         + sec / (4 * SQRT2))
    return _finite("impedance_E", inputs, E, {"E": E, "solution_constant": sec * (1 + 2 * E)})


def transmission_constants(kappa_plus, kappa_minus, kappa_inf, k_inf, k_plus, L, eps, lambda3, depth):
    """Transmission constants ``P``, ``C_1`` and the full solution constant.

    ``k_inf ||w||_{H^1(S)} <= C_1 ||g||_2`` and
    ``||u|| <= [1 + C_1 / k_inf][k_+ + k_inf^2 / k_+] ||G||``.
    """
    inputs = {"kappa_plus": kappa_plus, "kappa_minus": kappa_minus, "kappa_inf": kappa_inf,
              "k_inf": k_inf, "k_plus": k_plus, "L": L, "eps": eps, "lambda3": lambda3, "depth": depth}
    if not (lambda3 > 0 and eps > 0):
        raise HypothesisError("lambda3 and eps must be positive")
    if not (k_inf > 0 and k_plus > 0 and depth > 0):
        raise HypothesisError("wavenumbers and depth must be positive")
    P = kappa_inf**2 + 4 * kappa_inf * k_inf * math.sqrt(1 + L**2) * (
        eps + 2 / (eps * lambda3) * (1 + 4 * kappa_inf**2))
    Q = P**2 / (2 * k_inf**2) * (2 * kappa_plus + 2 * kappa_minus + 1) ** 2 + P * depth**2
    C1_sq = k_inf * math.sqrt(2 * Q) + 4 * k_inf**2 * Q
    C1 = math.sqrt(C1_sq)
    full = (1 + C1 / k_inf) * (k_plus + k_inf**2 / k_plus)
    return _finite("transmission_constants", inputs, C1,
                   {"P": P, "Q": Q, "C1_squared": C1_sq, "C1": C1, "solution_constant": full})


def bie_operator_bound(k, L, eta):
    """Bound ``B`` on the inverse of the combined boundary operator.

    ``B = (1 + sqrt(3 k^2 L'/eta (5 L' + 6 L^2) + 6 (L' + 3 L^2)^2)) / 2`` with
    ``L' = sqrt(1 + L^2)``.
    """
    inputs = {"k": k, "L": L, "eta": eta}
    if not (k > 0 and eta > 0):
        raise HypothesisError("k and eta must be positive")
    if L < 0:
        raise HypothesisError("L must be nonnegative")
    Lp = math.sqrt(1 + L * L)
    inner = 3 * k * k * Lp / eta * (5 * Lp + 6 * L * L) + 6 * (Lp + 3 * L * L) ** 2
    B = 0.5 * (1 + math.sqrt(inner))
    return _finite("bie_operator_bound", inputs, B, {"L_prime": Lp, "inner": inner})
