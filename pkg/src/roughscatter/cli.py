"""Command-line entry point: run scenarios, emit fields, certificates and reports.

Subcommands ``solve``, ``bounds`` and ``verify`` take ``--scenario PATH``;
``schema`` prints the scenario JSON schema.  Exit codes: 0 success, 1 I/O or
schema error, 2 hypothesis violation, 3 solver failure.  Errors are also
written to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import bie, bounds, dtn, greens, media, variational, verify
from .errors import HypothesisError, SolverError
from .geometry import make_surface

logger = logging.getLogger("roughscatter")

EXIT_OK, EXIT_IO, EXIT_HYPOTHESIS, EXIT_SOLVER = 0, 1, 2, 3

_surface_schema = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["flat", "sinusoid", "piecewise-linear", "tabulated"]},
        "params": {"type": "object"},
        "L": {"type": "number", "minimum": 0},
        "f_minus": {"type": "number"},
        "f_plus": {"type": "number"},
        "mollify": {"type": "number", "exclusiveMinimum": 0},
    },
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "roughscatter scenario",
    "type": "object",
    "required": ["problem"],
    "properties": {
        "problem": {"enum": ["layer", "impedance", "transmission", "bie3d", "bounds-only"]},
        "seed": {"type": "integer", "minimum": 0},
        "unchecked": {"type": "boolean"},
        "surface": _surface_schema,
        "medium": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["constant", "vertical-ramp", "two-layer", "tabulated"]},
                "k": {"type": "number", "exclusiveMinimum": 0},
                "k_plus": {"type": "number", "exclusiveMinimum": 0},
                "k_minus": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "admittance": {
            "type": "object",
            "required": ["kind", "eta"],
            "properties": {
                "kind": {"enum": ["constant", "sinusoid"]},
                "eta": {"type": "number", "exclusiveMinimum": 0},
                "alpha1": {"type": "number"},
                "mode": {"enum": ["A2", "A3"]},
            },
        },
        "source": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["gaussian", "random", "point"]},
                "centers": {"type": "array", "items": {"type": "array", "items": {"type": "number"},
                                                       "minItems": 2, "maxItems": 2}},
                "amplitudes": {"type": "array", "items": {"type": "number"}},
                "count": {"type": "integer", "minimum": 1},
                "width_cells": {"type": "number", "exclusiveMinimum": 0},
                "position": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
            },
        },
        "hypotheses": {
            "type": "object",
            "properties": {
                "lambda1": {"type": "number"},
                "lambda2": {"type": "number"},
                "lambda3": {"type": "number"},
                "eps": {"type": "number"},
                "beta_height": {"type": "number"},
                "interface": _surface_schema,
            },
        },
        "discretization": {
            "type": "object",
            "properties": {
                "H": {"type": "number"},
                "h_plus": {"type": "number"},
                "h_minus": {"type": "number"},
                "period": {"type": "number", "exclusiveMinimum": 0},
                "n_lateral": {"type": "integer", "minimum": 16},
                "n_vertical": {"type": "integer", "minimum": 1},
                "k": {"type": "number", "exclusiveMinimum": 0},
                "R": {"type": "number", "exclusiveMinimum": 0},
                "m": {"type": "integer", "minimum": 2},
                "taper_width": {"type": "number", "exclusiveMinimum": 0},
                "eta": {"type": "number", "minimum": 0},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "method": {"enum": ["auto", "direct", "gmres"]},
                "maxiter": {"type": "integer", "minimum": 1},
            },
        },
        "outputs": {
            "type": "object",
            "properties": {
                "field": {"type": "boolean"},
                "density": {"type": "boolean"},
                "certificate": {"type": "boolean"},
                "report": {"type": "boolean"},
                "probes": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
                "extend_heights": {"type": "array", "items": {"type": "number"}},
            },
        },
    },
    "allOf": [
        {"if": {"properties": {"problem": {"const": "impedance"}}},
         "then": {"required": ["admittance", "surface", "medium"]}},
        {"if": {"properties": {"problem": {"const": "transmission"}}},
         "then": {"required": ["medium"],
                  "properties": {"medium": {"anyOf": [{"required": ["k_minus"]},
                                                      {"properties": {"kind": {"const": "constant"}}}]}}}},
        {"if": {"properties": {"problem": {"const": "bie3d"}}},
         "then": {"required": ["surface"],
                  "properties": {"surface": {"required": ["params"],
                                             "properties": {"params": {"required": ["dim"],
                                                                       "properties": {"dim": {"const": 2}}}}}}}},
        {"if": {"properties": {"problem": {"const": "layer"}}},
         "then": {"required": ["surface", "medium"]}},
    ],
}


class ScenarioError(Exception):
    """Malformed or schema-invalid scenario."""


# ---------------------------------------------------------------- scenario handling

def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(scenario, overrides):
    """Apply ``key.sub=value`` overrides (values parsed as JSON when possible)."""
    out = copy.deepcopy(scenario)
    for item in overrides or []:
        if "=" not in item:
            raise ScenarioError(f"override {item!r} is not of the form key=value")
        key, val = item.split("=", 1)
        parts = key.split(".")
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ScenarioError(f"override path {key!r} crosses a non-object")
        node[parts[-1]] = _parse_value(val)
    return out


def load_scenario(path, overrides=()):
    """Read, override and validate a scenario file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"malformed JSON: {exc}") from exc
    data = apply_overrides(data, overrides)
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ScenarioError(f"schema violation at {list(exc.absolute_path)}: {exc.message}") from exc
    return data


def _surface(sc, key="surface"):
    spec = dict(sc[key])
    eps = spec.pop("mollify", None)
    surf = make_surface(spec)
    if eps is not None:
        from .geometry import mollify
        surf = mollify(surf, eps)
    return surf


def _disc(sc):
    return sc.get("discretization", {})


def _outputs(sc):
    out = {"field": True, "certificate": True, "report": True, "density": True}
    out.update(sc.get("outputs", {}))
    return out


def _jsonify(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.ndarray):
        return _jsonify(obj.tolist())
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def write_json(path, obj):
    Path(path).write_text(json.dumps(_jsonify(obj), indent=2, sort_keys=True) + "\n")


def write_field_csv(path, coords, values):
    """CSV with columns ``x1,x2[,x3],re_u,im_u`` at 17 significant digits."""
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    values = np.asarray(values, dtype=complex).ravel()
    names = [f"x{i + 1}" for i in range(coords.shape[1])] + ["re_u", "im_u"]
    data = np.column_stack([coords, values.real, values.imag])
    np.savetxt(path, data, delimiter=",", header=",".join(names), comments="", fmt="%.17g")


# ---------------------------------------------------------------- problem setup

class Setup:
    """Objects built from a scenario for one strip problem."""

    def __init__(self, sc):
        self.sc = sc
        self.problem = sc["problem"]
        self.rng = np.random.default_rng(sc.get("seed", 0))
        d = _disc(sc)
        self.unchecked = bool(sc.get("unchecked", False))
        hyp = sc.get("hypotheses", {})
        self.hyp = hyp
        grid = dtn.LateralGrid(1, float(d.get("period", 16.0)), int(d.get("n_lateral", 128)))
        nv = int(d.get("n_vertical", 32))
        if self.problem == "transmission":
            hm, hp = float(d.get("h_minus", -0.5)), float(d.get("h_plus", 0.5))
            self.medium = media.make_medium(sc["medium"], h_plus=hp, h_minus=hm)
            self.mesh = variational.make_flat_strip_mesh(grid, hm, hp, nv)
            self.depth = hp - hm
        else:
            self.surface = _surface(sc)
            H = float(d.get("H", self.surface.f_plus + 1.0))
            self.medium = media.make_medium(sc["medium"], H=H, f_minus=self.surface.f_minus)
            self.mesh = variational.make_strip_mesh(self.surface, H, grid, nv)
            self.depth = H - self.surface.f_minus
        self.validation = []
        self.certificate = None

    def validate_and_certify(self):
        m = self.medium
        hyp = self.hyp
        if self.problem == "layer":
            l1, l2 = float(hyp.get("lambda1", 0.0)), float(hyp.get("lambda2", 0.0))
            rep = media.validate_assumption1(m, l1, l2, allow_zero=True)
            self._record(rep)
            self.certificate = bounds.layer_arbitrary_freq(
                m.k_plus * self.depth, m.k_inf * self.depth, m.k0 * self.depth, l1, l2, self.depth,
                m.k_plus, m.k_inf, m.k0)
        elif self.problem == "impedance":
            adm = media.make_admittance(self.sc["admittance"])
            self.admittance = adm
            mode = self.sc["admittance"].get("mode", "A3")
            rep = media.validate_admittance(adm, mode)
            self._record(rep)
            if not m.is_constant:
                raise HypothesisError("the impedance problem needs a constant wavenumber")
            self.certificate = bounds.impedance_E(m.k_plus * self.depth, adm.eta, adm.B, self.surface.L, adm.Phi)
        elif self.problem == "transmission":
            iface = make_surface(hyp["interface"]) if "interface" in hyp else make_surface(
                {"kind": "flat", "params": {"height": 0.0}})
            beta = float(hyp.get("beta_height", 0.5 * (iface.f_minus + iface.f_plus)))
            lam3, eps = float(hyp.get("lambda3", 0.0)), float(hyp.get("eps", 0.0))
            if not (lam3 > 0 and eps > 0):
                raise HypothesisError("Assumption 5 needs lambda3 > 0 and eps > 0")
            rep = media.validate_assumptions_4_5(m, beta, lam3, eps, iface)
            self._record(rep)
            self.certificate = bounds.transmission_constants(
                m.k_plus * self.depth, m.k_minus * self.depth, m.k_inf * self.depth, m.k_inf, m.k_plus,
                iface.L, eps, lam3, self.depth)
        return self.certificate

    def _record(self, rep):
        self.validation.append(rep.to_dict())
        if not rep.passed and not self.unchecked:
            raise HypothesisError("; ".join(rep.messages) or f"{rep.name} failed")

    def assemble(self):
        if self.problem == "layer":
            return variational.assemble_layer(self.mesh, self.medium)
        if self.problem == "impedance":
            adm = getattr(self, "admittance", None) or media.make_admittance(self.sc["admittance"])
            return variational.assemble_impedance(self.mesh, self.medium, adm)
        return variational.assemble_transmission(self.mesh, self.medium)

    def source(self):
        src = self.sc.get("source", {"kind": "gaussian", "centers": [[0.0, 0.5]]})
        width = float(src.get("width_cells", 2.0))
        keep_top = self.problem != "transmission"
        if src["kind"] == "random":
            return variational.gaussian_sources(self.mesh, self.rng, int(src.get("count", 1)), width, keep_top)
        if src["kind"] == "gaussian":
            centers = [tuple(c) for c in src.get("centers", [[0.0, 0.5]])]
            amps = src.get("amplitudes", [1.0] * len(centers))
            g = np.zeros((self.mesh.rows, self.mesh.n), dtype=complex)
            for c, a in zip(centers, amps):
                g += a * variational.gaussian_sources(self.mesh, None, 1, width, keep_top, centers=[c])
            return g
        raise ScenarioError(f"source kind {src['kind']!r} does not apply to {self.problem}")


# ---------------------------------------------------------------- subcommands

def _strip_solve(sc, out):
    st = Setup(sc)
    cert = st.validate_and_certify()
    sys_ = st.assemble()
    g = st.source()
    d = _disc(sc)
    u = variational.solve(sys_, g, method=d.get("method", "auto"), tol=float(d.get("tol", 1e-10)),
                          maxiter=int(d.get("maxiter", 2000)))
    opts = _outputs(sc)
    mesh = st.mesh
    if opts["field"]:
        write_field_csv(out / "field.csv", np.stack([mesh.X.ravel(), mesh.Y.ravel()], -1), u.vector)
    if opts.get("extend_heights"):
        ext = u.extend_up(opts["extend_heights"])
        Xs, Ys = np.meshgrid(mesh.grid.x, ext.heights, indexing="xy")
        write_field_csv(out / "field_above.csv", np.stack([Xs.ravel(), Ys.ravel()], -1), ext.values.ravel())
    norms = variational.FieldNorms.of(sys_, u.vector)
    report = {"problem": st.problem, "residual": u.info.get("residual"), "method": u.info.get("method"),
              "unknowns": int(len(sys_.free)), "norms": norms.__dict__, "validation": st.validation}
    if cert is not None:
        report["apriori"] = variational.check_apriori(u, g, cert).to_dict()
        if opts["certificate"]:
            write_json(out / "certificate.json", cert.to_dict())
    if opts["report"]:
        write_json(out / "report.json", report)
    return report


def _bie_objects(sc):
    d = _disc(sc)
    surf = _surface(sc)
    k = float(d.get("k", sc.get("medium", {}).get("k", 1.0)))
    mesh = bie.build_mesh(surf, float(d.get("R", 8.0)), int(d.get("m", 32)), float(d.get("taper_width", 2.0)), k)
    eta = float(d.get("eta", k))
    return surf, mesh, k, eta


def _bie_solve(sc, out):
    surf, mesh, k, eta = _bie_objects(sc)
    src = sc.get("source", {"kind": "point", "position": [0.0, 0.0, surf.f_plus + 1.0]})
    if src["kind"] != "point":
        raise ScenarioError("bie3d scenarios take a point source")
    z = np.asarray(src["position"], dtype=float)
    g = -greens.greens_halfspace(mesh.points, z, k)
    cert = bounds.bie_operator_bound(k, surf.L, eta) if eta > 0 else None
    d = _disc(sc)
    phi, rep = bie.solve_density(mesh, g, eta, tol=float(d.get("tol", 1e-8)), maxiter=int(d.get("maxiter", 500)),
                                 bound=cert.value if cert else None)
    opts = _outputs(sc)
    if opts["density"]:
        write_field_csv(out / "density.csv", mesh.points, phi.samples)
    report = {"problem": "bie3d", "iterations": rep.iterations, "residual": rep.residual,
              "heuristic_iteration_scale": rep.heuristic_limit, "nodes": mesh.size, "warnings": list(mesh.warnings)}
    probes = opts.get("probes")
    if probes:
        pts = np.asarray(probes, dtype=float)
        v = bie.eval_field(mesh, phi, eta, pts)
        if opts["field"]:
            write_field_csv(out / "field.csv", pts, v)
        if surf.kind == "flat":
            h = surf.f_minus
            exact = verify.image_oracle(z, h, k)(pts) - greens.greens_halfspace(pts, z, k)
            report["image_oracle_rel_error"] = float(np.max(np.abs(v - exact) / np.abs(exact)))
    if cert is not None and opts["certificate"]:
        write_json(out / "certificate.json", cert.to_dict())
    if opts["report"]:
        write_json(out / "report.json", report)
    return report


def cmd_solve(sc, out):
    if sc["problem"] == "bounds-only":
        return cmd_bounds(sc, out)
    if sc["problem"] == "bie3d":
        return _bie_solve(sc, out)
    return _strip_solve(sc, out)


def cmd_bounds(sc, out):
    """Certificates only: strip problems via their validators, bie3d via the operator bound."""
    problem = sc["problem"]
    if problem == "bie3d":
        d = _disc(sc)
        surf = _surface(sc)
        k = float(d.get("k", sc.get("medium", {}).get("k", 1.0)))
        cert = bounds.bie_operator_bound(k, surf.L, float(d.get("eta", k)))
        certs = [cert.to_dict()]
    elif problem == "bounds-only":
        certs = [_named_bound(b) for b in sc.get("bounds", [])]
    else:
        st = Setup(sc)
        certs = [st.validate_and_certify().to_dict()]
        if problem == "layer":
            m = st.medium
            try:
                certs.append(bounds.ellipticity_constant(m.k_inf * st.depth, m.k_plus * st.depth,
                                                         m.k0 * st.depth, m.theta).to_dict())
            except HypothesisError as exc:
                certs.append({"name": "ellipticity_constant", "status": "no-guarantee", "reason": str(exc)})
    write_json(out / "certificate.json", {"certificates": certs})
    return {"certificates": certs}


_BOUNDS = {
    "ellipticity_constant": bounds.ellipticity_constant,
    "layer_arbitrary_freq": bounds.layer_arbitrary_freq,
    "impedance_small_k": bounds.impedance_small_k,
    "impedance_E": bounds.impedance_E,
    "transmission_constants": bounds.transmission_constants,
    "bie_operator_bound": bounds.bie_operator_bound,
}


def _named_bound(spec):
    name = spec.get("name")
    if name not in _BOUNDS:
        raise ScenarioError(f"unknown bound {name!r}")
    return _BOUNDS[name](**spec.get("inputs", {})).to_dict()


def cmd_verify(sc, out):
    """Problem-specific checks: coercivity and a-priori bounds, or jump and image-oracle probes."""
    problem = sc["problem"]
    report = {"problem": problem}
    if problem == "bie3d":
        surf, mesh, k, eta = _bie_objects(sc)
        phi_fn = lambda lat: np.exp(-0.25 * np.sum(lat * lat, -1)) + 0j  # noqa: E731
        inner = mesh.R - mesh.taper_width
        probes = [p for p in np.linspace(-0.5, 0.5, 3) * inner]
        jumps = []
        for a in probes:
            for kind in ("double", "single"):
                jr = verify.jump_probe(mesh, phi_fn, np.array([a, 0.0]), [0.2, 0.1, 0.05], kind=kind)
                jumps.append(jr.to_dict())
        report["jumps"] = jumps
    elif problem in ("layer", "impedance", "transmission"):
        st = Setup(sc)
        cert = st.validate_and_certify()
        sys_ = st.assemble()
        if problem == "layer":
            report["coercivity"] = variational.check_coercivity(sys_, 50, st.rng).to_dict()
        checks = []
        for _ in range(5):
            g = variational.gaussian_sources(st.mesh, st.rng, 2, keep_top_clear=problem != "transmission")
            u = variational.solve(sys_, g)
            checks.append(variational.check_apriori(u, g, cert).to_dict())
        report["apriori"] = checks
        report["passed"] = all(c["passed"] for c in checks)
    else:
        raise ScenarioError("nothing to verify for bounds-only scenarios")
    write_json(out / "verify.json", report)
    return report


# ---------------------------------------------------------------- entry point

def _build_parser():
    p = argparse.ArgumentParser(prog="roughscatter", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("solve", "bounds", "verify"):
        s = sub.add_parser(name)
        s.add_argument("--scenario", required=True, help="scenario JSON file")
        s.add_argument("--out", default=".", help="output directory")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a scenario entry (dotted path), repeatable")
        s.add_argument("--quiet", action="store_true")
    s = sub.add_parser("schema")
    s.add_argument("--out", default=None, help="write schema.json here instead of stdout")
    s.add_argument("--quiet", action="store_true")
    return p


def _fail(code, kind, message, extra=None):
    payload = {"error": kind, "exit_code": code, "message": message}
    if extra:
        payload.update(extra)
    sys.stderr.write(json.dumps(_jsonify(payload)) + "\n")
    return code


def main(argv=None):
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "schema":
        text = json.dumps(SCHEMA, indent=2) + "\n"
        if args.out:
            Path(args.out).mkdir(parents=True, exist_ok=True)
            (Path(args.out) / "schema.json").write_text(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK
    try:
        sc = load_scenario(args.scenario, args.set)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        handler = {"solve": cmd_solve, "bounds": cmd_bounds, "verify": cmd_verify}[args.command]
        handler(sc, out)
    except ScenarioError as exc:
        return _fail(EXIT_IO, "scenario", str(exc))
    except HypothesisError as exc:
        return _fail(EXIT_HYPOTHESIS, exc.code, str(exc))
    except SolverError as exc:
        return _fail(EXIT_SOLVER, exc.code, str(exc), {"residuals": exc.residuals})
    except (OSError, ValueError, KeyError, TypeError) as exc:
        return _fail(EXIT_IO, "input", f"{type(exc).__name__}: {exc}")
    logger.info("%s finished", args.command)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
