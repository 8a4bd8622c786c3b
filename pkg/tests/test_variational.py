import dataclasses
import math

import numpy as np
import pytest

from roughscatter import bounds, dtn, media, variational as V
from roughscatter.errors import HypothesisError
from roughscatter.geometry import make_surface

FLAT = make_surface({"kind": "flat", "params": {"height": 0.0}})
WAVY = make_surface({"kind": "sinusoid", "params": {"amplitude": 0.1, "period": 4.0}})
TWO_LAYER = {"kind": "two-layer", "k_plus": 1.0, "k_minus": 1.0, "interface": 0.0,
             "dip": 0.5, "dip_halfwidth": 0.25, "dip_ramp": 0.2, "dip_center": 0.0}


def layer_system(surface=FLAT, H=1.0, k=1.0, n=32, nv=16, period=8.0):
    grid = dtn.LateralGrid(1, period, n)
    mesh = V.make_strip_mesh(surface, H, grid, nv)
    med = media.make_medium({"kind": "constant", "k": k}, H=H, f_minus=surface.f_minus)
    return V.assemble_layer(mesh, med)


def impedance_system(beta=1.0, surface=FLAT, H=1.0, k=1.0, n=32, nv=16):
    grid = dtn.LateralGrid(1, 8.0, n)
    mesh = V.make_strip_mesh(surface, H, grid, nv)
    med = media.make_medium({"kind": "constant", "k": k}, H=H, f_minus=surface.f_minus)
    adm = media.make_admittance({"kind": "constant", "re": beta, "eta": max(beta, 1e-3)})
    return V.assemble_impedance(mesh, med, adm)


def transmission_system(n=32, nv=16):
    grid = dtn.LateralGrid(1, 8.0, n)
    mesh = V.make_flat_strip_mesh(grid, -0.5, 0.5, nv)
    med = media.make_medium(TWO_LAYER, h_plus=0.5, h_minus=-0.5)
    return V.assemble_transmission(mesh, med)


def hat(sys, j, i):
    u = np.zeros(sys.mesh.n_nodes, dtype=complex)
    u[sys.mesh.node(j, i)] = 1.0
    return u


# ---------------------------------------------------------------- meshes

def test_terrain_mesh_geometry():
    grid = dtn.LateralGrid(1, 8.0, 32)
    mesh = V.make_strip_mesh(WAVY, 1.0, grid, 8)
    assert np.max(np.abs(mesh.Y[0] - WAVY(grid.x))) <= 1e-12
    assert np.all(mesh.Y[-1] == 1.0)
    assert np.all(np.diff(mesh.Y, axis=0) > 0)
    with pytest.raises(ValueError):
        V.make_strip_mesh(WAVY, 0.1, grid, 8)


# ---------------------------------------------------------------- assembly

def test_interior_hat_matches_closed_form():
    k = 1.3
    sys = layer_system(k=k)
    dx, dy = sys.mesh.grid.spacing, 1.0 / 16
    u = hat(sys, 5, 7)
    grad = (2 / dx) * (2 * dy / 3) + (2 * dx / 3) * (2 / dy)
    mass = (2 * dx / 3) * (2 * dy / 3)
    assert sys.form(u, u) == pytest.approx(grad - k * k * mass, rel=1e-13)


def test_interior_support_has_no_dtn_term():
    sys = layer_system()
    u = V.random_fields(sys, 1, np.random.default_rng(0))[0]
    u[sys.mesh.top_nodes] = 0
    assert sys.form(u, u) == pytest.approx(np.vdot(u, sys.volume @ u), abs=1e-12)


def test_single_top_mode_dtn_term():
    sys = layer_system(k=1.0, n=64, period=8.0)
    grid = sys.mesh.grid
    xi = grid.xi[3]
    u = np.zeros(sys.mesh.n_nodes, dtype=complex)
    u[sys.mesh.top_nodes] = np.exp(1j * xi * grid.x)
    dtn_term = sys.form(u, u) - np.vdot(u, sys.volume @ u)
    z = dtn.make_symbol(grid, 1.0).z_values[3]
    dx = grid.spacing
    lam_m = dx * (4 + 2 * np.cos(xi * dx)) / 6
    assert dtn_term == pytest.approx(z * lam_m * grid.n, rel=1e-12)
    assert dtn_term == pytest.approx(z * grid.period, rel=(xi * dx) ** 2)


def test_zero_wavenumber_rejected():
    grid = dtn.LateralGrid(1, 8.0, 16)
    mesh = V.make_strip_mesh(FLAT, 1.0, grid, 4)
    med = media.make_medium({"kind": "constant", "k": 1.0}, H=1.0, f_minus=0.0)
    with pytest.raises(ValueError):
        V.assemble_layer(mesh, dataclasses.replace(med, k0=0.0))
    with pytest.raises(ValueError):
        media.make_medium({"kind": "constant", "k": 0.0}, H=1.0, f_minus=0.0)


def test_medium_must_match_exterior_on_top():
    grid = dtn.LateralGrid(1, 8.0, 16)
    mesh = V.make_strip_mesh(FLAT, 1.0, grid, 4)
    med = media.make_medium({"kind": "tabulated", "heights": [0.0, 1.0], "k2_re": [1.0, 2.0]},
                            H=1.0, f_minus=0.0)
    sym = dtn.make_symbol(grid, 1.0)
    with pytest.raises(ValueError):
        V.assemble_layer(mesh, med, sym)


@pytest.mark.parametrize("factory", [lambda: layer_system(WAVY), lambda: impedance_system(surface=WAVY),
                                     transmission_system])
def test_discrete_symmetry(factory):
    sys = factory()
    rng = np.random.default_rng(4)
    for smooth in (True, False):
        u, v = V.random_fields(sys, 2, rng, smooth=smooth)
        a = sys.form(u, v)
        b = sys.form(np.conj(v), np.conj(u))
        assert abs(a - b) <= 1e-10 * max(1.0, abs(a))


def test_boundedness_on_random_pairs():
    sys = layer_system(WAVY)
    m = sys.medium
    const = m.k_inf**2 / m.k_plus**2 + 1
    rng = np.random.default_rng(5)
    fields = V.random_fields(sys, 40, rng)
    for u, v in zip(fields[::2], fields[1::2]):
        nu = V.FieldNorms.of(sys, u).h1
        nv = V.FieldNorms.of(sys, v).h1
        assert abs(sys.form(u, v)) <= const * nu * nv * (1 + 1e-9)


def test_impedance_reduces_to_layer_form_for_zero_admittance():
    imp = impedance_system(beta=0.0)
    lay = layer_system()
    free = lay.free
    diff = (imp.matrix[free][:, free] - lay.matrix[free][:, free])
    assert abs(diff).max() <= 1e-14
    assert len(imp.free) == imp.mesh.n_nodes


def test_impedance_boundary_hat_term():
    k = 1.0
    imp = impedance_system(beta=1.0, k=k)
    zero = impedance_system(beta=0.0, k=k)
    u = hat(imp, 0, 3)
    dx = imp.mesh.grid.spacing
    assert imp.form(u, u) - zero.form(u, u) == pytest.approx(-1j * k * 2 * dx / 3, rel=1e-13)
    v = hat(imp, 4, 3)
    assert imp.form(v, v) == pytest.approx(zero.form(v, v), abs=1e-14)


def test_impedance_rejects_negative_real_admittance():
    grid = dtn.LateralGrid(1, 8.0, 16)
    mesh = V.make_strip_mesh(FLAT, 1.0, grid, 4)
    med = media.make_medium({"kind": "constant", "k": 1.0}, H=1.0, f_minus=0.0)
    adm = media.make_admittance({"kind": "constant", "re": -0.5, "eta": 1.0})
    with pytest.raises(ValueError):
        V.assemble_impedance(mesh, med, adm)


def test_transmission_symmetric_solution():
    sys = transmission_system(n=32, nv=16)
    g = V.gaussian_sources(sys.mesh, None, 1, keep_top_clear=False, centers=[(0.0, 0.5)])
    u = V.solve(sys, g)
    assert np.max(np.abs(u.values - u.values[::-1])) <= 1e-10 * np.max(np.abs(u.values))


def test_transmission_needs_flat_mesh_and_positive_k():
    grid = dtn.LateralGrid(1, 8.0, 16)
    mesh = V.make_strip_mesh(FLAT, 1.0, grid, 4)
    med = media.make_medium(TWO_LAYER, h_plus=0.5, h_minus=-0.5)
    with pytest.raises(ValueError):
        V.assemble_transmission(mesh, med)


# ---------------------------------------------------------------- solves

def test_zero_source_gives_zero_field():
    sys = layer_system()
    u = V.solve(sys, np.zeros(sys.mesh.n_nodes))
    assert np.all(u.values == 0)


def test_solution_residual_and_dirichlet_row():
    sys = layer_system(WAVY)
    g = V.gaussian_sources(sys.mesh, np.random.default_rng(2), 3)
    u = V.solve(sys, g)
    assert u.info["residual"] <= 1e-10
    assert np.all(u.values[0] == 0)
    b = sys.rhs(g)[sys.free]
    r = sys.matrix[sys.free][:, sys.free] @ u.vector[sys.free] - b
    assert np.linalg.norm(r) <= 1e-10 * np.linalg.norm(b)


def test_gmres_agrees_with_direct():
    sys = impedance_system(surface=WAVY, n=32, nv=8)
    g = V.gaussian_sources(sys.mesh, np.random.default_rng(3), 2)
    a = V.solve(sys, g, method="direct")
    b = V.solve(sys, g, method="gmres", tol=1e-12)
    assert np.max(np.abs(a.values - b.values)) <= 1e-8 * np.max(np.abs(a.values))
    with pytest.raises(ValueError):
        V.solve(sys, g, method="cholesky")
    with pytest.raises(ValueError):
        V.solve(sys, np.zeros(7))


def test_extension_above_matches_top_row():
    sys = layer_system()
    g = V.gaussian_sources(sys.mesh, np.random.default_rng(1), 1)
    u = V.solve(sys, g)
    ext = u.extend_up([1.0, 1.5])
    assert np.allclose(ext.values[0], u.values[-1], atol=1e-13)


# ---------------------------------------------------------------- norms and checks

def test_collar_quantities_of_constant_field():
    sys = transmission_system(n=64, nv=32)
    u = np.ones(sys.mesh.n_nodes, dtype=complex)
    eps = 0.1
    gamma, dn, l2 = V.collar_quantities(sys, u, WAVY, eps)
    x = np.linspace(-4, 4, 200001)
    arc = np.trapezoid(WAVY.slope_weight(x), x)
    assert gamma == pytest.approx(arc, rel=1e-6)
    assert dn == pytest.approx(0.0, abs=1e-20)
    assert l2 == pytest.approx(2 * eps * 8.0, rel=2e-2)
    with pytest.raises(ValueError):
        V.collar_quantities(layer_system(), u, WAVY, eps)


def test_trace_norm_of_constant_top_row():
    sys = layer_system(k=2.0)
    u = np.zeros(sys.mesh.n_nodes, dtype=complex)
    u[sys.mesh.top_nodes] = 1
    assert V.trace_h_half(sys.mesh, u, 2.0) == pytest.approx(math.sqrt(2.0 * 8.0), rel=1e-12)


def test_random_fields_are_conforming():
    sys = layer_system()
    for u in V.random_fields(sys, 5, np.random.default_rng(0), smooth=False):
        assert np.all(u[: sys.mesh.n] == 0)


def test_coercivity_unit_case():
    rep = V.check_coercivity(layer_system(WAVY, H=0.9), trials=60, rng=np.random.default_rng(9))
    assert rep.status == "checked" and rep.passed
    assert rep.constant == pytest.approx(1 / 3)
    assert rep.worst_ratio >= 1 / 3


def test_coercivity_absorbing_branch():
    grid = dtn.LateralGrid(1, 8.0, 32)
    mesh = V.make_strip_mesh(FLAT, 1.0, grid, 16)
    med = media.make_medium({"kind": "constant", "k": 1.0}, H=1.0, f_minus=0.0)
    sys = V.assemble_layer(mesh, med)
    cert = bounds.ellipticity_constant(2.0, 1.0, 1.0, math.pi / 2)
    assert cert.extras["alpha"] == pytest.approx(2 / 3)
    assert V.check_coercivity(sys, 10).passed


def test_coercivity_without_guarantee():
    rep = V.check_coercivity(layer_system(k=1.5), trials=5)
    assert rep.status == "no-guarantee" and not rep.passed


def test_apriori_trivial_and_small_wavenumber_impedance():
    sys = impedance_system(beta=1.0, k=0.1)
    cert = bounds.impedance_small_k(0.1, 1.0, Phi=0.0, mode="A3")
    zero = V.solve(sys, np.zeros(sys.mesh.n_nodes))
    assert V.check_apriori(zero, np.zeros(sys.mesh.n_nodes), cert).passed
    rng = np.random.default_rng(11)
    for _ in range(5):
        g = V.gaussian_sources(sys.mesh, rng, 1)
        rep = V.check_apriori(V.solve(sys, g), g, cert)
        assert rep.passed and rep.worst_ratio <= cert.value


def test_apriori_rejects_unvalidated_certificate():
    sys = layer_system()
    g = V.gaussian_sources(sys.mesh, np.random.default_rng(0), 1)
    u = V.solve(sys, g)
    cert = bounds.BoundCertificate("layer_arbitrary_freq", {}, 1.0, hypotheses_ok=False)
    with pytest.raises(HypothesisError):
        V.check_apriori(u, g, cert)
