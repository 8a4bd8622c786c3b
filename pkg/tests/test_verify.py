import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roughscatter import bie, greens, verify
from roughscatter.geometry import make_surface

FLAT = make_surface({"kind": "flat", "params": {"height": 1.0, "dim": 2}})


@pytest.fixture(scope="module")
def flat_mesh():
    return bie.build_mesh(FLAT, 6, 32, 1.5, 1.5)


def test_image_oracle_vanishes_on_plane():
    f = verify.image_oracle([0.2, -0.1, 2.0], 0.5, 1.3)
    rng = np.random.default_rng(0)
    pts = np.column_stack([rng.uniform(-5, 5, (50, 2)), np.full(50, 0.5)])
    assert np.max(np.abs(f(pts))) <= 1e-14
    assert abs(f([[0.0, 0.0, 1.0]])[0]) > 0


def test_image_oracle_h0_is_halfspace_green():
    z = np.array([0.3, 0.4, 1.2])
    f = verify.image_oracle(z, 0.0, 0.9)
    rng = np.random.default_rng(1)
    pts = rng.uniform([-3, -3, 0.1], [3, 3, 3], (40, 3))
    assert np.allclose(f(pts), greens.greens_halfspace(pts, z, 0.9), rtol=1e-14, atol=0)


def test_image_oracle_rejects_source_below():
    with pytest.raises(ValueError):
        verify.image_oracle([0, 0, 0.5], 0.5, 1.0)
    with pytest.raises(ValueError):
        verify.image_oracle([0, 0.5], 0.0, 1.0)


def test_residual_plane_wave_is_rounding():
    k = 1.7
    wave = lambda p: np.exp(1j * k * p[..., -1])
    probes = np.random.default_rng(2).uniform(-1, 1, (20, 3))
    rep = verify.helmholtz_residual(wave, k, probes, [0.2, 0.1, 0.05])
    assert max(rep.residuals) <= 1e-10
    assert rep.order is None


def test_residual_of_image_field_is_second_order():
    k = 1.0
    f = verify.image_oracle([0.0, 0.0, 2.0], 0.0, k)
    probes = np.array([[1.0, 0.5, 0.8], [-0.6, 1.2, 1.4], [2.0, -1.0, 3.0]])
    rep = verify.helmholtz_residual(f, k, probes, [0.08, 0.04, 0.02, 0.01], matched=False)
    assert rep.order == pytest.approx(2.0, abs=0.2)


def test_residual_of_non_solution():
    k = 1.0
    sq = lambda p: p[..., -1] ** 2 + 0j
    probes = np.array([[0.0, 0.0, 1.5]])
    rep = verify.helmholtz_residual(sq, k, probes, [0.1], matched=False)
    assert rep.residuals[0] == pytest.approx(2 + 1.5**2, rel=1e-10)


def test_mode_oracle_zero_source():
    sol = verify.mode_ode_oracle(0.4, 1.0, 0.0, 1.0, 0.0, n_nodes=200)
    assert np.all(sol.values == 0)


@pytest.mark.parametrize("scheme", ["numerov", "consistent"])
def test_mode_oracle_even_in_xi(scheme):
    g = lambda y: np.exp(-30 * (y - 0.4) ** 2)
    a = verify.mode_ode_oracle(0.7, 1.5, 0.0, 1.0, g, 400, scheme)
    b = verify.mode_ode_oracle(-0.7, 1.5, 0.0, 1.0, g, 400, scheme)
    assert np.max(np.abs(a.values - b.values)) <= 1e-13


def test_mode_oracle_manufactured_sine():
    f, H, k, xi = -0.3, 1.2, 1.3, 0.5
    a = np.pi / (H - f)
    # -u'' + (xi^2 - k^2) u = -g  for  u = sin(a (y - f))
    g = lambda y: -(a * a + xi * xi - k * k) * np.sin(a * (y - f))
    sol = verify.mode_ode_oracle(xi, k * k, f, H, g, 2000, "numerov", robin_data=-a)
    assert np.max(np.abs(sol.values - np.sin(a * (sol.heights - f)))) <= 1e-8


def test_mode_oracle_schemes_agree():
    g = lambda y: np.exp(-40 * (y - 0.45) ** 2)
    a = verify.mode_ode_oracle(0.3, 1.0, 0.0, 1.0, g, 2001, "numerov")
    b = verify.mode_ode_oracle(0.3, 1.0, 0.0, 1.0, g, 2001, "consistent")
    assert np.max(np.abs(a.values - b.values)) <= 1e-5 * np.max(np.abs(a.values))
    with pytest.raises(ValueError):
        verify.mode_ode_oracle(0.3, 1.0, 0.0, 1.0, g, 100, "spectral")


def test_mode_oracle_radiates_at_top():
    g = lambda y: np.exp(-40 * (y - 0.45) ** 2)
    sol = verify.mode_ode_oracle(0.3, 1.0, 0.0, 1.0, g, 4001, "numerov")
    h = sol.heights[1] - sol.heights[0]
    du = (3 * sol.values[-1] - 4 * sol.values[-2] + sol.values[-3]) / (2 * h)
    assert du == pytest.approx(1j * np.sqrt(1 - 0.09) * sol.values[-1], rel=1e-5)
    assert sol.values[0] == 0


@settings(max_examples=20, deadline=None)
@given(c=st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False),
       x=st.floats(-5, 5), y=st.floats(-5, 5))
def test_richardson_exact_on_linear(c, x, y):
    offs = [0.2, 0.1, 0.05]
    vals = [c + (x + 1j * y) * e for e in offs]
    assert abs(verify.richardson_limit(offs, vals) - c) <= 1e-9 * (1 + abs(c) + abs(x) + abs(y))


def test_jump_of_unit_density_is_half(flat_mesh):
    rep = verify.jump_probe(flat_mesh, lambda lat: np.ones(lat.shape[:-1]), [0.3, -0.2], [0.2, 0.1, 0.05])
    assert rep.expected == pytest.approx(0.5)
    assert rep.error <= 1e-2


def test_jump_of_locally_vanishing_density(flat_mesh):
    bump = lambda lat: np.exp(-4 * np.sum((lat - np.array([2.0, 2.0])) ** 2, -1))
    rep = verify.jump_probe(flat_mesh, bump, [-1.5, -1.5], [0.2, 0.1, 0.05])
    assert rep.expected == pytest.approx(0, abs=1e-10)
    assert abs(rep.jump) <= 1e-3


def test_single_layer_has_no_jump(flat_mesh):
    phi = lambda lat: np.exp(-0.3 * np.sum(lat**2, -1)) + 0j
    rep = verify.jump_probe(flat_mesh, phi, [0.5, 0.0], [0.2, 0.1, 0.05], kind="single")
    assert rep.expected == 0
    assert abs(rep.jump) <= 1e-3
    assert set(rep.to_dict()) >= {"jump", "expected", "error", "raw"}


def test_jump_probe_validates_offsets(flat_mesh):
    one = lambda lat: np.ones(lat.shape[:-1])
    for offs in ([0.1, 0.2], [0.1], [1e-5, 1e-7]):
        with pytest.raises(ValueError):
            verify.jump_probe(flat_mesh, one, 0, offs)
    with pytest.raises(ValueError):
        verify.jump_probe(flat_mesh, one, 0, [0.2, 0.1], kind="triple")


def test_manufactured_layer_mode_solves_pde():
    s = make_surface({"kind": "sinusoid", "params": {"amplitude": 0.1, "period": 4.0}})
    k, xi = 1.0, 2 * np.pi / 4
    w, g = verify.manufactured_layer_mode(s, 1.0, k, xi)
    x = np.linspace(-1.5, 1.5, 7)
    assert np.max(np.abs(w(x, s(x)))) <= 1e-12
    X, Y = np.meshgrid(np.linspace(-1, 1, 5), np.linspace(0.3, 0.8, 5))
    d = 1e-3
    lap = (w(X + d, Y) + w(X - d, Y) + w(X, Y + d) + w(X, Y - d) - 4 * w(X, Y)) / d**2
    # the layer problem reads Delta u + k^2 u = g
    assert np.max(np.abs(lap + k * k * w(X, Y) - g(X, Y))) <= 1e-4 * np.max(np.abs(g(X, Y)))
