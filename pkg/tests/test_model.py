import numpy as np
import pytest

from mhd_inhibit import (
    PhysicalParams,
    Profile1D,
    SlabDomain,
    VectorField3,
    divergence,
    make_uniform_grid,
    named_profile,
    volume_integral,
)
from mhd_inhibit.model import horizontal_integral


def test_params_validation():
    with pytest.raises(ValueError):
        PhysicalParams(g=-1.0, lam=1.0, mu=0.0, M_bar=(0, 0, 1))
    with pytest.raises(ValueError):
        PhysicalParams(g=1.0, lam=0.0, mu=0.0, M_bar=(0, 0, 1))
    with pytest.raises(ValueError):
        PhysicalParams(g=1.0, lam=1.0, mu=-0.1, M_bar=(0, 0, 1))
    p = PhysicalParams(g=1.0, lam=1.0, mu=0.0, M_bar=(0.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        p.require_nonzero_field()


def test_domain_validation():
    with pytest.raises(ValueError):
        SlabDomain(a=1.0, b=0.0, L1=1.0, L2=1.0)
    with pytest.raises(ValueError):
        SlabDomain(a=0.0, b=1.0, L1=1.0, L2=1.0, interface=2.0)
    d = SlabDomain(a=-1.0, b=1.0, L1=2.0, L2=0.5, interface=0.0)
    assert d.cell_area == pytest.approx(4 * np.pi**2 * 1.0)


def test_grid_spacing_example():
    d = SlabDomain(a=0.0, b=np.pi, L1=1 / (2 * np.pi), L2=1 / (2 * np.pi))
    g = make_uniform_grid(d, 8, 8, 17)
    assert g.h3 == pytest.approx(np.pi / 16, rel=0, abs=1e-15)
    assert g.h1 == pytest.approx(1.0 / 8)


def test_interface_on_node_for_odd_n3():
    d = SlabDomain(a=-1.0, b=1.0, L1=1.0, L2=1.0, interface=0.0)
    g = make_uniform_grid(d, 4, 4, 33)
    k = g.interface_index()
    assert g.y3[k] == pytest.approx(0.0, abs=1e-15)
    g_even = make_uniform_grid(d, 4, 4, 34)
    with pytest.raises(ValueError):
        g_even.interface_index()


def test_grid_count_minimums():
    d = SlabDomain(a=0.0, b=1.0, L1=1.0, L2=1.0)
    with pytest.raises(ValueError):
        make_uniform_grid(d, 4, 4, 4)
    with pytest.raises(ValueError):
        make_uniform_grid(d, 3, 4, 9)


def test_volume_of_unit_field_exact():
    d = SlabDomain(a=-0.3, b=1.7, L1=0.8, L2=1.3)
    g = make_uniform_grid(d, 5, 7, 11)
    vol = volume_integral(np.ones(g.shape), g)
    assert vol == pytest.approx(d.cell_volume, rel=1e-15)


def test_divergence_constant_and_linear(grid_small):
    g = grid_small
    const = VectorField3(np.broadcast_to([1.0, 2.0, -3.0], g.shape + (3,)).copy())
    assert np.max(np.abs(divergence(const, g))) < 1e-13

    pts = g.points()
    lin = np.zeros(g.shape + (3,))
    lin[..., 0] = pts[..., 0]
    f = VectorField3(lin)
    div = divergence(f, g)
    # periodic wrap makes the horizontal boundary columns see the jump;
    # interior columns are exact
    inner = div[1:-1, :, :]
    assert np.max(np.abs(inner - 1.0)) < 1e-12


def test_divergence_of_analytically_solenoidal_field(slab_pi):
    # (0, psi'(y3) cos z, (i/L2) psi(y3) sin z) cancels analytically; the
    # centered-difference residual must shrink like h^2
    def residual(n):
        g = make_uniform_grid(slab_pi, 4, n, n + 1)
        pts = g.points()
        i = 1
        z = i * pts[..., 1] / slab_pi.L2
        psi = np.sin(pts[..., 2])
        dpsi = np.cos(pts[..., 2])
        vals = np.zeros(g.shape + (3,))
        vals[..., 1] = dpsi * np.cos(z)
        vals[..., 2] = (i / slab_pi.L2) * psi * np.sin(z)
        f = VectorField3(vals)
        return np.max(np.abs(divergence(f, g)[:, :, 1:-1]))

    r16, r32 = residual(16), residual(32)
    assert r32 < 0.05
    assert r16 / r32 == pytest.approx(4.0, rel=0.35)


def test_boundary_vanishing_flag_enforced(grid_small):
    vals = np.ones(grid_small.shape + (3,))
    with pytest.raises(ValueError):
        VectorField3(vals, boundary="vanishing")
    vals[:, :, 0, :] = 0.0
    vals[:, :, -1, :] = 0.0
    VectorField3(vals, boundary="vanishing")  # ok
    with pytest.raises(ValueError):
        VectorField3(vals, boundary="bogus")


def test_horizontal_integral_exact_for_band_limited(grid_small):
    g = grid_small
    pts = g.points()
    slice0 = np.cos(pts[:, :, 0, 0] / g.domain.L1) ** 2
    val = horizontal_integral(slice0, g)
    assert val == pytest.approx(0.5 * g.domain.cell_area, rel=1e-14)


def test_profile_validation():
    y = np.linspace(0, 1, 11)
    with pytest.raises(ValueError):  # nonpositive density
        Profile1D.from_samples(y, np.linspace(-1, 1, 11), kind="density")
    with pytest.raises(ValueError):  # too few nodes
        Profile1D.from_samples(np.linspace(0, 1, 3), np.ones(3), kind="density")
    with pytest.raises(ValueError):  # nonuniform grid
        Profile1D.from_samples(np.array([0, 0.1, 0.3, 0.6, 1.0]), np.ones(5), kind="density")
    with pytest.raises(ValueError):  # unknown kind
        Profile1D.from_samples(y, np.ones(11), kind="pressure")


@pytest.mark.parametrize("name,coeffs", [
    ("linear", [2.0, 0.5]),
    ("exponential", [1.5, 0.4]),
    ("sine", [2.0, 0.7, 1.3]),
])
def test_named_profiles_consistent(name, coeffs):
    prof = named_profile(name, coeffs, 0.0, 2.0, n=401)
    y = np.linspace(0.1, 1.9, 57)
    # analytic derivative matches finite differences of the value callable
    h = 1e-6
    fd = (prof.value_at(y + h) - prof.value_at(y - h)) / (2 * h)
    assert np.max(np.abs(fd - prof.derivative_at(y))) < 1e-7
    # antiderivative differentiates back to the value
    fdR = (prof.antiderivative_at(y + h) - prof.antiderivative_at(y - h)) / (2 * h)
    assert np.max(np.abs(fdR - prof.value_at(y))) < 1e-7
    # second derivative consistency
    fd2 = (prof.derivative_at(y + h) - prof.derivative_at(y - h)) / (2 * h)
    assert np.max(np.abs(fd2 - prof.second_derivative_at(y))) < 1e-6


def test_sampled_profile_fallbacks():
    y = np.linspace(0.0, np.pi, 201)
    prof = Profile1D.from_samples(y, 2.0 + np.sin(y), kind="density")
    assert not prof.has_closed_form
    q = np.linspace(0.2, 3.0, 31)
    assert np.max(np.abs(prof.derivative_at(q) - np.cos(q))) < 1e-3
    # numeric antiderivative: R(b) - R(a) ~ integral of the profile
    total = prof.antiderivative_at(np.pi) - prof.antiderivative_at(0.0)
    assert total == pytest.approx(2.0 * np.pi + 2.0, rel=1e-4)


def test_named_profile_errors():
    with pytest.raises(ValueError):
        named_profile("linear", [1.0], 0, 1)
    with pytest.raises(ValueError):
        named_profile("exponential", [1.0, 0.0], 0, 1)
    with pytest.raises(ValueError):
        named_profile("unknown", [1.0], 0, 1)
