import json

import numpy as np
import pytest

from mhd_inhibit import (
    PhysicalParams,
    build_test_field,
    divergence,
    instability_witness,
    make_uniform_grid,
    named_profile,
    oscillatory_field_quotient,
    stability_certificate,
    stratified_landscape,
    threshold_1d,
)
from mhd_inhibit.energy import directional_energy, weighted_vertical_energy
from mhd_inhibit.landscape import (
    LandscapeVerdict,
    potential_energy_variation,
    write_verdicts_jsonl,
)


def constant_gradient_profile():
    return named_profile("linear", [2.0, 1.0], 0.0, np.pi)


def params_with_M3(M3, mu=0.0):
    return PhysicalParams(g=1.0, lam=1.0, mu=mu, M_bar=(0.0, 0.0, M3))


def test_build_test_field_divergence_free(slab_pi, unit_params):
    grid = make_uniform_grid(slab_pi, 4, 32, 65)
    psi = np.sin(grid.y3)
    field = build_test_field(1, psi, grid)
    # analytic cancellation: only the discretization residual remains
    res = np.max(np.abs(divergence(field, grid)[:, :, 1:-1]))
    assert res < 1e-2
    finer = make_uniform_grid(slab_pi, 4, 64, 129)
    field2 = build_test_field(1, np.sin(finer.y3), finer)
    res2 = np.max(np.abs(divergence(field2, finer)[:, :, 1:-1]))
    assert res / res2 == pytest.approx(4.0, rel=0.4)


def test_build_test_field_zero_profile(slab_pi):
    grid = make_uniform_grid(slab_pi, 4, 16, 33)
    field = build_test_field(1, np.zeros(grid.n3), grid)
    assert np.max(np.abs(field.values)) == 0.0


def test_build_test_field_under_resolved(slab_pi):
    grid = make_uniform_grid(slab_pi, 4, 16, 33)
    with pytest.raises(ValueError, match="under-resolved"):
        build_test_field(4, np.sin(grid.y3), grid)


def test_build_test_field_taper_vanishes(slab_pi):
    grid = make_uniform_grid(slab_pi, 4, 16, 65)
    res = threshold_1d(lambda y: np.ones_like(y), (0.0, np.pi),
                       params_with_M3(1.0), grid.n3)
    raw = build_test_field(1, res.psi0, grid)
    assert raw.boundary == "free"  # psi' does not vanish at the walls
    tapered = build_test_field(1, res.psi0, grid, taper_cells=3)
    assert tapered.boundary == "vanishing"


def test_grid_quotient_matches_closed_form(slab_pi, unit_params):
    # quadrature of the built field reproduces the factorized quotient and
    # saturates within 2% of (g/lam)*gamma at i = 64
    grid = make_uniform_grid(slab_pi, 4, 512, 513)
    res = threshold_1d(lambda y: np.ones_like(y), (0.0, np.pi), unit_params, grid.n3)
    field = build_test_field(64, res.psi0, grid)
    v_g = weighted_vertical_energy(field, grid, np.ones(grid.n3), unit_params)
    v_n = directional_energy(field, grid, (0, 0, 1), unit_params)
    closed = oscillatory_field_quotient(64, res.psi0, np.ones(grid.n3), slab_pi,
                                        unit_params)
    assert v_g / v_n == pytest.approx(closed, rel=1e-6)
    target = (unit_params.g / unit_params.lam) * res.gamma
    assert abs(v_g / v_n - target) / target <= 0.02


def test_magnetic_energy_direction_scaling(slab_pi):
    # the energy along M equals M3^2 times the energy along the unit-third
    # component direction (exact by linearity of the derivative)
    grid = make_uniform_grid(slab_pi, 8, 16, 33)
    field = build_test_field(2, np.sin(grid.y3), grid)
    p = PhysicalParams(g=1.0, lam=1.0, mu=0.0, M_bar=(0.4, -0.3, 1.7))
    v_M = directional_energy(field, grid, p.M, p)
    v_dir = directional_energy(field, grid, p.M / p.M_bar[2], p)
    assert v_M == pytest.approx(p.M_bar[2] ** 2 * v_dir, rel=1e-13)


def test_witness_constant_profile(slab_pi):
    prof = constant_gradient_profile()
    v = instability_witness(prof, slab_pi, params_with_M3(0.5), eps=1e-2)
    assert v.satisfied
    assert v.functional_value < 0.0
    assert v.dominance >= 10.0
    assert v.quadratic_part < 0.0
    # constant gradient: cubic remainder vanishes to rounding
    assert abs(v.cubic_part) <= 1e-12 * abs(v.quadratic_part)


def test_witness_zero_amplitude_is_not_a_witness(slab_pi, unit_params):
    grid = make_uniform_grid(slab_pi, 4, 32, 65)
    prof = constant_gradient_profile()
    zero = build_test_field(1, np.zeros(grid.n3), grid)
    value, quad, cubic = potential_energy_variation(zero, prof, unit_params, grid)
    assert value == 0.0 and quad == 0.0 and cubic == 0.0


def test_witness_requires_subcritical_field(slab_pi):
    prof = constant_gradient_profile()
    with pytest.raises(ValueError):
        instability_witness(prof, slab_pi, params_with_M3(2.0), eps=1e-2)


def test_witness_horizontal_field_any_strength(slab_pi):
    prof = constant_gradient_profile()
    values = []
    for s in (0.1, 1.0, 10.0):
        p = PhysicalParams(g=1.0, lam=1.0, mu=0.0, M_bar=(s, 0.0, 0.0))
        v = instability_witness(prof, slab_pi, p, eps=1e-2)
        assert v.satisfied and v.functional_value < 0.0
        values.append(v.functional_value)
    # the magnetic term vanishes for the y1-independent construction, so the
    # verdict value does not depend on the horizontal strength
    assert values[0] == pytest.approx(values[1], rel=1e-12)
    assert values[1] == pytest.approx(values[2], rel=1e-12)


def test_witness_monotone_in_field_strength(slab_pi):
    # a witness field for M3 = 0.5 stays a witness for any weaker field
    prof = constant_gradient_profile()
    grid = make_uniform_grid(slab_pi, 4, 64, 65)
    res = threshold_1d(prof.derivative_at, (0.0, np.pi), params_with_M3(0.5), grid.n3)
    field = build_test_field(8, res.psi0, grid)
    from mhd_inhibit.landscape import _scaled
    scaled = _scaled(field, 1e-2)
    prev = None
    for M3 in (0.5, 0.4, 0.2, 0.0):
        p = params_with_M3(M3) if M3 > 0 else PhysicalParams(
            g=1.0, lam=1.0, mu=0.0, M_bar=(0.0, 0.0, 0.0))
        value, _, _ = potential_energy_variation(scaled, prof, p, grid)
        assert value < 0.0
        if prev is not None:
            assert value <= prev
        prev = value


def test_witness_exponential_profile_dominance(slab_pi):
    # nonzero cubic remainder: the amplitude loop enforces the margin
    prof = named_profile("exponential", [1.0, 0.5], 0.0, np.pi)
    p = params_with_M3(0.3)
    v = instability_witness(prof, slab_pi, p, eps=0.5, margin=10.0)
    assert v.satisfied
    assert v.dominance >= 10.0
    assert v.functional_value < 0.0


def test_quadratic_dominance_scaling(slab_pi, unit_params):
    # delta_EP(eps v)/eps^2 converges to the quadratic split as eps -> 0
    prof = named_profile("exponential", [1.0, 0.5], 0.0, np.pi)
    grid = make_uniform_grid(slab_pi, 4, 32, 65)
    field = build_test_field(2, np.sin(grid.y3), grid)
    from mhd_inhibit.landscape import _scaled
    limits = []
    for eps in (0.2, 0.1, 0.05):
        value, quad, cubic = potential_energy_variation(
            _scaled(field, eps), prof, unit_params, grid)
        limits.append(value / eps**2)
    _, quad_unit, _ = potential_energy_variation(field, prof, unit_params, grid)
    devs = [abs(x - quad_unit) for x in limits]
    assert devs[1] < devs[0] and devs[2] < devs[1]
    assert devs[2] <= 0.1 * abs(quad_unit)


def test_stability_certificate(slab_pi):
    prof = constant_gradient_profile()
    verdicts = stability_certificate(prof, slab_pi, params_with_M3(2.0),
                                     trials=50, eps_max=0.05, seed=11)
    assert len(verdicts) == 50
    assert all(v.satisfied for v in verdicts)
    assert min(v.functional_value for v in verdicts) > 0.0


def test_stability_certificate_requires_supercritical(slab_pi):
    prof = constant_gradient_profile()
    with pytest.raises(ValueError):
        stability_certificate(prof, slab_pi, params_with_M3(0.5), trials=3,
                              eps_max=0.05, seed=1)


def test_certificate_deterministic_under_seed(slab_pi):
    prof = constant_gradient_profile()
    a = stability_certificate(prof, slab_pi, params_with_M3(2.0), trials=5,
                              eps_max=0.05, seed=4)
    b = stability_certificate(prof, slab_pi, params_with_M3(2.0), trials=5,
                              eps_max=0.05, seed=4)
    assert [x.functional_value for x in a] == [x.functional_value for x in b]


def test_stratified_witness():
    # two layers of depth 2 with unit jump: threshold 1; M3 = 0.5 is unstable
    p = params_with_M3(0.5)
    v = stratified_landscape(p, h=2.0, l=2.0, rho_plus=2.0, rho_minus=1.0,
                             eps=1e-2, condition="instability")
    assert v.satisfied and v.functional_value < 0.0


def test_stratified_witness_requires_subcritical():
    p = params_with_M3(2.0)
    with pytest.raises(ValueError):
        stratified_landscape(p, h=2.0, l=2.0, rho_plus=2.0, rho_minus=1.0,
                             eps=1e-2, condition="instability")


def test_stratified_stability():
    p = params_with_M3(2.0)
    v = stratified_landscape(p, h=2.0, l=2.0, rho_plus=2.0, rho_minus=1.0,
                             eps=0.05, condition="stability", seed=3, trials=20)
    assert v.satisfied and v.functional_value > 0.0


def test_stratified_negative_jump_stable_without_field():
    p = PhysicalParams(g=1.0, lam=1.0, mu=0.0, M_bar=(0.0, 0.0, 0.0))
    v = stratified_landscape(p, h=2.0, l=2.0, rho_plus=1.0, rho_minus=2.0,
                             eps=0.05, condition="stability", seed=3, trials=20)
    assert v.satisfied


def test_stratified_large_amplitude_reports_failure():
    # far outside the smallness hypothesis the surface remainder wins and the
    # verdict honestly reports the violation instead of raising
    p = params_with_M3(0.1)
    v = stratified_landscape(p, h=2.0, l=2.0, rho_plus=1.0, rho_minus=2.0,
                             eps=6.0, condition="stability", seed=9, trials=30)
    assert not v.satisfied
    assert v.functional_value < 0.0


def test_verdict_jsonl_roundtrip(tmp_path):
    verdicts = [
        LandscapeVerdict(condition="stability", functional_value=1.0,
                         witness="w", satisfied=True, quadratic_part=1.0,
                         cubic_part=0.0),
        LandscapeVerdict(condition="instability", functional_value=-2.0,
                         witness="x", satisfied=True, quadratic_part=-2.0,
                         cubic_part=0.1, dominance=20.0),
    ]
    path = tmp_path / "verdicts.jsonl"
    write_verdicts_jsonl(verdicts, path)
    lines = [json.loads(line) for line in path.read_text().splitlines()]
    assert len(lines) == 2
    assert lines[0]["satisfied"] is True
    assert lines[1]["functional_value"] == -2.0
    assert lines[0]["dominance"] is None  # infinity serialized as null


def test_verdict_sign_convention():
    v = LandscapeVerdict(condition="instability", functional_value=-1.0,
                         witness="w", satisfied=True)
    assert v.satisfied == (v.functional_value < 0)
    v2 = LandscapeVerdict(condition="stability", functional_value=0.5,
                          witness="w", satisfied=True)
    assert v2.satisfied == (v2.functional_value > 0)
