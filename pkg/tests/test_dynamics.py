import numpy as np
import pytest

from mhd_inhibit import (
    ModeSpec,
    ModeState,
    PhysicalParams,
    characteristic_roots,
    closed_form_solution,
    energy_audit,
    growth_rate,
    simulate_mode,
    stability_boundary_scan,
)
from mhd_inhibit.dynamics import write_scan_csv


def make_spec(M3, mu=0.0, n=1, rho_prime=1.0):
    p = PhysicalParams(g=1.0, lam=1.0, mu=mu, M_bar=(0.0, 0.0, M3))
    return ModeSpec(n=n, rho_bar=1.0, rho_prime=rho_prime, params=p, h=np.pi)


def test_roots_oscillatory():
    # M3 = 2, n = 1, h = pi: stiffness 4 - 1 = 3, roots +- i sqrt(3)
    spec = make_spec(2.0)
    assert spec.stiffness == pytest.approx(3.0, rel=1e-15)
    r1, r2 = characteristic_roots(spec)
    assert r1 == pytest.approx(1j * np.sqrt(3.0), abs=1e-14)
    assert r2 == pytest.approx(-1j * np.sqrt(3.0), abs=1e-14)


def test_roots_unstable():
    spec = make_spec(0.5)
    assert spec.stiffness == pytest.approx(-0.75, rel=1e-15)
    assert growth_rate(spec) == pytest.approx(np.sqrt(0.75), rel=1e-14)


def test_roots_marginal():
    # at the threshold field strength the stiffness vanishes: double root 0
    spec = make_spec(1.0)
    r1, r2 = characteristic_roots(spec)
    assert r1 == 0.0 and r2 == 0.0


def test_roots_match_independent_quadratic():
    rng = np.random.default_rng(5)
    for _ in range(20):
        spec = make_spec(float(rng.uniform(0.1, 3.0)), mu=float(rng.uniform(0, 0.5)),
                         n=int(rng.integers(1, 5)))
        ours = sorted(characteristic_roots(spec), key=lambda z: (z.real, z.imag))
        theirs = sorted(np.roots([1.0, spec.damping, spec.stiffness]),
                        key=lambda z: (z.real, z.imag))
        for a, b in zip(ours, theirs):
            assert abs(a - b) < 1e-10


def test_mode_spec_validation():
    with pytest.raises(ValueError):
        make_spec(1.0, n=0)
    with pytest.raises(ValueError):
        ModeState(np.nan, 0.0)


def test_dt_precondition():
    spec = make_spec(2.0)
    with pytest.raises(ValueError):
        simulate_mode(spec, ModeState(1.0, 0.0), T=1.0, dt=0.5)


def test_marginal_case_constant():
    spec = make_spec(1.0)
    series = simulate_mode(spec, ModeState(1.0, 0.0), T=5.0, dt=1e-2)
    assert np.max(np.abs(series.eta - 1.0)) == 0.0


def test_oscillation_period_recovered():
    # period 2 pi / sqrt(3) from upward zero crossings of the velocity
    spec = make_spec(2.0)
    series = simulate_mode(spec, ModeState(1.0, 0.0), T=20.0, dt=1e-3)
    v = series.eta
    idx = np.where((v[:-1] < 0) & (v[1:] >= 0))[0]
    crossings = []
    for i in idx:
        frac = -v[i] / (v[i + 1] - v[i])
        crossings.append(series.t[i] + frac * (series.t[i + 1] - series.t[i]))
    periods = np.diff(crossings)
    assert np.mean(periods) == pytest.approx(2 * np.pi / np.sqrt(3.0), abs=1e-5)


def test_trajectory_matches_closed_form():
    for spec in (make_spec(2.0), make_spec(0.5), make_spec(2.0, mu=0.1)):
        series = simulate_mode(spec, ModeState(1.0, 0.0), T=20.0, dt=1e-3)
        eta, eta_dot = closed_form_solution(spec, ModeState(1.0, 0.0))(series.t)
        scale = np.max(np.abs(eta))
        assert np.max(np.abs(series.eta - eta)) / scale < 1e-6
        assert np.max(np.abs(series.eta_dot - eta_dot)) / max(np.max(np.abs(eta_dot)), 1.0) < 1e-6


def test_damped_envelope():
    spec = make_spec(2.0, mu=0.1)
    nu = spec.damping
    series = simulate_mode(spec, ModeState(1.0, 0.0), T=20.0, dt=1e-3)
    # local maxima of |eta| decay like exp(-nu t / 2)
    mags = np.abs(series.eta)
    peaks = [(series.t[i], mags[i]) for i in range(1, len(mags) - 1)
             if mags[i] >= mags[i - 1] and mags[i] >= mags[i + 1] and mags[i] > 1e-3]
    assert len(peaks) > 5
    for (t1, m1), (t2, m2) in zip(peaks[:-1], peaks[1:]):
        assert m2 / m1 == pytest.approx(np.exp(-0.5 * nu * (t2 - t1)), rel=1e-3)


def test_energy_audit_undamped():
    spec = make_spec(2.0)
    series = simulate_mode(spec, ModeState(1.0, 0.0), T=20.0, dt=1e-3)
    audit = energy_audit(series, spec)
    assert audit.max_residual <= 1e-8
    assert audit.dissipated == 0.0


def test_energy_audit_damped():
    spec = make_spec(2.0, mu=0.1)
    series = simulate_mode(spec, ModeState(1.0, 0.0), T=20.0, dt=1e-3)
    audit = energy_audit(series, spec)
    assert audit.max_residual <= 1e-6
    assert audit.dissipated > 0.0
    assert audit.energy_final < audit.energy_initial


def test_energy_audit_unstable_sign_agnostic():
    # with negative stiffness the balance is a difference of huge terms, so
    # the identity is checked relative to the term scale
    spec = make_spec(0.5, mu=0.0)
    series = simulate_mode(spec, ModeState(1.0, 0.0), T=20.0, dt=1e-3)
    audit = energy_audit(series, spec)
    assert audit.max_residual <= 1e-10 * audit.scale


def test_alfven_dispersion():
    # no stratification: oscillation frequency is exactly (wave speed) * k
    for n in (1, 2, 3):
        spec = make_spec(1.7, n=n, rho_prime=0.0)
        r1, _ = characteristic_roots(spec)
        a = np.sqrt(spec.alfven_speed_sq)
        assert abs(r1.imag) == pytest.approx(a * spec.wavenumber, rel=1e-14)
        assert r1.real == 0.0


def test_rk4_order():
    spec = make_spec(2.0)
    sol = closed_form_solution(spec, ModeState(1.0, 0.0))

    def err(dt):
        series = simulate_mode(spec, ModeState(1.0, 0.0), T=5.0, dt=dt)
        eta, _ = sol(series.t)
        return np.max(np.abs(series.eta - eta))

    ratio = err(0.02) / err(0.01)
    assert 12.0 <= ratio <= 20.0


def test_boundary_scan_sign_change():
    p = PhysicalParams(g=1.0, lam=1.0, mu=0.1, M_bar=(0.0, 0.0, 1.0))
    base = ModeSpec(n=1, rho_bar=1.0, rho_prime=1.0, params=p, h=np.pi)
    m_exact = 1.0  # (h/pi) sqrt(g rho'/lam)
    rows = stability_boundary_scan(base, [0.9, 0.99 * m_exact, 1.01 * m_exact, 1.5],
                                   n_max=8)
    assert rows[0].growth_rate > 0 and rows[1].growth_rate > 0
    assert rows[2].growth_rate < 0 and rows[3].growth_rate < 0
    # nonincreasing in field strength (on the oscillatory stable side the
    # rate plateaus at minus half the damping)
    rates = [r.growth_rate for r in rows]
    assert all(rates[k + 1] <= rates[k] for k in range(len(rates) - 1))
    assert rates[1] < rates[0]
    # most unstable mode is the lowest one on the unstable side
    assert rows[0].argmax_n == 1


def test_zero_field_growth_rate():
    # without a field the destabilizer is wavenumber independent and the
    # inviscid growth rate is sqrt(g rho' / rho)
    spec = make_spec(0.0)
    assert growth_rate(spec) == pytest.approx(1.0, rel=1e-14)


def test_scan_requires_destabilizing_gradient():
    p = PhysicalParams(g=1.0, lam=1.0, mu=0.1, M_bar=(0.0, 0.0, 1.0))
    base = ModeSpec(n=1, rho_bar=1.0, rho_prime=-1.0, params=p, h=np.pi)
    with pytest.raises(ValueError):
        stability_boundary_scan(base, [0.5])


def test_series_and_scan_csv(tmp_path):
    spec = make_spec(2.0, mu=0.1)
    series = simulate_mode(spec, ModeState(1.0, 0.0), T=1.0, dt=1e-2)
    path = tmp_path / "series.csv"
    series.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,eta,eta_dot,E"
    assert len(lines) == len(series.t) + 1

    p = PhysicalParams(g=1.0, lam=1.0, mu=0.1, M_bar=(0.0, 0.0, 1.0))
    base = ModeSpec(n=1, rho_bar=1.0, rho_prime=1.0, params=p, h=np.pi)
    rows = stability_boundary_scan(base, [0.5, 1.5], n_max=4)
    spath = tmp_path / "scan.csv"
    write_scan_csv(rows, spath)
    lines = spath.read_text().splitlines()
    assert lines[0] == "M3,growth_rate,argmax_n"
    assert len(lines) == 3
