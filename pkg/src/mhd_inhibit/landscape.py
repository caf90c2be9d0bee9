"""Sign certificates for the total-potential-energy variation.

Below the threshold the rest state is not a local minimum of total potential
energy: an oscillatory divergence-free test field scaled small enough makes
the variation negative.  Above the threshold every small field makes it
positive.  Both statements are verified here by direct quadrature of the
quadratic energy split plus the measured cubic remainder; the higher-order
volume-preserving correction of the underlying maps is omitted because its
contribution is cubic in the amplitude, and the amplitude loop enforces a
quadratic-dominance margin instead.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .energy import (
    directional_energy,
    magnetic_energy_variation,
    remainder_value,
    stratified_surface_functionals,
    weighted_vertical_energy,
)
from .model import (
    Array,
    BOUNDARY_FREE,
    BOUNDARY_VANISHING,
    Grid3D,
    PhysicalParams,
    Profile1D,
    SlabDomain,
    VectorField3,
    make_uniform_grid,
)
from .sampling import random_band_limited_field, sample_field
from .threshold import threshold_1d, threshold_rt, threshold_stratified

CONDITION_STABILITY = "stability"
CONDITION_INSTABILITY = "instability"


@dataclass(frozen=True)
class LandscapeVerdict:
    condition: str
    functional_value: float
    witness: str
    satisfied: bool
    quadratic_part: float = 0.0
    cubic_part: float = 0.0
    dominance: float = float("inf")

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "functional_value": self.functional_value,
            "witness": self.witness,
            "satisfied": self.satisfied,
            "quadratic_part": self.quadratic_part,
            "cubic_part": self.cubic_part,
            "dominance": None if np.isinf(self.dominance) else self.dominance,
        }


def write_verdicts_jsonl(verdicts: list[LandscapeVerdict], path) -> None:
    with open(path, "w", newline="\n") as fh:
        for v in verdicts:
            fh.write(json.dumps(v.to_dict(), sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# oscillatory test fields


def _taper_profile(psi: Array, cells: int) -> Array:
    """Cosine-ramp mollification over the given number of cells at each end,
    forcing the profile and its discrete derivative to vanish there."""
    out = psi.copy()
    n = psi.size
    if cells <= 0 or 2 * cells >= n:
        return out
    ramp = 0.5 * (1.0 - np.cos(np.pi * np.arange(cells + 1) / cells))
    out[: cells + 1] *= ramp
    out[n - cells - 1:] *= ramp[::-1]
    return out


def build_test_field(i: int, psi: Array, grid: Grid3D, l_i: float = 0.0,
                     taper_cells: int = 0) -> VectorField3:
    """Divergence-free oscillatory field from a vertical profile.

    v = (0, psi'(y3) cos z, (i/L2) psi(y3) sin z),  z = (l_i/L1) y1 + (i/L2) y2.

    The second and third components cancel analytically in the divergence for
    any phase tilt l_i.  Analytic gradient samples are attached (the profile
    derivatives come from second-order differences of the samples).  The
    phase must be resolved by at least 8 nodes per wavelength.
    """
    if i < 1:
        raise ValueError("mode index must be >= 1")
    if grid.n2 < 8 * i:
        raise ValueError(f"phase under-resolved: need n2 >= {8 * i} for i = {i}")
    if l_i != 0.0 and grid.n1 < 8 * abs(l_i):
        raise ValueError("phase under-resolved in the first direction")
    psi = np.asarray(psi, dtype=float)
    if psi.shape != (grid.n3,):
        raise ValueError("psi must be sampled on the grid's vertical nodes")
    if taper_cells > 0:
        psi = _taper_profile(psi, taper_cells)

    h3 = grid.h3
    dpsi = np.gradient(psi, h3, edge_order=2)
    d2psi = np.gradient(dpsi, h3, edge_order=2)
    if taper_cells > 0:
        dpsi[0] = dpsi[-1] = 0.0

    L1, L2 = grid.domain.L1, grid.domain.L2
    k1, k2 = l_i / L1, i / L2
    g1, g2, _ = grid.meshgrid()
    z = k1 * g1 + k2 * g2
    sin_z, cos_z = np.sin(z), np.cos(z)

    values = np.zeros(grid.shape + (3,))
    values[..., 1] = dpsi * cos_z
    values[..., 2] = k2 * psi * sin_z

    grad = np.zeros(grid.shape + (3, 3))
    grad[..., 1, 0] = -k1 * dpsi * sin_z
    grad[..., 1, 1] = -k2 * dpsi * sin_z
    grad[..., 1, 2] = d2psi * cos_z
    grad[..., 2, 0] = k1 * k2 * psi * cos_z
    grad[..., 2, 1] = k2 * k2 * psi * cos_z
    grad[..., 2, 2] = k2 * dpsi * sin_z

    vanishing = (abs(psi[0]) == 0.0 and abs(psi[-1]) == 0.0
                 and abs(dpsi[0]) == 0.0 and abs(dpsi[-1]) == 0.0)
    if vanishing:
        values[:, :, 0, :] = 0.0
        values[:, :, -1, :] = 0.0
    return VectorField3(values, boundary=BOUNDARY_VANISHING if vanishing else BOUNDARY_FREE,
                        grad=grad)


# ---------------------------------------------------------------------------
# energy-variation evaluation


def _scaled(field: VectorField3, eps: float) -> VectorField3:
    return VectorField3(eps * field.values, boundary=field.boundary,
                        grad=None if field.grad is None else eps * field.grad)


def potential_energy_variation(field: VectorField3, profile: Profile1D,
                               params: PhysicalParams, grid: Grid3D
                               ) -> tuple[float, float, float]:
    """delta_EP(field) = V_M/2 - V_grho/2 - remainder, returned as
    (value, quadratic part, cubic remainder)."""
    mag = magnetic_energy_variation(field, params, grid) if np.any(params.M != 0) \
        else None
    v_m = 0.0 if mag is None else mag.V_M
    v_g = weighted_vertical_energy(field, grid, profile.derivative_at, params)
    cubic = remainder_value(field.values[..., 2], profile, params, grid)
    quad = 0.5 * (v_m - v_g)
    return quad - cubic, quad, cubic


def _dominance(quad: float, cubic: float) -> float:
    if cubic == 0.0:
        return float("inf")
    return abs(quad) / abs(cubic)


def instability_witness(profile: Profile1D, domain: SlabDomain,
                        params: PhysicalParams, eps: float,
                        grid: Grid3D | None = None, i_max: int = 256,
                        margin: float = 10.0) -> LandscapeVerdict:
    """Construct a field making the potential-energy variation negative.

    Requires |M3| below the threshold.  The vertical profile is the discrete
    quotient maximizer; the horizontal mode index grows until the quadratic
    part of the variation is negative with half the spectral margin, then the
    amplitude is halved until the quadratic part dominates the measured cubic
    remainder by ``margin``.
    """
    if grid is None:
        grid = make_uniform_grid(domain, 4, 64, 65)
    res = threshold_1d(profile.derivative_at, (domain.a, domain.b), params, grid.n3)
    m = res.m
    M3 = params.M_bar[2]
    if abs(M3) >= m:
        raise ValueError(f"instability witness needs |M3| < m = {m:.6g}, got {abs(M3):.6g}")

    i = 4
    while True:
        if grid.n2 < 8 * i:
            if 8 * i > 4096:
                raise RuntimeError("cannot resolve a witness mode within i <= 256")
            grid = make_uniform_grid(domain, grid.n1, 8 * i, grid.n3)
        field = build_test_field(i, res.psi0, grid)
        _, quad, _ = potential_energy_variation(field, profile, params, grid)
        if quad < 0.0:
            break
        if i >= i_max:
            raise RuntimeError(
                f"no witness mode with i <= {i_max}: |M3| too close to the threshold "
                "for this resolution")
        i *= 2

    eps_now = eps
    while eps_now > 1e-12:
        scaled = _scaled(field, eps_now)
        value, quad, cubic = potential_energy_variation(scaled, profile, params, grid)
        if value < 0.0 and _dominance(quad, cubic) >= margin:
            return LandscapeVerdict(
                condition=CONDITION_INSTABILITY, functional_value=value,
                witness=f"oscillatory field i={i}, eps={eps_now:.6g}, n3={grid.n3}",
                satisfied=True, quadratic_part=quad, cubic_part=cubic,
                dominance=_dominance(quad, cubic))
        eps_now *= 0.5
    scaled = _scaled(field, eps)
    value, quad, cubic = potential_energy_variation(scaled, profile, params, grid)
    return LandscapeVerdict(
        condition=CONDITION_INSTABILITY, functional_value=value,
        witness=f"oscillatory field i={i}, eps={eps:.6g} (no dominant amplitude found)",
        satisfied=False, quadratic_part=quad, cubic_part=cubic,
        dominance=_dominance(quad, cubic))


def stability_certificate(profile: Profile1D, domain: SlabDomain,
                          params: PhysicalParams, trials: int, eps_max: float,
                          seed: int, grid: Grid3D | None = None
                          ) -> list[LandscapeVerdict]:
    """Check positivity of the variation on seeded random small fields.

    Requires |M3| above the threshold.  Each trial draws a band-limited
    boundary-vanishing field, rescales its vertical sup-norm to at most
    eps_max (shrinking further until the cubic remainder bound is inside the
    spectral margin), and records the variation's sign.  A negative value is
    reported as an unsatisfied verdict, not an exception.
    """
    if grid is None:
        grid = make_uniform_grid(domain, 16, 16, 65)
    res = threshold_rt(profile, domain, params, n=max(grid.n3, 257))
    m = res.m
    M3 = params.M_bar[2]
    if abs(M3) <= m:
        raise ValueError(f"stability certificate needs |M3| > m = {m:.6g}")

    a, b = profile.interval
    dense = np.linspace(a, b, 8 * profile.y.size)
    c_taylor = params.g * float(np.max(np.abs(profile.second_derivative_at(dense)))) / 2.0
    direction = params.M / M3

    rng = np.random.default_rng(seed)
    verdicts = []
    for trial in range(trials):
        cf = random_band_limited_field(domain, rng)
        field = sample_field(cf, grid, boundary=BOUNDARY_VANISHING)
        sup3 = float(np.max(np.abs(field.values[..., 2])))
        if sup3 == 0.0:
            continue
        eps_eff = eps_max / sup3
        field = _scaled(field, eps_eff)
        # shrink until the remainder bound sits inside the spectral margin
        for _ in range(60):
            sup3 = float(np.max(np.abs(field.values[..., 2])))
            margin = 0.5 * (M3**2 - m**2) * directional_energy(field, grid, direction, params)
            bound = c_taylor * sup3 * weighted_vertical_energy(
                field, grid, np.ones(grid.n3), params) / params.g
            if bound < margin or c_taylor == 0.0:
                break
            field = _scaled(field, 0.5)
        value, quad, cubic = potential_energy_variation(field, profile, params, grid)
        verdicts.append(LandscapeVerdict(
            condition=CONDITION_STABILITY, functional_value=value,
            witness=f"random field seed={seed} trial={trial} sup_eta3={sup3:.3g}",
            satisfied=value > 0.0, quadratic_part=quad, cubic_part=cubic,
            dominance=_dominance(quad, cubic)))
    return verdicts


# ---------------------------------------------------------------------------
# two-layer case


def _stratified_variation(field: VectorField3, grid: Grid3D, rho_plus: float,
                          rho_minus: float, params: PhysicalParams
                          ) -> tuple[float, float, float]:
    v_m = 0.0
    if np.any(params.M != 0):
        v_m = magnetic_energy_variation(field, params, grid).V_M
    sf = stratified_surface_functionals(field, grid, rho_plus, rho_minus, params)
    quad = 0.5 * (v_m - sf.v_jump)
    return quad - sf.n_jump, quad, sf.n_jump


def stratified_landscape(params: PhysicalParams, h: float, l: float,
                         rho_plus: float, rho_minus: float, eps: float,
                         condition: str, seed: int = 0, trials: int = 50,
                         grid: Grid3D | None = None,
                         margin: float = 10.0) -> LandscapeVerdict:
    """Sign certificate for the two-layer potential-energy variation.

    Instability: tent-profile oscillatory field with the amplitude-dominance
    loop.  Stability: minimum variation over seeded random small fields
    (satisfied when all are positive); with a nonpositive density jump both
    leading terms are nonnegative, so the stability verdict holds for every
    field strength including zero.
    """
    domain = SlabDomain(a=-l, b=h, L1=1.0, L2=1.0, interface=0.0)
    res = threshold_stratified(rho_plus, rho_minus, h, l, params)
    m = res.m
    M3 = params.M_bar[2]

    if condition == CONDITION_INSTABILITY:
        if abs(M3) >= m:
            raise ValueError(f"instability condition needs |M3| < m = {m:.6g}")
        if grid is None:
            grid = make_uniform_grid(domain, 4, 128, _interface_n3(h, l, 64))
        psi = np.where(grid.y3 <= 0.0, 1.0 + grid.y3 / l, 1.0 - grid.y3 / h)
        psi[0] = psi[-1] = 0.0
        i = 4
        while True:
            if grid.n2 < 8 * i:
                grid = make_uniform_grid(domain, grid.n1, 8 * i, grid.n3)
            field = build_test_field(i, psi, grid)
            _, quad, _ = _stratified_variation(field, grid, rho_plus, rho_minus, params)
            if quad < 0.0:
                break
            if i >= 256:
                raise RuntimeError("no witness mode with i <= 256")
            i *= 2
        eps_now = eps
        while eps_now > 1e-12:
            value, quad, cubic = _stratified_variation(
                _scaled(field, eps_now), grid, rho_plus, rho_minus, params)
            if value < 0.0 and _dominance(quad, cubic) >= margin:
                return LandscapeVerdict(
                    condition=condition, functional_value=value,
                    witness=f"tent-profile field i={i}, eps={eps_now:.6g}",
                    satisfied=True, quadratic_part=quad, cubic_part=cubic,
                    dominance=_dominance(quad, cubic))
            eps_now *= 0.5
        value, quad, cubic = _stratified_variation(
            _scaled(field, eps), grid, rho_plus, rho_minus, params)
        return LandscapeVerdict(condition=condition, functional_value=value,
                                witness=f"tent-profile field i={i}, eps={eps:.6g}",
                                satisfied=False, quadratic_part=quad,
                                cubic_part=cubic, dominance=_dominance(quad, cubic))

    if condition == CONDITION_STABILITY:
        jump = rho_plus - rho_minus
        if jump > 0.0 and abs(M3) <= m:
            raise ValueError(f"stability condition needs |M3| > m = {m:.6g}")
        if grid is None:
            grid = make_uniform_grid(domain, 16, 16, _interface_n3(h, l, 64))
        rng = np.random.default_rng(seed)
        worst = np.inf
        worst_parts = (0.0, 0.0)
        for _ in range(trials):
            cf = random_band_limited_field(domain, rng)
            field = sample_field(cf, grid, boundary=BOUNDARY_VANISHING)
            sup = float(np.max(np.abs(field.values)))
            if sup == 0.0:
                continue
            field = _scaled(field, eps / sup)
            value, quad, cubic = _stratified_variation(field, grid, rho_plus,
                                                       rho_minus, params)
            if value < worst:
                worst, worst_parts = value, (quad, cubic)
        return LandscapeVerdict(
            condition=condition, functional_value=float(worst),
            witness=f"min over {trials} random fields, seed={seed}, eps={eps:.6g}",
            satisfied=worst > 0.0, quadratic_part=worst_parts[0],
            cubic_part=worst_parts[1], dominance=_dominance(*worst_parts))

    raise ValueError(f"unknown condition {condition!r}")


def _interface_n3(h: float, l: float, cells_per_side: int) -> int:
    """Vertical node count placing the interface exactly on a node."""
    total = h + l
    # choose counts proportional to the layer depths over a common spacing
    ratio = l / total
    n_below = max(4, int(round(cells_per_side * 2 * ratio)))
    n_above = max(4, int(round(cells_per_side * 2 * (1 - ratio))))
    n3 = n_below + n_above + 1
    # spacing consistency: require l / (total/(n3-1)) to be integral
    spacing = total / (n3 - 1)
    k = l / spacing
    if abs(k - round(k)) > 1e-9:
        # fall back to a grid refined until the interface lands on a node
        for n3 in range(17, 4097):
            spacing = total / (n3 - 1)
            k = l / spacing
            if abs(k - round(k)) < 1e-9:
                return n3
        raise ValueError("cannot place the interface on a uniform grid node")
    return n3
