"""Energy functionals of displacement fields and their exact identities.

The magnetic energy stored by a displacement eta is quadratic in the
directional derivative along the impressed field; its variation from the
rest state splits into a cross term (which vanishes for admissible fields by
integration by parts) and half the quadratic form.  The gravitational
potential released by a vertical displacement has an exact antiderivative
form; for volume-preserving boundary-fixing maps it equals minus the direct
integral of density times vertical displacement, with a cubic-order
remainder controlling the gap to the quadratic approximation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    Array,
    Grid3D,
    PhysicalParams,
    Profile1D,
    VectorField3,
    horizontal_integral,
    vector_gradient,
    volume_integral,
)
from .kinematics import FlowMap


def directional_derivative(field: VectorField3, grid: Grid3D, direction: Array) -> Array:
    """(direction . grad) field, shape (..., 3); prefers analytic gradient samples."""
    grad = vector_gradient(field, grid)
    return np.einsum("...ij,j->...i", grad, np.asarray(direction, dtype=float))


def directional_energy(field: VectorField3, grid: Grid3D, direction,
                       params: PhysicalParams) -> float:
    """Stiffness functional lam * ||(direction . grad) field||^2."""
    d = directional_derivative(field, grid, direction)
    return params.lam * volume_integral(np.sum(d**2, axis=-1), grid)


def weighted_vertical_energy(field: VectorField3, grid: Grid3D, weight,
                             params: PhysicalParams) -> float:
    """Release functional g * int weight(y3) * field_3^2."""
    w = weight(grid.y3) if callable(weight) else np.asarray(weight, dtype=float)
    return params.g * volume_integral(w * field.values[..., 2] ** 2, grid)


@dataclass(frozen=True)
class MagneticVariation:
    delta_M: float
    cross_term: float
    V_M: float


def magnetic_energy_variation(eta: VectorField3, params: PhysicalParams,
                              grid: Grid3D) -> MagneticVariation:
    """Variation of total magnetic energy carried by a displacement.

    Returns both the raw form lam * int d_M eta . M + (lam/2) * int |d_M eta|^2
    and the reduced quadratic form; for boundary-vanishing horizontally
    periodic fields the cross term is a pure discretization residual.
    """
    params.require_nonzero_field()
    M = params.M
    d = directional_derivative(eta, grid, M)
    V_M = params.lam * volume_integral(np.sum(d**2, axis=-1), grid)
    cross = params.lam * volume_integral(d @ M, grid)
    return MagneticVariation(delta_M=cross + 0.5 * V_M, cross_term=cross, V_M=V_M)


def remainder_value(eta3: Array, profile: Profile1D, params: PhysicalParams,
                    grid: Grid3D) -> float:
    """Cubic-order remainder of the released potential beyond its quadratic
    part, via the antiderivative R (R' = profile):

        g * int [ R(y3 + eta3) - R(y3) - rho(y3) eta3 - rho'(y3) eta3^2 / 2 ].

    Identically zero when the profile derivative is constant.
    """
    if not profile.has_closed_form:
        raise ValueError("remainder evaluation needs a closed-form profile")
    y3 = grid.y3
    integrand = (profile.antiderivative_at(y3 + eta3) - profile.antiderivative_at(y3)
                 - profile.value_at(y3) * eta3
                 - 0.5 * profile.derivative_at(y3) * eta3**2)
    return params.g * volume_integral(integrand, grid)


@dataclass(frozen=True)
class PotentialVariation:
    v_star: float
    delta_direct: float
    volume_preserving: bool
    max_jacobian_deviation: float


def potential_variation_exact(flow: FlowMap, profile: Profile1D,
                              params: PhysicalParams,
                              jacobian_tolerance: float = 1e-6) -> PotentialVariation:
    """Exact released potential of a flow map and the direct variation.

    v_star = g * int [R(y3 + eta3) - R(y3) - rho(y3) eta3]  with R' = rho,
    delta_direct = g * int rho(y3) eta3.

    For volume-preserving boundary-fixing maps  -v_star = delta_direct  (a
    change of variables sends int R(zeta3) to int R(y3)); the flag reports
    whether the map is volume preserving to the given tolerance, since the
    identity is not expected to hold otherwise.
    """
    if not profile.has_closed_form:
        raise ValueError("exact potential variation needs a closed-form profile")
    grid = flow.grid
    y3 = grid.y3
    eta3 = flow.eta[..., 2]
    rho = profile.value_at(y3)
    integrand = (profile.antiderivative_at(y3 + eta3) - profile.antiderivative_at(y3)
                 - rho * eta3)
    v_star = params.g * volume_integral(integrand, grid)
    delta_direct = params.g * volume_integral(rho * eta3, grid)
    jdev = float(np.max(np.abs(flow.jacobian - 1.0)))
    return PotentialVariation(v_star=v_star, delta_direct=delta_direct,
                              volume_preserving=jdev <= jacobian_tolerance,
                              max_jacobian_deviation=jdev)


@dataclass(frozen=True)
class RemainderCheck:
    value: float
    bound: float
    holds: bool
    sup_eta3: float
    l2_eta3_sq: float
    constant: float


def cubic_remainder_bound_check(eta: VectorField3, profile: Profile1D,
                                params: PhysicalParams, grid: Grid3D) -> RemainderCheck:
    """Check |remainder| <= c * sup|eta3| * ||eta3||_L2^2 with the explicit
    Taylor constant c = g * max|rho''| / 2 (conservative)."""
    if profile.d2fn is None and not profile.has_closed_form:
        raise ValueError("bound check needs a twice-differentiable profile")
    eta3 = eta.values[..., 2]
    value = remainder_value(eta3, profile, params, grid)
    a, b = profile.interval
    dense = np.linspace(a, b, 8 * profile.y.size)
    c = params.g * float(np.max(np.abs(profile.second_derivative_at(dense)))) / 2.0
    sup = float(np.max(np.abs(eta3)))
    l2sq = volume_integral(eta3**2, grid)
    bound = c * sup * l2sq
    return RemainderCheck(value=value, bound=bound,
                          holds=abs(value) <= bound + 1e-12,
                          sup_eta3=sup, l2_eta3_sq=l2sq, constant=c)


# ---------------------------------------------------------------------------
# two-layer interface functionals


@dataclass(frozen=True)
class SurfaceFunctionals:
    v_jump: float
    n_jump: float
    grad_h_sup: float
    bound: float
    holds: bool


def stratified_surface_functionals(eta: VectorField3, grid: Grid3D,
                                   rho_plus: float, rho_minus: float,
                                   params: PhysicalParams) -> SurfaceFunctionals:
    """Interface release functional and its quadratic-in-gradient remainder.

    v_jump = g*jump * int_interface eta3^2,
    n_jump = (g*jump/2) * int_interface eta3^2 (d1 eta1 d2 eta2 + d1 eta1
             + d2 eta2 - d2 eta1 d1 eta2),

    both carrying the same g*jump prefactor, together with the bound
    |n_jump| <= s (1 + s) |v_jump| for s the sup of the horizontal
    displacement gradient on the interface.
    """
    k0 = grid.interface_index()
    jump = rho_plus - rho_minus
    eta3 = eta.values[:, :, k0, 2]
    if eta.grad is not None:
        gh = eta.grad[:, :, k0]
        d1e1, d2e1 = gh[..., 0, 0], gh[..., 0, 1]
        d1e2, d2e2 = gh[..., 1, 0], gh[..., 1, 1]
    else:
        from .model import _ddx_periodic
        e1 = eta.values[:, :, k0, 0]
        e2 = eta.values[:, :, k0, 1]
        d1e1 = _ddx_periodic(e1, 0, grid.h1)
        d2e1 = _ddx_periodic(e1, 1, grid.h2)
        d1e2 = _ddx_periodic(e2, 0, grid.h1)
        d2e2 = _ddx_periodic(e2, 1, grid.h2)

    v_jump = params.g * jump * horizontal_integral(eta3**2, grid)
    n_jump = 0.5 * params.g * jump * horizontal_integral(
        eta3**2 * (d1e1 * d2e2 + d1e1 + d2e2 - d2e1 * d1e2), grid)
    sup = float(np.max(np.sqrt(d1e1**2 + d2e1**2 + d1e2**2 + d2e2**2)))
    bound = sup * (1.0 + sup) * abs(v_jump)
    return SurfaceFunctionals(v_jump=v_jump, n_jump=n_jump, grad_h_sup=sup,
                              bound=bound, holds=abs(n_jump) <= bound + 1e-12)


# ---------------------------------------------------------------------------
# Poincare bound


@dataclass(frozen=True)
class PoincareCheck:
    lhs: float
    rhs: float
    holds: bool


def poincare_check(w: VectorField3, direction, params: PhysicalParams,
                   grid: Grid3D, tolerance: float = 1e-10) -> PoincareCheck:
    """Check ||w||^2 <= (height^2 / (lam pi^2)) * lam ||d_n w||^2 for fields
    vanishing at top and bottom; equality at the single lowest vertical mode."""
    nvec = np.asarray(direction, dtype=float)
    if abs(nvec[2] - 1.0) > 1e-12:
        raise ValueError("direction must have third component 1")
    lhs = volume_integral(np.sum(w.values**2, axis=-1), grid)
    rhs = (grid.domain.height**2 / (params.lam * np.pi**2)) \
        * directional_energy(w, grid, nvec, params)
    return PoincareCheck(lhs=lhs, rhs=rhs,
                         holds=lhs <= rhs + tolerance * max(1.0, abs(rhs)))


# ---------------------------------------------------------------------------
# combined report


@dataclass(frozen=True)
class EnergyReport:
    V_M: float
    delta_M: float
    cross_term: float
    V_grho: float
    N_grho: float
    V_star: float
    delta_grho_direct: float
    delta_EP: float

    def to_dict(self) -> dict:
        return {
            "V_M": self.V_M, "delta_M": self.delta_M, "cross_term": self.cross_term,
            "V_grho": self.V_grho, "N_grho": self.N_grho, "V_star": self.V_star,
            "delta_grho_direct": self.delta_grho_direct, "delta_EP": self.delta_EP,
        }


def evaluate_energy_report(flow: FlowMap, profile: Profile1D,
                           params: PhysicalParams) -> EnergyReport:
    """All energy functionals of a flow map's displacement in one record."""
    grid = flow.grid
    eta = VectorField3(flow.eta, boundary="free",
                       grad=flow.grad_zeta - np.eye(3))
    mag = magnetic_energy_variation(eta, params, grid)
    pot = potential_variation_exact(flow, profile, params)
    v_grho = weighted_vertical_energy(eta, grid, profile.derivative_at, params)
    n_grho = pot.v_star - 0.5 * v_grho
    return EnergyReport(V_M=mag.V_M, delta_M=mag.delta_M, cross_term=mag.cross_term,
                        V_grho=v_grho, N_grho=n_grho, V_star=pot.v_star,
                        delta_grho_direct=pot.delta_direct,
                        delta_EP=0.5 * mag.V_M - pot.v_star)


def eps_sweep_rows(eta: VectorField3, profile: Profile1D, params: PhysicalParams,
                   grid: Grid3D, epsilons) -> list[dict]:
    """Energy functionals along scaled displacements eps * eta (the
    equivalent-infinitesimal diagnostic): one row per eps."""
    rows = []
    for eps in epsilons:
        scaled = VectorField3(eps * eta.values, boundary=eta.boundary,
                              grad=None if eta.grad is None else eps * eta.grad)
        mag = magnetic_energy_variation(scaled, params, grid)
        v_grho = weighted_vertical_energy(scaled, grid, profile.derivative_at, params)
        n_grho = remainder_value(scaled.values[..., 2], profile, params, grid)
        v_star = 0.5 * v_grho + n_grho
        delta_direct = params.g * volume_integral(
            profile.value_at(grid.y3) * scaled.values[..., 2], grid)
        rows.append({
            "epsilon": float(eps),
            "V_M": mag.V_M,
            "V_star": v_star,
            "delta_direct": delta_direct,
            "delta_EP": 0.5 * mag.V_M - v_star,
        })
    return rows


def write_eps_sweep_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("epsilon,V_M,V_star,delta_direct,delta_EP\n")
        for r in rows:
            fh.write(",".join(f"{r[k]:.17g}" for k in
                              ("epsilon", "V_M", "V_star", "delta_direct", "delta_EP")) + "\n")
