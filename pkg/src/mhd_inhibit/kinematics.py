"""Lagrangian flow maps: deformation gradients, cofactors, frozen-in fields,
surface flux, and a volume-preserving map generator.

A flow map sends particle labels y to positions zeta(y) = y + eta(y).  Two
derivative modes are supported.  In analytic mode the map carries exact
closed-form callables for zeta, its gradient and its Hessian (for maps built
from closed-form displacements, or propagated exactly through the RK4 stages
for maps built as flows of closed-form velocity fields); pointwise identities
then hold to rounding error.  In finite-difference mode everything is derived
from nodal samples and identities hold to O(h^2).

The cofactor array stores the signed complement minors of grad(zeta), so for
volume-preserving maps it coincides with the transposed inverse and the
row-divergence identity is directly testable.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .model import (
    Array,
    BOUNDARY_FREE,
    Grid3D,
    PhysicalParams,
    VectorField3,
    vector_gradient,
)


class SingularDeformationError(ValueError):
    """The deformation gradient is singular somewhere: map not invertible."""


class DegenerateSurfaceError(ValueError):
    """The surface chart is rank-deficient at a quadrature node."""


# ---------------------------------------------------------------------------
# closed-form maps and displacements


@dataclass(frozen=True)
class ClosedFormField:
    """Closed-form vector function with optional exact derivatives.

    value(pts) -> (..., 3); grad(pts)[..., i, j] = d(value_i)/d(y_j);
    hess(pts)[..., i, a, b] = d^2(value_i)/(d y_a d y_b).
    """

    value: Callable[[Array], Array]
    grad: Callable[[Array], Array] | None = None
    hess: Callable[[Array], Array] | None = None

    def scaled(self, c: float) -> "ClosedFormField":
        return ClosedFormField(
            value=lambda pts: c * self.value(pts),
            grad=None if self.grad is None else (lambda pts: c * self.grad(pts)),
            hess=None if self.hess is None else (lambda pts: c * self.hess(pts)),
        )


def identity_map() -> ClosedFormField:
    eye = np.eye(3)

    def value(pts):
        return np.asarray(pts, dtype=float)

    def grad(pts):
        pts = np.asarray(pts, dtype=float)
        return np.broadcast_to(eye, pts.shape[:-1] + (3, 3)).copy()

    def hess(pts):
        pts = np.asarray(pts, dtype=float)
        return np.zeros(pts.shape[:-1] + (3, 3, 3))

    return ClosedFormField(value, grad, hess)


def map_from_displacement(disp: ClosedFormField) -> ClosedFormField:
    """zeta = y + eta as a closed-form map."""
    eye = np.eye(3)

    def value(pts):
        pts = np.asarray(pts, dtype=float)
        return pts + disp.value(pts)

    def grad(pts):
        return disp.grad(pts) + eye

    hess = disp.hess
    return ClosedFormField(value, grad if disp.grad is not None else None, hess)


def compose_maps(outer: ClosedFormField, inner: ClosedFormField) -> ClosedFormField:
    """Closed form of outer(inner(y)) with chain-rule derivatives."""

    def value(pts):
        return outer.value(inner.value(pts))

    def grad(pts):
        x = inner.value(pts)
        return np.einsum("...ik,...kj->...ij", outer.grad(x), inner.grad(pts))

    def hess(pts):
        x = inner.value(pts)
        gi = inner.grad(pts)
        t1 = np.einsum("...ipq,...pa,...qb->...iab", outer.hess(x), gi, gi)
        t2 = np.einsum("...ip,...pab->...iab", outer.grad(x), inner.hess(pts))
        return t1 + t2

    has_g = outer.grad is not None and inner.grad is not None
    has_h = has_g and outer.hess is not None and inner.hess is not None
    return ClosedFormField(value, grad if has_g else None, hess if has_h else None)


def trig_shear_displacement(component: int, across: int, k_horizontal: float,
                            phase: float, amplitude: float,
                            a: float, b: float, q: int = 1) -> ClosedFormField:
    """Horizontal shear displacement eta = A sin(k*y_across + phase) S(y3) e_c.

    The vertical envelope S vanishes at y3 = a and y3 = b, the displaced
    component does not appear in the argument, so det(I + grad eta) = 1
    identically.  ``component`` and ``across`` must be distinct horizontal
    axes (0 or 1).
    """
    if component not in (0, 1) or across not in (0, 1) or component == across:
        raise ValueError("shear needs two distinct horizontal axes")
    kv = q * np.pi / (b - a)

    def parts(pts):
        pts = np.asarray(pts, dtype=float)
        t = k_horizontal * pts[..., across] + phase
        s = kv * (pts[..., 2] - a)
        return np.sin(t), np.cos(t), np.sin(s), np.cos(s)

    def value(pts):
        st, _, ss, _ = parts(pts)
        out = np.zeros(np.asarray(pts).shape[:-1] + (3,))
        out[..., component] = amplitude * st * ss
        return out

    def grad(pts):
        st, ct, ss, cs = parts(pts)
        out = np.zeros(np.asarray(pts).shape[:-1] + (3, 3))
        out[..., component, across] = amplitude * k_horizontal * ct * ss
        out[..., component, 2] = amplitude * kv * st * cs
        return out

    def hess(pts):
        st, ct, ss, cs = parts(pts)
        out = np.zeros(np.asarray(pts).shape[:-1] + (3, 3, 3))
        out[..., component, across, across] = -amplitude * k_horizontal**2 * st * ss
        out[..., component, across, 2] = amplitude * k_horizontal * kv * ct * cs
        out[..., component, 2, across] = out[..., component, across, 2]
        out[..., component, 2, 2] = -amplitude * kv**2 * st * ss
        return out

    return ClosedFormField(value, grad, hess)


def random_shear_map(domain, rng: np.random.Generator, n_factors: int = 3,
                     amplitude: float = 0.15, max_mode: int = 2) -> ClosedFormField:
    """Random composition of horizontal shears: exactly volume preserving,
    boundary fixing, with closed-form derivatives."""
    zeta = identity_map()
    lengths = (domain.L1, domain.L2)
    for f in range(n_factors):
        comp = f % 2
        across = 1 - comp
        m = int(rng.integers(1, max_mode + 1))
        q = int(rng.integers(1, 3))
        disp = trig_shear_displacement(
            component=comp, across=across,
            k_horizontal=m / lengths[across],
            phase=float(rng.uniform(0.0, 2.0 * np.pi)),
            amplitude=float(rng.uniform(0.3, 1.0)) * amplitude,
            a=domain.a, b=domain.b, q=q)
        zeta = compose_maps(map_from_displacement(disp), zeta)
    return zeta


# ---------------------------------------------------------------------------
# cofactors and flow maps


def cofactor_matrix(F: Array) -> Array:
    """Signed complement minors of a (stack of) 3x3 matrices.

    Satisfies sum_k F[k, i] * out[k, j] = det(F) * delta_ij.
    """
    out = np.empty_like(F)
    out[..., 0, 0] = F[..., 1, 1] * F[..., 2, 2] - F[..., 1, 2] * F[..., 2, 1]
    out[..., 0, 1] = F[..., 1, 2] * F[..., 2, 0] - F[..., 1, 0] * F[..., 2, 2]
    out[..., 0, 2] = F[..., 1, 0] * F[..., 2, 1] - F[..., 1, 1] * F[..., 2, 0]
    out[..., 1, 0] = F[..., 0, 2] * F[..., 2, 1] - F[..., 0, 1] * F[..., 2, 2]
    out[..., 1, 1] = F[..., 0, 0] * F[..., 2, 2] - F[..., 0, 2] * F[..., 2, 0]
    out[..., 1, 2] = F[..., 0, 1] * F[..., 2, 0] - F[..., 0, 0] * F[..., 2, 1]
    out[..., 2, 0] = F[..., 0, 1] * F[..., 1, 2] - F[..., 0, 2] * F[..., 1, 1]
    out[..., 2, 1] = F[..., 0, 2] * F[..., 1, 0] - F[..., 0, 0] * F[..., 1, 2]
    out[..., 2, 2] = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    return out


def determinant_from_cofactor(F: Array, cof: Array) -> Array:
    return np.einsum("...j,...j->...", F[..., 0, :], cof[..., 0, :])


ANALYTIC = "analytic"
FINITE_DIFFERENCE = "finite_difference"


@dataclass(frozen=True)
class FlowMap:
    """Discrete Lagrangian map on a slab grid.

    grad_zeta[..., i, j] = d(zeta_i)/d(y_j); cofactor holds the signed
    complement minors of grad_zeta; jacobian = det(grad_zeta).  Analytic-mode
    maps additionally carry callables evaluating zeta and its derivatives at
    arbitrary points (used by the surface-flux quadrature) and Hessian
    samples (used by the divergence-of-cofactor check).
    """

    grid: Grid3D
    zeta: Array
    eta: Array
    grad_zeta: Array
    cofactor: Array
    jacobian: Array
    derivative_mode: str
    zeta_fn: Callable[[Array], Array] | None = None
    grad_fn: Callable[[Array], Array] | None = None
    hess_fn: Callable[[Array], Array] | None = None
    hess: Array | None = None

    @property
    def is_analytic(self) -> bool:
        return self.derivative_mode == ANALYTIC

    def as_closed_form(self) -> ClosedFormField:
        if not self.is_analytic:
            raise ValueError("finite-difference map has no closed form")
        return ClosedFormField(self.zeta_fn, self.grad_fn, self.hess_fn)

    def position_at(self, pts: Array) -> Array:
        if self.zeta_fn is not None:
            return self.zeta_fn(pts)
        return _trilinear(self.zeta, self.grid, pts)

    def gradient_at(self, pts: Array) -> Array:
        if self.grad_fn is not None:
            return self.grad_fn(pts)
        return _trilinear(self.grad_zeta, self.grid, pts)


def _assemble_flow_map(grid: Grid3D, zeta: Array, grad_zeta: Array, mode: str,
                       zeta_fn=None, grad_fn=None, hess_fn=None, hess=None) -> FlowMap:
    cof = cofactor_matrix(grad_zeta)
    jac = determinant_from_cofactor(grad_zeta, cof)
    if np.min(np.abs(jac)) < 1e-12 or np.min(jac) <= 0.0:
        raise SingularDeformationError(
            f"deformation gradient singular or orientation reversing: min J = {jac.min():.3e}")
    eta = zeta - grid.points()
    return FlowMap(grid=grid, zeta=zeta, eta=eta, grad_zeta=grad_zeta,
                   cofactor=cof, jacobian=jac, derivative_mode=mode,
                   zeta_fn=zeta_fn, grad_fn=grad_fn, hess_fn=hess_fn, hess=hess)


def build_flow_map(eta, grid: Grid3D, mode: str = FINITE_DIFFERENCE) -> FlowMap:
    """Build a flow map zeta = y + eta.

    In finite-difference mode ``eta`` is a VectorField3 and derivatives come
    from centered differences (or the field's analytic gradient samples when
    attached).  In analytic mode ``eta`` is a ClosedFormField displacement
    with grad (and preferably hess) callables.
    """
    pts = grid.points()
    if mode == ANALYTIC:
        if not isinstance(eta, ClosedFormField) or eta.grad is None:
            raise TypeError("analytic mode needs a ClosedFormField displacement with grad")
        zmap = map_from_displacement(eta)
        zeta = zmap.value(pts)
        grad = zmap.grad(pts)
        hess = zmap.hess(pts) if zmap.hess is not None else None
        return _assemble_flow_map(grid, zeta, grad, ANALYTIC,
                                  zeta_fn=zmap.value, grad_fn=zmap.grad,
                                  hess_fn=zmap.hess, hess=hess)
    if mode == FINITE_DIFFERENCE:
        if not isinstance(eta, VectorField3):
            raise TypeError("finite-difference mode needs a VectorField3 displacement")
        zeta = pts + eta.values
        grad = vector_gradient(eta, grid) + np.eye(3)
        return _assemble_flow_map(grid, zeta, grad, FINITE_DIFFERENCE)
    raise ValueError(f"unknown derivative mode {mode!r}")


def build_flow_map_from_closed_map(zmap: ClosedFormField, grid: Grid3D) -> FlowMap:
    """Analytic flow map from a closed-form position map (e.g. a shear composition)."""
    pts = grid.points()
    hess = zmap.hess(pts) if zmap.hess is not None else None
    return _assemble_flow_map(grid, zmap.value(pts), zmap.grad(pts), ANALYTIC,
                              zeta_fn=zmap.value, grad_fn=zmap.grad,
                              hess_fn=zmap.hess, hess=hess)


def kronecker_residual(flow: FlowMap) -> float:
    """max |grad_zeta^T . cofactor - J I| over all nodes."""
    prod = np.einsum("...ki,...kj->...ij", flow.grad_zeta, flow.cofactor)
    prod -= flow.jacobian[..., None, None] * np.eye(3)
    return float(np.max(np.abs(prod)))


_EPS3 = np.zeros((3, 3, 3))
for _i, _j, _k in [(0, 1, 2), (1, 2, 0), (2, 0, 1)]:
    _EPS3[_i, _j, _k] = 1.0
    _EPS3[_i, _k, _j] = -1.0


def piola_residual(flow: FlowMap) -> float:
    """max_i max over nodes of |sum_k d_k cofactor[i, k]|.

    Analytic mode differentiates the minor formula exactly using the stored
    Hessian samples; finite-difference mode differences the nodal cofactors
    (O(h^2)).
    """
    if flow.is_analytic and flow.hess is not None:
        F = flow.grad_zeta
        H = flow.hess
        t1 = np.einsum("ipq,krs,...pkr,...qs->...i", _EPS3, _EPS3, H, F)
        t2 = np.einsum("ipq,krs,...pr,...qks->...i", _EPS3, _EPS3, F, H)
        return float(np.max(np.abs(0.5 * (t1 + t2))))
    from .model import _ddx_bounded, _ddx_periodic
    g = flow.grid
    div = (_ddx_periodic(flow.cofactor[..., :, 0], 0, g.h1)
           + _ddx_periodic(flow.cofactor[..., :, 1], 1, g.h2)
           + _ddx_bounded(flow.cofactor[..., :, 2], 2, g.h3))
    return float(np.max(np.abs(div)))


# ---------------------------------------------------------------------------
# frozen-in magnetic field


def cauchy_magnetic_field(flow: FlowMap, params: PhysicalParams) -> VectorField3:
    """Transported magnetic field B = (M_bar . grad) zeta for a uniform
    initial field: the directional stretch of the map along M_bar."""
    params.require_nonzero_field()
    M = params.M
    values = np.einsum("...ij,j->...i", flow.grad_zeta, M)
    grad = None
    if flow.hess is not None:
        grad = np.einsum("...ijb,j->...ib", flow.hess, M)
    return VectorField3(values, boundary=BOUNDARY_FREE, grad=grad)


def cauchy_magnetic_field_general(flow: FlowMap, B0: VectorField3,
                                  J0: Array, A0: Array) -> VectorField3:
    """General-initial-data transport B = J0 grad(zeta) A0^T B0 / J.

    Reduces to :func:`cauchy_magnetic_field` for B0 = M_bar, J0 = 1, A0 = I.
    """
    if np.min(flow.jacobian) <= 0.0:
        raise SingularDeformationError("nonpositive Jacobian in field transport")
    pulled = np.einsum("...kj,...k->...j", A0, B0.values)
    values = np.einsum("...ij,...j->...i", flow.grad_zeta, pulled)
    values *= (J0 / flow.jacobian)[..., None]
    return VectorField3(values, boundary=BOUNDARY_FREE)


def frozen_in_residual(flow: FlowMap, params: PhysicalParams) -> float:
    """max over nodes of |cofactor^T B - M_bar| (flux-conservation residual;
    equals |J - 1| |M_bar| algebraically)."""
    B = cauchy_magnetic_field(flow, params)
    lhs = np.einsum("...ki,...k->...i", flow.cofactor, B.values)
    return float(np.max(np.abs(lhs - params.M)))


# ---------------------------------------------------------------------------
# parametric surfaces and flux


@dataclass(frozen=True)
class ParamSurface:
    """Regular surface chart over a parameter rectangle with tensor
    Gauss-Legendre quadrature.  ``chart_jac``, when given, returns the two
    tangent vectors stacked as (..., 2, 3); otherwise tangents come from
    central differences in the parameters."""

    chart: Callable[[Array, Array], Array]
    alpha_range: tuple[float, float]
    beta_range: tuple[float, float]
    n_alpha: int = 32
    n_beta: int = 32
    chart_jac: Callable[[Array, Array], Array] | None = None

    def quadrature(self) -> tuple[Array, Array, Array]:
        xa, wa = np.polynomial.legendre.leggauss(self.n_alpha)
        xb, wb = np.polynomial.legendre.leggauss(self.n_beta)
        a0, a1 = self.alpha_range
        b0, b1 = self.beta_range
        A = 0.5 * (a1 - a0) * xa + 0.5 * (a1 + a0)
        B = 0.5 * (b1 - b0) * xb + 0.5 * (b1 + b0)
        W = np.outer(wa, wb) * (0.25 * (a1 - a0) * (b1 - b0))
        Ag, Bg = np.meshgrid(A, B, indexing="ij")
        return Ag, Bg, W

    def tangents(self, Ag: Array, Bg: Array) -> tuple[Array, Array]:
        if self.chart_jac is not None:
            J = self.chart_jac(Ag, Bg)
            return J[..., 0, :], J[..., 1, :]
        da = 1e-6 * max(abs(self.alpha_range[1] - self.alpha_range[0]), 1.0)
        db = 1e-6 * max(abs(self.beta_range[1] - self.beta_range[0]), 1.0)
        ta = (self.chart(Ag + da, Bg) - self.chart(Ag - da, Bg)) / (2 * da)
        tb = (self.chart(Ag, Bg + db) - self.chart(Ag, Bg - db)) / (2 * db)
        return ta, tb

    def reversed(self) -> "ParamSurface":
        """Swap the two parameters (flips the orientation)."""
        jac = None
        if self.chart_jac is not None:
            jac = lambda A, B: self.chart_jac(B, A)[..., ::-1, :]
        return ParamSurface(chart=lambda A, B: self.chart(B, A),
                            alpha_range=self.beta_range, beta_range=self.alpha_range,
                            n_alpha=self.n_beta, n_beta=self.n_alpha, chart_jac=jac)


def axis_aligned_patch(center, normal_axis: int, side: float,
                       n_alpha: int = 32, n_beta: int = 32) -> ParamSurface:
    """Flat square patch of the given side whose chart orientation makes the
    parameter normal point along +e_{normal_axis}."""
    center = np.asarray(center, dtype=float)
    u_axis, v_axis = {2: (0, 1), 0: (1, 2), 1: (2, 0)}[normal_axis]
    eu = np.zeros(3)
    eu[u_axis] = 1.0
    ev = np.zeros(3)
    ev[v_axis] = 1.0

    def chart(A, B):
        A = np.asarray(A, dtype=float)[..., None]
        B = np.asarray(B, dtype=float)[..., None]
        return center + A * eu + B * ev

    def chart_jac(A, B):
        shape = np.broadcast(np.asarray(A), np.asarray(B)).shape
        out = np.empty(shape + (2, 3))
        out[..., 0, :] = eu
        out[..., 1, :] = ev
        return out

    half = 0.5 * side
    return ParamSurface(chart, (-half, half), (-half, half),
                        n_alpha=n_alpha, n_beta=n_beta, chart_jac=chart_jac)


def flux_through_surface(field: Callable[[Array], Array], surface: ParamSurface,
                         flow: FlowMap | None = None) -> float:
    """Oriented flux of ``field`` through the surface (or its image under a
    flow map).

    Without a map: integral of field(f(a, b)) . (df/da x df/db).  With a map
    the surface is transported, tangents become grad(zeta) . df, and the
    field callable is evaluated at the LABEL points f(a, b) -- i.e. pass the
    transported field in its label-space form, which is exactly what
    :func:`cauchy_magnetic_field` produces.
    """
    Ag, Bg, W = surface.quadrature()
    pts = surface.chart(Ag, Bg)
    ta, tb = surface.tangents(Ag, Bg)
    scale = np.linalg.norm(ta, axis=-1) * np.linalg.norm(tb, axis=-1)
    normal0 = np.cross(ta, tb)
    if np.min(np.linalg.norm(normal0, axis=-1)) < 1e-12 * max(np.max(scale), 1e-300):
        raise DegenerateSurfaceError("chart Jacobi matrix rank-deficient at a quadrature node")
    if flow is not None:
        G = flow.gradient_at(pts)
        ta = np.einsum("...ij,...j->...i", G, ta)
        tb = np.einsum("...ij,...j->...i", G, tb)
    normal = np.cross(ta, tb)
    vals = field(pts)
    return float(np.sum(W * np.einsum("...i,...i->...", vals, normal)))


@dataclass(frozen=True)
class SurfaceFluxCheck:
    flux_initial: float
    flux_transported: float
    abs_error: float


@dataclass(frozen=True)
class FluxEquivalenceReport:
    pointwise_residual: float
    surfaces: list[SurfaceFluxCheck]
    patch_reconstruction_residual: float
    patch_size: float

    @property
    def max_flux_error(self) -> float:
        return max((s.abs_error for s in self.surfaces), default=0.0)


def verify_flux_equivalence(flow: FlowMap, params: PhysicalParams,
                            surfaces: list[ParamSurface],
                            probe_points: Array | None = None,
                            patch_size: float = 1e-3) -> FluxEquivalenceReport:
    """Exercise both directions of the flux-conservation equivalence.

    Forward: the pointwise transport relation implies that the flux of the
    transported field through each mapped surface equals the initial flux
    (reported per surface).  Reverse: fluxes through small axis-aligned
    patches, divided by the patch area, reconstruct the components of
    cofactor^T B at sampled interior points; their deviation from M_bar is
    reported (O(patch_size^2) for smooth fields).
    """
    params.require_nonzero_field()
    M = params.M

    def initial_field(pts):
        return np.broadcast_to(M, np.asarray(pts).shape[:-1] + (3,))

    def transported_field(pts):
        return np.einsum("...ij,j->...i", flow.gradient_at(pts), M)

    checks = []
    for s in surfaces:
        f0 = flux_through_surface(initial_field, s)
        ft = flux_through_surface(transported_field, s, flow=flow)
        checks.append(SurfaceFluxCheck(f0, ft, abs(ft - f0)))

    if probe_points is None:
        d = flow.grid.domain
        mid = np.array([np.pi * d.L1, np.pi * d.L2, 0.5 * (d.a + d.b)])
        probe_points = mid[None, :]
    probe_points = np.atleast_2d(np.asarray(probe_points, dtype=float))
    worst = 0.0
    for p in probe_points:
        for axis in range(3):
            patch = axis_aligned_patch(p, axis, patch_size, n_alpha=8, n_beta=8)
            ft = flux_through_surface(transported_field, patch, flow=flow)
            worst = max(worst, abs(ft / patch_size**2 - M[axis]))

    return FluxEquivalenceReport(
        pointwise_residual=frozen_in_residual(flow, params),
        surfaces=checks,
        patch_reconstruction_residual=worst,
        patch_size=patch_size)


# ---------------------------------------------------------------------------
# flows of divergence-free fields


def _trilinear(values: Array, grid: Grid3D, pts: Array) -> Array:
    """Trilinear interpolation of nodal data; periodic wrap horizontally,
    clamped vertically.  ``values`` has shape grid.shape + tail."""
    pts = np.asarray(pts, dtype=float)
    flat = pts.reshape(-1, 3)
    tail = values.shape[3:]

    x1 = flat[:, 0] / grid.h1
    x2 = flat[:, 1] / grid.h2
    x3 = (flat[:, 2] - grid.domain.a) / grid.h3
    i0 = np.floor(x1).astype(int)
    j0 = np.floor(x2).astype(int)
    k0 = np.clip(np.floor(x3).astype(int), 0, grid.n3 - 2)
    f1 = x1 - i0
    f2 = x2 - j0
    f3 = np.clip(x3 - k0, 0.0, 1.0)
    i0 %= grid.n1
    j0 %= grid.n2
    i1 = (i0 + 1) % grid.n1
    j1 = (j0 + 1) % grid.n2
    k1 = k0 + 1

    out = np.zeros((flat.shape[0],) + tail)
    for ii, wi in ((i0, 1.0 - f1), (i1, f1)):
        for jj, wj in ((j0, 1.0 - f2), (j1, f2)):
            for kk, wk in ((k0, 1.0 - f3), (k1, f3)):
                w = (wi * wj * wk).reshape(-1, *([1] * len(tail)))
                out += w * values[ii, jj, kk]
    return out.reshape(pts.shape[:-1] + tail)


def _check_inside(pts3: Array, domain, slack: float):
    lo, hi = domain.a - slack, domain.b + slack
    if np.any(pts3 < lo) or np.any(pts3 > hi):
        raise ValueError("trajectory left the vertical extent: velocity field "
                         "is not tangent/vanishing at the boundary")


def _rk4_closed_form(w: ClosedFormField, pts: Array, T: float, steps: int,
                     domain, with_hess: bool) -> tuple[Array, Array, Array | None]:
    """Integrate dz/dt = w(z) together with the exact variational equations
    for grad and (optionally) hess of the RK4 map."""
    shape = pts.shape[:-1]
    z = pts.reshape(-1, 3).copy()
    F = np.broadcast_to(np.eye(3), z.shape[:-1] + (3, 3)).copy()
    H = np.zeros(z.shape[:-1] + (3, 3, 3)) if with_hess else None
    dt = T / steps
    slack = 1e-9 * (abs(domain.b - domain.a) + 1.0)

    def rhs(state):
        zz, FF, HH = state
        Gw = w.grad(zz)
        dz = w.value(zz)
        dF = Gw @ FF
        dH = None
        if HH is not None:
            Hw = w.hess(zz)
            # dH[i,a,b] = Hw[i,p,q] F[p,a] F[q,b] + Gw[i,p] H[p,a,b]
            u = Hw.transpose(0, 1, 3, 2) @ FF[:, None]        # u[i,q,a]
            t1 = u.transpose(0, 1, 3, 2) @ FF[:, None]        # t1[i,a,b]
            t2 = (Gw @ HH.reshape(-1, 3, 9)).reshape(HH.shape)
            dH = t1 + t2
        return dz, dF, dH

    def axpy(state, c, delta):
        zz, FF, HH = state
        dz, dF, dH = delta
        return (zz + c * dz, FF + c * dF,
                None if HH is None else HH + c * dH)

    for _ in range(steps):
        s0 = (z, F, H)
        k1 = rhs(s0)
        k2 = rhs(axpy(s0, 0.5 * dt, k1))
        k3 = rhs(axpy(s0, 0.5 * dt, k2))
        k4 = rhs(axpy(s0, dt, k3))
        z = z + (dt / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        F = F + (dt / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        if H is not None:
            H = H + (dt / 6.0) * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        _check_inside(z[..., 2], domain, slack)

    return (z.reshape(shape + (3,)),
            F.reshape(shape + (3, 3)),
            None if H is None else H.reshape(shape + (3, 3, 3)))


def flow_from_divfree_field(w, grid: Grid3D, T: float, steps: int,
                            div_tolerance: float = 1e-8,
                            hessian: bool = True) -> FlowMap:
    """Time-T flow map of an autonomous solenoidal velocity field by classical
    4-stage Runge-Kutta.

    A ClosedFormField velocity yields an analytic-mode map whose gradient and
    Hessian are the exact derivatives of the discrete RK4 map (propagated
    through the stages), so |J - 1| is limited only by the time-integration
    error.  Pass hessian=False to skip the second-derivative propagation when
    the divergence-of-cofactor check is not needed.  A sampled VectorField3
    velocity is interpolated trilinearly and yields a finite-difference-mode
    map.
    """
    if steps < 16:
        raise ValueError(f"steps must be >= 16, got {steps}")
    pts = grid.points()

    if isinstance(w, ClosedFormField):
        if w.grad is None or w.hess is None:
            raise TypeError("closed-form velocity needs grad and hess callables")
        div_nodes = np.einsum("...ii->...", w.grad(pts))
        if np.max(np.abs(div_nodes)) > div_tolerance:
            raise ValueError(f"velocity field is not solenoidal: max |div| = "
                             f"{np.max(np.abs(div_nodes)):.3e}")

        def zeta_fn(p):
            return _rk4_closed_form(w, np.asarray(p, dtype=float), T, steps, grid.domain, False)[0]

        def grad_fn(p):
            return _rk4_closed_form(w, np.asarray(p, dtype=float), T, steps, grid.domain, False)[1]

        def hess_fn(p):
            return _rk4_closed_form(w, np.asarray(p, dtype=float), T, steps, grid.domain, True)[2]

        z, F, H = _rk4_closed_form(w, pts, T, steps, grid.domain, hessian)
        return _assemble_flow_map(grid, z, F, ANALYTIC,
                                  zeta_fn=zeta_fn, grad_fn=grad_fn,
                                  hess_fn=hess_fn, hess=H)

    if isinstance(w, VectorField3):
        from .model import divergence
        div_nodes = divergence(w, grid)
        interior = div_nodes[:, :, 1:-1]
        if np.max(np.abs(interior)) > max(div_tolerance, 1e-2):
            raise ValueError("sampled velocity field is far from solenoidal")
        slack = 1e-9 * (abs(grid.domain.b - grid.domain.a) + 1.0)

        def vel(p):
            return _trilinear(w.values, grid, p)

        z = pts.reshape(-1, 3).copy()
        dt = T / steps
        for _ in range(steps):
            k1 = vel(z)
            k2 = vel(z + 0.5 * dt * k1)
            k3 = vel(z + 0.5 * dt * k2)
            k4 = vel(z + dt * k3)
            z = z + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            _check_inside(z[:, 2], grid.domain, slack)
        z = z.reshape(grid.shape + (3,))
        eta = VectorField3(z - pts, boundary=BOUNDARY_FREE)
        grad = vector_gradient(eta, grid) + np.eye(3)
        return _assemble_flow_map(grid, z, grad, FINITE_DIFFERENCE)

    raise TypeError("w must be a ClosedFormField or a VectorField3")


def roundtrip_displacement(w: ClosedFormField, grid: Grid3D, T: float, steps: int) -> float:
    """max |forward-then-backward displacement|: integrates the flow of w for
    time T, then the flow of -w for time T from the arrival points."""
    fwd = flow_from_divfree_field(w, grid, T, steps)
    back = flow_from_divfree_field(w.scaled(-1.0), grid, T, steps)
    comp = compose_maps(back.as_closed_form(), fwd.as_closed_form())
    pts = grid.points()
    return float(np.max(np.abs(comp.value(pts) - pts)))


# ---------------------------------------------------------------------------
# serialization: flat CSV per field plus a JSON sidecar


_CSV_HEADER = ["i", "j", "k", "y1", "y2", "y3", "v1", "v2", "v3"]


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(".json")


def save_field_csv(field: VectorField3, grid: Grid3D, path) -> Path:
    """Write a field as CSV rows i,j,k,y1,y2,y3,v1,v2,v3 (17 significant
    digits, LF endings) plus a JSON sidecar with the grid metadata.
    Round-trips bit-exactly through :func:`load_field_csv`."""
    path = Path(path)
    pts = grid.points()
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_CSV_HEADER)
        for i in range(grid.n1):
            for j in range(grid.n2):
                for k in range(grid.n3):
                    row = [i, j, k]
                    row += [f"{x:.17g}" for x in pts[i, j, k]]
                    row += [f"{x:.17g}" for x in field.values[i, j, k]]
                    writer.writerow(row)
    meta = {
        "n1": grid.n1, "n2": grid.n2, "n3": grid.n3,
        "a": grid.domain.a, "b": grid.domain.b,
        "L1": grid.domain.L1, "L2": grid.domain.L2,
        "interface": grid.domain.interface,
        "boundary": field.boundary,
    }
    with open(_sidecar_path(path), "w", newline="\n") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_field_csv(path) -> tuple[VectorField3, Grid3D]:
    path = Path(path)
    with open(_sidecar_path(path)) as fh:
        meta = json.load(fh)
    from .model import SlabDomain, make_uniform_grid
    domain = SlabDomain(a=meta["a"], b=meta["b"], L1=meta["L1"], L2=meta["L2"],
                        interface=meta["interface"])
    grid = make_uniform_grid(domain, meta["n1"], meta["n2"], meta["n3"])
    values = np.zeros(grid.shape + (3,))
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != _CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header}")
        for row in reader:
            i, j, k = int(row[0]), int(row[1]), int(row[2])
            values[i, j, k] = [float(row[6]), float(row[7]), float(row[8])]
    return VectorField3(values, boundary=meta["boundary"]), grid
