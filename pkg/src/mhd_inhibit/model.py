"""Physical parameters, slab domains, 1D profiles, tensor grids and grid fields.

Everything here is immutable value data; operations are pure functions.  The
computational domain is a horizontally periodic slab: periodic with periods
2*pi*L1 and 2*pi*L2 in the first two directions, bounded in the third.
Volume integrals use the trapezoid rule (which reduces to the rectangle rule
in the periodic directions and is exact there for band-limited fields).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import NDArray

Array = NDArray[np.float64]

#: boundary flags for fields on a slab grid
BOUNDARY_VANISHING = "vanishing"    # exactly zero on the top/bottom node layers
BOUNDARY_PERIODIC3 = "periodic3"    # periodic in the vertical direction as well
BOUNDARY_FREE = "free"              # no constraint on the boundary layers


@dataclass(frozen=True)
class PhysicalParams:
    """Physical constants of the slab problem.

    g        -- gravitational constant (> 0)
    lam      -- vacuum permeability divided by 4*pi (> 0)
    mu       -- shear viscosity (>= 0)
    M_bar    -- impressed uniform magnetic field, 3-vector
    alpha_beta -- product of volume-expansion coefficient and reference
                  density, used only by the convection threshold (> 0 there)
    """

    g: float
    lam: float
    mu: float
    M_bar: tuple[float, float, float]
    alpha_beta: float | None = None

    def __post_init__(self):
        if not self.g > 0:
            raise ValueError(f"g must be positive, got {self.g}")
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if self.mu < 0:
            raise ValueError(f"mu must be nonnegative, got {self.mu}")
        if len(self.M_bar) != 3:
            raise ValueError("M_bar must be a 3-vector")
        object.__setattr__(self, "M_bar", tuple(float(c) for c in self.M_bar))
        if self.alpha_beta is not None and self.alpha_beta < 0:
            raise ValueError("alpha_beta must be nonnegative")

    @property
    def M(self) -> Array:
        return np.asarray(self.M_bar, dtype=float)

    def require_nonzero_field(self):
        if not np.any(self.M != 0.0):
            raise ValueError("magnetic-energy operation requires a nonzero impressed field")


@dataclass(frozen=True)
class SlabDomain:
    """Vertical extent (a, b) with horizontal periods 2*pi*L1 and 2*pi*L2.

    For a one-layer slab take a = 0, b = h.  For a two-layer slab take
    a = -l, b = h and set ``interface`` to the rest height of the internal
    surface (normally 0).
    """

    a: float
    b: float
    L1: float
    L2: float
    interface: float | None = None

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"need a < b, got a={self.a}, b={self.b}")
        if self.L1 <= 0 or self.L2 <= 0:
            raise ValueError("period lengths L1, L2 must be positive")
        if self.interface is not None and not (self.a < self.interface < self.b):
            raise ValueError("interface must lie strictly inside (a, b)")

    @property
    def height(self) -> float:
        return self.b - self.a

    @property
    def cell_area(self) -> float:
        """Horizontal cell measure 4*pi^2*L1*L2."""
        return 4.0 * np.pi**2 * self.L1 * self.L2

    @property
    def cell_volume(self) -> float:
        return self.cell_area * self.height


# ---------------------------------------------------------------------------
# 1D profiles


def _centered_derivative(y: Array, values: Array) -> Array:
    return np.gradient(values, y, edge_order=2)


@dataclass(frozen=True)
class Profile1D:
    """Density or temperature profile sampled on a uniform 1D grid.

    Closed-form profiles also carry callables for the profile itself, its
    first two derivatives and an antiderivative; those enable the exact
    potential-energy evaluations.  Sampled profiles fall back to centered
    differences and linear interpolation.
    """

    y: Array
    values: Array
    derivative: Array
    kind: str  # "density" | "temperature"
    fn: Callable[[Array], Array] | None = None
    dfn: Callable[[Array], Array] | None = None
    d2fn: Callable[[Array], Array] | None = None
    antiderivative: Callable[[Array], Array] | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        der = np.asarray(self.derivative, dtype=float)
        if y.ndim != 1 or y.size < 5:
            raise ValueError("profile grid needs at least 3 interior nodes")
        steps = np.diff(y)
        if not np.allclose(steps, steps[0], rtol=1e-12, atol=1e-12):
            raise ValueError("profile grid must be uniform")
        if vals.shape != y.shape or der.shape != y.shape:
            raise ValueError("values/derivative must match the grid shape")
        if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(der))):
            raise ValueError("profile values must be finite")
        if self.kind not in ("density", "temperature"):
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if self.kind == "density" and vals.min() <= 0.0:
            raise ValueError("density profile must be strictly positive")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "derivative", der)

    @property
    def interval(self) -> tuple[float, float]:
        return float(self.y[0]), float(self.y[-1])

    @property
    def has_closed_form(self) -> bool:
        return self.fn is not None

    def value_at(self, y: Array) -> Array:
        if self.fn is not None:
            return np.asarray(self.fn(np.asarray(y, dtype=float)), dtype=float)
        return np.interp(y, self.y, self.values)

    def derivative_at(self, y: Array) -> Array:
        if self.dfn is not None:
            return np.asarray(self.dfn(np.asarray(y, dtype=float)), dtype=float)
        return np.interp(y, self.y, self.derivative)

    def second_derivative_at(self, y: Array) -> Array:
        if self.d2fn is not None:
            return np.asarray(self.d2fn(np.asarray(y, dtype=float)), dtype=float)
        d2 = _centered_derivative(self.y, self.derivative)
        return np.interp(y, self.y, d2)

    def antiderivative_at(self, y: Array) -> Array:
        """Antiderivative R with R' equal to the profile."""
        if self.antiderivative is not None:
            return np.asarray(self.antiderivative(np.asarray(y, dtype=float)), dtype=float)
        # cumulative trapezoid on the sample grid, linear interpolation between
        h = self.y[1] - self.y[0]
        cum = np.concatenate(([0.0], np.cumsum(0.5 * h * (self.values[1:] + self.values[:-1]))))
        return np.interp(y, self.y, cum)

    @staticmethod
    def from_callables(a: float, b: float, n: int, fn, dfn, kind: str,
                       d2fn=None, antiderivative=None) -> "Profile1D":
        y = np.linspace(a, b, n)
        return Profile1D(y=y, values=fn(y), derivative=dfn(y), kind=kind,
                         fn=fn, dfn=dfn, d2fn=d2fn, antiderivative=antiderivative)

    @staticmethod
    def from_samples(y: Array, values: Array, kind: str, derivative: Array | None = None) -> "Profile1D":
        y = np.asarray(y, dtype=float)
        values = np.asarray(values, dtype=float)
        if derivative is None:
            derivative = _centered_derivative(y, values)
        return Profile1D(y=y, values=values, derivative=np.asarray(derivative, dtype=float), kind=kind)


def named_profile(name: str, coefficients: list[float], a: float, b: float,
                  n: int = 257, kind: str = "density") -> Profile1D:
    """Closed-form profile registry used by the CLI configuration.

    linear      [c0, c1]      -> c0 + c1*y
    exponential [c0, c1]      -> c0 * exp(c1*y)
    sine        [c0, c1, c2]  -> c0 + c1 * sin(c2*y)
    """
    c = [float(x) for x in coefficients]
    if name == "linear":
        if len(c) != 2:
            raise ValueError("linear profile takes coefficients [c0, c1]")
        c0, c1 = c
        return Profile1D.from_callables(
            a, b, n,
            fn=lambda y: c0 + c1 * y,
            dfn=lambda y: np.full_like(np.asarray(y, dtype=float), c1),
            d2fn=lambda y: np.zeros_like(np.asarray(y, dtype=float)),
            antiderivative=lambda y: c0 * y + 0.5 * c1 * y**2,
            kind=kind)
    if name == "exponential":
        if len(c) != 2 or c[1] == 0.0:
            raise ValueError("exponential profile takes coefficients [c0, c1] with c1 != 0")
        c0, c1 = c
        return Profile1D.from_callables(
            a, b, n,
            fn=lambda y: c0 * np.exp(c1 * y),
            dfn=lambda y: c0 * c1 * np.exp(c1 * y),
            d2fn=lambda y: c0 * c1**2 * np.exp(c1 * y),
            antiderivative=lambda y: (c0 / c1) * np.exp(c1 * y),
            kind=kind)
    if name == "sine":
        if len(c) != 3 or c[2] == 0.0:
            raise ValueError("sine profile takes coefficients [c0, c1, c2] with c2 != 0")
        c0, c1, c2 = c
        return Profile1D.from_callables(
            a, b, n,
            fn=lambda y: c0 + c1 * np.sin(c2 * y),
            dfn=lambda y: c1 * c2 * np.cos(c2 * y),
            d2fn=lambda y: -c1 * c2**2 * np.sin(c2 * y),
            antiderivative=lambda y: c0 * y - (c1 / c2) * np.cos(c2 * y),
            kind=kind)
    raise ValueError(f"unknown profile name {name!r}")


# ---------------------------------------------------------------------------
# 3D tensor grid and fields


@dataclass(frozen=True)
class Grid3D:
    """Uniform tensor grid: periodic in directions 1 and 2, bounded in 3."""

    domain: SlabDomain
    n1: int
    n2: int
    n3: int

    @property
    def h1(self) -> float:
        return 2.0 * np.pi * self.domain.L1 / self.n1

    @property
    def h2(self) -> float:
        return 2.0 * np.pi * self.domain.L2 / self.n2

    @property
    def h3(self) -> float:
        return (self.domain.b - self.domain.a) / (self.n3 - 1)

    @property
    def y1(self) -> Array:
        return self.h1 * np.arange(self.n1)

    @property
    def y2(self) -> Array:
        return self.h2 * np.arange(self.n2)

    @property
    def y3(self) -> Array:
        return np.linspace(self.domain.a, self.domain.b, self.n3)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n1, self.n2, self.n3)

    def meshgrid(self) -> tuple[Array, Array, Array]:
        return np.meshgrid(self.y1, self.y2, self.y3, indexing="ij")

    def points(self) -> Array:
        """All nodes as an array of shape (n1, n2, n3, 3)."""
        g1, g2, g3 = self.meshgrid()
        return np.stack([g1, g2, g3], axis=-1)

    def interface_index(self) -> int:
        """Vertical index of the interface node; the interface must sit on the grid."""
        if self.domain.interface is None:
            raise ValueError("domain has no interface")
        k = (self.domain.interface - self.domain.a) / self.h3
        ki = int(round(k))
        if abs(k - ki) > 1e-9:
            raise ValueError("interface does not lie on a grid node; adjust n3")
        return ki

    def vertical_weights(self) -> Array:
        w = np.full(self.n3, self.h3)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w


def make_uniform_grid(domain: SlabDomain, n1: int, n2: int, n3: int) -> Grid3D:
    """Build a uniform grid; rejects node counts too small to resolve anything."""
    if n1 < 4 or n2 < 4:
        raise ValueError(f"horizontal node counts must be >= 4, got ({n1}, {n2})")
    if n3 < 8:
        raise ValueError(f"vertical node count must be >= 8, got {n3}")
    return Grid3D(domain=domain, n1=int(n1), n2=int(n2), n3=int(n3))


@dataclass(frozen=True)
class VectorField3:
    """Vector field sampled on a Grid3D, components stacked on the last axis.

    ``grad`` optionally carries analytic derivative samples with
    grad[..., i, j] = d(values_i)/d(y_j); operations prefer those over the
    finite-difference fallback when present.
    """

    values: Array  # (n1, n2, n3, 3)
    boundary: str = BOUNDARY_FREE
    grad: Array | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 4 or v.shape[-1] != 3:
            raise ValueError("values must have shape (n1, n2, n3, 3)")
        object.__setattr__(self, "values", v)
        if self.boundary not in (BOUNDARY_VANISHING, BOUNDARY_PERIODIC3, BOUNDARY_FREE):
            raise ValueError(f"unknown boundary flag {self.boundary!r}")
        if self.boundary == BOUNDARY_VANISHING:
            top_bottom = max(np.abs(v[:, :, 0, :]).max(), np.abs(v[:, :, -1, :]).max())
            if top_bottom != 0.0:
                raise ValueError("field marked boundary-vanishing has nonzero boundary layers")
        if self.grad is not None:
            g = np.asarray(self.grad, dtype=float)
            if g.shape != v.shape + (3,):
                raise ValueError("grad must have shape (n1, n2, n3, 3, 3)")
            object.__setattr__(self, "grad", g)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape[:3]

    def component(self, i: int) -> Array:
        return self.values[..., i]


def zero_field(grid: Grid3D, boundary: str = BOUNDARY_VANISHING) -> VectorField3:
    return VectorField3(np.zeros(grid.shape + (3,)), boundary=boundary)


# ---------------------------------------------------------------------------
# discrete calculus on the grid


def _ddx_periodic(a: Array, axis: int, h: float) -> Array:
    return (np.roll(a, -1, axis=axis) - np.roll(a, 1, axis=axis)) / (2.0 * h)


def _ddx_bounded(a: Array, axis: int, h: float) -> Array:
    """Centered differences inside, one-sided second order at the two ends."""
    out = np.empty_like(a)
    s = [slice(None)] * a.ndim

    def at(idx):
        s2 = list(s)
        s2[axis] = idx
        return tuple(s2)

    out[at(slice(1, -1))] = (a[at(slice(2, None))] - a[at(slice(0, -2))]) / (2.0 * h)
    out[at(0)] = (-3.0 * a[at(0)] + 4.0 * a[at(1)] - a[at(2)]) / (2.0 * h)
    out[at(-1)] = (3.0 * a[at(-1)] - 4.0 * a[at(-2)] + a[at(-3)]) / (2.0 * h)
    return out


def scalar_gradient(values: Array, grid: Grid3D) -> Array:
    """Gradient of a scalar grid function, shape (..., 3)."""
    return np.stack([
        _ddx_periodic(values, 0, grid.h1),
        _ddx_periodic(values, 1, grid.h2),
        _ddx_bounded(values, 2, grid.h3),
    ], axis=-1)


def vector_gradient(field: VectorField3, grid: Grid3D) -> Array:
    """Return grad[..., i, j] = d(field_i)/d(y_j); prefers analytic samples."""
    if field.grad is not None:
        return field.grad
    return np.stack([scalar_gradient(field.values[..., i], grid) for i in range(3)], axis=-2)


def divergence(field: VectorField3, grid: Grid3D) -> Array:
    """Centered-difference divergence; periodic wrap horizontally, one-sided
    at the vertical boundaries."""
    v = field.values
    return (_ddx_periodic(v[..., 0], 0, grid.h1)
            + _ddx_periodic(v[..., 1], 1, grid.h2)
            + _ddx_bounded(v[..., 2], 2, grid.h3))


def volume_integral(values: Array, grid: Grid3D) -> float:
    """Trapezoid-rule integral over one periodic cell.

    Exact for the constant field (gives the cell volume) and for horizontal
    trig polynomials below the grid Nyquist wavenumber.
    """
    w3 = grid.vertical_weights()
    return float(np.sum(values * w3) * grid.h1 * grid.h2)


def horizontal_integral(values2d: Array, grid: Grid3D) -> float:
    """Rectangle-rule integral of a horizontal slice over one periodic cell."""
    return float(np.sum(values2d) * grid.h1 * grid.h2)


def l2_norm_sq(field: VectorField3, grid: Grid3D) -> float:
    return volume_integral(np.sum(field.values**2, axis=-1), grid)
