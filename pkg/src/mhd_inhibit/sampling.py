"""Seeded random closed-form test fields on the slab.

All generators return band-limited trigonometric sums with exact derivative
callables, so sampled fields can carry analytic gradients and flows of the
solenoidal fields can propagate exact variational derivatives.  Vertical
envelopes vanish at the slab boundaries; the solenoidal construction uses a
vector potential whose envelope vanishes to second order so the curl is
boundary-vanishing as well.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kinematics import ClosedFormField
from .model import (
    BOUNDARY_VANISHING,
    Grid3D,
    SlabDomain,
    VectorField3,
)


@dataclass(frozen=True)
class _TrigSum2D:
    """sum_m amp_m * sin(k1_m y1 + k2_m y2 + phase_m).

    Derivative contractions reuse precomputed sin/cos of the mode arguments
    (one trig evaluation per batch of points, arbitrary derivative order).
    """

    amps: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    phases: np.ndarray

    def trigs(self, pts):
        arg = (pts[..., 0, None] * self.k1 + pts[..., 1, None] * self.k2
               + self.phases)
        return np.sin(arg), np.cos(arg)

    def k(self, axis: int):
        return (self.k1, self.k2)[axis]

    def val(self, sin_arg):
        return sin_arg @ self.amps

    def d(self, cos_arg, axis: int):
        return cos_arg @ (self.amps * self.k(axis))

    def dd(self, sin_arg, a: int, b: int):
        return -(sin_arg @ (self.amps * self.k(a) * self.k(b)))

    def d3(self, cos_arg, a: int, b: int, c: int):
        return -(cos_arg @ (self.amps * self.k(a) * self.k(b) * self.k(c)))


def _random_trig_sum(domain: SlabDomain, rng: np.random.Generator,
                     n_modes: int, max_mode: int, amplitude: float) -> _TrigSum2D:
    m1 = rng.integers(-max_mode, max_mode + 1, size=n_modes)
    m2 = rng.integers(-max_mode, max_mode + 1, size=n_modes)
    keep = (m1 != 0) | (m2 != 0)
    if not np.any(keep):
        m1[0], keep[0] = 1, True
    m1, m2 = m1[keep], m2[keep]
    amps = amplitude * rng.uniform(0.3, 1.0, size=m1.size) / m1.size
    phases = rng.uniform(0.0, 2.0 * np.pi, size=m1.size)
    return _TrigSum2D(amps=amps, k1=m1 / domain.L1, k2=m2 / domain.L2, phases=phases)


def _sin_envelope(domain: SlabDomain, q: int):
    """sin(q pi (y3-a)/(b-a)) and its first two derivatives."""
    k = q * np.pi / (domain.b - domain.a)

    def s(y3):
        return np.sin(k * (y3 - domain.a))

    def s1(y3):
        return k * np.cos(k * (y3 - domain.a))

    def s2(y3):
        return -k * k * np.sin(k * (y3 - domain.a))

    return s, s1, s2


def random_band_limited_field(domain: SlabDomain, rng: np.random.Generator,
                              n_modes: int = 4, max_mode: int = 2,
                              vertical_modes: int = 2,
                              amplitude: float = 1.0) -> ClosedFormField:
    """Random boundary-vanishing field: each component is a horizontal trig
    sum times a low-mode vertical sine envelope.  Not solenoidal in general;
    used for stability certificates and inequality sweeps."""
    comps = []
    for _ in range(3):
        q = int(rng.integers(1, vertical_modes + 1))
        comps.append((_random_trig_sum(domain, rng, n_modes, max_mode, amplitude),
                      _sin_envelope(domain, q)))

    def value(pts):
        pts = np.asarray(pts, dtype=float)
        out = np.empty(pts.shape[:-1] + (3,))
        for c, (hsum, (s, _, _)) in enumerate(comps):
            sin_a, _ = hsum.trigs(pts)
            out[..., c] = hsum.val(sin_a) * s(pts[..., 2])
        return out

    def grad(pts):
        pts = np.asarray(pts, dtype=float)
        out = np.empty(pts.shape[:-1] + (3, 3))
        for c, (hsum, (s, s1, _)) in enumerate(comps):
            sin_a, cos_a = hsum.trigs(pts)
            sv = s(pts[..., 2])
            out[..., c, 0] = hsum.d(cos_a, 0) * sv
            out[..., c, 1] = hsum.d(cos_a, 1) * sv
            out[..., c, 2] = hsum.val(sin_a) * s1(pts[..., 2])
        return out

    return ClosedFormField(value, grad, None)


def random_solenoidal_field(domain: SlabDomain, rng: np.random.Generator,
                            n_modes: int = 3, max_mode: int = 2,
                            amplitude: float = 1.0) -> ClosedFormField:
    """Random exactly divergence-free boundary-vanishing velocity field.

    Built as the curl of a horizontal vector potential (a1, a2, 0) * S(y3)
    with S = sin^2(pi (y3-a)/(b-a)):

        w = (-a2 S', a1 S', (d1 a2 - d2 a1) S).

    S and S' vanish at both ends, so every component of w does.  Carries
    exact first and second derivatives for variational flow propagation.
    """
    a1 = _random_trig_sum(domain, rng, n_modes, max_mode, amplitude)
    a2 = _random_trig_sum(domain, rng, n_modes, max_mode, amplitude)
    k = np.pi / (domain.b - domain.a)

    def S(y3, order: int):
        s = y3 - domain.a
        if order == 0:
            return np.sin(k * s) ** 2
        if order == 1:
            return k * np.sin(2.0 * k * s)
        if order == 2:
            return 2.0 * k * k * np.cos(2.0 * k * s)
        return -4.0 * k**3 * np.sin(2.0 * k * s)

    def value(pts):
        pts = np.asarray(pts, dtype=float)
        y3 = pts[..., 2]
        s1a, c1a = a1.trigs(pts)
        s2a, c2a = a2.trigs(pts)
        out = np.empty(pts.shape[:-1] + (3,))
        out[..., 0] = -a2.val(s2a) * S(y3, 1)
        out[..., 1] = a1.val(s1a) * S(y3, 1)
        out[..., 2] = (a2.d(c2a, 0) - a1.d(c1a, 1)) * S(y3, 0)
        return out

    def grad(pts):
        pts = np.asarray(pts, dtype=float)
        y3 = pts[..., 2]
        s1a, c1a = a1.trigs(pts)
        s2a, c2a = a2.trigs(pts)
        out = np.empty(pts.shape[:-1] + (3, 3))
        out[..., 0, 0] = -a2.d(c2a, 0) * S(y3, 1)
        out[..., 0, 1] = -a2.d(c2a, 1) * S(y3, 1)
        out[..., 0, 2] = -a2.val(s2a) * S(y3, 2)
        out[..., 1, 0] = a1.d(c1a, 0) * S(y3, 1)
        out[..., 1, 1] = a1.d(c1a, 1) * S(y3, 1)
        out[..., 1, 2] = a1.val(s1a) * S(y3, 2)
        out[..., 2, 0] = (a2.dd(s2a, 0, 0) - a1.dd(s1a, 1, 0)) * S(y3, 0)
        out[..., 2, 1] = (a2.dd(s2a, 0, 1) - a1.dd(s1a, 1, 1)) * S(y3, 0)
        out[..., 2, 2] = (a2.d(c2a, 0) - a1.d(c1a, 1)) * S(y3, 1)
        return out

    def hess(pts):
        pts = np.asarray(pts, dtype=float)
        y3 = pts[..., 2]
        s1a, c1a = a1.trigs(pts)
        s2a, c2a = a2.trigs(pts)
        out = np.empty(pts.shape[:-1] + (3, 3, 3))
        for sign, hsum, sin_a, cos_a, c in ((-1.0, a2, s2a, c2a, 0),
                                            (1.0, a1, s1a, c1a, 1)):
            for aa in range(2):
                for bb in range(2):
                    out[..., c, aa, bb] = sign * hsum.dd(sin_a, aa, bb) * S(y3, 1)
                out[..., c, aa, 2] = sign * hsum.d(cos_a, aa) * S(y3, 2)
                out[..., c, 2, aa] = out[..., c, aa, 2]
            out[..., c, 2, 2] = sign * hsum.val(sin_a) * S(y3, 3)
        # third component: factor f = d1 a2 - d2 a1 and its derivatives
        f = a2.d(c2a, 0) - a1.d(c1a, 1)
        f1 = a2.dd(s2a, 0, 0) - a1.dd(s1a, 1, 0)
        f2 = a2.dd(s2a, 0, 1) - a1.dd(s1a, 1, 1)
        out[..., 2, 0, 0] = (a2.d3(c2a, 0, 0, 0) - a1.d3(c1a, 1, 0, 0)) * S(y3, 0)
        out[..., 2, 0, 1] = (a2.d3(c2a, 0, 0, 1) - a1.d3(c1a, 1, 0, 1)) * S(y3, 0)
        out[..., 2, 1, 0] = out[..., 2, 0, 1]
        out[..., 2, 1, 1] = (a2.d3(c2a, 0, 1, 1) - a1.d3(c1a, 1, 1, 1)) * S(y3, 0)
        out[..., 2, 0, 2] = f1 * S(y3, 1)
        out[..., 2, 2, 0] = out[..., 2, 0, 2]
        out[..., 2, 1, 2] = f2 * S(y3, 1)
        out[..., 2, 2, 1] = out[..., 2, 1, 2]
        out[..., 2, 2, 2] = f * S(y3, 2)
        return out

    return ClosedFormField(value, grad, hess)


def sample_field(cf: ClosedFormField, grid: Grid3D,
                 boundary: str = BOUNDARY_VANISHING,
                 force_boundary_zero: bool = True) -> VectorField3:
    """Sample a closed-form field (and its gradient when available) on the
    grid.  Boundary rows of generators vanish only to rounding; they are
    snapped to exact zeros so the vanishing flag stays honest."""
    pts = grid.points()
    values = cf.value(pts)
    grad = cf.grad(pts) if cf.grad is not None else None
    if force_boundary_zero and boundary == BOUNDARY_VANISHING:
        values[:, :, 0, :] = 0.0
        values[:, :, -1, :] = 0.0
    return VectorField3(values, boundary=boundary, grad=grad)
