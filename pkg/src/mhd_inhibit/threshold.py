"""Critical impressed-field strengths from 1D Rayleigh-quotient eigenproblems.

The 3D variational threshold over divergence-free fields reduces to a 1D
supremum

    gamma = sup over psi in H^1_0(a, b) of  int w(y) psi^2 / int (psi')^2,

with weight w the density-profile derivative (or its convection analogue),
and the critical field strength is m = sqrt(max(0, (g/lam) * gamma)).  The
1D problem is discretized with a second-order tridiagonal stiffness matrix
and a lumped diagonal weight matrix; the largest pencil eigenvalue is found
by a shift-free Lanczos iteration on the Cholesky-transformed operator (a
dense solve for small problems, which also handles degenerate clusters).

The two-layer (piecewise-constant density) threshold has a closed form, with
an explicit piecewise-linear maximizer; it is reproduced here exactly along
with a quotient evaluator used to certify maximality.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .model import Array, PhysicalParams, Profile1D, SlabDomain

_DENSE_CUTOFF = 700


@dataclass(frozen=True)
class ThresholdResult:
    """Threshold value plus the discrete maximizer and solver metadata.

    psi0 is sampled on the full grid ``y`` (endpoint values zero) and
    normalized so its discrete derivative has unit L2 norm.
    """

    m: float
    gamma: float
    psi0: Array
    y: Array
    n_grid: int
    converged: bool
    achieved_quotient: float
    richardson_estimate: float | None = None

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "gamma": self.gamma,
            "n_grid": self.n_grid,
            "converged": self.converged,
            "achieved_quotient": self.achieved_quotient,
            "richardson": self.richardson_estimate,
        }


def _sign_changes(v: Array) -> int:
    s = np.sign(v[np.abs(v) > 1e-12 * max(np.abs(v).max(), 1e-300)])
    return int(np.sum(s[1:] != s[:-1]))


def _pencil_max_eig(weights: Array, h: float) -> tuple[float, Array, bool]:
    """Largest eigenvalue of W v = gamma K v with W = h*diag(weights) and
    K = tridiag(-1, 2, -1)/h, plus its eigenvector (fewest sign changes on
    numerically degenerate clusters) and a convergence flag."""
    m = weights.size
    if m < 2:
        raise ValueError("need at least 2 interior nodes")

    if m <= _DENSE_CUTOFF:
        K = (np.diag(np.full(m, 2.0)) - np.diag(np.ones(m - 1), 1)
             - np.diag(np.ones(m - 1), -1)) / h
        W = np.diag(h * weights)
        vals, vecs = scipy.linalg.eigh(W, K)
        order = np.argsort(vals)[::-1]
        vals, vecs = vals[order], vecs[:, order]
        gamma = float(vals[0])
        tol = 1e-10 * max(1.0, abs(gamma))
        cluster = [vecs[:, j] for j in range(len(vals)) if vals[j] >= gamma - tol]
        best = min(cluster, key=_sign_changes)
        return gamma, best, True

    # banded Cholesky of K, Lanczos on the transformed operator
    ab = np.zeros((2, m))
    ab[0, 1:] = -1.0 / h
    ab[1, :] = 2.0 / h
    u = scipy.linalg.cholesky_banded(ab, lower=False)  # K = U^T U, U upper bidiagonal
    upper = np.zeros((2, m))
    upper[0, 1:] = u[0, 1:]
    upper[1, :] = u[1, :]
    lower = np.zeros((2, m))
    lower[0, :] = u[1, :]
    lower[1, :-1] = u[0, 1:]
    hw = h * weights

    def matvec(x):
        t = scipy.linalg.solve_banded((0, 1), upper, x)
        t *= hw
        return scipy.linalg.solve_banded((1, 0), lower, t)

    op = scipy.sparse.linalg.LinearOperator((m, m), matvec=matvec, dtype=float)
    v0 = np.full(m, 1.0 / np.sqrt(m))
    k = min(4, m - 1)
    try:
        vals, vecs = scipy.sparse.linalg.eigsh(op, k=k, which="LA", v0=v0, tol=0)
        ok = True
    except scipy.sparse.linalg.ArpackNoConvergence as exc:
        vals, vecs = exc.eigenvalues, exc.eigenvectors
        ok = vals.size > 0
        if not ok:
            raise
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    gamma = float(vals[0])
    tol = 1e-10 * max(1.0, abs(gamma))
    cluster = []
    for j in range(len(vals)):
        if vals[j] >= gamma - tol:
            cluster.append(scipy.linalg.solve_banded((0, 1), upper, vecs[:, j]))
    best = min(cluster, key=_sign_changes)
    return gamma, best, ok


def _solve_1d(weight_values: Array, a: float, b: float, n: int):
    h = (b - a) / (n - 1)
    gamma, v, ok = _pencil_max_eig(weight_values[1:-1], h)
    psi = np.zeros(n)
    psi[1:-1] = v
    # normalize the discrete derivative energy to 1, fix the sign
    dpsi_sq = np.sum(np.diff(psi) ** 2) / h
    psi /= np.sqrt(dpsi_sq)
    if psi[np.argmax(np.abs(psi))] < 0:
        psi = -psi
    quotient = float(np.sum(h * weight_values[1:-1] * psi[1:-1] ** 2)
                     / (np.sum(np.diff(psi) ** 2) / h))
    return gamma, psi, quotient, ok


def threshold_1d(weight, interval: tuple[float, float], params: PhysicalParams,
                 n: int, richardson: bool = False) -> ThresholdResult:
    """Solve the 1D weighted Rayleigh-quotient maximization.

    ``weight`` is either a callable on the interval or an array of n nodal
    values.  If the weight is nonpositive everywhere the supremum is
    nonpositive and the threshold is m = 0: no stratification-driven
    instability exists, so no field strength is needed to suppress it.
    """
    if n < 64:
        raise ValueError(f"n must be >= 64, got {n}")
    a, b = float(interval[0]), float(interval[1])
    if not a < b:
        raise ValueError("empty interval")
    y = np.linspace(a, b, n)
    w = np.asarray(weight(y), dtype=float) if callable(weight) else np.asarray(weight, dtype=float)
    if w.shape != y.shape:
        raise ValueError("weight samples must match the grid")
    if not np.all(np.isfinite(w)):
        raise ValueError("weight values must be finite")

    gamma, psi, quotient, ok = _solve_1d(w, a, b, n)
    converged = ok and abs(quotient - gamma) <= 1e-9 * max(1.0, abs(gamma))

    estimate = None
    if richardson:
        if n % 2 == 1:
            nc = (n + 1) // 2
            wc = w[::2]
        else:
            nc = n // 2
            wc = (weight(np.linspace(a, b, nc)) if callable(weight)
                  else np.interp(np.linspace(a, b, nc), y, w))
        gamma_c, _, _, _ = _solve_1d(np.asarray(wc, dtype=float), a, b, nc)
        r = ((nc - 1) / (n - 1)) ** -2
        estimate = float(gamma + (gamma - gamma_c) / (r - 1.0))

    m = float(np.sqrt(max(0.0, params.g / params.lam * gamma)))
    return ThresholdResult(m=m, gamma=float(gamma), psi0=psi, y=y, n_grid=n,
                           converged=converged, achieved_quotient=quotient,
                           richardson_estimate=estimate)


def threshold_rt(profile: Profile1D, domain: SlabDomain, params: PhysicalParams,
                 n: int = 1001, richardson: bool = False) -> ThresholdResult:
    """RT threshold for a continuous density profile on the slab.

    The supremum over 3D divergence-free fields equals the 1D value (the
    horizontal Fourier modes decouple and saturate the quotient), so this
    delegates directly to :func:`threshold_1d` with the density derivative
    as weight.
    """
    if profile.kind != "density":
        raise ValueError("RT threshold needs a density profile")
    return threshold_1d(profile.derivative_at, (domain.a, domain.b), params, n,
                        richardson=richardson)


def threshold_benard(profile: Profile1D, domain: SlabDomain, params: PhysicalParams,
                     n: int = 1001, richardson: bool = False) -> ThresholdResult:
    """Convection threshold: same eigenproblem with weight -alpha_beta * dTheta/dy,
    destabilizing where the temperature falls with height."""
    if profile.kind != "temperature":
        raise ValueError("convection threshold needs a temperature profile")
    if params.alpha_beta is None or params.alpha_beta <= 0:
        raise ValueError("convection threshold needs alpha_beta > 0")
    ab = params.alpha_beta
    return threshold_1d(lambda y: -ab * profile.derivative_at(y),
                        (domain.a, domain.b), params, n, richardson=richardson)


# ---------------------------------------------------------------------------
# two-layer (piecewise-constant density) threshold


def _piecewise_linear_maximizer(h: float, l: float, n_side: int = 129):
    s = np.unique(np.concatenate([np.linspace(-l, 0.0, n_side), np.linspace(0.0, h, n_side)]))
    psi = np.where(s <= 0.0, 1.0 + s / l, 1.0 - s / h)
    return s, psi


def threshold_stratified(rho_plus: float, rho_minus: float, h: float, l: float,
                         params: PhysicalParams) -> ThresholdResult:
    """Closed-form threshold for two uniform layers meeting at an interface.

    m^2 = (g * (rho_plus - rho_minus) / lam) / (1/h + 1/l); the maximizer is
    the tent function peaking at the interface.  A nonpositive density jump
    gives m = 0 (stably stratified).
    """
    if h <= 0 or l <= 0:
        raise ValueError("layer depths h and l must be positive")
    jump = rho_plus - rho_minus
    gamma = jump / (1.0 / h + 1.0 / l)
    m = float(np.sqrt(max(0.0, params.g / params.lam * gamma)))
    s, psi = _piecewise_linear_maximizer(h, l)
    psi = psi / np.sqrt(1.0 / h + 1.0 / l)
    return ThresholdResult(m=m, gamma=float(gamma), psi0=psi, y=s,
                           n_grid=s.size, converged=True,
                           achieved_quotient=float(gamma))


def stratified_maximizer_quotient(rho_plus: float, rho_minus: float, h: float,
                                  l: float, params: PhysicalParams) -> float:
    """Quotient g*jump*psi(0)^2 / (lam * int psi'^2) for the explicit tent
    maximizer; equals the squared stratified threshold exactly since
    psi(0) = 1 and int psi'^2 = 1/l + 1/h."""
    if h <= 0 or l <= 0:
        raise ValueError("layer depths h and l must be positive")
    jump = rho_plus - rho_minus
    return params.g * jump / (params.lam * (1.0 / l + 1.0 / h))


def stratified_quotient(s: Array, psi: Array, rho_jump: float,
                        params: PhysicalParams) -> float:
    """Evaluate g*jump*psi(0)^2 / (lam * int psi'^2) for an arbitrary sampled
    profile psi on a grid containing 0 (piecewise-linear interpolation, so
    the derivative energy is the exact chord sum)."""
    s = np.asarray(s, dtype=float)
    psi = np.asarray(psi, dtype=float)
    k0 = np.argmin(np.abs(s))
    if abs(s[k0]) > 1e-12:
        raise ValueError("grid must contain the interface s = 0")
    energy = float(np.sum(np.diff(psi) ** 2 / np.diff(s)))
    return params.g * rho_jump * psi[k0] ** 2 / (params.lam * energy)


# ---------------------------------------------------------------------------
# saturating 3D test-function quotients


def trig_cell_norms(i: int, domain: SlabDomain) -> tuple[float, float]:
    """Exact squared L2 norms of sin and cos of the oscillation phase over a
    horizontal cell.  For any integer i >= 1 the oscillatory correction
    integrates to zero over full periods, so both equal half the cell area."""
    if i < 1:
        raise ValueError("mode index must be a positive integer")
    half_cell = 2.0 * np.pi**2 * domain.L1 * domain.L2
    return half_cell, half_cell


def _second_difference(psi: Array, h: float) -> Array:
    d2 = np.empty_like(psi)
    d2[1:-1] = (psi[2:] - 2.0 * psi[1:-1] + psi[:-2]) / h**2
    d2[0] = (2.0 * psi[0] - 5.0 * psi[1] + 4.0 * psi[2] - psi[3]) / h**2
    d2[-1] = (2.0 * psi[-1] - 5.0 * psi[-2] + 4.0 * psi[-3] - psi[-4]) / h**2
    return d2


def oscillatory_field_quotient(i: int, psi: Array, weight, domain: SlabDomain,
                           params: PhysicalParams,
                           direction=(0.0, 0.0, 1.0)) -> float:
    """Rayleigh quotient of the oscillatory divergence-free test field built
    from a vertical profile psi and horizontal mode index i.

    The field's two functionals factor into 1D integrals of psi times the
    exact horizontal trig norms; the quotient tends monotonically to
    (g/lam) * gamma(psi) as i grows (the curvature term decays like 1/i^2).
    ``direction`` is the unit-third-component vector defining the stiffness
    functional; its horizontal part fixes the phase tilt but drops out of
    the closed-form value.
    """
    if i < 1:
        raise ValueError("mode index must be >= 1")
    psi = np.asarray(psi, dtype=float)
    if abs(psi[0]) > 1e-12 or abs(psi[-1]) > 1e-12:
        raise ValueError("psi must vanish at the interval endpoints")
    nvec = np.asarray(direction, dtype=float)
    if abs(nvec[2] - 1.0) > 1e-12:
        raise ValueError("direction must have third component 1")

    a, b = domain.a, domain.b
    n = psi.size
    y = np.linspace(a, b, n)
    h = y[1] - y[0]
    w = np.asarray(weight(y), dtype=float) if callable(weight) else np.asarray(weight, dtype=float)

    # oscillation wavenumber: i-th mode across the period whose axis carries
    # the phase (the swapped construction is used when only n2 is nonzero)
    k_osc = (i / domain.L1) if (nvec[0] == 0.0 and nvec[1] != 0.0) else (i / domain.L2)

    dpsi = np.gradient(psi, h, edge_order=2)
    d2psi = _second_difference(psi, h)
    trap = np.full(n, h)
    trap[0] = trap[-1] = 0.5 * h
    I_w = float(np.sum(trap * w * psi**2))
    I_d1 = float(np.sum(trap * dpsi**2))
    I_d2 = float(np.sum(trap * d2psi**2))

    s_norm, c_norm = trig_cell_norms(i, domain)
    num = params.g * k_osc**2 * I_w * s_norm
    den = params.lam * (I_d2 * c_norm + k_osc**2 * I_d1 * s_norm)
    return num / den
