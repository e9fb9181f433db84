"""Cubic ground state Q solving -Q + Laplacian(Q) + Q^3 = 0 in two dimensions.

Two independent routes: Petviashvili iteration on the periodic grid, and a
radial shooting method used as an oracle.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .grid import Field2D, GridSpec, RadialProfile, gradient_arrays, integrate, make_grid

log = logging.getLogger(__name__)

SEED_AMPLITUDE = 2.2


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class GroundStateResult:
    q: Field2D
    mass_q: float
    residual: float
    iterations: int
    stabilizer_history: tuple[float, ...] = ()

    @property
    def grid(self) -> GridSpec:
        return self.q.grid

    @property
    def peak(self) -> float:
        return float(self.q.values.real.max())


def equation_residual(q: np.ndarray, grid: GridSpec) -> float:
    lap = sfft.ifft2(-grid.k2 * sfft.fft2(q)).real
    return float(np.max(np.abs(-q + lap + q**3)))


def petviashvili(
    grid: GridSpec,
    tol: float = 1e-10,
    max_iter: int = 500,
    seed: np.ndarray | None = None,
) -> GroundStateResult:
    """Petviashvili fixed-point iteration for Q, exponent 3/2.

    Each sweep sets Q <- S^(3/2) (1 - Laplacian)^(-1) Q^3 with the
    stabilizing factor S = <Q, (1 - Laplacian) Q> / <Q, Q^3>.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    symbol = 1.0 + grid.k2
    if seed is None:
        q = SEED_AMPLITUDE * np.exp(-(grid.radius**2) / 2.0)
    else:
        q = np.array(seed, dtype=float)
    history = []
    residual = equation_residual(q, grid)
    for it in range(1, max_iter + 1):
        q_hat = sfft.fft2(q)
        cube_hat = sfft.fft2(q**3)
        num = np.sum(np.abs(q_hat) ** 2 * symbol)
        den = np.sum((q_hat.conj() * cube_hat).real)
        stab = float(num / den)
        history.append(stab)
        q = stab**1.5 * sfft.ifft2(cube_hat / symbol).real
        residual = equation_residual(q, grid)
        if residual <= tol:
            break
    else:
        raise ConvergenceError(f"Petviashvili did not converge in {max_iter} iterations", residual)

    edge = max(
        np.abs(q[0, :]).max(), np.abs(q[:, 0]).max(), np.abs(q[-1, :]).max(), np.abs(q[:, -1]).max()
    )
    if edge > 1e-8:
        warnings.warn(f"box too small: |Q| = {edge:.2e} on the boundary", RuntimeWarning, stacklevel=2)
    field = Field2D(grid, q)
    mass_q = integrate(grid, q**2)
    log.debug("petviashvili: %d iterations, residual %.2e, M(Q)=%.12f", it, residual, mass_q)
    return GroundStateResult(field, mass_q, residual, it, tuple(history))


# -- shooting oracle -----------------------------------------------------------


def _rk4_shoot(q0: float, dr: float, steps: int):
    """Integrate Q'' + Q'/r - Q + Q^3 = 0 outward from r = dr/2.

    Returns (verdict, samples) where verdict is +1 if the shot crosses zero
    (amplitude too large), -1 if it turns back up (too small), 0 if it
    reached the end still decaying; samples are the values accepted so far.
    """
    r = 0.5 * dr
    c = (q0 - q0**3) / 4.0
    q = q0 + c * r * r
    p = 2.0 * c * r
    qs = [q]
    half = 0.5 * dr

    def rhs(r, q, p):
        return p, q - q**3 - p / r

    for _ in range(steps - 1):
        k1q, k1p = rhs(r, q, p)
        k2q, k2p = rhs(r + half, q + half * k1q, p + half * k1p)
        k3q, k3p = rhs(r + half, q + half * k2q, p + half * k2p)
        k4q, k4p = rhs(r + dr, q + dr * k3q, p + dr * k3p)
        q += dr / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q)
        p += dr / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
        r += dr
        if q < 0:
            return 1, qs
        if p > 0:
            return -1, qs
        qs.append(q)
    return 0, qs


def shooting_oracle(
    r_max: float = 16.0, dr: float = 1e-3, tol: float = 1e-6, bracket=(2.0, 2.5)
) -> RadialProfile:
    """Radial Q by bisection on Q(0), RK4 on the midpoint mesh (j + 1/2) dr.

    Bisection runs to machine resolution of Q(0).  The accepted shot must be
    positive and strictly decreasing on the whole mesh and fall below
    ``tol`` at ``r_max``.
    """
    if r_max < 15:
        raise ValueError("r_max must be at least 15")
    if dr > 1e-3:
        raise ValueError("dr must be at most 1e-3")
    steps = int(round(r_max / dr))
    lo, hi = bracket
    v_lo, _ = _rk4_shoot(lo, dr, steps)
    v_hi, _ = _rk4_shoot(hi, dr, steps)
    if not (v_lo == -1 and v_hi == 1):
        raise RuntimeError(f"shooting bracket [{lo}, {hi}] does not straddle Q(0): verdicts {v_lo}, {v_hi}")

    best = None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        verdict, qs = _rk4_shoot(mid, dr, steps)
        if verdict == 0:
            best = (mid, qs)
            break
        if verdict > 0:
            hi = mid
        else:
            lo = mid
        if best is None or len(qs) > len(best[1]):
            best = (mid, qs)
    q0, qs = best
    if len(qs) < steps or qs[-1] >= tol:
        raise RuntimeError(
            f"shooting failed to reach r_max={r_max} with Q < {tol}: best shot "
            f"Q(0)={q0!r} reached r={len(qs) * dr:.3f}"
        )
    samples = np.asarray(qs)
    log.debug("shooting oracle: Q(0)=%.15f", q0)
    profile = RadialProfile.midpoint(steps, steps * dr, samples)
    return profile


def oracle_peak(profile: RadialProfile) -> float:
    """Q(0) recovered from the first sample via the series start."""
    r = profile.r_values[0]
    q = profile.samples[0].real
    # q = q0 + (q0 - q0^3) r^2 / 4; one Newton polish is plenty at r ~ 5e-4
    q0 = q
    for _ in range(5):
        g = q0 + (q0 - q0**3) * r * r / 4.0 - q
        dg = 1.0 + (1.0 - 3.0 * q0**2) * r * r / 4.0
        q0 -= g / dg
    return q0


def radial_mass(profile: RadialProfile) -> float:
    """2 pi int |f|^2 r dr by the midpoint rule."""
    return profile.l2_norm() ** 2


@lru_cache(maxsize=4)
def reference_mass(r_max: float = 16.0, dr: float = 2.5e-4) -> float:
    """M(Q) from the shooting oracle; cached."""
    return radial_mass(shooting_oracle(r_max, dr))


@lru_cache(maxsize=4)
def ground_state(n: int = 512, half_width: float = 20.0, tol: float = 1e-10) -> GroundStateResult:
    """Cached Petviashvili solve on a (n, half_width) grid."""
    return petviashvili(make_grid(n, half_width), tol=tol)


def interpolate_profile(profile: RadialProfile, radii: np.ndarray) -> np.ndarray:
    """Cubic interpolation of an oracle profile at arbitrary radii (zero beyond r_max)."""
    from scipy.interpolate import CubicSpline

    r = profile.r_values
    nodes = np.concatenate([-r[::-1], r])
    vals = np.concatenate([profile.samples.real[::-1], profile.samples.real])
    spline = CubicSpline(nodes, vals)
    radii = np.asarray(radii)
    return np.where(radii <= profile.r_max, spline(np.minimum(radii, profile.r_max)), 0.0)


@dataclass(frozen=True)
class PohozaevReport:
    grad_sq: float
    mass: float
    l4_4: float
    l6_6: float
    energy: float
    kinetic_identity: float
    quartic_identity: float
    energy_identity: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def pohozaev_check(gs: GroundStateResult) -> PohozaevReport:
    """Relative residuals of ||grad Q||^2 = ||Q||^2, ||Q||_4^4 = 2||Q||^2 and E(Q) = ||Q||_6^6 / 6."""
    grid = gs.grid
    q = gs.q.values
    gx, gy = gradient_arrays(gs.q)
    grad_sq = integrate(grid, np.abs(gx) ** 2 + np.abs(gy) ** 2)
    dens = np.abs(q) ** 2
    mass = integrate(grid, dens)
    l4 = integrate(grid, dens**2)
    l6 = integrate(grid, dens**3)
    energy = 0.5 * grad_sq - 0.25 * l4 + l6 / 6.0
    return PohozaevReport(
        grad_sq=grad_sq,
        mass=mass,
        l4_4=l4,
        l6_6=l6,
        energy=energy,
        kinetic_identity=abs(grad_sq - mass) / mass,
        quartic_identity=abs(l4 - 2.0 * mass) / l4,
        energy_identity=abs(energy - l6 / 6.0) / energy,
    )


def profile_sup_difference(gs: GroundStateResult, profile: RadialProfile) -> float:
    """max over the grid of |Q_grid(x) - Q_oracle(|x|)| for |x| inside the oracle mesh."""
    rad = gs.grid.radius
    inside = rad <= min(profile.r_max, gs.grid.half_width)
    oracle = interpolate_profile(profile, rad[inside])
    return float(np.max(np.abs(gs.q.values.real[inside] - oracle)))

