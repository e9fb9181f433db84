"""Conserved quantities, Gagliardo-Nirenberg ratio, virial weights and localization measures."""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields

import numpy as np

from .grid import Field2D, GridSpec, gradient_arrays, integrate, smooth_step, smooth_step_derivatives

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


def mass(u: Field2D) -> float:
    return integrate(u.grid, np.abs(u.values) ** 2)


def _grad_sq(u: Field2D) -> np.ndarray:
    gx, gy = gradient_arrays(u)
    return np.abs(gx) ** 2 + np.abs(gy) ** 2


def kinetic(u: Field2D) -> float:
    """1/2 ||grad u||_2^2."""
    return 0.5 * integrate(u.grid, _grad_sq(u))


def lp_power(u: Field2D, p: int) -> float:
    """||u||_p^p."""
    return integrate(u.grid, np.abs(u.values) ** p)


def energy(u: Field2D) -> float:
    """E(u) = int 1/2 |grad u|^2 - 1/4 |u|^4 + 1/6 |u|^6."""
    dens = np.abs(u.values) ** 2
    return integrate(u.grid, 0.5 * _grad_sq(u) - 0.25 * dens**2 + dens**3 / 6.0)


def gn_ratio(u: Field2D, mass_q: float) -> float:
    """||u||_4^4 M(Q) / (2 M(u) ||grad u||_2^2); at most 1, equal to 1 at Q."""
    m = mass(u)
    g = integrate(u.grid, _grad_sq(u))
    if m == 0 or g == 0:
        raise ValueError("gn_ratio needs a nonzero field with nonzero gradient")
    return lp_power(u, 4) * mass_q / (2.0 * m * g)


# -- virial weights ------------------------------------------------------------


def psi_profile(s) -> np.ndarray:
    """psi(s) = (1/s) int_0^s theta, with theta the smooth step."""
    s = np.asarray(s, dtype=float)
    out = np.ones_like(s)
    mid = (s > 1.0) & (s < 2.0)
    if np.any(mid):
        sm = s[mid]
        half = 0.5 * (sm - 1.0)
        nodes = 1.0 + half[:, None] * (_GL_NODES[None, :] + 1.0)
        integral = 1.0 + half * (smooth_step(nodes) @ _GL_WEIGHTS)
        out[mid] = integral / sm
    far = s >= 2.0
    # int_1^2 theta = 1/2 by the symmetry theta(1 + x) + theta(2 - x) = 1
    out[far] = 1.5 / s[far]
    return out


def psi_derivative(s) -> np.ndarray:
    """psi'(s) = (theta(s) - psi(s)) / s, zero for s <= 1."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 1.0
    out[pos] = (smooth_step(s[pos]) - psi_profile(s[pos])) / s[pos]
    return out


def weight_laplacian_profile(s) -> np.ndarray:
    """Laplacian in the scaled variable of psi + phi: phi'' + (2 phi' - psi') / s."""
    s = np.asarray(s, dtype=float)
    _, d1, d2 = smooth_step_derivatives(s)
    out = np.zeros_like(s)
    pos = s > 1.0
    out[pos] = d2[pos] + (2.0 * d1[pos] - psi_derivative(s[pos])) / s[pos]
    return out


@dataclass(frozen=True, eq=False)
class WeightPair:
    """phi(x/R), psi(x/R) and chi_R sampled on a grid.

    ``lap_sum`` holds Laplacian[psi(x/R) + phi(x/R)] in physical variables.
    """

    radius: float
    phi: np.ndarray
    psi: np.ndarray
    chi: np.ndarray
    lap_sum: np.ndarray
    grid: GridSpec


def make_weights(grid: GridSpec, R: float) -> WeightPair:
    if not (0 < R < grid.half_width / 2.0):
        raise ValueError(f"R={R} must lie in (0, half_width/2) = (0, {grid.half_width / 2})")
    s = grid.radius / R
    phi = smooth_step(s)
    psi = psi_profile(s)
    lap = weight_laplacian_profile(s) / R**2
    return WeightPair(float(R), phi, psi, phi.copy(), lap, grid)


def virial_A(u: Field2D, w: WeightPair) -> float:
    """A = int psi(x/R) x . Im(conj(u) grad u)."""
    gx, gy = gradient_arrays(u)
    X, Y = u.grid.mesh
    ub = u.values.conj()
    flux = X * (ub * gx).imag + Y * (ub * gy).imag
    return integrate(u.grid, w.psi * flux)


def virial_rate(u: Field2D, w: WeightPair) -> float:
    """dA/dt from the Morawetz identity for the cubic-quintic flow.

    Kinetic part uses the Hessian of the weight, 2 int psi |grad u|^2 +
    (phi - psi) |d_r u|^2, which is 2 int phi |d_r u|^2 for radial u.
    """
    grid = u.grid
    gx, gy = gradient_arrays(u)
    X, Y = grid.mesh
    r = grid.radius
    with np.errstate(invalid="ignore", divide="ignore"):
        dr_u = np.where(r > 0, (X * gx + Y * gy) / r, 0.0)
    grad_sq = np.abs(gx) ** 2 + np.abs(gy) ** 2
    dens = np.abs(u.values) ** 2
    wsum = w.psi + w.phi
    kin = 2.0 * (w.psi * grad_sq + (w.phi - w.psi) * np.abs(dr_u) ** 2)
    total = -0.5 * w.lap_sum * dens + kin - 0.5 * wsum * dens**2 + (2.0 / 3.0) * wsum * dens**3
    return integrate(grid, total)


def virial_rate_terms(u: Field2D, w: WeightPair) -> dict:
    """The four pieces of virial_rate, for reporting."""
    grid = u.grid
    gx, gy = gradient_arrays(u)
    X, Y = grid.mesh
    r = grid.radius
    with np.errstate(invalid="ignore", divide="ignore"):
        dr_u = np.where(r > 0, (X * gx + Y * gy) / r, 0.0)
    grad_sq = np.abs(gx) ** 2 + np.abs(gy) ** 2
    dens = np.abs(u.values) ** 2
    wsum = w.psi + w.phi
    return {
        "mass_term": integrate(grid, -0.5 * w.lap_sum * dens),
        "kinetic_term": integrate(grid, 2.0 * (w.psi * grad_sq + (w.phi - w.psi) * np.abs(dr_u) ** 2)),
        "quartic_term": integrate(grid, -0.5 * wsum * dens**2),
        "sextic_term": integrate(grid, (2.0 / 3.0) * wsum * dens**3),
    }


def morawetz_density(u: Field2D, w: WeightPair) -> float:
    """int chi_R |grad u|^2 - 1/2 |u|^4 + 2/3 |u|^6, the integrand of the Morawetz bound."""
    dens = np.abs(u.values) ** 2
    return integrate(u.grid, w.chi * _grad_sq(u) - 0.5 * dens**2 + (2.0 / 3.0) * dens**3)


# -- localization --------------------------------------------------------------


def local_energy(u: Field2D, R: float) -> float:
    """int 1/2 chi_R |grad u|^2 - 1/4 |u|^4 + 1/6 |u|^6."""
    chi = smooth_step(u.grid.radius / R)
    dens = np.abs(u.values) ** 2
    return integrate(u.grid, 0.5 * chi * _grad_sq(u) - 0.25 * dens**2 + dens**3 / 6.0)


def exterior_kinetic(u: Field2D, R: float) -> float:
    """int (1 - chi_R) |grad u|^2."""
    chi = smooth_step(u.grid.radius / R)
    return integrate(u.grid, (1.0 - chi) * _grad_sq(u))


def concentration_scale(u: Field2D, eps: float = 0.01, return_flag: bool = False):
    """Smallest dyadic lambda >= 1 with int_{|x| > lambda} |u|^2 < eps M(u).

    If no dyadic radius inside the box qualifies, returns the box half width;
    with ``return_flag`` the result is ``(lambda, mass_at_boundary)``.
    """
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    dens = np.abs(u.values) ** 2
    total = float(np.sum(dens))
    if total == 0:
        raise ValueError("concentration_scale needs a nonzero field")
    r = u.grid.radius
    lam = 1.0
    while lam <= u.grid.half_width:
        if float(np.sum(dens[r > lam])) < eps * total:
            return (lam, False) if return_flag else lam
        lam *= 2.0
    lam = u.grid.half_width
    return (lam, True) if return_flag else lam


# -- diagnostics record --------------------------------------------------------

CSV_COLUMNS = (
    "t",
    "mass",
    "energy",
    "kinetic",
    "l4_4",
    "l6_6",
    "linf",
    "weighted_sup",
    "gn_ratio",
    "virial_A",
    "virial_rate",
    "lambda",
    "ext_kin_R1",
    "ext_kin_R2",
    "l4tx_accum",
)


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    mass: float
    energy: float
    kinetic: float
    l4_4: float
    l6_6: float
    linf: float
    weighted_sup: float
    gn_ratio: float
    virial_A: float
    virial_rate: float
    lam: float
    ext_kin_R1: float
    ext_kin_R2: float
    l4tx_accum: float

    def row(self) -> list[str]:
        return [repr(float(v)) for v in astuple(self)]

    def as_dict(self) -> dict:
        return {col: getattr(self, f.name) for col, f in zip(CSV_COLUMNS, fields(self))}


def measure(
    u: Field2D,
    t: float,
    *,
    mass_q: float,
    weights: WeightPair | None,
    radii: tuple[float, float],
    l4tx_accum: float,
    eps: float = 0.01,
) -> DiagnosticsRecord:
    """Assemble one DiagnosticsRecord sharing a single gradient evaluation."""
    grid = u.grid
    gx, gy = gradient_arrays(u)
    grad_sq = np.abs(gx) ** 2 + np.abs(gy) ** 2
    dens = np.abs(u.values) ** 2
    m = integrate(grid, dens)
    g2 = integrate(grid, grad_sq)
    l4 = integrate(grid, dens**2)
    l6 = integrate(grid, dens**3)
    E = 0.5 * g2 - 0.25 * l4 + l6 / 6.0
    nonzero = m > 0
    gn = l4 * mass_q / (2.0 * m * g2) if nonzero and g2 > 0 else 0.0
    if weights is not None and nonzero:
        A = virial_A(u, weights)
        rate = virial_rate(u, weights)
    else:
        A = rate = 0.0
    lam = concentration_scale(u, eps) if nonzero else 1.0
    ext = []
    for R in radii:
        chi = smooth_step(grid.radius / R)
        ext.append(integrate(grid, (1.0 - chi) * grad_sq))
    return DiagnosticsRecord(
        t=float(t),
        mass=m,
        energy=E,
        kinetic=0.5 * g2,
        l4_4=l4,
        l6_6=l6,
        linf=float(np.sqrt(dens.max())),
        weighted_sup=float(np.max(np.sqrt(grid.radius * dens))),
        gn_ratio=gn,
        virial_A=A,
        virial_rate=rate,
        lam=float(lam),
        ext_kin_R1=ext[0],
        ext_kin_R2=ext[1],
        l4tx_accum=float(l4tx_accum),
    )


def gaussian_gn_ratio(mass_q: float) -> float:
    """Closed form gn_ratio of exp(-|x|^2/2): M(Q) / (4 pi)."""
    return mass_q / (4.0 * math.pi)
