"""Incoming/outgoing projections of radial profiles, mismatch operator norms, frequency decay.

The projections are

    [P(+/-) f](r) = f(r)/2 +/- (i/pi) PV int_0^inf f(rho) rho / (r^2 - rho^2) d rho

evaluated on a midpoint mesh by singularity subtraction: the smooth part
(g(rho) - g(r)) / (r^2 - rho^2), g = f rho, goes through the midpoint rule and
g(r) times the principal value of 1/(r^2 - rho^2) over [0, r_max] is added
in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.fft as sfft

from .grid import (
    Field2D,
    GridSpec,
    RadialProfile,
    integrate,
    lp_project,
    lp_symbol,
    radial_average,
    radial_lift,
    smooth_step,
)


class MeshMismatchError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PvKernelPlan:
    """Precomputed kernel pieces for one midpoint mesh."""

    r: np.ndarray
    dr: float
    kernel: np.ndarray  # dr / (r_j^2 - r_k^2) off the diagonal, 0 on it
    row_sums: np.ndarray
    log_terms: np.ndarray  # PV int_0^a d rho / (r^2 - rho^2)

    @classmethod
    def for_mesh(cls, profile: RadialProfile) -> "PvKernelPlan":
        r = profile.r_values
        dr = profile.dr
        a = profile.r_max
        diff = r[:, None] ** 2 - r[None, :] ** 2
        np.fill_diagonal(diff, 1.0)
        kernel = dr / diff
        np.fill_diagonal(kernel, 0.0)
        log_terms = np.log((a + r) / (a - r)) / (2.0 * r)
        plan = cls(r.copy(), dr, kernel, kernel.sum(axis=1), log_terms)
        if not (np.all(np.isfinite(plan.kernel)) and np.all(np.isfinite(plan.log_terms))):
            raise FloatingPointError("non-finite kernel entries")
        return plan

    def matches(self, profile: RadialProfile) -> bool:
        return (
            profile.m == self.r.size
            and math.isclose(profile.dr, self.dr, rel_tol=1e-12)
            and np.allclose(profile.r_values, self.r, rtol=1e-12, atol=0)
        )


def _mesh_derivative(g: np.ndarray, dr: float) -> np.ndarray:
    """Second-order derivative of an odd-in-r function sampled at (j + 1/2) dr."""
    padded = np.concatenate([[-g[0]], g])
    d = np.empty_like(g)
    d[:-1] = (padded[2:] - padded[:-2])[: g.size - 1] / (2 * dr)
    d[-1] = (3 * g[-1] - 4 * g[-2] + g[-3]) / (2 * dr)
    return d


def principal_value(f: RadialProfile, plan: PvKernelPlan | None = None) -> np.ndarray:
    """PV int_0^{r_max} f(rho) rho / (r^2 - rho^2) d rho at every mesh radius."""
    if plan is None:
        plan = PvKernelPlan.for_mesh(f)
    elif not plan.matches(f):
        raise MeshMismatchError("profile mesh does not match the kernel plan")
    g = f.samples * plan.r
    smooth = plan.kernel @ g.real + 1j * (plan.kernel @ g.imag) - g * plan.row_sums
    # diagonal limit of (g(rho) - g(r)) / (r^2 - rho^2) is -g'(r) / (2r)
    smooth += -_mesh_derivative(g, plan.dr) / (2.0 * plan.r) * plan.dr
    return smooth + g * plan.log_terms


def inout_apply(f: RadialProfile, sign: int, plan: PvKernelPlan | None = None) -> RadialProfile:
    """P+ (sign=+1, outgoing) or P- (sign=-1, incoming) of a radial profile."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    pv = principal_value(f, plan)
    return f.with_samples(0.5 * f.samples + sign * 1j / np.pi * pv)


def inout_band(
    f: RadialProfile, N: float, sign: int, grid: GridSpec, plan: PvKernelPlan | None = None
) -> RadialProfile:
    """P(+/-) P_N f: lift to the grid, project to the band, re-extract, split."""
    banded = band_profile(f, N, grid)
    return inout_apply(banded, sign, plan)


def band_profile(f: RadialProfile, N: float, grid: GridSpec) -> RadialProfile:
    lifted = radial_lift(f, grid)
    projected = lp_project(lifted, "band", N)
    back = radial_average(projected, f.m, f.r_max)
    return f.with_samples(back.samples)


def random_radial_profiles(
    m: int, r_max: float, count: int, rng: np.random.Generator, modes: int = 6, k_max: float = 4.0
):
    """Random band-limited radial profiles: Gaussian-windowed sums of J0(k r)."""
    from scipy.special import j0

    r = (np.arange(m) + 0.5) * (r_max / m)
    window = np.exp(-((r / (0.3 * r_max)) ** 2))
    for _ in range(count):
        ks = rng.uniform(0.0, k_max, modes)
        coef = rng.normal(size=modes) + 1j * rng.normal(size=modes)
        samples = window * (j0(np.outer(r, ks)) @ coef)
        yield RadialProfile(r, samples, r_max / m)


def inout_norm_estimate(
    m: int, r_max: float, trials: int = 200, seed: int = 0, sign: int = 1
) -> float:
    """max over random band-limited profiles of ||P(sign) f|| / ||f||."""
    rng = np.random.default_rng(seed)
    plan = None
    best = 0.0
    for f in random_radial_profiles(m, r_max, trials, rng):
        if plan is None:
            plan = PvKernelPlan.for_mesh(f)
        ratio = inout_apply(f, sign, plan).l2_norm() / f.l2_norm()
        best = max(best, ratio)
    return best


# -- mismatch estimates --------------------------------------------------------

MISMATCH_KINDS = ("cutoff_gradient", "cutoff_band", "identity_exterior", "zero")


class PowerIterationError(RuntimeError):
    pass


@dataclass(frozen=True)
class NormEstimate:
    value: float
    spread: float
    sweeps: int

    def __float__(self):
        return self.value


def _operator_pair(kind: str, grid: GridSpec, R: float, N: float):
    """Return (T, T_adjoint) acting on raw arrays (T maps to a tuple of arrays)."""
    rad = grid.radius
    inner = smooth_step(rad / (R / 2.0))  # chi_{R/2}
    outer = 1.0 - smooth_step(rad / R)  # chi_R^c
    KX, KY = grid.kmesh

    def mult(x, symbol):
        return sfft.ifft2(sfft.fft2(x) * symbol)

    if kind in ("cutoff_gradient", "identity_exterior"):
        low = lp_symbol(grid, "low", N)
        ext = np.ones_like(outer) if kind == "identity_exterior" else outer

        def T(x):
            y_hat = sfft.fft2(inner * x) * low
            return (ext * sfft.ifft2(1j * KX * y_hat), ext * sfft.ifft2(1j * KY * y_hat))

        def Tadj(ys):
            gx, gy = ys
            div_hat = -1j * KX * sfft.fft2(ext * gx) - 1j * KY * sfft.fft2(ext * gy)
            return inner * sfft.ifft2(div_hat * low)

        return T, Tadj
    if kind == "cutoff_band":
        low = lp_symbol(grid, "low", N)
        high = lp_symbol(grid, "high", 4 * N)

        def T(x):
            return (mult(outer * mult(x, high), low),)

        def Tadj(ys):
            return mult(outer * mult(ys[0], low), high)

        return T, Tadj
    if kind == "zero":
        return (lambda x: (np.zeros_like(x),)), (lambda ys: np.zeros_like(ys[0]))
    raise ValueError(f"unknown mismatch kind {kind!r}; expected one of {MISMATCH_KINDS}")


def operator_norm(T, Tadj, shape, restarts: int = 8, rtol: float = 1e-3, max_sweeps: int = 200, seed: int = 0):
    """Power iteration on T*T from several random starts.

    Returns a NormEstimate with the largest converged value and the relative
    spread across restarts.
    """
    rng = np.random.default_rng(seed)
    values = []
    worst = 0
    for _ in range(restarts):
        x = rng.normal(size=shape) + 1j * rng.normal(size=shape)
        x /= np.linalg.norm(x)
        sigma = None
        for sweep in range(1, max_sweeps + 1):
            tx = T(x)
            est = math.sqrt(sum(float(np.vdot(c, c).real) for c in tx))
            if est == 0.0:
                sigma = 0.0
                break
            x = Tadj(tx)
            x /= np.linalg.norm(x)
            if sigma is not None and abs(est - sigma) <= rtol * est:
                sigma = est
                break
            sigma = est
        else:
            raise PowerIterationError(f"power iteration did not converge in {max_sweeps} sweeps")
        worst = max(worst, sweep)
        values.append(sigma)
    top = max(values)
    spread = (top - min(values)) / top if top > 0 else 0.0
    return NormEstimate(top, spread, worst)


def mismatch_norm(
    kind: str, R: float, N: float, grid: GridSpec, trials: int = 8, seed: int = 0
) -> NormEstimate:
    """L^2 -> L^2 norm estimate of a cutoff/frequency-projection composite.

    cutoff_gradient:   chi_R^c grad P_{<=N} chi_{R/2}
    cutoff_band:       P_{<=N} chi_R^c P_{>4N}
    identity_exterior: grad P_{<=N} chi_{R/2} (chi_R^c replaced by 1)
    zero:              the zero operator
    """
    if R < 1:
        raise ValueError("R must be at least 1")
    T, Tadj = _operator_pair(kind, grid, R, N)
    return operator_norm(T, Tadj, (grid.n, grid.n), restarts=trials, seed=seed)


# -- frequency decay -----------------------------------------------------------


class FreqDecayMonitor:
    """Running sup over t of ||chi_rho^c P_N u(t)||_2 for each N, rho the exterior radius."""

    def __init__(self, u0: Field2D, N_list: Sequence[float], radius: float = 1.0):
        if any(N < 1 for N in N_list):
            raise ValueError("frequency-decay scan needs N >= 1")
        if radius < 1:
            raise ValueError("exterior radius must be at least 1")
        self.N_list = [float(N) for N in N_list]
        self.grid = u0.grid
        self.exterior = 1.0 - smooth_step(self.grid.radius / radius)
        self.symbols = [lp_symbol(self.grid, "band", N) for N in self.N_list]
        u0_hat = sfft.fft2(u0.values)
        self.initial = [self._norm(sfft.ifft2(u0_hat * s)) for s in self.symbols]
        self.sup = [0.0] * len(self.N_list)
        self.times: list[float] = []

    def _norm(self, values: np.ndarray) -> float:
        return math.sqrt(integrate(self.grid, np.abs(values) ** 2))

    def __call__(self, t: float, u: Field2D) -> None:
        u_hat = sfft.fft2(u.values)
        for i, s in enumerate(self.symbols):
            val = self._norm(self.exterior * sfft.ifft2(u_hat * s))
            self.sup[i] = max(self.sup[i], val)
        self.times.append(t)

    def table(self) -> list[dict]:
        return [
            {"N": N, "sup_exterior": s, "initial_band": b}
            for N, s, b in zip(self.N_list, self.sup, self.initial)
        ]


def freq_decay_scan(
    fields: Iterable[tuple[float, Field2D]], u0: Field2D, N_list: Sequence[float], radius: float = 1.0
) -> list[dict]:
    """For each N, sup over the given (t, u(t)) of ||chi_1^c P_N u(t)|| and ||P_N u0||."""
    monitor = FreqDecayMonitor(u0, N_list, radius)
    for t, u in fields:
        monitor(t, u)
    return monitor.table()


def fit_decay_constant(table: list[dict], N_ref: float = 8.0, exponent: float = 1.2) -> float:
    """C with sup(N_ref) = C (||P_N u0|| + N_ref^-exponent)."""
    row = next(r for r in table if r["N"] == N_ref)
    return row["sup_exterior"] / (row["initial_band"] + N_ref**-exponent)
