"""Strang-split spectral integration of i u_t + Laplacian(u) = -|u|^2 u + |u|^4 u."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.fft as sfft

from . import functionals as fn
from .grid import Field2D, GridSpec, linear_flow, smooth_step, spectral_tail_fraction

log = logging.getLogger(__name__)

ALIASING_WARN = 1e-8


def _phase_rotate(values: np.ndarray, dt: float) -> np.ndarray:
    dens = values.real**2 + values.imag**2
    theta = dt * (dens - dens * dens)
    return values * (np.cos(theta) + 1j * np.sin(theta))


def nonlinear_phase(u: Field2D, dt: float) -> Field2D:
    """Exact flow of i u_t = -|u|^2 u + |u|^4 u over time dt."""
    if dt == 0:
        return u
    return u.like(_phase_rotate(u.values, dt))


def strang_step(u: Field2D, dt: float) -> Field2D:
    """N(dt/2) then free flow over dt then N(dt/2)."""
    half = nonlinear_phase(u, 0.5 * dt)
    return nonlinear_phase(linear_flow(half, dt), 0.5 * dt)


def absorbing_mask(grid: GridSpec, dt: float, rate: float = 5.0, width: float = 0.1) -> np.ndarray:
    """Per-step damping factor supported in the outer ``width`` fraction of the box.

    Uses the sup-norm distance so the layer follows the square boundary.
    """
    X, Y = grid.mesh
    d = np.maximum(np.abs(X), np.abs(Y)) / grid.half_width
    start = 1.0 - width
    ramp = 1.0 - smooth_step(1.0 + np.clip((d - start) / width, 0.0, 1.0))
    return np.exp(-rate * dt * ramp)


class BlowupError(FloatingPointError):
    """Raised when the field stops being finite; carries the partial trajectory."""

    def __init__(self, message: str, trajectory: "Trajectory"):
        super().__init__(message)
        self.trajectory = trajectory


@dataclass
class Trajectory:
    records: list[fn.DiagnosticsRecord]
    final: Field2D
    snapshots: dict[float, Field2D] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    dt: float = 0.0
    initial: Field2D | None = None
    duhamel: dict[float, np.ndarray] = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    def column(self, name: str) -> np.ndarray:
        return np.array([r.as_dict()[name] for r in self.records])

    def record_at(self, t: float) -> fn.DiagnosticsRecord:
        times = self.times
        i = int(np.argmin(np.abs(times - t)))
        if abs(times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"no record at t={t}")
        return self.records[i]


@dataclass
class RunState:
    """Mutable single-owner integration state."""

    values: np.ndarray
    t: float
    dt: float
    step_count: int = 0
    l4tx_accum: float = 0.0
    warnings: list[str] = field(default_factory=list)


def evolve(
    u0: Field2D,
    T: float,
    dt: float,
    cadence: int = 10,
    radii: Sequence[float] = (5.0, 10.0),
    *,
    mass_q: float | None = None,
    virial_radius: float | None = None,
    absorber: bool = False,
    absorber_rate: float = 5.0,
    absorber_width: float = 0.1,
    nonlinear: bool = True,
    snapshot_times: Iterable[float] = (),
    track_duhamel: bool = False,
    callback: Callable[[float, Field2D], None] | None = None,
) -> Trajectory:
    """Integrate from u0 to time T with fixed step dt.

    A DiagnosticsRecord is emitted every ``cadence`` steps (and at the end).
    Fields are stored at the requested snapshot times, which are rounded to
    the nearest step.  ``callback(t, field)`` runs at every record.

    With ``track_duhamel`` the nonlinear kicks are summed in the interaction
    picture, so that ``traj.duhamel[t]`` holds the Fourier coefficients of
    exp(-it Laplacian) u(t) - u0 built from the nonlinearity alone.  Without
    an absorber this equals the direct difference; with one it leaves out
    what the absorbing layer removed.
    """
    if T <= 0 or dt <= 0:
        raise ValueError("T and dt must be positive")
    if cadence < 1:
        raise ValueError("cadence must be a positive integer")
    if mass_q is None:
        from .ground_state import reference_mass

        mass_q = reference_mass()
    radii = tuple(float(r) for r in radii)
    if len(radii) != 2:
        raise ValueError("exactly two exterior-kinetic radii are recorded")
    grid = u0.grid
    nsteps = int(round(T / dt))
    if abs(nsteps * dt - T) > 1e-9 * T:
        raise ValueError(f"T={T} is not an integer multiple of dt={dt}")
    weights = fn.make_weights(grid, virial_radius) if virial_radius else None
    snap_steps = {int(round(t / dt)) for t in snapshot_times}
    if any(s < 0 or s > nsteps for s in snap_steps):
        raise ValueError("snapshot times must lie in [0, T]")
    record_steps = set(range(0, nsteps + 1, cadence)) | {nsteps} | snap_steps

    free = np.exp(-1j * dt * grid.k2)
    mask = absorbing_mask(grid, dt, absorber_rate, absorber_width) if absorber else None
    state = RunState(np.array(u0.values), 0.0, dt)
    traj = Trajectory([], u0, {}, state.warnings, dt, u0)
    prev_l4 = None
    tail_warned = False
    track = track_duhamel and nonlinear
    acc = np.zeros_like(state.values) if track else None
    phase = np.ones(grid.k2.shape, dtype=complex) if track else None

    def kick(values: np.ndarray, tau: float) -> np.ndarray:
        out = _phase_rotate(values, tau)
        if track:
            acc[...] += phase * sfft.fft2(out - values)
        return out

    def emit(step: int) -> None:
        nonlocal prev_l4, tail_warned
        t = step * dt
        u = Field2D(grid, state.values)
        l4 = fn.lp_power(u, 4)
        if prev_l4 is not None:
            state.l4tx_accum += 0.5 * (prev_l4 + l4) * (t - traj.records[-1].t)
        prev_l4 = l4
        rec = fn.measure(
            u, t, mass_q=mass_q, weights=weights, radii=radii, l4tx_accum=state.l4tx_accum
        )
        traj.records.append(rec)
        if step in snap_steps:
            traj.snapshots[t] = u
            if track:
                traj.duhamel[t] = acc.copy()
        if not tail_warned and rec.mass > 0:
            tail = spectral_tail_fraction(u)
            if tail > ALIASING_WARN:
                state.warnings.append(f"aliasing: spectral tail fraction {tail:.2e} at t={t:g}")
                tail_warned = True
        if callback is not None:
            callback(t, u)

    emit(0)
    values = state.values
    if nonlinear:
        values = kick(values, 0.5 * dt)
    for step in range(1, nsteps + 1):
        values = sfft.ifft2(sfft.fft2(values) * free)
        if mask is not None:
            values *= mask
        if track:
            phase *= free.conj()
        if step in record_steps:
            if nonlinear:
                values = kick(values, 0.5 * dt)
            if not np.all(np.isfinite(values)):
                traj.final = Field2D(grid, state.values)
                raise BlowupError(f"non-finite field at t={step * dt:g}", traj)
            state.values = values
            state.step_count = step
            state.t = step * dt
            emit(step)
            if nonlinear and step < nsteps:
                values = kick(values, 0.5 * dt)
        elif nonlinear:
            values = kick(values, dt)
    traj.final = Field2D(grid, state.values)
    return traj


def time_reversal_error(u0: Field2D, T: float, dt: float) -> float:
    """Evolve forward T, conjugate, evolve T, conjugate; relative L^2 distance to u0."""
    values = np.array(u0.values)
    nsteps = int(round(T / dt))
    for _ in range(2):
        for _ in range(nsteps):
            values = strang_step(Field2D(u0.grid, values), dt).values
        values = values.conj()
    back = Field2D(u0.grid, values)
    return (back - u0).norm() / u0.norm()


def run_steps(u: Field2D, dt: float, nsteps: int, nonlinear: bool = True) -> Field2D:
    """Bare Strang stepping with merged half steps; no diagnostics."""
    free = np.exp(-1j * dt * u.grid.k2)
    values = np.array(u.values)
    if nsteps == 0:
        return u
    if nonlinear:
        values = _phase_rotate(values, 0.5 * dt)
    for step in range(1, nsteps + 1):
        values = sfft.ifft2(sfft.fft2(values) * free)
        if nonlinear:
            values = _phase_rotate(values, dt if step < nsteps else 0.5 * dt)
    return Field2D(u.grid, values)


# -- scattering diagnostics ----------------------------------------------------


def h1_norm(u: Field2D) -> float:
    u_hat = sfft.fft2(u.values)
    return math.sqrt(
        float(np.sum((1.0 + u.grid.k2) * np.abs(u_hat) ** 2)) * u.grid.cell_area / u.grid.n**2
    )


@dataclass(frozen=True)
class ScatteringMetrics:
    window_starts: tuple[float, ...]
    window_ends: tuple[float, ...]
    cauchy: tuple[float, ...]
    l4tx_increments: tuple[float, ...]

    def rows(self):
        return zip(self.window_starts, self.window_ends, self.cauchy, self.l4tx_increments)


def scattering_metrics(
    traj: Trajectory, times: Sequence[float] | None = None, method: str = "auto"
) -> ScatteringMetrics:
    """Windowed H^1 Cauchy differences of v(t) = exp(-it Laplacian) u(t).

    Windows run between consecutive snapshot times.  ``method='direct'``
    differences the stored fields; ``'duhamel'`` uses the accumulated
    nonlinear kicks (needed when an absorber was on); ``'auto'`` picks
    ``'duhamel'`` whenever it was tracked.  Also reports the increment of the
    L^4_{t,x} accumulator over each window.
    """
    if times is None:
        times = sorted(traj.snapshots)
    times = sorted(times)
    if len(times) < 3:
        raise ValueError("scattering_metrics needs at least three monitored times")
    if method == "auto":
        method = "duhamel" if traj.duhamel else "direct"
    grid = traj.final.grid
    if method == "direct":
        profiles = [linear_flow(traj.snapshots[t], -t) for t in times]
        cauchy = tuple(h1_norm(b - a) for a, b in zip(profiles, profiles[1:]))
    elif method == "duhamel":
        accs = [traj.duhamel[t] for t in times]
        cauchy = tuple(h1_norm(Field2D(grid, sfft.ifft2(b - a))) for a, b in zip(accs, accs[1:]))
    else:
        raise ValueError(f"unknown method {method!r}")
    incr = tuple(
        traj.record_at(b).l4tx_accum - traj.record_at(a).l4tx_accum for a, b in zip(times, times[1:])
    )
    return ScatteringMetrics(tuple(times[:-1]), tuple(times[1:]), cauchy, incr)


def dyadic_times(T: float, count: int) -> list[float]:
    """T / 2^count, ..., T / 2, T."""
    return [T / 2**k for k in range(count, -1, -1)]


def write_records(path, records: Sequence[fn.DiagnosticsRecord]) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fn.CSV_COLUMNS)
        for rec in records:
            writer.writerow(rec.row())
