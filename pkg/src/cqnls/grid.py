"""Periodic 2d grids, spectral calculus and Littlewood-Paley projectors.

Fields live on the box [-L, L)^2 sampled at n points per axis.  Axis 0 is x,
axis 1 is y.  The Fourier transform uses the unitary convention

    u_hat(xi) = h^2 / (2 pi) * sum_j u(x_j) exp(-i xi . x_j)

so that sum |u_hat|^2 dxi^2 = sum |u|^2 h^2.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft as sfft
from scipy.interpolate import CubicSpline

FIELD_MAGIC = "CQNLS-FIELD v1"


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on [-L, L)^2 with n points per axis."""

    n: int
    half_width: float

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 16 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 16, got {self.n}")
        if not self.half_width > 0 or not math.isfinite(self.half_width):
            raise ValueError(f"half_width must be positive, got {self.half_width}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.n

    @property
    def dk(self) -> float:
        """Frequency resolution pi / L."""
        return math.pi / self.half_width

    @property
    def max_frequency(self) -> float:
        """Largest frequency component pi / h."""
        return math.pi / self.spacing

    @property
    def cell_area(self) -> float:
        return self.spacing**2

    @cached_property
    def x(self) -> np.ndarray:
        return -self.half_width + self.spacing * np.arange(self.n)

    @cached_property
    def k(self) -> np.ndarray:
        """1d angular frequencies in FFT order."""
        return 2.0 * np.pi * sfft.fftfreq(self.n, d=self.spacing)

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.x, indexing="ij")

    @cached_property
    def radius(self) -> np.ndarray:
        X, Y = self.mesh
        return np.hypot(X, Y)

    @cached_property
    def kmesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.k, self.k, indexing="ij")

    @cached_property
    def k2(self) -> np.ndarray:
        KX, KY = self.kmesh
        return KX**2 + KY**2

    @cached_property
    def kabs(self) -> np.ndarray:
        return np.sqrt(self.k2)

    def zeros(self) -> "Field2D":
        return Field2D(self, np.zeros((self.n, self.n), dtype=complex))

    def from_function(self, func) -> "Field2D":
        """Sample ``func(x, y)`` on the grid."""
        X, Y = self.mesh
        return Field2D(self, np.asarray(func(X, Y), dtype=complex))

    def from_radial(self, func) -> "Field2D":
        """Sample a radial function ``func(r)`` on the grid."""
        return Field2D(self, np.asarray(func(self.radius), dtype=complex))


def make_grid(n: int, half_width: float) -> GridSpec:
    return GridSpec(int(n), float(half_width))


@dataclass(frozen=True, eq=False)
class Field2D:
    """Complex samples of a function on a GridSpec.

    The values array is made read-only on construction; operations always
    return new fields.
    """

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=complex, copy=True)
        shape = (self.grid.n, self.grid.n)
        if vals.shape != shape:
            raise ValueError(f"field shape {vals.shape} does not match grid {shape}")
        if not np.all(np.isfinite(vals)):
            raise FloatingPointError("field contains non-finite values")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def like(self, values: np.ndarray) -> "Field2D":
        return Field2D(self.grid, values)

    def __add__(self, other: "Field2D") -> "Field2D":
        return self.like(self.values + other.values)

    def __sub__(self, other: "Field2D") -> "Field2D":
        return self.like(self.values - other.values)

    def __mul__(self, scalar) -> "Field2D":
        return self.like(self.values * scalar)

    __rmul__ = __mul__

    def conj(self) -> "Field2D":
        return self.like(self.values.conj())

    def norm(self) -> float:
        return l2_norm(self)


@dataclass(frozen=True)
class RadialProfile:
    """Samples f(r_j) on the midpoint mesh r_j = (j + 1/2) dr."""

    r_values: np.ndarray
    samples: np.ndarray
    dr: float
    angular_deviation: float = 0.0

    def __post_init__(self):
        r = np.asarray(self.r_values, dtype=float)
        if r.ndim != 1 or r.size < 2:
            raise ValueError("radial mesh needs at least two points")
        if r[0] <= 0:
            raise ValueError("radial mesh must not sample the origin")
        if not np.allclose(np.diff(r), self.dr, rtol=1e-9, atol=0):
            raise ValueError("radial mesh must be uniform with spacing dr")
        object.__setattr__(self, "r_values", r)
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=complex))

    @classmethod
    def midpoint(cls, m: int, r_max: float, samples=None) -> "RadialProfile":
        dr = r_max / m
        r = (np.arange(m) + 0.5) * dr
        if samples is None:
            samples = np.zeros(m, dtype=complex)
        elif callable(samples):
            samples = samples(r)
        return cls(r, samples, dr)

    @property
    def m(self) -> int:
        return self.r_values.size

    @property
    def r_max(self) -> float:
        return self.m * self.dr

    def with_samples(self, samples) -> "RadialProfile":
        return RadialProfile(self.r_values, samples, self.dr)

    def l2_norm(self) -> float:
        """Norm in L^2(R^2) of the radial lift, midpoint rule."""
        return math.sqrt(2.0 * np.pi * np.sum(np.abs(self.samples) ** 2 * self.r_values) * self.dr)


# -- transforms ---------------------------------------------------------------


def to_fourier(u: Field2D) -> np.ndarray:
    """Unitary transform, FFT order, phases relative to the grid corner."""
    return sfft.fft2(u.values) * (u.grid.cell_area / (2.0 * np.pi))


def from_fourier(grid: GridSpec, u_hat: np.ndarray) -> Field2D:
    return Field2D(grid, sfft.ifft2(u_hat) * (2.0 * np.pi / grid.cell_area))


def apply_multiplier(u: Field2D, symbol: np.ndarray) -> Field2D:
    return u.like(sfft.ifft2(sfft.fft2(u.values) * symbol))


def l2_norm(u: Field2D) -> float:
    return math.sqrt(float(np.sum(np.abs(u.values) ** 2)) * u.grid.cell_area)


def fourier_l2_norm(u: Field2D) -> float:
    return math.sqrt(float(np.sum(np.abs(to_fourier(u)) ** 2)) * u.grid.dk**2)


def integrate(grid: GridSpec, density: np.ndarray) -> float:
    """Grid quadrature with h^2 weights (numpy's pairwise summation)."""
    return float(np.sum(density)) * grid.cell_area


# -- free flow and derivatives -------------------------------------------------


def linear_flow(u: Field2D, t: float) -> Field2D:
    """Free Schrodinger propagator exp(i t Laplacian)."""
    if t == 0:
        return u
    return apply_multiplier(u, np.exp(-1j * t * u.grid.k2))


def gradient(u: Field2D) -> tuple[Field2D, Field2D]:
    u_hat = sfft.fft2(u.values)
    KX, KY = u.grid.kmesh
    return u.like(sfft.ifft2(1j * KX * u_hat)), u.like(sfft.ifft2(1j * KY * u_hat))


def gradient_arrays(u: Field2D) -> tuple[np.ndarray, np.ndarray]:
    u_hat = sfft.fft2(u.values)
    KX, KY = u.grid.kmesh
    gx, gy = sfft.ifft2(1j * KX * u_hat), sfft.ifft2(1j * KY * u_hat)
    if not np.any(u.values.imag):
        # real fields have real derivatives; drop the roundoff
        return gx.real + 0j, gy.real + 0j
    return gx, gy


def laplacian(u: Field2D) -> Field2D:
    return apply_multiplier(u, -u.grid.k2)


def weighted_radial_sup(u: Field2D) -> float:
    """max over the grid of |x|^(1/2) |u(x)|."""
    return float(np.max(np.sqrt(u.grid.radius) * np.abs(u.values)))


def spectral_tail_fraction(u: Field2D) -> float:
    """L^2 fraction of u carried by |xi| > 2 pi / (3h)."""
    u_hat = sfft.fft2(u.values)
    total = np.sum(np.abs(u_hat) ** 2)
    if total == 0:
        return 0.0
    cut = 2.0 * np.pi / (3.0 * u.grid.spacing)
    tail = np.sum(np.abs(u_hat[u.grid.kabs > cut]) ** 2)
    return math.sqrt(float(tail / total))


# -- Littlewood-Paley ----------------------------------------------------------


def _bump(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def smooth_step(s) -> np.ndarray:
    """Transition profile: 1 for s <= 1, 0 for s >= 2, C-infinity in between."""
    s = np.asarray(s, dtype=float)
    a = _bump(2.0 - s)
    b = _bump(s - 1.0)
    return a / (a + b)


def smooth_step_derivatives(s) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (theta, theta', theta'') evaluated at s."""
    s = np.asarray(s, dtype=float)
    theta = smooth_step(s)
    d1 = np.zeros_like(s)
    d2 = np.zeros_like(s)
    mid = (s > 1.0) & (s < 2.0)
    if np.any(mid):
        x = 2.0 - s[mid]
        y = s[mid] - 1.0
        a, b = np.exp(-1.0 / x), np.exp(-1.0 / y)
        fa1, fb1 = a / x**2, b / y**2
        fa2, fb2 = a * (1.0 / x**4 - 2.0 / x**3), b * (1.0 / y**4 - 2.0 / y**3)
        # d/ds of a(s) = f(2 - s) flips sign
        a1, b1 = -fa1, fb1
        a2, b2 = fa2, fb2
        D = a + b
        num = a1 * b - a * b1
        d1[mid] = num / D**2
        d2[mid] = ((a2 * b - a * b2) * D - 2.0 * num * (a1 + b1)) / D**3
    return theta, d1, d2


def cutoff(grid: GridSpec, R: float) -> np.ndarray:
    """Smooth chi_R: 1 on |x| <= R, 0 on |x| >= 2R."""
    return smooth_step(grid.radius / R)


BANDS = ("low", "band", "high")


def lp_symbol(grid: GridSpec, band: str, N: float) -> np.ndarray:
    if band not in BANDS:
        raise ValueError(f"band must be one of {BANDS}, got {band!r}")
    if not (grid.dk <= N <= grid.max_frequency):
        raise ValueError(
            f"N={N} outside representable frequencies [{grid.dk:.4g}, {grid.max_frequency:.4g}]"
        )
    low = smooth_step(grid.kabs / N)
    if band == "low":
        return low
    if band == "high":
        return 1.0 - low
    return low - smooth_step(grid.kabs / (N / 2.0))


def lp_project(u: Field2D, band: str, N: float) -> Field2D:
    """P_{<=N} ('low'), P_N ('band') or P_{>N} ('high')."""
    return apply_multiplier(u, lp_symbol(u.grid, band, N))


# -- radial extraction ---------------------------------------------------------

_RAY_CHUNK = 1024


def _ray_values(u: Field2D, r: np.ndarray) -> np.ndarray:
    """Trigonometric interpolant of u on the 8 axis/diagonal rays.

    Returns an array of shape (8, len(r)).  Along these rays the 2d
    interpolant collapses to a 1d sum, so evaluation is O(n m).
    """
    grid = u.grid
    n = grid.n
    kappa = np.rint(sfft.fftfreq(n) * n).astype(int)
    parity = np.where(kappa % 2 == 0, 1.0, -1.0)
    coeff = sfft.fft2(u.values) / n**2 * np.outer(parity, parity)
    base = np.pi / grid.half_width
    KA, KB = np.meshgrid(kappa, kappa, indexing="ij")

    def collapse(index):
        shift = index.min()
        idx = (index - shift).ravel()
        size = int(idx.max()) + 1
        c = coeff.ravel()
        summed = np.bincount(idx, c.real, size) + 1j * np.bincount(idx, c.imag, size)
        return np.arange(size) + shift, summed

    lines = [
        (collapse(KA), 1.0),  # x-axis
        (collapse(KB), 1.0),  # y-axis
        (collapse(KA + KB), 1.0 / math.sqrt(2.0)),  # diagonal
        (collapse(KA - KB), 1.0 / math.sqrt(2.0)),  # anti-diagonal
    ]
    out = np.empty((8, r.size), dtype=complex)
    for start in range(0, r.size, _RAY_CHUNK):
        rr = r[start : start + _RAY_CHUNK]
        for i, ((freqs, coefs), scale) in enumerate(lines):
            phase = np.exp(1j * base * np.outer(rr * scale, freqs))
            out[2 * i, start : start + rr.size] = phase @ coefs
            out[2 * i + 1, start : start + rr.size] = phase.conj() @ coefs
    return out


def radial_average(u: Field2D, m: int, r_max: float | None = None) -> RadialProfile:
    """Average u over angle onto a midpoint radial mesh.

    The angular average uses the exact spectral interpolant sampled along
    the two coordinate axes and the two diagonals in both directions.  The
    largest deviation of any ray from the mean is reported as
    ``angular_deviation``.
    """
    if r_max is None:
        r_max = u.grid.half_width
    if r_max > u.grid.half_width:
        raise ValueError("r_max must not exceed the box half width")
    dr = r_max / m
    r = (np.arange(m) + 0.5) * dr
    rays = _ray_values(u, r)
    mean = rays.mean(axis=0)
    deviation = float(np.max(np.abs(rays - mean))) if m else 0.0
    return RadialProfile(r, mean, dr, deviation)


def radial_lift(profile: RadialProfile, grid: GridSpec) -> Field2D:
    """Evaluate f(|x|) on the grid by even cubic-spline interpolation; zero past r_max."""
    r = profile.r_values
    nodes = np.concatenate([-r[::-1], r])
    vals = np.concatenate([profile.samples[::-1], profile.samples])
    spline_re = CubicSpline(nodes, vals.real)
    spline_im = CubicSpline(nodes, vals.imag)
    rad = grid.radius
    inside = rad <= profile.r_max
    out = np.zeros_like(rad, dtype=complex)
    out[inside] = spline_re(rad[inside]) + 1j * spline_im(rad[inside])
    return Field2D(grid, out)


# -- persistence ---------------------------------------------------------------


def write_field(path, u: Field2D) -> None:
    path = Path(path)
    header = json.dumps({"n": u.grid.n, "half_width": u.grid.half_width})
    data = np.empty((u.grid.n, u.grid.n, 2), dtype="<f8")
    data[..., 0] = u.values.real
    data[..., 1] = u.values.imag
    with path.open("wb") as fh:
        fh.write(f"{FIELD_MAGIC}\n{header}\n".encode("ascii"))
        fh.write(data.tobytes(order="C"))


def read_field(path) -> Field2D:
    with Path(path).open("rb") as fh:
        magic = fh.readline().decode("ascii").rstrip("\n")
        if magic != FIELD_MAGIC:
            raise ValueError(f"not a field file: bad magic {magic!r}")
        meta = json.loads(fh.readline().decode("ascii"))
        grid = make_grid(int(meta["n"]), float(meta["half_width"]))
        raw = fh.read()
    expected = grid.n * grid.n * 2 * 8
    if len(raw) != expected:
        raise ValueError(f"field payload has {len(raw)} bytes, expected {expected}")
    data = np.frombuffer(raw, dtype="<f8").reshape(grid.n, grid.n, 2)
    return Field2D(grid, data[..., 0] + 1j * data[..., 1])
