"""Riesz potential operator as a dense quadrature-weighted kernel matrix.

The potential operator U[f](x) = c * int f(y) |x-y|^(alpha-d) dy is realized
with the normalization c that makes U the inverse of the fractional
Laplacian with Fourier symbol |xi|^alpha.  Off-diagonal entries use the
midpoint rule; the singular diagonal is the exact integral of the kernel
over the ball of one-cell volume centered at the cell center.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as _gamma

from .grids import GridSpec, Potential, ScalarField, _freeze

_CACHE_MAGIC = b"RZKM"
_CACHE_VERSION = 1


def riesz_constant(d: int, alpha: float) -> float:
    """c(d, alpha) = Gamma((d-alpha)/2) / (2^alpha pi^(d/2) Gamma(alpha/2)).

    Standard constant for which U[.] inverts the operator with symbol
    |xi|^alpha; requires alpha < d.
    """
    if not (0.0 < alpha < d):
        raise ValueError(f"need 0 < alpha < d, got alpha={alpha}, d={d}")
    return float(
        _gamma((d - alpha) / 2.0) / (2.0**alpha * np.pi ** (d / 2.0) * _gamma(alpha / 2.0))
    )


def laplacian_constant(d: int, alpha: float) -> float:
    """A(d, alpha) = 2^alpha Gamma((d+alpha)/2) / (pi^(d/2) |Gamma(-alpha/2)|).

    Normalization of the hypersingular representation of (-Laplace)^(alpha/2);
    consistent with riesz_constant, so the quadratic-form identities close
    numerically.
    """
    if not (0.0 < alpha < 2.0):
        raise ValueError(f"alpha must lie in (0, 2), got {alpha}")
    return float(
        2.0**alpha
        * _gamma((d + alpha) / 2.0)
        / (np.pi ** (d / 2.0) * abs(_gamma(-alpha / 2.0)))
    )


def unit_sphere_area(d: int) -> float:
    return float(2.0 * np.pi ** (d / 2.0) / _gamma(d / 2.0))


def unit_ball_volume(d: int) -> float:
    return float(np.pi ** (d / 2.0) / _gamma(d / 2.0 + 1.0))


@dataclass(frozen=True)
class KernelMatrix:
    """Dense quadrature-weighted Riesz kernel: (U[f])_i = sum_j K_ij f_j."""

    grid: GridSpec
    entries: np.ndarray
    constant: float

    def __post_init__(self):
        e = np.asarray(self.entries)
        if e.shape != (self.grid.size, self.grid.size):
            raise ValueError("kernel entries do not match the grid size")
        object.__setattr__(self, "entries", _freeze(e))


def assemble_riesz(grid: GridSpec) -> KernelMatrix:
    """Assemble the dense kernel for U[.] on the grid.

    Off-diagonal: K_ij = c * w * |x_i - x_j|^(alpha-d).  Diagonal: exact
    radial integral of the kernel over the equal-volume ball,
    c * sigma_{d-1} * rho^alpha / alpha with rho = (w / V_d)^(1/d).
    """
    d, alpha = grid.d, grid.alpha
    c = riesz_constant(d, alpha)
    x = grid.centers()
    w = grid.weight
    r2 = np.zeros((grid.size, grid.size))
    for k in range(d):
        dk = x[:, k, None] - x[None, :, k]
        r2 += dk * dk
    with np.errstate(divide="ignore"):
        K = c * w * r2 ** ((alpha - d) / 2.0)
    rho = (w / unit_ball_volume(d)) ** (1.0 / d)
    np.fill_diagonal(K, c * unit_sphere_area(d) * rho**alpha / alpha)
    return KernelMatrix(grid, K, c)


def apply_riesz(kernel: KernelMatrix, f: ScalarField | Potential) -> ScalarField:
    """U[f] as a grid field; finite everywhere for bounded grid data."""
    if f.grid != kernel.grid:
        raise ValueError("field and kernel live on different grids")
    return ScalarField(kernel.grid, kernel.entries @ f.values)


# --- binary cache ------------------------------------------------------------


def grid_cache_key(grid: GridSpec) -> str:
    """Stable hash of (d, alpha, box, n) for cache file naming."""
    payload = struct.pack("<qd q", grid.d, grid.alpha, grid.n)
    for lo, hi in grid.box:
        payload += struct.pack("<dd", lo, hi)
    return hashlib.sha256(payload).hexdigest()[:16]


def save_kernel(kernel: KernelMatrix, path) -> None:
    """Write header (magic, version, grid descriptor) + row-major f64 LE."""
    g = kernel.grid
    with open(path, "wb") as fh:
        fh.write(_CACHE_MAGIC)
        fh.write(struct.pack("<I", _CACHE_VERSION))
        fh.write(struct.pack("<qqd", g.d, g.n, g.alpha))
        for lo, hi in g.box:
            fh.write(struct.pack("<dd", lo, hi))
        fh.write(struct.pack("<d", kernel.constant))
        fh.write(kernel.entries.astype("<f8").tobytes(order="C"))


def load_kernel(path) -> KernelMatrix:
    with open(path, "rb") as fh:
        if fh.read(4) != _CACHE_MAGIC:
            raise ValueError(f"{path}: not a kernel cache file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != _CACHE_VERSION:
            raise ValueError(f"{path}: unsupported cache version {version}")
        d, n, alpha = struct.unpack("<qqd", fh.read(24))
        box = tuple(struct.unpack("<dd", fh.read(16)) for _ in range(d))
        (constant,) = struct.unpack("<d", fh.read(8))
        grid = GridSpec(int(d), alpha, box, int(n))
        data = np.frombuffer(fh.read(), dtype="<f8").reshape(grid.size, grid.size)
    return KernelMatrix(grid, data.copy(), constant)
