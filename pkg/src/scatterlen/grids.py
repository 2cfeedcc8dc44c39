"""Uniform box grids, nonnegative potentials and scalar fields.

Everything downstream (kernel assembly, fixed-point solves, Monte Carlo
start distributions) works on piecewise-constant functions over the cell
centers of an axis-aligned box lattice with midpoint quadrature.  Cell
ordering is lexicographic in the index tuple, so vectors and matrices are
bit-reproducible across runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, order="C")  # own copy, caller unaffected
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned box with n uniform cells per axis.

    Centers sit at lower + (i + 1/2) h per axis; every cell carries the
    same quadrature weight prod(h_k).  The stability index alpha rides
    along because the transience assumption d > alpha is a precondition
    of every kernel built on the grid.
    """

    d: int
    alpha: float
    box: tuple[tuple[float, float], ...]
    n: int

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"dimension must be >= 1, got {self.d}")
        if not (0.0 < self.alpha < 2.0):
            raise ValueError(f"alpha must lie in (0, 2), got {self.alpha}")
        if not (self.d > self.alpha):
            raise ValueError(
                f"need d > alpha (transient regime), got d={self.d}, alpha={self.alpha}"
            )
        if self.n < 2:
            raise ValueError(f"need at least 2 points per axis, got {self.n}")
        if len(self.box) != self.d:
            raise ValueError(f"box must have {self.d} axis ranges, got {len(self.box)}")
        for lo, hi in self.box:
            if not (np.isfinite(lo) and np.isfinite(hi) and hi > lo):
                raise ValueError(f"degenerate box side ({lo}, {hi})")

    @property
    def spacing(self) -> np.ndarray:
        """Cell spacing h per axis."""
        return np.array([(hi - lo) / self.n for lo, hi in self.box])

    @property
    def weight(self) -> float:
        """Quadrature weight of a single cell, prod(h_k)."""
        return float(np.prod(self.spacing))

    @property
    def size(self) -> int:
        return self.n**self.d

    @property
    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.box])

    @property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.box])

    def axis_centers(self, k: int) -> np.ndarray:
        lo, hi = self.box[k]
        h = (hi - lo) / self.n
        return lo + (np.arange(self.n) + 0.5) * h

    def centers(self) -> np.ndarray:
        """All cell centers as an (size, d) array, lexicographic in indices."""
        axes = [self.axis_centers(k) for k in range(self.d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def scaled(self, r: float) -> "GridSpec":
        """Grid for x -> r x rescaling: box divided by r, same n."""
        if r <= 0:
            raise ValueError(f"scale factor must be positive, got {r}")
        box = tuple((lo / r, hi / r) for lo, hi in self.box)
        return GridSpec(self.d, self.alpha, box, self.n)

    def point_to_cell(self, x: np.ndarray) -> np.ndarray:
        """Flat cell indices of points (m, d); -1 outside the box or non-finite."""
        x = np.atleast_2d(x)
        h = self.spacing
        finite = np.all(np.isfinite(x), axis=1)
        scaled = np.floor((np.where(np.isfinite(x), x, 0.0) - self.lower) / h)
        idx = scaled.astype(np.int64)
        inside = finite & np.all((scaled >= 0) & (scaled < self.n), axis=1)
        flat = np.zeros(len(x), dtype=np.int64)
        for k in range(self.d):
            flat = flat * self.n + np.clip(idx[:, k], 0, self.n - 1)
        flat[~inside] = -1
        return flat


def build_grid(d: int, alpha: float, box, n: int) -> GridSpec:
    """Construct a GridSpec, normalizing a bare (lo, hi) pair in 1D."""
    box = tuple(box)
    if len(box) == 2 and np.isscalar(box[0]):
        box = (box,)
    box = tuple((float(lo), float(hi)) for lo, hi in box)
    return GridSpec(int(d), float(alpha), box, int(n))


@dataclass(frozen=True)
class ScalarField:
    """Real grid function sampled at cell centers."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = _freeze(np.asarray(self.values).reshape(-1))
        if v.shape != (self.grid.size,):
            raise ValueError(
                f"values have {v.size} entries, grid has {self.grid.size} cells"
            )
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class Potential(ScalarField):
    """Nonnegative grid function, units 1/time."""

    def __post_init__(self):
        super().__post_init__()
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise ValueError("potential values must be finite and >= 0")

    @property
    def norm_l1(self) -> float:
        return float(self.values.sum() * self.grid.weight)

    @property
    def support_box(self) -> tuple[tuple[float, float], ...] | None:
        """Bounding box of cells with nonzero value, None for v = 0."""
        mask = self.values > 0
        if not mask.any():
            return None
        pts = self.grid.centers()[mask]
        h = self.grid.spacing
        return tuple(
            (float(pts[:, k].min() - h[k] / 2), float(pts[:, k].max() + h[k] / 2))
            for k in range(self.grid.d)
        )

    @property
    def support_radius(self) -> float:
        """Largest |corner| over the support box, 0 for v = 0."""
        sb = self.support_box
        if sb is None:
            return 0.0
        return float(
            np.sqrt(sum(max(lo * lo, hi * hi) for lo, hi in sb))
        )


# --- potential shape algebra -------------------------------------------------
#
# Small closed set of named shapes; evaluation is pointwise at cell centers
# (indicators are not volume-fraction averaged, which keeps the rescaling
# law exact on nested grids).


@dataclass(frozen=True)
class Gaussian:
    center: tuple[float, ...]
    width: float
    amplitude: float

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("amplitude must be >= 0")
        if self.width <= 0:
            raise ValueError("width must be > 0")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        c = np.asarray(self.center, dtype=float)
        r2 = ((x - c) ** 2).sum(axis=1)
        return self.amplitude * np.exp(-r2 / (2.0 * self.width**2))


@dataclass(frozen=True)
class BallIndicator:
    center: tuple[float, ...]
    radius: float
    amplitude: float

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("amplitude must be >= 0")
        if self.radius <= 0:
            raise ValueError("radius must be > 0")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        c = np.asarray(self.center, dtype=float)
        r2 = ((x - c) ** 2).sum(axis=1)
        return np.where(r2 <= self.radius**2, self.amplitude, 0.0)


@dataclass(frozen=True)
class BoxIndicator:
    box: tuple[tuple[float, float], ...]
    amplitude: float

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("amplitude must be >= 0")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        inside = np.ones(len(x), dtype=bool)
        for k, (lo, hi) in enumerate(self.box):
            inside &= (x[:, k] >= lo) & (x[:, k] <= hi)
        return np.where(inside, self.amplitude, 0.0)


@dataclass(frozen=True)
class Sum:
    terms: tuple

    def __call__(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros(len(x))
        for t in self.terms:
            out += t(x)
        return out


@dataclass(frozen=True)
class Scaled:
    factor: float
    inner: object

    def __post_init__(self):
        if self.factor < 0:
            raise ValueError("scale factor must be >= 0")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.factor * self.inner(x)


_SHAPES = (Gaussian, BallIndicator, BoxIndicator, Sum, Scaled)


def eval_potential(spec, grid: GridSpec) -> Potential:
    """Evaluate a shape spec at the grid's cell centers."""
    if not isinstance(spec, _SHAPES):
        raise ValueError(f"unknown potential shape {type(spec).__name__!r}")
    return Potential(grid, spec(grid.centers()))


def scale_potential(v: Potential, r: float) -> Potential:
    """The rescaled potential v_r(x) = r^alpha v(r x).

    Lives on the grid with box divided by r and the same cell count, so
    the new centers are exactly the old ones divided by r and no shape
    re-evaluation happens: new values are r^alpha times the old values.
    Under this transform |v_r|_1 = r^(alpha-d) |v|_1.
    """
    if r <= 0:
        raise ValueError(f"scale factor must be positive, got {r}")
    g = v.grid.scaled(r)
    return Potential(g, r**v.grid.alpha * v.values)


def integrate(f: ScalarField) -> float:
    """Midpoint quadrature: sum of values times the uniform cell weight."""
    return float(f.values.sum() * f.grid.weight)


# --- aligned grid embedding --------------------------------------------------


def subgrid_indices(sub: GridSpec, sup: GridSpec) -> np.ndarray:
    """Flat indices of sub's cells inside sup; both grids must share spacing
    and cell alignment (sub a union of sup cells)."""
    if sub.d != sup.d or sub.alpha != sup.alpha:
        raise ValueError("grids differ in dimension or alpha")
    hs, hb = sub.spacing, sup.spacing
    if not np.allclose(hs, hb, rtol=1e-12, atol=0):
        raise ValueError("grids are not equally spaced")
    idx = sup.point_to_cell(sub.centers())
    if np.any(idx < 0):
        raise ValueError("subgrid sticks out of the enclosing grid")
    off = np.abs(sub.centers() - sup.centers()[idx])
    if np.any(off > 1e-9 * hb):
        raise ValueError("grids are not cell-aligned")
    return idx


def embed_potential(v: Potential, sup: GridSpec) -> Potential:
    """Zero-extend a potential onto an enclosing aligned grid."""
    idx = subgrid_indices(v.grid, sup)
    out = np.zeros(sup.size)
    out[idx] = v.values
    return Potential(sup, out)


def restrict_field(f: ScalarField, sub: GridSpec) -> ScalarField:
    """Restrict a field to an aligned subgrid."""
    idx = subgrid_indices(sub, f.grid)
    return ScalarField(sub, f.values[idx])
