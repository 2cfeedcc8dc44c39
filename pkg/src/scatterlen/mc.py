"""Monte Carlo side: exact-in-law stable paths and Feynman-Kac estimates.

The symmetric alpha-stable process is simulated by subordination: a
Brownian motion run at twice the usual speed evaluated at a positive
alpha/2-stable subordinator, giving increments with characteristic
function exp(-dt |xi|^alpha) without discretization error in the driving
law.  Each path owns an RNG stream derived from (master_seed, path index),
and reductions run in path order, so estimates are bit-reproducible
independent of any parallel scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grids import Potential
from .riesz import riesz_constant, unit_ball_volume, unit_sphere_area

_PATH_DOMAIN = 0
_BATCH_DOMAIN = 1
_START_DOMAIN = 2


@dataclass(frozen=True)
class McConfig:
    alpha: float
    d: int
    time_step: float
    horizon: float
    halt_radius: float
    paths: int
    master_seed: int
    start: tuple[float, ...] | str = "potential"

    def __post_init__(self):
        if not (0.0 < self.alpha < 2.0):
            raise ValueError("alpha must lie in (0, 2)")
        if self.d < 1:
            raise ValueError("dimension must be >= 1")
        if self.time_step <= 0:
            raise ValueError("time_step must be > 0")
        if self.horizon < self.time_step:
            raise ValueError("horizon must cover at least one step")
        if self.halt_radius <= 0:
            raise ValueError("halt_radius must be > 0")
        if self.paths < 1:
            raise ValueError("need at least one path")
        if isinstance(self.start, str):
            if self.start != "potential":
                raise ValueError("start must be a point or the string 'potential'")
        else:
            object.__setattr__(self, "start", tuple(float(c) for c in self.start))
            if len(self.start) != self.d:
                raise ValueError("start point has wrong dimension")

    @property
    def steps(self) -> int:
        return int(round(self.horizon / self.time_step))


def stream(master_seed: int, domain: int, index: int) -> np.random.Generator:
    """Counter-style independent stream for one work item."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=master_seed, spawn_key=(domain, index))
    )


def sample_positive_stable(beta: float, rng: np.random.Generator, size=None):
    """Positive beta-stable draw with Laplace transform exp(-lambda^beta).

    Kanter's representation: with U uniform on (0, pi) and W standard
    exponential,
        A = sin(beta U) sin((1-beta) U)^((1-beta)/beta)
            / (sin(U)^(1/beta) W^((1-beta)/beta)).
    """
    if not (0.0 < beta < 1.0):
        raise ValueError("stable index beta must lie in (0, 1)")
    # clamps cost ~1e-12 of mass and keep every trig/power term away from
    # 0/0 at the stream scale of the large path ensembles
    u = np.clip(rng.uniform(0.0, np.pi, size), 1e-12, np.pi - 1e-12)
    w = np.maximum(rng.standard_exponential(size), 1e-300)
    return (
        np.sin(beta * u)
        * np.sin((1.0 - beta) * u) ** ((1.0 - beta) / beta)
        / (np.sin(u) ** (1.0 / beta) * w ** ((1.0 - beta) / beta))
    )


def sample_stable_increment(
    alpha: float, d: int, dt: float, rng: np.random.Generator, size: int | None = None
) -> np.ndarray:
    """Increments of the symmetric alpha-stable process over time dt.

    Subordinated Brownian motion at double speed: sqrt(2 A) Z with
    A = dt^(2/alpha) A_1 for a positive alpha/2-stable A_1 and standard
    normal Z, which has characteristic function exp(-dt |xi|^alpha).
    """
    m = 1 if size is None else size
    a = dt ** (2.0 / alpha) * sample_positive_stable(alpha / 2.0, rng, m)
    z = rng.standard_normal((m, d))
    out = np.sqrt(2.0 * a)[:, None] * z
    return out[0] if size is None else out


@dataclass(frozen=True)
class PathRecord:
    times: np.ndarray
    positions: np.ndarray
    halted: bool


def simulate_path(cfg: McConfig, path_index: int = 0, x0=None) -> PathRecord:
    """One path at the time grid {0, h, 2h, ...}, truncated at the first
    exit from ball(0, halt_radius) or at the horizon."""
    rng = stream(cfg.master_seed, _PATH_DOMAIN, path_index)
    if x0 is None:
        x0 = np.zeros(cfg.d) if isinstance(cfg.start, str) else np.array(cfg.start)
    inc = sample_stable_increment(cfg.alpha, cfg.d, cfg.time_step, rng, cfg.steps)
    pos = np.vstack([x0, x0 + np.cumsum(inc, axis=0)])
    radius = np.sqrt((pos**2).sum(axis=1))
    outside = np.nonzero(radius > cfg.halt_radius)[0]
    halted = outside.size > 0
    if halted:
        pos = pos[: outside[0] + 1]
    times = cfg.time_step * np.arange(len(pos))
    return PathRecord(times=times, positions=pos, halted=halted)


@dataclass(frozen=True)
class PathBatch:
    """Per-path Feynman-Kac integrals and ensemble statistics of e^(-I)."""

    integrals: np.ndarray
    halted: np.ndarray
    mean: float
    variance: float
    se: float

    @property
    def weights(self) -> np.ndarray:
        return np.exp(-self.integrals)


def _lookup(v: Potential, points: np.ndarray) -> np.ndarray:
    """Piecewise-constant evaluation: nearest cell value, 0 outside the box."""
    idx = v.grid.point_to_cell(points)
    out = np.zeros(len(points))
    inside = idx >= 0
    out[inside] = v.values[idx[inside]]
    return out


def _tail_bound(v: Potential):
    """Pointwise upper bound for U[v]: min(global cap, Riesz decay).

    The cap c (|v|_inf sigma rho^alpha / alpha + |v|_1 rho^(alpha-d))
    with rho the one-cell radius bounds the potential everywhere; beyond
    the support, c |v|_1 dist^(alpha-d) takes over.
    """
    grid = v.grid
    d, alpha = grid.d, grid.alpha
    c = riesz_constant(d, alpha)
    rho = (grid.weight / unit_ball_volume(d)) ** (1.0 / d)
    cap = c * (
        float(v.values.max(initial=0.0)) * unit_sphere_area(d) * rho**alpha / alpha
        + v.norm_l1 * rho ** (alpha - d)
    )
    sb = v.support_box
    norm1 = v.norm_l1

    def bound(points: np.ndarray) -> np.ndarray:
        if sb is None:
            return np.zeros(len(points))
        lo = np.array([b[0] for b in sb])
        hi = np.array([b[1] for b in sb])
        gap = np.maximum(lo - points, 0.0) + np.maximum(points - hi, 0.0)
        dist = np.sqrt((gap**2).sum(axis=1))
        out = np.full(len(points), cap)
        far = dist > 0
        out[far] = np.minimum(cap, c * norm1 * dist[far] ** (alpha - d))
        return out

    return bound, cap


def _run_batch(v: Potential, cfg: McConfig, x0_of_path) -> tuple[PathBatch, float]:
    """Stream paths, accumulating left-endpoint Riemann sums of v along
    each; returns the batch and the mean horizon-tail bound U[v](X_T)."""
    steps = cfg.steps
    h = cfg.time_step
    bound, _ = _tail_bound(v)
    integrals = np.empty(cfg.paths)
    halted = np.zeros(cfg.paths, dtype=bool)
    tail_sum = 0.0
    for i in range(cfg.paths):
        rng = stream(cfg.master_seed, _PATH_DOMAIN, i)
        x0 = x0_of_path(i)
        inc = sample_stable_increment(cfg.alpha, cfg.d, h, rng, steps)
        # left endpoints X_0 .. X_{(steps-1) h}
        lefts = np.empty((steps, cfg.d))
        lefts[0] = x0
        np.cumsum(inc[:-1], axis=0, out=lefts[1:])
        lefts[1:] += x0
        radius2 = (lefts**2).sum(axis=1)
        out = np.nonzero(radius2 > cfg.halt_radius**2)[0]
        stop = steps
        if out.size:
            halted[i] = True
            stop = int(out[0])
        vals = _lookup(v, lefts[:stop])
        integrals[i] = h * vals.sum()
        if not halted[i]:
            x_end = lefts[-1] + inc[-1]
            tail_sum += float(bound(x_end[None, :])[0])
    weights = np.exp(-integrals)
    mean = float(weights.mean())
    var = float(weights.var(ddof=1)) if cfg.paths > 1 else 0.0
    se = math.sqrt(var / cfg.paths) if cfg.paths > 1 else 0.0
    batch = PathBatch(
        integrals=integrals, halted=halted, mean=mean, variance=var, se=se
    )
    return batch, tail_sum / cfg.paths


@dataclass(frozen=True)
class FkEstimate:
    """mean, SE of e^(-int v) plus the additive bias budget.

    halting_bias bounds the lost mass of int v after leaving the halt
    ball; horizon_bias bounds E U[v](X_T), the remaining integral past
    the finite horizon.  Both push the estimate of 1 - U_v upward.
    """

    batch: PathBatch
    start: tuple[float, ...]
    halting_bias: float
    horizon_bias: float

    @property
    def mean(self) -> float:
        return self.batch.mean

    @property
    def se(self) -> float:
        return self.batch.se

    @property
    def bias_budget(self) -> float:
        return self.halting_bias + self.horizon_bias


def _halting_bias(v: Potential, cfg: McConfig) -> float:
    grid = v.grid
    d, alpha = grid.d, grid.alpha
    r_supp = v.support_radius
    if cfg.halt_radius <= r_supp:
        raise ValueError("halt_radius must exceed the support radius of v")
    _, cap = _tail_bound(v)
    dist = cfg.halt_radius - r_supp
    return min(cap, riesz_constant(d, alpha) * v.norm_l1 * dist ** (alpha - d))


def feynman_kac(v: Potential, cfg: McConfig) -> FkEstimate:
    """Estimate E^x exp(-int_0^T v(X_s) ds) by the left-endpoint sum."""
    if v.grid.d != cfg.d or v.grid.alpha != cfg.alpha:
        raise ValueError("potential grid and MC config disagree on (d, alpha)")
    if isinstance(cfg.start, str):
        raise ValueError("feynman_kac needs a fixed start point, not a distribution")
    x0 = np.array(cfg.start)
    batch, horizon_bias = _run_batch(v, cfg, lambda i: x0)
    return FkEstimate(
        batch=batch,
        start=tuple(x0),
        halting_bias=_halting_bias(v, cfg),
        horizon_bias=horizon_bias,
    )


@dataclass(frozen=True)
class McScattering:
    gamma: float
    se: float
    bias_budget: float
    batch: PathBatch


def mc_scattering(v: Potential, cfg: McConfig) -> McScattering:
    """Gamma(v) = |v|_1 E_{x ~ v/|v|_1} E^x exp(-int v(X) ds).

    Start cells are importance-sampled proportional to v * weight; the
    outer integral becomes the mixture expectation, which keeps the
    variance down for concentrated potentials.
    """
    if v.grid.d != cfg.d or v.grid.alpha != cfg.alpha:
        raise ValueError("potential grid and MC config disagree on (d, alpha)")
    norm1 = v.norm_l1
    if norm1 == 0.0:
        empty = PathBatch(
            integrals=np.zeros(0), halted=np.zeros(0, dtype=bool),
            mean=1.0, variance=0.0, se=0.0,
        )
        return McScattering(gamma=0.0, se=0.0, bias_budget=0.0, batch=empty)
    rng = stream(cfg.master_seed, _START_DOMAIN, 0)
    prob = v.values / v.values.sum()
    cells = rng.choice(v.grid.size, size=cfg.paths, p=prob)
    centers = v.grid.centers()
    batch, horizon_bias = _run_batch(v, cfg, lambda i: centers[cells[i]])
    bias = norm1 * (_halting_bias(v, cfg) + horizon_bias)
    return McScattering(
        gamma=norm1 * batch.mean,
        se=norm1 * batch.se,
        bias_budget=bias,
        batch=batch,
    )


# --- folding -----------------------------------------------------------------


@dataclass(frozen=True)
class FoldSpec:
    """Target cube for the coordinatewise tent-map fold."""

    cube: tuple[tuple[float, float], ...]

    def __post_init__(self):
        for lo, hi in self.cube:
            if not (np.isfinite(lo) and np.isfinite(hi) and hi > lo):
                raise ValueError(f"degenerate cube side ({lo}, {hi})")

    def fold(self, x: np.ndarray) -> np.ndarray:
        """Fold points onto the cube; exact identity on the cube itself."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = x.copy()
        for k, (lo, hi) in enumerate(self.cube):
            col = x[:, k]
            outside = (col < lo) | (col > hi)
            if np.any(outside):
                y = (col[outside] - lo) / (hi - lo)
                g = 1.0 - np.abs(np.mod(y, 2.0) - 1.0)
                out[outside, k] = lo + g * (hi - lo)
        return out


def fold_point(x, spec: FoldSpec) -> np.ndarray:
    """Tent-map image of a single point in the fold target cube."""
    return spec.fold(np.asarray(x, dtype=float)[None, :])[0]


@dataclass(frozen=True)
class FoldReport:
    paths: int
    violations: int
    mean_folded: float
    mean_free: float
    se_folded: float
    se_free: float


def folded_comparison(v: Potential, cfg: McConfig, spec: FoldSpec) -> FoldReport:
    """Pathwise comparison of the folded and free Feynman-Kac integrals.

    I_folded >= I_free holds term by term: the fold is the identity on
    the cube (where v lives) and maps outside points onto it, where v is
    nonnegative, so the folded path sees at least the free path's
    potential at every step.  Violations are counted exactly.
    """
    sb = v.support_box
    if sb is not None:
        for (slo, shi), (clo, chi) in zip(sb, spec.cube):
            if slo < clo - 1e-12 or shi > chi + 1e-12:
                raise ValueError("support of v must lie inside the folding cube")
    if isinstance(cfg.start, str):
        raise ValueError("folded_comparison needs a fixed start point")
    h = cfg.time_step
    steps = cfg.steps
    x0 = np.array(cfg.start)
    i_fold = np.empty(cfg.paths)
    i_free = np.empty(cfg.paths)
    for i in range(cfg.paths):
        rng = stream(cfg.master_seed, _PATH_DOMAIN, i)
        inc = sample_stable_increment(cfg.alpha, cfg.d, h, rng, steps)
        lefts = np.empty((steps, cfg.d))
        lefts[0] = x0
        np.cumsum(inc[:-1], axis=0, out=lefts[1:])
        lefts[1:] += x0
        v_free = _lookup(v, lefts)
        v_fold = _lookup(v, spec.fold(lefts))
        i_free[i] = h * v_free.sum()
        i_fold[i] = h * v_fold.sum()
    w_fold = np.exp(-i_fold)
    w_free = np.exp(-i_free)
    return FoldReport(
        paths=cfg.paths,
        violations=int(np.count_nonzero(i_fold < i_free)),
        mean_folded=float(w_fold.mean()),
        mean_free=float(w_free.mean()),
        se_folded=float(w_fold.std(ddof=1) / math.sqrt(cfg.paths)) if cfg.paths > 1 else 0.0,
        se_free=float(w_free.std(ddof=1) / math.sqrt(cfg.paths)) if cfg.paths > 1 else 0.0,
    )


# --- transience diagnostics --------------------------------------------------


@dataclass(frozen=True)
class MomentDecay:
    times: tuple[float, ...]
    estimates: tuple[float, ...]
    ses: tuple[float, ...]
    slope: float
    slope_se: float


def moment_decay(alpha: float, d: int, t_list, cfg: McConfig) -> MomentDecay:
    """Decay of M(t) = E |X_t|^(alpha-d), the kernel-smoothing supremum proxy.

    Self-similarity gives M(t) = t^((alpha-d)/alpha) E|X_1|^(alpha-d);
    the fitted log-log slope with a residual-based standard error is
    reported against that exponent.
    """
    if d <= alpha:
        raise ValueError("moment decay requires d > alpha")
    ts = sorted(float(t) for t in t_list)
    if len(ts) < 3 or ts[0] <= 0:
        raise ValueError("need at least three positive times")
    if math.log10(ts[-1] / ts[0]) < 1.5:
        raise ValueError("time list should span at least 1.5 decades")
    means, ses = [], []
    for j, t in enumerate(ts):
        rng = stream(cfg.master_seed, _BATCH_DOMAIN, j)
        x = sample_stable_increment(alpha, d, t, rng, cfg.paths)
        m = np.sqrt((x**2).sum(axis=1)) ** (alpha - d)
        means.append(float(m.mean()))
        ses.append(float(m.std(ddof=1) / math.sqrt(cfg.paths)))
    lt, lm = np.log(ts), np.log(means)
    coeffs, cov = np.polyfit(lt, lm, 1, cov=True)
    return MomentDecay(
        times=tuple(ts),
        estimates=tuple(means),
        ses=tuple(ses),
        slope=float(coeffs[0]),
        slope_se=float(np.sqrt(cov[0, 0])),
    )


def empirical_cf(
    alpha: float, d: int, t: float, frequencies, paths: int, master_seed: int
) -> list[tuple[float, float, float, float]]:
    """Empirical Re E exp(i xi . X_t) against exp(-t |xi|^alpha).

    Returns rows (|xi|, empirical, target, se).
    """
    rows = []
    for j, xi in enumerate(frequencies):
        xi = np.asarray(xi, dtype=float).reshape(-1)
        if xi.size != d:
            raise ValueError("frequency has wrong dimension")
        rng = stream(master_seed, _BATCH_DOMAIN, 1000 + j)
        x = sample_stable_increment(alpha, d, t, rng, paths)
        c = np.cos(x @ xi)
        rows.append(
            (
                float(np.linalg.norm(xi)),
                float(c.mean()),
                float(np.exp(-t * np.linalg.norm(xi) ** alpha)),
                float(c.std(ddof=1) / math.sqrt(paths)),
            )
        )
    return rows
