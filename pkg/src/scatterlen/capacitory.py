"""Capacitory potential, scattering length and set capacity.

Solves the fixed-point equation U_v = U[v (1 - U_v)] with certified
two-sided envelopes.  The map T(u) = clip(U[v (1 - u)]) is order
reversing, so alternating iterates started from the trivial bounds give
monotone lower/upper envelopes that sandwich the discrete fixed point.
When the coupling |U[v .]| exceeds 1 the alternation stalls on a genuine
two-cycle; the solver then switches to a Newton step (the fixed-point
equation is affine), verifies the error with an approximate-inverse
residual bound, and re-enters the antitone sweep to polish.  Envelopes
stay certified throughout, and the scattering length inherits a bracket
gamma_low <= Gamma <= gamma_high from them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import Potential, ScalarField, integrate, scale_potential
from .riesz import KernelMatrix, assemble_riesz

_THETA_FLOOR = 1.0 / 64.0
_STALL_WINDOW = 5
_STALL_FACTOR = 0.7


@dataclass(frozen=True)
class SolverOptions:
    """Fixed-point controls: sup-norm gap target, iteration cap, damping."""

    tolerance: float = 1e-10
    max_iterations: int = 10_000
    damping: float = 1.0

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be > 0")
        if not (0.0 < self.damping <= 1.0):
            raise ValueError("damping must lie in (0, 1]")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class CapacitoryResult:
    """Converged envelopes for U_v, capacitory measure and Gamma bracket."""

    v: Potential
    u_low: ScalarField
    u_high: ScalarField
    mu: ScalarField
    gamma_low: float
    gamma_high: float
    iterations: int
    converged: bool
    escalated: bool = False

    @property
    def u_mid(self) -> ScalarField:
        return ScalarField(self.v.grid, 0.5 * (self.u_low.values + self.u_high.values))

    @property
    def gamma_mid(self) -> float:
        return 0.5 * (self.gamma_low + self.gamma_high)

    @property
    def bracket_width(self) -> float:
        return self.gamma_high - self.gamma_low

    def __post_init__(self):
        lo, hi = self.u_low.values, self.u_high.values
        if np.any(lo < 0) or np.any(hi > 1) or np.any(lo > hi):
            raise ValueError("envelopes must satisfy 0 <= u_low <= u_high <= 1")
        if np.any(self.mu.values < 0):
            raise ValueError("capacitory measure must be nonnegative")
        if not (0.0 <= self.gamma_low <= self.gamma_high <= self.v.norm_l1 * (1 + 1e-12)):
            raise ValueError("gamma bracket must satisfy 0 <= low <= high <= |v|_1")


def _check_same_grid(v: Potential, kernel: KernelMatrix) -> None:
    if v.grid != kernel.grid:
        raise ValueError("potential and kernel live on different grids")


def solve_capacitory(
    v: Potential, kernel: KernelMatrix, opts: SolverOptions = SolverOptions()
) -> CapacitoryResult:
    """Antitone bracketing solve of U = clip(K (v (1 - U))).

    The sweep uses the diagonally resolved form of the same equation,
    U_i = (K_ii v_i + sum_{j!=i} K_ij v_j (1 - U_j)) / (1 + K_ii v_i),
    which is order reversing with identical fixed points and does not
    blow up for strong potentials.  Envelopes are updated with relaxation
    factor theta, halved whenever the gap stalls; if the gap cannot close
    (supercritical coupling has genuine two-cycles) a verified dense
    solve of the affine system tightens the envelopes instead.
    """
    _check_same_grid(v, kernel)
    if np.any(v.values < 0):
        raise ValueError("potential must be nonnegative")
    vals = v.values
    K = kernel.entries
    n = vals.size
    kv = K @ vals
    diag = np.diag(K) * vals

    def sweep(u: np.ndarray) -> np.ndarray:
        resid = K @ (vals * (1.0 - u)) - diag * (1.0 - u)
        return np.clip((diag + resid) / (1.0 + diag), 0.0, 1.0)

    lo = np.zeros(n)
    hi = np.clip(kv, 0.0, 1.0)  # valid upper start: U_v <= U[v]
    theta = opts.damping
    gap = float(np.max(hi - lo)) if n else 0.0
    history: list[float] = [gap]
    iterations = 0
    escalated = False

    while gap > opts.tolerance and iterations < opts.max_iterations:
        cand_lo = sweep(hi)
        new_lo = np.maximum(lo, lo + theta * (cand_lo - lo))
        cand_hi = sweep(new_lo)
        new_hi = np.minimum(hi, hi + theta * (cand_hi - hi))
        if np.any(new_lo > new_hi):
            raise AssertionError("envelope ordering violated during iteration")
        lo, hi = new_lo, new_hi
        iterations += 1
        gap = float(np.max(hi - lo))
        history.append(gap)
        if len(history) > _STALL_WINDOW:
            if gap > _STALL_FACTOR * history[-_STALL_WINDOW - 1]:
                # oscillation / stall: damp, then give up on pure iteration
                if theta > _THETA_FLOOR:
                    theta *= 0.5
                else:
                    break
            history = history[-_STALL_WINDOW - 1 :]

    if gap > opts.tolerance:
        lo, hi, extra = _escalate(K, vals, kv, lo, hi, sweep)
        escalated = True
        iterations += extra
        gap = float(np.max(hi - lo))

    grid = v.grid
    u_lo = ScalarField(grid, lo)
    u_hi = ScalarField(grid, hi)
    mu = ScalarField(grid, vals * (1.0 - 0.5 * (lo + hi)))
    gamma_low = integrate(ScalarField(grid, vals * (1.0 - hi)))
    gamma_high = integrate(ScalarField(grid, vals * (1.0 - lo)))
    return CapacitoryResult(
        v=v,
        u_low=u_lo,
        u_high=u_hi,
        mu=mu,
        gamma_low=max(gamma_low, 0.0),
        gamma_high=max(gamma_high, gamma_low, 0.0),
        iterations=iterations,
        converged=bool(gap <= opts.tolerance),
        escalated=escalated,
    )


def _escalate(K, vals, kv, lo, hi, sweep):
    """Verified dense solve of (I + K diag(v)) U = K v on supp(v).

    Off the support the equation is explicit.  The error of the numeric
    solution is bounded through an approximate inverse Y: with
    E = I - Y A and q = |E|_inf < 1, |U - U*|_inf <= |Y r|_inf / (1 - q).
    The resulting enclosure is intersected with the monotone envelopes
    (both contain the fixed point) and polished by antitone sweeps.
    """
    n = vals.size
    support = vals > 0
    ns = int(support.sum())
    if ns == 0:
        return lo, hi, 0
    A = np.eye(ns) + K[np.ix_(support, support)] * vals[support][None, :]
    Y = np.linalg.inv(A)
    u_s = Y @ kv[support]
    for _ in range(2):  # iterative refinement to machine-level residual
        u_s += Y @ (kv[support] - A @ u_s)
    resid = kv[support] - A @ u_s
    q = float(np.abs(np.eye(ns) - Y @ A).sum(axis=1).max())
    if q >= 1.0:
        return lo, hi, 0  # inverse too inaccurate to certify; keep envelopes
    err_s = float(np.abs(Y @ resid).max()) / (1.0 - q) + 1e-15
    u = np.zeros(n)
    u[support] = u_s
    err = np.full(n, err_s)
    if ns < n:
        outside = ~support
        u[outside] = K[np.ix_(outside, support)] @ (vals[support] * (1.0 - u_s))
        err[outside] = (K[np.ix_(outside, support)] @ vals[support]) * err_s + 1e-15
    lo = np.maximum(lo, np.clip(u - err, 0.0, 1.0))
    hi = np.minimum(hi, np.clip(u + err, 0.0, 1.0))
    if np.any(lo > hi):
        raise AssertionError("verified enclosure conflicts with monotone envelopes")
    extra = 0
    for _ in range(3):
        new_lo = np.maximum(lo, sweep(hi))
        new_hi = np.minimum(hi, sweep(new_lo))
        if np.any(new_lo > new_hi):
            raise AssertionError("envelope ordering violated after escalation")
        lo, hi = new_lo, new_hi
        extra += 1
    return lo, hi, extra


def scattering_length(
    v: Potential, kernel: KernelMatrix, opts: SolverOptions = SolverOptions()
) -> tuple[float, float, float]:
    """Gamma(v) as (midpoint, lower, upper) of the certified bracket."""
    res = solve_capacitory(v, kernel, opts)
    return res.gamma_mid, res.gamma_low, res.gamma_high


def scaling_check(
    v: Potential,
    r: float,
    kernels: tuple[KernelMatrix, KernelMatrix] | None = None,
    opts: SolverOptions = SolverOptions(),
) -> tuple[float, float, float]:
    """Check Gamma(v_r) = r^(alpha-d) Gamma(v) on nested grids.

    Returns (lhs, rhs, relative_error) with lhs = Gamma(v_r) and
    rhs = r^(alpha-d) Gamma(v).
    """
    v_r = scale_potential(v, r)
    if kernels is None:
        kernels = (assemble_riesz(v.grid), assemble_riesz(v_r.grid))
    k_orig, k_scaled = kernels
    lhs = scattering_length(v_r, k_scaled, opts)[0]
    rhs = r ** (v.grid.alpha - v.grid.d) * scattering_length(v, k_orig, opts)[0]
    denom = abs(lhs) if lhs != 0 else 1.0
    return lhs, rhs, abs(lhs - rhs) / denom


@dataclass(frozen=True)
class EpsilonRow:
    eps: float
    gamma_over_eps: float
    deficit: float


@dataclass(frozen=True)
class EpsilonExpansion:
    rows: tuple[EpsilonRow, ...]
    slope: float
    p: float
    q: float


def epsilon_expansion(
    v: Potential,
    p: float,
    eps_list,
    kernel: KernelMatrix,
    opts: SolverOptions = SolverOptions(),
) -> EpsilonExpansion:
    """Weak-coupling behaviour of Gamma(eps v).

    Tabulates deficit(eps) = |v|_1 - Gamma(eps v)/eps, which the Hoelder
    bound controls as O(eps^(1/q)) for v in L^p, and fits the log-log
    slope of the deficit over the given eps ladder.
    """
    if not (1.0 < p < np.inf):
        raise ValueError("need 1 < p < inf")
    q = p / (p - 1.0)
    norm1 = v.norm_l1
    rows = []
    for eps in sorted(eps_list):
        res = solve_capacitory(Potential(v.grid, eps * v.values), kernel, opts)
        g_over = res.gamma_mid / eps
        rows.append(EpsilonRow(eps=eps, gamma_over_eps=g_over, deficit=norm1 - g_over))
    pos = [(r.eps, r.deficit) for r in rows if r.deficit > 0]
    if len(pos) >= 2:
        slope = float(np.polyfit(np.log([e for e, _ in pos]), np.log([d for _, d in pos]), 1)[0])
    else:
        slope = float("nan")
    return EpsilonExpansion(rows=tuple(rows), slope=slope, p=p, q=q)


@dataclass(frozen=True)
class CapacitySweep:
    amplitudes: tuple[float, ...]
    gamma_low: tuple[float, ...]
    gamma_high: tuple[float, ...]
    capacity_low: float
    capacity_high: float

    @property
    def gamma_mid(self) -> tuple[float, ...]:
        return tuple(0.5 * (a + b) for a, b in zip(self.gamma_low, self.gamma_high))


def capacity_sweep(
    k_set: Potential,
    amplitudes,
    kernel: KernelMatrix,
    opts: SolverOptions = SolverOptions(),
) -> CapacitySweep:
    """Gamma(M * 1_K) for an increasing amplitude ladder.

    The sequence increases to the capacity of K; the final bracket is
    reported as the capacity estimate.
    """
    _check_same_grid(k_set, kernel)
    los, his = [], []
    for m in amplitudes:
        if m < 0:
            raise ValueError("amplitudes must be >= 0")
        res = solve_capacitory(Potential(k_set.grid, m * k_set.values), kernel, opts)
        los.append(res.gamma_low)
        his.append(res.gamma_high)
    return CapacitySweep(
        amplitudes=tuple(float(m) for m in amplitudes),
        gamma_low=tuple(los),
        gamma_high=tuple(his),
        capacity_low=los[-1],
        capacity_high=his[-1],
    )


def equilibrium_capacity(k_set: Potential, kernel: KernelMatrix | None = None) -> float:
    """Capacity of the cell set {k_set > 0} via the equilibrium measure.

    Independent linear-system oracle: solve (restricted Riesz matrix)
    mu = 1 on the set's cells and return sum(mu) * weight.
    """
    if kernel is None:
        kernel = assemble_riesz(k_set.grid)
    _check_same_grid(k_set, kernel)
    mask = k_set.values > 0
    if not mask.any():
        raise ValueError("the set has no cells")
    sub = kernel.entries[np.ix_(mask, mask)]
    mu = np.linalg.solve(sub, np.ones(int(mask.sum())))
    if not np.all(np.isfinite(mu)):
        raise np.linalg.LinAlgError("equilibrium system is singular")
    return float(mu.sum() * k_set.grid.weight)


@dataclass(frozen=True)
class ConsistencyReport:
    fixed_point_residual: float
    int_u_dmu: float
    gamma_low: float
    gamma_high: float
    energy_slack: float
    min_lower_bound_margin: float

    @property
    def energy_below_gamma(self) -> bool:
        return self.int_u_dmu <= self.gamma_high + 1e-15


def consistency_check(result: CapacitoryResult, kernel: KernelMatrix) -> ConsistencyReport:
    """Self-consistency of a converged solve.

    (a) sup |u_mid - U[v (1 - u_mid)]| (fixed-point residual),
    (b) int U_v dmu <= Gamma with slack int (1 - U_v) dmu >= 0,
    (c) pointwise floor U_v >= c * Gamma_low * diam(hull)^(alpha-d),
    reported as the worst margin u_mid - floor over the grid.
    """
    _check_same_grid(result.v, kernel)
    grid = result.v.grid
    u = result.u_mid.values
    vals = result.v.values
    ku = kernel.entries @ (vals * (1.0 - u))
    residual = float(np.max(np.abs(u - ku))) if u.size else 0.0
    mu = result.mu.values
    int_u_dmu = float((u * mu).sum() * grid.weight)
    slack = float(((1.0 - u) * mu).sum() * grid.weight)
    margin = 0.0
    if result.gamma_low > 0 and mu.any():
        pts = grid.centers()
        supp = pts[mu > 0]
        # farthest support point per evaluation cell bounds |x - y| on supp(mu)
        dist = np.sqrt(((pts[:, None, :] - supp[None, :, :]) ** 2).sum(axis=2)).max(axis=1)
        floor = kernel.constant * result.gamma_low * dist ** (grid.alpha - grid.d)
        margin = float(np.min(u - floor))
    return ConsistencyReport(
        fixed_point_residual=residual,
        int_u_dmu=int_u_dmu,
        gamma_low=result.gamma_low,
        gamma_high=result.gamma_high,
        energy_slack=slack,
        min_lower_bound_margin=margin,
    )
