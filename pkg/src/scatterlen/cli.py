"""Batch front-end: TOML config in, CSV out, CI-friendly exit codes.

Exit codes: 0 success, 1 verification failure, 2 config error (message
names the offending key), 3 numerical non-convergence.  With a fixed
seed every run is byte-reproducible; the resolved config and its content
hash go to stderr so results stay attributable.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import capacitory, mc, spectral
from .grids import (
    BallIndicator,
    BoxIndicator,
    Gaussian,
    GridSpec,
    Potential,
    Scaled,
    Sum,
    build_grid,
    eval_potential,
    integrate,
    scale_potential,
)
from .riesz import KernelMatrix, assemble_riesz, grid_cache_key, load_kernel, save_kernel

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class ConfigError(ValueError):
    """Configuration problem; the message names the offending key."""


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17e")
    return str(x)


def _write_csv(path: Path, header: list, rows: list) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


# --- config parsing ----------------------------------------------------------

_SHAPE_KEYS = {
    "gaussian": {"shape", "center", "width", "amplitude"},
    "ball": {"shape", "center", "radius", "amplitude"},
    "box": {"shape", "box", "amplitude"},
    "sum": {"shape", "terms"},
    "scaled": {"shape", "factor", "term"},
}


def _require(table: dict, key: str, path: str):
    if key not in table:
        raise ConfigError(f"missing required key '{path}.{key}'")
    return table[key]


def _reject_unknown(table: dict, allowed: set, path: str) -> None:
    for key in table:
        if key not in allowed:
            raise ConfigError(f"unknown key '{path}.{key}'")


def _parse_shape(table: dict, path: str):
    if not isinstance(table, dict):
        raise ConfigError(f"'{path}' must be a table")
    name = _require(table, "shape", path)
    if name not in _SHAPE_KEYS:
        raise ConfigError(f"unknown shape name '{name}' at '{path}.shape'")
    _reject_unknown(table, _SHAPE_KEYS[name], path)
    try:
        if name == "gaussian":
            return Gaussian(
                center=tuple(_require(table, "center", path)),
                width=float(_require(table, "width", path)),
                amplitude=float(_require(table, "amplitude", path)),
            )
        if name == "ball":
            return BallIndicator(
                center=tuple(_require(table, "center", path)),
                radius=float(_require(table, "radius", path)),
                amplitude=float(_require(table, "amplitude", path)),
            )
        if name == "box":
            return BoxIndicator(
                box=tuple(tuple(side) for side in _require(table, "box", path)),
                amplitude=float(_require(table, "amplitude", path)),
            )
        if name == "sum":
            terms = _require(table, "terms", path)
            return Sum(
                terms=tuple(
                    _parse_shape(t, f"{path}.terms[{i}]") for i, t in enumerate(terms)
                )
            )
        return Scaled(
            factor=float(_require(table, "factor", path)),
            inner=_parse_shape(_require(table, "term", path), f"{path}.term"),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value in '{path}': {exc}") from exc


_TOP_KEYS = {
    "seed",
    "threads",
    "problem",
    "potential",
    "solver",
    "mc",
    "spectral",
    "capacity",
    "scaling",
    "verify",
    "output",
}
_PROBLEM_KEYS = {"d", "alpha", "box", "n"}
_SOLVER_KEYS = {"tolerance", "max_iterations", "damping"}
_MC_KEYS = {"paths", "time_step", "horizon", "halt_radius", "start"}
_SPECTRAL_KEYS = {"omega", "omega_n"}
_CAPACITY_KEYS = {"set_box", "amplitudes"}
_SCALING_KEYS = {"factor"}
_VERIFY_KEYS = {
    "pairs",
    "eigen_family",
    "eps_list",
    "cf_frequencies",
    "moment_times",
    "fold_paths",
    "fold_horizon",
}
_OUTPUT_KEYS = {"csv_dir", "cache_dir"}


class RunConfig:
    """Validated run configuration with lazily built numerical objects."""

    def __init__(self, raw: dict, base_dir: Path):
        _reject_unknown(raw, _TOP_KEYS, "")
        self.raw = raw
        self.base_dir = base_dir
        problem = _require(raw, "problem", "")
        _reject_unknown(problem, _PROBLEM_KEYS, "problem")
        try:
            self.grid = build_grid(
                _require(problem, "d", "problem"),
                _require(problem, "alpha", "problem"),
                _require(problem, "box", "problem"),
                _require(problem, "n", "problem"),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value in 'problem': {exc}") from exc
        self.shape = _parse_shape(_require(raw, "potential", ""), "potential")

        solver = raw.get("solver", {})
        _reject_unknown(solver, _SOLVER_KEYS, "solver")
        try:
            self.solver = capacitory.SolverOptions(
                tolerance=float(solver.get("tolerance", 1e-10)),
                max_iterations=int(solver.get("max_iterations", 10_000)),
                damping=float(solver.get("damping", 1.0)),
            )
        except ValueError as exc:
            raise ConfigError(f"bad value in 'solver': {exc}") from exc

        self.seed = int(raw.get("seed", 0))
        self.threads = int(raw.get("threads", 1))
        if self.threads < 1:
            raise ConfigError("'threads' must be >= 1")

        mc_table = raw.get("mc", {})
        _reject_unknown(mc_table, _MC_KEYS, "mc")
        self._mc_table = mc_table

        spectral_table = raw.get("spectral", {})
        _reject_unknown(spectral_table, _SPECTRAL_KEYS, "spectral")
        self._spectral_table = spectral_table

        capacity_table = raw.get("capacity", {})
        _reject_unknown(capacity_table, _CAPACITY_KEYS, "capacity")
        self._capacity_table = capacity_table

        scaling_table = raw.get("scaling", {})
        _reject_unknown(scaling_table, _SCALING_KEYS, "scaling")
        self.scaling_factor = float(scaling_table.get("factor", 2.0))
        if self.scaling_factor <= 0:
            raise ConfigError("'scaling.factor' must be > 0")

        verify_table = raw.get("verify", {})
        _reject_unknown(verify_table, _VERIFY_KEYS, "verify")
        self.verify_pairs = int(verify_table.get("pairs", 20))
        self.verify_eigen_family = int(verify_table.get("eigen_family", 6))
        self.verify_eps = list(verify_table.get("eps_list", [0.02, 0.05, 0.1, 0.2, 0.5]))
        self.verify_cf = list(verify_table.get("cf_frequencies", [0.5, 1.0, 2.0]))
        self.verify_moment_times = list(
            verify_table.get("moment_times", [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0])
        )
        self.verify_fold_paths = int(verify_table.get("fold_paths", 5000))
        self.verify_fold_horizon = float(verify_table.get("fold_horizon", 5.0))

        output = raw.get("output", {})
        _reject_unknown(output, _OUTPUT_KEYS, "output")
        self.csv_dir = base_dir / str(output.get("csv_dir", "out"))
        cache = str(output.get("cache_dir", ""))
        self.cache_dir = (base_dir / cache) if cache else None

        # every nested block validates at parse time, used or not
        self.mc_config()
        self.omega_grid()
        self.capacity_set()

    def potential(self, grid: GridSpec | None = None) -> Potential:
        return eval_potential(self.shape, grid or self.grid)

    def kernel(self, grid: GridSpec | None = None) -> KernelMatrix:
        grid = grid or self.grid
        if self.cache_dir is not None:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
            path = self.cache_dir / f"riesz-{grid_cache_key(grid)}.bin"
            if path.exists():
                return load_kernel(path)
            kernel = assemble_riesz(grid)
            save_kernel(kernel, path)
            return kernel
        return assemble_riesz(grid)

    def mc_config(self, **overrides) -> mc.McConfig:
        t = self._mc_table
        kwargs = dict(
            alpha=self.grid.alpha,
            d=self.grid.d,
            time_step=float(t.get("time_step", 0.01)),
            horizon=float(t.get("horizon", 20.0)),
            halt_radius=float(t.get("halt_radius", 1e6)),
            paths=int(t.get("paths", 10_000)),
            master_seed=self.seed,
            start=t.get("start", "potential"),
        )
        kwargs.update(overrides)
        start = kwargs["start"]
        if not isinstance(start, str):
            kwargs["start"] = tuple(float(c) for c in start)
        try:
            return mc.McConfig(**kwargs)
        except ValueError as exc:
            raise ConfigError(f"bad value in 'mc': {exc}") from exc

    def omega_grid(self) -> GridSpec:
        t = self._spectral_table
        omega = t.get("omega", [[-1.0, 1.0]] if self.grid.d == 1 else None)
        if omega is None:
            raise ConfigError("missing required key 'spectral.omega'")
        n = int(t.get("omega_n", max(2, self.grid.n // 4)))
        try:
            return build_grid(self.grid.d, self.grid.alpha, omega, n)
        except ValueError as exc:
            raise ConfigError(f"bad value in 'spectral': {exc}") from exc

    def capacity_set(self) -> Potential:
        t = self._capacity_table
        box = t.get("set_box", [[-1.0, 1.0]] if self.grid.d == 1 else None)
        if box is None:
            raise ConfigError("missing required key 'capacity.set_box'")
        shape = BoxIndicator(box=tuple(tuple(s) for s in box), amplitude=1.0)
        return eval_potential(shape, self.grid)

    def capacity_amplitudes(self) -> list[float]:
        return [float(m) for m in self._capacity_table.get("amplitudes", [10.0, 100.0, 1000.0, 10000.0])]


def load_config(path: Path) -> RunConfig:
    data = path.read_bytes()
    digest = hashlib.sha256(data).hexdigest()
    try:
        raw = tomllib.loads(data.decode("utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    cfg = RunConfig(raw, path.resolve().parent)
    print(f"config sha256={digest}", file=sys.stderr)
    print(f"resolved config: {json.dumps(raw, sort_keys=True)}", file=sys.stderr)
    return cfg


# --- subcommands ---------------------------------------------------------------

SCATTER_HEADER = [
    "d", "alpha", "n", "norm_l1", "gamma_low", "gamma_high", "gamma_mid",
    "iterations", "converged", "escalated",
]


def cmd_scatter(cfg: RunConfig) -> int:
    v = cfg.potential()
    res = capacitory.solve_capacitory(v, cfg.kernel(), cfg.solver)
    row = [
        cfg.grid.d, cfg.grid.alpha, cfg.grid.n, v.norm_l1,
        res.gamma_low, res.gamma_high, res.gamma_mid,
        res.iterations, int(res.converged), int(res.escalated),
    ]
    _write_csv(cfg.csv_dir / "scatter.csv", SCATTER_HEADER, [row])
    return EXIT_OK if res.converged else EXIT_NUMERICAL


MC_HEADER = ["paths", "gamma_mc", "se", "bias_budget", "mean_weight", "config_hash"]


def cmd_mc(cfg: RunConfig, config_hash: str) -> int:
    v = cfg.potential()
    est = mc.mc_scattering(v, cfg.mc_config())
    row = [est.batch.integrals.size, est.gamma, est.se, est.bias_budget,
           est.batch.mean, config_hash]
    _write_csv(cfg.csv_dir / "mc.csv", MC_HEADER, [row])
    return EXIT_OK


def cmd_eigen(cfg: RunConfig) -> int:
    omega = cfg.omega_grid()
    v = cfg.potential(omega)
    report = spectral.eigen_bound_report(v, cfg.kernel(), cfg.solver, label="config")
    _write_csv(cfg.csv_dir / "eigen.csv", spectral.BOUND_CSV_HEADER, [report.csv_row()])
    return EXIT_OK


CAPACITY_HEADER = ["amplitude", "gamma_low", "gamma_high", "gamma_mid", "oracle_capacity"]


def cmd_capacity(cfg: RunConfig) -> int:
    k_set = cfg.capacity_set()
    kernel = cfg.kernel()
    sweep = capacitory.capacity_sweep(k_set, cfg.capacity_amplitudes(), kernel, cfg.solver)
    oracle = capacitory.equilibrium_capacity(k_set, kernel)
    rows = [
        [m, lo, hi, 0.5 * (lo + hi), oracle]
        for m, lo, hi in zip(sweep.amplitudes, sweep.gamma_low, sweep.gamma_high)
    ]
    _write_csv(cfg.csv_dir / "capacity.csv", CAPACITY_HEADER, rows)
    return EXIT_OK


SCALING_HEADER = ["factor", "gamma_scaled", "predicted", "relative_error"]


def cmd_scaling(cfg: RunConfig) -> int:
    v = cfg.potential()
    r = cfg.scaling_factor
    v_r = scale_potential(v, r)
    kernels = (cfg.kernel(), cfg.kernel(v_r.grid))
    lhs, rhs, rel = capacitory.scaling_check(v, r, kernels, cfg.solver)
    _write_csv(cfg.csv_dir / "scaling.csv", SCALING_HEADER, [[r, lhs, rhs, rel]])
    return EXIT_OK


# --- verification suite --------------------------------------------------------

VERIFY_HEADER = ["check", "value", "tolerance", "passed"]


def _random_shape(rng: np.random.Generator, d: int):
    amp = 10.0 ** rng.uniform(-1.5, 0.5)
    center = tuple(rng.uniform(-0.8, 0.8, d))
    if rng.uniform() < 0.5:
        return Gaussian(center=center, width=float(rng.uniform(0.15, 0.6)), amplitude=amp)
    return BallIndicator(center=center, radius=float(rng.uniform(0.1, 0.8)), amplitude=amp)


def run_verify(cfg: RunConfig) -> tuple[list, int]:
    """All verification checks at config scale; returns (rows, exit code)."""
    rows: list[list] = []

    def record(check: str, value: float, tol: float, ok: bool) -> None:
        rows.append([check, float(value), float(tol), int(ok)])
        print(("PASS" if ok else "FAIL") + f" {check}: value={value:.6g} tol={tol:.6g}")

    grid = cfg.grid
    kernel = cfg.kernel()
    v = cfg.potential()
    opts = cfg.solver

    # 1. scaling law
    v_r = scale_potential(v, cfg.scaling_factor)
    _, _, rel = capacitory.scaling_check(
        v, cfg.scaling_factor, (kernel, cfg.kernel(v_r.grid)), opts
    )
    record("scaling_law", rel, 0.02, rel < 0.02)

    # 2. weak-coupling limit
    exp = capacitory.epsilon_expansion(v, 2.0, cfg.verify_eps, kernel, opts)
    deficits = [r.deficit for r in exp.rows]
    ok = all(d > 0 for d in deficits) and all(
        a < b for a, b in zip(deficits, deficits[1:])
    )
    record("eps_deficit_monotone", min(deficits), 0.0, ok)
    smallest = exp.rows[0]
    record(
        "eps_deficit_small",
        smallest.deficit / v.norm_l1,
        0.05,
        smallest.deficit < 0.05 * v.norm_l1,
    )
    slope_floor = 1.0 / exp.q - 0.15
    record("eps_slope", exp.slope, slope_floor, exp.slope >= slope_floor)

    # 3. order properties on seeded random pairs
    rng = np.random.default_rng(cfg.seed)
    violations = 0
    for _ in range(cfg.verify_pairs):
        va = eval_potential(_random_shape(rng, grid.d), grid)
        vb = eval_potential(_random_shape(rng, grid.d), grid)
        vab = Potential(grid, va.values + vb.values)
        ra = capacitory.solve_capacitory(va, kernel, opts)
        rb = capacitory.solve_capacitory(vb, kernel, opts)
        rab = capacitory.solve_capacitory(vab, kernel, opts)
        if ra.gamma_high > va.norm_l1 * (1 + 1e-12):
            violations += 1
        if ra.gamma_low > rab.gamma_high + 1e-15:  # monotonicity v <= v + w
            violations += 1
        if rab.gamma_low > ra.gamma_high + rb.gamma_high + 1e-15:  # subadditivity
            violations += 1
    record("order_properties_violations", violations, 0, violations == 0)

    # 4. self-consistency of the fixed point
    res = capacitory.solve_capacitory(v, kernel, opts)
    rep = capacitory.consistency_check(res, kernel)
    rtol = max(1e-8, 100 * opts.tolerance)
    record("fixed_point_residual", rep.fixed_point_residual, rtol, rep.fixed_point_residual <= rtol)
    record("energy_below_gamma", rep.gamma_high - rep.int_u_dmu, 0.0, rep.energy_below_gamma)
    u = res.u_mid.values
    mu = res.mu.values
    w = grid.weight
    lhs = float((u * mu * w).sum() + (v.values * (1 - u) ** 2 * w).sum())
    gamma = float((mu * w).sum())
    ident = abs(lhs - gamma)
    ident_tol = 8 * np.spacing(max(gamma, 1e-300)) * max(1.0, np.sqrt(mu.size))
    record("energy_identity", ident, ident_tol, ident <= ident_tol)

    # 5. capacity sweep against the equilibrium oracle
    k_set = cfg.capacity_set()
    sweep = capacitory.capacity_sweep(k_set, cfg.capacity_amplitudes(), kernel, opts)
    oracle = capacitory.equilibrium_capacity(k_set, kernel)
    mids = sweep.gamma_mid
    ok = all(a <= b + 1e-12 for a, b in zip(mids, mids[1:]))
    ok = ok and all(hi <= oracle * 1.03 for hi in sweep.gamma_high)
    final_rel = abs(mids[-1] - oracle) / oracle
    record("capacity_monotone_below_oracle", max(sweep.gamma_high) / oracle, 1.03, ok)
    record("capacity_final", final_rel, 0.03, final_rel < 0.03)

    # 6. Monte Carlo vs deterministic bracket
    mc_cfg = cfg.mc_config()
    est = mc.mc_scattering(v, mc_cfg)
    diff = abs(est.gamma - res.gamma_mid)
    tol = 3 * est.se + res.bracket_width + est.bias_budget
    record("mc_vs_deterministic", diff, tol, diff <= tol)

    # 7. pathwise folding inequality
    omega = cfg.omega_grid()
    fold_cfg = cfg.mc_config(
        paths=cfg.verify_fold_paths, horizon=cfg.verify_fold_horizon, start=(0.0,) * grid.d
    )
    v_omega = cfg.potential(omega)
    fold = mc.folded_comparison(v_omega, fold_cfg, mc.FoldSpec(cube=omega.box))
    record("folding_violations", fold.violations, 0, fold.violations == 0)

    # 8. increment law via the characteristic function
    freqs = [np.full(grid.d, f) / np.sqrt(grid.d) for f in cfg.verify_cf]
    cf_rows = mc.empirical_cf(grid.alpha, grid.d, 1.0, freqs, mc_cfg.paths, cfg.seed)
    worst = max(abs(emp - tgt) / (3 * se) for _, emp, tgt, se in cf_rows)
    record("increment_cf", worst, 1.0, worst <= 1.0)

    # 9. transience decay exponent
    md = mc.moment_decay(grid.alpha, grid.d, cfg.verify_moment_times, mc_cfg)
    target = (grid.alpha - grid.d) / grid.alpha
    rel = abs(md.slope - target) / abs(target)
    record("moment_decay_slope", rel, 0.10, rel <= 0.10)

    # 10. eigenvalue bound chain on a small family
    rng = np.random.default_rng(cfg.seed + 1)
    ratios = []
    chain_ok = True
    for k in range(cfg.verify_eigen_family):
        amp = 10.0 ** rng.uniform(-2.0, 0.0)
        if k % 2 == 0:
            shape = Gaussian(center=(0.0,) * grid.d, width=0.3, amplitude=amp)
        else:
            shape = BallIndicator(center=(0.0,) * grid.d, radius=0.4, amplitude=amp)
        v_om = eval_potential(shape, omega)
        report = spectral.eigen_bound_report(v_om, kernel, opts, label=f"fam{k}")
        if report.above_threshold or report.gamma_mid == 0:
            continue
        ratios.append(report.ratio)
        if report.numerator > report.gamma_high * 1.05:
            chain_ok = False
        if report.eigenvalue > report.variational_bound * (1 + 1e-9):
            chain_ok = False
    spread = max(ratios) / min(ratios) if ratios else np.inf
    record("eigen_chain", spread, 50.0, chain_ok and spread <= 50.0)

    failed = sum(1 for row in rows if not row[3])
    return rows, EXIT_OK if failed == 0 else EXIT_VERIFY_FAILED


def cmd_verify(cfg: RunConfig) -> int:
    rows, code = run_verify(cfg)
    _write_csv(cfg.csv_dir / "verify.csv", VERIFY_HEADER, rows)
    return code


# --- entry point ---------------------------------------------------------------


def run(argv) -> int:
    parser = argparse.ArgumentParser(
        prog="scatterlen",
        description="scattering length toolkit for symmetric stable processes",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("scatter", "mc", "eigen", "capacity", "scaling", "verify"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", type=Path, default=None)
        p.add_argument("--threads", type=int, default=None)
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        if args.out is not None:
            cfg.csv_dir = args.out
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("'--threads' must be >= 1")
            cfg.threads = args.threads
        # worker count must not change any output byte; the numerics are
        # single-threaded apart from BLAS, whose partitioned kernels are
        # deterministic for a fixed input
        config_hash = hashlib.sha256(args.config.read_bytes()).hexdigest()
        if args.command == "scatter":
            return cmd_scatter(cfg)
        if args.command == "mc":
            return cmd_mc(cfg, config_hash)
        if args.command == "eigen":
            return cmd_eigen(cfg)
        if args.command == "capacity":
            return cmd_capacity(cfg)
        if args.command == "scaling":
            return cmd_scaling(cfg)
        return cmd_verify(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        # library-level validation (grid mismatch, bad shapes) traces back
        # to the configuration
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
