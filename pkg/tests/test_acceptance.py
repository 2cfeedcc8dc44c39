"""Acceptance suite: one test per criterion, at the stated sizes and
tolerances, printing one PASS/FAIL line each (run with -s to see them all).

Everything is seeded; the d = 1, alpha = 0.6 working point is used
throughout with a d = 2, alpha = 1.0 smoke variant at the end.
"""

import numpy as np
import pytest

from scatterlen import (
    BallIndicator,
    BoxIndicator,
    Gaussian,
    Potential,
    SolverOptions,
    assemble_neumann_form,
    assemble_riesz,
    build_grid,
    capacity_sweep,
    consistency_check,
    eigen_bound_report,
    epsilon_expansion,
    equilibrium_capacity,
    eval_potential,
    folded_comparison,
    mc_scattering,
    moment_decay,
    scaling_check,
    solve_capacitory,
)
from scatterlen import empirical_cf
from scatterlen.cli import EXIT_OK, run
from scatterlen.mc import FoldSpec, McConfig

D, ALPHA = 1, 0.6
SEED = 20260809


def _report(num, name, ok, detail):
    print(f"{'PASS' if ok else 'FAIL'} criterion {num} ({name}): {detail}")
    assert ok, f"criterion {num} ({name}): {detail}"


def _gaussian(grid, amp=1.0, width=0.5):
    return eval_potential(Gaussian(center=(0.0,) * grid.d, width=width, amplitude=amp), grid)


def test_criterion_01_scaling_law():
    grid = build_grid(D, ALPHA, (-4.0, 4.0), 512)
    v = _gaussian(grid)
    lhs, rhs, rel = scaling_check(v, 2.0)
    # independent-grid variant: rescale the shape analytically and
    # re-evaluate on a non-nested grid, so discretization error is real
    indep = build_grid(D, ALPHA, (-2.1, 2.1), 512)
    v_r_indep = eval_potential(
        Gaussian(center=(0.0,), width=0.25, amplitude=2.0**ALPHA), indep
    )
    from scatterlen import scattering_length

    gamma_indep = scattering_length(v_r_indep, assemble_riesz(indep))[0]
    rel_indep = abs(gamma_indep - rhs) / gamma_indep
    ok = rel < 0.02 and rel_indep < 0.02
    _report(1, "scaling law", ok, f"nested rel={rel:.3e}, independent-grid rel={rel_indep:.3e}")


def test_criterion_02_small_potential_limit():
    grid = build_grid(D, ALPHA, (-4.0, 4.0), 512)
    v = _gaussian(grid)
    kernel = assemble_riesz(grid)
    exp = epsilon_expansion(v, 2.0, [0.02, 0.05, 0.1, 0.2, 0.5], kernel)
    by_eps = {r.eps: r.deficit for r in exp.rows}
    d_half, d_tenth, d_small = by_eps[0.5], by_eps[0.1], by_eps[0.02]
    positive_decreasing = 0 < d_small < d_tenth < d_half
    small_enough = d_small < 0.05 * v.norm_l1
    slope_ok = exp.slope >= 1.0 / exp.q - 0.15
    ok = positive_decreasing and small_enough and slope_ok
    _report(
        2,
        "small-potential limit",
        ok,
        f"deficits=({d_half:.4f},{d_tenth:.4f},{d_small:.4f}), "
        f"deficit(0.02)/|v|_1={d_small / v.norm_l1:.4f} (<0.05), "
        f"slope={exp.slope:.3f} (>= {1.0 / exp.q - 0.15:.2f})",
    )


def test_criterion_03_order_properties():
    grid = build_grid(D, ALPHA, (-3.0, 3.0), 96)
    kernel = assemble_riesz(grid)
    rng = np.random.default_rng(SEED)
    violations = 0
    for _ in range(100):
        amp_a, amp_b = 10 ** rng.uniform(-1.5, 0.7, 2)
        va = eval_potential(
            Gaussian(center=(rng.uniform(-1, 1),), width=rng.uniform(0.15, 0.6), amplitude=amp_a),
            grid,
        )
        vb = eval_potential(
            BallIndicator(center=(rng.uniform(-1, 1),), radius=rng.uniform(0.1, 0.8), amplitude=amp_b),
            grid,
        )
        vab = Potential(grid, va.values + vb.values)
        ra = solve_capacitory(va, kernel)
        rb = solve_capacitory(vb, kernel)
        rab = solve_capacitory(vab, kernel)
        # upper bound by the L1 norm
        if ra.gamma_high > va.norm_l1 * (1 + 1e-12):
            violations += 1
        # monotonicity: v <= v + w, certified bracket comparison
        if ra.gamma_low > rab.gamma_high + 1e-15:
            violations += 1
        # subadditivity
        if rab.gamma_low > ra.gamma_high + rb.gamma_high + 1e-15:
            violations += 1
    _report(3, "order properties", violations == 0, f"violations={violations} over 100 pairs")


def test_criterion_04_self_consistency():
    grid = build_grid(D, ALPHA, (-4.0, 4.0), 256)
    v = _gaussian(grid)
    kernel = assemble_riesz(grid)
    opts = SolverOptions(tolerance=1e-10)
    res = solve_capacitory(v, kernel, opts)
    rep = consistency_check(res, kernel)
    residual_ok = rep.fixed_point_residual <= 1e-8
    energy_ok = rep.energy_below_gamma and rep.energy_slack >= 0
    u = res.u_mid.values
    mu = res.mu.values
    w = grid.weight
    lhs = float((mu * u * w).sum() + (v.values * (1 - u) ** 2 * w).sum())
    gamma = float((mu * w).sum())
    ident_tol = 8 * np.spacing(gamma) * np.sqrt(mu.size)
    ident_ok = abs(lhs - gamma) <= ident_tol
    ok = residual_ok and energy_ok and ident_ok
    _report(
        4,
        "self-consistency",
        ok,
        f"sup-residual={rep.fixed_point_residual:.2e} (<=1e-8), "
        f"int U dmu={rep.int_u_dmu:.6f} <= Gamma={rep.gamma_high:.6f}, "
        f"identity |lhs-Gamma|={abs(lhs - gamma):.2e} (<= {ident_tol:.2e})",
    )


def test_criterion_05_capacity_limit():
    grid = build_grid(D, ALPHA, (-3.0, 3.0), 256)
    kernel = assemble_riesz(grid)
    k_set = eval_potential(BoxIndicator(box=((-1.0, 1.0),), amplitude=1.0), grid)
    sweep = capacity_sweep(k_set, [10.0, 100.0, 1000.0, 10000.0], kernel)
    mids = sweep.gamma_mid
    nondecreasing = all(a <= b + 1e-12 for a, b in zip(mids, mids[1:]))
    oracle_same = equilibrium_capacity(k_set, kernel)
    below = all(hi <= oracle_same * (1 + 1e-9) for hi in sweep.gamma_high)
    refined = build_grid(D, ALPHA, (-3.0, 3.0), 512)
    k_refined = eval_potential(BoxIndicator(box=((-1.0, 1.0),), amplitude=1.0), refined)
    oracle_refined = equilibrium_capacity(k_refined)
    final_rel = abs(mids[-1] - oracle_refined) / oracle_refined
    ok = nondecreasing and below and final_rel < 0.03
    _report(
        5,
        "capacity limit",
        ok,
        f"sequence={[f'{m:.5f}' for m in mids]}, oracle(n)={oracle_same:.5f}, "
        f"refined oracle={oracle_refined:.5f}, final rel={final_rel:.4f} (<0.03)",
    )


def test_criterion_06_mc_vs_deterministic():
    grid = build_grid(D, ALPHA, (-4.0, 4.0), 256)
    v = _gaussian(grid)
    kernel = assemble_riesz(grid)
    res = solve_capacitory(v, kernel)
    cfg = McConfig(
        alpha=ALPHA, d=D, time_step=0.01, horizon=50.0, halt_radius=1e6,
        paths=100_000, master_seed=SEED, start="potential",
    )
    est = mc_scattering(v, cfg)
    diff = abs(est.gamma - res.gamma_mid)
    tol = 3 * est.se + res.bracket_width + est.bias_budget
    _report(
        6,
        "MC vs deterministic",
        diff <= tol,
        f"Gamma_MC={est.gamma:.5f}, Gamma_det={res.gamma_mid:.5f}, "
        f"diff={diff:.5f} <= 3SE+bracket+bias={tol:.5f}",
    )


def test_criterion_07_folding():
    omega = build_grid(D, ALPHA, (-1.0, 1.0), 64)
    v = eval_potential(Gaussian(center=(0.0,), width=0.4, amplitude=1.0), omega)
    cfg = McConfig(
        alpha=ALPHA, d=D, time_step=0.01, horizon=5.0, halt_radius=1e6,
        paths=10_000, master_seed=SEED, start=(0.0,),
    )
    rep = folded_comparison(v, cfg, FoldSpec(cube=omega.box))
    ok = rep.violations == 0 and rep.mean_folded <= rep.mean_free
    _report(
        7,
        "folding comparison",
        ok,
        f"violations={rep.violations} over {rep.paths} paths, "
        f"E e^-I_folded={rep.mean_folded:.5f} <= E e^-I_free={rep.mean_free:.5f}",
    )


def test_criterion_08_increment_law():
    worst = 0.0
    for t in (0.5, 1.0, 2.0):
        rows = empirical_cf(ALPHA, D, t, [(0.5,), (1.0,), (2.0,)], 100_000, SEED)
        for _, emp, target, se in rows:
            worst = max(worst, abs(emp - target) / (3 * se))
    _report(
        8,
        "increment law",
        worst <= 1.0,
        f"worst |cf - exp(-t|xi|^a)| / 3SE = {worst:.3f} (<= 1) over 3 times x 3 frequencies",
    )


def test_criterion_09_decay_lemma():
    cfg = McConfig(
        alpha=ALPHA, d=D, time_step=0.01, horizon=1.0, halt_radius=1e6,
        paths=100_000, master_seed=SEED, start=(0.0,),
    )
    md = moment_decay(ALPHA, D, [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0], cfg)
    target = (ALPHA - D) / ALPHA  # -2/3
    rel = abs(md.slope - target) / abs(target)
    decreasing = all(a > b for a, b in zip(md.estimates, md.estimates[1:]))
    scaled = np.array(md.estimates) * np.array(md.times) ** (-target)
    flat = scaled.max() / scaled.min() < 1.2
    ok = rel <= 0.10 and decreasing and flat
    _report(
        9,
        "decay lemma",
        ok,
        f"slope={md.slope:.4f} vs {target:.4f} (rel={rel:.3f} <= 0.10), "
        f"monotone={decreasing}, scaled max/min={scaled.max() / scaled.min():.3f}",
    )


# interval pinned from the first run of this family (seed 20260809,
# observed ratios [0.5006, 0.5561]); the assertion window adds margin
RATIO_INTERVAL = (0.48, 0.58)


def test_criterion_10_eigen_bound():
    omega = build_grid(D, ALPHA, (-1.0, 1.0), 256)
    enclosing = build_grid(D, ALPHA, (-4.0, 4.0), 1024)
    kernel = assemble_riesz(enclosing)
    form = assemble_neumann_form(omega)
    rng = np.random.default_rng(SEED)
    ratios = []
    chain_ok = True
    detail = []
    for k in range(20):
        amp = 10.0 ** rng.uniform(-2.7, -0.7)
        if k % 2 == 0:
            shape = Gaussian(
                center=(float(rng.uniform(-0.4, 0.4)),),
                width=float(rng.uniform(0.15, 0.45)),
                amplitude=amp,
            )
        else:
            shape = BallIndicator(
                center=(float(rng.uniform(-0.3, 0.3)),),
                radius=float(rng.uniform(0.1, 0.55)),
                amplitude=amp,
            )
        v = eval_potential(shape, omega)
        rep = eigen_bound_report(v, kernel, label=f"fam{k}", form=form)
        if rep.above_threshold:
            chain_ok = False
            detail.append(f"fam{k} above threshold")
            continue
        ratios.append(rep.ratio)
        if rep.numerator > rep.gamma_high * 1.05:
            chain_ok = False
            detail.append(f"fam{k} numerator {rep.numerator:.4f} > 1.05 Gamma_high")
        if rep.eigenvalue > rep.variational_bound * (1 + 1e-9):
            chain_ok = False
            detail.append(f"fam{k} lambda exceeds variational bound")
        if rep.denominator < 2.0 - 2.0 * rep.c_omega * rep.gamma_high - 1e-12:
            chain_ok = False
            detail.append(f"fam{k} denominator below floor")
    lo, hi = min(ratios), max(ratios)
    spread_ok = hi / lo <= 50.0
    pinned_ok = RATIO_INTERVAL[0] <= lo and hi <= RATIO_INTERVAL[1]
    ok = chain_ok and spread_ok and pinned_ok and len(ratios) == 20
    _report(
        10,
        "eigenvalue bound",
        ok,
        f"ratios in [{lo:.4f}, {hi:.4f}], C/c={hi / lo:.3f} (<=50), "
        f"pinned window {RATIO_INTERVAL}, chain checks "
        + ("all hold" if chain_ok else "; ".join(detail)),
    )


def test_criterion_11_determinism(tmp_path):
    from pathlib import Path

    quick = Path(__file__).resolve().parent.parent / "configs" / "quick.toml"
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    code1 = run(["verify", "--config", str(quick), "--out", str(out1)])
    code2 = run(["verify", "--config", str(quick), "--out", str(out2)])
    identical = (out1 / "verify.csv").read_bytes() == (out2 / "verify.csv").read_bytes()
    ok = code1 == EXIT_OK and code2 == EXIT_OK and identical
    _report(
        11,
        "end-to-end determinism",
        ok,
        f"verify exit codes ({code1}, {code2}), byte-identical CSV: {identical}",
    )


def test_smoke_d2():
    grid = build_grid(2, 1.0, ((-2.0, 2.0), (-2.0, 2.0)), 20)
    kernel = assemble_riesz(grid)
    v = eval_potential(Gaussian(center=(0.0, 0.0), width=0.5, amplitude=1.0), grid)
    res = solve_capacitory(v, kernel)
    assert res.converged and 0 < res.gamma_mid < v.norm_l1
    _, _, rel = scaling_check(v, 2.0)
    assert rel < 1e-9
    form = assemble_neumann_form(grid)
    from scatterlen import schrodinger_lowest

    lam = schrodinger_lowest(form, v).eigenvalue
    assert lam > 0
    print(f"PASS d=2 smoke: Gamma={res.gamma_mid:.5f}, lambda1={lam:.5f}, scaling rel={rel:.2e}")
