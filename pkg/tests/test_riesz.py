import numpy as np
import pytest

from scatterlen import (
    BoxIndicator,
    Gaussian,
    Potential,
    ScalarField,
    apply_riesz,
    assemble_riesz,
    build_grid,
    eval_potential,
    laplacian_constant,
    load_kernel,
    riesz_constant,
    save_kernel,
)


def test_constant_d1_half():
    # Gamma(1/4) cancels, leaving 1/sqrt(2 pi)
    assert riesz_constant(1, 0.5) == pytest.approx(1.0 / np.sqrt(2 * np.pi), rel=1e-14)


def test_constant_d2_one():
    assert riesz_constant(2, 1.0) == pytest.approx(1.0 / (2 * np.pi), rel=1e-14)


def test_constant_arbitrary_precision_oracle():
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = 40
    for d, alpha in [(1, 0.6), (2, 1.0), (3, 1.5), (2, 0.3)]:
        expect = mp.gamma((d - alpha) / 2) / (
            mp.mpf(2) ** alpha * mp.pi ** (mp.mpf(d) / 2) * mp.gamma(alpha / 2)
        )
        assert riesz_constant(d, alpha) == pytest.approx(float(expect), rel=1e-13)
        assert riesz_constant(d, alpha) > 0


def test_constant_rejects_alpha_ge_d():
    with pytest.raises(ValueError):
        riesz_constant(1, 1.0)


def test_laplacian_constant_positive():
    for d, alpha in [(1, 0.6), (2, 1.0), (3, 1.5)]:
        assert laplacian_constant(d, alpha) > 0


def test_singular_cell_closed_form():
    # cell of width 2: diagonal is c * int_{-1}^{1} |y|^(-1/2) dy = 4c
    g = build_grid(1, 0.5, (-2.0, 2.0), 2)
    k = assemble_riesz(g)
    c = riesz_constant(1, 0.5)
    assert k.entries[0, 0] == pytest.approx(4.0 * c, rel=1e-14)
    # width-1 cell: c * 2 * (1/2)^(1/2) / (1/2)
    g1 = build_grid(1, 0.5, (-1.0, 1.0), 2)
    expect = riesz_constant(1, 0.5) * 2.0 * np.sqrt(0.5) / 0.5
    assert assemble_riesz(g1).entries[0, 0] == pytest.approx(expect, rel=1e-14)


def test_symmetry_and_positivity(kernel_256):
    e = kernel_256.entries
    np.testing.assert_array_equal(e, e.T)
    assert np.all(e > 0)
    assert np.all(np.isfinite(np.diag(e)))


def test_indicator_closed_form_convergence():
    # U[1_[-1,1]](x0) = c ((1-x0)^a + (1+x0)^a) / a at the center nearest 0
    a = 0.6
    c = riesz_constant(1, a)
    errs = []
    for n in (256, 512, 1024):
        g = build_grid(1, a, (-2.0, 2.0), n)
        f = eval_potential(BoxIndicator(box=((-1.0, 1.0),), amplitude=1.0), g)
        u = apply_riesz(assemble_riesz(g), f)
        i0 = int(np.argmin(np.abs(g.centers()[:, 0])))
        x0 = g.centers()[i0, 0]
        exact = c * ((1 - x0) ** a + (1 + x0) ** a) / a
        errs.append(abs(u.values[i0] - exact) / exact)
    assert errs[-1] < 2e-3
    assert errs[0] > errs[-1]


def test_apply_zero_and_monotone(kernel_256, grid_256):
    zero = ScalarField(grid_256, np.zeros(grid_256.size))
    assert np.all(apply_riesz(kernel_256, zero).values == 0.0)
    f = eval_potential(Gaussian(center=(0.0,), width=0.5, amplitude=1.0), grid_256)
    g2 = Potential(grid_256, 2.0 * f.values)
    uf = apply_riesz(kernel_256, f).values
    ug = apply_riesz(kernel_256, g2).values
    assert np.all(uf >= 0)
    assert np.all(ug >= uf)


def test_apply_linearity(kernel_256, grid_256, rng):
    f = ScalarField(grid_256, rng.standard_normal(grid_256.size))
    g = ScalarField(grid_256, rng.standard_normal(grid_256.size))
    a, b = 0.7, -1.3
    comb = ScalarField(grid_256, a * f.values + b * g.values)
    lhs = apply_riesz(kernel_256, comb).values
    rhs = a * apply_riesz(kernel_256, f).values + b * apply_riesz(kernel_256, g).values
    scale = np.abs(rhs).max()
    np.testing.assert_allclose(lhs, rhs, atol=8 * np.finfo(float).eps * scale)


def test_apply_rejects_grid_mismatch(kernel_256):
    other = build_grid(1, 0.6, (-4.0, 4.0), 128)
    f = ScalarField(other, np.zeros(other.size))
    with pytest.raises(ValueError, match="different grids"):
        apply_riesz(kernel_256, f)


def test_decay_bound(kernel_256, grid_256):
    # past twice the support radius, U[f] <= c |f|_1 dist^(alpha-d)
    f = eval_potential(BoxIndicator(box=((-0.5, 0.5),), amplitude=1.0), grid_256)
    u = apply_riesz(kernel_256, f).values
    x = grid_256.centers()[:, 0]
    far = np.abs(x) >= 1.0
    dist = np.abs(x[far]) - 0.5 - grid_256.spacing[0] / 2
    bound = kernel_256.constant * f.norm_l1 * dist ** (grid_256.alpha - 1)
    assert np.all(u[far] <= bound * (1 + 1e-9))


def test_refinement_first_order_ratio():
    # halving grids sharing the evaluation point as a cell center: the
    # change between successive levels shrinks at the midpoint-rule rate
    shape = Gaussian(center=(0.0,), width=0.5, amplitude=1.0)
    base_h = 4.0 / 63.0
    vals = []
    for k in range(3):
        h = base_h / 2**k
        m = int(np.ceil(2.5 / h))
        g = build_grid(1, 0.6, (-(m + 0.5) * h, (m + 0.5) * h), 2 * m + 1)
        u = apply_riesz(assemble_riesz(g), eval_potential(shape, g))
        i0 = int(np.argmin(np.abs(g.centers()[:, 0])))
        assert abs(g.centers()[i0, 0]) < 1e-12
        vals.append(u.values[i0])
    d1, d2 = abs(vals[1] - vals[0]), abs(vals[2] - vals[1])
    assert 0.3 <= d2 / d1 <= 0.7


def test_cache_round_trip(tmp_path, kernel_256):
    path = tmp_path / "kernel.bin"
    save_kernel(kernel_256, path)
    loaded = load_kernel(path)
    assert loaded.grid == kernel_256.grid
    assert loaded.constant == kernel_256.constant
    np.testing.assert_array_equal(loaded.entries, kernel_256.entries)


def test_cache_rejects_bad_magic(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(ValueError, match="not a kernel cache"):
        load_kernel(path)


def test_2d_kernel_smoke(kernel_2d, grid_2d):
    f = eval_potential(
        BoxIndicator(box=((-0.5, 0.5), (-0.5, 0.5)), amplitude=1.0), grid_2d
    )
    u = apply_riesz(kernel_2d, f).values
    assert np.all(u > 0)
    center = int(np.argmin((grid_2d.centers() ** 2).sum(axis=1)))
    assert u[center] == u.max()
