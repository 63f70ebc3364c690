import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mchks.errors import MeanError
from mchks.fields import (
    Grid2D,
    ScalarField,
    cosine_mode,
    discrete_neumann_eigenvalue,
    div_mob_grad,
    dual_norm,
    grad_sq_integral,
    inner,
    integrate,
    inv_neumann_laplacian,
    laplacian,
    mean,
    norm_l2,
    read_snapshot,
    write_snapshot,
)

GRID = Grid2D(24, 20, 1.5, 1.0)


def random_field(grid, seed=0, amp=1.0):
    rng = np.random.default_rng(seed)
    return ScalarField(grid, amp * rng.standard_normal((grid.nx, grid.ny)))


def test_constant_in_kernel():
    f = ScalarField.constant(GRID, 3.7)
    assert np.allclose(laplacian(f).values, 0.0, atol=1e-13)


def test_laplacian_cosine_eigenfunction():
    # interior second-order accuracy against the analytic eigenvalue
    for grid in (Grid2D(32, 32, 1.0, 1.0), Grid2D(64, 64, 1.0, 1.0)):
        f = cosine_mode(grid, 1, 0)
        lam = (np.pi / grid.lx) ** 2
        err = np.max(np.abs(laplacian(f).values + lam * f.values))
        assert err < 2.0 * lam * (np.pi * grid.dx / grid.lx) ** 2


def test_laplacian_discrete_eigenvector_exact():
    # cosine modes at cell centers are exact eigenvectors of the stencil
    f = cosine_mode(GRID, 3, 2)
    lam = discrete_neumann_eigenvalue(GRID, 3, 2)
    assert np.allclose(laplacian(f).values, -lam * f.values, atol=1e-11)


def test_laplacian_has_zero_mean():
    f = random_field(GRID, seed=1)
    assert abs(mean(laplacian(f))) < 1e-12 * np.max(np.abs(f.values))


def test_self_adjointness_and_negativity():
    f = random_field(GRID, seed=2)
    g = random_field(GRID, seed=3)
    lhs = inner(g, laplacian(f))
    rhs = inner(f, laplacian(g))
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)
    assert inner(f, laplacian(f)) <= 1e-12


def test_grad_sq_matches_quadratic_form():
    f = random_field(GRID, seed=4)
    assert grad_sq_integral(f) == pytest.approx(-inner(f, laplacian(f)), rel=1e-12)


def test_div_mob_grad_reduces_to_laplacian():
    f = random_field(GRID, seed=5)
    mob = ScalarField.constant(GRID, 1.0)
    assert np.allclose(
        div_mob_grad(mob, f).values, laplacian(f).values, atol=1e-12
    )


def test_div_mob_grad_conservative_and_kernel():
    f = random_field(GRID, seed=6)
    mob = ScalarField(GRID, 0.5 + 0.4 * np.abs(random_field(GRID, 7).values))
    out = div_mob_grad(mob, f)
    assert abs(integrate(out)) < 1e-11 * np.max(np.abs(f.values))
    const = ScalarField.constant(GRID, 2.0)
    assert np.allclose(div_mob_grad(mob, const).values, 0.0, atol=1e-14)


def test_div_mob_grad_adjointness():
    # <v, div(m grad u)> = <u, div(m grad v)> for the face-flux form
    u = random_field(GRID, seed=8)
    v = random_field(GRID, seed=9)
    mob = ScalarField(GRID, 1.0 + 0.3 * np.cos(random_field(GRID, 10).values))
    assert inner(v, div_mob_grad(mob, u)) == pytest.approx(
        inner(u, div_mob_grad(mob, v)), rel=1e-12, abs=1e-12
    )


def test_harmonic_face_mean_handles_degenerate_cells():
    vals = np.ones((GRID.nx, GRID.ny))
    vals[3, 4] = 0.0
    mob = ScalarField(GRID, vals)
    out = div_mob_grad(mob, random_field(GRID, 11), face_mean="harmonic")
    assert np.all(np.isfinite(out.values))


def test_mean_and_integral():
    f = ScalarField.constant(GRID, 2.5)
    assert mean(f) == pytest.approx(2.5)
    assert integrate(f) == pytest.approx(2.5 * GRID.area)
    g = random_field(GRID, seed=12)
    two = ScalarField(GRID, f.values + g.values)
    assert integrate(two) == pytest.approx(integrate(f) + integrate(g), rel=1e-12)


def test_cosine_mode_integrates_to_zero():
    f = cosine_mode(GRID, 2, 1)
    assert abs(mean(f)) < 1e-13


def test_inverse_laplacian_identity():
    v = random_field(GRID, seed=13)
    f = laplacian(v)
    u = inv_neumann_laplacian(ScalarField(GRID, -f.values), rel_tol=1e-12)
    expected = v.values - np.mean(v.values)
    assert np.max(np.abs(u.values - expected)) < 1e-8 * np.max(np.abs(expected))


def test_inverse_laplacian_zero():
    z = ScalarField.constant(GRID, 0.0)
    assert np.allclose(inv_neumann_laplacian(z).values, 0.0)


def test_inverse_laplacian_eigenmode():
    f = cosine_mode(GRID, 1, 0)
    lam = discrete_neumann_eigenvalue(GRID, 1, 0)
    u = inv_neumann_laplacian(f, rel_tol=1e-12)
    assert np.allclose(u.values, f.values / lam, atol=1e-10)


def test_inverse_laplacian_mean_precondition():
    with pytest.raises(MeanError):
        inv_neumann_laplacian(ScalarField.constant(GRID, 1.0))


def test_dual_norm_basics():
    z = ScalarField.constant(GRID, 0.0)
    assert dual_norm(z) == 0.0
    f = cosine_mode(GRID, 1, 0)
    two_f = ScalarField(GRID, 2.0 * f.values)
    assert dual_norm(two_f) == pytest.approx(2.0 * dual_norm(f), rel=1e-9)
    lam = discrete_neumann_eigenvalue(GRID, 1, 0)
    assert dual_norm(f) == pytest.approx(norm_l2(f) / np.sqrt(lam), rel=1e-9)


def test_dual_norm_time_derivative_identity():
    # <d/dt v, N v> ~ 0.5 d/dt ||v||_*^2 for a forward difference, O(dt)
    base = cosine_mode(GRID, 1, 1).values
    bump = cosine_mode(GRID, 2, 0).values
    dt = 1e-4
    v0 = ScalarField(GRID, base + 0.3 * bump)
    v1 = ScalarField(GRID, base + (0.3 + dt) * bump)
    vdot = ScalarField(GRID, (v1.values - v0.values) / dt)
    lhs = inner(vdot, inv_neumann_laplacian(v0, rel_tol=1e-12))
    rhs = (dual_norm(v1, 1e-12) ** 2 - dual_norm(v0, 1e-12) ** 2) / (2 * dt)
    assert lhs == pytest.approx(rhs, rel=5e-3)


def test_snapshot_roundtrip(tmp_path):
    f = random_field(Grid2D(8, 6, 2.0, 1.0), seed=14)
    path = tmp_path / "field.bin"
    write_snapshot(path, f, "phi_a", 0.625)
    g, name, t = read_snapshot(path)
    assert name == "phi_a"
    assert t == 0.625
    assert g.grid == f.grid
    assert np.array_equal(g.values, f.values)


def test_snapshot_rejects_bad_magic(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOTMCH" + b"\x00" * 64)
    with pytest.raises(ValueError):
        read_snapshot(path)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_summation_by_parts_random(seed):
    f = random_field(GRID, seed=seed)
    g = random_field(GRID, seed=seed + 1)
    assert inner(g, laplacian(f)) == pytest.approx(
        inner(f, laplacian(g)), rel=1e-11, abs=1e-11
    )
