import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dlnflow.core import scheme_coefficients
from dlnflow.errors import InvalidParameterError
from dlnflow.flow import (FlowProblem, FlowState, FlowWindow, SpectralGrid, bootstrap_flow_window,
                          dissipation_ratio, energy_ledger_update, leray_project,
                          nse_dln_step, periodic_stirring_force, random_field, rest_window,
                          run_flow, taylor_green_exact, trilinear_form)

G16, G32, G64 = SpectralGrid(16), SpectralGrid(32), SpectralGrid(64)


def rfield(grid, seed, rms=1.0, div_free=True, max_mode=4):
    return random_field(grid, np.random.default_rng(seed), max_mode, rms, div_free)


def test_grid_validation():
    for n in (4, 12, 0):
        with pytest.raises(InvalidParameterError):
            SpectralGrid(n)
    with pytest.raises(InvalidParameterError):
        SpectralGrid(16, length=0.0)


def test_dealias_mask():
    mx, my = G16.index
    keep = (np.abs(mx) <= 16 / 3) & (np.abs(my) <= 16 / 3)
    assert np.array_equal(G16.mask, keep)
    assert not G16.mask[G16.mode_slot(6, 0)] and G16.mask[G16.mode_slot(5, -5)]


def test_leray_fixes_divergence_free_fields():
    u = rfield(G32, 1)
    np.testing.assert_allclose(leray_project(G32, u), u, atol=1e-15)


def test_leray_kills_gradients():
    phi = G32.to_spectral(np.sin(2 * G32.coords[0]) * np.cos(G32.coords[1]))
    grad = np.stack([1j * G32.kx * phi, 1j * G32.ky * phi])
    assert np.abs(leray_project(G32, grad)).max() <= 1e-15


def test_leray_output_divergence_free_and_idempotent():
    f = rfield(G32, 2, div_free=False)
    p = leray_project(G32, f)
    scale = math.sqrt(G32.norm_sq(f))
    assert np.abs(G32.to_physical(G32.divergence(p))).max() <= 1e-13 * scale
    np.testing.assert_allclose(leray_project(G32, p), p, atol=1e-15)


def fine_grid_trilinear(grid, u_hat, v_hat, w_hat, factor=4):
    """Quadrature of b*(u, v, w) from explicit Fourier sums on a finer grid."""
    nf = factor * grid.n
    x = np.arange(nf) * grid.length / nf
    k = 2 * np.pi / grid.length * np.fft.fftfreq(grid.n, 1.0 / grid.n)
    E = np.exp(1j * np.outer(x, k))  # (nf, n)

    def phys(c):
        return (E @ c @ E.T).real

    def field(f):
        vals = np.array([phys(f[i]) for i in range(2)])
        dx = np.array([phys(1j * k[:, None] * f[i]) for i in range(2)])
        dy = np.array([phys(1j * k[None, :] * f[i]) for i in range(2)])
        return vals, dx, dy

    (u, _, _), (v, vdx, vdy), (w, wdx, wdy) = field(u_hat), field(v_hat), field(w_hat)
    u_grad_v = u[0] * vdx + u[1] * vdy
    u_grad_w = u[0] * wdx + u[1] * wdy
    cell = (grid.length / nf) ** 2
    return cell * (0.5 * np.sum(u_grad_v * w) - 0.5 * np.sum(u_grad_w * v))


def test_trilinear_matches_quadrature_oracle():
    tg = taylor_green_exact(G16, 0.0).u_hat
    w = rfield(G16, 3)
    oracle = fine_grid_trilinear(G16, tg, tg, w)
    assert trilinear_form(G16, tg, tg, w) == pytest.approx(oracle, abs=1e-8)
    u, v = rfield(G16, 4), rfield(G16, 5, div_free=False)
    assert trilinear_form(G16, u, v, w) == pytest.approx(fine_grid_trilinear(G16, u, v, w), abs=1e-8)


@settings(max_examples=25)
@given(seed=st.integers(0, 10**6), rms=st.floats(1e-3, 1e3))
def test_trilinear_skew_symmetry(seed, rms):
    u = rfield(G16, seed, rms, div_free=False)
    v = rfield(G16, seed + 1, rms)
    scale = math.sqrt(G16.norm_sq(u) * G16.grad_norm_sq(v) * G16.norm_sq(v))
    assert abs(trilinear_form(G16, u, v, v)) <= 1e-12 * scale


def test_trilinear_zero_and_bilinearity():
    v, w = rfield(G16, 6), rfield(G16, 7)
    assert trilinear_form(G16, G16.zeros(), v, w) == 0.0
    u1, u2 = rfield(G16, 8), rfield(G16, 9)
    lhs = trilinear_form(G16, 2 * u1 - u2, v, w)
    rhs = 2 * trilinear_form(G16, u1, v, w) - trilinear_form(G16, u2, v, w)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)
    with pytest.raises(InvalidParameterError):
        trilinear_form(G16, u1, v, np.zeros((2, 8, 8)))


def test_taylor_green_energy_and_divergence():
    s0 = taylor_green_exact(G32, 0.0)
    assert s0.kinetic_energy == pytest.approx(math.pi**2, rel=1e-14)
    assert taylor_green_exact(G32, 1.0, nu=0.01).kinetic_energy == pytest.approx(
        math.pi**2 * math.exp(-0.04), rel=1e-14)
    assert np.abs(G32.divergence(s0.u_hat)).max() == 0.0
    x, y = G32.coords
    np.testing.assert_allclose(s0.velocity()[0], -np.cos(x) * np.sin(y), atol=1e-14)
    with pytest.raises(InvalidParameterError):
        taylor_green_exact(G32, 0.0, w=0)


def test_stirring_force_support():
    assert np.all(periodic_stirring_force(G32, 0.0, 4)(0.0) == 0)
    f = periodic_stirring_force(G32, 1.0, 4)(1.7)
    nz = {tuple(int(i) for i in idx) for idx in np.argwhere(f != 0)}
    assert nz == {(0, 0, 4), (0, 0, 32 - 4)}
    np.testing.assert_allclose(G32.to_physical(f)[0], np.sin(4 * G32.coords[1]), atol=1e-14)
    assert np.abs(G32.divergence(f)).max() == 0.0


def test_zero_state_stays_at_rest():
    p = FlowProblem(0.1, G16)
    new, _ = nse_dln_step(p, rest_window(G16, 0.1), 0.1)
    assert np.abs(new.u_hat).max() == 0.0


def test_taylor_green_single_step_accuracy():
    p = FlowProblem(0.01, G64)
    k = 1e-3
    w = FlowWindow.from_states(taylor_green_exact(G64, 0.0), taylor_green_exact(G64, k))
    new, stats = nse_dln_step(p, w, k, 0.5)
    exact = taylor_green_exact(G64, 2 * k).u_hat
    assert math.sqrt(G64.norm_sq(new.u_hat - exact) / G64.norm_sq(exact)) <= 1e-6


def test_implicit_variants_differ_at_third_order():
    p = FlowProblem(0.01, G32)
    u0 = FlowState(rfield(G32, 1, 0.5), 0.0, G32)
    gaps = []
    for k in (0.01, 0.005):
        w = bootstrap_flow_window(p, u0, k)
        a, _ = nse_dln_step(p, w, k, 0.5, "fully_implicit")
        b, _ = nse_dln_step(p, w, k, 0.5, "linearly_implicit")
        gaps.append(math.sqrt(G32.norm_sq(a.u_hat - b.u_hat)))
    assert 6.5 <= gaps[0] / gaps[1] <= 9.5


def test_nonlinear_step_divergence_free_and_real():
    p = FlowProblem(0.01, G32, periodic_stirring_force(G32, 1.0, 2))
    u0 = FlowState(rfield(G32, 2, 1.0), 0.0, G32)
    run = run_flow(p, bootstrap_flow_window(p, u0, 0.05), [0.05, 0.08, 0.03], 0.5)
    s = run.window.curr
    scale = math.sqrt(G32.norm_sq(s.u_hat))
    assert np.abs(G32.divergence(s.u_hat)).max() <= 1e-12 * scale
    assert np.abs(G32.to_physical(s.u_hat, real=False).imag).max() <= 1e-12 * scale
    assert all(st.residual_norm <= 1e-10 * (1 + scale) for st in run.stats)


def test_ledger_zero_and_trapezoid_cases():
    z = G16.zeros()
    row = energy_ledger_update(scheme_coefficients(0.5, 0.1, 0.1), G16, z, z, z, 0.1)
    assert (row.E, row.D, row.eps_nu, row.chi) == (0.0, 0.0, 0.0, 0.0)
    u = [rfield(G16, s) for s in range(3)]
    row = energy_ledger_update(scheme_coefficients(1.0, 0.1, 0.2), G16, *u, 0.1)
    assert row.D == 0.0 and row.chi == 0.0 and row.eps_nu > 0


def test_ledger_matches_scalar_formulas():
    u = [rfield(G16, s) for s in range(3)]
    c = scheme_coefficients(0.6, 0.1, 0.17)
    row = energy_ledger_update(c, G16, *u, 0.02)
    norms = [G16.norm_sq(x) for x in u]
    assert row.E == pytest.approx(0.25 * 1.6 * norms[2] + 0.25 * 0.4 * norms[1], rel=1e-13)
    d = c.a[0] * u[2] + c.a[1] * u[1] + c.a[2] * u[0]
    assert row.D == pytest.approx(G16.norm_sq(d) / c.k_hat, rel=1e-13)
    assert row.chi == pytest.approx(row.D / row.eps_nu, rel=1e-13)


def test_dissipation_ratio_sentinels():
    assert dissipation_ratio(0.0, 1.0) == 0.0
    assert dissipation_ratio(0.001, 1.0) == 0.001
    assert dissipation_ratio(0.0, 0.0) == 0.0
    assert dissipation_ratio(1e-3, 0.0) == math.inf


def test_taylor_green_decay_energy_non_increasing():
    p = FlowProblem(0.01, G32)
    w = FlowWindow.from_states(taylor_green_exact(G32, 0.0), taylor_green_exact(G32, 0.05))
    run = run_flow(p, w, [0.05] * 100, 0.5)
    E = np.array([r.E for r in run.ledger])
    assert np.all(np.diff(E) <= 0)
    assert all(r.energy_inequality_holds() for r in run.ledger)


def test_forced_run_stays_within_data_bound():
    nu, grid = 0.05, G32
    p = FlowProblem(nu, grid, periodic_stirring_force(grid, 1.0, 4))
    run = run_flow(p, rest_window(grid, 0.1), [0.1] * 300, 0.5)
    ke = np.array([r.ke for r in run.ledger])
    # steady balance nu |grad u|^2 = (f, u) with Poincare gives KE <= ||f||_{-1}^2 / (2 nu^2)
    bound = grid.dual_norm_sq(p.force_hat(0.0)) / (2 * nu**2)
    assert np.all(np.isfinite(ke)) and ke.max() <= bound
    tail = ke[-50:]
    assert tail.std() <= 1e-3 * tail.mean()
    assert all(r.energy_inequality_holds() for r in run.ledger)
