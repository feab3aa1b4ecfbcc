"""BDF/RIIS fluid solver: coefficients, taus, assembly, solves, invariants."""

import numpy as np
import pytest

from valvefsi.fem import FeSpace, Field, build_structured_mesh, tensor_rule
from valvefsi.fluid import (
    AssemblyError,
    BoundaryData,
    FluidParams,
    FluidState,
    NsRiisSolver,
    StateError,
    bdf_coefficients,
    compute_surface_velocity,
    initial_state,
    stabilization_taus,
)
from valvefsi.geometry import build_level_set

from geo_helpers import segment_surface_2d

MMHG = 133.322


# ---------------------------------------------------------- bdf coefficients

def test_bdf1_table():
    alpha, hist, extrap = bdf_coefficients(1)
    assert alpha == 1.0 and hist == [1.0] and extrap == [1.0]


def test_bdf2_table():
    alpha, hist, extrap = bdf_coefficients(2)
    assert alpha == 1.5 and hist == [2.0, -0.5] and extrap == [2.0, -1.0]


@pytest.mark.parametrize("order", [1, 2])
def test_bdf_constant_field_zero_derivative(order):
    alpha, hist, _ = bdf_coefficients(order)
    u = np.full(10, 3.7)
    combo = sum(w * u for w in hist)
    assert np.allclose(alpha * u - combo, 0.0, atol=1e-14)


def test_bdf_unsupported_order():
    with pytest.raises(ValueError):
        bdf_coefficients(3)


# ------------------------------------------------------------ surface velocity

def test_surface_velocity_quasi_static_limit():
    n = np.array([[0.0, 1.0]])
    assert np.allclose(compute_surface_velocity(0.4, 0.4, 1e-4, n), 0.0)


def test_surface_velocity_arithmetic():
    n = np.array([[1.0, 0.0]])
    ug = compute_surface_velocity(0.5 + 1e-3, 0.5, 2e-4, n)
    assert abs(np.linalg.norm(ug) - 5.0) < 1e-12


def test_surface_velocity_matches_phi_rate_for_translation():
    # rigidly translating membrane: u_G·n ~ -(dphi/dt) at band points
    mesh = build_structured_mesh([1.0, 1.0], [20, 20])
    space = FeSpace(mesh, degree=2)
    g = np.array([1.0, 0.0])
    dt = 1e-3
    c0, c1 = 0.3, 0.3 + 0.05
    surf0 = segment_surface_2d([0.4, 0.0], [0.4, 1.0], n=4, g=g)
    from valvefsi.geometry import move_surface

    s0 = move_surface(surf0, c0)
    s1 = move_surface(surf0, c1)
    ls0 = build_level_set(s0, space, eps=0.1)
    ls1 = build_level_set(s1, space, eps=0.1)
    rng = np.random.default_rng(4)
    pts = np.stack(
        [0.4 + c1 + rng.uniform(-0.05, 0.05, 30), rng.uniform(0.2, 0.8, 30)], axis=-1
    )
    cells, ref = mesh.locate_points(pts)
    phi0 = ls0.phi.eval(cells, ref)["value"]
    phi1 = ls1.phi.eval(cells, ref)["value"]
    from valvefsi.geometry.levelset import extended_normal_curvature

    n_hat, _, valid = extended_normal_curvature(ls1, cells, ref)
    ug = compute_surface_velocity(c1, c0, dt, n_hat[valid])
    rate_phi = -(phi1 - phi0)[valid] / dt
    assert np.allclose(np.einsum("kd,kd->k", ug, n_hat[valid]), rate_phi, atol=1e-9)


# ------------------------------------------------------------------ taus

def test_tau_transient_term_only():
    tau_m, _ = stabilization_taus(
        np.zeros(2), [0.0, 0.0], [1.0, 1.0], 0.0,
        rho=1.0, mu=0.0, resistance=1.0, eps=1.0, alpha=1.0, dt=0.1, c_r=30.0,
    )
    assert abs(tau_m - 0.1) < 1e-14


def test_tau_riis_term_only():
    # R/eps * delta = 1e6 with every other contribution zero
    tau_m, _ = stabilization_taus(
        np.zeros(2), [0.0, 0.0], [1.0, 1.0], 1e6,
        rho=0.0, mu=0.0, resistance=1.0, eps=1.0, alpha=1.0, dt=1e30, c_r=30.0,
    )
    assert abs(tau_m - 1e-6) < 1e-18


def test_tau_monotone_in_all_scales():
    rng = np.random.default_rng(17)
    G = 4.0 / np.array([0.01, 0.02]) ** 2
    g = 2.0 / np.array([0.01, 0.02])
    for _ in range(50):
        u = rng.uniform(0, 2, size=2)
        mu = rng.uniform(1e-4, 1e-1)
        delta = rng.uniform(0, 1e3)
        dt = rng.uniform(1e-5, 1e-2)
        base, _ = stabilization_taus(u, G, g, delta, 1e3, mu, 1e4, 1e-3, 1.0, dt, 30.0)
        up_u, _ = stabilization_taus(u * 2, G, g, delta, 1e3, mu, 1e4, 1e-3, 1.0, dt, 30.0)
        up_mu, _ = stabilization_taus(u, G, g, delta, 1e3, mu * 2, 1e4, 1e-3, 1.0, dt, 30.0)
        up_d, _ = stabilization_taus(u, G, g, delta * 2 + 1, 1e3, mu, 1e4, 1e-3, 1.0, dt, 30.0)
        up_t, _ = stabilization_taus(u, G, g, delta, 1e3, mu, 1e4, 1e-3, 1.0, dt / 2, 30.0)
        assert up_u <= base and up_mu <= base and up_d <= base and up_t <= base


# ---------------------------------------------------------------- assembly

def _channel_solver(nx=30, ny=10, R=1e4, eps=1e-3, dp=0.0, **kw):
    mesh = build_structured_mesh(
        [0.03, 0.01], [nx, ny], tags={"x_min": "inflow", "x_max": "outflow"}
    )
    prm = FluidParams(rho=1e3, mu=3.5e-3, resistance=R, eps=eps, **kw)
    bc = BoundaryData(p_in=lambda t: dp, p_out=lambda t: 0.0)
    return mesh, NsRiisSolver(mesh, prm, bc)


def test_rest_state_with_zero_bc_stays_at_rest():
    mesh, solver = _channel_solver()
    space2 = FeSpace(mesh, degree=2)
    surf = segment_surface_2d([0.012, 0.0], [0.012, 0.01], n=6, g=[1.0, 0.0])
    ls = build_level_set(surf, space2, eps=1.5e-3)
    state = initial_state(solver.velocity_space, solver.pressure_space, 1)
    new_state, iters, res = solver.step(state, ls, None, t=0.0, dt=2e-4)
    assert np.max(np.abs(new_state.u.coeffs)) < 1e-12
    assert np.max(np.abs(new_state.p.coeffs)) < 1e-9


def test_unfilled_history_rejected():
    mesh, solver = _channel_solver()
    state = initial_state(solver.velocity_space, solver.pressure_space, 1)
    state.history = [None]
    with pytest.raises(StateError):
        solver.assemble_step(state, None, None, 0.0, 1e-3)


def test_nan_coefficients_identify_cell():
    mesh, solver = _channel_solver()
    state = initial_state(solver.velocity_space, solver.pressure_space, 1)
    bad_cell = 17
    node = solver.scalar.cell_dofs[bad_cell, 0]
    state.history[0][node] = np.nan
    with pytest.raises(AssemblyError, match="cell"):
        solver.assemble_step(state, None, None, 0.0, 1e-3)


def test_wall_constraints_exact_after_solve():
    mesh, solver = _channel_solver(dp=500.0)
    state = initial_state(solver.velocity_space, solver.pressure_space, 1)
    state, _, _ = solver.step(state, None, None, t=0.0, dt=2e-4)
    wall = solver.wall_dofs
    full = np.concatenate([state.u.coeffs, state.p.coeffs])
    assert np.max(np.abs(full[wall])) == 0.0


def test_history_ring_rotation_bdf2():
    mesh, solver = _channel_solver(bdf_order=2, dp=100.0)
    state = initial_state(solver.velocity_space, solver.pressure_space, 2)
    s1, _, _ = solver.step(state, None, None, t=0.0, dt=1e-3)
    assert np.array_equal(s1.history[1], state.history[0])
    assert np.array_equal(s1.history[0], s1.u.coeffs)
    s2, _, _ = solver.step(s1, None, None, t=1e-3, dt=1e-3)
    assert np.array_equal(s2.history[1], s1.history[0])


def test_stokes_riis_block_symmetric():
    # convection and stabilization disabled: velocity block is symmetric
    mesh, solver = _channel_solver(
        include_convection=False, include_stabilization=False,
        viscous_form="symmetric_gradient", dp=100.0,
    )
    space2 = FeSpace(mesh, degree=2)
    surf = segment_surface_2d([0.012, 0.0], [0.012, 0.01], n=6, g=[1.0, 0.0])
    ls = build_level_set(surf, space2, eps=1.5e-3)
    state = initial_state(solver.velocity_space, solver.pressure_space, 1)
    system = solver.assemble_step(state, ls, None, 0.0, 2e-4,
                                  apply_constraints=False)
    n_v = 2 * solver.n_nodes
    A = system.matrix.tocsr()[:n_v, :n_v]
    asym = (A - A.T).toarray()
    scale = np.abs(A.toarray()).max()
    assert np.abs(asym).max() <= 1e-10 * scale


def test_quasi_static_flag_only_changes_ugamma_term():
    # u_gamma = None and u_gamma = 0 give bitwise-identical systems
    mesh, solver = _channel_solver(dp=800.0)
    space2 = FeSpace(mesh, degree=2)
    surf = segment_surface_2d([0.012, 0.0], [0.012, 0.01], n=6, g=[1.0, 0.0])
    ls = build_level_set(surf, space2, eps=1.5e-3)
    state = initial_state(solver.velocity_space, solver.pressure_space, 1)
    sys_none = solver.assemble_step(state, ls, None, 0.0, 2e-4)
    zeros = np.zeros((mesh.n_cells, len(solver.jxw), 2))
    sys_zero = solver.assemble_step(state, ls, zeros, 0.0, 2e-4)
    assert np.array_equal(sys_none.matrix.data, sys_zero.matrix.data)
    assert np.array_equal(sys_none.rhs, sys_zero.rhs)


def test_assembly_deterministic_bitwise():
    mesh, solver = _channel_solver(dp=700.0)
    state = initial_state(solver.velocity_space, solver.pressure_space, 1)
    a = solver.assemble_step(state, None, None, 0.0, 2e-4)
    b = solver.assemble_step(state, None, None, 0.0, 2e-4)
    assert np.array_equal(a.matrix.data, b.matrix.data)
    assert np.array_equal(a.rhs, b.rhs)


# ------------------------------------------------------------------- physics

def _l2_velocity_error(mesh, solver, state, exact_fn):
    pts, wts = tensor_rule(4, 2)
    cells = np.arange(mesh.n_cells)
    ac = np.repeat(cells, len(pts))
    ap = np.tile(pts, (mesh.n_cells, 1))
    uv = state.u.eval(ac, ap)["value"]
    phys = mesh.map_to_physical(ac, ap)
    ue = exact_fn(phys)
    jxw = np.tile(wts * np.prod(mesh.h / 2), mesh.n_cells)
    err = np.sqrt(np.sum(jxw * np.sum((uv - ue) ** 2, axis=1)))
    nrm = np.sqrt(np.sum(jxw * np.sum(ue**2, axis=1)))
    return err / nrm


def _poiseuille_setup(nx, ny, L=3.0, H=1.0, dp=0.0024, mu=0.01, degree=1):
    mesh = build_structured_mesh(
        [L, H], [nx, ny], tags={"x_min": "inflow", "x_max": "outflow"}
    )
    prm = FluidParams(rho=1.0, mu=mu, resistance=1.0, eps=1.0, degree=degree)
    bc = BoundaryData(p_in=lambda t: dp, p_out=lambda t: 0.0)
    solver = NsRiisSolver(mesh, prm, bc)

    def exact(x):
        u = np.zeros_like(x)
        u[:, 0] = dp * x[:, 1] * (H - x[:, 1]) / (2 * mu * L)
        return u

    return mesh, solver, exact


def test_poiseuille_q1_within_one_percent():
    mesh, solver, exact = _poiseuille_setup(72, 24)
    state, iters, res = solver.solve_steady(picard_iters=3)
    assert _l2_velocity_error(mesh, solver, state, exact) < 0.01


def test_divergence_decreases_under_refinement():
    norms = []
    for nx, ny in ((24, 8), (48, 16)):
        mesh, solver, _ = _poiseuille_setup(nx, ny)
        state, _, _ = solver.solve_steady(picard_iters=2)
        norms.append(solver.divergence_l2(state))
    order = np.log2(norms[0] / norms[1])
    assert order >= 1.0, norms


def test_supg_vanishes_for_exact_q2_solution():
    mesh, solver, exact = _poiseuille_setup(24, 8, degree=2)
    state, _, _ = solver.solve_steady(picard_iters=3)
    assert _l2_velocity_error(mesh, solver, state, exact) < 1e-8
    system = solver.assemble_step(state, None, None, 0.0, 1e12)
    supg = solver.supg_residual_norm(state, None, None, dt=1e12)
    assert supg <= 1e-8 * np.linalg.norm(system.rhs)


def test_closed_valve_leakage_and_penalty_consistency():
    # band-averaged |u| decreases monotonically as R grows by decades
    dp = 10 * MMHG
    means = []
    for R in (1e2, 1e3, 1e4):
        mesh, solver = _channel_solver(nx=60, ny=20, R=R, eps=1.5e-3, dp=dp)
        space2 = FeSpace(mesh, degree=2)
        surf = segment_surface_2d([0.012, 0.0], [0.012, 0.01], n=10, g=[1.0, 0.0])
        ls = build_level_set(surf, space2, eps=1.5e-3)
        state, _, _ = solver.solve_steady(level_set=ls, picard_iters=3)
        u_mean = solver.flux_through_plane(state, 0.024) / 0.01
        means.append(u_mean)
        pred = 1.5e-3 * dp / R
        assert abs(u_mean - pred) / pred < 0.2
        # no-penetration bound from the 1D oracle
        assert abs(u_mean) <= 1.5 * pred
    assert means[0] > means[1] > means[2] > 0


def test_transient_self_convergence_order():
    # smooth pressure ramp; Richardson order estimate from dt halvings.
    # Q2 keeps the spatial residual (and with it the dt-dependence of the
    # stabilization) small; the BDF1 estimate approaches 1 from below, so the
    # floors carry the usual Richardson slack.
    errors = {}
    for order, floor in ((1, 0.90), (2, 1.90)):
        solutions = []
        for dt in (4e-3, 2e-3, 1e-3):
            mesh = build_structured_mesh(
                [1.0, 0.5], [10, 5], tags={"x_min": "inflow", "x_max": "outflow"}
            )
            prm = FluidParams(rho=1.0, mu=0.5, resistance=1.0, eps=1.0,
                              bdf_order=order, degree=2)
            bc = BoundaryData(
                p_in=lambda t: 1000 * np.sin(2 * np.pi * t / 0.064) ** 2,
                p_out=lambda t: 0.0,
            )
            solver = NsRiisSolver(mesh, prm, bc)
            state = initial_state(solver.velocity_space, solver.pressure_space, order)
            t = 0.0
            while t < 0.032 - 1e-12:
                state, _, _ = solver.step(state, None, None, t=t + dt, dt=dt,
                                          tol=1e-13)
                t += dt
            solutions.append(state.u.coeffs.copy())
        e1 = np.linalg.norm(solutions[0] - solutions[1])
        e2 = np.linalg.norm(solutions[1] - solutions[2])
        measured = np.log2(e1 / e2)
        errors[order] = e2
        assert measured >= floor, (order, measured)
    # the second-order scheme is clearly more accurate at matched dt
    assert errors[2] < 0.2 * errors[1]
