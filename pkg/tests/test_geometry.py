"""Signed distance, BVH, level set, curvature, pullback and surface motion."""

import numpy as np
import pytest

from valvefsi.fem import FeSpace, Field, build_structured_mesh, tensor_rule
from valvefsi.geometry import (
    ImmersedSurface,
    GeometryError,
    move_surface,
    signed_distance,
    closest_point_query,
    build_level_set,
    smeared_delta,
    extended_normal_curvature,
    side_sign,
    pullback,
    compute_reference_curvature,
    ConfigurationError,
    OutOfBandError,
    channel_leaflet_2d,
    read_stl,
    write_stl,
    read_surface,
    write_surface,
)

from geo_helpers import (
    plane_z0_surface,
    icosphere,
    segment_surface_2d,
    brute_force_unsigned,
    random_bumpy_sphere,
)


# ------------------------------------------------------------ signed distance

def test_plane_distance_sign_and_value():
    surf = plane_z0_surface(half=1.0, n=6)
    phi = signed_distance(surf, [[0.0, 0.0, 0.3]])
    assert abs(phi[0] - 0.3) < 1e-14
    phi = signed_distance(surf, [[0.1, -0.2, -0.25]])
    assert abs(phi[0] + 0.25) < 1e-14


def test_icosphere_outside_distance():
    surf = icosphere(1.0, 2)
    p = np.array([[1.5, 0.0, 0.0]])
    phi = signed_distance(surf, p)
    # faceting can only shrink the surface: 0.5 <= phi <= 0.5 + sagitta
    edge = np.linalg.norm(
        surf.vertices[surf.simplices[0, 1]] - surf.vertices[surf.simplices[0, 0]]
    )
    sagitta = edge**2 / 8.0
    assert 0.5 - 1e-12 <= phi[0] <= 0.5 + sagitta
    phi_in = signed_distance(surf, [[0.0, 0.0, 0.0]])
    assert phi_in[0] < 0


def test_random_surface_matches_brute_force_exactly():
    rng = np.random.default_rng(42)
    surf = random_bumpy_sphere(rng, 2)
    pts = rng.uniform(-1.6, 1.6, size=(100, 3))
    phi = signed_distance(surf, pts)
    brute = brute_force_unsigned(surf, pts)
    assert np.array_equal(np.abs(phi), brute)


def test_random_polyline_matches_brute_force_2d():
    rng = np.random.default_rng(9)
    t = np.linspace(0, 2 * np.pi, 33)
    verts = np.stack([np.cos(t) * (1 + 0.2 * np.sin(3 * t)), np.sin(t)], axis=-1)[:-1]
    simplices = np.stack([np.arange(32), (np.arange(32) + 1) % 32], axis=-1)
    surf = ImmersedSurface(verts, simplices, np.zeros_like(verts))
    pts = rng.uniform(-1.5, 1.5, size=(100, 2))
    phi = signed_distance(surf, pts)
    brute = brute_force_unsigned(surf, pts)
    assert np.array_equal(np.abs(phi), brute)


def test_signed_distance_is_lipschitz():
    rng = np.random.default_rng(5)
    surf = random_bumpy_sphere(rng, 1)
    a = rng.uniform(-1.5, 1.5, size=(200, 3))
    b = a + rng.normal(scale=0.3, size=a.shape)
    da = signed_distance(surf, a)
    db = signed_distance(surf, b)
    gap = np.linalg.norm(a - b, axis=1)
    assert np.all(np.abs(da - db) <= gap + 1e-12)


def test_normal_does_not_flip_across_surface():
    surf = icosphere(0.8, 2)
    rng = np.random.default_rng(2)
    dirs = rng.normal(size=(60, 3))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    outside = dirs * 0.85
    inside = dirs * 0.75
    # pseudo-normal of the closest feature seen from either side agrees
    _, _, s_out, b_out = closest_point_query(surf, outside)
    _, _, s_in, b_in = closest_point_query(surf, inside)
    n_out = surf.feature_pseudo_normals(s_out, b_out)
    n_in = surf.feature_pseudo_normals(s_in, b_in)
    assert np.all(np.einsum("nd,nd->n", n_out, n_in) > 0)


# ---------------------------------------------------------------- level set

def _q2_space(extent, cells):
    mesh = build_structured_mesh(extent, cells)
    return FeSpace(mesh, degree=2)


def test_build_level_set_plane_exact():
    surf = plane_z0_surface(half=2.0, n=4)
    space = FeSpace(
        build_structured_mesh([1, 1, 1], [3, 3, 3], origin=[-0.5, -0.5, -0.5]), 2
    )
    state = build_level_set(surf, space, eps=0.2)
    nodes = space.node_coords()
    assert np.max(np.abs(state.phi.coeffs - nodes[:, 2])) < 1e-12


def test_build_level_set_requires_degree_2():
    surf = plane_z0_surface()
    mesh = build_structured_mesh([1, 1, 1], [2, 2, 2])
    with pytest.raises(ConfigurationError, match="s >= 2"):
        build_level_set(surf, FeSpace(mesh, degree=1), eps=0.1)


def test_level_set_nodes_match_brute_force():
    rng = np.random.default_rng(3)
    surf = random_bumpy_sphere(rng, 1)
    space = FeSpace(
        build_structured_mesh([3, 3, 3], [6, 6, 6], origin=[-1.5, -1.5, -1.5]), 2
    )
    state = build_level_set(surf, space, eps=0.3)
    brute = brute_force_unsigned(surf, space.node_coords())
    assert np.array_equal(np.abs(state.phi.coeffs), brute)


def test_sphere_interpolation_error_order_three():
    # analytic distance interpolated on Q2: off-node error must shrink ~h^3
    errs = []
    hs = []
    for n in (8, 16):
        mesh = build_structured_mesh([2, 2], [n, n], origin=[-1, -1])
        space = FeSpace(mesh, degree=2)
        phi = Field.interpolate(
            space, lambda x: np.linalg.norm(x, axis=1) - 0.7
        )
        rng = np.random.default_rng(0)
        pts = rng.uniform(-0.2, 0.2, size=(400, 2)) + np.array([0.5, 0.35])
        vals = phi.eval_at_physical(pts)["value"]
        exact = np.linalg.norm(pts, axis=1) - 0.7
        errs.append(np.sqrt(np.mean((vals - exact) ** 2)))
        hs.append(2.0 / n)
    order = np.log(errs[0] / errs[1]) / np.log(hs[0] / hs[1])
    assert order > 2.6


def test_smeared_delta_values_and_normalization():
    eps = 1e-3
    assert abs(smeared_delta(0.0, eps) - 1000.0) < 1e-9
    assert abs(smeared_delta(eps / 2, eps) - 500.0) < 1e-9
    assert smeared_delta(1.01 * eps, eps) == 0.0
    assert smeared_delta(-2 * eps, eps) == 0.0
    # quadrature of delta over [-eps, eps] = 1 (antiderivative oracle)
    from valvefsi.fem import gauss_legendre_1d

    pts, wts = gauss_legendre_1d(40)
    phi = pts * eps
    total = np.sum(wts * eps * smeared_delta(phi, eps))
    assert abs(total - 1.0) < 1e-10


def test_delta_integral_spanning_segment_equals_length():
    # segment spanning the unit square: no end caps, integral = exact length
    surf = segment_surface_2d([0.5, 0.0], [0.5, 1.0], n=4)
    mesh = build_structured_mesh([1, 1], [16, 16])
    space = FeSpace(mesh, degree=2)
    eps = 2.0 * mesh.h_max
    state = build_level_set(surf, space, eps)
    pts, wts = tensor_rule(4, 2)
    cells = state.band_cells()
    jxw = wts * np.prod(mesh.h / 2)
    total = 0.0
    for c in cells:
        vals = state.phi.eval(np.full(len(pts), c), pts)["value"]
        total += np.sum(jxw * smeared_delta(vals, eps))
    assert abs(total - 1.0) < 2e-3


def test_side_sign_tie_break():
    assert side_sign([0.3])[0] == 1
    assert side_sign([-0.2])[0] == -1
    assert side_sign([0.0])[0] == 1


# ----------------------------------------------------- normal and curvature

def test_plane_level_set_normal_and_curvature():
    surf = plane_z0_surface(half=2.0, n=4)
    space = FeSpace(
        build_structured_mesh([1, 1, 1], [3, 3, 3], origin=[-0.5, -0.5, -0.5]), 2
    )
    state = build_level_set(surf, space, eps=0.2)
    rng = np.random.default_rng(1)
    cells = rng.integers(0, 27, size=20)
    pts = rng.uniform(-1, 1, size=(20, 3))
    n_hat, H, valid = extended_normal_curvature(state, cells, pts)
    assert np.all(valid)
    assert np.allclose(n_hat, [0, 0, 1], atol=1e-10)
    assert np.max(np.abs(H)) < 1e-8
    assert np.max(np.abs(np.linalg.norm(n_hat, axis=1) - 1.0)) < 1e-12


def test_circle_curvature_within_5_percent_in_band():
    r = 0.5
    n = 72  # h = r/12, inside the h <= r/8 requirement
    mesh = build_structured_mesh([3, 3], [n, n], origin=[-1.5, -1.5])
    space = FeSpace(mesh, degree=2)
    phi = Field.interpolate(space, lambda x: np.linalg.norm(x, axis=1) - r)
    from valvefsi.geometry.levelset import LevelSetState

    eps = 1.5 * mesh.h_max
    state = LevelSetState(phi=phi, eps=eps, surface=None)
    pts, _ = tensor_rule(4, 2)
    cells = state.band_cells()
    all_cells = np.repeat(cells, len(pts))
    all_pts = np.tile(pts, (len(cells), 1))
    vals = state.phi.eval(all_cells, all_pts)["value"]
    mask = np.abs(vals) <= eps / 2
    n_hat, H, valid = extended_normal_curvature(state, all_cells[mask], all_pts[mask])
    assert np.all(valid)
    phys = mesh.map_to_physical(all_cells[mask], all_pts[mask])
    exact = 1.0 / np.linalg.norm(phys, axis=1)
    rel = np.abs(H - exact) / exact
    assert np.max(rel) < 0.05
    assert np.all(H > 0)  # outward-positive convention


def test_degenerate_gradient_points_are_flagged():
    # distance to a segment: the gradient vanishes on the equidistant ridge
    surf = segment_surface_2d([0.5, 0.2], [0.5, 0.8], n=2)
    mesh = build_structured_mesh([1, 1], [8, 8])
    space = FeSpace(mesh, degree=2)
    state = build_level_set(surf, space, eps=0.25)
    from valvefsi.geometry.levelset import DegenerateGradientError

    # constant field has zero gradient everywhere
    state2 = build_level_set(surf, space, eps=0.25)
    state2.phi.coeffs[:] = 1.0
    n_hat, H, valid = extended_normal_curvature(state2, [0], [[0.0, 0.0]])
    assert not valid[0]
    assert state2.skipped_gradient_points == 1
    with pytest.raises(DegenerateGradientError):
        extended_normal_curvature(state2, [0], [[0.0, 0.0]], strict=True)


# ------------------------------------------------------------------ pullback

def test_pullback_identity_at_c_zero():
    surf, _ = channel_leaflet_2d()
    surf = ImmersedSurface(
        ref_vertices=surf.ref_vertices,
        simplices=surf.simplices,
        opening_field=surf.opening_field,
        ref_curvature=np.linspace(1.0, 2.0, surf.n_vertices),
    )
    # probe at midpoints of segments, slightly offset along the normal
    mids = 0.5 * (
        surf.vertices[surf.simplices[:, 0]] + surf.vertices[surf.simplices[:, 1]]
    )
    probe = mids + 1e-5 * surf.simplex_normals
    hhat, g = pullback(surf, probe)
    expected_h = 0.5 * (
        surf.ref_curvature[surf.simplices[:, 0]]
        + surf.ref_curvature[surf.simplices[:, 1]]
    )
    expected_g = 0.5 * (
        surf.opening_field[surf.simplices[:, 0]]
        + surf.opening_field[surf.simplices[:, 1]]
    )
    assert np.allclose(hhat, expected_h, rtol=1e-6)
    assert np.allclose(g, expected_g, rtol=1e-6, atol=1e-12)


def test_pullback_rigid_translation_constant_g():
    g = np.array([0.3, 0.1])
    surf = segment_surface_2d([0.4, 0.1], [0.4, 0.9], n=6, g=g)
    surf = ImmersedSurface(
        surf.ref_vertices, surf.simplices, surf.opening_field,
        ref_curvature=np.zeros(surf.n_vertices), c=0.5,
    )
    rng = np.random.default_rng(8)
    pts = surf.vertices[surf.simplices[:, 0]] + rng.uniform(
        -0.02, 0.02, size=(surf.n_simplices, 2)
    )
    hhat, gv = pullback(surf, pts)
    assert np.allclose(gv, g, atol=1e-12)
    assert np.allclose(hhat, 0.0, atol=1e-12)


def test_pullback_band_enforcement():
    surf = segment_surface_2d([0.5, 0.0], [0.5, 1.0], n=2)
    surf = ImmersedSurface(
        surf.ref_vertices, surf.simplices, surf.opening_field,
        ref_curvature=np.zeros(surf.n_vertices),
    )
    with pytest.raises(OutOfBandError):
        pullback(surf, [[0.9, 0.5]], band=0.1)


def test_pullback_closest_matches_exhaustive():
    rng = np.random.default_rng(12)
    surf = random_bumpy_sphere(rng, 1)
    surf = ImmersedSurface(
        surf.ref_vertices, surf.simplices, surf.opening_field,
        ref_curvature=np.zeros(surf.n_vertices),
    )
    dirs = rng.normal(size=(50, 3))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    pts = dirs * rng.uniform(0.9, 1.2, size=(50, 1))
    dist, _, _, _ = closest_point_query(surf, pts)
    brute = brute_force_unsigned(surf, pts)
    assert np.array_equal(dist, brute)


# -------------------------------------------------------------- move_surface

def test_move_surface_c_zero_bitwise():
    surf, _ = channel_leaflet_2d()
    moved = move_surface(surf, 0.0)
    assert np.array_equal(moved.vertices, surf.ref_vertices)


def test_move_surface_composition():
    surf, _ = channel_leaflet_2d()
    one_step = move_surface(surf, 0.7)
    two_step = move_surface(move_surface(surf, 0.3), 0.7)
    assert np.max(np.abs(one_step.vertices - two_step.vertices)) < 1e-14


def test_move_surface_inverted_geometry_rejected():
    # an opening field that collapses the second vertex onto the first
    verts = np.array([[0.0, 0.0], [1.0, 0.0]])
    g = np.array([[0.0, 0.0], [-1.0, 0.0]])
    surf = ImmersedSurface(verts, np.array([[0, 1]]), g)
    with pytest.raises(GeometryError):
        move_surface(surf, 1.0)


def test_leaflet_length_matches_similarity_closed_form():
    surf, info = channel_leaflet_2d(n_segments=96)
    for c in (0.0, 0.25, 0.5, 0.75, 1.0):
        moved = move_surface(surf, c)
        analytic = info.length(c)
        assert abs(moved.total_measure() - analytic) / analytic < 5e-3


# ------------------------------------------------------- reference curvature

def test_reference_curvature_recovers_arc_curvature():
    surf, info = channel_leaflet_2d(channel_height=1.0, hinge_x=1.2,
                                    sagitta_frac=0.15, n_segments=64)
    mesh = build_structured_mesh([3.0, 1.0], [72, 24])
    space = FeSpace(mesh, degree=2)
    hhat = compute_reference_curvature(surf, space, eps=2.5 * mesh.h_max)
    # interior vertices see the arc curvature; endpoints sit on the walls
    interior = slice(8, -8)
    rel = np.abs(hhat[interior] - info.kappa0) / info.kappa0
    assert np.median(rel) < 0.05
    assert np.max(rel) < 0.2


# ------------------------------------------------------------------------ io

def test_stl_roundtrip(tmp_path):
    surf = icosphere(0.7, 1)
    path = tmp_path / "sphere.stl"
    write_stl(surf, path)
    back = read_stl(path)
    assert back.n_simplices == surf.n_simplices
    assert abs(back.total_measure() - surf.total_measure()) < 1e-9


def test_internal_surface_roundtrip(tmp_path):
    surf, _ = channel_leaflet_2d()
    surf = ImmersedSurface(
        surf.ref_vertices, surf.simplices, surf.opening_field,
        ref_curvature=np.linspace(-1, 1, surf.n_vertices),
    )
    path = tmp_path / "leaflet.surf"
    write_surface(surf, path)
    back = read_surface(path)
    assert np.allclose(back.ref_vertices, surf.ref_vertices)
    assert np.allclose(back.opening_field, surf.opening_field)
    assert np.allclose(back.ref_curvature, surf.ref_curvature)
    assert np.array_equal(back.simplices, surf.simplices)
