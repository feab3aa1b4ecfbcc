"""Idealized valve geometries: a 2D channel leaflet (acceptance vehicle) and a
3D three-leaflet root. Both prescribe the opening displacement g so that c = 0
is the closed and c = 1 the fully open configuration."""

from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .surface import ImmersedSurface


def _rotation2d(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass
class ChannelLeafletInfo:
    """Closed forms of the 2D arc-leaflet family.

    The open configuration is the closed arc rotated by -theta_max about the
    hinge; linear interpolation in c is then a similarity map
    M_c = (1-c) I + c R(-theta_max), i.e. a rotation plus scaling rho(c), so
    arc length and curvature have closed forms rho(c) L0 and kappa0 / rho(c).
    """

    hinge: np.ndarray
    arc_center: np.ndarray
    arc_radius: float
    theta_span: float
    theta_max: float
    channel_height: float
    depth: float
    orifice_area_max: float

    @property
    def kappa0(self) -> float:
        # normal points away from the arc center (downstream), so H = +1/r
        return 1.0 / self.arc_radius

    def rho(self, c: float) -> float:
        th = self.theta_max
        return float(np.sqrt((1 - c + c * np.cos(th)) ** 2 + (c * np.sin(th)) ** 2))

    def length(self, c: float) -> float:
        return self.rho(c) * self.arc_radius * self.theta_span

    def curvature(self, c: float) -> float:
        return self.kappa0 / self.rho(c)

    def _arc_points(self, n: int = 2001) -> np.ndarray:
        th = np.linspace(-self.theta_span / 2, self.theta_span / 2, n)
        pts = self.arc_center + self.arc_radius * np.stack(
            [np.cos(th), np.sin(th)], axis=-1
        )
        # pin endpoints to the walls exactly, as the mesh generator does
        pts[0] = self.hinge
        pts[-1] = self.hinge + np.array([0.0, self.channel_height])
        return pts

    def gap(self, c: float) -> float:
        """Clear height between the leaflet and the opposite wall at opening c."""
        pts = self._arc_points()
        M = (1 - c) * np.eye(2) + c * _rotation2d(-self.theta_max)
        moved = self.hinge + (pts - self.hinge) @ M.T
        return float(self.channel_height - moved[:, 1].max())

    def orifice_area(self, c: float) -> float:
        return self.depth * max(self.gap(c), 0.0)


def channel_leaflet_2d(
    channel_height: float = 0.01,
    hinge_x: float = 0.012,
    sagitta_frac: float = 0.08,
    theta_max_deg: float = 70.0,
    n_segments: int = 48,
    orifice_area_max: float = 3e-4,
):
    """Circular-arc leaflet hinged at the bottom wall of a 2D channel.

    Closed: the arc spans the full channel height, bulging downstream (+x),
    so the valve blocks the channel. Open: the arc rotated by theta_max about
    the hinge toward the downstream wall. g is the difference of the two
    configurations, so intermediate shapes are scaled rotations of the arc.

    Returns (surface, ChannelLeafletInfo).
    """
    H = channel_height
    sag = sagitta_frac * H
    if sag <= 0:
        raise ValueError("sagitta must be positive")
    hinge = np.array([hinge_x, 0.0])
    # circle through (0,0), (sag, H/2), (0,H) relative to the hinge
    cx = (sag**2 - H**2 / 4.0) / (2.0 * sag)
    radius = float(np.hypot(cx, H / 2.0))
    center = hinge + np.array([cx, H / 2.0])
    half_span = float(np.arctan2(H / 2.0, -cx))
    th = np.linspace(-half_span, half_span, n_segments + 1)
    closed = center + radius * np.stack([np.cos(th), np.sin(th)], axis=-1)
    closed[0] = hinge  # pin endpoints exactly to the walls
    closed[-1] = np.array([hinge_x, H])

    theta_max = np.radians(theta_max_deg)
    R = _rotation2d(-theta_max)
    opened = hinge + (closed - hinge) @ R.T
    g = opened - closed
    simplices = np.stack([np.arange(n_segments), np.arange(1, n_segments + 1)], axis=-1)
    surface = ImmersedSurface(ref_vertices=closed, simplices=simplices, opening_field=g)

    info = ChannelLeafletInfo(
        hinge=hinge,
        arc_center=center,
        arc_radius=radius,
        theta_span=2 * half_span,
        theta_max=theta_max,
        channel_height=H,
        depth=1.0,
        orifice_area_max=orifice_area_max,
    )
    gap_open = info.gap(1.0)
    if gap_open <= 0:
        raise ValueError("open configuration does not clear the channel")
    info.depth = orifice_area_max / gap_open
    return surface, info


@dataclass
class AorticRootInfo:
    valve_x: float
    annulus_radius: float
    theta_max: float
    free_edge_closed: np.ndarray  # (k, 3) free-edge vertices at c = 0
    free_edge_open: np.ndarray    # (k, 3) at c = 1
    orifice_area_max: float

    def _polygon_area(self, pts_yz: np.ndarray) -> float:
        order = np.argsort(np.arctan2(pts_yz[:, 1], pts_yz[:, 0]))
        p = pts_yz[order]
        x, y = p[:, 0], p[:, 1]
        return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))

    def raw_orifice_area(self, c: float) -> float:
        pts = (1 - c) * self.free_edge_closed + c * self.free_edge_open
        return self._polygon_area(pts[:, 1:])

    def orifice_area(self, c: float) -> float:
        return max(self.raw_orifice_area(c) - self.raw_orifice_area(0.0), 0.0)


def aortic_root_3d(
    half_width: float = 0.016,
    valve_x: float = 0.02,
    annulus_radius: float = 0.012,
    bulge: float = 0.002,
    tip_gap_frac: float = 0.04,
    n_radial: int = 5,
    n_angular: int = 8,
    seam_gap_deg: float = 3.0,
    orifice_area_max: float = 3e-4,
):
    """Three congruent leaflet sectors hinged on a circular annulus, plus a
    fixed seat plate sealing the annulus against the square duct wall.

    Each leaflet is a bulged sector from the annulus rim to a small central
    gap; g rotates every meridian about its rim point toward downstream. The
    rotation angle is normalized so the open free-edge polygon has the
    configured orifice area. Returns (surface, AorticRootInfo).
    """
    r_ann = annulus_radius
    r_tip = tip_gap_frac * r_ann

    def leaflet_points(theta):
        """Vertex grids (closed, open) for all three leaflets at angle theta."""
        closed_all, open_all = [], []
        for k in range(3):
            psi0 = np.radians(k * 120.0 + seam_gap_deg / 2.0)
            psi1 = np.radians((k + 1) * 120.0 - seam_gap_deg / 2.0)
            psi = np.linspace(psi0, psi1, n_angular + 1)
            s = np.linspace(0.0, 1.0, n_radial + 1)
            S, PSI = np.meshgrid(s, psi, indexing="ij")
            a = (r_ann - r_tip) * S            # radial-inward offset from the rim
            b = bulge * S * (2.0 - S)          # downstream bulge
            rho_cl = r_ann - a
            x_cl = valve_x + b
            closed = np.stack(
                [x_cl, rho_cl * np.cos(PSI), rho_cl * np.sin(PSI)], axis=-1
            )
            a_op = a * np.cos(theta) - b * np.sin(theta)
            b_op = a * np.sin(theta) + b * np.cos(theta)
            rho_op = r_ann - a_op
            x_op = valve_x + b_op
            opened = np.stack(
                [x_op, rho_op * np.cos(PSI), rho_op * np.sin(PSI)], axis=-1
            )
            closed_all.append(closed)
            open_all.append(opened)
        return closed_all, open_all

    def free_edges(theta):
        closed_all, open_all = leaflet_points(theta)
        fc = np.concatenate([c[-1] for c in closed_all])
        fo = np.concatenate([o[-1] for o in open_all])
        return fc, fo

    def area_at_theta(theta):
        fc, fo = free_edges(theta)
        info = AorticRootInfo(valve_x, r_ann, theta, fc, fo, orifice_area_max)
        return info.orifice_area(1.0)

    theta_hi = np.radians(80.0)
    if area_at_theta(theta_hi) < orifice_area_max:
        raise ValueError(
            "requested orifice area exceeds the geometric maximum; "
            "increase annulus_radius"
        )
    theta = scipy.optimize.brentq(
        lambda t: area_at_theta(t) - orifice_area_max, np.radians(5.0), theta_hi
    )

    closed_all, open_all = leaflet_points(theta)
    verts, gs, tris = [], [], []
    offset = 0

    def add_grid(closed, opened):
        nonlocal offset
        ns, na = closed.shape[0], closed.shape[1]
        flat = closed.reshape(-1, 3)
        verts.append(flat)
        gs.append((opened - closed).reshape(-1, 3))
        patch = []
        for i in range(ns - 1):
            for j in range(na - 1):
                v00 = offset + i * na + j
                v01 = v00 + 1
                v10 = v00 + na
                v11 = v10 + 1
                patch.append([v00, v10, v01])
                patch.append([v01, v10, v11])
        patch = np.array(patch, dtype=np.int64)
        # orient every patch with its normals pointing downstream (+x)
        local = np.concatenate(verts)[patch]
        normals = np.cross(local[:, 1] - local[:, 0], local[:, 2] - local[:, 0])
        if normals[:, 0].sum() < 0:
            patch = patch[:, [0, 2, 1]]
        tris.extend(patch.tolist())
        offset += ns * na

    for closed, opened in zip(closed_all, open_all):
        add_grid(closed, opened)

    # seat plate: annulus rim to the square duct boundary at x = valve_x
    n_plate = 3 * (n_angular + 1)
    psi = np.linspace(0.0, 2 * np.pi, n_plate, endpoint=False)
    inner = np.stack(
        [np.full(n_plate, valve_x), r_ann * np.cos(psi), r_ann * np.sin(psi)], axis=-1
    )
    scale = half_width / np.maximum(np.abs(np.cos(psi)), np.abs(np.sin(psi)))
    outer = np.stack(
        [np.full(n_plate, valve_x), scale * np.cos(psi), scale * np.sin(psi)], axis=-1
    )
    base = offset
    verts.append(inner)
    verts.append(outer)
    gs.append(np.zeros((2 * n_plate, 3)))
    plate = []
    for j in range(n_plate):
        jn = (j + 1) % n_plate
        a0, a1 = base + j, base + jn
        b0, b1 = base + n_plate + j, base + n_plate + jn
        plate.append([a0, b0, a1])
        plate.append([a1, b0, b1])
    plate = np.array(plate, dtype=np.int64)
    local = np.concatenate(verts)[plate]
    normals = np.cross(local[:, 1] - local[:, 0], local[:, 2] - local[:, 0])
    if normals[:, 0].sum() < 0:
        plate = plate[:, [0, 2, 1]]
    tris.extend(plate.tolist())

    surface = ImmersedSurface(
        ref_vertices=np.concatenate(verts),
        simplices=np.array(tris, dtype=np.int64),
        opening_field=np.concatenate(gs),
    )
    fc, fo = free_edges(theta)
    info = AorticRootInfo(valve_x, r_ann, theta, fc, fo, orifice_area_max)
    return surface, info
