"""Exact point-to-surface closest point and signed distance queries."""

import numpy as np

_FEATURE_TOL = 1e-10


def closest_on_segments(points, a, b):
    """Closest points on segments; inputs broadcast over leading axes.

    points, a, b: (..., d). Returns (dist2, closest, bary) where bary[..., 1]
    is the parameter along a->b.
    """
    ab = b - a
    ap = points - a
    denom = np.einsum("...d,...d->...", ab, ab)
    t = np.einsum("...d,...d->...", ap, ab) / np.where(denom > 0, denom, 1.0)
    t = np.clip(t, 0.0, 1.0)
    cp = a + t[..., None] * ab
    diff = points - cp
    dist2 = np.einsum("...d,...d->...", diff, diff)
    bary = np.stack([1.0 - t, t], axis=-1)
    return dist2, cp, bary


def closest_on_triangles(points, a, b, c):
    """Closest points on triangles (Ericson's method); broadcasts like
    closest_on_segments. Returns (dist2, closest, bary) with barycentric
    weights of (a, b, c)."""
    ab = b - a
    ac = c - a
    ap = points - a
    d1 = np.einsum("...d,...d->...", ab, ap)
    d2 = np.einsum("...d,...d->...", ac, ap)
    bp = points - b
    d3 = np.einsum("...d,...d->...", ab, bp)
    d4 = np.einsum("...d,...d->...", ac, bp)
    cp_ = points - c
    d5 = np.einsum("...d,...d->...", ab, cp_)
    d6 = np.einsum("...d,...d->...", ac, cp_)

    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    shape = d1.shape
    ones = np.ones(shape)
    zeros = np.zeros(shape)
    closest = np.empty(shape + (3,))
    bary = np.empty(shape + (3,))
    done = np.zeros(shape, dtype=bool)

    def settle(mask, cp, w):
        fresh = mask & ~done
        cp_b = np.broadcast_to(cp, shape + (3,))
        w_b = np.broadcast_to(w, shape + (3,))
        closest[fresh] = cp_b[fresh]
        bary[fresh] = w_b[fresh]
        done[fresh] = True

    # vertex regions
    settle((d1 <= 0) & (d2 <= 0), np.broadcast_to(a, shape + (3,)),
           np.stack([ones, zeros, zeros], axis=-1))
    settle((d3 >= 0) & (d4 <= d3), np.broadcast_to(b, shape + (3,)),
           np.stack([zeros, ones, zeros], axis=-1))
    settle((d6 >= 0) & (d5 <= d6), np.broadcast_to(c, shape + (3,)),
           np.stack([zeros, zeros, ones], axis=-1))

    # edge ab
    v = np.divide(d1, d1 - d3, out=np.zeros(shape), where=(d1 - d3) != 0)
    settle(
        (vc <= 0) & (d1 >= 0) & (d3 <= 0),
        a + v[..., None] * ab,
        np.stack([1 - v, v, zeros], axis=-1),
    )
    # edge ac
    w = np.divide(d2, d2 - d6, out=np.zeros(shape), where=(d2 - d6) != 0)
    settle(
        (vb <= 0) & (d2 >= 0) & (d6 <= 0),
        a + w[..., None] * ac,
        np.stack([1 - w, zeros, w], axis=-1),
    )
    # edge bc
    num = d4 - d3
    den = (d4 - d3) + (d5 - d6)
    w2 = np.divide(num, den, out=np.zeros(shape), where=den != 0)
    settle(
        (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0),
        b + w2[..., None] * (c - b),
        np.stack([zeros, 1 - w2, w2], axis=-1),
    )
    # interior
    denom = va + vb + vc
    denom = np.where(denom != 0, denom, 1.0)
    v_i = vb / denom
    w_i = vc / denom
    settle(
        np.ones(shape, dtype=bool),
        a + v_i[..., None] * ab + w_i[..., None] * ac,
        np.stack([1 - v_i - w_i, v_i, w_i], axis=-1),
    )

    diff = points - closest
    dist2 = np.einsum("...d,...d->...", diff, diff)
    return dist2, closest, bary


def _exact_pairs(surface, points, pt_idx, simp_idx):
    verts = surface.vertices
    simp = surface.simplices[simp_idx]
    p = points[pt_idx]
    if surface.dim == 2:
        return closest_on_segments(p, verts[simp[:, 0]], verts[simp[:, 1]])
    return closest_on_triangles(
        p, verts[simp[:, 0]], verts[simp[:, 1]], verts[simp[:, 2]]
    )


def closest_point_query(surface, points, chunk: int = 65536):
    """Exact closest point on the surface for each query point.

    Uses the surface's AABB tree: a seed leaf provides an achieved upper
    bound per point, leaf boxes whose lower bound exceeds it are pruned, and
    exact point-simplex distances decide among the survivors. Ties break to
    the lowest simplex index for determinism.

    Returns (dist, closest, simplex_ids, bary).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = points.shape[0]
    tree = surface.tree
    dist = np.empty(n)
    closest = np.empty((n, surface.dim))
    simplex_ids = np.empty(n, dtype=np.int64)
    bary = np.empty((n, surface.simplices.shape[1]))

    m_simp = surface.n_simplices
    if m_simp <= 64:
        # small surface: dense broadcast evaluation beats tree traversal;
        # argmin keeps the same (distance, lowest simplex id) tie rule
        v = surface.vertices
        simp = surface.simplices
        corners = [v[simp[:, k]][None, :, :] for k in range(simp.shape[1])]
        step = max(1, chunk // m_simp)
        for s in range(0, n, step):
            sl = slice(s, min(s + step, n))
            pts = points[sl][:, None, :]
            if surface.dim == 2:
                d2, cp, ba = closest_on_segments(pts, *corners)
            else:
                d2, cp, ba = closest_on_triangles(pts, *corners)
            win = np.argmin(d2, axis=1)
            rows = np.arange(d2.shape[0])
            dist[sl] = np.sqrt(d2[rows, win])
            closest[sl] = cp[rows, win]
            bary[sl] = ba[rows, win]
            simplex_ids[sl] = win
        return dist, closest, simplex_ids, bary

    for s in range(0, n, chunk):
        sl = slice(s, min(s + chunk, n))
        pts = points[sl]
        m = pts.shape[0]
        lb = tree.leaf_lower_bounds(pts)  # (m, L)
        seed = np.argmin(lb, axis=1)

        # upper bound from the seed leaf
        best_d2 = np.full(m, np.inf)
        best_simp = np.zeros(m, dtype=np.int64)
        best_cp = np.zeros((m, surface.dim))
        best_bary = np.zeros((m, surface.simplices.shape[1]))

        def consider(p_local, s_ids):
            if len(p_local) == 0:
                return
            d2, cp, ba = _exact_pairs(surface, pts, p_local, s_ids)
            # per point keep (smallest distance, then smallest simplex id)
            order = np.lexsort((s_ids, d2, p_local))
            p_s = p_local[order]
            first = np.ones(len(p_s), dtype=bool)
            first[1:] = p_s[1:] != p_s[:-1]
            upd = order[first]
            rows = p_local[upd]
            better = (d2[upd] < best_d2[rows]) | (
                (d2[upd] == best_d2[rows]) & (s_ids[upd] < best_simp[rows])
            )
            sel = upd[better]
            rows = rows[better]
            best_d2[rows] = d2[sel]
            best_simp[rows] = s_ids[sel]
            best_cp[rows] = cp[sel]
            best_bary[rows] = ba[sel]

        # seed pass
        leaf_of_pair = seed
        p_loc = np.arange(m)
        s_counts = tree.leaf_offsets[leaf_of_pair + 1] - tree.leaf_offsets[leaf_of_pair]
        p_rep = np.repeat(p_loc, s_counts)
        starts = tree.leaf_offsets[leaf_of_pair]
        s_rep = np.concatenate(
            [tree.leaf_items[a : a + c] for a, c in zip(starts, s_counts)]
        ) if m else np.empty(0, dtype=np.int64)
        consider(p_rep, s_rep)

        # prune and finish
        cand_p, cand_leaf = np.nonzero(lb <= best_d2[:, None] * (1 + 1e-12))
        keep = cand_leaf != seed[cand_p]
        cand_p, cand_leaf = cand_p[keep], cand_leaf[keep]
        if len(cand_p):
            counts = tree.leaf_offsets[cand_leaf + 1] - tree.leaf_offsets[cand_leaf]
            p_rep = np.repeat(cand_p, counts)
            s_rep = np.concatenate(
                [tree.leaf_items[a : a + c]
                 for a, c in zip(tree.leaf_offsets[cand_leaf], counts)]
            )
            consider(p_rep, s_rep)

        dist[sl] = np.sqrt(best_d2)
        closest[sl] = best_cp
        simplex_ids[sl] = best_simp
        bary[sl] = best_bary
    return dist, closest, simplex_ids, bary


def signed_distance(surface, points):
    """Signed distance to the surface: magnitude from the closest simplex,
    sign from the angle-weighted pseudo-normal of the closest feature.

    Total function; points exactly on the surface get sign +1.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    dist, closest, simp, bary = closest_point_query(surface, points)
    normals = surface.feature_pseudo_normals(simp, bary)
    side = np.einsum("nd,nd->n", points - closest, normals)
    sign = np.where(side >= 0.0, 1.0, -1.0)
    return sign * dist
