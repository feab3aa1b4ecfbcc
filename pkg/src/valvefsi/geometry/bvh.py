"""Axis-aligned bounding-box tree over surface simplices.

Built by recursive median split on the longest centroid axis. Queries prune
with exact box lower bounds against a per-point upper bound achieved on a seed
leaf, so results are exact (identical to brute force), not approximate.
"""

import numpy as np


class AabbTree:
    def __init__(self, box_lo, box_hi, leaf_size: int = 8):
        self.box_lo = np.asarray(box_lo, dtype=float)
        self.box_hi = np.asarray(box_hi, dtype=float)
        n = self.box_lo.shape[0]
        self.leaf_size = leaf_size
        self.perm = np.arange(n)
        centers = 0.5 * (self.box_lo + self.box_hi)

        self._leaf_lo = []
        self._leaf_hi = []
        self._leaf_slices = []
        self._node_count = 0
        self._build(0, n, centers)
        self.leaf_lo = np.array(self._leaf_lo)
        self.leaf_hi = np.array(self._leaf_hi)
        # concatenated simplex ids per leaf and their offsets
        self.leaf_offsets = np.concatenate(
            [[0], np.cumsum([e - s for s, e in self._leaf_slices])]
        )
        self.leaf_items = np.concatenate(
            [self.perm[s:e] for s, e in self._leaf_slices]
        )

    @property
    def n_leaves(self) -> int:
        return len(self._leaf_slices)

    @property
    def n_nodes(self) -> int:
        return self._node_count

    def _build(self, start, end, centers):
        self._node_count += 1
        ids = self.perm[start:end]
        if end - start <= self.leaf_size:
            self._leaf_lo.append(self.box_lo[ids].min(axis=0))
            self._leaf_hi.append(self.box_hi[ids].max(axis=0))
            self._leaf_slices.append((start, end))
            return
        c = centers[ids]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        order = np.argsort(c[:, axis], kind="stable")
        self.perm[start:end] = ids[order]
        mid = start + (end - start) // 2
        self._build(start, mid, centers)
        self._build(mid, end, centers)

    def leaf_lower_bounds(self, points):
        """Squared point-to-box distances to every leaf -> (npts, n_leaves)."""
        points = np.asarray(points, dtype=float)
        d = np.maximum(self.leaf_lo[None, :, :] - points[:, None, :], 0.0)
        d = np.maximum(d, points[:, None, :] - self.leaf_hi[None, :, :])
        return np.einsum("pld,pld->pl", d, d)

    def leaf_simplices(self, leaf_id: int):
        return self.leaf_items[self.leaf_offsets[leaf_id] : self.leaf_offsets[leaf_id + 1]]
