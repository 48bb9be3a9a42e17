"""Independent reference implementations used by the tests."""

import numpy as np


def brute_force_intersections(polylines):
    """All-pairs closed-segment intersection count with exact int64 orientation tests.

    Polylines must have integer coordinates and no repeated consecutive points.
    Returns (per-polyline self-crossings excluding adjacent segments, crossings
    between different polylines).
    """
    segs, owner, local = [], [], []
    for k, p in enumerate(polylines):
        p = np.asarray(p, dtype=np.int64)
        for i in range(len(p) - 1):
            segs.append((*p[i], *p[i + 1]))
            owner.append(k)
            local.append(i)
    s = np.array(segs, dtype=np.int64).reshape(-1, 4)
    owner = np.array(owner)
    local = np.array(local)
    n = len(s)
    i, j = np.triu_indices(n, k=1)
    a, b = s[i], s[j]

    def orient(p, q, r):
        v = (q[:, 0] - p[:, 0]) * (r[:, 1] - p[:, 1]) - (q[:, 1] - p[:, 1]) * (r[:, 0] - p[:, 0])
        return np.sign(v)

    def within(p, q, r):
        return ((np.minimum(p[:, 0], q[:, 0]) <= r[:, 0]) & (r[:, 0] <= np.maximum(p[:, 0], q[:, 0]))
                & (np.minimum(p[:, 1], q[:, 1]) <= r[:, 1]) & (r[:, 1] <= np.maximum(p[:, 1], q[:, 1])))

    p1, p2, q1, q2 = a[:, :2], a[:, 2:], b[:, :2], b[:, 2:]
    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    hit = ((d1 * d2 < 0) & (d3 * d4 < 0)) | ((d1 == 0) & within(q1, q2, p1)) \
        | ((d2 == 0) & within(q1, q2, p2)) | ((d3 == 0) & within(p1, p2, q1)) \
        | ((d4 == 0) & within(p1, p2, q2))
    same = owner[i] == owner[j]
    adjacent = same & (np.abs(local[i] - local[j]) == 1)
    hit &= ~adjacent
    intra = np.bincount(owner[i][hit & same], minlength=len(polylines))
    return [int(c) for c in intra], int(np.count_nonzero(hit & ~same))


def random_polylines(rng, max_segments=500, grid=60):
    """Random integer polylines (random walks) without repeated consecutive points."""
    total = int(rng.integers(2, max_segments + 1))
    k = int(rng.integers(1, 5))
    cuts = np.sort(rng.choice(np.arange(1, total), size=min(k - 1, total - 1), replace=False))
    sizes = np.diff(np.concatenate(([0], cuts, [total])))
    out = []
    for m in sizes:
        pts = [rng.integers(0, grid, 2)]
        while len(pts) < m + 1:
            step = rng.integers(-6, 7, 2)
            if np.any(step != 0):
                pts.append(pts[-1] + step)
        out.append(np.array(pts, dtype=float))
    return out
