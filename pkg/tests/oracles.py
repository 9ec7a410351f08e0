"""Independent verification oracles.

The ray caster here shares no code with the production rasterizer: rays
are built from first principles and intersected with Moller-Trumbore, so
agreement between the two is meaningful evidence.
"""

from __future__ import annotations

import numpy as np


def raycast_depth(triangles: np.ndarray, camera) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel view depth and triangle index by exhaustive ray casting.

    Rays pass through pixel centers; parametrized so t equals view depth
    directly (direction z-component is -1 in camera coordinates).
    """
    w, h = camera.image_width, camera.image_height
    f = (h / 2.0) / np.tan(np.radians(camera.vertical_fov) / 2.0)
    xs = (np.arange(w) + 0.5 - w / 2.0) / f
    ys = (h / 2.0 - (np.arange(h) + 0.5)) / f
    gx, gy = np.meshgrid(xs, ys)
    dirs_cam = np.stack([gx, gy, -np.ones_like(gx)], axis=-1)  # t == view depth
    rot = camera.rotation.matrix()
    dirs = dirs_cam.reshape(-1, 3) @ rot.T
    origin = camera.position.to_array()

    best_t = np.full(dirs.shape[0], np.inf)
    best_i = np.full(dirs.shape[0], -1, dtype=np.int32)
    eps = 1e-12
    for idx, tri in enumerate(np.asarray(triangles, dtype=np.float64)):
        v0, v1, v2 = tri
        e1, e2 = v1 - v0, v2 - v0
        pvec = np.cross(dirs, e2)
        det = pvec @ e1
        mask = np.abs(det) > eps
        if not mask.any():
            continue
        inv_det = np.zeros_like(det)
        inv_det[mask] = 1.0 / det[mask]
        tvec = origin - v0
        u = (pvec @ tvec) * inv_det
        qvec = np.cross(tvec, e1)
        v = (dirs @ qvec) * inv_det
        t = (e2 @ qvec) * inv_det
        hit = mask & (u >= 0) & (v >= 0) & (u + v <= 1) & (t >= camera.near)
        closer = hit & (t < best_t)
        best_t[closer] = t[closer]
        best_i[closer] = idx
    return best_t.reshape(h, w), best_i.reshape(h, w)
