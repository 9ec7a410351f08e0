"""Deterministic software rasterizer (pinhole camera, z-buffer).

Triangles are near-plane clipped in camera space, projected, and scanned
over their pixel bounding boxes with edge functions; depth is interpolated
perspective-correct (linear in 1/z over the screen).  Ties at z-equality
keep the earlier triangle, so output is bit-identical across runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CameraSpec


@dataclass
class RasterResult:
    depth: np.ndarray      # (H, W) float64 view depth, +inf where empty
    tri_index: np.ndarray  # (H, W) int32 index of winning triangle, -1 empty

    @property
    def hit_mask(self) -> np.ndarray:
        return self.tri_index >= 0


def _clip_near(cam_tri: np.ndarray, near: float) -> list[np.ndarray]:
    """Sutherland-Hodgman clip of one camera-space triangle at depth >= near."""
    depths = -cam_tri[:, 2]
    if np.all(depths >= near):
        return [cam_tri]
    if np.all(depths < near):
        return []
    poly = list(cam_tri)
    out = []
    for i, p in enumerate(poly):
        q = poly[(i + 1) % len(poly)]
        dp, dq = -p[2] - near, -q[2] - near
        if dp >= 0:
            out.append(p)
        if (dp >= 0) != (dq >= 0):
            t = dp / (dp - dq)
            out.append(p + t * (q - p))
    if len(out) < 3:
        return []
    return [np.array([out[0], out[k], out[k + 1]]) for k in range(1, len(out) - 1)]


def rasterize(triangles: np.ndarray, camera: CameraSpec) -> RasterResult:
    """Render world-space triangles (N, 3, 3) into depth and index buffers."""
    w, h = camera.image_width, camera.image_height
    depth = np.full((h, w), np.inf, dtype=np.float64)
    index = np.full((h, w), -1, dtype=np.int32)
    if len(triangles) == 0:
        return RasterResult(depth, index)
    f = camera.focal_px
    rot = camera.rotation.matrix()
    cam_all = (np.asarray(triangles, dtype=np.float64).reshape(-1, 3)
               - camera.position.to_array()) @ rot
    cam_all = cam_all.reshape(-1, 3, 3)

    for tri_id, cam_tri in enumerate(cam_all):
        for piece in _clip_near(cam_tri, camera.near):
            d = -piece[:, 2]
            us = w / 2.0 + f * piece[:, 0] / d
            vs = h / 2.0 - f * piece[:, 1] / d
            x0 = max(0, int(np.ceil(us.min() - 0.5)))
            x1 = min(w - 1, int(np.floor(us.max() - 0.5)))
            y0 = max(0, int(np.ceil(vs.min() - 0.5)))
            y1 = min(h - 1, int(np.floor(vs.max() - 0.5)))
            if x0 > x1 or y0 > y1:
                continue
            px = np.arange(x0, x1 + 1) + 0.5
            py = np.arange(y0, y1 + 1) + 0.5
            gx, gy = np.meshgrid(px, py)

            def edge(ax, ay, bx, by):
                return (bx - ax) * (gy - ay) - (by - ay) * (gx - ax)

            area = ((us[1] - us[0]) * (vs[2] - vs[0])
                    - (vs[1] - vs[0]) * (us[2] - us[0]))
            if area == 0.0:
                continue
            w0 = edge(us[1], vs[1], us[2], vs[2])
            w1 = edge(us[2], vs[2], us[0], vs[0])
            w2 = edge(us[0], vs[0], us[1], vs[1])
            flipped = area < 0
            if flipped:
                area, w0, w1, w2 = -area, -w0, -w1, -w2
            # Top-left fill rule on boundary pixels: after orientation
            # normalization an edge is top/left when it points leftward or
            # strictly upward in screen coordinates.
            inside = np.ones_like(w0, dtype=bool)
            for wk, (a, b) in zip((w0, w1, w2), ((1, 2), (2, 0), (0, 1))):
                if flipped:
                    a, b = b, a
                ex, ey = us[b] - us[a], vs[b] - vs[a]
                top_left = ey > 0 or (ey == 0 and ex < 0)
                inside &= (wk > 0) | ((wk == 0) & top_left)
            if not inside.any():
                continue
            inv_d = (w0 / d[0] + w1 / d[1] + w2 / d[2]) / area
            with np.errstate(divide="ignore"):
                pix_depth = 1.0 / inv_d
            window_d = depth[y0:y1 + 1, x0:x1 + 1]
            window_i = index[y0:y1 + 1, x0:x1 + 1]
            better = inside & (pix_depth < window_d)
            window_d[better] = pix_depth[better]
            window_i[better] = tri_id
    return RasterResult(depth, index)
