/** Camera math mirroring the server's conventions (y up, camera looks -z). */

import type { CameraDoc, RotationDoc } from "./types.js";

export type V3 = [number, number, number];

export const add = (a: V3, b: V3): V3 => [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
export const sub = (a: V3, b: V3): V3 => [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
export const scale = (a: V3, s: number): V3 => [a[0] * s, a[1] * s, a[2] * s];
export const dot = (a: V3, b: V3): number => a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
export const norm = (a: V3): number => Math.sqrt(dot(a, a));

export function normalize(a: V3): V3 {
  const n = norm(a);
  if (n < 1e-12) throw new Error("cannot normalize near-zero vector");
  return scale(a, 1 / n);
}

/** Row-major 3x3 rotation matrix from yaw/pitch/roll degrees (Y-X'-Z''). */
export function rotationMatrix(r: RotationDoc): number[][] {
  const d = Math.PI / 180;
  const [cy, sy] = [Math.cos(r.yaw * d), Math.sin(r.yaw * d)];
  const [cx, sx] = [Math.cos(r.pitch * d), Math.sin(r.pitch * d)];
  const [cz, sz] = [Math.cos(r.roll * d), Math.sin(r.roll * d)];
  // Ry(yaw) @ Rx(pitch) @ Rz(roll)
  return [
    [cy * cz + sy * sx * sz, -cy * sz + sy * sx * cz, sy * cx],
    [cx * sz, cx * cz, -sx],
    [-sy * cz + cy * sx * sz, sy * sz + cy * sx * cz, cy * cx],
  ];
}

export const applyMatrix = (m: number[][], v: V3): V3 => [
  m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
  m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
  m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
];

export const applyTransposed = (m: number[][], v: V3): V3 => [
  m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
  m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
  m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
];

export function focalPx(camera: CameraDoc): number {
  return (camera.image_height / 2) /
    Math.tan((camera.vertical_fov * Math.PI) / 360);
}

/** Project a world point; returns [u, v, viewDepth] (u/v valid for depth > 0). */
export function project(camera: CameraDoc, p: V3): [number, number, number] {
  const m = rotationMatrix(camera.rotation);
  const local = applyTransposed(m, sub(p, camera.position as V3));
  const depth = -local[2];
  const f = focalPx(camera);
  return [
    camera.image_width / 2 + (f * local[0]) / depth,
    camera.image_height / 2 - (f * local[1]) / depth,
    depth,
  ];
}

/** World-space (origin, unit direction) of the ray through a pixel. */
export function rayThroughPixel(camera: CameraDoc, u: number, v: number):
    { origin: V3; dir: V3 } {
  const f = focalPx(camera);
  const dCam: V3 = [
    (u - camera.image_width / 2) / f,
    (camera.image_height / 2 - v) / f,
    -1,
  ];
  const m = rotationMatrix(camera.rotation);
  return { origin: camera.position as V3, dir: normalize(applyMatrix(m, dCam)) };
}

export function intersectRayPlane(origin: V3, dir: V3, planePoint: V3,
                                  planeNormal: V3): V3 | null {
  const denom = dot(dir, planeNormal);
  if (Math.abs(denom) < 1e-12) return null;
  const t = dot(sub(planePoint, origin), planeNormal) / denom;
  if (t < 0) return null;
  return add(origin, scale(dir, t));
}

export function cameraForward(camera: CameraDoc): V3 {
  return applyMatrix(rotationMatrix(camera.rotation), [0, 0, -1]);
}

export function cameraRight(camera: CameraDoc): V3 {
  return applyMatrix(rotationMatrix(camera.rotation), [1, 0, 0]);
}
