/**
 * Client-side mirror of the server's input mapping.
 *
 * The UI must only emit actions the target's affordance set permits, so
 * every branch consults the scene document before producing anything; a
 * null result is a deliberate no-op.
 */

import {
  add, cameraForward, cameraRight, intersectRayPlane, norm, normalize,
  project, rayThroughPixel, scale, sub, V3,
} from "./geometry.js";
import type {
  InputEvent, MappedAction, SceneDoc, SceneObjectDoc,
} from "./types.js";

export const CAMERA_STEP_M = 0.25;
export const OBJECT_ROTATE_DEG_PER_PX = 0.5;
export const CAMERA_ROTATE_DEG_PER_PX = 0.2;

const KEY_MOVES: Record<string, ["forward" | "right" | "up", number]> = {
  w: ["forward", 1], s: ["forward", -1],
  a: ["right", -1], d: ["right", 1],
  q: ["up", 1], e: ["up", -1],
};

function objectById(scene: SceneDoc, id: string | null | undefined) {
  if (!id) return null;
  return scene.objects.find((o) => o.id === id) ?? null;
}

function avatarById(scene: SceneDoc, id: string | null | undefined) {
  if (!id) return null;
  return scene.avatars.find((a) => a.id === id) ?? null;
}

function lightById(scene: SceneDoc, id: string | null | undefined) {
  if (!id) return null;
  return scene.lights.find((l) => l.id === id) ?? null;
}

function worldBoundsCenterAndMinY(obj: SceneObjectDoc): { center: V3; minY: number } {
  // Conservative: translate the local bounds (ignores rotation; only used
  // to anchor the drag plane, which the server recomputes exactly anyway).
  const t = obj.transform.translation as V3;
  const lo = obj.local_bounds.min as V3;
  const hi = obj.local_bounds.max as V3;
  return {
    center: [t[0] + (lo[0] + hi[0]) / 2, t[1] + (lo[1] + hi[1]) / 2,
             t[2] + (lo[2] + hi[2]) / 2],
    minY: t[1] + lo[1],
  };
}

function wallNormal(scene: SceneDoc, position: V3): V3 {
  const h = scene.room.floor_extent / 2;
  const candidates: Array<[number, V3]> = [
    [Math.abs(position[0] - h), [1, 0, 0]],
    [Math.abs(position[0] + h), [-1, 0, 0]],
    [Math.abs(position[2] - h), [0, 0, 1]],
    [Math.abs(position[2] + h), [0, 0, -1]],
  ];
  candidates.sort((a, b) => a[0] - b[0]);
  return candidates[0][1];
}

function dragPlaneDelta(scene: SceneDoc, anchor: V3, planeNormal: V3,
                        dragDelta: [number, number]): V3 | null {
  const cam = scene.camera;
  const [u, v, depth] = project(cam, anchor);
  if (depth <= 0) return null;
  const r0 = rayThroughPixel(cam, u, v);
  const r1 = rayThroughPixel(cam, u + dragDelta[0], v + dragDelta[1]);
  const p0 = intersectRayPlane(r0.origin, r0.dir, anchor, planeNormal);
  const p1 = intersectRayPlane(r1.origin, r1.dir, anchor, planeNormal);
  if (!p0 || !p1) return null;
  return sub(p1, p0);
}

function zeroDisallowed(delta: V3, axes: string[]): V3 {
  return [
    axes.includes("x") ? delta[0] : 0,
    axes.includes("y") ? delta[1] : 0,
    axes.includes("z") ? delta[2] : 0,
  ];
}

function cameraKeyMove(scene: SceneDoc, key: string): MappedAction | null {
  const entry = KEY_MOVES[key.toLowerCase()];
  if (!entry) return null;
  const [mode, sign] = entry;
  if (mode === "up") {
    return { target: "camera",
             action: { type: "camera_move", delta: [0, sign * CAMERA_STEP_M, 0] } };
  }
  const basis = mode === "forward" ? cameraForward(scene.camera)
    : cameraRight(scene.camera);
  const flat: V3 = [basis[0], 0, basis[2]];
  if (norm(flat) < 1e-9) return null;
  const unit = normalize(flat);
  const k = sign * CAMERA_STEP_M;
  const step: V3 = [unit[0] * k, 0, unit[2] * k]; // keep y an exact +0
  return { target: "camera", action: { type: "camera_move", delta: step } };
}

/** Translate one normalized input event into a permitted (target, action). */
export function mapInput(event: InputEvent, scene: SceneDoc): MappedAction | null {
  if (event.device === "keyboard") {
    return event.key ? cameraKeyMove(scene, event.key) : null;
  }
  if (event.device !== "mouse") return null;
  const hover = event.hoverTarget ?? null;

  if (hover && hover.includes(":")) {
    // joint handles are addressed as "<avatar id>:<joint name>"
    const [avatarId, joint] = hover.split(":", 2);
    const avatar = avatarById(scene, avatarId);
    if (!avatar || event.button !== "left" || !event.dragDelta) return null;
    // anchor the drag in the view-parallel plane through the root; the
    // server solves the exact chain, the client only needs a target point
    const anchor = avatar.root_transform.translation as V3;
    const [u, v, depth] = project(scene.camera, anchor);
    if (depth <= 0) return null;
    const ray = rayThroughPixel(scene.camera, u + event.dragDelta[0],
                                v + event.dragDelta[1]);
    const fwd = cameraForward(scene.camera);
    const denom = ray.dir[0] * fwd[0] + ray.dir[1] * fwd[1] + ray.dir[2] * fwd[2];
    if (denom < 1e-12) return null;
    const target = add(ray.origin, scale(ray.dir, depth / denom));
    return { target: avatarId, action: { type: "joint_drag", joint, target } };
  }

  const obj = objectById(scene, hover);
  const avatar = avatarById(scene, hover);
  const light = lightById(scene, hover);

  if (event.button === "left") {
    if (!event.dragDelta) return null;
    if (obj) {
      const aff = obj.affordances;
      if (aff.translate_axes.length === 0) return null;
      const { center, minY } = worldBoundsCenterAndMinY(obj);
      const anchor: V3 = [center[0], minY, center[2]];
      const normal = aff.plane_locked === "wall"
        ? wallNormal(scene, obj.transform.translation as V3)
        : [0, 1, 0] as V3;
      const planeAnchor = aff.plane_locked === "wall"
        ? obj.transform.translation as V3 : anchor;
      const delta = dragPlaneDelta(scene, planeAnchor, normal, event.dragDelta);
      if (!delta) return null;
      return { target: obj.id,
               action: { type: "translate",
                         delta: zeroDisallowed(delta, aff.translate_axes) } };
    }
    if (avatar) {
      const anchor = avatar.root_transform.translation as V3;
      const delta = dragPlaneDelta(scene, [anchor[0], 0, anchor[2]], [0, 1, 0],
                                   event.dragDelta);
      if (!delta) return null;
      return { target: avatar.id,
               action: { type: "translate", delta: zeroDisallowed(delta, ["x", "z"]) } };
    }
    return null;
  }

  if (event.button === "right") {
    if (light && event.sliderValue != null) {
      return { target: light.id,
               action: { type: "set_intensity", value: event.sliderValue } };
    }
    if (obj && obj.affordances.intensity_slider && event.sliderValue != null) {
      return { target: obj.id,
               action: { type: "set_intensity", value: event.sliderValue } };
    }
    if (!event.dragDelta) return null;
    const [dx, dy] = event.dragDelta;
    if (obj || avatar) {
      // object rotation takes priority over camera rotation
      const axes = obj ? obj.affordances.rotate_axes : ["yaw"];
      const target = obj ? obj.id : avatar!.id;
      if (Math.abs(dy) > Math.abs(dx) && axes.includes("pitch")) {
        return { target, action: { type: "rotate", axis: "pitch",
                                   degrees: dy * OBJECT_ROTATE_DEG_PER_PX } };
      }
      if (axes.includes("yaw")) {
        return { target, action: { type: "rotate", axis: "yaw",
                                   degrees: dx * OBJECT_ROTATE_DEG_PER_PX } };
      }
      return null;
    }
    const axis = Math.abs(dx) >= Math.abs(dy) ? "yaw" : "pitch";
    const degrees = (axis === "yaw" ? -dx : -dy) * CAMERA_ROTATE_DEG_PER_PX;
    return { target: "camera", action: { type: "camera_rotate", axis, degrees } };
  }

  if (event.button === "middle") {
    if (obj && obj.affordances.resettable) {
      return { target: obj.id, action: { type: "reset" } };
    }
    if (avatar) return { target: avatar.id, action: { type: "reset" } };
    return null;
  }
  return null;
}
