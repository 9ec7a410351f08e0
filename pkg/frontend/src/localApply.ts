/**
 * Approximate local action application for optimistic rendering.
 *
 * Moves the viewport immediately while the authoritative result is in
 * flight; the server's confirmed scene replaces this state on every
 * response, so gravity snapping and IK are deliberately left out here.
 */

import type { Action, SceneDoc } from "./types.js";

function clone<T>(doc: T): T {
  return JSON.parse(JSON.stringify(doc)) as T;
}

function wrapDegrees(deg: number): number {
  let d = deg % 360;
  if (d > 180) d -= 360;
  if (d <= -180) d += 360;
  return d;
}

export function applyLocal(doc: SceneDoc, target: string, action: Action): SceneDoc {
  const next = clone(doc);
  next.version = doc.version + 1;
  if (action.type === "camera_move") {
    next.camera.position = next.camera.position.map(
      (c, i) => c + action.delta[i]);
    return next;
  }
  if (action.type === "camera_rotate") {
    next.camera.rotation[action.axis] =
      wrapDegrees(next.camera.rotation[action.axis] + action.degrees);
    return next;
  }
  if (action.type === "set_intensity") {
    for (const light of next.lights) {
      if (light.id === target || light.id === `${target}-light`) {
        light.intensity = action.value;
      }
    }
    return next;
  }
  const obj = next.objects.find((o) => o.id === target);
  if (obj) {
    if (action.type === "translate") {
      obj.transform.translation = obj.transform.translation.map(
        (c, i) => c + action.delta[i]);
    } else if (action.type === "rotate") {
      obj.transform.rotation[action.axis] =
        wrapDegrees(obj.transform.rotation[action.axis] + action.degrees);
    } else if (action.type === "reset") {
      obj.transform = clone(obj.initial_transform);
    }
    return next;
  }
  const avatar = next.avatars.find((a) => a.id === target);
  if (avatar) {
    if (action.type === "translate") {
      avatar.root_transform.translation = avatar.root_transform.translation.map(
        (c, i) => c + action.delta[i]);
    } else if (action.type === "rotate") {
      avatar.root_transform.rotation[action.axis] =
        wrapDegrees(avatar.root_transform.rotation[action.axis] + action.degrees);
    } else if (action.type === "reset") {
      avatar.root_transform = clone(avatar.initial_transform);
      avatar.joint_rotations = clone(avatar.initial_joint_rotations);
    }
    // joint_drag: no local IK; the confirmed pose arrives with the response
    return next;
  }
  return next;
}
