/** Scene document and action wire types (mirror of the server's JSON schema). */

export interface Vec3Doc extends Array<number> { 0: number; 1: number; 2: number }

export interface RotationDoc {
  yaw: number;
  pitch: number;
  roll: number;
}

export interface TransformDoc {
  translation: number[];
  rotation: RotationDoc;
  scale: number[];
}

export interface AffordancesDoc {
  translate_axes: string[];
  rotate_axes: string[];
  gravity_bound: boolean;
  plane_locked: string | null;
  intensity_slider: boolean;
  resettable: boolean;
  posable: boolean;
}

export interface SceneObjectDoc {
  id: string;
  category: string;
  mesh_ref: string;
  object_class: string;
  transform: TransformDoc;
  initial_transform: TransformDoc;
  local_bounds: { min: number[]; max: number[] };
  affordances: AffordancesDoc;
}

export interface AvatarDoc {
  id: string;
  rig: string;
  prefab_pose: string | null;
  root_transform: TransformDoc;
  initial_transform: TransformDoc;
  joint_rotations: Record<string, RotationDoc>;
  initial_joint_rotations: Record<string, RotationDoc>;
}

export interface LightDoc {
  id: string;
  kind: "directional" | "point" | "global";
  position: number[];
  direction: number[];
  intensity: number;
}

export interface CameraDoc {
  position: number[];
  rotation: RotationDoc;
  vertical_fov: number;
  image_width: number;
  image_height: number;
  near: number;
  far: number;
}

export interface SceneDoc {
  version: number;
  prompt: string;
  room: { floor_extent: number; grid_units: number; wall_height: number };
  camera: CameraDoc;
  lights: LightDoc[];
  objects: SceneObjectDoc[];
  avatars: AvatarDoc[];
}

export type Action =
  | { type: "translate"; delta: number[] }
  | { type: "rotate"; axis: "yaw" | "pitch" | "roll"; degrees: number }
  | { type: "reset" }
  | { type: "set_intensity"; value: number }
  | { type: "joint_drag"; joint: string; target: number[] }
  | { type: "camera_move"; delta: number[] }
  | { type: "camera_rotate"; axis: "yaw" | "pitch" | "roll"; degrees: number };

export interface MappedAction {
  target: string;
  action: Action;
}

/** Normalized pointer/keyboard input, decoupled from raw browser events. */
export interface InputEvent {
  device: "mouse" | "keyboard";
  button?: "left" | "right" | "middle";
  key?: string;
  dragDelta?: [number, number];
  hoverTarget?: string | null;
  sliderValue?: number | null;
}
