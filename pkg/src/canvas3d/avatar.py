"""Articulated humanoid rig: forward kinematics, FABRIK posing, prefab poses.

The shipped rig is a 16-joint humanoid (pelvis, spine, neck, head and
left/right shoulder-elbow-wrist and hip-knee-ankle chains) defined in
``resources/rig_humanoid.json``.  Avatars are immutable; every solver
returns a new instance.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources as _res
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import DegenerateChainError, SchemaViolation, UnknownPoseError
from .geometry import Aabb, Rotation, TransformTRS, Vec3

AXES = ("yaw", "pitch", "roll")


@dataclass(frozen=True)
class Joint:
    name: str
    parent: Optional[str]
    rest_offset: Vec3
    local_rotation: Rotation = field(default_factory=Rotation.identity)
    limits: Optional[Mapping[str, tuple[float, float]]] = None


@dataclass(frozen=True)
class AvatarInstance:
    id: str
    rig_name: str
    joints: tuple[Joint, ...]
    root_transform: TransformTRS = field(default_factory=TransformTRS)
    initial_transform: TransformTRS = field(default_factory=TransformTRS)
    prefab_pose: Optional[str] = None
    capsule_radius: float = 0.05
    initial_joints: tuple[Joint, ...] = ()

    def __post_init__(self):
        _validate_tree(self.joints)
        if not self.initial_joints:
            object.__setattr__(self, "initial_joints", self.joints)

    def joint(self, name: str) -> Joint:
        for j in self.joints:
            if j.name == name:
                return j
        raise KeyError(name)

    def joint_names(self) -> list[str]:
        return [j.name for j in self.joints]


def _validate_tree(joints: Sequence[Joint]) -> None:
    names = [j.name for j in joints]
    if len(set(names)) != len(names):
        raise ValueError("duplicate joint names in rig")
    roots = [j for j in joints if j.parent is None]
    if len(roots) != 1:
        raise ValueError(f"rig must have exactly one root, found {len(roots)}")
    seen = set()
    for j in joints:  # parents must precede children: gives acyclic + connected
        if j.parent is not None and j.parent not in seen:
            raise ValueError(f"joint {j.name!r} listed before its parent {j.parent!r}")
        seen.add(j.name)


# --- rig + pose resources ----------------------------------------------------

def _load_resource(name: str) -> dict:
    with _res.files("canvas3d.resources").joinpath(name).open("r", encoding="utf-8") as f:
        return json.load(f)


_RIG_CACHE: dict[str, dict] = {}


def rig_definition(rig_name: str = "humanoid16") -> dict:
    if rig_name not in _RIG_CACHE:
        table = _load_resource("rigs.json")
        if rig_name not in table:
            raise SchemaViolation(f"rig:{rig_name}", "unknown rig")
        _RIG_CACHE[rig_name] = table[rig_name]
    return _RIG_CACHE[rig_name]


def build_avatar(avatar_id: str, rig_name: str = "humanoid16",
                 root_transform: TransformTRS | None = None,
                 prefab_pose: str | None = None) -> AvatarInstance:
    """Instantiate an avatar from a shipped rig, optionally pre-posed."""
    spec = rig_definition(rig_name)
    joints = tuple(
        Joint(
            name=j["name"],
            parent=j.get("parent"),
            rest_offset=Vec3(*j["offset"]),
            limits={k: tuple(v) for k, v in j["limits"].items()} if "limits" in j else None,
        )
        for j in spec["joints"]
    )
    t = root_transform if root_transform is not None else TransformTRS()
    avatar = AvatarInstance(
        id=avatar_id,
        rig_name=rig_name,
        joints=joints,
        root_transform=t,
        initial_transform=t,
        capsule_radius=float(spec.get("capsule_radius", 0.05)),
    )
    if prefab_pose is not None:
        avatar = apply_prefab_pose(avatar, prefab_pose)
        avatar = replace(avatar, initial_joints=avatar.joints, prefab_pose=prefab_pose)
    return avatar


# --- forward kinematics -------------------------------------------------------

def joint_world_transforms(avatar: AvatarInstance) -> dict[str, tuple[Vec3, Rotation]]:
    """World (position, rotation) per joint.

    A joint's local rotation turns its children's offsets, not its own;
    bone lengths are therefore preserved exactly by construction.
    """
    out: dict[str, tuple[Vec3, Rotation]] = {}
    rt = avatar.root_transform
    for j in avatar.joints:
        if j.parent is None:
            pos = rt.translation + rt.rotation.apply(j.rest_offset)
            rot = rt.rotation.compose(j.local_rotation)
        else:
            ppos, prot = out[j.parent]
            pos = ppos + prot.apply(j.rest_offset)
            rot = prot.compose(j.local_rotation)
        out[j.name] = (pos, rot)
    return out


def forward_kinematics(avatar: AvatarInstance) -> dict[str, Vec3]:
    """World position of every joint."""
    return {name: pos for name, (pos, _rot) in joint_world_transforms(avatar).items()}


def bone_segments(avatar: AvatarInstance) -> list[tuple[Vec3, Vec3]]:
    """(parent, child) world endpoints of every bone, for capsule rendering."""
    pos = forward_kinematics(avatar)
    return [(pos[j.parent], pos[j.name]) for j in avatar.joints if j.parent is not None]


def avatar_bounds(avatar: AvatarInstance) -> Aabb:
    """World AABB of the capsule geometry (joints padded by capsule radius)."""
    pts = np.array([p.to_array() for p in forward_kinematics(avatar).values()])
    r = avatar.capsule_radius
    return Aabb(Vec3.from_array(pts.min(axis=0) - r), Vec3.from_array(pts.max(axis=0) + r))


# --- inverse kinematics -------------------------------------------------------

@dataclass(frozen=True)
class IkChain:
    joints: tuple[str, ...]
    target: Vec3


def chain_to_joint(avatar: AvatarInstance, joint_name: str, target: Vec3) -> IkChain:
    """Chain from the rig root down to `joint_name`."""
    by_name = {j.name: j for j in avatar.joints}
    if joint_name not in by_name:
        raise KeyError(joint_name)
    path = [joint_name]
    while by_name[path[-1]].parent is not None:
        path.append(by_name[path[-1]].parent)
    return IkChain(joints=tuple(reversed(path)), target=target)


def _fold_plane(root: np.ndarray, target: np.ndarray,
                current: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal (toward-target, deflection) axes for planar fold guesses.

    The second axis points at the current joint farthest off the
    root-target line so interactive drags stay on their side.
    """
    d = float(np.linalg.norm(target - root))
    e1 = (target - root) / d
    u = None
    best = 1e-9
    for q in current[1:-1]:
        off = (q - root) - ((q - root) @ e1) * e1
        n = float(np.linalg.norm(off))
        if n > best:
            best, u = n, off / n
    if u is None:
        k = int(np.argmin(np.abs(e1)))
        axis = np.zeros(3)
        axis[k] = 1.0
        u = np.cross(e1, axis)
        u /= np.linalg.norm(u)
    return e1, u


def _embed_fold(pts: np.ndarray, root: np.ndarray, e1: np.ndarray,
                u: np.ndarray) -> np.ndarray:
    """Complex planar chain into 3D, end spun onto the target direction."""
    end = pts[-1]
    if abs(end) > 1e-12:
        pts = pts * (abs(end) / end)
    out = np.empty((len(pts), 3))
    for i, p in enumerate(pts):
        out[i] = root + p.real * e1 + p.imag * u
    return out


def _equal_turn_points(lengths: np.ndarray, d: float,
                       beta: float | None = None) -> np.ndarray:
    """Complex chain points with a uniform per-joint turn.

    With an explicit `beta` the fold angle is fixed; otherwise it is
    bisected so the end-to-root distance matches `d`.
    """
    def chain_points(beta: float) -> np.ndarray:
        headings = np.arange(len(lengths)) * beta
        steps = lengths * np.exp(1j * headings)
        return np.concatenate([[0.0 + 0.0j], np.cumsum(steps)])

    if beta is not None:
        return chain_points(beta)
    # end-to-root distance shrinks as the fold angle grows; bracket then bisect
    samples = np.linspace(0.0, math.pi, 65)
    radii = [abs(chain_points(b)[-1]) for b in samples]
    hi_idx = next((i for i, r in enumerate(radii) if r <= d), None)
    if hi_idx is None:
        return chain_points(samples[int(np.argmin(radii))])  # closest approach
    if hi_idx == 0:
        return chain_points(0.0)
    lo, hi = samples[hi_idx - 1], samples[hi_idx]
    for _ in range(70):
        mid = (lo + hi) / 2.0
        if abs(chain_points(mid)[-1]) > d:
            lo = mid
        else:
            hi = mid
    return chain_points((lo + hi) / 2.0)


def _best_fold(lengths: np.ndarray, d: float) -> np.ndarray:
    """Fold candidates: uniform turn, plus every two-straight-run hinge split."""
    candidates = [_equal_turn_points(lengths, d)]
    cum = np.cumsum(lengths)
    for k in range(1, len(lengths)):
        a, b = float(cum[k - 1]), float(cum[-1] - cum[k - 1])
        hinge = _equal_turn_points(np.array([a, b]), d)
        pts = np.empty(len(lengths) + 1, dtype=complex)
        pts[0] = 0.0
        dir_a = (hinge[1] - hinge[0]) / a
        dir_b = (hinge[2] - hinge[1]) / b
        run = 0.0
        for i, l in enumerate(lengths):
            run += l
            if i < k:
                pts[i + 1] = hinge[0] + dir_a * run
            else:
                pts[i + 1] = hinge[1] + dir_b * (run - a)
        candidates.append(pts)
    return min(candidates, key=lambda c: abs(abs(c[-1]) - d))


def fabrik_solve(points: np.ndarray, lengths: np.ndarray, target: np.ndarray,
                 max_iters: int = 32, tol: float = 1e-3) -> tuple[np.ndarray, list[float]]:
    """Positional FABRIK with a fixed base.

    Near-collinear chains with a deep target sit on FABRIK's singular
    manifold and barely move per sweep, so the solver scores three
    deterministic starting configurations (the current pose, an exact
    planar fold onto the target, and a moderately bent chain) by one
    trial sweep each and iterates the winner.

    Returns the new joint positions and the effector error after each
    iteration (non-increasing for unconstrained chains).
    """
    root = points[0].copy()
    total = float(lengths.sum())
    dist_root = float(np.linalg.norm(target - root))
    errors: list[float] = []

    def sweep(p: np.ndarray) -> np.ndarray:
        p = p.copy()
        p[-1] = target  # backward: pin effector, walk to the base
        for i in range(len(p) - 2, -1, -1):
            d = p[i] - p[i + 1]
            n = np.linalg.norm(d)
            p[i] = p[i + 1] + d / n * lengths[i]
        p[0] = root  # forward: pin the base, walk back out
        for i in range(len(p) - 1):
            d = p[i + 1] - p[i]
            n = np.linalg.norm(d)
            p[i + 1] = p[i] + d / n * lengths[i]
        return p

    if dist_root >= total:
        # Out of reach: lay the chain out straight toward the target.
        p = points.copy()
        direction = (target - root) / dist_root
        for i in range(len(lengths)):
            p[i + 1] = p[i] + direction * lengths[i]
        errors.append(float(np.linalg.norm(p[-1] - target)))
        return p, errors

    starts = [points.copy()]
    if dist_root > 1e-12:
        e1, u = _fold_plane(root, target, points)
        starts.append(_embed_fold(_best_fold(lengths, dist_root), root, e1, u))
        for beta in (0.4, 0.8, 1.6):
            starts.append(_embed_fold(_equal_turn_points(lengths, -1.0, beta=beta),
                                      root, e1, u))
    # Score each start by a short trial (a stuck configuration can sit close
    # to the target yet never improve, so one sweep is not enough to judge).
    trial = min(3, max_iters)
    best_p, best_trace = None, None
    for start in starts:
        p = start
        trace = []
        for _ in range(trial):
            p = sweep(p)
            trace.append(float(np.linalg.norm(p[-1] - target)))
            if trace[-1] <= tol:
                break
        if best_trace is None or trace[-1] < best_trace[-1] - 1e-15:
            best_p, best_trace = p, trace
    p = best_p
    errors.extend(best_trace)
    for _ in range(max_iters - len(best_trace)):
        if errors[-1] <= tol:
            break
        p = sweep(p)
        errors.append(float(np.linalg.norm(p[-1] - target)))
    return p, errors


def _clamped(rot: Rotation, limits: Mapping[str, tuple[float, float]] | None) -> Rotation:
    if not limits:
        return rot
    yaw, pitch, roll = rot.to_yaw_pitch_roll()
    vals = {"yaw": yaw, "pitch": pitch, "roll": roll}
    for axis, (lo, hi) in limits.items():
        vals[axis] = min(max(vals[axis], lo), hi)
    return Rotation.from_yaw_pitch_roll(vals["yaw"], vals["pitch"], vals["roll"])


def _aim_chain(avatar: AvatarInstance, names: Sequence[str],
               targets: np.ndarray) -> AvatarInstance:
    """Rotate chain joints so each bone points at its solved position.

    Aligning bones root-to-tip lands every chain joint exactly on its
    solved position (lengths match), using only rotations, so bone
    lengths cannot drift.
    """
    joints = {j.name: j for j in avatar.joints}
    order = [j.name for j in avatar.joints]
    for i in range(len(names) - 1):
        world = joint_world_transforms(
            replace(avatar, joints=tuple(joints[n] for n in order)))
        pos_i, rot_i = world[names[i]]
        child_pos = world[names[i + 1]][0]
        cur_dir = child_pos - pos_i
        des_dir = Vec3.from_array(targets[i + 1]) - pos_i
        if cur_dir.norm() < 1e-12 or des_dir.norm() < 1e-12:
            continue
        delta = Rotation.between(cur_dir, des_dir)
        new_world = delta.compose(rot_i)
        parent = joints[names[i]].parent
        if parent is None:
            parent_rot = avatar.root_transform.rotation
        else:
            parent_rot = world[parent][1]
        new_local = parent_rot.inverse().compose(new_world)
        new_local = _clamped(new_local, joints[names[i]].limits)
        joints[names[i]] = replace(joints[names[i]], local_rotation=new_local)
    return replace(avatar, joints=tuple(joints[n] for n in order))


def solve_ik(avatar: AvatarInstance, chain: IkChain,
             max_iters: int = 32, tol: float = 1e-3) -> AvatarInstance:
    """Pose the avatar so the chain effector reaches (or approaches) the target.

    FABRIK on joint positions, then re-expressed as joint rotations;
    per-axis limits are clamped after each positional pass when present.
    """
    names = chain.joints
    if len(names) < 2:
        raise DegenerateChainError("chain needs at least two joints")
    by_name = {j.name: j for j in avatar.joints}
    for a, b in zip(names, names[1:]):
        if b not in by_name or by_name[b].parent != a:
            raise DegenerateChainError(f"chain link {a!r} -> {b!r} is not a rig bone")
    lengths = np.array([by_name[b].rest_offset.norm() for b in names[1:]])
    if np.any(lengths < 1e-12):
        raise DegenerateChainError("zero-length bone in chain")
    fk = forward_kinematics(avatar)
    points = np.array([fk[n].to_array() for n in names])
    target = chain.target.to_array()
    if float(np.linalg.norm(points[-1] - target)) <= tol:
        return avatar  # already there; zero iterations by contract
    limited = any(by_name[n].limits for n in names)
    if not limited:
        solved, _errors = fabrik_solve(points, lengths, target, max_iters, tol)
        return _aim_chain(avatar, names, solved)
    # With limits: interleave positional passes with rotational clamping.
    current = avatar
    for _ in range(max_iters):
        fk = forward_kinematics(current)
        points = np.array([fk[n].to_array() for n in names])
        solved, _errors = fabrik_solve(points, lengths, target, max_iters=1, tol=tol)
        current = _aim_chain(current, names, solved)
        fk = forward_kinematics(current)
        if (fk[names[-1]] - chain.target).norm() <= tol:
            break
    return current


# --- prefab poses --------------------------------------------------------------

_POSE_CACHE: dict | None = None


def pose_table() -> dict:
    global _POSE_CACHE
    if _POSE_CACHE is None:
        _POSE_CACHE = _load_resource("poses.json")
    return _POSE_CACHE


def apply_prefab_pose(avatar: AvatarInstance, pose_name: str) -> AvatarInstance:
    """Replace every joint rotation with the named pose table entry."""
    table = pose_table()
    if pose_name not in table:
        raise UnknownPoseError(f"no prefab pose named {pose_name!r}")
    entry = table[pose_name]
    new_joints = []
    for j in avatar.joints:
        if j.name in entry:
            yaw, pitch, roll = entry[j.name]
            rot = Rotation.from_yaw_pitch_roll(yaw, pitch, roll)
        else:
            rot = Rotation.identity()
        new_joints.append(replace(j, local_rotation=rot))
    return replace(avatar, joints=tuple(new_joints), prefab_pose=pose_name)
