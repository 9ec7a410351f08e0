import math
import random

import numpy as np
import pytest

from canvas3d.avatar import (
    AvatarInstance,
    IkChain,
    Joint,
    apply_prefab_pose,
    avatar_bounds,
    bone_segments,
    build_avatar,
    chain_to_joint,
    fabrik_solve,
    forward_kinematics,
    solve_ik,
)
from canvas3d.errors import DegenerateChainError, UnknownPoseError
from canvas3d.geometry import Rotation, TransformTRS, Vec3


def two_link_arm(l1=0.4, l2=0.3) -> AvatarInstance:
    joints = (
        Joint("base", None, Vec3(0, 0, 0)),
        Joint("mid", "base", Vec3(l1, 0, 0)),
        Joint("tip", "mid", Vec3(l2, 0, 0)),
    )
    return AvatarInstance(id="arm", rig_name="custom", joints=joints)


def closed_form_two_link(l1: float, l2: float, target: np.ndarray) -> np.ndarray:
    """Law-of-cosines effector position for a planar-free 2-link chain.

    Reachable targets are hit exactly; otherwise the chain saturates along
    the target direction.
    """
    d = float(np.linalg.norm(target))
    if d >= l1 + l2:
        return target / d * (l1 + l2)
    if d <= abs(l1 - l2):
        return target / (d if d > 0 else 1.0) * abs(l1 - l2)
    return target


def bone_length_drift(avatar: AvatarInstance) -> float:
    pos = forward_kinematics(avatar)
    worst = 0.0
    for j in avatar.joints:
        if j.parent is None:
            continue
        expected = j.rest_offset.norm()
        actual = (pos[j.name] - pos[j.parent]).norm()
        worst = max(worst, abs(actual - expected) / expected)
    return worst


# --- forward kinematics -----------------------------------------------------------


def test_fk_identity_rotations_accumulate_offsets():
    av = build_avatar("a")
    pos = forward_kinematics(av)
    assert (pos["pelvis"] - Vec3(0, 0.97, 0)).norm() < 1e-12
    assert (pos["head"] - Vec3(0, 0.97 + 0.25 + 0.25 + 0.15, 0)).norm() < 1e-12
    assert (pos["l_wrist"] - Vec3(0.18 + 0.26 + 0.25, 0.97 + 0.5 - 0.02, 0)).norm() < 1e-12


def test_fk_root_yaw_180_mirrors_descendants():
    av = build_avatar("a")
    turned = AvatarInstance(
        id="a", rig_name=av.rig_name, joints=av.joints,
        root_transform=TransformTRS(rotation=Rotation.from_yaw_pitch_roll(180, 0, 0)))
    p0 = forward_kinematics(av)
    p1 = forward_kinematics(turned)
    for name in p0:
        assert p1[name].x == pytest.approx(-p0[name].x, abs=1e-9)
        assert p1[name].z == pytest.approx(-p0[name].z, abs=1e-9)
        assert p1[name].y == pytest.approx(p0[name].y, abs=1e-12)


def test_fk_preserves_bone_lengths_in_random_poses():
    rng = random.Random(4)
    av = build_avatar("a")
    for _ in range(20):
        posed_joints = tuple(
            Joint(j.name, j.parent, j.rest_offset,
                  Rotation.from_yaw_pitch_roll(
                      rng.uniform(-90, 90), rng.uniform(-90, 90), rng.uniform(-90, 90)))
            for j in av.joints)
        posed = AvatarInstance(id="a", rig_name=av.rig_name, joints=posed_joints)
        assert bone_length_drift(posed) <= 1e-12


# --- FABRIK ----------------------------------------------------------------------


def test_ik_noop_when_target_already_reached():
    av = two_link_arm()
    tip = forward_kinematics(av)["tip"]
    out = solve_ik(av, IkChain(("base", "mid", "tip"), tip))
    assert out is av


def test_ik_unreachable_target_fully_extends_chain():
    av = two_link_arm(0.4, 0.3)
    target = Vec3(5.0, 2.0, -1.0)
    out = solve_ik(av, IkChain(("base", "mid", "tip"), target))
    pos = forward_kinematics(out)
    reach = (pos["tip"] - pos["base"]).norm()
    assert abs(reach - 0.7) < 1e-9
    # collinear toward the target
    to_target = (target - pos["base"]).normalized()
    assert (pos["tip"] - pos["base"]).normalized().dot(to_target) > 1 - 1e-9


def test_ik_two_link_matches_closed_form_oracle():
    rng = random.Random(77)
    failures = 0
    for _ in range(100):
        l1, l2 = rng.uniform(0.2, 0.6), rng.uniform(0.2, 0.6)
        av = two_link_arm(l1, l2)
        # sample a strictly reachable target in the annulus
        r = rng.uniform(abs(l1 - l2) + 0.01, l1 + l2 - 0.01)
        theta = rng.uniform(0, 2 * math.pi)
        phi = rng.uniform(-math.pi / 2, math.pi / 2)
        target = np.array([r * math.cos(theta) * math.cos(phi),
                           r * math.sin(phi),
                           r * math.sin(theta) * math.cos(phi)])
        oracle = closed_form_two_link(l1, l2, target)
        out = solve_ik(av, IkChain(("base", "mid", "tip"), Vec3.from_array(target)))
        tip = forward_kinematics(out)["tip"].to_array()
        assert np.linalg.norm(tip - oracle) <= 1e-3
        assert bone_length_drift(out) <= 1e-9


def test_ik_deterministic():
    av = two_link_arm()
    target = Vec3(0.2, 0.3, 0.1)
    a = solve_ik(av, IkChain(("base", "mid", "tip"), target))
    b = solve_ik(av, IkChain(("base", "mid", "tip"), target))
    pa = forward_kinematics(a)
    pb = forward_kinematics(b)
    for name in pa:
        assert (pa[name] - pb[name]).norm() == 0.0


def test_fabrik_error_non_increasing():
    rng = random.Random(13)
    for _ in range(50):
        n = rng.randint(2, 5)
        lengths = np.array([rng.uniform(0.1, 0.5) for _ in range(n)])
        pts = np.zeros((n + 1, 3))
        pts[1:, 0] = np.cumsum(lengths)
        r = rng.uniform(0.05, lengths.sum() * 0.99)
        v = np.array([rng.gauss(0, 1) for _ in range(3)])
        target = v / np.linalg.norm(v) * r
        _, errors = fabrik_solve(pts, lengths, target, max_iters=32, tol=1e-9)
        for a, b in zip(errors, errors[1:]):
            assert b <= a + 1e-12


def test_ik_rejects_degenerate_chains():
    av = two_link_arm()
    with pytest.raises(DegenerateChainError):
        solve_ik(av, IkChain(("base",), Vec3(1, 0, 0)))
    zero_bone = AvatarInstance(
        id="z", rig_name="custom",
        joints=(Joint("a", None, Vec3(0, 0, 0)), Joint("b", "a", Vec3(0, 0, 0))))
    with pytest.raises(DegenerateChainError):
        solve_ik(zero_bone, IkChain(("a", "b"), Vec3(1, 0, 0)))


def test_chain_to_joint_builds_contiguous_path():
    av = build_avatar("a")
    chain = chain_to_joint(av, "l_wrist", Vec3(0, 1, 0))
    assert chain.joints == ("pelvis", "spine", "neck", "l_shoulder", "l_elbow", "l_wrist")


def test_ik_on_humanoid_reaches_hand_target():
    av = build_avatar("a")
    target = Vec3(0.35, 1.1, 0.3)
    chain = chain_to_joint(av, "l_wrist", target)
    out = solve_ik(av, chain)
    pos = forward_kinematics(out)
    assert (pos["l_wrist"] - target).norm() <= 1e-3
    assert bone_length_drift(out) <= 1e-9


def test_ik_respects_joint_limits_when_present():
    l1, l2 = 0.4, 0.4
    joints = (
        Joint("base", None, Vec3(0, 0, 0)),
        Joint("mid", "base", Vec3(l1, 0, 0), limits={"yaw": (-10.0, 10.0)}),
        Joint("tip", "mid", Vec3(l2, 0, 0)),
    )
    av = AvatarInstance(id="arm", rig_name="custom", joints=joints)
    # target needs a sharp elbow bend; the clamp must keep it nearly straight
    out = solve_ik(av, IkChain(("base", "mid", "tip"), Vec3(0.05, 0.3, 0.0)))
    yaw, pitch, roll = out.joint("mid").local_rotation.to_yaw_pitch_roll()
    assert -10.0 - 1e-6 <= yaw <= 10.0 + 1e-6
    assert bone_length_drift(out) <= 1e-9


# --- prefab poses -----------------------------------------------------------------


def test_stand_pose_is_rest_pose():
    av = apply_prefab_pose(build_avatar("a"), "stand")
    for j in av.joints:
        assert j.local_rotation == Rotation.identity()


def test_sit_pose_flexes_hips_and_knees_90_degrees():
    av = apply_prefab_pose(build_avatar("a"), "sit")
    pos = forward_kinematics(av)
    for side in ("l", "r"):
        thigh = (pos[f"{side}_knee"] - pos[f"{side}_hip"]).normalized()
        shin = (pos[f"{side}_ankle"] - pos[f"{side}_knee"]).normalized()
        # thigh roughly horizontal forward, shin vertical down
        assert thigh.dot(Vec3(0, 0, 1)) > 0.95
        assert shin.dot(Vec3(0, -1, 0)) > 0.95
        knee_angle = math.degrees(math.acos(max(-1, min(1, thigh.dot(shin)))))
        assert knee_angle == pytest.approx(90.0, abs=10.0)


def test_unknown_pose_rejected():
    with pytest.raises(UnknownPoseError):
        apply_prefab_pose(build_avatar("a"), "fly")


def test_avatar_bounds_pad_by_capsule_radius():
    av = build_avatar("a")
    b = avatar_bounds(av)
    assert b.min.y == pytest.approx(0.97 - 0.05 - 0.42 - 0.45 - 0.05)
    assert b.max.y == pytest.approx(0.97 + 0.65 + 0.05)
    assert len(bone_segments(av)) == 15
