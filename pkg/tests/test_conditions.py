import random
from dataclasses import replace

import numpy as np
import pytest
from PIL import Image
import io

from canvas3d.avatar import apply_prefab_pose, build_avatar
from canvas3d.conditions import (
    DEPTH_MAX,
    KEYPOINT_ORDER,
    ConditionBundle,
    depth_from_view_z,
    encode_bundle,
    encode_lighting,
    encode_png_gray16,
    encode_skeleton,
    export_mesh,
    face_light_intensity,
    gather_scene_triangles,
    lighting_to_json,
    render_depth,
    render_scene_image,
    sample_pointcloud,
    skeletons_to_json,
)
from canvas3d.errors import EmptySceneError, NoLightsError
from canvas3d.geometry import CameraSpec, Rotation, TransformTRS, Vec3, look_at
from canvas3d.jsoncanon import loads
from canvas3d.meshio import Mesh, box_mesh, load_mesh, uv_sphere
from canvas3d.raster import rasterize
from canvas3d.scene import LightSpec, RoomConfig, Scene, Translate, apply_action

from .oracles import raycast_depth
from .util import fixture_meshes, fixture_scene, make_camera, simple_object

CAM = CameraSpec(position=Vec3(0, 0, 0), rotation=Rotation.identity(),
                 image_width=96, image_height=96, near=0.1, far=20.0)


def tri(*pts):
    return np.array([pts], dtype=np.float64)


# --- rasterizer ---------------------------------------------------------------


def test_empty_scene_depth_is_all_zero():
    scene = Scene(room=RoomConfig(), camera=CAM,
                  lights=(LightSpec(id="g", kind="global"),))
    depth = render_depth(scene, meshes={})
    assert depth.values.shape == (96, 96)
    assert not depth.values.any()


def test_z_buffer_keeps_nearer_triangle():
    # Two triangles straddling the optical axis at view depths 2 and 5.
    big = 3.0
    tris = np.vstack([
        tri((-big, -big, -5.0), (big, -big, -5.0), (0, big, -5.0)),
        tri((-big, -big, -2.0), (big, -big, -2.0), (0, big, -2.0)),
    ])
    result = rasterize(tris, CAM)
    contested = (result.tri_index == 1) | (result.tri_index == 0)
    assert contested.any()
    center = result.depth[48, 48]
    assert center == pytest.approx(2.0, abs=1e-9)
    assert result.tri_index[48, 48] == 1
    # every covered pixel carries the nearer depth
    assert np.all(result.depth[result.hit_mask] <= 5.0 + 1e-9)


def test_depth_convention_near_bright_far_dark():
    vals = depth_from_view_z(np.array([[0.1, 20.0, np.inf, 10.05]]), 0.1, 20.0)
    assert vals[0, 0] == DEPTH_MAX
    assert vals[0, 1] == 0
    assert vals[0, 2] == 0  # background
    assert 0 < vals[0, 3] < DEPTH_MAX


def test_raster_matches_raycast_oracle_on_sphere():
    mesh = uv_sphere(0.8, segments=12, rings=8)
    world = mesh.transformed(TransformTRS(translation=Vec3(0.2, -0.1, -4.0)))
    tris = world.triangle_corners()
    result = rasterize(tris, CAM)
    oracle_depth, oracle_idx = raycast_depth(tris, CAM)
    both = (result.tri_index == oracle_idx) & (result.tri_index >= 0)
    assert both.sum() > 500  # plenty of agreeing coverage
    ours = depth_from_view_z(result.depth, CAM.near, CAM.far).astype(np.int64)
    ref = depth_from_view_z(oracle_depth, CAM.near, CAM.far).astype(np.int64)
    assert np.abs(ours[both] - ref[both]).max() <= 2


def test_depth_monotone_under_push_back():
    scene = fixture_scene()
    meshes = fixture_meshes()
    cam = scene.camera
    d0 = render_depth(scene, meshes=meshes)
    # push the desk 0.8 m away from the camera along the view axis (x/z only)
    fwd = cam.forward()
    step = Vec3(fwd.x, 0.0, fwd.z).normalized() * 0.8
    pushed = apply_action(scene, "desk", Translate(step))
    d1 = render_depth(pushed, meshes=meshes)
    tris0, cats0 = gather_scene_triangles(scene, meshes)
    r0 = rasterize(tris0, cam)
    tris1, cats1 = gather_scene_triangles(pushed, meshes)
    r1 = rasterize(tris1, cam)
    desk0 = np.isin(r0.tri_index, np.nonzero(np.array(cats0) == "desk")[0])
    desk1 = np.isin(r1.tri_index, np.nonzero(np.array(cats1) == "desk")[0])
    covered_both = desk0 & desk1
    assert covered_both.any()
    assert np.all(d1.values[covered_both].astype(int) <=
                  d0.values[covered_both].astype(int))


def test_depth_render_deterministic():
    scene = fixture_scene()
    meshes = fixture_meshes()
    a = render_depth(scene, meshes=meshes).to_png()
    b = render_depth(scene, meshes=meshes).to_png()
    assert a == b


def test_depth_png_round_trips_values():
    scene = fixture_scene()
    depth = render_depth(scene, meshes=fixture_meshes())
    img = Image.open(io.BytesIO(depth.to_png()))
    back = np.array(img, dtype=np.uint16)
    assert np.array_equal(back, depth.values)


# --- scene image -----------------------------------------------------------------


def test_zero_intensity_lights_render_black_geometry():
    scene = fixture_scene()
    dark = replace(scene, lights=(LightSpec(id="g", kind="global", intensity=0.0),))
    img = render_scene_image(dark, meshes=fixture_meshes())
    assert not img.any()


def test_lambert_intensity_linear_in_light_intensity():
    normals = np.array([[0, 1, 0], [0.6, 0.8, 0.0]])
    centroids = np.zeros((2, 3))
    base = [LightSpec(id="d", kind="directional", direction=Vec3(0, -1, 0),
                      intensity=0.3)]
    double = [LightSpec(id="d", kind="directional", direction=Vec3(0, -1, 0),
                        intensity=0.6)]
    i1 = face_light_intensity(normals, centroids, base)
    i2 = face_light_intensity(normals, centroids, double)
    assert np.allclose(i2, 2 * i1)


def test_doubling_light_keeps_argmax_pixel():
    scene = fixture_scene()
    meshes = fixture_meshes()
    dim = replace(scene, lights=(LightSpec(id="g", kind="global", intensity=0.2),))
    bright = replace(scene, lights=(LightSpec(id="g", kind="global", intensity=0.4),))
    img1 = render_scene_image(dim, meshes=meshes)
    img2 = render_scene_image(bright, meshes=meshes)
    assert np.unravel_index(img1.sum(axis=2).argmax(), img1.shape[:2]) == \
        np.unravel_index(img2.sum(axis=2).argmax(), img2.shape[:2])


def test_light_indicator_objects_never_rendered():
    scene = fixture_scene()
    meshes = dict(fixture_meshes())
    meshes["indicator-mesh"] = box_mesh(0.3, 0.3, 0.3)
    indicator = simple_object("ind-1", "light_indicator", size=(0.3, 0.3, 0.3),
                              at=Vec3(0, 1.0, 1.0), mesh_ref="indicator-mesh")
    from canvas3d.scene import ObjectClass, AffordanceSet
    with_gizmo = replace(scene, objects=scene.objects + (replace(
        indicator, object_class=ObjectClass.CONTEXTUAL_ELEMENT,
        affordances=AffordanceSet()),))
    base_img = render_scene_image(scene, meshes=meshes)
    gizmo_img = render_scene_image(with_gizmo, meshes=meshes)
    assert np.array_equal(base_img, gizmo_img)
    assert np.array_equal(render_depth(scene, meshes=meshes).values,
                          render_depth(with_gizmo, meshes=meshes).values)


def test_scene_image_deterministic():
    scene = fixture_scene()
    meshes = fixture_meshes()
    a = render_scene_image(scene, meshes=meshes)
    b = render_scene_image(scene, meshes=meshes)
    assert np.array_equal(a, b)


# --- skeleton ---------------------------------------------------------------------


def front_camera(distance=3.0, height=1.0):
    pos = Vec3(0, height, distance)
    return CameraSpec(position=pos, rotation=look_at(pos, Vec3(0, height, 0)),
                      image_width=256, image_height=256)


def test_skeleton_has_18_keypoints_with_synthesized_head_points():
    av = build_avatar("a")
    frame = encode_skeleton(av, front_camera())
    assert len(frame.keypoints) == 18
    by_name = dict(zip(KEYPOINT_ORDER, frame.keypoints))
    for name in ("r_eye", "l_eye", "r_ear", "l_ear"):
        x, y, c = by_name[name]
        assert c == 1
    # eyes sit between the ears, all around the head's projection
    assert by_name["r_ear"][0] < by_name["nose"][0] < by_name["l_ear"][0]


def test_centered_avatar_projects_neck_to_image_center_column():
    av = build_avatar("a")
    cam = front_camera(height=1.2)
    frame = encode_skeleton(av, cam)
    neck = dict(zip(KEYPOINT_ORDER, frame.keypoints))["neck"]
    assert neck[2] == 1
    assert neck[0] == pytest.approx(128.0, abs=0.5)


def test_avatar_behind_camera_all_confidence_zero():
    av = build_avatar("a")
    cam = CameraSpec(position=Vec3(0, 1, -3), rotation=Rotation.identity())
    # camera looks along -z; the avatar at origin is behind it
    frame = encode_skeleton(av, cam)
    assert all(c == 0 for _x, _y, c in frame.keypoints)
    assert all((x, y) == (0.0, 0.0) for x, y, _c in frame.keypoints)


def test_skeleton_projection_matches_independent_matrix_path():
    from scipy.spatial.transform import Rotation as ScipyRotation
    from canvas3d.avatar import forward_kinematics
    av = apply_prefab_pose(build_avatar("a"), "walk")
    cam = front_camera(height=0.9)
    frame = encode_skeleton(av, cam)
    fk = forward_kinematics(av)
    q = cam.rotation
    rot = ScipyRotation.from_quat([q.x, q.y, q.z, q.w]).as_matrix()
    f = (cam.image_height / 2) / np.tan(np.radians(cam.vertical_fov) / 2)
    def project(p):
        local = rot.T @ (p.to_array() - cam.position.to_array())
        d = -local[2]
        return (cam.image_width / 2 + f * local[0] / d,
                cam.image_height / 2 - f * local[1] / d)
    by_name = dict(zip(KEYPOINT_ORDER, frame.keypoints))
    for name in ("neck", "l_wrist", "r_ankle", "nose"):
        x, y, c = by_name[name]
        assert c == 1
        ex, ey = project(fk[_rig_joint(name)])
        assert x == pytest.approx(ex, abs=1e-9)
        assert y == pytest.approx(ey, abs=1e-9)


def _rig_joint(keypoint):
    return {"nose": "head"}.get(keypoint, keypoint)


def test_skeleton_json_shape():
    av = build_avatar("a")
    data = skeletons_to_json((encode_skeleton(av, front_camera()),))
    doc = loads(data)
    people = doc["people"]
    assert len(people) == 1
    assert len(people[0]["pose_keypoints_2d"]) == 54


# --- lighting ---------------------------------------------------------------------


def test_light_at_camera_position_maps_to_origin():
    cam = make_camera()
    scene = Scene(room=RoomConfig(), camera=cam,
                  lights=(LightSpec(id="p", kind="point", position=cam.position,
                                    intensity=0.5),))
    cond = encode_lighting(scene)
    assert cond.lights[0].local_position.to_array() == pytest.approx([0, 0, 0])


def test_identity_camera_keeps_world_coordinates():
    cam = CameraSpec(position=Vec3(0, 0, 0), rotation=Rotation.identity())
    scene = Scene(room=RoomConfig(), camera=cam,
                  lights=(LightSpec(id="p", kind="point",
                                    position=Vec3(1.0, 2.0, -3.0), intensity=1.0),))
    cond = encode_lighting(scene)
    assert cond.lights[0].local_position.to_array() == pytest.approx([1.0, 2.0, -3.0])


def test_lighting_invariant_under_simultaneous_rigid_transform():
    rng = random.Random(42)
    scene = fixture_scene()
    base = encode_lighting(scene)
    for _ in range(100):
        q = Rotation.from_yaw_pitch_roll(rng.uniform(-180, 180),
                                         rng.uniform(-90, 90),
                                         rng.uniform(-180, 180))
        t = Vec3(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5))
        cam = scene.camera
        moved_cam = replace(cam, position=q.apply(cam.position) + t,
                            rotation=q.compose(cam.rotation))
        moved_lights = tuple(
            replace(l, position=q.apply(l.position) + t,
                    direction=q.apply(l.direction))
            for l in scene.lights)
        moved = replace(scene, camera=moved_cam, lights=moved_lights)
        cond = encode_lighting(moved)
        for a, b in zip(base.lights, cond.lights):
            assert np.allclose(a.local_position.to_array(),
                               b.local_position.to_array(), atol=1e-9)
            assert np.allclose(a.local_direction.to_array(),
                               b.local_direction.to_array(), atol=1e-9)
            assert a.intensity == b.intensity


def test_no_lights_rejected():
    scene = Scene(room=RoomConfig(), camera=make_camera())
    with pytest.raises(NoLightsError):
        encode_lighting(scene)


def test_lighting_json_schema():
    doc = loads(lighting_to_json(encode_lighting(fixture_scene())))
    assert set(doc) == {"camera", "lights"}
    assert set(doc["camera"]) == {"fov", "width", "height"}
    assert all(set(l) == {"kind", "position", "direction", "intensity"}
               for l in doc["lights"])


# --- exports ----------------------------------------------------------------------


def test_export_mesh_round_trips_through_loader():
    scene = fixture_scene()
    meshes = fixture_meshes()
    data = export_mesh(scene, "obj", meshes=meshes)
    merged = load_mesh(data, "obj")
    from canvas3d.conditions import merged_scene_mesh
    original = merged_scene_mesh(scene, meshes)
    assert len(merged.vertices) == len(original.vertices)
    assert len(merged.triangles) == len(original.triangles)
    assert np.allclose(merged.vertices, original.vertices, atol=1e-6)


def test_export_empty_scene_rejected():
    scene = Scene(room=RoomConfig(), camera=make_camera(),
                  lights=(LightSpec(id="g", kind="global"),))
    with pytest.raises(EmptySceneError):
        export_mesh(scene, "obj", meshes={})


def _point_in_triangle(p, tri, tol=1e-6):
    a, b, c = tri
    n = np.cross(b - a, c - a)
    nn = np.linalg.norm(n)
    if nn < 1e-12:
        return False
    n = n / nn
    if abs(np.dot(p - a, n)) > tol:
        return False
    # barycentric inside test
    v0, v1, v2 = c - a, b - a, p - a
    d00, d01, d11 = v0 @ v0, v0 @ v1, v1 @ v1
    d20, d21 = v2 @ v0, v2 @ v1
    denom = d00 * d11 - d01 * d01
    u = (d11 * d20 - d01 * d21) / denom
    v = (d00 * d21 - d01 * d20) / denom
    return u >= -tol and v >= -tol and u + v <= 1 + tol


def test_pointcloud_samples_lie_on_surface():
    scene = fixture_scene()
    meshes = fixture_meshes()
    pts = sample_pointcloud(scene, 1000, seed=5, meshes=meshes)
    assert pts.shape == (1000, 3)
    from canvas3d.conditions import merged_scene_mesh
    tris = merged_scene_mesh(scene, meshes).triangle_corners()
    rng = random.Random(0)
    for idx in rng.sample(range(1000), 60):
        p = pts[idx]
        assert any(_point_in_triangle(p, t) for t in tris)


def test_pointcloud_single_triangle_stays_inside():
    mesh = Mesh(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]]), np.array([[0, 1, 2]]))
    scene = Scene(room=RoomConfig(), camera=make_camera(),
                  lights=(LightSpec(id="g", kind="global"),),
                  objects=(simple_object("t", "triangle", mesh_ref="tri-mesh"),))
    pts = sample_pointcloud(scene, 200, seed=1, meshes={"tri-mesh": mesh})
    tris = mesh.triangle_corners()
    assert all(_point_in_triangle(p, tris[0]) for p in pts)


def test_pointcloud_deterministic_per_seed():
    scene = fixture_scene()
    meshes = fixture_meshes()
    a = sample_pointcloud(scene, 64, seed=9, meshes=meshes)
    b = sample_pointcloud(scene, 64, seed=9, meshes=meshes)
    assert np.array_equal(a, b)


# --- bundle ----------------------------------------------------------------------


def test_bundle_files_use_canonical_names():
    scene = fixture_scene()
    bundle = encode_bundle(scene, meshes=fixture_meshes())
    files = bundle.files()
    assert set(files) == {"scene.png", "depth.png", "skeleton.json",
                          "lighting.json", "mesh.obj"}
    assert files["depth.png"][:8] == b"\x89PNG\r\n\x1a\n"


def test_inverse_depth_mode_monotone_and_bounded():
    z = np.array([[0.1, 1.0, 5.0, 20.0, np.inf]])
    vals = depth_from_view_z(z, 0.1, 20.0, mode="inverse")
    assert vals[0, 0] == DEPTH_MAX
    assert vals[0, 3] == 0
    assert vals[0, 4] == 0
    assert list(vals[0, :4]) == sorted(vals[0, :4], reverse=True)
    scene = fixture_scene()
    img = render_depth(scene, meshes=fixture_meshes(), mode="inverse")
    assert img.mode == "inverse"
    with pytest.raises(ValueError):
        depth_from_view_z(z, 0.1, 20.0, mode="log")
