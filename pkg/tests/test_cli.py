import json

from click.testing import CliRunner

from canvas3d.cli import main
from canvas3d.evaluation import detections_to_json, oracle_detections
from canvas3d.sceneio import load_scene


def test_demo_index_synth_encode_eval_round(tmp_path):
    runner = CliRunner()
    index_dir = tmp_path / "index"
    out = runner.invoke(main, ["demo-index", "-o", str(index_dir)])
    assert out.exit_code == 0, out.output
    assert (index_dir / "index.jsonl").exists()
    assert (index_dir / "embeddings.f32").exists()

    session_dir = tmp_path / "sess"
    out = runner.invoke(main, ["synth", "a table with a mug and a human",
                               "-o", str(session_dir), "--index", str(index_dir),
                               "--seed", "3"])
    assert out.exit_code == 0, out.output
    scene_file = session_dir / "scene.json"
    assert scene_file.exists()
    scene = load_scene(scene_file.read_bytes())
    assert {o.category for o in scene.objects} >= {"table", "mug"}

    cond_dir = tmp_path / "conditions"
    out = runner.invoke(main, ["encode", str(scene_file), "-o", str(cond_dir),
                               "--index", str(index_dir),
                               "--depth", "--skeleton", "--lighting",
                               "--scene-image"])
    assert out.exit_code == 0, out.output
    for name in ("depth.png", "skeleton.json", "lighting.json", "scene.png"):
        assert (cond_dir / name).exists(), name

    # eval: compare the scene against itself through the detection oracle
    target = tmp_path / "target.json"
    target.write_bytes(detections_to_json(oracle_detections(scene)))
    out = runner.invoke(main, ["eval", "--target", str(target),
                               "--generated", str(scene_file)])
    assert out.exit_code == 0, out.output
    report = json.loads(out.output)
    assert set(report) == {"recall", "uni_det", "per_relation",
                           "missing_categories"}


def test_eval_with_custom_relations(tmp_path):
    runner = CliRunner()
    dets = [
        {"label": "house", "bbox": [0, 0, 20, 20], "depth": 4.0},
        {"label": "trees", "bbox": [60, 0, 90, 20], "depth": 8.0},
    ]
    target = tmp_path / "t.json"
    generated = tmp_path / "g.json"
    target.write_text(json.dumps(dets))
    generated.write_text(json.dumps(dets))
    relations = tmp_path / "rel.json"
    relations.write_text(json.dumps({
        "intended": ["house", "trees"],
        "relations": [
            {"subject": "house", "predicate": "front-left", "object": "trees"}],
    }))
    out = runner.invoke(main, ["eval", "--target", str(target),
                               "--generated", str(generated),
                               "--relations", str(relations)])
    assert out.exit_code == 0, out.output
    report = json.loads(out.output)
    assert report["recall"] == 100
    assert report["uni_det"] == 100


def test_synth_without_index_builds_demo_index(tmp_path):
    runner = CliRunner()
    out = runner.invoke(main, ["synth", "a sofa and a lamp",
                               "-o", str(tmp_path / "s")])
    assert out.exit_code == 0, out.output
    assert (tmp_path / "s" / "index" / "index.jsonl").exists()
    scene = load_scene((tmp_path / "s" / "scene.json").read_bytes())
    assert {o.category for o in scene.objects} >= {"sofa", "lamp"}
