"""Command-line entry points: synth, encode, eval, serve, demo-index."""

from __future__ import annotations

import os
import sys
from pathlib import Path

import click

from . import jsoncanon
from .assets import load_index
from .clients import ENV_LLM_URL, LlmClient
from .conditions import CONDITION_KINDS
from .errors import Canvas3DError
from .evaluation import (
    detections_from_json,
    evaluate,
    oracle_detections,
    relations_from_json,
    shipped_fixture,
)
from .sceneio import load_scene
from .session import SceneSession, create_session, encode_conditions


def _llm_from_env() -> LlmClient | None:
    endpoint = os.environ.get(ENV_LLM_URL)
    return LlmClient(endpoint=endpoint) if endpoint else None


@click.group()
def main():
    """Spatial-composition engine: prompt -> editable scene -> conditions."""


@main.command()
@click.argument("prompt")
@click.option("-o", "--out", "out_dir", required=True, type=click.Path(path_type=Path),
              help="Session directory to create.")
@click.option("--index", "index_dir", type=click.Path(path_type=Path),
              help="Asset index directory (see demo-index); defaults to "
                   "OUT/index, built on demand.")
@click.option("--seed", default=0, show_default=True)
def synth(prompt: str, out_dir: Path, index_dir: Path | None, seed: int):
    """Build a scene from PROMPT and write the session under OUT."""
    if index_dir is None:
        index_dir = out_dir / "index"
        if not (index_dir / "index.jsonl").exists():
            from .demo import build_demo_index

            build_demo_index(index_dir)
            click.echo(f"note: built the demo asset index at {index_dir}", err=True)
    index = load_index(index_dir)
    llm = _llm_from_env()
    if llm is None:
        click.echo(f"note: {ENV_LLM_URL} not set; using offline keyword "
                   "inference and the fallback layout solver", err=True)
    session = create_session(prompt, index, llm, seed, directory=out_dir)
    click.echo(f"session {session.id}: {len(session.scene.objects)} objects, "
               f"{len(session.scene.avatars)} avatars -> {out_dir / 'scene.json'}")


@main.command()
@click.argument("scene_file", type=click.Path(exists=True, path_type=Path))
@click.option("-o", "--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--index", "index_dir", type=click.Path(path_type=Path),
              help="Asset index for mesh lookups (defaults to sibling session data).")
@click.option("--depth", "kinds", flag_value="depth", multiple=True)
@click.option("--skeleton", "kinds", flag_value="skeleton", multiple=True)
@click.option("--lighting", "kinds", flag_value="lighting", multiple=True)
@click.option("--scene-image", "kinds", flag_value="scene_image", multiple=True)
@click.option("--mesh", "kinds", flag_value="mesh", multiple=True)
def encode(scene_file: Path, out_dir: Path, index_dir: Path | None,
           kinds: tuple[str, ...]):
    """Encode spatial conditions for a saved scene document."""
    from .session import _collect_meshes

    scene = load_scene(scene_file.read_bytes())
    index = load_index(index_dir) if index_dir else None
    session_dir = scene_file.parent if (scene_file.parent / "meshes").is_dir() else None
    session = SceneSession(id="encode", scene=scene, initial_scene=scene)
    session.meshes = _collect_meshes(scene, index, session_dir)
    selected = list(kinds) or list(CONDITION_KINDS)
    out_dir.mkdir(parents=True, exist_ok=True)
    session.directory = None
    files = encode_conditions(session, selected)
    for name, data in files.items():
        (out_dir / name).write_bytes(data)
        click.echo(f"wrote {out_dir / name} ({len(data)} bytes)")


@main.command("eval")
@click.option("--target", "target_file", required=True,
              type=click.Path(exists=True, path_type=Path),
              help="Target detections (or scene document).")
@click.option("--generated", "generated_file", required=True,
              type=click.Path(exists=True, path_type=Path),
              help="Generated detections (or scene document).")
@click.option("--relations", "relations_file",
              type=click.Path(exists=True, path_type=Path),
              help="Relations file; defaults to the shipped fixture.")
def eval_cmd(target_file: Path, generated_file: Path, relations_file: Path | None):
    """Score spatial-relation agreement and category recall."""
    def load_detections(path: Path):
        data = path.read_bytes()
        doc = jsoncanon.loads(data)
        if isinstance(doc, dict) and "objects" in doc:
            return oracle_detections(load_scene(data))
        return detections_from_json(data)

    target = load_detections(target_file)
    generated = load_detections(generated_file)
    if relations_file is not None:
        intended, relations = relations_from_json(relations_file.read_bytes())
        if not intended:
            intended = sorted({r.subject for r in relations}
                              | {r.object for r in relations})
    else:
        intended, relations = shipped_fixture()
    report = evaluate(target, generated, relations, intended)
    sys.stdout.write(report.to_json().decode("utf-8"))


@main.command()
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--index", "index_dir", required=True, type=click.Path(path_type=Path))
@click.option("--sessions", "sessions_dir", type=click.Path(path_type=Path),
              default=Path("sessions"), show_default=True)
def serve(port: int, host: str, index_dir: Path, sessions_dir: Path):
    """Run the HTTP API."""
    import uvicorn

    from .server import SessionStore, create_app, default_llm

    store = SessionStore(load_index(index_dir), root=sessions_dir, llm=default_llm())
    uvicorn.run(create_app(store), host=host, port=port, log_level="warning")


@main.command("demo-index")
@click.option("-o", "--out", "out_dir", required=True, type=click.Path(path_type=Path))
def demo_index(out_dir: Path):
    """Write the procedural demo asset index."""
    from .demo import build_demo_index

    index = build_demo_index(out_dir)
    click.echo(f"demo index: {len(index.records)} records, "
               f"{len(index.categories)} categories -> {out_dir}")


if __name__ == "__main__":
    try:
        main()
    except Canvas3DError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)
