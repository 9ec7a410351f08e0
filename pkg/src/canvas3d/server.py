"""HTTP API over scene sessions.

One ordered queue (a lock) serializes all mutations within a session;
rejected actions come back as 409 with the rejection reason.  Scene
documents are served as canonical bytes so clients can compare their local
copy byte for byte.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse

from . import jsoncanon
from .assets import AssetIndex
from .clients import (
    ENV_GEN_URL,
    ENV_LLM_URL,
    LlmClient,
    MockGenerationBackend,
    ModelDescriptor,
    RequestsTransport,
)
from .conditions import CONDITION_FILENAMES, CONDITION_KINDS
from .errors import (
    ActionRejected,
    Canvas3DError,
    MeshParseError,
    NoMatchingAssetError,
    SchemaViolation,
)
from .meshio import dump_obj
from .sceneio import action_from_json, save_scene
from .session import (
    SceneSession,
    add_object_from_mesh,
    add_object_from_prompt,
    create_session,
    encode_conditions,
    generate,
    load_session,
    randomize_objects,
    set_liked,
)

ALL_CONDITIONS = frozenset(CONDITION_KINDS)


class SessionStore:
    """Server-side state: the asset index, sessions, and backend registry."""

    def __init__(self, index: AssetIndex, root: Path | str | None = None,
                 llm: Optional[LlmClient] = None,
                 models: Optional[dict[str, ModelDescriptor]] = None,
                 gen_transport=None):
        self.index = index
        self.root = Path(root) if root is not None else None
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)
        self.llm = llm
        self.sessions: dict[str, SceneSession] = {}
        self.models = models or default_models()
        self.gen_transport = gen_transport
        if self.gen_transport is None:
            endpoint = os.environ.get(ENV_GEN_URL)
            self.gen_transport = RequestsTransport() if endpoint \
                else MockGenerationBackend()

    def create(self, prompt: str, seed: int = 0) -> SceneSession:
        directory = None
        session = create_session(prompt, self.index, self.llm, seed)
        if self.root is not None:
            directory = self.root / session.id
            session.bind_directory(directory)
        self.sessions[session.id] = session
        return session

    def get(self, session_id: str) -> Optional[SceneSession]:
        session = self.sessions.get(session_id)
        if session is None and self.root is not None:
            path = self.root / session_id
            if (path / "initial_scene.json").exists():
                session = load_session(path, self.index)
                self.sessions[session_id] = session
        return session


def default_models() -> dict[str, ModelDescriptor]:
    endpoint = os.environ.get(ENV_GEN_URL, "mock://generate")
    return {
        "mock-backbone": ModelDescriptor(
            id="mock-backbone", supported_conditions=ALL_CONDITIONS,
            endpoint=endpoint),
        "depth-only": ModelDescriptor(
            id="depth-only", supported_conditions=frozenset({"depth"}),
            endpoint=endpoint),
    }


def default_llm() -> Optional[LlmClient]:
    endpoint = os.environ.get(ENV_LLM_URL)
    if not endpoint:
        return None
    return LlmClient(endpoint=endpoint)


def _error(status: int, kind: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"error": kind, "message": message})


def _scene_response(session: SceneSession) -> Response:
    return Response(content=save_scene(session.scene),
                    media_type="application/json")


def create_app(store: SessionStore) -> FastAPI:
    app = FastAPI(title="canvas3d", docs_url=None, redoc_url=None)

    @app.exception_handler(Canvas3DError)
    async def on_engine_error(_request, exc: Canvas3DError):
        if isinstance(exc, ActionRejected):
            return _error(409, type(exc).__name__, str(exc))
        if isinstance(exc, (SchemaViolation, MeshParseError)):
            return _error(400, type(exc).__name__, str(exc))
        if isinstance(exc, NoMatchingAssetError):
            return _error(404, type(exc).__name__, str(exc))
        return _error(500, type(exc).__name__, str(exc))

    @app.post("/sessions")
    async def post_session(request: Request):
        doc = jsoncanon.loads(await request.body())
        prompt = doc.get("prompt", "")
        seed = int(doc.get("seed", 0))
        session = store.create(prompt, seed)
        return JSONResponse({"id": session.id,
                             "scene": jsoncanon.loads(save_scene(session.scene))})

    def _session_or_404(session_id: str):
        session = store.get(session_id)
        if session is None:
            raise NoMatchingAssetError(f"no session {session_id!r}")
        return session

    @app.get("/sessions/{session_id}/scene")
    async def get_scene(session_id: str):
        return _scene_response(_session_or_404(session_id))

    @app.post("/sessions/{session_id}/actions")
    async def post_action(session_id: str, request: Request):
        session = _session_or_404(session_id)
        doc = jsoncanon.loads(await request.body())
        if not isinstance(doc, dict) or "target" not in doc:
            raise SchemaViolation("target", "missing field")
        action = action_from_json(doc.get("action"))
        with session.lock:
            session.apply(str(doc["target"]), action)
        return _scene_response(session)

    @app.post("/sessions/{session_id}/objects")
    async def post_object(session_id: str, request: Request,
                          category: str = "", format: str = "obj"):
        session = _session_or_404(session_id)
        body = await request.body()
        content_type = request.headers.get("content-type", "")
        with session.lock:
            if content_type.startswith("application/json"):
                doc = jsoncanon.loads(body)
                obj = add_object_from_prompt(session, str(doc.get("prompt", "")),
                                             store.index)
            else:  # raw mesh upload; category/format from the query string
                obj = add_object_from_mesh(session, body, format,
                                           category or "upload")
        return JSONResponse({"id": obj.id,
                             "scene": jsoncanon.loads(save_scene(session.scene))})

    @app.post("/sessions/{session_id}/randomize")
    async def post_randomize(session_id: str, request: Request):
        session = _session_or_404(session_id)
        doc = jsoncanon.loads(await request.body())
        with session.lock:
            randomize_objects(session, float(doc.get("magnitude", 0.5)),
                              int(doc.get("seed", 0)))
        return _scene_response(session)

    @app.post("/sessions/{session_id}/encode")
    async def post_encode(session_id: str, request: Request):
        session = _session_or_404(session_id)
        doc = jsoncanon.loads(await request.body())
        kinds = doc.get("kinds", list(CONDITION_KINDS))
        unknown = set(kinds) - ALL_CONDITIONS
        if unknown:
            raise SchemaViolation("kinds", f"unknown kinds {sorted(unknown)}")
        with session.lock:
            encode_conditions(session, kinds)
        files = {kind: f"/sessions/{session_id}/files/conditions/"
                 + CONDITION_FILENAMES[kind] for kind in kinds}
        return JSONResponse({"files": files})

    @app.post("/sessions/{session_id}/generate")
    async def post_generate(session_id: str, request: Request):
        session = _session_or_404(session_id)
        doc = jsoncanon.loads(await request.body())
        model_id = doc.get("model", "mock-backbone")
        if model_id not in store.models:
            raise NoMatchingAssetError(f"no model {model_id!r}")
        kinds = doc.get("conditions", ["depth"])
        with session.lock:
            record = generate(session, store.models[model_id], kinds,
                              prompt=doc.get("prompt"), seed=doc.get("seed"),
                              transport=store.gen_transport)
        return JSONResponse({
            "url": f"/sessions/{session_id}/files/{record.path}",
            "latency": record.metadata["latency"],
            "index": len(session.images) - 1,
        })

    @app.get("/sessions/{session_id}/images")
    async def get_images(session_id: str):
        session = _session_or_404(session_id)
        return JSONResponse([
            {"url": f"/sessions/{session_id}/files/{r.path}",
             "metadata": r.metadata, "liked": r.liked}
            for r in session.images
        ])

    @app.post("/sessions/{session_id}/images/{n}/like")
    async def post_like(session_id: str, n: int, request: Request):
        session = _session_or_404(session_id)
        body = await request.body()
        liked = True
        if body:
            liked = bool(jsoncanon.loads(body).get("liked", True))
        if not (0 <= n < len(session.images)):
            raise NoMatchingAssetError(f"no image {n}")
        record = set_liked(session, n, liked)
        return JSONResponse({"liked": record.liked})

    @app.get("/sessions/{session_id}/files/{path:path}")
    async def get_file(session_id: str, path: str):
        session = _session_or_404(session_id)
        if session.directory is None:
            raise NoMatchingAssetError("session has no file storage")
        target = (session.directory / path).resolve()
        if session.directory.resolve() not in target.parents:
            raise NoMatchingAssetError(path)
        if not target.is_file():
            raise NoMatchingAssetError(path)
        media = "image/png" if target.suffix == ".png" else "application/json" \
            if target.suffix == ".json" else "text/plain"
        return Response(content=target.read_bytes(), media_type=media)

    @app.get("/meshes/{asset_id}")
    async def get_mesh(asset_id: str):
        record = store.index.record(asset_id)
        if record is None:
            raise NoMatchingAssetError(f"no asset {asset_id!r}")
        if store.index.mesh_dir is not None:
            path = store.index.mesh_dir / f"{asset_id}.obj"
            if path.exists():
                return Response(content=path.read_bytes(), media_type="text/plain")
        front, side, height = record.dims
        from .meshio import box_mesh
        return Response(content=dump_obj(box_mesh(front, height, side)),
                        media_type="text/plain")

    @app.get("/models")
    async def get_models():
        return JSONResponse([
            {"id": m.id, "supported_conditions": sorted(m.supported_conditions)}
            for m in store.models.values()
        ])

    @app.get("/healthz")
    async def healthz():
        return JSONResponse({"ok": True})

    return app
