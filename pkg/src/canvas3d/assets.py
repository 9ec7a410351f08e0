"""Asset index: records with text annotations and unit embeddings, category
inference with a prerequisite relation graph, and iterative model retrieval.

Record embeddings are ingested from a sidecar float32 blob produced offline;
query-side text is embedded through a pluggable TextEmbedder so the engine
itself never runs an ML model.  The shipped default is a deterministic
hashed bag-of-words embedder living in the same vector space as the demo
index.
"""

from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass, field
from importlib import resources as _res
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from . import jsoncanon
from .errors import (
    DimensionMismatchError,
    EmptyIndexForCategoryError,
    EmptyPromptError,
    MissingCategoryError,
    UnparseableResponseError,
    ZeroVectorError,
)

logger = logging.getLogger(__name__)

VALID_TAGS = frozenset(
    {"grounded", "accessory", "wall_mounted", "illumination", "avatar_prefab",
     "free_interactive"})


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """cos(a, b) = a.b / (|a||b|); symmetric, in [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"{a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na < 1e-12 or nb < 1e-12:
        raise ZeroVectorError("cosine similarity of a zero vector is undefined")
    return float(np.dot(a, b) / (na * nb))


class TextEmbedder(Protocol):
    def embed(self, text: str) -> np.ndarray: ...


class HashedBowEmbedder:
    """Deterministic stand-in for a sentence encoder.

    Tokens hash (sha256) to a signed coordinate; the sum is normalized.
    Stable across platforms and runs, which is what the offline pipeline
    and the retrieval tests need.
    """

    def __init__(self, dim: int = 64):
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        tokens = re.findall(r"[a-z0-9]+", text.lower())
        if not tokens:
            raise ZeroVectorError("cannot embed empty text")
        v = np.zeros(self.dim, dtype=np.float64)
        for tok in tokens:
            h = hashlib.sha256(tok.encode("utf-8")).digest()
            idx = int.from_bytes(h[:4], "little") % self.dim
            v[idx] += 1.0 if h[4] & 1 else -1.0
        n = np.linalg.norm(v)
        if n < 1e-12:  # pathological cancellation
            v[0] = 1.0
            n = 1.0
        return v / n


class TableEmbedder:
    """Exact-text lookup embedder for fixtures and tests."""

    def __init__(self, table: dict[str, np.ndarray], fallback: TextEmbedder | None = None):
        self.table = {k: np.asarray(v, dtype=np.float64) for k, v in table.items()}
        self.fallback = fallback

    def embed(self, text: str) -> np.ndarray:
        if text in self.table:
            return self.table[text]
        if self.fallback is not None:
            return self.fallback.embed(text)
        raise KeyError(f"no embedding recorded for {text!r}")


@dataclass(frozen=True)
class CategoryRequest:
    category: str
    count: int = 1

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")


@dataclass(frozen=True)
class RelationGraph:
    """Directed prerequisite edges (prerequisite -> dependent), acyclic."""

    edges: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple((a, b) for a, b in self.edges))
        self._check_acyclic()

    def _check_acyclic(self):
        adj: dict[str, list[str]] = {}
        indeg: dict[str, int] = {}
        nodes = set()
        for pre, dep in self.edges:
            adj.setdefault(pre, []).append(dep)
            indeg[dep] = indeg.get(dep, 0) + 1
            nodes.update((pre, dep))
        queue = [n for n in nodes if indeg.get(n, 0) == 0]
        seen = 0
        while queue:
            n = queue.pop()
            seen += 1
            for m in adj.get(n, []):
                indeg[m] -= 1
                if indeg[m] == 0:
                    queue.append(m)
        if seen != len(nodes):
            raise ValueError("relation graph contains a cycle")

    def prerequisites_of(self, category: str) -> list[str]:
        return sorted(pre for pre, dep in self.edges if dep == category)

    def close(self, requests: Sequence[CategoryRequest]) -> list[CategoryRequest]:
        """Pull in missing prerequisites (count 1 each), transitively.

        Idempotent: requests already closed come back unchanged.
        """
        out = list(requests)
        present = {r.category for r in requests}
        queue = [r.category for r in requests]
        while queue:
            cat = queue.pop(0)
            for pre in self.prerequisites_of(cat):
                if pre not in present:
                    present.add(pre)
                    out.append(CategoryRequest(pre, 1))
                    queue.append(pre)
        return out


@dataclass(frozen=True)
class AssetRecord:
    id: str
    category: str
    annotation: str
    embedding: np.ndarray
    dims: tuple[float, float, float]  # (front, side, height) meters
    tags: frozenset[str] = frozenset()

    def __post_init__(self):
        emb = np.asarray(self.embedding, dtype=np.float64)
        object.__setattr__(self, "embedding", emb)
        object.__setattr__(self, "tags", frozenset(self.tags))
        object.__setattr__(self, "dims", tuple(float(d) for d in self.dims))
        n = float(np.linalg.norm(emb))
        if abs(n - 1.0) > 1e-6:
            raise ValueError(f"embedding of {self.id!r} is not unit-norm (|e| = {n})")
        if min(self.dims) <= 0:
            raise ValueError(f"dims of {self.id!r} must be positive")
        unknown = self.tags - VALID_TAGS
        if unknown:
            raise ValueError(f"unknown tags on {self.id!r}: {sorted(unknown)}")


@dataclass(frozen=True)
class AssetIndex:
    records: tuple[AssetRecord, ...]
    embedding_dim: int
    relation_graph: RelationGraph = field(default_factory=RelationGraph)
    mesh_dir: Path | None = None

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        for r in self.records:
            if r.embedding.shape != (self.embedding_dim,):
                raise ValueError(
                    f"record {r.id!r} embedding dim {r.embedding.shape} != "
                    f"({self.embedding_dim},)")

    @property
    def categories(self) -> frozenset[str]:
        return frozenset(r.category for r in self.records)

    def by_category(self, category: str) -> list[AssetRecord]:
        return [r for r in self.records if r.category == category]

    def record(self, asset_id: str) -> AssetRecord | None:
        for r in self.records:
            if r.id == asset_id:
                return r
        return None


# --- category and quantity inference ------------------------------------------------


def _prompt_resource(name: str) -> str:
    return _res.files("canvas3d.resources.prompts").joinpath(name).read_text("utf-8")


def build_registration_prompt(categories: Sequence[str], scene_kind: str = "indoor"
                              ) -> str:
    """System prompt asking for 'name: count' category selections."""
    template = _prompt_resource("registration_system.txt")
    return template.format(count=len(categories), kind=scene_kind,
                           categories=", ".join(categories))


def build_registration_user_prompt(prompt: str) -> str:
    return _prompt_resource("registration_user.txt").format(prompt=prompt)


_PAIR_RE = re.compile(r"([A-Za-z][A-Za-z0-9_' -]*?)\s*:\s*(\d+)")


def parse_category_response(text: str, known: Iterable[str]) -> list[CategoryRequest]:
    """Extract 'name: count' pairs; unknown categories are dropped with a warning."""
    known_set = {k.lower() for k in known}
    pairs = _PAIR_RE.findall(text)
    if not pairs:
        raise UnparseableResponseError(text)
    out: list[CategoryRequest] = []
    seen: set[str] = set()
    for name, count_s in pairs:
        cat = name.strip().lower()
        count = int(count_s)
        if cat not in known_set:
            logger.warning("dropping unknown category %r from response", cat)
            continue
        if count < 1:
            logger.warning("dropping non-positive count for category %r", cat)
            continue
        if cat in seen:
            continue
        seen.add(cat)
        out.append(CategoryRequest(cat, count))
    return out


def infer_categories(prompt: str, index: AssetIndex, llm,
                     scene_kind: str = "indoor") -> list[CategoryRequest]:
    """Ask the LLM for categories/counts and close them under prerequisites."""
    if not prompt.strip():
        raise EmptyPromptError("prompt must be non-empty")
    system = build_registration_prompt(sorted(index.categories), scene_kind)
    user = build_registration_user_prompt(prompt)
    response = llm.complete(system, user)
    requests = parse_category_response(response, index.categories)
    return index.relation_graph.close(requests)


# --- iterative retrieval -------------------------------------------------------------


def retrieve_models(prompt: str, requests: Sequence[CategoryRequest],
                    index: AssetIndex, embedder: TextEmbedder | None = None
                    ) -> list[AssetRecord]:
    """Pick records category by category against a running description.

    The running description starts as the prompt; after each category the
    winning record's annotation is appended (single-space concatenation)
    so later categories are retrieved in the context of earlier picks.
    Ties break toward the lexicographically smallest record id.
    """
    if embedder is None:
        embedder = HashedBowEmbedder(index.embedding_dim)
    d_curr = prompt
    chosen: list[AssetRecord] = []
    for req in requests:
        if req.category not in index.categories:
            raise MissingCategoryError(req.category)
        candidates = index.by_category(req.category)
        if not candidates:
            raise EmptyIndexForCategoryError(req.category)
        query = embedder.embed(d_curr)
        scored = sorted(
            candidates,
            key=lambda r: (-cosine_similarity(query, r.embedding), r.id),
        )
        picks = scored[:req.count] if req.count <= len(scored) else scored
        while len(picks) < req.count:  # duplicate the winner when supply runs short
            picks = picks + [picks[len(picks) % len(scored)]]
        chosen.extend(picks)
        d_curr = f"{d_curr} {picks[0].annotation}"
    return chosen


# --- index files ----------------------------------------------------------------------
#
# index.jsonl: header line {"embedding_dim": D, "relations": [[pre, dep], ...]}
# followed by one record per line carrying its byte offset into embeddings.f32
# (little-endian float32, D values per record).  Meshes live in meshes/<id>.obj.


def save_index(index: AssetIndex, directory: Path | str,
               meshes: dict[str, bytes] | None = None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    blob = bytearray()
    lines = [jsoncanon.dumps_compact({
        "embedding_dim": index.embedding_dim,
        "relations": [list(e) for e in index.relation_graph.edges],
    })]
    for r in index.records:
        offset = len(blob)
        blob.extend(np.asarray(r.embedding, dtype="<f4").tobytes())
        lines.append(jsoncanon.dumps_compact({
            "id": r.id,
            "category": r.category,
            "annotation": r.annotation,
            "dims": list(r.dims),
            "tags": sorted(r.tags),
            "embedding_offset": offset,
        }))
    (directory / "index.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (directory / "embeddings.f32").write_bytes(bytes(blob))
    if meshes:
        mesh_dir = directory / "meshes"
        mesh_dir.mkdir(exist_ok=True)
        for asset_id, data in meshes.items():
            (mesh_dir / f"{asset_id}.obj").write_bytes(data)


def load_index(directory: Path | str) -> AssetIndex:
    directory = Path(directory)
    lines = (directory / "index.jsonl").read_text("utf-8").splitlines()
    if not lines:
        raise ValueError("index.jsonl is empty")
    header = jsoncanon.loads(lines[0])
    dim = int(header["embedding_dim"])
    blob = (directory / "embeddings.f32").read_bytes()
    records = []
    for line in lines[1:]:
        if not line.strip():
            continue
        doc = jsoncanon.loads(line)
        off = int(doc["embedding_offset"])
        emb = np.frombuffer(blob, dtype="<f4", count=dim, offset=off).astype(np.float64)
        # float32 storage loses a little norm precision; restore unit length
        emb = emb / np.linalg.norm(emb)
        records.append(AssetRecord(
            id=doc["id"],
            category=doc["category"],
            annotation=doc["annotation"],
            embedding=emb,
            dims=tuple(doc["dims"]),
            tags=frozenset(doc.get("tags", [])),
        ))
    mesh_dir = directory / "meshes"
    return AssetIndex(
        records=tuple(records),
        embedding_dim=dim,
        relation_graph=RelationGraph(tuple(tuple(e) for e in header.get("relations", []))),
        mesh_dir=mesh_dir if mesh_dir.is_dir() else None,
    )
