"""Procedural desk-scale asset index for offline use and demos.

Twelve indoor categories, three geometry variants each, box/cylinder
meshes, hashed-bag-of-words annotation embeddings, and a prerequisite
graph (laptops, mugs and bottles imply a table; pillows imply a bed).
"""

from __future__ import annotations

from pathlib import Path

from .assets import AssetIndex, AssetRecord, HashedBowEmbedder, RelationGraph, save_index
from .geometry import TransformTRS, Vec3
from .meshio import box_mesh, cylinder_mesh, dump_obj, merge_meshes

EMBEDDING_DIM = 64

# category -> (front, side, height) meters, tags, annotation variants
_CATALOG: dict[str, tuple[tuple[float, float, float], tuple[str, ...], list[str]]] = {
    "table": ((1.2, 0.8, 0.75), ("grounded",), [
        "a sturdy rectangular wooden dining table",
        "a small round side table with a single leg",
        "a modern office table with a metal frame",
    ]),
    "chair": ((0.5, 0.5, 0.9), ("grounded",), [
        "a simple wooden chair with a straight back",
        "an upholstered armchair with wide armrests",
        "a swivel office chair on castors",
    ]),
    "sofa": ((1.8, 0.9, 0.8), ("grounded",), [
        "a long three-seat fabric sofa",
        "a compact two-seat leather couch",
        "a corner sofa with a chaise section",
    ]),
    "bed": ((1.6, 2.0, 0.5), ("grounded",), [
        "a queen-size bed with a tall headboard",
        "a low platform bed",
        "a single bed with a wooden frame",
    ]),
    "bookshelf": ((0.9, 0.3, 1.8), ("grounded",), [
        "a tall bookshelf with five shelves",
        "a short wide bookcase",
        "an open-back shelving unit",
    ]),
    "lamp": ((0.3, 0.3, 1.5), ("grounded", "illumination"), [
        "a tall floor lamp with a fabric shade",
        "a slim reading lamp with an arched neck",
        "a tripod floor lamp",
    ]),
    "laptop": ((0.35, 0.25, 0.03), ("accessory",), [
        "a slim silver laptop computer",
        "a black work laptop with a matte lid",
        "a compact notebook computer",
    ]),
    "mug": ((0.1, 0.1, 0.12), ("accessory",), [
        "a ceramic coffee mug with a handle",
        "a tall travel mug",
        "a small espresso cup",
    ]),
    "bottle": ((0.08, 0.08, 0.25), ("accessory",), [
        "a glass water bottle",
        "a slender wine bottle",
        "a sports drink bottle",
    ]),
    "pillow": ((0.6, 0.4, 0.15), ("accessory",), [
        "a soft rectangular bed pillow",
        "a square decorative cushion",
        "a firm lumbar pillow",
    ]),
    "wall art": ((0.8, 0.05, 0.6), ("wall_mounted",), [
        "a framed landscape painting",
        "an abstract canvas print",
        "a vintage poster in a thin frame",
    ]),
    "human": ((0.5, 0.3, 1.7), ("avatar_prefab",), [
        "a standing adult person",
        "a person in casual clothes",
        "a human figure",
    ]),
}

_RELATIONS = (
    ("table", "laptop"),
    ("table", "mug"),
    ("table", "bottle"),
    ("bed", "pillow"),
)


def _mesh_for(category: str, dims: tuple[float, float, float], variant: int) -> bytes:
    front, side, height = dims
    if category == "lamp":
        pole = cylinder_mesh(front * 0.12, height * 0.92, segments=10)
        shade = box_mesh(front, height * 0.16, side)
        shade = shade.transformed(TransformTRS(translation=Vec3(0, height * 0.84, 0)))
        return dump_obj(merge_meshes([pole, shade]))
    if category == "mug" and variant == 0:
        return dump_obj(cylinder_mesh(front / 2, height, segments=10))
    return dump_obj(box_mesh(front, height, side))


def build_demo_index(directory: Path | str) -> AssetIndex:
    """Write the demo index (index.jsonl + embeddings.f32 + meshes/) and return it."""
    embedder = HashedBowEmbedder(EMBEDDING_DIM)
    records: list[AssetRecord] = []
    meshes: dict[str, bytes] = {}
    for category, (dims, tags, annotations) in _CATALOG.items():
        slug = category.replace(" ", "-")
        for i, annotation in enumerate(annotations):
            rid = f"{slug}-{i:02d}"
            records.append(AssetRecord(
                id=rid, category=category, annotation=annotation,
                embedding=embedder.embed(annotation), dims=dims,
                tags=frozenset(tags)))
            meshes[rid] = _mesh_for(category, dims, i)
    index = AssetIndex(records=tuple(records), embedding_dim=EMBEDDING_DIM,
                       relation_graph=RelationGraph(_RELATIONS))
    save_index(index, directory, meshes=meshes)
    from .assets import load_index

    return load_index(directory)
