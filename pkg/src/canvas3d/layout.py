"""Bird's-eye layout planning on the 300x300 grid.

A LayoutPlan is the parsed form of the planner response: per-instance
center coordinates plus a counter-rotation angle, and (top, down) stacking
relations.  Plans from an LLM are untrusted and always pass through
validate_layout; fallback_layout is the deterministic offline substitute.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from importlib import resources as _res
from typing import Mapping, Sequence

import numpy as np

from .assets import AssetRecord, CategoryRequest
from .errors import (
    CyclicRelationsError,
    DoesNotFitError,
    MalformedTupleError,
    MissingAssetError,
    MissingLocationSectionError,
    MissingSizeError,
    UnknownLabelInRelationError,
)
from .geometry import Aabb, TransformTRS, Vec3
from .jsoncanon import fmt_real
from .scene import RoomConfig, world_from_grid

ACCESSORY_LIFT = 1e-9  # keeps stacked bounds in contact without interpenetration


@dataclass(frozen=True)
class LayoutEntry:
    instance_label: str
    grid_x: float
    grid_y: float
    theta: float = 0.0


@dataclass(frozen=True)
class StackRelation:
    top: str
    down: str


@dataclass(frozen=True)
class LayoutPlan:
    entries: tuple[LayoutEntry, ...] = ()
    relations: tuple[StackRelation, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        object.__setattr__(self, "relations", tuple(self.relations))
        labels = [e.instance_label for e in self.entries]
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate instance labels in plan")
        known = set(labels)
        for r in self.relations:
            if r.top not in known or r.down not in known:
                raise UnknownLabelInRelationError(f"({r.top}, {r.down})")
            if r.top == r.down:
                raise ValueError(f"{r.top!r} cannot support itself")

    def entry(self, label: str) -> LayoutEntry:
        for e in self.entries:
            if e.instance_label == label:
                return e
        raise KeyError(label)


def category_of_label(label: str) -> str:
    """'chair 2' -> 'chair'; bare labels are their own category."""
    m = re.fullmatch(r"(.*?)[ _](\d+)", label.strip())
    return m.group(1) if m else label.strip()


def _size_for(label: str, sizes: Mapping[str, tuple[float, float]]) -> tuple[float, float]:
    if label in sizes:
        return sizes[label]
    cat = category_of_label(label)
    if cat in sizes:
        return sizes[cat]
    raise MissingSizeError(label)


# --- meta prompt ------------------------------------------------------------------


def _prompt_resource(name: str) -> str:
    return _res.files("canvas3d.resources.prompts").joinpath(name).read_text("utf-8")


def _render_item_dict(items: Sequence[CategoryRequest]) -> str:
    inner = ", ".join(f"{r.category}: {r.count}" for r in items)
    return "{" + inner + "}"


def _render_size_dict(items: Sequence[CategoryRequest],
                      sizes: Mapping[str, tuple[float, float]]) -> str:
    parts = []
    for r in items:
        if r.category not in sizes:
            raise MissingSizeError(r.category)
        front, side = sizes[r.category]
        parts.append(f"{r.category}: ({fmt_real(front)}, {fmt_real(side)})")
    return "{" + ", ".join(parts) + "}"


def build_layout_prompt(user_prompt: str, items: Sequence[CategoryRequest],
                        sizes: Mapping[str, tuple[float, float]]) -> tuple[str, str]:
    """(system, user) planner prompt with items and per-category sizes filled in."""
    system = _prompt_resource("layout_system.txt")
    user = _prompt_resource("layout_user.txt").format(
        prompt=user_prompt,
        items=_render_item_dict(items),
        sizes=_render_size_dict(items, sizes),
    )
    return system, user


# --- response parsing ----------------------------------------------------------------

_ENTRY_RE = re.compile(r"([A-Za-z][\w' -]*?)\s*:\s*\(([^()]*)\)")
_RELATION_RE = re.compile(r"\(([^(),]+),([^(),]+)\)")


def parse_layout(response: str) -> LayoutPlan:
    """Parse the Location / Relation sections of a planner response."""
    loc_match = re.search(r"location\s*:", response, re.IGNORECASE)
    if not loc_match:
        raise MissingLocationSectionError("response has no Location section")
    rel_match = re.search(r"relation\s*:", response, re.IGNORECASE)
    loc_text = response[loc_match.end(): rel_match.start() if rel_match else None]

    entries: list[LayoutEntry] = []
    seen: set[str] = set()
    for m in _ENTRY_RE.finditer(loc_text):
        label = m.group(1).strip()
        body = m.group(2)
        parts = [p.strip() for p in body.split(",")]
        if len(parts) != 3:
            raise MalformedTupleError(m.group(0), "expected (x, y, theta)")
        try:
            x, y, theta = (float(p) for p in parts)
        except ValueError:
            raise MalformedTupleError(m.group(0), "non-numeric tuple component")
        if label.lower() in seen:
            continue
        seen.add(label.lower())
        entries.append(LayoutEntry(label, x, y, theta))
    if not entries:
        raise MissingLocationSectionError("Location section contains no placements")

    relations: list[StackRelation] = []
    if rel_match:
        by_lower = {e.instance_label.lower(): e.instance_label for e in entries}
        for m in _RELATION_RE.finditer(response[rel_match.end():]):
            top_raw, down_raw = m.group(1).strip(), m.group(2).strip()
            top = by_lower.get(top_raw.lower())
            down = by_lower.get(down_raw.lower())
            if top is None or down is None:
                raise UnknownLabelInRelationError(f"({top_raw}, {down_raw})")
            relations.append(StackRelation(top, down))
    return LayoutPlan(tuple(entries), tuple(relations))


def render_plan(plan: LayoutPlan) -> str:
    """Inverse of parse_layout for well-formed plans."""
    lines = ["Location:"]
    for e in plan.entries:
        lines.append(f"{e.instance_label}: ({fmt_real(e.grid_x)}, "
                     f"{fmt_real(e.grid_y)}, {fmt_real(e.theta)})")
    lines.append("Relation:")
    if plan.relations:
        lines.append("[" + ", ".join(f"({r.top}, {r.down})" for r in plan.relations) + "]")
    else:
        lines.append("[]")
    return "\n".join(lines) + "\n"


# --- footprints and validation ----------------------------------------------------------


def footprint_corners(entry: LayoutEntry, size_m: tuple[float, float],
                      room: RoomConfig) -> np.ndarray:
    """(4, 2) grid-unit corners of the entry's rotated footprint rectangle.

    At theta = 0 the front face (length size[0]) spans grid x and the side
    (size[1]) spans grid y; theta follows the world yaw convention, so the
    front direction in grid coordinates is (sin theta, -cos theta).
    """
    upm = room.grid_units / room.floor_extent
    hu = size_m[0] / 2.0 * upm
    hv = size_m[1] / 2.0 * upm
    t = np.radians(entry.theta)
    u = np.array([np.cos(t), np.sin(t)])       # front-face direction
    v = np.array([np.sin(t), -np.cos(t)])      # front (facing) direction
    c = np.array([entry.grid_x, entry.grid_y])
    return np.array([c + hu * u + hv * v, c - hu * u + hv * v,
                     c - hu * u - hv * v, c + hu * u - hv * v])


def _project(corners: np.ndarray, axis: np.ndarray) -> tuple[float, float]:
    d = corners @ axis
    return float(d.min()), float(d.max())


def rects_overlap(a: np.ndarray, b: np.ndarray, tol: float = 1e-9) -> bool:
    """Separating-axis test between two convex quads; touching is not overlap."""
    for corners in (a, b):
        for i in range(2):
            edge = corners[(i + 1) % 4] - corners[i]
            n = np.linalg.norm(edge)
            if n < 1e-12:
                continue
            axis = np.array([-edge[1], edge[0]]) / n
            amin, amax = _project(a, axis)
            bmin, bmax = _project(b, axis)
            if amax <= bmin + tol or bmax <= amin + tol:
                return False
    return True


def rect_contains(outer: np.ndarray, inner: np.ndarray, tol: float = 1e-6) -> bool:
    """All corners of `inner` inside the convex quad `outer` (boundary allowed)."""
    center = outer.mean(axis=0)
    for i in range(4):
        edge = outer[(i + 1) % 4] - outer[i]
        n = np.linalg.norm(edge)
        if n < 1e-12:
            return False
        normal = np.array([-edge[1], edge[0]]) / n
        if normal @ (center - outer[i]) < 0:
            normal = -normal
        if np.any((inner - outer[i]) @ normal < -tol):
            return False
    return True


@dataclass(frozen=True)
class Violation:
    kind: str  # out_of_bounds | grounded_overlap | unsupported_accessory | supporter_too_small
    labels: tuple[str, ...]
    message: str


def validate_layout(plan: LayoutPlan, sizes: Mapping[str, tuple[float, float]],
                    room: RoomConfig,
                    accessory_categories: frozenset[str] | set[str] = frozenset(),
                    wall_categories: frozenset[str] | set[str] = frozenset()
                    ) -> list[Violation]:
    """Enumerate layout violations (empty list = sound plan)."""
    g = room.grid_units
    corners = {e.instance_label: footprint_corners(e, _size_for(e.instance_label, sizes), room)
               for e in plan.entries}
    tops = {r.top for r in plan.relations}
    out: list[Violation] = []

    for e in plan.entries:
        c = corners[e.instance_label]
        if (c < -1e-9).any() or (c > g + 1e-9).any():
            out.append(Violation("out_of_bounds", (e.instance_label,),
                                 f"footprint of {e.instance_label!r} leaves [0, {g}]^2"))

    grounded = [e for e in plan.entries if e.instance_label not in tops
                and category_of_label(e.instance_label) not in wall_categories]
    for i in range(len(grounded)):
        for j in range(i + 1, len(grounded)):
            a, b = grounded[i], grounded[j]
            if rects_overlap(corners[a.instance_label], corners[b.instance_label]):
                out.append(Violation(
                    "grounded_overlap", (a.instance_label, b.instance_label),
                    f"{a.instance_label!r} and {b.instance_label!r} footprints intersect"))

    for e in plan.entries:
        if category_of_label(e.instance_label) in accessory_categories \
                and e.instance_label not in tops:
            out.append(Violation("unsupported_accessory", (e.instance_label,),
                                 f"{e.instance_label!r} rests on nothing"))

    for r in plan.relations:
        if not rect_contains(corners[r.down], corners[r.top]):
            out.append(Violation(
                "supporter_too_small", (r.top, r.down),
                f"{r.top!r} footprint exceeds the top surface of {r.down!r}"))
    return out


def violations_text(violations: Sequence[Violation]) -> str:
    return "\n".join(f"- {v.message}" for v in violations)


# --- deterministic fallback ---------------------------------------------------------------


def _expand_instances(items: Sequence[CategoryRequest]) -> list[str]:
    labels = []
    for req in items:
        if req.count == 1:
            labels.append(req.category)
        else:
            labels.extend(f"{req.category} {i}" for i in range(1, req.count + 1))
    return labels


def _facing_center_theta(cx: float, cy: float, g: int) -> float:
    to_center = np.array([g / 2.0 - cx, g / 2.0 - cy])
    best, best_dot = 0.0, -np.inf
    for theta in (0.0, 90.0, 180.0, 270.0):
        t = np.radians(theta)
        front = np.array([np.sin(t), -np.cos(t)])
        d = float(front @ to_center)
        if d > best_dot + 1e-12:
            best, best_dot = theta, d
    return best


def fallback_layout(items: Sequence[CategoryRequest],
                    sizes: Mapping[str, tuple[float, float]],
                    relations_hint: Sequence[tuple[str, str]] = (),
                    seed: int = 0,
                    room: RoomConfig | None = None) -> LayoutPlan:
    """Deterministic greedy placement that always validates clean.

    Large grounded items hug the walls, the rest fill in largest-first on a
    10-unit lattice, and accessories sit centered (or evenly spread) on
    their supporters, all facing the room center.
    """
    room = room or RoomConfig()
    g = room.grid_units
    upm = g / room.floor_extent
    rng = random.Random(seed)

    labels = _expand_instances(items)
    for lbl in labels:
        _size_for(lbl, sizes)  # raises MissingSizeError early

    total_m2 = sum(_size_for(l, sizes)[0] * _size_for(l, sizes)[1] for l in labels)
    if total_m2 > 0.6 * room.floor_extent ** 2:
        raise DoesNotFitError(
            f"footprints cover {total_m2:.2f} m2 > 60% of the {room.floor_extent} m room")

    # Resolve the accessory -> supporter hint (category or label level) to instances.
    by_category: dict[str, list[str]] = {}
    for lbl in labels:
        by_category.setdefault(category_of_label(lbl), []).append(lbl)
    relations: list[StackRelation] = []
    accessory_labels: set[str] = set()
    for top_hint, down_hint in relations_hint:
        tops = by_category.get(category_of_label(top_hint), [])
        downs = by_category.get(category_of_label(down_hint), [])
        if not downs:
            continue
        for i, top_lbl in enumerate(tops):
            if top_lbl in accessory_labels:
                continue
            accessory_labels.add(top_lbl)
            relations.append(StackRelation(top_lbl, downs[i % len(downs)]))
    acc_categories = {category_of_label(l) for l in accessory_labels}

    grounded = [l for l in labels if l not in accessory_labels]
    grounded.sort(key=lambda l: (-_size_for(l, sizes)[0] * _size_for(l, sizes)[1], l))

    large_cut = g * g / 45.0  # ~0.8 m2 at the default room scale
    placed: dict[str, LayoutEntry] = {}
    placed_corners: list[np.ndarray] = []
    lattice = list(range(0, g + 1, 10))

    for lbl in grounded:
        front, side = _size_for(lbl, sizes)
        area_units = front * side * upm * upm
        is_large = area_units >= large_cut
        candidates = []
        for gy in lattice:
            for gx in lattice:
                wall_d = min(gx, gy, g - gx, g - gy)
                center_d = abs(gx - g / 2.0) + abs(gy - g / 2.0)
                key = (wall_d, center_d) if is_large else (center_d, wall_d)
                candidates.append((key, rng.random(), gx, gy))
        candidates.sort()
        spot = None
        for _key, _tie, gx, gy in candidates:
            theta = _facing_center_theta(gx, gy, g)
            entry = LayoutEntry(lbl, float(gx), float(gy), theta)
            c = footprint_corners(entry, (front, side), room)
            if (c < 0).any() or (c > g).any():
                continue
            if any(rects_overlap(c, other, tol=-2.0) for other in placed_corners):
                continue  # keep a 2-unit clearance between grounded items
            spot = (entry, c)
            break
        if spot is None:
            raise DoesNotFitError(f"no free cell for {lbl!r}")
        placed[lbl] = spot[0]
        placed_corners.append(spot[1])

    # Accessories: spread along the supporter's front-face axis, else centered.
    by_supporter: dict[str, list[str]] = {}
    for r in relations:
        by_supporter.setdefault(r.down, []).append(r.top)
    for sup_lbl, accs in by_supporter.items():
        accs.sort()
        sup_entry = placed[sup_lbl]
        sup_front, sup_side = _size_for(sup_lbl, sizes)
        sup_c = footprint_corners(sup_entry, (sup_front, sup_side), room)
        t = np.radians(sup_entry.theta)
        u = np.array([np.cos(t), np.sin(t)])
        n = len(accs)
        for i, acc_lbl in enumerate(accs):
            a_front, a_side = _size_for(acc_lbl, sizes)
            if a_front > sup_front or a_side > sup_side:
                raise DoesNotFitError(
                    f"{acc_lbl!r} does not fit on supporter {sup_lbl!r}")
            frac = (i + 1) / (n + 1) - 0.5
            span = max(0.0, (sup_front - a_front)) * upm
            center = np.array([sup_entry.grid_x, sup_entry.grid_y]) + u * frac * span
            entry = LayoutEntry(acc_lbl, float(center[0]), float(center[1]),
                                sup_entry.theta)
            c = footprint_corners(entry, (a_front, a_side), room)
            if not rect_contains(sup_c, c):
                entry = LayoutEntry(acc_lbl, sup_entry.grid_x, sup_entry.grid_y,
                                    sup_entry.theta)
            placed[acc_lbl] = entry

    plan = LayoutPlan(tuple(placed[l] for l in labels), tuple(relations))
    leftovers = validate_layout(plan, sizes, room,
                                accessory_categories=frozenset(acc_categories))
    if leftovers:
        raise DoesNotFitError("fallback produced violations: " + violations_text(leftovers))
    return plan


# --- realization -----------------------------------------------------------------------


@dataclass(frozen=True)
class Placement:
    label: str
    asset_id: str
    category: str
    transform: TransformTRS
    local_bounds: Aabb
    is_avatar: bool = False
    tags: frozenset[str] = field(default_factory=frozenset)


def record_local_bounds(record: AssetRecord) -> Aabb:
    front, side, height = record.dims
    return Aabb(Vec3(-front / 2.0, 0.0, -side / 2.0), Vec3(front / 2.0, height, side / 2.0))


def _stacking_order(plan: LayoutPlan) -> list[str]:
    """Grounded labels in plan order, then accessories once their support is placed."""
    tops = {r.top: r.down for r in plan.relations}
    order = [e.instance_label for e in plan.entries if e.instance_label not in tops]
    ready = set(order)
    pending = [r for r in plan.relations]
    while pending:
        progressed = False
        remaining = []
        for r in pending:
            if r.down in ready:
                order.append(r.top)
                ready.add(r.top)
                progressed = True
            else:
                remaining.append(r)
        if not progressed:
            raise CyclicRelationsError(
                "stacking relations contain a cycle: "
                + ", ".join(f"({r.top}, {r.down})" for r in remaining))
        pending = remaining
    return order


WALL_MOUNT_HEIGHT = 1.5  # meters, center height for wall-mounted items


def _wall_mount_transform(base: TransformTRS, bounds: Aabb, room: RoomConfig,
                          mount_height: float) -> TransformTRS:
    """Project a grid placement onto the nearest wall at mounting height.

    The item backs onto the wall (its side depth tucked against it) and
    faces into the room.
    """
    half = room.floor_extent / 2.0
    x, z = base.translation.x, base.translation.z
    depth = bounds.max.z - bounds.min.z
    height = bounds.max.y - bounds.min.y
    walls = [
        (half - z, Vec3(x, 0, half - depth / 2.0), 180.0),   # +z wall, face -z
        (z + half, Vec3(x, 0, -half + depth / 2.0), 0.0),    # -z wall, face +z
        (half - x, Vec3(half - depth / 2.0, 0, z), 270.0),   # +x wall, face -x
        (x + half, Vec3(-half + depth / 2.0, 0, z), 90.0),   # -x wall, face +x
    ]
    _dist, anchor, yaw = min(walls, key=lambda w: w[0])
    y = mount_height - height / 2.0 - bounds.min.y
    return TransformTRS(
        translation=Vec3(anchor.x, y, anchor.z),
        rotation=world_from_grid(150, 150, yaw, room).rotation,
        scale=base.scale)


def realize_layout(plan: LayoutPlan, assets: Mapping[str, AssetRecord],
                   room: RoomConfig,
                   wall_mount_height: float = WALL_MOUNT_HEIGHT) -> list[Placement]:
    """Plan coordinates to world transforms; accessories land on supporter
    tops and wall-mounted items are projected onto the nearest wall."""
    supporter_of = {r.top: r.down for r in plan.relations}
    placements: dict[str, Placement] = {}
    for label in _stacking_order(plan):
        entry = plan.entry(label)
        record = assets.get(label)
        if record is None:
            raise MissingAssetError(label)
        bounds = record_local_bounds(record)
        base = world_from_grid(entry.grid_x, entry.grid_y, entry.theta, room)
        if "wall_mounted" in record.tags:
            base = _wall_mount_transform(base, bounds, room, wall_mount_height)
            placements[label] = Placement(
                label=label, asset_id=record.id, category=record.category,
                transform=base, local_bounds=bounds, is_avatar=False,
                tags=record.tags)
            continue
        if label in supporter_of:
            sup = placements[supporter_of[label]]
            sup_top = sup.local_bounds.transformed(sup.transform).max.y
            rot_only = TransformTRS(rotation=base.rotation, scale=base.scale)
            rot_min_y = bounds.transformed(rot_only).min.y
            y = sup_top - rot_min_y + ACCESSORY_LIFT
            transform = TransformTRS(
                translation=Vec3(base.translation.x, y, base.translation.z),
                rotation=base.rotation, scale=base.scale)
        else:
            transform = base
        placements[label] = Placement(
            label=label,
            asset_id=record.id,
            category=record.category,
            transform=transform,
            local_bounds=bounds,
            is_avatar="avatar_prefab" in record.tags,
            tags=record.tags,
        )
    return [placements[e.instance_label] for e in plan.entries]
