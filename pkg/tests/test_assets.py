import numpy as np
import pytest
from hypothesis import given, strategies as st

from canvas3d.assets import (
    AssetIndex,
    AssetRecord,
    CategoryRequest,
    HashedBowEmbedder,
    RelationGraph,
    TableEmbedder,
    build_registration_prompt,
    cosine_similarity,
    infer_categories,
    load_index,
    parse_category_response,
    retrieve_models,
    save_index,
)
from canvas3d.errors import (
    DimensionMismatchError,
    EmptyMeshError,
    EmptyPromptError,
    MeshIndexOutOfRange,
    MeshParseError,
    MissingCategoryError,
    UnparseableResponseError,
    ZeroVectorError,
)
from canvas3d.meshio import box_mesh, dump_obj, dump_ply, load_mesh


def unit(*components) -> np.ndarray:
    v = np.array(components, dtype=np.float64)
    return v / np.linalg.norm(v)


def make_record(rid, category, annotation, embedding, dims=(1.0, 1.0, 1.0), tags=()):
    return AssetRecord(rid, category, annotation, embedding, dims, frozenset(tags))


class ScriptedLlm:
    def __init__(self, response):
        self.response = response
        self.calls = []

    def complete(self, system, user):
        self.calls.append((system, user))
        return self.response


# --- cosine similarity --------------------------------------------------------


def test_cosine_identical_unit_vectors():
    v = unit(0.3, -0.4, 0.5)
    assert cosine_similarity(v, v) == pytest.approx(1.0)


def test_cosine_opposite_and_orthogonal():
    e1, e2 = unit(1, 0), unit(0, 1)
    assert cosine_similarity(e1, -e1) == pytest.approx(-1.0)
    assert cosine_similarity(e1, e2) == pytest.approx(0.0)


def test_cosine_errors():
    with pytest.raises(DimensionMismatchError):
        cosine_similarity(unit(1, 0), unit(1, 0, 0))
    with pytest.raises(ZeroVectorError):
        cosine_similarity(np.zeros(3), unit(1, 0, 0))


@given(st.lists(st.floats(-1, 1), min_size=4, max_size=4),
       st.lists(st.floats(-1, 1), min_size=4, max_size=4))
def test_cosine_symmetric_and_bounded(a, b):
    va, vb = np.array(a), np.array(b)
    if np.linalg.norm(va) < 1e-6 or np.linalg.norm(vb) < 1e-6:
        return
    s1 = cosine_similarity(va, vb)
    s2 = cosine_similarity(vb, va)
    assert s1 == pytest.approx(s2)
    assert abs(s1) <= 1 + 1e-12


# --- category inference ----------------------------------------------------------


def sample_index(relations=(("table", "laptop"),)):
    emb = HashedBowEmbedder(16)
    records = []
    for i, (cat, anno) in enumerate([
        ("table", "a sturdy wooden table"),
        ("chair", "a simple chair"),
        ("laptop", "a silver laptop computer"),
    ]):
        records.append(make_record(f"r{i}", cat, anno, emb.embed(anno)))
    return AssetIndex(records=tuple(records), embedding_dim=16,
                      relation_graph=RelationGraph(relations))


def test_parse_pairs_verbatim():
    out = parse_category_response("chair: 2, table: 1", {"chair", "table"})
    assert out == [CategoryRequest("chair", 2), CategoryRequest("table", 1)]


def test_parse_drops_unknown_with_warning(caplog):
    out = parse_category_response("chair: 1, spaceship: 3", {"chair"})
    assert out == [CategoryRequest("chair", 1)]
    assert any("spaceship" in r.message for r in caplog.records)


def test_parse_prose_without_pairs_is_unparseable():
    with pytest.raises(UnparseableResponseError) as err:
        parse_category_response("I would put a table in the corner.", {"table"})
    assert "table in the corner" in err.value.raw


def test_relation_closure_pulls_prerequisites():
    idx = sample_index()
    llm = ScriptedLlm("laptop: 1")
    out = infer_categories("a laptop on a desk", idx, llm)
    assert out == [CategoryRequest("laptop", 1), CategoryRequest("table", 1)]
    system, user = llm.calls[0]
    assert "scene designer" in system
    assert "a laptop on a desk" in user


def test_relation_closure_idempotent():
    graph = RelationGraph((("table", "laptop"), ("desk", "table")))
    once = graph.close([CategoryRequest("laptop", 1)])
    twice = graph.close(once)
    assert once == twice
    assert [r.category for r in once] == ["laptop", "table", "desk"]


def test_cyclic_relation_graph_rejected():
    with pytest.raises(ValueError):
        RelationGraph((("a", "b"), ("b", "a")))


def test_empty_prompt_rejected():
    with pytest.raises(EmptyPromptError):
        infer_categories("   ", sample_index(), ScriptedLlm("x: 1"))


def test_registration_prompt_lists_categories():
    text = build_registration_prompt(["chair", "table"], "indoor")
    assert "2 indoor furniture categories" in text
    assert "chair, table" in text


# --- retrieval ----------------------------------------------------------------------


def brute_force_retrieval(prompt, requests, index, embedder):
    """Independent oracle: exhaustive max-similarity scan per category."""
    d_curr = prompt
    picked = []
    for req in requests:
        cands = index.by_category(req.category)
        q = embedder.embed(d_curr)
        scores = sorted(
            ((cosine_similarity(q, r.embedding), r) for r in cands),
            key=lambda t: (-t[0], t[1].id))
        picks = [r for _s, r in scores[:req.count]]
        picked.extend(picks)
        d_curr = d_curr + " " + picks[0].annotation
    return picked


def test_single_record_category_trivially_wins():
    idx = sample_index()
    out = retrieve_models("any prompt", [CategoryRequest("chair", 1)], idx,
                          HashedBowEmbedder(16))
    assert [r.id for r in out] == ["r1"]


def test_retrieval_matches_scan_oracle_on_synthetic_index():
    import random
    rng = random.Random(42)
    emb = HashedBowEmbedder(32)
    words = ["wood", "metal", "round", "tall", "office", "red", "antique",
             "modern", "small", "garden", "folding", "plastic"]
    records = []
    categories = ["table", "chair", "lamp", "sofa"]
    for i in range(80):
        cat = categories[i % len(categories)]
        anno = f"a {words[rng.randrange(len(words))]} {words[rng.randrange(len(words))]} {cat}"
        records.append(make_record(f"as-{i:03d}", cat, anno, emb.embed(anno)))
    idx = AssetIndex(records=tuple(records), embedding_dim=32)
    for trial in range(10):
        reqs = [CategoryRequest(c, rng.randint(1, 2))
                for c in rng.sample(categories, rng.randint(1, 4))]
        prompt = "a scene with " + " ".join(rng.sample(words, 3))
        ours = retrieve_models(prompt, reqs, idx, emb)
        oracle = brute_force_retrieval(prompt, reqs, idx, emb)
        assert [r.id for r in ours] == [r.id for r in oracle]


def test_concatenation_flips_later_category_winner():
    # Hand-built 3-record fixture: appending A's annotation must flip B's argmax.
    table = {
        "scene prompt": unit(1.0, 0.0, 0.0),
        "scene prompt anno-a": unit(0.0, 1.0, 0.0),
    }
    emb = TableEmbedder(table)
    rec_a = make_record("a1", "catA", "anno-a", unit(1, 0, 0))
    rec_b1 = make_record("b1", "catB", "likes-plain-prompt", unit(1, 0, 0))
    rec_b2 = make_record("b2", "catB", "likes-concatenated", unit(0, 1, 0))
    idx = AssetIndex(records=(rec_a, rec_b1, rec_b2), embedding_dim=3)
    with_a_first = retrieve_models(
        "scene prompt", [CategoryRequest("catA", 1), CategoryRequest("catB", 1)], idx, emb)
    assert [r.id for r in with_a_first] == ["a1", "b2"]
    b_alone = retrieve_models("scene prompt", [CategoryRequest("catB", 1)], idx, emb)
    assert [r.id for r in b_alone] == ["b1"]
    oracle = brute_force_retrieval(
        "scene prompt", [CategoryRequest("catA", 1), CategoryRequest("catB", 1)], idx, emb)
    assert [r.id for r in oracle] == ["a1", "b2"]


def test_retrieval_output_matches_request_multiset():
    idx = sample_index()
    reqs = [CategoryRequest("chair", 2), CategoryRequest("table", 1)]
    out = retrieve_models("prompt", reqs, idx, HashedBowEmbedder(16))
    got = sorted(r.category for r in out)
    assert got == ["chair", "chair", "table"]


def test_retrieval_missing_category():
    with pytest.raises(MissingCategoryError):
        retrieve_models("p", [CategoryRequest("rocket", 1)], sample_index(),
                        HashedBowEmbedder(16))


def test_tie_breaks_to_smallest_id():
    e = unit(1, 0, 0)
    recs = (make_record("z", "cat", "same", e), make_record("a", "cat", "same", e))
    idx = AssetIndex(records=recs, embedding_dim=3)
    emb = TableEmbedder({"q": e})
    out = retrieve_models("q", [CategoryRequest("cat", 1)], idx, emb)
    assert out[0].id == "a"


# --- index files -----------------------------------------------------------------------


def test_index_round_trip(tmp_path):
    idx = sample_index()
    save_index(idx, tmp_path, meshes={"r0": dump_obj(box_mesh(1, 1, 1))})
    loaded = load_index(tmp_path)
    assert loaded.embedding_dim == idx.embedding_dim
    assert loaded.categories == idx.categories
    assert loaded.relation_graph.edges == idx.relation_graph.edges
    for a, b in zip(idx.records, loaded.records):
        assert a.id == b.id and a.annotation == b.annotation and a.dims == b.dims
        assert cosine_similarity(a.embedding, b.embedding) > 1 - 1e-6
    assert (loaded.mesh_dir / "r0.obj").exists()


# --- mesh parsing ------------------------------------------------------------------------

UNIT_CUBE_OBJ = """\
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 2 3 4
f 5 8 7 6
f 1 5 6 2
f 2 6 7 3
f 3 7 8 4
f 4 8 5 1
"""


def test_unit_cube_obj():
    mesh = load_mesh(UNIT_CUBE_OBJ, "obj")
    assert len(mesh.vertices) == 8
    assert len(mesh.triangles) == 12  # six quads fan into two triangles each
    assert mesh.aabb.min.to_array() == pytest.approx([0, 0, 0])
    assert mesh.aabb.max.to_array() == pytest.approx([1, 1, 1])


def test_quad_face_fans_into_two_triangles():
    obj = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n"
    mesh = load_mesh(obj, "obj")
    assert mesh.triangles.tolist() == [[0, 1, 2], [0, 2, 3]]


def test_face_index_out_of_range_reports_line():
    obj = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n"
    with pytest.raises(MeshIndexOutOfRange) as err:
        load_mesh(obj, "obj")
    assert err.value.line_no == 4


def test_bad_vertex_reports_line():
    with pytest.raises(MeshParseError) as err:
        load_mesh("v 0 0\nf 1 1 1\n", "obj")
    assert err.value.line_no == 1


def test_empty_mesh_rejected():
    with pytest.raises(EmptyMeshError):
        load_mesh("v 0 0 0\nv 1 0 0\n", "obj")


def test_negative_obj_indices_resolve_relative():
    obj = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n"
    mesh = load_mesh(obj, "obj")
    assert mesh.triangles.tolist() == [[0, 1, 2]]


def test_ply_round_trip_preserves_geometry():
    mesh = box_mesh(1.0, 2.0, 0.5)
    again = load_mesh(dump_ply(mesh), "ply")
    assert np.allclose(again.vertices, mesh.vertices, atol=1e-6)
    assert np.array_equal(again.triangles, mesh.triangles)


def test_obj_round_trip_preserves_geometry():
    mesh = box_mesh(0.31, 0.72, 1.13)
    again = load_mesh(dump_obj(mesh), "obj")
    assert np.allclose(again.vertices, mesh.vertices, atol=1e-6)
    assert np.array_equal(again.triangles, mesh.triangles)


def test_ply_winding_preserved():
    ply = ("ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\n"
           "property float y\nproperty float z\nelement face 1\n"
           "property list uchar int vertex_indices\nend_header\n"
           "0 0 0\n1 0 0\n0 1 0\n3 0 2 1\n")
    mesh = load_mesh(ply, "ply")
    assert mesh.triangles.tolist() == [[0, 2, 1]]
