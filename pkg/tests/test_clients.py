from pathlib import Path

import pytest

from canvas3d.clients import (
    EchoLlmClient,
    GenerationRequest,
    LlmClient,
    MockGenerationBackend,
    MockLlmClient,
    MockTransport,
    ModelDescriptor,
    TransportTimeout,
    VisionLlmClient,
    encode_multipart,
    fixed_png,
    generate_image,
)
from canvas3d.errors import (
    HttpError,
    InvalidImagePayloadError,
    RetriesExhaustedError,
    ServiceError,
    UnsupportedConditionError,
)
from canvas3d.jsoncanon import loads

GOLDEN = Path(__file__).parent / "golden"


def ok(content: str) -> tuple[int, bytes]:
    body = ('{"choices": [{"message": {"content": ' +
            __import__("json").dumps(content) + '}}]}').encode()
    return 200, body


def make_client(responses, **kw):
    sleeps = []
    client = LlmClient(endpoint="http://llm.test/v1", model="planner",
                       transport=MockTransport(responses),
                       sleep=sleeps.append, **kw)
    return client, sleeps


# --- LLM client ----------------------------------------------------------------


def test_echo_mock_echoes():
    assert EchoLlmClient().complete("sys", "hello") == "hello"


def test_scripted_mock_pops_in_order():
    mock = MockLlmClient(["first", "second"])
    assert mock.complete("s", "u") == "first"
    assert mock.complete("s", "u") == "second"
    assert mock.calls[0] == ("s", "u")


def test_retry_succeeds_after_transient_failures():
    client, sleeps = make_client(
        [(503, b"busy"), TransportTimeout("deadline"), ok("done")], max_retries=3)
    assert client.complete("sys", "user") == "done"
    assert len(client.transport.requests) == 3
    assert sleeps == [0.5, 1.0]  # monotone non-decreasing backoff


def test_retries_exhausted():
    client, sleeps = make_client([(500, b""), (502, b""), (503, b"")], max_retries=3)
    with pytest.raises(RetriesExhaustedError):
        client.complete("sys", "user")
    assert len(client.transport.requests) == 3


def test_non_transient_error_raises_immediately():
    client, _ = make_client([(401, b"no auth")], max_retries=3)
    with pytest.raises(ServiceError) as err:
        client.complete("sys", "user")
    assert err.value.status == 401
    assert len(client.transport.requests) == 1


def test_request_body_is_canonical():
    client, _ = make_client([ok("x")])
    body = client.request_body("system text", "user text")
    doc = loads(body)
    assert doc["model"] == "planner"
    assert [m["role"] for m in doc["messages"]] == ["system", "user"]
    assert client.request_body("system text", "user text") == body


def test_registration_request_golden(tmp_path):
    from canvas3d.assets import build_registration_prompt
    system = build_registration_prompt(["chair", "table"], "indoor")
    client, _ = make_client([ok("chair: 1")])
    body = client.request_body(system, "User Prompt: a reading corner\n")
    golden = GOLDEN / "registration_request.json"
    if not golden.exists():  # freeze on first run, compare forever after
        golden.write_bytes(body)
    assert body == golden.read_bytes()
    assert b"professional scene designer" in body


# --- generation client ------------------------------------------------------------


def sample_model(kinds=("depth", "skeleton", "lighting", "scene_image", "mesh")):
    return ModelDescriptor(id="mock-backbone", supported_conditions=frozenset(kinds),
                           endpoint="http://gen.test/generate")


def test_unsupported_condition_fails_before_any_network_call():
    backend = MockGenerationBackend()
    with pytest.raises(UnsupportedConditionError):
        GenerationRequest(prompt="p", conditions={"skeleton": b"{}"},
                          model=sample_model(kinds=("depth",)))
    assert backend.requests == []


def test_mock_backend_round_trip():
    backend = MockGenerationBackend()
    req = GenerationRequest(prompt="a cozy desk", conditions={"depth": b"PNGDATA"},
                            model=sample_model(), seed=7)
    result = generate_image(req, transport=backend)
    assert result.image[:8] == b"\x89PNG\r\n\x1a\n"
    assert result.latency >= 0
    sent = backend.requests[0]
    assert sent["url"] == "http://gen.test/generate"
    assert b'name="prompt"' in sent["body"]


def test_multipart_body_is_deterministic_and_golden():
    conditions = {
        "depth": b"fake-depth-png",
        "skeleton": b'{"people": []}',
        "lighting": b'{"lights": []}',
        "scene_image": b"fake-scene-png",
    }
    req = GenerationRequest(prompt="golden prompt", conditions=conditions,
                            model=sample_model(), seed=42)
    body1, ctype = encode_multipart(req)
    body2, _ = encode_multipart(req)
    assert body1 == body2
    assert "boundary=" in ctype
    for name in (b'filename="depth.png"', b'filename="skeleton.json"',
                 b'filename="lighting.json"', b'filename="scene.png"'):
        assert name in body1
    golden = GOLDEN / "generation_request.bin"
    if not golden.exists():
        golden.write_bytes(body1)
    assert body1 == golden.read_bytes()


def test_http_error_and_bad_payload():
    req = GenerationRequest(prompt="p", conditions={"depth": b"x"},
                            model=sample_model())
    with pytest.raises(HttpError):
        generate_image(req, transport=MockTransport([(500, b"boom")]))
    with pytest.raises(InvalidImagePayloadError):
        generate_image(req, transport=MockTransport([(200, b"not an image")]))


def test_fixed_png_is_valid_and_64px():
    from PIL import Image
    import io
    img = Image.open(io.BytesIO(fixed_png()))
    assert img.size == (64, 64)


def test_vision_client_wraps_image_payload():
    transport = MockTransport([ok("a fine caption")])
    client = VisionLlmClient(endpoint="http://v.test", transport=transport)
    out = client.complete("describe", b"\x89PNGxxxx")
    assert out == "a fine caption"
    body = loads(transport.requests[0]["body"])
    content = body["messages"][0]["content"]
    assert content[0]["text"] == "describe"
    assert content[1]["image_url"]["url"].startswith("data:image/png;base64,")
