"""External-service clients: the planning LLM and conditional image backends.

Every client speaks through a small transport interface so tests (and the
whole offline acceptance suite) run against in-process mocks that honor
the same contract.  Request serialization is deterministic: canonical JSON
bodies and a fixed multipart boundary, so wire payloads can be golden-filed.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Protocol, Sequence

from . import jsoncanon
from .conditions import CONDITION_FILENAMES, CONDITION_KINDS
from .errors import (
    HttpError,
    InvalidImagePayloadError,
    LlmTimeoutError,
    RetriesExhaustedError,
    ServiceError,
    UnsupportedConditionError,
)

ENV_LLM_URL = "CANVAS3D_LLM_URL"
ENV_GEN_URL = "CANVAS3D_GEN_URL"
ENV_API_KEY = "CANVAS3D_API_KEY"

MULTIPART_BOUNDARY = "canvas3d-boundary-7f3a9c2e51d84b60"

_CONTENT_TYPES = {
    ".png": "image/png",
    ".json": "application/json",
    ".obj": "text/plain",
    ".ply": "text/plain",
}


class TransportTimeout(Exception):
    """Raised by transports when the remote side exceeds the deadline."""


class HttpTransport(Protocol):
    def request(self, method: str, url: str, headers: Mapping[str, str],
                body: bytes, timeout: float) -> tuple[int, bytes]: ...


class RequestsTransport:
    """Default transport over the requests library."""

    def request(self, method: str, url: str, headers: Mapping[str, str],
                body: bytes, timeout: float) -> tuple[int, bytes]:
        import requests

        try:
            resp = requests.request(method, url, headers=dict(headers), data=body,
                                    timeout=timeout)
        except requests.Timeout as e:
            raise TransportTimeout(str(e))
        return resp.status_code, resp.content


class MockTransport:
    """Scripted transport: a queue of (status, body) tuples or exceptions."""

    def __init__(self, responses: Sequence):
        self.responses = list(responses)
        self.requests: list[dict] = []

    def request(self, method, url, headers, body, timeout):
        self.requests.append({"method": method, "url": url,
                              "headers": dict(headers), "body": body})
        if not self.responses:
            raise AssertionError("mock transport exhausted")
        item = self.responses.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


# --- LLM client --------------------------------------------------------------------


@dataclass
class LlmClient:
    endpoint: str
    model: str = "default"
    timeout: float = 30.0
    max_retries: int = 3
    api_key: Optional[str] = None
    transport: HttpTransport = field(default_factory=RequestsTransport)
    backoff_base: float = 0.5
    sleep: Callable[[float], None] = time.sleep

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")

    def request_body(self, system: str, user: str) -> bytes:
        doc = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        }
        return jsoncanon.dumps_compact(doc).encode("utf-8")

    def complete(self, system: str, user: str) -> str:
        """One completion; transient failures retried with exponential backoff."""
        if not system.strip() or not user.strip():
            raise ValueError("system and user prompts must be non-empty")
        headers = {"Content-Type": "application/json"}
        key = self.api_key or os.environ.get(ENV_API_KEY)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        body = self.request_body(system, user)
        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            if attempt:
                self.sleep(self.backoff_base * (2 ** (attempt - 1)))
            try:
                status, payload = self.transport.request(
                    "POST", self.endpoint, headers, body, self.timeout)
            except TransportTimeout as e:
                last_error = LlmTimeoutError(str(e))
                continue
            if 500 <= status < 600:
                last_error = ServiceError(status, "transient upstream failure")
                continue
            if status != 200:
                raise ServiceError(status, payload[:200].decode("utf-8", "replace"))
            return self._parse_completion(payload)
        raise RetriesExhaustedError(
            f"gave up after {self.max_retries} attempts: {last_error}")

    @staticmethod
    def _parse_completion(payload: bytes) -> str:
        doc = jsoncanon.loads(payload)
        if isinstance(doc, dict):
            if "choices" in doc:  # chat-completions shape
                return doc["choices"][0]["message"]["content"]
            if "text" in doc:
                return doc["text"]
        raise ServiceError(200, "unrecognized completion payload shape")


class MockLlmClient:
    """In-process LLM honoring the complete() contract.

    `script` is either a list of canned responses (popped per call) or a
    callable (system, user) -> response.
    """

    def __init__(self, script):
        self.script = script
        self.calls: list[tuple[str, str]] = []

    def complete(self, system: str, user: str) -> str:
        self.calls.append((system, user))
        if callable(self.script):
            return self.script(system, user)
        if not self.script:
            raise RetriesExhaustedError("mock script exhausted")
        return self.script.pop(0)


class EchoLlmClient:
    """Returns the user prompt verbatim (wire-level smoke tests)."""

    def complete(self, system: str, user: str) -> str:
        return user


@dataclass
class VisionLlmClient:
    """Text+image completions for the external judge/caption scorers."""

    endpoint: str
    model: str = "default-vision"
    timeout: float = 60.0
    api_key: Optional[str] = None
    transport: HttpTransport = field(default_factory=RequestsTransport)

    def complete(self, text: str, image_png: bytes) -> str:
        import base64

        data_url = "data:image/png;base64," + base64.b64encode(image_png).decode("ascii")
        body = jsoncanon.dumps_compact({
            "model": self.model,
            "messages": [{
                "role": "user",
                "content": [
                    {"type": "text", "text": text},
                    {"type": "image_url", "image_url": {"url": data_url}},
                ],
            }],
        }).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        key = self.api_key or os.environ.get(ENV_API_KEY)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        status, payload = self.transport.request("POST", self.endpoint, headers,
                                                 body, self.timeout)
        if status != 200:
            raise ServiceError(status, payload[:200].decode("utf-8", "replace"))
        return LlmClient._parse_completion(payload)


# --- generation backend ------------------------------------------------------------


@dataclass(frozen=True)
class ModelDescriptor:
    id: str
    supported_conditions: frozenset[str]
    endpoint: str

    def __post_init__(self):
        object.__setattr__(self, "supported_conditions",
                           frozenset(self.supported_conditions))
        unknown = self.supported_conditions - set(CONDITION_KINDS)
        if unknown:
            raise ValueError(f"unknown condition kinds {sorted(unknown)}")


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    conditions: Mapping[str, bytes]  # kind -> encoded payload
    model: ModelDescriptor
    seed: Optional[int] = None

    def __post_init__(self):
        extra = set(self.conditions) - self.model.supported_conditions
        if extra:
            raise UnsupportedConditionError(
                f"model {self.model.id!r} does not accept {sorted(extra)}")


@dataclass(frozen=True)
class GenerationResult:
    image: bytes
    latency: float


def encode_multipart(request: GenerationRequest) -> tuple[bytes, str]:
    """Deterministic multipart/form-data body for a generation request.

    Field order is fixed (prompt, seed, then conditions in canonical kind
    order) and the boundary is a constant, so identical requests serialize
    to identical bytes.
    """
    b = MULTIPART_BOUNDARY
    parts: list[bytes] = []

    def text_field(name: str, value: str):
        parts.append(
            (f"--{b}\r\nContent-Disposition: form-data; name=\"{name}\"\r\n\r\n"
             f"{value}\r\n").encode("utf-8"))

    def file_field(name: str, filename: str, payload: bytes):
        ext = filename[filename.rfind("."):]
        ctype = _CONTENT_TYPES.get(ext, "application/octet-stream")
        parts.append(
            (f"--{b}\r\nContent-Disposition: form-data; name=\"{name}\"; "
             f"filename=\"{filename}\"\r\nContent-Type: {ctype}\r\n\r\n"
             ).encode("utf-8") + payload + b"\r\n")

    text_field("prompt", request.prompt)
    text_field("model", request.model.id)
    if request.seed is not None:
        text_field("seed", str(request.seed))
    for kind in CONDITION_KINDS:
        if kind in request.conditions:
            file_field(kind, CONDITION_FILENAMES[kind], request.conditions[kind])
    parts.append(f"--{b}--\r\n".encode("utf-8"))
    return b"".join(parts), f"multipart/form-data; boundary={b}"


_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
_JPEG_MAGIC = b"\xff\xd8\xff"


def generate_image(request: GenerationRequest,
                   transport: HttpTransport | None = None,
                   api_key: Optional[str] = None,
                   timeout: float = 120.0) -> GenerationResult:
    """Upload conditions + prompt, return the generated image bytes.

    Pre-flight validation happens at GenerationRequest construction, so an
    unsupported condition never reaches the network.
    """
    transport = transport or RequestsTransport()
    body, content_type = encode_multipart(request)
    headers = {"Content-Type": content_type}
    key = api_key or os.environ.get(ENV_API_KEY)
    if key:
        headers["Authorization"] = f"Bearer {key}"
    started = time.monotonic()
    status, payload = transport.request("POST", request.model.endpoint, headers,
                                        body, timeout)
    latency = time.monotonic() - started
    if status != 200:
        raise HttpError(status, payload[:200].decode("utf-8", "replace"))
    if not (payload.startswith(_PNG_MAGIC) or payload.startswith(_JPEG_MAGIC)):
        raise InvalidImagePayloadError("response is neither PNG nor JPEG")
    return GenerationResult(image=payload, latency=latency)


def fixed_png(width: int = 64, height: int = 64,
              color: tuple[int, int, int] = (40, 90, 160)) -> bytes:
    """Tiny deterministic PNG used by the mock backend and tests."""
    import numpy as np

    from .conditions import encode_png_rgb8

    arr = np.zeros((height, width, 3), dtype=np.uint8)
    arr[:] = color
    return encode_png_rgb8(arr)


class MockGenerationBackend:
    """Transport standing in for a conditional generation service."""

    def __init__(self, image: bytes | None = None):
        self.image = image or fixed_png()
        self.requests: list[dict] = []

    def request(self, method, url, headers, body, timeout):
        self.requests.append({"method": method, "url": url,
                              "headers": dict(headers), "body": body})
        return 200, self.image
