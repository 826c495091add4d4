"""Chat request construction and dispatch for black-box MLLM providers.

Three wire formats are supported (chat-completions style with image_url
parts, messages style with base64 source blocks, and generateContent
style with inline data), plus an offline mock provider whose answers
are gated on whether any supplied image actually renders the target
legibly — the oracle the synthetic benchmark is scored against.

Requests are stateless and safe for concurrent dispatch; a per-provider
token bucket (requests/minute) serializes bursts.
"""

from __future__ import annotations

import base64
import io
import logging
import os
import random
import threading
import time
import uuid
import zlib
from dataclasses import dataclass, field

import requests

from .budget import DETAIL_LOW, StrategyPlan, TokenCostModel, normalized_dims
from .errors import (
    AuthError,
    EmptyPlan,
    MissingGroundTruth,
    PayloadTooLarge,
    ProviderError,
    RateLimited,
    UnsupportedProvider,
)
from .geometry import Box, clip

logger = logging.getLogger(__name__)

PROVIDER_OPENAI = "openai_compatible"
PROVIDER_ANTHROPIC = "anthropic_compatible"
PROVIDER_GEMINI = "gemini_compatible"
PROVIDER_MOCK = "mock"
PROVIDERS = (PROVIDER_OPENAI, PROVIDER_ANTHROPIC, PROVIDER_GEMINI, PROVIDER_MOCK)

CREDENTIAL_ENV = {
    PROVIDER_OPENAI: "ZOOMER_OPENAI_KEY",
    PROVIDER_ANTHROPIC: "ZOOMER_ANTHROPIC_KEY",
    PROVIDER_GEMINI: "ZOOMER_GEMINI_KEY",
}

# Long side the provider renders a low-detail image at.
LOW_DETAIL_VIEW_PX = 512


@dataclass(frozen=True)
class ProviderConfig:
    name: str = PROVIDER_MOCK
    base_url: str = ""
    model: str = "mock-1"
    max_images: int = 10
    rpm: int | None = None
    max_payload_bytes: int = 20 * 1024 * 1024
    max_tokens: int = 1024
    # Images are sent bare by default; this prepends one line naming the
    # role of each image before the question.
    prepend_legend: bool = False

    def __post_init__(self):
        if self.name not in PROVIDERS:
            raise UnsupportedProvider(f"unknown provider: {self.name!r}")


@dataclass(frozen=True)
class RetryPolicy:
    attempts: int = 3
    base_delay: float = 0.5
    max_delay: float = 8.0

    def delay(self, attempt: int) -> float:
        return min(self.base_delay * (2**attempt), self.max_delay)


@dataclass
class ChatRequest:
    """A ready-to-send request: the verbatim question plus ordered images."""

    text: str
    images: list[tuple[bytes, str]]  # (PNG bytes, detail flag)
    provider: str
    payload: dict
    plan: StrategyPlan | None = None
    correlation_id: str = field(default_factory=lambda: uuid.uuid4().hex)


@dataclass
class ChatResponse:
    text: str
    prompt_tokens: int | None = None
    completion_tokens: int | None = None
    latency: float = 0.0
    attempts: int = 1

    def __post_init__(self):
        if self.latency < 0:
            raise ValueError("latency must be >= 0")


def _png_bytes(plan: StrategyPlan) -> list[bytes]:
    blobs = []
    for im in plan.images:
        buf = io.BytesIO()
        im.pixels.save(buf, format="PNG")
        blobs.append(buf.getvalue())
    return blobs


def _wire_payload(provider: ProviderConfig, question: str, parts: list[tuple[str, str]]) -> dict:
    """Provider-specific message body; ``parts`` are (base64 png, detail)."""
    if provider.name == PROVIDER_OPENAI:
        content = [
            {
                "type": "image_url",
                "image_url": {"url": f"data:image/png;base64,{b64}", "detail": detail},
            }
            for b64, detail in parts
        ]
        content.append({"type": "text", "text": question})
        return {
            "model": provider.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": content}],
        }
    if provider.name == PROVIDER_ANTHROPIC:
        content = [
            {
                "type": "image",
                "source": {"type": "base64", "media_type": "image/png", "data": b64},
            }
            for b64, _ in parts
        ]
        content.append({"type": "text", "text": question})
        return {
            "model": provider.model,
            "max_tokens": provider.max_tokens,
            "temperature": 0,
            "messages": [{"role": "user", "content": content}],
        }
    if provider.name == PROVIDER_GEMINI:
        p = [
            {"inline_data": {"mime_type": "image/png", "data": b64}}
            for b64, _ in parts
        ]
        p.append({"text": question})
        return {
            "generationConfig": {"temperature": 0},
            "contents": [{"role": "user", "parts": p}],
        }
    # mock: keep an in-process payload; no serialization needed
    return {"model": provider.model, "question": question, "n_images": len(parts)}


_KIND_LEGEND = {
    "spatial_composite": "composite of emphasized regions, layout preserved",
    "zoomed_crop": "zoomed crop of one region",
    "global_view": "downscaled view of the whole scene",
    "raw": "original image",
}


def _legend(plan: StrategyPlan) -> str:
    roles = "; ".join(
        f"image {i + 1}: {_KIND_LEGEND.get(im.kind, im.kind)}"
        for i, im in enumerate(plan.images)
    )
    return f"[{roles}]"


def build_request(
    plan: StrategyPlan, question: str, provider: ProviderConfig | None = None
) -> ChatRequest:
    """Serialize a plan into a provider payload: images in plan order
    (global view last), the question appended verbatim, temperature 0."""
    provider = provider or ProviderConfig()
    if not plan.images:
        raise EmptyPlan("plan contains no images")
    if len(plan.images) > provider.max_images:
        raise PayloadTooLarge(
            f"{len(plan.images)} images exceed the provider cap of {provider.max_images}"
        )
    user_question = question
    if provider.prepend_legend:
        question = f"{_legend(plan)}\n{question}"

    if provider.name == PROVIDER_MOCK:
        # The mock inspects plan provenance directly; skip PNG encoding.
        images = [(b"", plan.detail) for _ in plan.images]
        payload = _wire_payload(provider, question, [("", plan.detail)] * len(plan.images))
    else:
        blobs = _png_bytes(plan)
        total = sum(len(b) for b in blobs)
        if total > provider.max_payload_bytes:
            raise PayloadTooLarge(f"{total} bytes exceed {provider.max_payload_bytes}")
        images = [(b, plan.detail) for b in blobs]
        parts = [(base64.b64encode(b).decode("ascii"), plan.detail) for b in blobs]
        payload = _wire_payload(provider, question, parts)

    return ChatRequest(
        text=user_question, images=images, provider=provider.name, payload=payload, plan=plan
    )


class _TokenBucket:
    def __init__(self, rpm: int):
        self.capacity = rpm
        self.tokens = float(rpm)
        self.rate = rpm / 60.0
        self.stamp = time.monotonic()
        self.lock = threading.Lock()

    def acquire(self):
        while True:
            with self.lock:
                now = time.monotonic()
                self.tokens = min(self.capacity, self.tokens + (now - self.stamp) * self.rate)
                self.stamp = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            time.sleep(wait)


_buckets: dict[str, _TokenBucket] = {}
_buckets_lock = threading.Lock()


def _rate_limit(provider: ProviderConfig):
    if provider.rpm is None:
        return
    with _buckets_lock:
        bucket = _buckets.get(provider.name)
        if bucket is None or bucket.capacity != provider.rpm:
            bucket = _buckets[provider.name] = _TokenBucket(provider.rpm)
    bucket.acquire()


def _endpoint(provider: ProviderConfig, credentials: str) -> tuple[str, dict]:
    base = provider.base_url.rstrip("/")
    if provider.name == PROVIDER_OPENAI:
        return f"{base}/chat/completions", {"Authorization": f"Bearer {credentials}"}
    if provider.name == PROVIDER_ANTHROPIC:
        return f"{base}/messages", {
            "x-api-key": credentials,
            "anthropic-version": "2023-06-01",
        }
    if provider.name == PROVIDER_GEMINI:
        return (
            f"{base}/models/{provider.model}:generateContent?key={credentials}",
            {},
        )
    raise UnsupportedProvider(provider.name)


def _parse_response(provider: ProviderConfig, data: dict) -> tuple[str, int | None, int | None]:
    try:
        if provider.name == PROVIDER_OPENAI:
            text = data["choices"][0]["message"]["content"]
            usage = data.get("usage", {})
            return text, usage.get("prompt_tokens"), usage.get("completion_tokens")
        if provider.name == PROVIDER_ANTHROPIC:
            text = "".join(
                block.get("text", "") for block in data["content"] if block.get("type") == "text"
            )
            usage = data.get("usage", {})
            return text, usage.get("input_tokens"), usage.get("output_tokens")
        if provider.name == PROVIDER_GEMINI:
            parts = data["candidates"][0]["content"]["parts"]
            text = "".join(p.get("text", "") for p in parts)
            usage = data.get("usageMetadata", {})
            return text, usage.get("promptTokenCount"), usage.get("candidatesTokenCount")
    except (KeyError, IndexError, TypeError) as exc:
        raise ProviderError(200, f"unparseable response: {exc}") from exc
    raise UnsupportedProvider(provider.name)


def send(
    request: ChatRequest,
    provider: ProviderConfig | None = None,
    credentials: str | None = None,
    retry: RetryPolicy | None = None,
    mock_config: "MockConfig | None" = None,
    timeout: float = 120.0,
) -> ChatResponse:
    """Dispatch a request, retrying rate limits and transient 5xx with
    exponential backoff. Latency covers serialization through response."""
    provider = provider or ProviderConfig()
    retry = retry or RetryPolicy()

    if provider.name == PROVIDER_MOCK:
        return mock_answer(request, mock_config)

    if credentials is None:
        credentials = os.environ.get(CREDENTIAL_ENV[provider.name], "")
    if not credentials:
        raise AuthError(
            f"no credentials: set {CREDENTIAL_ENV[provider.name]} or pass them explicitly"
        )

    url, headers = _endpoint(provider, credentials)
    start = time.perf_counter()
    attempts = 0
    last_status = None
    last_body = ""
    for attempt in range(retry.attempts):
        attempts = attempt + 1
        _rate_limit(provider)
        try:
            resp = requests.post(url, json=request.payload, headers=headers, timeout=timeout)
        except requests.RequestException as exc:
            last_status, last_body = -1, str(exc)
            if attempt + 1 < retry.attempts:
                time.sleep(retry.delay(attempt))
            continue
        if resp.status_code in (401, 403):
            raise AuthError(f"provider rejected credentials ({resp.status_code})")
        if resp.status_code == 429 or 500 <= resp.status_code < 600:
            last_status, last_body = resp.status_code, resp.text
            if attempt + 1 < retry.attempts:
                time.sleep(retry.delay(attempt))
            continue
        if resp.status_code != 200:
            raise ProviderError(resp.status_code, resp.text)
        text, p_tok, c_tok = _parse_response(provider, resp.json())
        # responses pair with requests by correlation id, never arrival order
        logger.debug(
            "request %s: %s answered on attempt %d",
            request.correlation_id, provider.name, attempts,
        )
        return ChatResponse(
            text=text,
            prompt_tokens=p_tok,
            completion_tokens=c_tok,
            latency=time.perf_counter() - start,
            attempts=attempts,
        )

    if last_status == 429:
        raise RateLimited(f"still rate-limited after {attempts} attempts")
    raise ProviderError(last_status or -1, last_body)


@dataclass(frozen=True)
class MockConfig:
    """Ground truth for the legibility-gated mock provider.

    The mock answers correctly iff some supplied image renders the
    target box at a minimum side of ``min_legible_px`` pixels — after
    both the composition scale (from plan provenance) and the provider's
    own resize rules are applied. Otherwise it picks uniformly among the
    options, seeded deterministically.
    """

    answer: str
    options: tuple[str, ...]
    target_box: tuple[float, float, float, float]
    min_legible_px: float = 32.0
    seed: int = 0
    record_key: str = ""
    cost_model: TokenCostModel = field(default_factory=TokenCostModel)


def _provider_view_scale(width: int, height: int, detail: str, model: TokenCostModel) -> float:
    """How much the provider itself shrinks an image before looking at it."""
    if detail == DETAIL_LOW:
        return min(1.0, LOW_DETAIL_VIEW_PX / max(width, height))
    w, h = normalized_dims(width, height, model)
    return min(w / width, h / height)


def rendered_target_px(plan: StrategyPlan, target: Box, detail: str, model: TokenCostModel) -> float:
    """Largest min-side, in provider-view pixels, at which any plan image
    renders the fully visible target."""
    best = 0.0
    for im in plan.images:
        view = _provider_view_scale(im.width, im.height, detail, model)
        for source, canvas in im.placements:
            if clip(target, source) is None:
                continue
            if not source.contains(target):
                continue  # partially cut targets are not legible
            sx = canvas.width / source.width
            sy = canvas.height / source.height
            rendered = min(target.width * sx, target.height * sy) * view
            best = max(best, rendered)
    return best


def mock_answer(request: ChatRequest, config: MockConfig | None) -> ChatResponse:
    """Deterministic offline oracle standing in for a real provider."""
    if config is None:
        raise MissingGroundTruth("mock provider needs a MockConfig with ground truth")
    if request.plan is None:
        raise MissingGroundTruth("mock provider needs plan provenance")

    target = Box(*config.target_box)
    rendered = rendered_target_px(
        request.plan, target, request.plan.detail, config.cost_model
    )
    if rendered >= config.min_legible_px and request.plan.images:
        answer = config.answer
    else:
        key = f"{config.seed}:{config.record_key}"
        rng = random.Random(zlib.crc32(key.encode("utf-8")))
        answer = rng.choice(list(config.options))

    return ChatResponse(
        text=answer,
        prompt_tokens=request.plan.estimated_tokens,
        completion_tokens=1,
        latency=0.0,  # fixed so benchmark replays are byte-identical
    )
