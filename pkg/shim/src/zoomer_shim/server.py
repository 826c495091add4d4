"""HTTP detection service.

POST /detect accepts {"image": base64 PNG, "phrases": [str...],
"threshold": number} and returns {"detections": [{"phrase", "box",
"score"}...]} with boxes in the submitted image's pixel frame.
GET /health reports {"status": "ok", "model": <name>}.

Two modes: ``fixture`` replays an annotation file (fully concurrent,
no model needed); ``model`` forwards to a wrapped grounded detector
loaded from a ``module:function`` entry point, one inference in flight
at a time. Whatever box convention the adapter emits (absolute corners
or normalized center/size) is converted to absolute corner pixels here.
"""

from __future__ import annotations

import base64
import importlib
import json
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable

from . import fixture as fixture_mod
from .png_meta import PngFormatError, png_size, source_region

MODE_FIXTURE = "fixture"
MODE_MODEL = "model"

# adapter: (png_bytes, phrases, threshold) -> list of detection dicts
Adapter = Callable[[bytes, list[str], float], list[dict]]


@dataclass
class ShimConfig:
    port: int = 8765
    mode: str = MODE_FIXTURE
    model: str | None = None  # "module:function" adapter entry point
    fixture_path: str | None = None
    device: str | None = None

    def __post_init__(self):
        if self.mode not in (MODE_FIXTURE, MODE_MODEL):
            raise ValueError(f"unknown mode: {self.mode!r}")
        if self.mode == MODE_FIXTURE and not self.fixture_path:
            raise ValueError("fixture mode requires --fixture")
        if self.mode == MODE_MODEL and not self.model:
            raise ValueError("model mode requires --model module:function")


def load_adapter(spec: str) -> Adapter:
    module_name, _, func_name = spec.partition(":")
    if not module_name or not func_name:
        raise ValueError(f"adapter must be 'module:function', got {spec!r}")
    module = importlib.import_module(module_name)
    adapter = getattr(module, func_name)
    if not callable(adapter):
        raise TypeError(f"{spec} is not callable")
    return adapter


def normalize_box(det: dict, width: int, height: int) -> list[float]:
    """Convert an adapter detection to absolute [x0, y0, x1, y1] pixels.

    ``format`` selects the convention: "xyxy" (default, absolute corners)
    or "cxcywh_norm" (center/size in [0, 1] fractions).
    """
    fmt = det.get("format", "xyxy")
    a, b, c, d = (float(v) for v in det["box"])
    if fmt == "xyxy":
        return [a, b, c, d]
    if fmt == "cxcywh_norm":
        return [
            (a - c / 2.0) * width,
            (b - d / 2.0) * height,
            (a + c / 2.0) * width,
            (b + d / 2.0) * height,
        ]
    raise ValueError(f"unknown box format: {fmt!r}")


class _BadRequest(Exception):
    pass


class _UndecodableImage(Exception):
    pass


class ShimState:
    """Validated runtime state shared by request handlers."""

    def __init__(self, config: ShimConfig):
        self.config = config
        self.annotations: tuple = ()
        self.adapter: Adapter | None = None
        self.inference_lock = threading.Lock()  # one model inference in flight
        if config.mode == MODE_FIXTURE:
            self.annotations = fixture_mod.load_annotations(config.fixture_path)
            self.model_name = "fixture"
        else:
            self.adapter = load_adapter(config.model)
            self.model_name = config.model

    def detect(self, body: bytes) -> bytes:
        try:
            req = json.loads(body)
            image_b64 = req["image"]
            phrases = req["phrases"]
            threshold = float(req["threshold"])
        except (ValueError, KeyError, TypeError) as exc:
            raise _BadRequest(f"malformed request: {exc}") from exc
        if not isinstance(phrases, list) or not phrases or not all(
            isinstance(p, str) for p in phrases
        ):
            raise _BadRequest("phrases must be a non-empty list of strings")
        if not 0.0 <= threshold <= 1.0:
            raise _BadRequest("threshold must be in [0, 1]")
        try:
            png = base64.b64decode(image_b64, validate=True)
        except (ValueError, TypeError) as exc:
            raise _UndecodableImage(f"bad base64: {exc}") from exc
        try:
            width, height = png_size(png)
            region = source_region(png)
        except PngFormatError as exc:
            raise _UndecodableImage(str(exc)) from exc

        if self.config.mode == MODE_FIXTURE:
            if region is None:
                region = (0.0, 0.0, float(width), float(height))
            detections = fixture_mod.replay(
                self.annotations, region, width, height, phrases, threshold
            )
            return fixture_mod.encode_response(detections)

        with self.inference_lock:
            raw = self.adapter(png, list(phrases), threshold)
        detections = []
        for det in raw:
            score = float(det["score"])
            if score < threshold:
                continue
            detections.append(
                {
                    "phrase": str(det["phrase"]),
                    "box": normalize_box(det, width, height),
                    "score": score,
                }
            )
        return fixture_mod.encode_response(detections)


def make_handler(state: ShimState):
    class Handler(BaseHTTPRequestHandler):
        def _reply(self, status: int, body: bytes):
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            if self.path == "/health":
                body = json.dumps({"status": "ok", "model": state.model_name}).encode()
                self._reply(200, body)
            else:
                self._reply(404, b'{"error":"not found"}')

        def do_POST(self):
            if self.path != "/detect":
                self._reply(404, b'{"error":"not found"}')
                return
            length = int(self.headers.get("Content-Length", 0))
            body = self.rfile.read(length)
            try:
                self._reply(200, state.detect(body))
            except _BadRequest as exc:
                self._reply(400, json.dumps({"error": str(exc)}).encode())
            except _UndecodableImage as exc:
                self._reply(422, json.dumps({"error": str(exc)}).encode())
            except Exception as exc:  # adapter failure
                self._reply(500, json.dumps({"error": f"{type(exc).__name__}: {exc}"}).encode())

        def log_message(self, *args):
            pass

    return Handler


def make_server(config: ShimConfig) -> ThreadingHTTPServer:
    """Validate the configuration and bind the server (not yet serving)."""
    state = ShimState(config)
    return ThreadingHTTPServer(("0.0.0.0", config.port), make_handler(state))


def serve(config: ShimConfig):
    server = make_server(config)
    try:
        server.serve_forever()
    finally:
        server.server_close()
