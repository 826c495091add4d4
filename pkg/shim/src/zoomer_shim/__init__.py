"""HTTP microservice speaking the detector wire protocol: POST /detect
and GET /health, backed by a wrapped grounded detector or a fixture
annotation file for deterministic integration tests."""

from .fixture import Annotation, encode_response, load_annotations, replay
from .server import ShimConfig, make_server, serve

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "ShimConfig",
    "encode_response",
    "load_annotations",
    "make_server",
    "replay",
    "serve",
]
