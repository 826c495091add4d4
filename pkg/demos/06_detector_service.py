"""Driving the pipeline through the HTTP detector service.

Starts the shim in fixture mode on a local port, points the detector
binding at it, and shows that detections match the in-process fixture
path exactly. Requires the zoomer-shim package (pip install -e shim/).
Run: python3 demos/06_detector_service.py
"""

import json
import tempfile
import threading
from pathlib import Path

import requests
from PIL import Image

from zoomer import DetectorBinding, EmphasisConfig, multi_scale_detect
from zoomer.keyterms import KeyTermSet
from zoomer_shim.server import ShimConfig, make_server

with tempfile.TemporaryDirectory() as td:
    fixture = Path(td) / "annotations.jsonl"
    fixture.write_text(
        json.dumps({"phrase": "gauge", "box": [640.0, 380.0, 760.0, 470.0], "score": 0.92}) + "\n"
    )

    server = make_server(ShimConfig(port=0, fixture_path=str(fixture)))
    threading.Thread(target=server.serve_forever, daemon=True).start()
    url = f"http://127.0.0.1:{server.server_address[1]}"
    print(f"service up at {url}: {requests.get(url + '/health', timeout=5).json()}")

    image = Image.new("RGB", (1024, 768), (60, 60, 60))
    terms = KeyTermSet(terms=("gauge",), source_span="full")
    config = EmphasisConfig()

    over_http = multi_scale_detect(image, terms, config, DetectorBinding.http(url))
    in_process = multi_scale_detect(image, terms, config, DetectorBinding.fixture(str(fixture)))

    print(f"\ndetections over HTTP:   {len(over_http)}")
    for sb in over_http:
        print(f"  origin={sb.origin!s:<12} score={sb.score:.3f} box={sb.box.as_tuple()}")
    print(f"identical to in-process fixture path: {over_http == in_process}")
    server.shutdown()
