"""Minimal PNG inspection: dimensions from IHDR and tEXt chunks.

The service never needs decoded pixels in fixture mode, so PNG parsing
stays dependency-free. Submitted crops may carry a ``source-region``
tEXt chunk naming the original-image rectangle they were cut from.
"""

from __future__ import annotations

import struct

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
REGION_KEY = "source-region"


class PngFormatError(ValueError):
    pass


def _chunks(data: bytes):
    pos = len(PNG_SIGNATURE)
    while pos + 8 <= len(data):
        length, kind = struct.unpack(">I4s", data[pos: pos + 8])
        body = data[pos + 8: pos + 8 + length]
        if len(body) != length:
            raise PngFormatError("truncated chunk")
        yield kind, body
        pos += 12 + length  # length + type + data + crc


def png_size(data: bytes) -> tuple[int, int]:
    """(width, height) from the IHDR chunk."""
    if not data.startswith(PNG_SIGNATURE):
        raise PngFormatError("not a PNG")
    for kind, body in _chunks(data):
        if kind == b"IHDR":
            if len(body) < 8:
                raise PngFormatError("short IHDR")
            width, height = struct.unpack(">II", body[:8])
            if width == 0 or height == 0:
                raise PngFormatError("zero-size image")
            return width, height
        break  # IHDR must come first
    raise PngFormatError("missing IHDR")


def png_text(data: bytes) -> dict[str, str]:
    """All tEXt chunks as a {keyword: text} dict."""
    if not data.startswith(PNG_SIGNATURE):
        raise PngFormatError("not a PNG")
    out: dict[str, str] = {}
    for kind, body in _chunks(data):
        if kind == b"tEXt" and b"\x00" in body:
            keyword, _, text = body.partition(b"\x00")
            out[keyword.decode("latin-1")] = text.decode("latin-1")
        if kind == b"IEND":
            break
    return out


def source_region(data: bytes) -> tuple[float, float, float, float] | None:
    """The embedded source-region rectangle, if any."""
    value = png_text(data).get(REGION_KEY)
    if value is None:
        return None
    parts = value.split()
    if len(parts) != 4:
        raise PngFormatError(f"malformed {REGION_KEY} chunk: {value!r}")
    x0, y0, x1, y1 = (float(p) for p in parts)
    if not (x1 > x0 and y1 > y0):
        raise PngFormatError(f"degenerate {REGION_KEY}: {value!r}")
    return x0, y0, x1, y1
