"""Stand-in grounded detector used by the model-mode tests."""


def detect(png_bytes: bytes, phrases: list[str], threshold: float) -> list[dict]:
    phrase = phrases[0]
    return [
        {"phrase": phrase, "box": [0.5, 0.5, 0.5, 0.5], "score": 0.9, "format": "cxcywh_norm"},
        {"phrase": phrase, "box": [10, 10, 60, 40], "score": 0.7},
        {"phrase": phrase, "box": [0, 0, 5, 5], "score": 0.1},
    ]
