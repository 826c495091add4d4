"""shim --port --mode --model --fixture: run the detection service."""

from __future__ import annotations

import argparse
import sys

from .server import MODE_FIXTURE, MODE_MODEL, ShimConfig, serve


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="shim", description="HTTP detection service (grounded model or fixture replay)"
    )
    parser.add_argument("--port", type=int, default=8765)
    parser.add_argument("--mode", choices=[MODE_FIXTURE, MODE_MODEL], default=MODE_FIXTURE)
    parser.add_argument("--model", help="adapter entry point, module:function")
    parser.add_argument("--fixture", help="annotation file for fixture mode")
    parser.add_argument("--device", help="device hint passed through to the adapter")
    args = parser.parse_args(argv)

    try:
        config = ShimConfig(
            port=args.port, mode=args.mode, model=args.model,
            fixture_path=args.fixture, device=args.device,
        )
        serve(config)
    except KeyboardInterrupt:
        return 0
    except Exception as exc:
        print(f"shim startup failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
