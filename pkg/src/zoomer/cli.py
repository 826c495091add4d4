"""Command-line interface: process, ask, bench, synth.

Settings resolve in three layers: built-in defaults, then a flat
``key = value`` config file (--config), then explicit flags. Exit codes:
0 ok, 1 usage error, 2 pipeline error, 3 provider error.
"""

from __future__ import annotations

import dataclasses
import sys
from pathlib import Path

import click

from . import harness, mllm, synth
from .budget import DETAIL_HIGH, DETAIL_LOW, STRATEGIES
from .errors import ProviderFailure, ZoomerError
from .harness import METHODS, PipelineSettings


def _load_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text("utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        for sep in ("=", ":"):
            if sep in line:
                key, _, value = line.partition(sep)
                break
        else:
            raise click.UsageError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(PipelineSettings)}

_OPTIONAL_INT = {"budget_tokens", "rpm"}
_OPTIONAL_STR = {"detector_url", "fixture", "extractor"}


def _coerce(field_name: str, value: str):
    if field_name in _OPTIONAL_INT:
        return None if value.lower() in ("", "none") else int(value)
    if field_name in _OPTIONAL_STR:
        return None if value.lower() in ("", "none") else value
    kind = _FIELD_TYPES[field_name]
    if kind in ("int", int):
        return int(value)
    if kind in ("float", float):
        return float(value)
    if kind in ("bool", bool):
        return value.lower() in ("1", "true", "yes", "on")
    return value


def resolve_settings(config_path: str | None, **cli_values) -> PipelineSettings:
    """defaults < config file < explicit CLI flags."""
    merged: dict = {}
    if config_path:
        for key, value in _load_config_file(config_path).items():
            if key not in _FIELD_TYPES:
                raise click.UsageError(f"unknown config key: {key}")
            merged[key] = _coerce(key, value)
    for key, value in cli_values.items():
        if value is not None:
            merged[key] = value
    try:
        settings = PipelineSettings(**merged)
        # construct the derived configs now so bad values surface as
        # usage errors instead of mid-pipeline failures
        settings.strategy_config()
        settings.compose_config()
        settings.cost_model()
        settings.emphasis_config()
        settings.provider_config()
        return settings
    except (ValueError, TypeError) as exc:
        raise click.UsageError(str(exc)) from exc


def _pipeline_options(fn):
    options = [
        click.option("--strategy", type=click.Choice(STRATEGIES), default=None),
        click.option("--budget", "budget_tokens", type=int, default=None,
                     help="Total token budget for the image prompt."),
        click.option("--detail", type=click.Choice([DETAIL_HIGH, DETAIL_LOW]), default=None),
        click.option("--iou-threshold", type=float, default=None),
        click.option("--conf-threshold", type=float, default=None),
        click.option("--max-scale", type=int, default=None),
        click.option("--adaptive-threshold", type=float, default=None),
        click.option("--emphasis", type=click.Choice(["default", "multi_resolution", "multi_scale"]),
                     default=None),
        click.option("--max-patches", type=int, default=None),
        click.option("--detector-url", default=None, help="HTTP detector endpoint."),
        click.option("--fixture", default=None, help="Fixture annotation file (offline detector)."),
        click.option("--provider", type=click.Choice(mllm.PROVIDERS), default=None),
        click.option("--model", default=None),
        click.option("--base-url", default=None),
        click.option("--seed", type=int, default=None),
        click.option("--out-dir", default=None),
        click.option("--unit-price", "unit_price_per_1k", type=float, default=None,
                     help="Dollars per 1k prompt tokens, for the cost column."),
        click.option("--concurrency", type=int, default=None),
        click.option("--repeats", type=int, default=None),
        click.option("--config", "config_path", type=click.Path(exists=True), default=None,
                     help="Flat key=value settings file; flags override it."),
    ]
    for opt in reversed(options):
        fn = opt(fn)
    return fn


@click.group()
def cli():
    """Token-budget-aware visual prompting for multimodal LLM APIs."""


@cli.command("process")
@click.argument("image", type=str)
@click.argument("prompt", type=str)
@_pipeline_options
def cmd_process(image, prompt, config_path, **flags):
    """Detect prompt-relevant regions and write composed prompt images."""
    settings = resolve_settings(config_path, **flags)
    result = harness.run_pipeline(image, prompt, settings)
    click.echo(f"strategy: {result.plan.strategy} (detail={result.plan.detail})")
    click.echo(f"key terms: {', '.join(result.terms) or '(none)'}")
    click.echo(f"regions kept: {len(result.regions)}")
    click.echo(f"estimated tokens: {result.plan.estimated_tokens}")
    if result.plan.fallback:
        click.echo("fallback: global view only (no regions found)")
    for path in result.artifacts:
        click.echo(f"wrote {path}")


@cli.command("ask")
@click.argument("image", type=str)
@click.argument("prompt", type=str)
@_pipeline_options
def cmd_ask(image, prompt, config_path, **flags):
    """Process an image and dispatch the question to the provider."""
    settings = resolve_settings(config_path, **flags)
    result = harness.run_pipeline(image, prompt, settings, write_artifacts=False)
    provider_cfg = settings.provider_config()
    request = mllm.build_request(result.plan, prompt, provider_cfg)
    response = mllm.send(request, provider_cfg)
    click.echo(response.text)
    reported = response.prompt_tokens if response.prompt_tokens is not None else "n/a"
    click.echo(f"prompt tokens: estimated {result.plan.estimated_tokens}, provider {reported}")
    click.echo(f"latency: {response.latency:.2f}s")


@cli.command("bench")
@click.argument("dataset", type=click.Path(exists=True))
@click.option("--methods", default="raw,resize,zoomer_local",
              help=f"Comma-separated subset of: {', '.join(METHODS)}")
@click.option("--report", "report_path", default=None, help="Where to write the report file.")
@_pipeline_options
def cmd_bench(dataset, methods, report_path, config_path, **flags):
    """Replay a dataset across prompt-processing methods and report."""
    settings = resolve_settings(config_path, **flags)
    method_list = [m.strip() for m in methods.split(",") if m.strip()]
    unknown = [m for m in method_list if m not in METHODS]
    if unknown:
        raise click.UsageError(f"unknown methods: {', '.join(unknown)}")
    if report_path is None:
        report_path = str(Path(settings.out_dir) / "report.json")
        Path(settings.out_dir).mkdir(parents=True, exist_ok=True)
    report = harness.run_bench(dataset, method_list, settings)
    click.echo(harness.render_report(report, report_path))
    click.echo(f"wrote {report_path}")
    if report.failure_fraction > 0.10:
        click.echo(
            f"error: {report.failure_fraction:.0%} of trials failed", err=True
        )
        sys.exit(2)


@cli.command("synth")
@click.option("--count", type=int, default=20)
@click.option("--width", type=int, default=4096)
@click.option("--height", type=int, default=3072)
@click.option("--glyph-px", type=int, default=48)
@click.option("--legible-px", type=float, default=32.0,
              help="Minimum rendered glyph size the mock provider can read.")
@click.option("--out-dir", default="synth_out")
@click.option("--seed", type=int, default=0)
def cmd_synth(count, width, height, glyph_px, legible_px, out_dir, seed):
    """Generate a synthetic needle benchmark with fixtures + ground truth."""
    if glyph_px >= min(width, height):
        raise click.UsageError("--glyph-px must be smaller than both image dimensions")
    dataset = synth.synthesize_dataset(
        count, width, height, glyph_px, out_dir, seed=seed, min_legible_px=legible_px
    )
    click.echo(f"wrote {dataset}")
    if count == 0:
        click.echo("warning: dataset is empty", err=True)


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.UsageError as exc:
        exc.show()
        sys.exit(1)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except click.Abort:
        sys.exit(1)
    except ProviderFailure as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        sys.exit(3)
    except (ZoomerError, OSError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        sys.exit(2)


if __name__ == "__main__":
    main()
