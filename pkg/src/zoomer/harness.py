"""End-to-end pipeline runs and the benchmark harness.

``run_pipeline`` wires key-term extraction, emphasis, NMS, and planning
for a single (image, prompt) pair and writes the composed artifacts.
``run_bench`` replays a line-delimited dataset across prompt-processing
methods, dispatches each plan to a provider, scores answers by the first
standalone option letter, and aggregates accuracy/token/latency/cost
rows per method.

Records may be processed concurrently; results are accumulated under a
lock and reported in dataset order, so completion order never affects
the report. With the fixture detector and mock provider the whole run
is deterministic and replays byte-identically.
"""

from __future__ import annotations

import json
import logging
import re
import shlex
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from PIL import Image

from . import budget, compose, emphasizer, keyterms, mllm
from .errors import EmptyDataset, NoTermsFound, ZoomerError
from .geometry import ScoredBox, nms_filter

logger = logging.getLogger(__name__)

METHODS = (
    "raw",
    "resize",
    "low_detail",
    "zoomer_local",
    "zoomer_adaptive",
    "zoomer_global",
    "zoomer_patches",
)


@dataclass(frozen=True)
class PipelineSettings:
    """Everything a pipeline run needs, resolved from defaults, config
    file, and CLI flags (in increasing precedence)."""

    strategy: str = budget.STRATEGY_LOCAL
    budget_tokens: int | None = None
    detail: str = budget.DETAIL_HIGH
    iou_threshold: float = 0.5
    conf_threshold: float = 0.8
    max_scale: int = 3
    adaptive_threshold: float = 0.5
    emphasis: str = "multi_scale"
    max_patches: int = 8
    tile_target: int = 512
    per_image_overhead: int = 0
    detector_url: str | None = None
    fixture: str | None = None
    provider: str = mllm.PROVIDER_MOCK
    model: str = "mock-1"
    base_url: str = ""
    max_images: int = 10
    rpm: int | None = None
    extractor: str | None = None  # external key-term extractor command
    seed: int = 0
    out_dir: str = "out"
    unit_price_per_1k: float = 0.005
    concurrency: int = 4
    repeats: int = 1
    strict_budget: bool = False

    def strategy_config(self) -> budget.StrategyConfig:
        return budget.StrategyConfig(
            strategy=self.strategy,
            b_total=self.budget_tokens,
            t_adaptive=self.adaptive_threshold,
            max_patches=self.max_patches,
            detail=self.detail,
            strict=self.strict_budget,
        )

    def compose_config(self) -> compose.ComposeConfig:
        return compose.ComposeConfig(tile_target=self.tile_target)

    def cost_model(self) -> budget.TokenCostModel:
        return budget.TokenCostModel(per_image_overhead=self.per_image_overhead)

    def emphasis_config(self) -> emphasizer.EmphasisConfig:
        return emphasizer.EmphasisConfig(
            mode=self.emphasis, s_max=self.max_scale, t_conf=self.conf_threshold
        )

    def provider_config(self) -> mllm.ProviderConfig:
        return mllm.ProviderConfig(
            name=self.provider,
            base_url=self.base_url,
            model=self.model,
            max_images=self.max_images,
            rpm=self.rpm,
        )

    def term_extractor(self) -> keyterms.Extractor | None:
        if not self.extractor:
            return None
        return keyterms.SubprocessExtractor(shlex.split(self.extractor))

    def detector_binding(self, fixture_override: str | None = None) -> emphasizer.DetectorBinding:
        fixture = fixture_override or self.fixture
        if self.detector_url:
            return emphasizer.DetectorBinding.http(self.detector_url)
        if fixture:
            return emphasizer.DetectorBinding.fixture(fixture)
        raise ZoomerError("no detector configured: pass --detector-url or --fixture")


@dataclass
class PipelineResult:
    plan: budget.StrategyPlan
    regions: list[ScoredBox]
    terms: tuple[str, ...]
    artifacts: list[Path] = field(default_factory=list)


def detect_regions(
    image: Image.Image, prompt: str, settings: PipelineSettings, fixture: str | None = None
) -> tuple[list[ScoredBox], tuple[str, ...]]:
    """Key terms -> emphasis -> NMS. An unanswerable prompt (no terms)
    yields no regions rather than failing; planning falls back."""
    try:
        term_set = keyterms.extract_key_terms(prompt, settings.term_extractor())
    except NoTermsFound:
        logger.info("no key terms in prompt; falling back to global view")
        return [], ()
    binding = settings.detector_binding(fixture)
    raw = emphasizer.run_emphasis(image, term_set, settings.emphasis_config(), binding)
    return nms_filter(raw, settings.iou_threshold), term_set.terms


def build_plan_for_method(
    image: Image.Image,
    method: str,
    settings: PipelineSettings,
    prompt: str,
    fixture: str | None = None,
) -> budget.StrategyPlan:
    """A StrategyPlan for one benchmark method (baseline or pipeline)."""
    model = settings.cost_model()
    compose_cfg = settings.compose_config()
    if method == "raw":
        images = [compose.wrap_raw(image)]
        return budget.StrategyPlan(
            strategy="raw",
            images=images,
            estimated_tokens=budget.plan_tokens(images, model, budget.DETAIL_HIGH),
            detail=budget.DETAIL_HIGH,
            coverage=1.0,
        )
    if method == "resize":
        images = [compose.global_view(image, compose_cfg)]
        return budget.StrategyPlan(
            strategy="resize",
            images=images,
            estimated_tokens=budget.plan_tokens(images, model, budget.DETAIL_HIGH),
            detail=budget.DETAIL_HIGH,
            coverage=1.0,
        )
    if method == "low_detail":
        images = [compose.wrap_raw(image)]
        return budget.StrategyPlan(
            strategy="low_detail",
            images=images,
            estimated_tokens=budget.plan_tokens(images, model, budget.DETAIL_LOW),
            detail=budget.DETAIL_LOW,
            coverage=1.0,
        )
    if method.startswith("zoomer_"):
        strategy = method.removeprefix("zoomer_")
        regions, _ = detect_regions(image, prompt, settings, fixture)
        cfg = budget.StrategyConfig(
            strategy=strategy,
            b_total=settings.budget_tokens,
            t_adaptive=settings.adaptive_threshold,
            max_patches=settings.max_patches,
            detail=settings.detail,
            strict=settings.strict_budget,
        )
        return budget.plan_prompt(image, regions, cfg, compose_cfg, model)
    raise ZoomerError(f"unknown method: {method!r}")


def run_pipeline(
    image_path: str, prompt: str, settings: PipelineSettings, write_artifacts: bool = True
) -> PipelineResult:
    """The `process` pipeline: detect, filter, plan, write artifacts."""
    image = compose.load_image(image_path)
    regions, terms = detect_regions(image, prompt, settings)
    plan = budget.plan_prompt(
        image,
        regions,
        settings.strategy_config(),
        settings.compose_config(),
        settings.cost_model(),
    )

    artifacts: list[Path] = []
    if write_artifacts:
        out_dir = Path(settings.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = Path(image_path).stem
        for i, im in enumerate(plan.images):
            path = out_dir / f"{stem}.{plan.strategy}.{i}.png"
            im.pixels.save(path, format="PNG")
            artifacts.append(path)
        plan_path = out_dir / f"{stem}.{plan.strategy}.plan.json"
        plan_path.write_text(
            json.dumps(budget.plan_summary(plan, settings.cost_model()), indent=2, sort_keys=True),
            "utf-8",
        )
        artifacts.append(plan_path)
        overlay_path = out_dir / f"{stem}.overlay.png"
        compose.render_overlay(image, regions, str(overlay_path))
        artifacts.append(overlay_path)

    return PipelineResult(plan=plan, regions=regions, terms=terms, artifacts=artifacts)


# ---------------------------------------------------------------------------
# benchmark records and scoring


@dataclass(frozen=True)
class BenchRecord:
    image_path: str
    question: str
    options: tuple[tuple[str, str], ...]  # (letter, text)
    answer: str
    fixture: str | None = None
    mock: dict | None = None

    @property
    def letters(self) -> tuple[str, ...]:
        return tuple(letter for letter, _ in self.options)


def load_dataset(path: str | Path) -> list[BenchRecord]:
    records = []
    base = Path(path).parent
    text = Path(path).read_text("utf-8")

    def resolve(p: str | None) -> str | None:
        if p is None:
            return None
        return p if Path(p).is_absolute() else str(base / p)

    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        rec = json.loads(line)
        options = tuple((o["letter"], o["text"]) for o in rec["options"])
        record = BenchRecord(
            image_path=resolve(rec["image"]),
            question=rec["question"],
            options=options,
            answer=rec["answer"],
            fixture=resolve(rec.get("fixture")),
            mock=rec.get("mock"),
        )
        if record.answer not in record.letters:
            raise ValueError(f"{path}:{lineno}: answer {record.answer!r} not among options")
        if not Path(record.image_path).exists():
            raise FileNotFoundError(f"{path}:{lineno}: missing image {record.image_path}")
        records.append(record)
    if not records:
        raise EmptyDataset(f"no records in {path}")
    return records


_LETTER = re.compile(r"(?<![A-Za-z])([A-Ea-e])(?![A-Za-z])")


def extract_option_letter(text: str, letters: tuple[str, ...]) -> str | None:
    """First standalone option letter in a response, case-insensitive."""
    allowed = {l.upper() for l in letters}
    for m in _LETTER.finditer(text):
        letter = m.group(1).upper()
        if letter in allowed:
            return letter
    return None


# ---------------------------------------------------------------------------
# benchmark runner


@dataclass
class Trial:
    record_index: int
    repeat: int
    method: str
    answer: str | None = None
    correct: bool = False
    estimated_tokens: int = 0
    provider_tokens: int | None = None
    latency_s: float = 0.0
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "record": self.record_index,
            "repeat": self.repeat,
            "method": self.method,
            "answer": self.answer,
            "correct": self.correct,
            "estimated_tokens": self.estimated_tokens,
            "provider_tokens": self.provider_tokens,
            "latency_s": self.latency_s,
            "error": self.error,
        }


@dataclass
class BenchReport:
    methods: list[dict]
    trials: list[Trial]
    unit_price_per_1k: float
    failure_fraction: float

    def to_dict(self) -> dict:
        return {
            "unit_price_per_1k": self.unit_price_per_1k,
            "failure_fraction": self.failure_fraction,
            "methods": self.methods,
            "records": [t.to_dict() for t in self.trials],
        }


def _run_trial(
    record: BenchRecord,
    index: int,
    repeat: int,
    image: Image.Image,
    method: str,
    settings: PipelineSettings,
) -> Trial:
    trial = Trial(record_index=index, repeat=repeat, method=method)
    try:
        plan = build_plan_for_method(image, method, settings, record.question, record.fixture)
        trial.estimated_tokens = plan.estimated_tokens
        provider_cfg = settings.provider_config()
        request = mllm.build_request(plan, record.question, provider_cfg)
        mock_cfg = None
        if provider_cfg.name == mllm.PROVIDER_MOCK:
            if record.mock is None:
                raise mllm.MissingGroundTruth(f"record {index} has no mock ground truth")
            mock_cfg = mllm.MockConfig(
                answer=record.answer,
                options=record.letters,
                target_box=tuple(record.mock["target_box"]),
                min_legible_px=float(record.mock["min_legible_px"]),
                seed=settings.seed,
                record_key=f"{record.image_path}:{method}:{repeat}",
                cost_model=settings.cost_model(),
            )
        response = mllm.send(request, provider_cfg, mock_config=mock_cfg)
        trial.answer = extract_option_letter(response.text, record.letters)
        trial.correct = trial.answer == record.answer
        trial.provider_tokens = response.prompt_tokens
        trial.latency_s = response.latency
    except ZoomerError as exc:
        trial.error = type(exc).__name__
        logger.warning("record %d method %s failed: %s", index, method, exc)
    return trial


def run_bench(
    dataset_path: str | Path,
    methods: list[str],
    settings: PipelineSettings,
) -> BenchReport:
    """Run every record x method x repeat, aggregate one row per method."""
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    records = load_dataset(dataset_path)

    results: dict[tuple[int, int, str], Trial] = {}
    results_lock = threading.Lock()

    def process_record(task: tuple[int, int]):
        index, repeat = task
        record = records[index]
        image = compose.load_image(record.image_path)
        for method in methods:
            trial = _run_trial(record, index, repeat, image, method, settings)
            with results_lock:
                results[(index, repeat, method)] = trial

    tasks = [(i, r) for r in range(settings.repeats) for i in range(len(records))]
    if settings.concurrency > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=settings.concurrency) as pool:
            list(pool.map(process_record, tasks))
    else:
        for task in tasks:
            process_record(task)

    trials = [
        results[(i, r, m)]
        for r in range(settings.repeats)
        for i in range(len(records))
        for m in methods
    ]

    method_rows = []
    for method in methods:
        mine = [t for t in trials if t.method == method]
        ok = [t for t in mine if t.error is None]
        n = len(ok)
        mean_tokens = sum(t.estimated_tokens for t in ok) / n if n else 0.0
        row = {
            "method": method,
            "trials": len(mine),
            "failures": len(mine) - n,
            "accuracy": sum(t.correct for t in ok) / n if n else 0.0,
            "mean_tokens": mean_tokens,
            "mean_latency_s": sum(t.latency_s for t in ok) / n if n else 0.0,
            "cost": mean_tokens * settings.unit_price_per_1k / 1000.0,
        }
        method_rows.append(row)

    failures = sum(1 for t in trials if t.error is not None)
    return BenchReport(
        methods=method_rows,
        trials=trials,
        unit_price_per_1k=settings.unit_price_per_1k,
        failure_fraction=failures / len(trials) if trials else 0.0,
    )


def render_report(report: BenchReport, out_path: str | Path | None = None) -> str:
    """Aligned text table; also writes the structured report when asked."""
    header = f"{'method':<16} {'accuracy':>9} {'tokens':>9} {'latency':>9} {'cost($)':>11}"
    lines = [header, "-" * len(header)]
    for row in report.methods:
        lines.append(
            f"{row['method']:<16} {row['accuracy']:>9.3f} {row['mean_tokens']:>9.1f} "
            f"{row['mean_latency_s']:>8.2f}s {row['cost']:>11.6f}"
        )
    table = "\n".join(lines)
    if out_path is not None:
        Path(out_path).write_text(
            json.dumps(report.to_dict(), indent=2, sort_keys=True), "utf-8"
        )
    return table
