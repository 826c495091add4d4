"""Tiled image token accounting and budget-aware prompt planning.

Vision-enabled chat APIs bill images by resizing them into 512x512
tiles: the image is scaled so its long side fits ``max_long_side``, then
so its short side fits ``max_short_side`` (each only if exceeded, aspect
preserved), and each resulting tile costs ``tokens_per_tile`` on top of
a fixed base. Low-detail requests cost a flat amount regardless of size.

``plan_prompt`` turns post-NMS regions into an ordered image list for
one of four strategies and enforces a user token budget by degrading
deterministically: patches drop their lowest-score crops, global falls
back to adaptive then local, and a final retry switches to low detail.
Strict mode disables degradation and errors instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil

from PIL import Image

from .compose import ComposeConfig, ComposedImage, compose_spatial, crop_zoom, global_view
from .errors import BudgetTooSmall
from .geometry import Box, ScoredBox, union_area

DETAIL_HIGH = "high"
DETAIL_LOW = "low"

STRATEGY_LOCAL = "local"
STRATEGY_ADAPTIVE = "adaptive"
STRATEGY_GLOBAL = "global"
STRATEGY_PATCHES = "patches"
STRATEGIES = (STRATEGY_LOCAL, STRATEGY_ADAPTIVE, STRATEGY_GLOBAL, STRATEGY_PATCHES)


@dataclass(frozen=True)
class TokenCostModel:
    tile_px: int = 512
    tokens_per_tile: int = 170
    base_tokens: int = 85
    max_long_side: int = 2048
    max_short_side: int = 768
    per_image_overhead: int = 0
    low_detail_tokens: int = 85

    def __post_init__(self):
        positive = (
            self.tile_px,
            self.tokens_per_tile,
            self.base_tokens,
            self.max_long_side,
            self.max_short_side,
            self.low_detail_tokens,
        )
        if any(v <= 0 for v in positive):
            raise ValueError("cost model parameters must be positive")
        if self.per_image_overhead < 0:
            raise ValueError("per_image_overhead must be >= 0")


@dataclass(frozen=True)
class StrategyConfig:
    strategy: str = STRATEGY_LOCAL
    b_total: int | None = None  # None = unlimited
    t_adaptive: float = 0.5
    max_patches: int = 8
    detail: str = DETAIL_HIGH
    strict: bool = False  # True: error instead of degrading

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy: {self.strategy!r}")
        if self.b_total is not None and self.b_total <= 0:
            raise ValueError("b_total must be positive when present")
        if not 0.0 < self.t_adaptive <= 1.0:
            raise ValueError("t_adaptive must be in (0, 1]")
        if self.max_patches < 1:
            raise ValueError("max_patches must be >= 1")
        if self.detail not in (DETAIL_HIGH, DETAIL_LOW):
            raise ValueError(f"unknown detail level: {self.detail!r}")


@dataclass
class StrategyPlan:
    strategy: str
    images: list[ComposedImage]
    estimated_tokens: int
    detail: str = DETAIL_HIGH
    fallback: bool = False
    dropped_regions: int = 0
    coverage: float = 0.0


def normalized_dims(width: int, height: int, model: TokenCostModel) -> tuple[int, int]:
    """Dimensions after the provider's high-detail resize rules."""
    w, h = width, height
    if max(w, h) > model.max_long_side:
        f = model.max_long_side / max(w, h)
        w, h = round(w * f), round(h * f)
    if min(w, h) > model.max_short_side:
        f = model.max_short_side / min(w, h)
        w, h = round(w * f), round(h * f)
    return max(1, w), max(1, h)


def estimate_image_tokens(
    width: int,
    height: int,
    model: TokenCostModel | None = None,
    detail: str = DETAIL_HIGH,
) -> int:
    """Token cost of one image under the tiled pricing model."""
    model = model or TokenCostModel()
    if width <= 0 or height <= 0:
        raise ValueError("image dimensions must be positive")
    if detail == DETAIL_LOW:
        return model.low_detail_tokens + model.per_image_overhead
    w, h = normalized_dims(width, height, model)
    tiles = ceil(w / model.tile_px) * ceil(h / model.tile_px)
    return model.base_tokens + model.tokens_per_tile * tiles + model.per_image_overhead


def coverage_fraction(boxes: list[Box], width: int, height: int) -> float:
    """Union area of the regions over the image area, in [0, 1]."""
    if width <= 0 or height <= 0:
        raise ValueError("image dimensions must be positive")
    if not boxes:
        return 0.0
    return min(1.0, union_area(boxes) / (width * height))


def plan_tokens(images: list[ComposedImage], model: TokenCostModel, detail: str) -> int:
    return sum(estimate_image_tokens(im.width, im.height, model, detail) for im in images)


def _ranked(regions: list[ScoredBox]) -> list[ScoredBox]:
    return sorted(
        regions,
        key=lambda sb: (-sb.score, -sb.box.area, sb.box.x0, sb.box.y0, sb.box.x1, sb.box.y1),
    )


class _PlanPieces:
    """Lazily composed building blocks shared across degradation candidates."""

    def __init__(self, image: Image.Image, regions: list[ScoredBox], compose_cfg: ComposeConfig):
        self.image = image
        self.regions = regions
        self.cfg = compose_cfg
        self._spatial: ComposedImage | None = None
        self._global: ComposedImage | None = None
        self._crops: list[ComposedImage] = []

    def spatial(self) -> ComposedImage:
        if self._spatial is None:
            self._spatial = compose_spatial(self.image, self.regions, self.cfg)
        return self._spatial

    def global_view(self) -> ComposedImage:
        if self._global is None:
            self._global = global_view(self.image, self.cfg)
        return self._global

    def crops(self, n: int) -> list[ComposedImage]:
        while len(self._crops) < n:
            region = self.regions[len(self._crops)]
            self._crops.append(crop_zoom(self.image, region.box, self.cfg))
        return self._crops[:n]


def _candidate_images(
    strategy: str, pieces: _PlanPieces, kept_crops: int, coverage: float, t_adaptive: float
) -> list[ComposedImage]:
    if strategy == STRATEGY_LOCAL:
        return [pieces.spatial()]
    if strategy == STRATEGY_ADAPTIVE:
        images = [pieces.spatial()]
        if coverage < t_adaptive:
            images.append(pieces.global_view())
        return images
    if strategy == STRATEGY_GLOBAL:
        return [pieces.spatial(), pieces.global_view()]
    # patches: zoomed crops by descending score, global view last
    return pieces.crops(kept_crops) + [pieces.global_view()]


def _degradation_ladder(cfg: StrategyConfig, n_regions: int) -> list[tuple[str, str, int]]:
    """Candidate (strategy, detail, kept_crops) triples, best first."""
    details = [cfg.detail] + ([DETAIL_LOW] if cfg.detail == DETAIL_HIGH else [])
    ladder: list[tuple[str, str, int]] = []
    n_crops = min(n_regions, cfg.max_patches)
    for detail in details:
        if cfg.strategy == STRATEGY_PATCHES:
            ladder.extend((STRATEGY_PATCHES, detail, k) for k in range(n_crops, -1, -1))
        elif cfg.strategy == STRATEGY_GLOBAL:
            ladder.extend(
                [(STRATEGY_GLOBAL, detail, 0), (STRATEGY_ADAPTIVE, detail, 0), (STRATEGY_LOCAL, detail, 0)]
            )
        elif cfg.strategy == STRATEGY_ADAPTIVE:
            ladder.extend([(STRATEGY_ADAPTIVE, detail, 0), (STRATEGY_LOCAL, detail, 0)])
        else:
            ladder.append((STRATEGY_LOCAL, detail, 0))
    return ladder


def plan_prompt(
    image: Image.Image,
    regions: list[ScoredBox],
    cfg: StrategyConfig | None = None,
    compose_cfg: ComposeConfig | None = None,
    model: TokenCostModel | None = None,
) -> StrategyPlan:
    """Build the ordered image list for a strategy under the token budget.

    Empty regions never fail the query: the plan falls back to a bare
    global view with ``fallback`` set. With a budget set, the returned
    plan always satisfies ``estimated_tokens <= b_total`` or the call
    raises ``BudgetTooSmall``.
    """
    cfg = cfg or StrategyConfig()
    compose_cfg = compose_cfg or ComposeConfig()
    model = model or TokenCostModel()
    w, h = image.size
    ranked = _ranked(regions)
    coverage = coverage_fraction([r.box for r in ranked], w, h)

    if not ranked:
        return _fit_fallback(image, cfg, compose_cfg, model, coverage)

    pieces = _PlanPieces(image, ranked, compose_cfg)
    ladder = _degradation_ladder(cfg, len(ranked))
    if cfg.strict:
        # no strategy switching or low-detail retry; patches keeps its
        # budget-driven crop count, which is the strategy itself
        ladder = [
            (s, d, k) for s, d, k in ladder if s == cfg.strategy and d == cfg.detail
        ]

    for strategy, detail, kept in ladder:
        images = _candidate_images(strategy, pieces, kept, coverage, cfg.t_adaptive)
        tokens = plan_tokens(images, model, detail)
        if cfg.b_total is None or tokens <= cfg.b_total:
            dropped = len(ranked) - kept if cfg.strategy == STRATEGY_PATCHES else 0
            return StrategyPlan(
                strategy=strategy,
                images=images,
                estimated_tokens=tokens,
                detail=detail,
                fallback=False,
                dropped_regions=dropped,
                coverage=coverage,
            )
    raise BudgetTooSmall(
        f"no {cfg.strategy} plan fits within {cfg.b_total} tokens"
    )


def _fit_fallback(
    image: Image.Image,
    cfg: StrategyConfig,
    compose_cfg: ComposeConfig,
    model: TokenCostModel,
    coverage: float,
) -> StrategyPlan:
    view = global_view(image, compose_cfg)
    for detail in [cfg.detail] + ([DETAIL_LOW] if cfg.detail == DETAIL_HIGH else []):
        tokens = plan_tokens([view], model, detail)
        if cfg.b_total is None or tokens <= cfg.b_total:
            return StrategyPlan(
                strategy=cfg.strategy,
                images=[view],
                estimated_tokens=tokens,
                detail=detail,
                fallback=True,
                dropped_regions=0,
                coverage=coverage,
            )
    raise BudgetTooSmall(f"even a low-detail global view exceeds {cfg.b_total} tokens")


def plan_summary(plan: StrategyPlan, model: TokenCostModel | None = None) -> dict:
    """Serializable description of a plan (written next to composed images)."""
    model = model or TokenCostModel()
    return {
        "strategy": plan.strategy,
        "detail": plan.detail,
        "estimated_tokens": plan.estimated_tokens,
        "coverage_fraction": plan.coverage,
        "dropped_regions": plan.dropped_regions,
        "fallback": plan.fallback,
        "images": [
            {
                "index": i,
                "kind": im.kind,
                "width": im.width,
                "height": im.height,
                "shrink_factor": im.shrink_factor,
                "tokens": estimate_image_tokens(im.width, im.height, model, plan.detail),
            }
            for i, im in enumerate(plan.images)
        ],
    }
