"""Token-budget-aware visual prompting for black-box multimodal LLM APIs.

Find prompt-relevant image regions at multiple scales, compose
emphasized images that preserve spatial layout, and plan prompts that
keep the most detail a token budget allows.
"""

from .budget import (
    StrategyConfig,
    StrategyPlan,
    TokenCostModel,
    coverage_fraction,
    estimate_image_tokens,
    plan_prompt,
)
from .compose import (
    ComposeConfig,
    ComposedImage,
    compose_spatial,
    crop_zoom,
    global_view,
    load_image,
    render_overlay,
)
from .emphasizer import (
    DetectorBinding,
    EmphasisConfig,
    detect,
    detect_default,
    divide_into_patches,
    multi_resolution_detect,
    multi_scale_detect,
    run_emphasis,
)
from .geometry import Box, PatchRect, ScoredBox, clip, iou, nms_filter, to_global, union_area
from .keyterms import KeyTermSet, extract_key_terms, split_prompt_sections
from .mllm import ChatRequest, ChatResponse, MockConfig, ProviderConfig, build_request, send

__version__ = "0.1.0"

__all__ = [
    "Box",
    "ChatRequest",
    "ChatResponse",
    "ComposeConfig",
    "ComposedImage",
    "DetectorBinding",
    "EmphasisConfig",
    "KeyTermSet",
    "MockConfig",
    "PatchRect",
    "ProviderConfig",
    "ScoredBox",
    "StrategyConfig",
    "StrategyPlan",
    "TokenCostModel",
    "build_request",
    "clip",
    "compose_spatial",
    "coverage_fraction",
    "crop_zoom",
    "detect",
    "detect_default",
    "divide_into_patches",
    "estimate_image_tokens",
    "extract_key_terms",
    "global_view",
    "iou",
    "load_image",
    "multi_resolution_detect",
    "multi_scale_detect",
    "nms_filter",
    "plan_prompt",
    "render_overlay",
    "run_emphasis",
    "send",
    "split_prompt_sections",
    "to_global",
    "union_area",
]
