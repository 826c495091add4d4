"""Budget-aware planning: four strategies and deterministic degradation.

Watch a patches plan shed its lowest-score crops as the budget shrinks,
then the whole ladder bottom out at a low-detail single image.
Run: python3 demos/04_budget_planning.py
"""

import numpy as np
from PIL import Image

from zoomer import Box, ScoredBox, StrategyConfig, plan_prompt
from zoomer.errors import BudgetTooSmall

rng = np.random.default_rng(3)
image = Image.fromarray(rng.integers(0, 256, (1536, 2048, 3), dtype=np.uint8), "RGB")
regions = [
    ScoredBox(box=Box(i * 380 + 20, 100, i * 380 + 320, 400), score=0.97 - i * 0.03, phrase="item")
    for i in range(5)
]

print("strategy x unlimited budget:")
for strategy in ("local", "adaptive", "global", "patches"):
    plan = plan_prompt(image, regions, StrategyConfig(strategy=strategy))
    kinds = ", ".join(im.kind for im in plan.images)
    print(f"  {strategy:<9} {plan.estimated_tokens:>5} tokens  [{kinds}]")

print("\npatches under shrinking budgets:")
for b_total in (2000, 1300, 800, 500, 300, 120, 60):
    try:
        plan = plan_prompt(image, regions, StrategyConfig(strategy="patches", b_total=b_total))
    except BudgetTooSmall:
        print(f"  budget {b_total:>5}: BudgetTooSmall")
        continue
    print(
        f"  budget {b_total:>5}: {plan.estimated_tokens:>5} tokens, "
        f"{len(plan.images)} images, detail={plan.detail}, dropped={plan.dropped_regions}"
    )
