"""How tiled image pricing works, and what resizing buys you.

Vision APIs bill a base amount plus a fixed cost per 512x512 tile after
normalizing the image (long side <= 2048, then short side <= 768).
Run: python3 demos/01_token_costs.py
"""

from zoomer import TokenCostModel, estimate_image_tokens

model = TokenCostModel()

print("image size        high-detail tokens   low-detail tokens")
for w, h in [(256, 256), (512, 512), (1024, 768), (2048, 1536), (4096, 3072), (4240, 2832)]:
    high = estimate_image_tokens(w, h, model)
    low = estimate_image_tokens(w, h, model, detail="low")
    print(f"{w:>5} x {h:<5}      {high:>14}       {low:>13}")

print()
print("A 4240x2832 photo normalizes to 1150x768 -> 3x2 tiles -> "
      f"{estimate_image_tokens(4240, 2832, model)} tokens.")
print("Downscaling the same photo to one 512px tile costs "
      f"{estimate_image_tokens(512, 342, model)} tokens - but small details vanish.")
print()
print("Some providers add a constant per image; the model exposes it:")
with_overhead = TokenCostModel(per_image_overhead=15)
print(f"  512x512 with 15-token overhead -> {estimate_image_tokens(512, 512, with_overhead)}")
