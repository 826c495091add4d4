"""The three composition outputs: spatial composite, zoomed crop, global view.

A spatial composite copies the selected regions onto a blank canvas at
their original positions, crops to their hull, and resizes - so tiny
far-apart details end up large while their relative layout survives.
Run: python3 demos/03_composition.py
"""

from pathlib import Path

import numpy as np
from PIL import Image

from zoomer import Box, compose_spatial, crop_zoom, global_view

rng = np.random.default_rng(7)
image = Image.fromarray(rng.integers(0, 256, (1536, 2048, 3), dtype=np.uint8), "RGB")
regions = [Box(150, 200, 310, 360), Box(1600, 1100, 1800, 1300)]

out = Path("demos/out")
out.mkdir(parents=True, exist_ok=True)

composite = compose_spatial(image, regions)
print(f"spatial composite: {composite.width}x{composite.height}, "
      f"scale {composite.shrink_factor:.3f}")
for src, dst in composite.placements:
    print(f"  {src.as_tuple()} -> {tuple(round(v, 1) for v in dst.as_tuple())}")
composite.pixels.save(out / "spatial_composite.png")

zoom = crop_zoom(image, regions[0])
print(f"\nzoomed crop of region 1: {zoom.width}x{zoom.height}, "
      f"scale {zoom.shrink_factor:.2f} (a 160px object becomes ~{160 * zoom.shrink_factor:.0f}px)")
zoom.pixels.save(out / "zoomed_crop.png")

view = global_view(image)
print(f"\nglobal view: {view.width}x{view.height}, scale {view.shrink_factor:.3f}")
view.pixels.save(out / "global_view.png")

print(f"\nwrote three PNGs to {out}/")
