"""Fully offline end-to-end run: synthesize a needle benchmark, then
compare prompt-processing methods with the fixture detector and the
legibility-gated mock provider.

The mock answers correctly only when some supplied image renders the
hidden glyph large enough to read - resizing a 4K image into one tile
destroys it, while the emphasized composite keeps it legible at a
fraction of the tokens.
Run: python3 demos/05_end_to_end_offline.py   (~30 s)
"""

import tempfile

from zoomer.harness import PipelineSettings, render_report, run_bench
from zoomer.synth import synthesize_dataset

with tempfile.TemporaryDirectory() as td:
    print("generating 12 images (4096x3072, 48px glyph)...")
    dataset = synthesize_dataset(
        12, 4096, 3072, glyph_px=48, out_dir=td, seed=7, min_legible_px=32.0
    )
    settings = PipelineSettings(seed=7, concurrency=4, out_dir=td)
    report = run_bench(dataset, ["raw", "resize", "low_detail", "zoomer_local"], settings)
    print()
    print(render_report(report))
    print()
    raw, resize, low, local = report.methods
    print(f"emphasized composite: {local['accuracy']:.0%} accuracy at "
          f"{local['mean_tokens']:.0f} tokens/request")
    print(f"raw 4K upload:        {raw['accuracy']:.0%} accuracy at "
          f"{raw['mean_tokens']:.0f} tokens/request")
