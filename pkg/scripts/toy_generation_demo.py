#!/usr/bin/env python3
"""End-to-end toy generation run: optimize adapters toward a rendered
"subject", then render two target prompts with the frozen adapters.

Writes frames, loss log, checkpoint, and renders under --out.
"""

import argparse
from pathlib import Path

from subjecttune import (
    GenerationJob,
    OptimizationConfig,
    ReferenceSubject,
    ToyBackbone,
    run_generation,
)
from subjecttune.extractors import flatten_stub
from subjecttune.imaging import to_numpy_image


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="demo-generation", type=Path)
    parser.add_argument("--seed", default=3, type=int)
    parser.add_argument("--steps", default=60, type=int)
    parser.add_argument("--resolution", default=16, type=int)
    args = parser.parse_args()

    side = args.resolution
    backbone = ToyBackbone(resolution=(side, side))
    subject = ReferenceSubject(
        image=to_numpy_image(backbone.render("the reference subject", seed=97)),
        class_label="dog",
    )
    job = GenerationJob(
        subject=subject,
        target_prompts=["the subject in paris", "the subject on a wooden deck"],
        config=OptimizationConfig(
            seed=args.seed, learning_rate=0.02, max_iterations=args.steps, rank=4
        ),
        backbone_id="toy",
    )
    extractors = (flatten_stub("demo-a", (side, side)), flatten_stub("demo-b", (side, side)))

    result = run_generation(job, backbone=backbone, extractors=extractors, session_dir=args.out)
    history = result.run.loss_history
    print(f"stopped: {result.run.decision.reason.value} at step {result.run.decision.stop_index}")
    print(f"loss: {history[0]:.4f} -> best {result.run.best_loss:.4f} (frame {result.run.best_index})")
    print(f"artifacts in {args.out}/")


if __name__ == "__main__":
    main()
