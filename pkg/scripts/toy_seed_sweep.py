#!/usr/bin/env python3
"""Stability probe: the same toy generation job across eight seeds."""

import argparse
from pathlib import Path

from subjecttune import (
    GenerationJob,
    OptimizationConfig,
    ReferenceSubject,
    ToyBackbone,
    seed_sweep,
)
from subjecttune.extractors import flatten_stub
from subjecttune.imaging import save_png, to_numpy_image


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="demo-sweep", type=Path)
    parser.add_argument("--seeds", default="10,20,30,35,42,50,100,120")
    parser.add_argument("--workers", default=2, type=int)
    args = parser.parse_args()

    side = 16
    backbone = ToyBackbone(resolution=(side, side))
    subject = ReferenceSubject(
        image=to_numpy_image(backbone.render("the reference subject", seed=97)),
        class_label="dog",
    )
    job = GenerationJob(
        subject=subject,
        target_prompts=["the subject in the beach"],
        config=OptimizationConfig(learning_rate=0.02, max_iterations=30, rank=4),
        backbone_id="toy",
    )
    extractors = (flatten_stub("sweep-a", (side, side)), flatten_stub("sweep-b", (side, side)))
    seeds = [int(s) for s in args.seeds.split(",")]

    results, errors, grid = seed_sweep(
        job,
        seeds,
        workers=args.workers,
        session_root=args.out,
        backbone=backbone,
        extractors=extractors,
    )
    for seed in seeds:
        if seed in results:
            run = results[seed].run
            print(f"seed {seed:>4}: best loss {run.best_loss:.4f} at frame {run.best_index}")
        else:
            print(f"seed {seed:>4}: FAILED ({errors[seed]})")
    if grid is not None:
        save_png(args.out / "grid.png", grid)
        print(f"grid written to {args.out / 'grid.png'}")


if __name__ == "__main__":
    main()
