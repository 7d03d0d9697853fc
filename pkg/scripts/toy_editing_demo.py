#!/usr/bin/env python3
"""Toy editing run at several background-preservation weights.

Inverts a rendered "scene", optimizes adapters toward a different "subject",
and reports how the masked-background MSE of the final frame responds to the
background weight.
"""

import argparse
from pathlib import Path

import numpy as np

from subjecttune import (
    EditJob,
    InversionConfig,
    LossWeights,
    OptimizationConfig,
    ReferenceSubject,
    ToyBackbone,
    run_edit,
)
from subjecttune.extractors import flatten_stub
from subjecttune.imaging import to_numpy_image
from subjecttune.masks import box_to_mask


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="demo-editing", type=Path)
    parser.add_argument("--weights", default="0,10,100")
    parser.add_argument("--steps", default=40, type=int)
    args = parser.parse_args()

    side = 16
    backbone = ToyBackbone(resolution=(side, side))
    scene = to_numpy_image(backbone.render("a cat on a sofa", seed=55))
    subject = ReferenceSubject(
        image=to_numpy_image(backbone.render("another cat", seed=77)), class_label="cat"
    )
    mask = box_to_mask((side, side), (4, 4, 12, 12))

    for weight in (float(w) for w in args.weights.split(",")):
        job = EditJob(
            input_image=scene,
            subject=subject,
            config=OptimizationConfig(
                seed=3,
                learning_rate=0.02,
                max_iterations=args.steps,
                rank=4,
                loss_weights=LossWeights(1.0, 1.0, weight),
            ),
            backbone_id="toy",
            inversion=InversionConfig(strength=0.75, renoise_iterations=8),
            mask_source="user",
            user_mask=mask,
        )
        extractors = (flatten_stub("demo-ed-a", (side, side)), flatten_stub("demo-ed-b", (side, side)))
        result = run_edit(
            job, backbone=backbone, extractors=extractors, session_dir=args.out / f"c_{weight:g}"
        )
        final = result.run.frames[-1].image.astype(np.float64)
        recon = result.reconstruction.astype(np.float64)
        bg_mse = float(((final - recon) ** 2)[~mask].mean())
        print(
            f"c={weight:>6g}: background MSE {bg_mse:.2e}, "
            f"best loss {result.run.best_loss:.4f}, stopped {result.run.decision.reason.value}"
        )


if __name__ == "__main__":
    main()
