"""Quality metrics and a desk-scale ablation table.

First scores the demo-03 checkpoint on fresh synthetic scenes (PSNR /
SSIM / interpolation error, plus flow EPE since the scenes carry exact
flows).  Then runs a miniature ablation: each variant disables one
component — the warped-feature inputs, the cross-level flow residual, or
the flow-matching loss — and trains briefly with shared seeds.

The ablation trains several small models; expect a few minutes.

Run: python3 demos/05_metrics_and_ablation.py [steps]
"""

import sys
from pathlib import Path

from midflow import (
    LossWeights,
    ModelConfig,
    SceneDistribution,
    TrainConfig,
    ablation_suite,
    dataset,
    evaluate,
)
from midflow.train import checkpoint_load

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 150

ckpt = Path(__file__).parent / "out" / "overfit" / "ckpt_final.zip"
if ckpt.exists():
    params, _, _, cfg = checkpoint_load(ckpt)
    fresh = dataset(seed=555, n=6)
    report = evaluate(fresh, params, cfg)
    print("== demo-03 checkpoint on 6 fresh scenes ==")
    print(report.table())
    print()
else:
    print("(run demo 03 first to also see a trained-checkpoint evaluation)\n")

print(f"== ablation at desk scale ({steps} steps per variant) ==")
dist = SceneDistribution(canvas=(32, 32), sprite_count=(2, 3), size_range=(8.0, 16.0),
                         speed_max=8.0, accel_max=8.0)
data = dataset(seed=88, n=8, dist=dist)
model_cfg = ModelConfig(width_multiplier=0.125)
train_cfg = TrainConfig(
    epochs=10_000, batch_size=4, weights=LossWeights(), max_steps=steps,
    eval_every=0, holdout_fraction=0.0,
)
report = ablation_suite(
    model_cfg, train_cfg, data, seeds=(0, 1),
    depths=(2, 4),
    variants=("full", "no_warped_features", "no_flow_residual", "no_flow_loss"),
)
print(report.table())
print()
print("rows: component removals plus cascade-depth sweep; columns are means over seeds.")
