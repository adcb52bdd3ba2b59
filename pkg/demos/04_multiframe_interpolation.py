"""Recursive multi-frame interpolation: x3 and x5 from a single pair.

The network only predicts midpoints, so other timesteps come from feeding
generated frames back in: 0.25 from (frame0, mid), 0.125 from (frame0,
0.25-frame), 0.625 from (mid, 0.75-frame).  That recursion yields the
dyadic x5 set {0.125, 0.25, 0.5, 0.625, 0.75}.

Uses the checkpoint from demo 03 when present, otherwise a zero-flow
model (which degrades gracefully to repeated averaging).

Run: python3 demos/04_multiframe_interpolation.py   (writes demos/out/multiframe/)
"""

from pathlib import Path

from midflow import ModelConfig, init_params, multiframe, overfit_pack
from midflow.fileio import write_image
from midflow.train import checkpoint_load

out = Path(__file__).parent / "out" / "multiframe"
out.mkdir(parents=True, exist_ok=True)

ckpt = Path(__file__).parent / "out" / "overfit" / "ckpt_final.zip"
if ckpt.exists():
    params, _, step, cfg = checkpoint_load(ckpt)
    print(f"using the demo-03 checkpoint ({step} steps)")
else:
    cfg = ModelConfig(width_multiplier=0.125)
    params = init_params(cfg, seed=0, zero_flow=True)
    print("no trained checkpoint found; using the zero-flow model "
          "(run demo 03 first for real motion)")

tri = overfit_pack()[0]
write_image(tri.i0, out / "input_0.png")
write_image(tri.i1, out / "input_1.png")

for k in (3, 5):
    frames = multiframe(tri.i0, tri.i1, params, cfg, k=k)
    names = [f"t{t:.3f}" for t, _ in frames]
    print(f"x{k} timesteps: {names}")
    for t, frame in frames:
        write_image(frame, out / f"x{k}_t{t:.3f}.png")

print(f"frames written to {out}")
