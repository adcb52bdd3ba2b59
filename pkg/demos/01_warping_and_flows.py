"""Backward warping, flow rescaling and guide-map fusion on tiny arrays.

Walks through the core tensor ops with numbers small enough to verify by
hand: what a half-pixel shift does to a row, why resizing a flow field
must also rescale its values, and how a guide map blends two candidates.

Run: python3 demos/01_warping_and_flows.py
"""

import numpy as np

from midflow import fuse, rescale_flow, resize_bilinear, spatial_gradient_l1, warp

print("== backward warping ==")
row = np.array([[[0.0, 1.0, 2.0, 3.0]]])  # one channel, one row
flow = np.zeros((2, 1, 4))
flow[0] = 0.5  # shift sampling half a pixel to the right
print("source row:       ", row[0, 0])
print("warp by (+0.5, 0):", warp(row, flow)[0, 0])
print("(each output pixel samples between its two right neighbours;")
print(" the last one clamps at the border and keeps 3.0)")

flow[0] = 0.0
print("zero flow is the identity:", np.array_equal(warp(row, flow), row))

print()
print("== flow rescaling ==")
small = np.stack([np.full((4, 4), 1.0), np.full((4, 4), 2.0)])
big = rescale_flow(small, 2.0)
print("a constant (1, 2) px flow at 4x4, upsampled 2x, becomes", (float(big[0, 0, 0]), float(big[1, 0, 0])))
print("at 8x8 — displacements are measured in the NEW resolution's pixels.")

print()
print("== guide-map fusion ==")
a = np.full((1, 2, 2), 0.2)
b = np.full((1, 2, 2), 0.6)
for g in (0.0, 0.5, 1.0):
    guide = np.full((1, 2, 2), g)
    print(f"guide={g}: fuse(a=0.2, b=0.6) ->", fuse(a, b, guide)[0, 0, 0])

print()
print("== flow smoothness ==")
ys, xs = np.meshgrid(np.arange(6.0), np.arange(6.0), indexing="ij")
ramp = np.stack([xs, np.zeros_like(xs)])
flat = np.zeros_like(ramp)
print("constant flow :", spatial_gradient_l1(flat))
print("unit x-ramp   :", spatial_gradient_l1(ramp), "(one of four mean-|difference| terms is 1)")

print()
print("== resizing convention ==")
x = np.array([[[0.0, 1.0]]])
print("[0, 1] upsampled 2x ->", resize_bilinear(x, 2.0)[0, 0])
print("(half-pixel centers: border samples clamp, interior interpolates)")
