"""The frame interpolation network.

Two parts:

* a pyramid feature extractor producing per-frame features at scales
  1/2 ... 1/2^depth with widths 64/96/144/192 (each level = stride-2 conv +
  stride-1 conv, PReLU after both; 7x7 then 3x3 kernels in the first level,
  3x3 elsewhere), shared between the two input frames;
* a coarse-to-fine cascade of flow blocks.  Each block is six stride-1 3x3
  convolutions with PReLU (with an additive skip from the second conv's
  output to the last conv's input) followed by a 4x4 stride-2 transposed
  convolution, so a block's outputs land at twice its working resolution —
  exactly the resolution of the next-finer pyramid level.  A block emits a
  flow pair (2+2 channels) and guide logits (1 channel); the finest block
  adds a 3-channel image residual.

The top block sees the coarsest feature pair.  Every later block sees the
feature pair of its level plus (optionally) the two features warped by the
flows from above and their guide-blended fusion.  Upsampled coarser flows
are added to each block's flow output as a residual when
``use_flow_residual`` is set.  The final frame is the guide-blended pair of
warped input frames plus the residual map, clamped to [0, 1].

Parameters live in a flat name -> ndarray dict (the parameter store);
forward functions accept either raw arrays or autodiff tensors, so the same
code path serves inference, training and gradient verification.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from . import ops
from .errors import ConfigError, ContractViolation

DEPTH5_EXTRA_CHANNELS = 256


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and ablation switches for one network build."""

    depth: int = 4
    channels: tuple = (64, 96, 144, 192)
    first_layer_kernel: int = 7
    other_kernels: int = 3
    block_convs: int = 6
    deconv_kernel: int = 4
    use_frame_features: bool = True
    use_intermediate_feature: bool = True
    use_flow_residual: bool = True
    width_multiplier: float = 1.0

    def __post_init__(self):
        if not 1 <= self.depth <= 5:
            raise ConfigError(f"depth must be in [1, 5], got {self.depth}")
        chans = self.level_channels()
        if any(b <= a for a, b in zip(chans, chans[1:])):
            raise ConfigError(f"channels must be strictly increasing, got {chans}")
        if self.block_convs < 3:
            raise ConfigError("a flow block needs at least 3 convolutions")
        if self.width_multiplier <= 0:
            raise ConfigError("width_multiplier must be positive")
        if min(self.scaled_channels()) < 4:
            raise ConfigError(
                f"width_multiplier {self.width_multiplier} shrinks a level below 4 channels"
            )

    def level_channels(self) -> tuple:
        """Unscaled channel schedule, one entry per pyramid level."""
        chans = tuple(self.channels)
        if self.depth == 5 and len(chans) == 4:
            chans = chans + (DEPTH5_EXTRA_CHANNELS,)
        if self.depth > len(chans):
            raise ConfigError(f"depth {self.depth} exceeds channel schedule {chans}")
        return chans[: self.depth]

    def scaled_channels(self) -> tuple:
        return tuple(int(round(c * self.width_multiplier)) for c in self.level_channels())

    def block_hidden(self, level: int) -> int:
        # 2x the level width lands the default build near its published size
        return 2 * self.scaled_channels()[level]

    def block_in_channels(self, level: int) -> int:
        ch = self.scaled_channels()[level]
        if level == self.depth - 1:
            return 2 * ch
        per = 2 + (2 if self.use_frame_features else 0) + (1 if self.use_intermediate_feature else 0)
        return per * ch

    def block_out_channels(self, level: int) -> int:
        return 8 if level == 0 else 5


def config_fingerprint(cfg: ModelConfig) -> str:
    """Stable hex digest identifying an architecture."""
    blob = json.dumps(asdict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# parameter store


def param_spec(cfg: ModelConfig) -> dict:
    """Ordered name -> shape table of every parameter in the network."""
    spec: dict[str, tuple] = {}
    chans = cfg.scaled_channels()
    prev = 3
    for i, ch in enumerate(chans):
        k = cfg.first_layer_kernel if i == 0 else cfg.other_kernels
        spec[f"pyr.l{i}.conv0.w"] = (ch, prev, k, k)
        spec[f"pyr.l{i}.conv0.b"] = (ch,)
        spec[f"pyr.l{i}.conv0.a"] = (ch,)
        k2 = cfg.other_kernels
        spec[f"pyr.l{i}.conv1.w"] = (ch, ch, k2, k2)
        spec[f"pyr.l{i}.conv1.b"] = (ch,)
        spec[f"pyr.l{i}.conv1.a"] = (ch,)
        prev = ch
    for level in range(cfg.depth):
        hid = cfg.block_hidden(level)
        cin = cfg.block_in_channels(level)
        k = cfg.other_kernels
        for j in range(cfg.block_convs):
            w_in = cin if j == 0 else hid
            spec[f"block{level}.conv{j}.w"] = (hid, w_in, k, k)
            spec[f"block{level}.conv{j}.b"] = (hid,)
            spec[f"block{level}.conv{j}.a"] = (hid,)
        kd = cfg.deconv_kernel
        spec[f"block{level}.out.w"] = (hid, cfg.block_out_channels(level), kd, kd)
        spec[f"block{level}.out.b"] = (cfg.block_out_channels(level),)
    return spec


def parameter_count(cfg: ModelConfig) -> int:
    """Number of scalars in the parameter store for ``cfg``."""
    return sum(int(np.prod(s)) for s in param_spec(cfg).values())


def init_params(cfg: ModelConfig, seed: int, zero_flow: bool = True, dtype=np.float32) -> dict:
    """Random fan-in-scaled initialization suited to PReLU.

    With ``zero_flow`` the output deconvolution of every block starts at
    zero, so the untrained network reduces to the frame average (flows 0,
    guide 0.5, residual 0) — a stable starting identity for training.
    """
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_spec(cfg).items():
        if name.endswith(".a"):
            params[name] = np.full(shape, 0.25, dtype=dtype)
        elif name.endswith(".b"):
            params[name] = np.zeros(shape, dtype=dtype)
        elif name.endswith("out.w") and zero_flow:
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            fan_in = int(np.prod(shape[1:])) if len(shape) == 4 else int(shape[0])
            std = np.sqrt(2.0 / (fan_in * (1 + 0.25**2)))
            params[name] = (rng.standard_normal(shape) * std).astype(dtype)
    return params


def validate_params(params: dict, cfg: ModelConfig) -> None:
    """Check a parameter store against a config, naming the first mismatch."""
    spec = param_spec(cfg)
    for name, shape in spec.items():
        if name not in params:
            raise ContractViolation(f"parameter store is missing array {name!r}")
        got = tuple(params[name].shape)
        if got != shape:
            raise ContractViolation(
                f"parameter {name!r} has shape {got}, config expects {shape}"
            )
    extra = set(params) - set(spec)
    if extra:
        raise ContractViolation(f"parameter store has unexpected arrays: {sorted(extra)[:3]}")


# ---------------------------------------------------------------------------
# forward passes (batched internals; thin [C,H,W] wrappers at the bottom)


def _conv_block(x, params, prefix, stride, padding):
    y = ad.conv2d(x, params[f"{prefix}.w"], params[f"{prefix}.b"], stride, padding)
    return ad.prelu(y, params[f"{prefix}.a"])


def _pyramid(x, params, cfg: ModelConfig):
    levels = []
    cur = x
    for i in range(cfg.depth):
        k = cfg.first_layer_kernel if i == 0 else cfg.other_kernels
        cur = _conv_block(cur, params, f"pyr.l{i}.conv0", 2, k // 2)
        cur = _conv_block(cur, params, f"pyr.l{i}.conv1", 1, cfg.other_kernels // 2)
        levels.append(cur)
    return levels


def _flow_block(x, params, level, cfg: ModelConfig):
    skip = None
    cur = x
    for j in range(cfg.block_convs):
        if j == cfg.block_convs - 1 and skip is not None:
            cur = ad.add(cur, skip)
        cur = _conv_block(cur, params, f"block{level}.conv{j}", 1, cfg.other_kernels // 2)
        if j == 1:
            skip = cur
    out = ad.conv_transpose2d(
        cur, params[f"block{level}.out.w"], params[f"block{level}.out.b"], 2, 1
    )
    flow0 = out[:, 0:2]
    flow1 = out[:, 2:4]
    guide_logits = out[:, 4:5]
    residual = out[:, 5:8] if level == 0 else None
    return flow0, flow1, guide_logits, residual


@dataclass
class CascadeOutput:
    """Everything one interpolation forward pass produces.

    ``flows[i]`` is the (t->0, t->1) pair at scale 1/2^i — index 0 is full
    resolution; ``guides`` follows the same indexing.  ``residual`` exists
    at full resolution only.
    """

    frame: object
    flows: list = field(default_factory=list)
    guides: list = field(default_factory=list)
    residual: object = None


def _cascade(x0, x1, params, cfg: ModelConfig):
    p0 = _pyramid(x0, params, cfg)
    p1 = _pyramid(x1, params, cfg)
    flows = [None] * cfg.depth
    guides = [None] * cfg.depth
    prev = None  # (flow pair, guide) from the level above
    residual = None
    for level in range(cfg.depth - 1, -1, -1):
        if prev is None:
            inp = ad.concat([p0[level], p1[level]], axis=1)
        else:
            (f0, f1), guide = prev
            parts = [p0[level], p1[level]]
            w0 = ops.warp(p0[level], f0)
            w1 = ops.warp(p1[level], f1)
            if cfg.use_frame_features:
                parts += [w0, w1]
            if cfg.use_intermediate_feature:
                parts.append(ops.fuse(w0, w1, guide))
            inp = ad.concat(parts, axis=1)
        flow0, flow1, logits, residual = _flow_block(inp, params, level, cfg)
        if cfg.use_flow_residual and prev is not None:
            flow0 = ad.add(flow0, ops.rescale_flow(prev[0][0], 2.0))
            flow1 = ad.add(flow1, ops.rescale_flow(prev[0][1], 2.0))
        flows[level] = (flow0, flow1)
        guides[level] = ad.sigmoid(logits)
        prev = (flows[level], guides[level])
    it0 = ops.warp(x0, flows[0][0])
    it1 = ops.warp(x1, flows[0][1])
    frame = ad.clip01(ad.add(ops.fuse(it0, it1, guides[0]), residual))
    return CascadeOutput(frame=frame, flows=flows, guides=guides, residual=residual)


def padding_for(h: int, w: int, depth: int) -> tuple:
    """Bottom/right replicate padding making both extents divisible."""
    m = 2**depth
    return (-h) % m, (-w) % m


def cascade_forward_batch(x0, x1, params, cfg: ModelConfig) -> CascadeOutput:
    """Batched forward on ``[N,3,H,W]`` inputs divisible by ``2**depth``.

    Tensor-in/Tensor-out; the training loop and gradient checks call this
    directly.  No padding is applied here.
    """
    x0, x1 = ad.as_tensor(x0), ad.as_tensor(x1)
    if x0.shape != x1.shape:
        raise ContractViolation(f"frame shapes differ: {x0.shape} vs {x1.shape}")
    n, c, h, w = x0.shape
    m = 2**cfg.depth
    if h % m or w % m:
        raise ContractViolation(f"input {h}x{w} not divisible by 2^depth = {m}; pad first")
    return _cascade(x0, x1, params, cfg)


def cascade_forward(i0, i1, params, cfg: ModelConfig) -> CascadeOutput:
    """Interpolate the midpoint frame of a single ``[3,H,W]`` pair.

    Inputs of awkward sizes are replicate-padded to divisibility by
    ``2**depth`` and the full-resolution outputs cropped back; per-level
    flows then cover the padded canvas.  Returns plain ndarrays.
    """
    i0 = np.asarray(i0)
    i1 = np.asarray(i1)
    if i0.shape != i1.shape or i0.ndim != 3:
        raise ContractViolation(f"expected two equal [3,H,W] frames, got {i0.shape} / {i1.shape}")
    h, w = i0.shape[1:]
    ph, pw = padding_for(h, w, cfg.depth)
    x0 = _pad_bottom_right(i0[None], ph, pw)
    x1 = _pad_bottom_right(i1[None], ph, pw)
    out = cascade_forward_batch(x0, x1, params, cfg)
    frame = out.frame.data[0, :, :h, :w]
    residual = out.residual.data[0, :, :h, :w]
    flows = [(f0.data[0], f1.data[0]) for f0, f1 in out.flows]
    guides = [g.data[0] for g in out.guides]
    if ph or pw:
        flows[0] = (flows[0][0][:, :h, :w], flows[0][1][:, :h, :w])
        guides[0] = guides[0][:, :h, :w]
    return CascadeOutput(frame=frame, flows=flows, guides=guides, residual=residual)


def _pad_bottom_right(x: np.ndarray, ph: int, pw: int) -> np.ndarray:
    # inference-only path; training inputs are sized to divide 2^depth
    if not ph and not pw:
        return x
    h, w = x.shape[2:]
    iy = np.clip(np.arange(h + ph), 0, h - 1)
    ix = np.clip(np.arange(w + pw), 0, w - 1)
    return x[:, :, iy[:, None], ix[None, :]]


def pyramid_features(frame, params, cfg: ModelConfig) -> list:
    """Feature pyramid of one ``[3,H,W]`` frame (sizes must divide 2^depth)."""
    frame = np.asarray(frame)
    if frame.ndim != 3:
        raise ContractViolation(f"expected a [3,H,W] frame, got shape {frame.shape}")
    h, w = frame.shape[1:]
    m = 2**cfg.depth
    if h % m or w % m:
        raise ContractViolation(f"frame {h}x{w} not divisible by 2^depth = {m}; pad first")
    return [t.data[0] for t in _pyramid(ad.Tensor(frame[None]), params, cfg)]


def flow_block_forward(inputs, params, level: int, cfg: ModelConfig):
    """Run one cascade block on a ``[C,h,w]`` input at its working resolution.

    Returns ``((flow_t0, flow_t1), guide_logits, residual_or_None)`` at
    2x the input resolution.
    """
    inputs = np.asarray(inputs)
    expected = cfg.block_in_channels(level)
    if inputs.ndim != 3 or inputs.shape[0] != expected:
        raise ContractViolation(
            f"block {level} expects {expected} input channels "
            f"(features pair{' + warped pair' if cfg.use_frame_features else ''}"
            f"{' + fused feature' if cfg.use_intermediate_feature else ''}), "
            f"got shape {inputs.shape}"
        )
    f0, f1, logits, res = _flow_block(ad.Tensor(inputs[None]), params, level, cfg)
    return (f0.data[0], f1.data[0]), logits.data[0], (None if res is None else res.data[0])
