"""Deterministic training loop: AdamW, cosine-annealed learning rate,
checkpointing, per-step metric log.

The recipe mirrors the published one at configurable scale: decoupled
weight decay 1e-4, batch size 6, learning rate annealed 3e-4 -> 3e-5 with
a half-cosine over the total step count.  Desk-scale runs shrink width,
resolution and steps, not the recipe.

Everything random flows from the config seed; batch order is a pure
function of (seed, epoch), so resuming from a checkpoint at step k
bit-exactly reproduces an uninterrupted run.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import CheckpointError, ConfigError, ContractViolation, DataError, TrainingDiverged
from .fileio import read_checkpoint, write_checkpoint
from .losses import LossWeights, build_teacher_multiscale, total_loss
from .metrics import epe, psnr
from .model import (
    ModelConfig,
    cascade_forward_batch,
    config_fingerprint,
    init_params,
    param_spec,
)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    batch_size: int = 6
    lr_start: float = 3e-4
    lr_end: float = 3e-5
    weight_decay: float = 1e-4
    seed: int = 0
    weights: LossWeights = LossWeights()
    max_steps: int | None = None
    checkpoint_every: int = 0  # 0: only the final checkpoint
    eval_every: int = 50
    grad_clip: float | None = None  # global-norm clip; off by default
    zero_flow_init: bool = True
    holdout_fraction: float = 0.1

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not (self.lr_start >= self.lr_end > 0):
            raise ConfigError(
                f"need lr_start >= lr_end > 0, got {self.lr_start} / {self.lr_end}"
            )


def lr_at(step: int, total_steps: int, cfg: TrainConfig) -> float:
    """Cosine-annealed learning rate at ``step`` of ``total_steps``."""
    if not 0 <= step <= total_steps:
        raise ContractViolation(f"step {step} outside [0, {total_steps}]")
    cos = math.cos(math.pi * step / total_steps)
    return cfg.lr_end + 0.5 * (cfg.lr_start - cfg.lr_end) * (1.0 + cos)


class AdamW:
    """Adaptive-moment optimizer with lr-scaled decoupled weight decay.

    Decay touches convolution/deconvolution kernels only (names ending in
    ``.w``), not biases or PReLU slopes.
    """

    BETA1 = 0.9
    BETA2 = 0.999
    EPS = 1e-8

    def __init__(self, params: dict, weight_decay: float):
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict, lr: float) -> None:
        self.t += 1
        b1c = 1.0 - self.BETA1**self.t
        b2c = 1.0 - self.BETA2**self.t
        for k, p in params.items():
            g = grads[k].astype(p.dtype, copy=False)
            m = self.m[k]
            v = self.v[k]
            m += (1.0 - self.BETA1) * (g - m)
            v += (1.0 - self.BETA2) * (g * g - v)
            update = (m / b1c) / (np.sqrt(v / b2c) + self.EPS)
            if self.weight_decay and k.endswith(".w"):
                update = update + self.weight_decay * p
            p -= (lr * update).astype(p.dtype, copy=False)

    def state(self) -> dict:
        return {"m": self.m, "v": self.v, "scalars": {"t": self.t}}

    def load_state(self, state: dict) -> None:
        self.m = {k: np.array(v) for k, v in state["m"].items()}
        self.v = {k: np.array(v) for k, v in state["v"].items()}
        self.t = int(state["scalars"]["t"])


def synthetic_teacher(triplet):
    """Default teacher provider: the triplet's own exact flows."""
    return triplet.flows


# ---------------------------------------------------------------------------
# checkpoints


def checkpoint_save(params: dict, opt_state: dict | None, step: int, path, model_cfg: ModelConfig) -> None:
    manifest = {
        "kind": "checkpoint",
        "model_config": asdict(model_cfg),
        "config_fingerprint": config_fingerprint(model_cfg),
        "step": int(step),
    }
    write_checkpoint(path, params, manifest, opt_state)


def model_config_from_dict(d: dict) -> ModelConfig:
    allowed = {f.name for f in dataclasses.fields(ModelConfig)}
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"unknown config key {unknown[0]!r} in model section")
    kwargs = dict(d)
    if "channels" in kwargs:
        kwargs["channels"] = tuple(kwargs["channels"])
    return ModelConfig(**kwargs)


def checkpoint_load(path, expected_cfg: ModelConfig | None = None):
    """Load ``(params, opt_state, step, model_cfg)`` from a checkpoint.

    With ``expected_cfg`` the stored arrays are validated against that
    architecture: the first shape mismatch is named; a fingerprint mismatch
    with identical shapes is refused too.
    """
    params, manifest, opt_state = read_checkpoint(path)
    if manifest.get("kind") != "checkpoint":
        raise CheckpointError(f"{path}: archive is not a checkpoint (kind={manifest.get('kind')!r})")
    cfg = model_config_from_dict(manifest["model_config"])
    if expected_cfg is not None:
        spec = param_spec(expected_cfg)
        for name, shape in spec.items():
            if name not in params:
                raise CheckpointError(f"{path}: checkpoint is missing array {name!r}")
            if tuple(params[name].shape) != shape:
                raise CheckpointError(
                    f"{path}: array {name!r} has shape {tuple(params[name].shape)}, "
                    f"expected config wants {shape}"
                )
        if manifest["config_fingerprint"] != config_fingerprint(expected_cfg):
            raise CheckpointError(
                f"{path}: checkpoint fingerprint {manifest['config_fingerprint']} "
                f"does not match the expected config"
            )
    return params, opt_state, int(manifest["step"]), cfg


# ---------------------------------------------------------------------------
# the loop


@dataclass
class TrainResult:
    params: dict
    opt_state: dict
    log: list
    total_steps: int
    holdout: list


def _epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 31337, int(epoch)]))
    return rng.permutation(n)


def _stack(items, attr):
    return np.stack([getattr(t, attr).astype(np.float32) for t in items])


def _holdout_psnr(items, params, cfg) -> float:
    vals = []
    for tri in items:
        out = cascade_forward_batch(tri.i0[None].astype(np.float32), tri.i1[None].astype(np.float32), params, cfg)
        vals.append(psnr(out.frame.data[0], tri.it))
    return float(np.mean(vals))


def train(
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    data: list,
    teacher=synthetic_teacher,
    out_dir=None,
    resume=None,
) -> TrainResult:
    """Optimize a fresh (or resumed) parameter store on triplet data.

    ``data`` is a list of triplets with equal frame sizes divisible by
    ``2**depth``; the last ``holdout_fraction`` of it (by index) is held
    out for PSNR logging.  ``teacher`` maps a triplet to a full-resolution
    flow pair and is required when the flow-matching weight is positive.
    Raises :class:`TrainingDiverged` if the loss becomes non-finite.
    """
    if not data:
        raise DataError("training needs a non-empty dataset")
    shapes = {tuple(t.i0.shape) for t in data}
    if len(shapes) != 1:
        raise DataError(f"triplet frame sizes differ across the dataset: {sorted(shapes)}")

    n_hold = int(len(data) * train_cfg.holdout_fraction)
    holdout = data[len(data) - n_hold :] if n_hold else []
    items = data[: len(data) - n_hold] if n_hold else list(data)

    weights = train_cfg.weights
    teachers = None
    if weights.beta > 0:
        teachers = []
        for tri in items:
            full = teacher(tri) if teacher else None
            if full is None:
                raise ConfigError(
                    f"flow-matching weight beta={weights.beta} needs teacher flows, "
                    f"but sample {tri.name or items.index(tri)} has none"
                )
            pair = build_teacher_multiscale(
                np.asarray(full[0], dtype=np.float32), np.asarray(full[1], dtype=np.float32), model_cfg.depth
            )
            teachers.append(pair)

    steps_per_epoch = math.ceil(len(items) / train_cfg.batch_size)
    total_steps = train_cfg.epochs * steps_per_epoch
    if train_cfg.max_steps is not None:
        total_steps = min(total_steps, train_cfg.max_steps)
    if total_steps < 1:
        raise ConfigError("the schedule needs at least one step")

    params = init_params(model_cfg, train_cfg.seed, zero_flow=train_cfg.zero_flow_init, dtype=np.float32)
    opt = AdamW(params, train_cfg.weight_decay)
    start_step = 0
    if resume is not None:
        params, opt_state, start_step, _ = checkpoint_load(resume, expected_cfg=model_cfg)
        params = {k: np.array(v) for k, v in params.items()}
        if opt_state:
            opt.load_state(opt_state)

    out_dir = Path(out_dir) if out_dir is not None else None
    log_fh = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_fh = open(out_dir / "metrics.jsonl", "a")

    log: list[dict] = []
    try:
        for step in range(start_step, total_steps):
            epoch, slot = divmod(step, steps_per_epoch)
            order = _epoch_order(train_cfg.seed, epoch, len(items))
            idx = order[slot * train_cfg.batch_size : (slot + 1) * train_cfg.batch_size]
            batch = [items[i] for i in idx]

            tensors = {k: ad.Tensor(v) for k, v in params.items()}
            try:
                out = cascade_forward_batch(
                    _stack(batch, "i0"), _stack(batch, "i1"), tensors, model_cfg
                )
            except ContractViolation as exc:
                # non-finite activations mid-network are a divergence, not a
                # caller error, once training has started
                if "non-finite" in str(exc):
                    raise TrainingDiverged(f"non-finite forward pass at step {step}: {exc}") from exc
                raise
            gt = _stack(batch, "it")
            batch_teacher = None
            if teachers is not None:
                batch_teacher = [
                    (
                        np.stack([teachers[i][lvl][0] for i in idx]),
                        np.stack([teachers[i][lvl][1] for i in idx]),
                    )
                    for lvl in range(model_cfg.depth)
                ]
            loss, parts = total_loss(out.frame, gt, out.flows, batch_teacher, weights)
            loss_val = float(loss.data)
            if not np.isfinite(loss_val):
                raise TrainingDiverged(f"non-finite loss {loss_val} at step {step}")

            ad.backward(loss)
            grads = {k: tensors[k].grad for k in params}
            for k, g in grads.items():
                if g is None:
                    grads[k] = np.zeros_like(params[k])
            if train_cfg.grad_clip:
                norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
                if norm > train_cfg.grad_clip:
                    scale = train_cfg.grad_clip / norm
                    grads = {k: g * scale for k, g in grads.items()}

            lr = lr_at(step, total_steps, train_cfg)
            opt.step(params, grads, lr)

            record = {
                "step": step,
                "lr": lr,
                "loss": loss_val,
                "rec": parts["rec"],
                "flow": parts["flow"],
                "smooth": parts["smooth"],
            }
            if all(t.flows is not None for t in batch):
                record["epe"] = float(
                    np.mean(
                        [
                            (epe(out.flows[0][0].data[j], batch[j].flows[0])
                             + epe(out.flows[0][1].data[j], batch[j].flows[1])) / 2
                            for j in range(len(batch))
                        ]
                    )
                )
            last = step == total_steps - 1
            if train_cfg.eval_every and (step % train_cfg.eval_every == 0 or last):
                if holdout:
                    record["psnr_holdout"] = _holdout_psnr(holdout, params, model_cfg)
                record["psnr_train"] = _holdout_psnr(items, params, model_cfg)
            log.append(record)
            if log_fh is not None:
                log_fh.write(json.dumps(record) + "\n")
                log_fh.flush()

            done = step + 1
            if out_dir is not None and (
                (train_cfg.checkpoint_every and done % train_cfg.checkpoint_every == 0) or last
            ):
                checkpoint_save(params, opt.state(), done, out_dir / f"ckpt_{done:06d}.zip", model_cfg)
                if last:
                    checkpoint_save(params, opt.state(), done, out_dir / "ckpt_final.zip", model_cfg)
    finally:
        if log_fh is not None:
            log_fh.close()

    return TrainResult(params=params, opt_state=opt.state(), log=log, total_steps=total_steps, holdout=holdout)
