"""The three-term training objective with multi-scale flow supervision.

``total = alpha * reconstruction + beta * flow_match + gamma * smoothness``

* reconstruction: mean absolute error between the synthesized and real
  middle frame;
* flow_match: per-level mean absolute difference between the cascade's
  intermediate flows and teacher flows, both directions, summed over
  levels — the teacher is exact synthetic flow or flows loaded from files,
  never an optical-flow network run here;
* smoothness: per-level spatial gradient penalty pushing neighbouring
  pixels toward similar flow values.

Everything is mean-normalized so the weights are resolution independent.
Functions accept ndarrays or autodiff tensors and return the same flavour.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import ops
from .errors import ConfigError, ContractViolation


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 1.0
    beta: float = 0.01
    gamma: float = 0.01

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ConfigError("loss weights must be nonnegative")
        if max(self.alpha, self.beta, self.gamma) == 0:
            raise ConfigError("at least one loss weight must be positive")


def _any_tensor(*groups):
    for g in groups:
        for x in g:
            if isinstance(x, ad.Tensor):
                return True
    return False


def _mean_abs_diff(a, b):
    return ad.mean_all(ad.absolute(ad.add(ad.as_tensor(a), ad.mul(ad.as_tensor(b), -1.0))))


def rec_loss(pred, gt):
    """Mean absolute error between two frames of equal shape."""
    p, g = ad.as_tensor(pred), ad.as_tensor(gt)
    if p.shape != g.shape:
        raise ContractViolation(f"frame shapes differ: {p.shape} vs {g.shape}")
    out = _mean_abs_diff(p, g)
    return out if _any_tensor((pred, gt)) else float(out.data)


def smooth_loss(flows_per_level):
    """Sum over levels of the spatial gradient penalty of both flows."""
    if not flows_per_level:
        raise ContractViolation("smooth_loss needs at least one level")
    total = None
    for f0, f1 in flows_per_level:
        term = ad.add(
            ops.spatial_gradient_l1(ad.as_tensor(f0)),
            ops.spatial_gradient_l1(ad.as_tensor(f1)),
        )
        total = term if total is None else ad.add(total, term)
    tensor_in = _any_tensor(*[(f0, f1) for f0, f1 in flows_per_level])
    return total if tensor_in else float(total.data)


def flow_loss(student_flows_per_level, teacher_flows_per_level):
    """Sum over levels of the mean absolute flow error, both directions."""
    if len(student_flows_per_level) != len(teacher_flows_per_level):
        raise ContractViolation(
            f"level mismatch: student has {len(student_flows_per_level)}, "
            f"teacher has {len(teacher_flows_per_level)}"
        )
    total = None
    for (s0, s1), (t0, t1) in zip(student_flows_per_level, teacher_flows_per_level):
        s0, s1 = ad.as_tensor(s0), ad.as_tensor(s1)
        t0, t1 = ad.as_tensor(t0), ad.as_tensor(t1)
        if s0.shape != t0.shape or s1.shape != t1.shape:
            raise ContractViolation(
                f"teacher resolution {t0.shape} does not match student {s0.shape}"
            )
        term = ad.add(_mean_abs_diff(s0, t0), _mean_abs_diff(s1, t1))
        total = term if total is None else ad.add(total, term)
    tensor_in = _any_tensor(
        *[(a, b) for a, b in student_flows_per_level],
        *[(a, b) for a, b in teacher_flows_per_level],
    )
    return total if tensor_in else float(total.data)


def build_teacher_multiscale(flow_t0, flow_t1, depth: int):
    """Downscale a full-resolution teacher pair to every cascade level.

    Level ``i`` gets the pair resized by 1/2^i with displacement values
    rescaled to that level's pixel units; level 0 is the input itself.
    """
    out = []
    for i in range(depth):
        if i == 0:
            out.append((np.asarray(flow_t0), np.asarray(flow_t1)))
        else:
            s = 1.0 / 2**i
            out.append((ops.rescale_flow(np.asarray(flow_t0), s), ops.rescale_flow(np.asarray(flow_t1), s)))
    return out


def total_loss(pred, gt, flows_per_level, teacher_flows_per_level, weights: LossWeights):
    """Weighted sum of the three terms plus a per-term float breakdown.

    ``teacher_flows_per_level`` may be None only when ``beta`` is zero.
    Returns ``(total, breakdown)`` where the breakdown holds plain floats
    of the unweighted terms for logging.
    """
    if teacher_flows_per_level is None and weights.beta > 0:
        raise ConfigError("flow-matching weight beta > 0 requires teacher flows")
    rec = rec_loss(ad.as_tensor(pred), ad.as_tensor(gt))
    smooth = smooth_loss([(ad.as_tensor(a), ad.as_tensor(b)) for a, b in flows_per_level])
    total = ad.add(ad.mul(rec, weights.alpha), ad.mul(smooth, weights.gamma))
    breakdown = {"rec": float(rec.data), "smooth": float(smooth.data), "flow": 0.0}
    if weights.beta > 0:
        fl = flow_loss(
            [(ad.as_tensor(a), ad.as_tensor(b)) for a, b in flows_per_level],
            teacher_flows_per_level,
        )
        total = ad.add(total, ad.mul(fl, weights.beta))
        breakdown["flow"] = float(fl.data)
    tensor_in = isinstance(pred, ad.Tensor) or _any_tensor(*[(a, b) for a, b in flows_per_level])
    return (total, breakdown) if tensor_in else (float(total.data), breakdown)
