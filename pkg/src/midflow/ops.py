"""Differentiable tensor primitives shared by the model and the losses.

All functions accept either plain ndarrays or autodiff :class:`Tensor`
nodes and return the same flavour they were given.  Spatial layout is
channel-first: images ``[3, H, W]``, flow fields ``[2, H, W]`` (channel 0 =
horizontal displacement, channel 1 = vertical, both in the pixel units of
the tensor's own resolution), guide maps ``[1, H, W]``.  A leading batch
axis is accepted everywhere.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import ContractViolation


def _lift(*xs):
    """Wrap inputs as batched Tensors; report whether to unwrap the result."""
    was_tensor = any(isinstance(x, ad.Tensor) for x in xs)
    ts = []
    batched = None
    for x in xs:
        t = ad.as_tensor(x)
        if t.ndim == 3:
            if batched is True:
                raise ContractViolation("cannot mix batched and unbatched arguments")
            batched = False
            t = ad.Tensor(t.data[None], (t,), (lambda g: g[0],))
        elif t.ndim == 4:
            if batched is False:
                raise ContractViolation("cannot mix batched and unbatched arguments")
            batched = True
        else:
            raise ContractViolation(f"expected a [C,H,W] or [N,C,H,W] tensor, got shape {t.shape}")
        ts.append(t)
    return ts, was_tensor, bool(batched)


def _unlift(out: ad.Tensor, was_tensor: bool, batched: bool):
    if not batched:
        out = ad.Tensor(out.data[0], (out,), (lambda g: g[None],)) if was_tensor else out
        return out if was_tensor else out.data[0]
    return out if was_tensor else out.data


def warp(src, flow):
    """Backward-warp ``src`` by ``flow``: ``out(p) = src(p + flow(p))``.

    Bilinear sampling with coordinates clamped to the image border; zero
    flow reproduces ``src`` exactly.  Differentiable with respect to both
    arguments.

    Raises
    ------
    ContractViolation
        If the flow resolution does not match ``src`` or the flow contains
        non-finite values.
    """
    (s, f), was_tensor, batched = _lift(src, flow)
    if f.shape[1] != 2:
        raise ContractViolation(f"flow must have 2 channels, got {f.shape[1]}")
    if s.shape[0] != f.shape[0] or s.shape[2:] != f.shape[2:]:
        raise ContractViolation(f"warp resolution mismatch: src {s.shape} vs flow {f.shape}")
    if not np.isfinite(f.data).all():
        raise ContractViolation("flow contains non-finite values")
    return _unlift(ad.warp_bilinear(s, f), was_tensor, batched)


def fuse(a, b, guide):
    """Blend two tensors with a per-pixel guide: ``a*g + b*(1-g)``.

    ``guide`` has a single channel broadcast over the channels of ``a``/``b``.
    """
    (ta, tb, tg), was_tensor, batched = _lift(a, b, guide)
    if ta.shape != tb.shape:
        raise ContractViolation(f"fuse operand shapes differ: {ta.shape} vs {tb.shape}")
    if tg.shape[1] != 1 or tg.shape[2:] != ta.shape[2:] or tg.shape[0] != ta.shape[0]:
        raise ContractViolation(f"guide shape {tg.shape} incompatible with operands {ta.shape}")
    out = ad.add(ad.mul(ta, tg), ad.mul(tb, ad.add(1.0, ad.mul(tg, -1.0))))
    return _unlift(out, was_tensor, batched)


def output_size(size: int, scale: float) -> int:
    """Rounded output extent of a bilinear resize."""
    out = int(np.floor(size * scale + 0.5))
    if out < 1:
        raise ContractViolation(f"resize scale {scale} collapses extent {size} to zero")
    return out


def resize_bilinear(x, scale):
    """Bilinear resize by a positive ``scale`` factor.

    Convention (fixed everywhere in this package): half-pixel sample
    centers, the "corner-aligned-off" mapping ``src = (dst + 0.5) *
    (in/out) - 0.5``, with source coordinates clamped to the border.
    Output extents are ``round(scale * H) x round(scale * W)``.
    """
    if not np.isscalar(scale) or not scale > 0:
        raise ContractViolation(f"resize scale must be a positive real, got {scale!r}")
    (t,), was_tensor, batched = _lift(x)
    h, w = t.shape[2:]
    hout, wout = output_size(h, scale), output_size(w, scale)
    if (hout, wout) == (h, w) and float(scale) == 1.0:
        return _unlift(t, was_tensor, batched)
    gy = np.broadcast_to(ad.resize_coords(h, hout)[:, None], (hout, wout))
    gx = np.broadcast_to(ad.resize_coords(w, wout)[None, :], (hout, wout))
    return _unlift(ad.interp_bilinear(t, gx, gy), was_tensor, batched)


def rescale_flow(flow, scale):
    """Resize a flow field and rescale its displacement values by ``scale``.

    Resizing alone would leave magnitudes in the old resolution's pixel
    units; multiplying by the same factor keeps them correct at the new
    resolution.
    """
    resized = resize_bilinear(flow, scale)
    if isinstance(resized, ad.Tensor):
        return ad.mul(resized, float(scale))
    return resized * float(scale)


def spatial_gradient_l1(flow):
    """Mean absolute forward difference of a flow field, x plus y direction.

    Each direction is averaged over channels and over the positions where
    the forward difference exists (the last column/row is excluded); a
    degenerate direction contributes zero.  Constant fields score 0.
    """
    (f,), was_tensor, batched = _lift(flow)
    h, w = f.shape[2:]
    if h < 2 and w < 2:
        raise ContractViolation("spatial gradient needs at least 2 pixels in one direction")
    terms = []
    if w >= 2:
        dx = ad.add(f[:, :, :, 1:], ad.mul(f[:, :, :, :-1], -1.0))
        terms.append(ad.mean_all(ad.absolute(dx)))
    if h >= 2:
        dy = ad.add(f[:, :, 1:, :], ad.mul(f[:, :, :-1, :], -1.0))
        terms.append(ad.mean_all(ad.absolute(dy)))
    out = terms[0] if len(terms) == 1 else ad.add(terms[0], terms[1])
    if was_tensor:
        return out
    return float(out.data)
