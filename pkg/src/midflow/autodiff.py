"""Reverse-mode automatic differentiation over NumPy arrays.

A small tape-based engine carrying exactly the primitives the interpolation
network needs: elementwise arithmetic, PReLU/sigmoid activations, strided
convolution, transposed convolution, replicate padding, bilinear resampling
(fixed-grid and flow-driven) and full reductions.  Forward values are plain
ndarrays; :func:`backward` on a scalar output fills ``grad`` on every node
that contributed to it.

All primitives work on batched ``[N, C, H, W]`` arrays and are dtype
agnostic: float64 graphs are used by the gradient-verification tests,
float32 graphs by training.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    """A node in the computation graph wrapping an ndarray value.

    ``grad`` is ``None`` until :func:`backward` reaches the node.  Leaves are
    tensors created without parents; every tensor participating in a graph
    receives a gradient, so there is no ``requires_grad`` switch.
    """

    __slots__ = ("data", "grad", "_parents", "_vjps")

    def __init__(self, data, _parents=(), _vjps=()):
        self.data = np.asarray(data)
        self.grad = None
        self._parents = _parents
        self._vjps = _vjps

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        if isinstance(other, Tensor) or not np.isscalar(other):
            raise TypeError("Tensor division only supports scalar divisors")
        return mul(self, 1.0 / other)

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, idx):
        return crop(self, idx)


def as_tensor(x) -> Tensor:
    """Wrap ``x`` as a leaf Tensor (no-op when already a Tensor)."""
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def backward(out: Tensor, seed=None) -> None:
    """Accumulate gradients of ``out`` into every contributing node.

    ``out`` is usually a scalar loss; ``seed`` overrides the initial gradient
    (defaults to ones of the output shape).
    """
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(out, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))

    out.grad = np.ones_like(out.data) if seed is None else np.asarray(seed)
    for node in reversed(order):
        g = node.grad
        if g is None:
            continue
        for parent, vjp in zip(node._parents, node._vjps):
            pg = vjp(g)
            if parent.grad is None:
                parent.grad = pg
            else:
                parent.grad = parent.grad + pg


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (the reverse of NumPy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise


def _is_plain_scalar(x) -> bool:
    return not isinstance(x, Tensor) and np.isscalar(x)


def add(a, b) -> Tensor:
    # plain Python scalars stay scalars so float32 graphs are not promoted
    if _is_plain_scalar(a) and not _is_plain_scalar(b):
        a, b = b, a
    a = as_tensor(a)
    if _is_plain_scalar(b):
        return Tensor(a.data + b, (a,), (lambda g: _unbroadcast(g, a.data.shape),))
    b = as_tensor(b)
    return Tensor(
        a.data + b.data,
        (a, b),
        (lambda g: _unbroadcast(g, a.data.shape), lambda g: _unbroadcast(g, b.data.shape)),
    )


def mul(a, b) -> Tensor:
    if _is_plain_scalar(a) and not _is_plain_scalar(b):
        a, b = b, a
    a = as_tensor(a)
    if _is_plain_scalar(b):
        return Tensor(a.data * b, (a,), (lambda g: _unbroadcast(g * b, a.data.shape),))
    b = as_tensor(b)
    return Tensor(
        a.data * b.data,
        (a, b),
        (
            lambda g: _unbroadcast(g * b.data, a.data.shape),
            lambda g: _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def absolute(x) -> Tensor:
    x = as_tensor(x)
    sign = np.sign(x.data)
    return Tensor(np.abs(x.data), (x,), (lambda g: g * sign,))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    s = 1.0 / (1.0 + np.exp(-x.data))
    return Tensor(s, (x,), (lambda g: g * s * (1.0 - s),))


def prelu(x, slope) -> Tensor:
    """PReLU with a per-channel ``slope`` of shape ``[C]`` applied on axis 1."""
    x, slope = as_tensor(x), as_tensor(slope)
    a = slope.data.reshape(1, -1, *([1] * (x.ndim - 2)))
    pos = x.data >= 0
    out = np.where(pos, x.data, a * x.data)

    def to_x(g):
        return np.where(pos, g, a * g)

    def to_slope(g):
        contrib = np.where(pos, 0.0, g * x.data)
        axes = (0,) + tuple(range(2, x.ndim))
        return contrib.sum(axis=axes).reshape(slope.data.shape)

    return Tensor(out, (x, slope), (to_x, to_slope))


def clip01(x) -> Tensor:
    """Clamp to [0, 1]; gradient passes inside the closed interval."""
    x = as_tensor(x)
    inside = (x.data >= 0.0) & (x.data <= 1.0)
    return Tensor(np.clip(x.data, 0.0, 1.0), (x,), (lambda g: g * inside,))


# ---------------------------------------------------------------------------
# shape ops


def concat(parts, axis=1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)
    out = np.concatenate([p.data for p in parts], axis=axis)

    def make_vjp(i):
        sl = [slice(None)] * out.ndim
        sl[axis] = slice(int(offsets[i]), int(offsets[i + 1]))
        sl = tuple(sl)
        return lambda g: g[sl]

    return Tensor(out, tuple(parts), tuple(make_vjp(i) for i in range(len(parts))))


def crop(x, idx) -> Tensor:
    """Basic slicing; the VJP scatters into a zero array."""
    x = as_tensor(x)

    def to_x(g):
        out = np.zeros_like(x.data)
        out[idx] = g
        return out

    return Tensor(x.data[idx], (x,), (to_x,))


def pad_replicate(x, p: int) -> Tensor:
    """Edge-replicate padding of the two trailing (spatial) axes."""
    x = as_tensor(x)
    if p == 0:
        return x
    n, c, h, w = x.data.shape
    iy = np.clip(np.arange(-p, h + p), 0, h - 1)
    ix = np.clip(np.arange(-p, w + p), 0, w - 1)
    out = x.data[:, :, iy[:, None], ix[None, :]]

    def to_x(g):
        gt = np.moveaxis(g, (2, 3), (0, 1))
        acc = np.zeros((h, w, n, c), dtype=g.dtype)
        np.add.at(acc, (iy[:, None], ix[None, :]), gt)
        return np.moveaxis(acc, (0, 1), (2, 3))

    return Tensor(out, (x,), (to_x,))


# ---------------------------------------------------------------------------
# reductions


def mean_all(x) -> Tensor:
    x = as_tensor(x)
    size = x.data.size
    return Tensor(
        np.asarray(x.data.mean()),
        (x,),
        (lambda g: np.broadcast_to(np.asarray(g) / size, x.data.shape).astype(x.data.dtype, copy=False),),
    )


def sum_all(x) -> Tensor:
    x = as_tensor(x)
    return Tensor(
        np.asarray(x.data.sum()),
        (x,),
        (lambda g: np.broadcast_to(np.asarray(g), x.data.shape).astype(x.data.dtype, copy=False),),
    )


# ---------------------------------------------------------------------------
# convolution

def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, hout: int, wout: int) -> np.ndarray:
    n, c = xp.shape[:2]
    cols = np.empty((n, c, kh, kw, hout, wout), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i : i + stride * hout : stride, j : j + stride * wout : stride]
    return cols.reshape(n, c * kh * kw, hout * wout)


def _col2im(cols, n, c, hp, wp, kh, kw, stride, hout, wout) -> np.ndarray:
    out = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    cols = cols.reshape(n, c, kh, kw, hout, wout)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + stride * hout : stride, j : j + stride * wout : stride] += cols[:, :, i, j]
    return out


def conv2d(x, w, b, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D convolution; ``x: [N,Cin,H,W]``, ``w: [Cout,Cin,kh,kw]``, ``b: [Cout]``."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    n, cin, h, wd = x.data.shape
    cout, cin_w, kh, kw = w.data.shape
    if cin != cin_w:
        raise ValueError(f"conv2d channel mismatch: input {cin}, kernel expects {cin_w}")
    hout = (h + 2 * padding - kh) // stride + 1
    wout = (wd + 2 * padding - kw) // stride + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    cols = _im2col(xp, kh, kw, stride, hout, wout)
    wmat = w.data.reshape(cout, cin * kh * kw)
    y = np.matmul(wmat, cols) + b.data[:, None]
    out = y.reshape(n, cout, hout, wout)

    def to_x(g):
        gf = g.reshape(n, cout, hout * wout)
        dcols = np.matmul(wmat.T, gf)
        dxp = _col2im(dcols, n, cin, h + 2 * padding, wd + 2 * padding, kh, kw, stride, hout, wout)
        return dxp[:, :, padding : padding + h, padding : padding + wd] if padding else dxp

    def to_w(g):
        gf = g.reshape(n, cout, hout * wout)
        return np.matmul(gf, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.data.shape)

    def to_b(g):
        return g.sum(axis=(0, 2, 3))

    return Tensor(out, (x, w, b), (to_x, to_w, to_b))


def conv_transpose2d(x, w, b, stride: int = 2, padding: int = 1) -> Tensor:
    """Transposed 2-D convolution; ``w: [Cin,Cout,kh,kw]`` (adjoint of conv2d)."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    n, cin, h, wd = x.data.shape
    cin_w, cout, kh, kw = w.data.shape
    if cin != cin_w:
        raise ValueError(f"conv_transpose2d channel mismatch: input {cin}, kernel expects {cin_w}")
    hout = (h - 1) * stride - 2 * padding + kh
    wout = (wd - 1) * stride - 2 * padding + kw
    xf = x.data.reshape(n, cin, h * wd)
    wmat = w.data.reshape(cin, cout * kh * kw)
    cols = np.matmul(wmat.T, xf)
    yp = _col2im(cols, n, cout, hout + 2 * padding, wout + 2 * padding, kh, kw, stride, h, wd)
    out = yp[:, :, padding : padding + hout, padding : padding + wout] if padding else yp
    out = out + b.data[None, :, None, None]

    def _gcols(g):
        gp = np.pad(g, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else g
        return _im2col(gp, kh, kw, stride, h, wd)

    def to_x(g):
        return np.matmul(wmat, _gcols(g)).reshape(x.data.shape)

    def to_w(g):
        gc = _gcols(g)
        return np.matmul(xf, gc.transpose(0, 2, 1)).sum(axis=0).reshape(w.data.shape)

    def to_b(g):
        return g.sum(axis=(0, 2, 3))

    return Tensor(out, (x, w, b), (to_x, to_w, to_b))


# ---------------------------------------------------------------------------
# bilinear sampling

def _corners(gx, gy, h, w):
    """Clamped corner indices and fractions for bilinear sampling."""
    cx = np.clip(gx, 0.0, w - 1.0)
    cy = np.clip(gy, 0.0, h - 1.0)
    fx = cx - np.floor(cx)  # float-only fractions keep float32 graphs float32
    fy = cy - np.floor(cy)
    x0 = np.floor(cx).astype(np.int64)
    y0 = np.floor(cy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    return x0, x1, y0, y1, fx, fy


def _gather(sflat, idx):
    # sflat: [N, C, H*W]; idx: [N, 1, P] broadcast over channels
    return np.take_along_axis(sflat, idx, axis=2)


def interp_bilinear(src, gx: np.ndarray, gy: np.ndarray) -> Tensor:
    """Sample ``src [N,C,H,W]`` at fixed coordinates ``gx, gy [Hout,Wout]``.

    Coordinates are clamped to the image border.  Gradients flow to ``src``
    only; used for resizing, where the grid is not a graph input.
    """
    src = as_tensor(src)
    n, c, h, w = src.data.shape
    hout, wout = gx.shape
    x0, x1, y0, y1, fx, fy = _corners(gx, gy, h, w)
    i00 = (y0 * w + x0).ravel()
    i01 = (y0 * w + x1).ravel()
    i10 = (y1 * w + x0).ravel()
    i11 = (y1 * w + x1).ravel()
    fx = fx.ravel()
    fy = fy.ravel()
    w00 = (1 - fy) * (1 - fx)
    w01 = (1 - fy) * fx
    w10 = fy * (1 - fx)
    w11 = fy * fx

    sflat = src.data.reshape(n, c, h * w)
    out = (
        sflat[:, :, i00] * w00
        + sflat[:, :, i01] * w01
        + sflat[:, :, i10] * w10
        + sflat[:, :, i11] * w11
    ).reshape(n, c, hout, wout)

    def to_src(g):
        gf = g.reshape(n, c, hout * wout)
        acc = np.zeros((h * w, n, c), dtype=g.dtype)
        gt = np.moveaxis(gf, 2, 0)  # [P, N, C]
        np.add.at(acc, i00, gt * w00[:, None, None])
        np.add.at(acc, i01, gt * w01[:, None, None])
        np.add.at(acc, i10, gt * w10[:, None, None])
        np.add.at(acc, i11, gt * w11[:, None, None])
        return np.moveaxis(acc, 0, 2).reshape(src.data.shape)

    return Tensor(out.astype(src.data.dtype, copy=False), (src,), (to_src,))


def warp_bilinear(src, flow) -> Tensor:
    """Backward-warp ``src [N,C,H,W]`` by ``flow [N,2,H,W]`` (pixel units).

    ``out(p) = src(p + flow(p))`` with bilinear interpolation; sample
    coordinates are clamped to the border.  Differentiable in both ``src``
    and ``flow``; the flow gradient vanishes where clamping is active.
    """
    src, flow = as_tensor(src), as_tensor(flow)
    n, c, h, w = src.data.shape
    xs = np.arange(w, dtype=flow.data.dtype)
    ys = np.arange(h, dtype=flow.data.dtype)
    gx = xs[None, None, :] + flow.data[:, 0]
    gy = ys[None, :, None] + flow.data[:, 1]
    in_x = (gx >= 0.0) & (gx <= w - 1.0)
    in_y = (gy >= 0.0) & (gy <= h - 1.0)
    x0, x1, y0, y1, fx, fy = _corners(gx, gy, h, w)

    i00 = (y0 * w + x0).reshape(n, 1, h * w)
    i01 = (y0 * w + x1).reshape(n, 1, h * w)
    i10 = (y1 * w + x0).reshape(n, 1, h * w)
    i11 = (y1 * w + x1).reshape(n, 1, h * w)
    w00 = ((1 - fy) * (1 - fx)).reshape(n, 1, h * w)
    w01 = ((1 - fy) * fx).reshape(n, 1, h * w)
    w10 = (fy * (1 - fx)).reshape(n, 1, h * w)
    w11 = (fy * fx).reshape(n, 1, h * w)

    sflat = src.data.reshape(n, c, h * w)
    v00 = _gather(sflat, i00)
    v01 = _gather(sflat, i01)
    v10 = _gather(sflat, i10)
    v11 = _gather(sflat, i11)
    out = (v00 * w00 + v01 * w01 + v10 * w10 + v11 * w11).reshape(n, c, h, w)

    def to_src(g):
        gf = g.reshape(n, c, h * w)
        flat = np.zeros(n * c * h * w, dtype=g.dtype)
        base = (np.arange(n)[:, None] * c + np.arange(c)[None, :]).reshape(n, c, 1) * (h * w)
        for idx, wt in ((i00, w00), (i01, w01), (i10, w10), (i11, w11)):
            np.add.at(flat, (base + idx).ravel(), (gf * wt).ravel())
        return flat.reshape(src.data.shape)

    def to_flow(g):
        gf = g.reshape(n, c, h * w)
        fyf = fy.reshape(n, 1, h * w)
        fxf = fx.reshape(n, 1, h * w)
        dgx = ((v01 - v00) * (1 - fyf) + (v11 - v10) * fyf) * gf
        dgy = ((v10 - v00) * (1 - fxf) + (v11 - v01) * fxf) * gf
        du = dgx.sum(axis=1).reshape(n, h, w) * in_x
        dv = dgy.sum(axis=1).reshape(n, h, w) * in_y
        return np.stack([du, dv], axis=1).astype(flow.data.dtype, copy=False)

    return Tensor(out, (src, flow), (to_src, to_flow))


def resize_coords(size_in: int, size_out: int, dtype=np.float64) -> np.ndarray:
    """Half-pixel-center source coordinates for one axis of a bilinear resize."""
    ratio = size_in / size_out
    return (np.arange(size_out, dtype=dtype) + 0.5) * ratio - 0.5
