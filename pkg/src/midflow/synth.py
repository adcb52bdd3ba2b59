"""Synthetic moving-sprite scenes with exact ground-truth flows.

Scenes are a smooth textured background plus a few sprites (rectangles,
discs, textured patches) following quadratic trajectories ``p(tau) = p0 +
v*tau + a*tau^2`` with optional rotation about their centers.  Because
placement is analytic with 1-pixel soft edges, rendering is deterministic,
sub-pixel accurate, and the per-pixel flow between any two times is known
exactly — which is what makes these triplets usable as a flow-supervision
oracle.  Acceleration makes the two half-interval flows asymmetric, the
regime a fixed linear-motion assumption cannot represent.

Also ingests directories of real triplets (3 images per folder, optional
flow files attached as teacher flows).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import ContractViolation
from .fileio import read_flo, read_image

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".ppm"}
# source-point coverage by a sprite above the owner beyond this counts as occluded
OCCLUSION_COVER = 0.25


@dataclass(frozen=True)
class Sprite:
    kind: str  # "rect" | "disc" | "patch"
    size: tuple  # (height, width); discs use size[0] as diameter
    color: tuple  # RGB in [0,1]; patches ignore it in favour of their texture
    z: int
    p0: tuple  # center (x, y) at tau = 0
    v: tuple = (0.0, 0.0)  # px per unit time
    a: tuple = (0.0, 0.0)  # px per unit time^2 (coefficient of tau^2)
    omega: float = 0.0  # rotation rate, radians per unit time
    texture_seed: int = 0

    def center(self, tau: float) -> tuple:
        return (
            self.p0[0] + self.v[0] * tau + self.a[0] * tau**2,
            self.p0[1] + self.v[1] * tau + self.a[1] * tau**2,
        )


@dataclass(frozen=True)
class SceneSpec:
    size: tuple = (64, 64)  # (H, W)
    background_seed: int = 0
    sprites: tuple = ()


@dataclass
class Triplet:
    """Two input frames, the true middle frame and (optionally) exact flows.

    ``flows`` is the (t->0, t->1) pair anchored at the middle frame;
    ``occlusion[0]`` flags pixels of the middle frame invisible in frame 0,
    ``occlusion[1]`` those invisible in frame 1.
    """

    i0: np.ndarray
    it: np.ndarray
    i1: np.ndarray
    t: float = 0.5
    flows: tuple | None = None
    occlusion: np.ndarray | None = None
    name: str = ""


def _resize_to(img: np.ndarray, hout: int, wout: int) -> np.ndarray:
    h, w = img.shape[1:]
    gy = np.broadcast_to(ad.resize_coords(h, hout)[:, None], (hout, wout))
    gx = np.broadcast_to(ad.resize_coords(w, wout)[None, :], (hout, wout))
    return ad.interp_bilinear(ad.Tensor(img[None]), gx, gy).data[0]


def _sample_grid(tex: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Bilinear lookup of tex [C,h,w] at fractional (u, v), border-clamped."""
    c, h, w = tex.shape
    u = np.clip(u, 0.0, w - 1.0)
    v = np.clip(v, 0.0, h - 1.0)
    u0 = np.floor(u).astype(np.int64)
    v0 = np.floor(v).astype(np.int64)
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    fu = u - u0
    fv = v - v0
    flat = tex.reshape(c, -1)
    out = (
        flat[:, v0 * w + u0] * (1 - fv) * (1 - fu)
        + flat[:, v0 * w + u1] * (1 - fv) * fu
        + flat[:, v1 * w + u0] * fv * (1 - fu)
        + flat[:, v1 * w + u1] * fv * fu
    )
    return out


def _background(spec: SceneSpec) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([int(spec.background_seed), 9001]))
    coarse = rng.uniform(0.15, 0.85, (3, 6, 6))
    return _resize_to(coarse, spec.size[0], spec.size[1])


def _texture(sprite: Sprite) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([int(sprite.texture_seed), 4242]))
    return rng.uniform(0.1, 0.9, (3, 5, 5))


def _local_coords(sprite: Sprite, tau: float, px: np.ndarray, py: np.ndarray):
    cx, cy = sprite.center(tau)
    dx = px - cx
    dy = py - cy
    th = sprite.omega * tau
    if th:
        cos, sin = np.cos(th), np.sin(th)
        qx = cos * dx + sin * dy
        qy = -sin * dx + cos * dy
    else:
        qx, qy = dx, dy
    return qx, qy


def sprite_coverage(sprite: Sprite, tau: float, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Coverage in [0,1] at arbitrary coordinates, 1-px linear soft edge."""
    qx, qy = _local_coords(sprite, tau, px, py)
    if sprite.kind == "disc":
        r = sprite.size[0] / 2.0
        return np.clip(r - np.hypot(qx, qy) + 0.5, 0.0, 1.0)
    hh = sprite.size[0] / 2.0
    hw = sprite.size[1] / 2.0
    return np.clip(hw - np.abs(qx) + 0.5, 0.0, 1.0) * np.clip(hh - np.abs(qy) + 0.5, 0.0, 1.0)


def _sprite_color(sprite: Sprite, tau: float, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    if sprite.kind != "patch":
        return np.asarray(sprite.color, dtype=np.float64).reshape(3, *([1] * px.ndim))
    qx, qy = _local_coords(sprite, tau, px, py)
    tex = _texture(sprite)
    hh = sprite.size[0] / 2.0
    hw = sprite.size[1] / 2.0
    u = (qx + hw) / (2 * hw) * (tex.shape[2] - 1)
    v = (qy + hh) / (2 * hh) * (tex.shape[1] - 1)
    return _sample_grid(tex, u, v).reshape(3, *px.shape)


def render_scene(spec: SceneSpec, tau: float) -> np.ndarray:
    """Rasterize the scene at time ``tau`` into a [3,H,W] float32 frame."""
    if not 0.0 <= tau <= 1.0:
        raise ContractViolation(f"tau must lie in [0,1], got {tau}")
    h, w = spec.size
    py, px = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    img = _background(spec)
    for sprite in sorted(spec.sprites, key=lambda s: s.z):
        cov = sprite_coverage(sprite, tau, px, py)[None]
        img = img * (1.0 - cov) + _sprite_color(sprite, tau, px, py) * cov
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def _sprite_flow(sprite: Sprite, t: float, tau: float, px: np.ndarray, py: np.ndarray):
    """Displacement taking middle-frame pixels to their position at ``tau``."""
    cxt, cyt = sprite.center(t)
    cxs, cys = sprite.center(tau)
    dx = px - cxt
    dy = py - cyt
    dth = sprite.omega * (tau - t)
    if dth:
        cos, sin = np.cos(dth), np.sin(dth)
        sx = cxs + cos * dx - sin * dy
        sy = cys + sin * dx + cos * dy
    else:
        sx = cxs + dx
        sy = cys + dy
    return sx - px, sy - py


def make_triplet(spec: SceneSpec, t: float = 0.5, name: str = "") -> Triplet:
    """Render frames at times 0, t, 1 with exact flows and occlusion masks."""
    if not 0.0 < t < 1.0:
        raise ContractViolation(f"t must lie strictly inside (0,1), got {t}")
    h, w = spec.size
    py, px = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    order = sorted(spec.sprites, key=lambda s: s.z)

    # topmost sprite solidly covering each middle-frame pixel owns it
    owner = np.full((h, w), -1, dtype=np.int64)
    for idx, sprite in enumerate(order):
        owner[sprite_coverage(sprite, t, px, py) > 0.5] = idx

    flow0 = np.zeros((2, h, w))
    flow1 = np.zeros((2, h, w))
    for idx, sprite in enumerate(order):
        mask = owner == idx
        if not mask.any():
            continue
        for tau, flow in ((0.0, flow0), (1.0, flow1)):
            fx, fy = _sprite_flow(sprite, t, tau, px, py)
            flow[0][mask] = fx[mask]
            flow[1][mask] = fy[mask]

    occ = np.zeros((2, h, w), dtype=bool)
    if order:
        zs = np.array([s.z for s in order])
        owner_z = np.where(owner >= 0, zs[np.maximum(owner, 0)], -(2**31))
    else:
        owner_z = np.full((h, w), -(2**31))
    for side, (tau, flow) in enumerate(((0.0, flow0), (1.0, flow1))):
        sx = px + flow[0]
        sy = py + flow[1]
        off_canvas = (sx < 0) | (sx > w - 1) | (sy < 0) | (sy > h - 1)
        covered = np.zeros((h, w), dtype=bool)
        for sprite in order:
            above = sprite.z > owner_z
            if not above.any():
                continue
            covered |= above & (sprite_coverage(sprite, tau, sx, sy) > OCCLUSION_COVER)
        occ[side] = off_canvas | covered

    return Triplet(
        i0=render_scene(spec, 0.0),
        it=render_scene(spec, t),
        i1=render_scene(spec, 1.0),
        t=t,
        flows=(flow0.astype(np.float32), flow1.astype(np.float32)),
        occlusion=occ,
        name=name,
    )


# ---------------------------------------------------------------------------
# scene sampling


@dataclass(frozen=True)
class SceneDistribution:
    canvas: tuple = (64, 64)
    sprite_count: tuple = (1, 3)
    size_range: tuple = (10.0, 24.0)
    speed_max: float = 5.0
    accel_max: float = 8.0
    accel_prob: float = 0.5
    rotate_prob: float = 0.25
    omega_max: float = 0.6
    kinds: tuple = ("rect", "disc", "patch")


def sample_scene(rng: np.random.Generator, dist: SceneDistribution) -> SceneSpec:
    h, w = dist.canvas
    n = int(rng.integers(dist.sprite_count[0], dist.sprite_count[1] + 1))
    sprites = []
    for z in range(n):
        kind = str(rng.choice(list(dist.kinds)))
        s0 = float(rng.uniform(*dist.size_range))
        size = (s0, s0) if kind == "disc" else (s0, float(rng.uniform(*dist.size_range)))
        sprite = Sprite(
            kind=kind,
            size=size,
            color=tuple(rng.uniform(0.1, 0.9, 3)),
            z=z,
            p0=(float(rng.uniform(4, w - 5)), float(rng.uniform(4, h - 5))),
            v=(float(rng.uniform(-dist.speed_max, dist.speed_max)),
               float(rng.uniform(-dist.speed_max, dist.speed_max))),
            a=(0.0, 0.0),
            omega=0.0,
            texture_seed=int(rng.integers(0, 2**31)),
        )
        if rng.random() < dist.accel_prob:
            sprite = replace(sprite, a=(float(rng.uniform(-dist.accel_max, dist.accel_max)),
                                        float(rng.uniform(-dist.accel_max, dist.accel_max))))
        if rng.random() < dist.rotate_prob:
            sprite = replace(sprite, omega=float(rng.uniform(-dist.omega_max, dist.omega_max)))
        for _ in range(20):
            if _partially_on_canvas(sprite, (h, w)):
                break
            sprite = replace(
                sprite,
                v=(float(rng.uniform(-dist.speed_max, dist.speed_max)),
                   float(rng.uniform(-dist.speed_max, dist.speed_max))),
                a=(0.0, 0.0),
            )
        else:
            sprite = replace(sprite, v=(0.0, 0.0), a=(0.0, 0.0))
        sprites.append(sprite)
    return SceneSpec(size=(h, w), background_seed=int(rng.integers(0, 2**31)), sprites=tuple(sprites))


def _partially_on_canvas(sprite: Sprite, canvas: tuple) -> bool:
    h, w = canvas
    half = max(sprite.size) / 2.0
    for tau in (0.0, 0.25, 0.5, 0.75, 1.0):
        cx, cy = sprite.center(tau)
        if not (-half + 2 < cx < w - 3 + half and -half + 2 < cy < h - 3 + half):
            return False
    return True


def dataset(seed: int, n: int, dist: SceneDistribution = SceneDistribution(), t: float = 0.5) -> list:
    """Deterministic triplet list: item i depends only on (seed, i)."""
    if n < 1:
        raise ContractViolation(f"dataset size must be >= 1, got {n}")
    out = []
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(i)]))
        out.append(make_triplet(sample_scene(rng, dist), t=t, name=f"synthetic_{seed}_{i}"))
    return out


# deliberately hard motion: the frame-average baseline scores ~25 dB on this
# pack, so the training regression has real headroom to demonstrate
OVERFIT_SEED = 42
OVERFIT_DIST = SceneDistribution(
    canvas=(64, 64),
    sprite_count=(2, 3),
    size_range=(14.0, 30.0),
    speed_max=10.0,
    accel_max=10.0,
    accel_prob=0.5,
    rotate_prob=0.2,
)


def overfit_pack() -> list:
    """The fixed 8-triplet training-correctness pack (checksummed in tests)."""
    return dataset(seed=OVERFIT_SEED, n=8, dist=OVERFIT_DIST)


# ---------------------------------------------------------------------------
# ingestion of real triplet directories


def ingest_triplet_dir(path) -> tuple:
    """Load per-sample folders of three equal-size images, in name order.

    Optional per-sample flow files (two ``.flo``, sorted) become teacher
    flows.  Returns ``(triplets, errors)``: malformed samples are reported
    in ``errors`` while the rest still load.
    """
    root = Path(path)
    if not root.is_dir():
        raise ContractViolation(f"{root}: not a directory")
    triplets: list[Triplet] = []
    errors: list[str] = []
    for sample in sorted(p for p in root.iterdir() if p.is_dir()):
        images = sorted(p for p in sample.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if len(images) != 3:
            errors.append(f"{sample.name}: expected 3 images, found {len(images)}")
            continue
        try:
            frames = [read_image(p) for p in images]
        except Exception as exc:
            errors.append(f"{sample.name}: {exc}")
            continue
        if not (frames[0].shape == frames[1].shape == frames[2].shape):
            errors.append(
                f"{sample.name}: image sizes differ "
                f"({', '.join(str(f.shape) for f in frames)})"
            )
            continue
        flow_files = sorted(p for p in sample.iterdir() if p.suffix.lower() == ".flo")
        flows = None
        if len(flow_files) == 2:
            try:
                flows = (read_flo(flow_files[0]), read_flo(flow_files[1]))
            except Exception as exc:
                errors.append(f"{sample.name}: {exc}")
                continue
            if flows[0].shape[1:] != frames[0].shape[1:]:
                errors.append(f"{sample.name}: flow size {flows[0].shape} != frame size {frames[0].shape}")
                continue
        elif flow_files:
            errors.append(f"{sample.name}: expected 0 or 2 flow files, found {len(flow_files)}")
            continue
        triplets.append(
            Triplet(i0=frames[0], it=frames[1], i1=frames[2], t=0.5, flows=flows, name=sample.name)
        )
    return triplets, errors
