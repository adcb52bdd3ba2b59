"""Batch command-line front door.

Subcommands: ``make-dataset``, ``train``, ``interpolate``, ``eval``,
``ablate``.  Exit codes: 0 success, 1 usage/config error, 2 data error,
3 numeric failure (training divergence).  Diagnostics go to stderr;
results and report paths to stdout.

The run configuration file is one JSON object with optional sections
``model``, ``train``, ``loss`` and ``data`` (scene distribution); unknown
keys anywhere are rejected so typos in ablation runs fail loudly.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import CheckpointError, ConfigError, ContractViolation, DataError, TrainingDiverged
from .evaluate import ablation_suite, evaluate, interpolate_midpoint, multiframe
from .fileio import check_keys, load_json_config, read_image, write_flo, write_image
from .losses import LossWeights
from .model import ModelConfig
from .synth import SceneDistribution, ingest_triplet_dir, make_triplet, sample_scene
from .train import TrainConfig, checkpoint_load, model_config_from_dict, train

CONFIG_SECTIONS = {"model", "train", "loss", "data"}


@dataclass
class RunConfig:
    model: ModelConfig
    train: TrainConfig
    data: SceneDistribution


def _weights_from_dict(d: dict) -> LossWeights:
    check_keys(d, {f.name for f in dataclasses.fields(LossWeights)}, "loss section")
    return LossWeights(**d)


def _train_config_from_dict(d: dict, weights: LossWeights) -> TrainConfig:
    allowed = {f.name for f in dataclasses.fields(TrainConfig)} - {"weights"}
    check_keys(d, allowed, "train section")
    return TrainConfig(weights=weights, **d)


def _distribution_from_dict(d: dict) -> SceneDistribution:
    check_keys(d, {f.name for f in dataclasses.fields(SceneDistribution)}, "data section")
    kwargs = dict(d)
    for key in ("canvas", "sprite_count", "size_range", "kinds"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    return SceneDistribution(**kwargs)


def load_run_config(path) -> RunConfig:
    raw = load_json_config(path) if path else {}
    check_keys(raw, CONFIG_SECTIONS, "config root")
    weights = _weights_from_dict(raw.get("loss", {}))
    return RunConfig(
        model=model_config_from_dict(raw.get("model", {})),
        train=_train_config_from_dict(raw.get("train", {}), weights),
        data=_distribution_from_dict(raw.get("data", {})),
    )


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _say(msg: str) -> None:
    print(msg)


def _warn(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# subcommands


def cmd_make_dataset(args) -> int:
    cfg = load_run_config(args.config)
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise DataError(f"{out}: output directory is not empty (use --force to overwrite)")
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "seed": args.seed,
        "count": args.count,
        "t": 0.5,
        "distribution": asdict(cfg.data),
        "samples": [],
    }
    for i in range(args.count):
        rng = np.random.default_rng(np.random.SeedSequence([int(args.seed), int(i)]))
        tri = make_triplet(sample_scene(rng, cfg.data), t=0.5, name=f"sample_{i:04d}")
        d = out / tri.name
        d.mkdir(exist_ok=True)
        files = {
            "frame_0.png": lambda p: write_image(tri.i0, p),
            "frame_t.png": lambda p: write_image(tri.it, p),
            "frame_1.png": lambda p: write_image(tri.i1, p),
            "flow_t0.flo": lambda p: write_flo(tri.flows[0], p),
            "flow_t1.flo": lambda p: write_flo(tri.flows[1], p),
        }
        checksums = {}
        for name, writer in files.items():
            writer(d / name)
            checksums[name] = _sha256(d / name)
        manifest["samples"].append({"name": tri.name, "checksums": checksums})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    _say(f"wrote {args.count} samples to {out} (manifest: {out / 'manifest.json'})")
    return 0


def _load_data(path, require_flows: bool):
    triplets, errors = ingest_triplet_dir(path)
    for e in errors:
        _warn(f"skipping sample: {e}")
    if not triplets:
        raise DataError(f"{path}: no usable triplets found")
    if require_flows and any(t.flows is None for t in triplets):
        missing = [t.name for t in triplets if t.flows is None][:3]
        raise ConfigError(
            "the flow-matching loss weight beta is positive, which requires "
            "per-sample teacher flow files (flow_t0.flo / flow_t1.flo) "
            f"anchored at the middle frame; samples without flows: {missing}. "
            "Supply flow files or set loss.beta to 0."
        )
    return triplets


def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    data = _load_data(args.data, require_flows=cfg.train.weights.beta > 0)
    out = Path(args.out)
    result = train(cfg.model, cfg.train, data, out_dir=out, resume=args.resume)
    final = result.log[-1] if result.log else {}
    _say(
        f"trained {result.total_steps} steps; final loss {final.get('loss', float('nan')):.5f}; "
        f"checkpoint: {out / 'ckpt_final.zip'}; log: {out / 'metrics.jsonl'}"
    )
    return 0


def cmd_interpolate(args) -> int:
    params, _, _, cfg = checkpoint_load(args.ckpt)
    i0 = read_image(args.frame0)
    i1 = read_image(args.frame1)
    if i0.shape != i1.shape:
        raise DataError(f"input frame sizes differ: {i0.shape} vs {i1.shape}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.factor == 2:
        frames = [(0.5, interpolate_midpoint(i0, i1, params, cfg))]
    else:
        frames = multiframe(i0, i1, params, cfg, k={4: 3, 6: 5}[args.factor])
    for t, frame in frames:
        write_image(frame, out / f"t{t:.3f}.png")
    _say(f"wrote {len(frames)} frames to {out}: " + ", ".join(f"t{t:.3f}" for t, _ in frames))
    return 0


def cmd_eval(args) -> int:
    params, _, _, cfg = checkpoint_load(args.ckpt)
    data = _load_data(args.data, require_flows=False)
    report = evaluate(data, params, cfg, dump_dir=args.dump)
    report_path = Path(args.report)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    _say(report.table())
    _say(f"report: {report_path}")
    return 0


def cmd_ablate(args) -> int:
    cfg = load_run_config(args.config)
    seeds = [int(s) for s in args.seeds.split(",") if s]
    if not seeds:
        raise ConfigError("--seeds needs at least one integer")
    depths = tuple(int(d) for d in args.depths.split(",")) if args.depths else ()
    data = _load_data(args.data, require_flows=cfg.train.weights.beta > 0)
    report = ablation_suite(cfg.model, cfg.train, data, seeds=seeds, depths=depths)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for seed in report.per_seed:
        payload = {name: rep.to_dict() for name, rep in report.per_seed[seed].items()}
        (out / f"ablation_seed{seed}.json").write_text(json.dumps(payload, indent=2, sort_keys=True))
    (out / "ablation_mean.json").write_text(json.dumps(report.mean, indent=2, sort_keys=True))
    _say(report.table())
    _say(f"tables: {out}")
    return 0


# ---------------------------------------------------------------------------
# parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="midflow", description="Frame interpolation via intermediate optical flow")
    sub = p.add_subparsers(dest="command", required=True)

    mk = sub.add_parser("make-dataset", help="materialize synthetic triplets with exact flows")
    mk.add_argument("--config", default=None, help="run configuration JSON")
    mk.add_argument("--out", required=True)
    mk.add_argument("--seed", type=int, default=0)
    mk.add_argument("--count", type=int, default=8)
    mk.add_argument("--force", action="store_true", help="overwrite a non-empty output dir")
    mk.set_defaults(func=cmd_make_dataset)

    tr = sub.add_parser("train", help="train on a triplet directory")
    tr.add_argument("--config", default=None)
    tr.add_argument("--data", required=True)
    tr.add_argument("--out", required=True)
    tr.add_argument("--resume", default=None, help="checkpoint to continue from")
    tr.set_defaults(func=cmd_train)

    it = sub.add_parser("interpolate", help="interpolate frames between two images")
    it.add_argument("--ckpt", required=True)
    it.add_argument("--frame0", required=True)
    it.add_argument("--frame1", required=True)
    it.add_argument("--factor", type=int, choices=(2, 4, 6), default=2)
    it.add_argument("--out", required=True)
    it.set_defaults(func=cmd_interpolate)

    ev = sub.add_parser("eval", help="score a checkpoint on a triplet directory")
    ev.add_argument("--ckpt", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--report", required=True)
    ev.add_argument("--dump", default=None, help="directory for side-by-side PNG dumps")
    ev.set_defaults(func=cmd_eval)

    ab = sub.add_parser("ablate", help="train/evaluate component-removal variants")
    ab.add_argument("--config", default=None)
    ab.add_argument("--data", required=True)
    ab.add_argument("--seeds", required=True, help="comma-separated seeds")
    ab.add_argument("--depths", default="", help="comma-separated cascade depths to sweep")
    ab.add_argument("--out", required=True)
    ab.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        _warn(f"usage error: {exc}")
        return 1
    except (DataError, CheckpointError, ContractViolation, FileNotFoundError) as exc:
        _warn(f"data error: {exc}")
        return 2
    except TrainingDiverged as exc:
        _warn(f"numeric failure: {exc}")
        return 3
    except SystemExit as exc:  # argparse -h
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
