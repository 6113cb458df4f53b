"""Command-line entry point.

Subcommands: train-image, train-video, anonymize-image, anonymize-video,
eval-idi, eval-fid, eval-fvd, curate.  Flags override config-file values.
Exit codes: 0 success, 1 usage error, 2 runtime error, 130 interrupted.

Every successful run drops a ``run_manifest.json`` (command, config
snapshot, seed, version, timestamps, artifact paths) next to its outputs,
written atomically, so a run can be reproduced from its manifest alone.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .config import load_config
from .curation import filter_sequences, write_dataset
from .errors import JaganError, UsageError
from .frameio import (FRAME_PATTERN, load_sequence, load_split, read_frame,
                      write_frame)
from .inference import AnonymizerModel, BurnInConfig
from .metrics import (EmbeddingSequence, RandomProjectionExtractor,
                      RandomProjectionVideoExtractor, embeddings_from_json,
                      fid, format_idi, fvd, idi_from_sequences, idi_pipeline)
from .preprocess import BoundingBox, FileDetections
from .trainer import (ImageTrainer, VideoTrainer, build_models,
                      image_examples_from_sequences,
                      video_examples_from_sequences)

log = logging.getLogger("jagan")


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as UsageError, not SystemExit."""

    def error(self, message):
        err = UsageError(message)
        err.parser = self
        raise err


class _JsonLogFormatter(logging.Formatter):
    def format(self, record):
        entry = {"level": record.levelname, "logger": record.name,
                 "message": record.getMessage()}
        if record.exc_info:
            entry["exc"] = self.formatException(record.exc_info)
        return json.dumps(entry)


def _configure_logging(level: str, json_logs: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    if json_logs:
        handler.setFormatter(_JsonLogFormatter())
    else:
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(getattr(logging, level.upper(), logging.INFO))


def _write_manifest(directory: Path, command: str, cfg_snapshot: dict,
                    seed, artifacts: list, started: str) -> Path:
    manifest = {
        "command": command,
        "config": cfg_snapshot,
        "seed": seed,
        "version": __version__,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "artifacts": [str(a) for a in artifacts],
    }
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / "run_manifest.json"
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(manifest, indent=1))
    os.replace(tmp, path)
    return path


# ---------------------------------------------------------------------------
# Command handlers; each returns (manifest directory, artifact paths)

def _train_overrides(args, mode: str) -> dict:
    return {
        "model": {"resolution": args.resolution},
        "train": {"mode": mode, "max_steps": args.steps,
                  "batch_size": args.batch_size, "seed": args.seed,
                  "lr_g": args.lr_g, "lr_d": args.lr_d,
                  "eval_interval": args.eval_interval},
    }


def _cmd_train(args, mode: str):
    cfg = load_config(args.config, _train_overrides(args, mode))
    video = mode == "video"
    net_cfg = dataclasses.replace(cfg.model, video_mode=video)
    build_examples = (video_examples_from_sequences if video
                      else image_examples_from_sequences)
    train_set = build_examples(load_split(Path(args.data) / "train"),
                               net_cfg.resolution)
    val_dir = Path(args.data) / "val"
    val_set = (build_examples(load_split(val_dir), net_cfg.resolution)
               if val_dir.is_dir() else None)
    out = Path(args.out)
    trainer_cls = VideoTrainer if video else ImageTrainer
    if args.resume:
        trainer = trainer_cls.from_checkpoint(args.resume, train_set,
                                              config=cfg.train,
                                              val_data=val_set, out_dir=out,
                                              weights=cfg.loss)
    else:
        torch.manual_seed(cfg.train.seed)
        trainer = trainer_cls(build_models(net_cfg), cfg.train, train_set,
                              val_data=val_set, out_dir=out, weights=cfg.loss)
    log.info("%s training: %d examples, %d steps, resolution %d",
             mode, len(train_set), cfg.train.max_steps, net_cfg.resolution)
    history = trainer.train()
    if history:
        log.info("finished at step %d: %s", trainer.step,
                 {k: round(v, 4) for k, v in history[-1].items() if k != "step"})
    artifacts = [p for p in (out / "last.ckpt", out / "best.ckpt") if p.exists()]
    return out, cfg, artifacts


def _cmd_anonymize_image(args, cfg):
    model = AnonymizerModel.from_checkpoint(args.ckpt, expect_video=False)
    frame = read_frame(args.input)
    detections = FileDetections.from_json(args.boxes)
    boxes = [b for fid_ in detections.frames() for b in detections(fid_)]
    result = model.anonymize_image(frame, boxes)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_frame(out, result)
    log.info("anonymized %d faces -> %s", len(boxes), out)
    return out.parent, cfg, [out]


def _cmd_anonymize_video(args, cfg):
    model = AnonymizerModel.from_checkpoint(args.ckpt, expect_video=True)
    seq = load_sequence(args.input)
    if args.boxes:
        detections = FileDetections.from_json(args.boxes)
        per_frame = [detections(i) for i in range(len(seq))]
    else:
        per_frame = [[BoundingBox(*b) for b in frame_boxes]
                     for frame_boxes in seq.boxes]
    if not any(per_frame):
        raise UsageError("no face boxes: pass --boxes or put boxes.json in the "
                         "input directory")
    schedule = BurnInConfig(
        n_frames=(args.burn_in_frames if args.burn_in_frames is not None
                  else cfg.inference.n_frames),
        enabled=cfg.inference.enabled and not args.no_burn_in)
    frames = model.anonymize_video(seq.frames, per_frame, schedule)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = []
    for i, frame in enumerate(frames):
        path = out / (FRAME_PATTERN % i)
        write_frame(path, frame)
        artifacts.append(path)
    records = [{"frame": i, "boxes": [list(b.as_tuple()) for b in boxes]}
               for i, boxes in enumerate(per_frame)]
    with open(out / "boxes.json", "w") as fh:
        json.dump(records, fh, indent=1)
    log.info("anonymized %d frames -> %s (%d generator calls)",
             len(frames), out, model.generator_calls)
    return out, cfg, artifacts


# Built-in identity-embedding providers for eval-idi.  "projection" detects
# a fixed center box and embeds its crop through a seeded random projection;
# real pretrained detectors/embedders plug in through this same registry.

def _projection_provider(seed: int):
    proj = RandomProjectionExtractor(dim=128, seed=seed)

    def detector(frame):
        h, w = frame.shape[:2]
        return [BoundingBox(w // 4, h // 4, max(w // 4 + 1, 3 * w // 4),
                            max(h // 4 + 1, 3 * h // 4))]

    def embedder(frame, box):
        crop = frame[box.y0:box.y1, box.x0:box.x1]
        vec = proj(crop[None])[0]
        return vec / np.linalg.norm(vec)

    return detector, embedder


EMBEDDING_PROVIDERS = {"projection": _projection_provider}


def _sequences_from_sidecar(split_dir: Path, name: str, key: str):
    candidate = split_dir / name
    if candidate.exists():
        return embeddings_from_json(candidate)
    combined = Path(name)
    if combined.exists():
        with open(combined) as fh:
            data = json.load(fh)
        if isinstance(data, dict) and key in data:
            return [EmbeddingSequence(str(r.get("sequence_id", i)),
                                      np.asarray(r["embeddings"]))
                    for i, r in enumerate(data[key])]
        raise UsageError(f"{combined} must map 'real'/'generated' to record lists")
    raise UsageError(f"embeddings sidecar not found: {split_dir / name} or {name}")


def _cmd_eval_idi(args, cfg):
    spec = args.embeddings
    if spec.startswith("file:"):
        name = spec[len("file:"):]
        real = _sequences_from_sidecar(Path(args.real), name, "real")
        gen = _sequences_from_sidecar(Path(args.generated), name, "generated")
        result = idi_from_sequences(real, gen)
    elif spec in EMBEDDING_PROVIDERS:
        detector, embedder = EMBEDDING_PROVIDERS[spec](args.feature_seed)
        real_videos = [s.frames for s in load_split(args.real)]
        gen_videos = [s.frames for s in load_split(args.generated)]
        result = idi_pipeline(real_videos, gen_videos, detector, embedder)
    else:
        raise UsageError(f"--embeddings must be file:<sidecar> or one of: "
                         f"{', '.join(sorted(EMBEDDING_PROVIDERS))}")
    log.info("IdI %s (real median %.6g, generated median %.6g)",
             format_idi(result.idi), result.real_median, result.gen_median)
    return _emit_metric(args, cfg, result.as_dict())


def _load_image_dir(path) -> np.ndarray:
    files = sorted(Path(path).rglob("*.png"))
    if not files:
        raise UsageError(f"no PNG files under {path}")
    return np.stack([read_frame(f) for f in files])


def _cmd_eval_fid(args, cfg):
    extractor = RandomProjectionExtractor(dim=args.feature_dim,
                                          seed=args.feature_seed)
    value = fid(extractor(_load_image_dir(args.real)),
                extractor(_load_image_dir(args.generated)))
    log.info("FID %.4f", value)
    return _emit_metric(args, cfg, {"fid": value})


def _cmd_eval_fvd(args, cfg):
    extractor = RandomProjectionVideoExtractor(dim=args.feature_dim,
                                               seed=args.feature_seed)
    real = [np.stack(s.frames) for s in load_split(args.real)]
    gen = [np.stack(s.frames) for s in load_split(args.generated)]
    value = fvd(extractor(real), extractor(gen))
    log.info("FVD %.4f", value)
    return _emit_metric(args, cfg, {"fvd": value})


def _emit_metric(args, cfg, payload: dict):
    text = json.dumps(payload)
    print(text)
    artifacts = []
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text + "\n")
        artifacts.append(out)
    manifest_dir = Path(args.out).parent if args.out else Path.cwd()
    return manifest_dir, cfg, artifacts


def _cmd_curate(args, cfg_unused):
    overrides = {"curation": {"sigma_iou": args.sigma_iou,
                              "min_track_frames": args.min_len,
                              "max_hamming": args.max_hamming}}
    cfg = load_config(args.config, overrides)
    frames_dir = Path(args.frames)
    files = sorted(frames_dir.glob("*.png"))
    if not files:
        raise UsageError(f"no PNG frames in {frames_dir}")
    frames = [read_frame(f) for f in files]
    detections = FileDetections.from_json(args.detections)
    per_frame = [detections(i) for i in range(len(frames))]
    sequences = filter_sequences(
        frames, per_frame, sigma_iou=cfg.curation.sigma_iou,
        min_len=cfg.curation.min_track_frames,
        max_hamming=cfg.curation.max_hamming,
        resolution=cfg.curation.crop_resolution)
    out = Path(args.out)
    split_dir = write_dataset(sequences, out, split=args.split)
    log.info("curated %d sequences (%d frames in) -> %s",
             len(sequences), len(frames), split_dir)
    return out, cfg, [split_dir / "manifest.json"]


# ---------------------------------------------------------------------------
# Parser

def build_parser() -> _Parser:
    parser = _Parser(prog="jagan",
                     description="Face anonymization by inpainting generated faces")
    parser.add_argument("--log-level", default="info",
                        help="debug, info, warning or error")
    parser.add_argument("--json-logs", action="store_true",
                        help="emit log lines as JSON objects")
    parser.add_argument("--seed", type=int, default=None,
                        help="seed threaded through every RNG")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    for mode in ("image", "video"):
        p = sub.add_parser(f"train-{mode}", help=f"train the {mode} model")
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--data", required=True,
                       help="dataset root containing train/ (and optionally val/)")
        p.add_argument("--out", required=True, help="checkpoint directory")
        p.add_argument("--resume", help="checkpoint to continue from")
        p.add_argument("--resolution", type=int)
        p.add_argument("--steps", type=int, help="override train.max_steps")
        p.add_argument("--batch-size", type=int)
        p.add_argument("--lr-g", type=float)
        p.add_argument("--lr-d", type=float)
        p.add_argument("--eval-interval", type=int)

    p = sub.add_parser("anonymize-image", help="anonymize faces in one image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="input", required=True, help="input PNG")
    p.add_argument("--boxes", required=True, help="detection sidecar JSON")
    p.add_argument("--out", required=True, help="output PNG")
    p.add_argument("--config", help="TOML config file")

    p = sub.add_parser("anonymize-video", help="anonymize a frame directory")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="input", required=True, help="input frame directory")
    p.add_argument("--boxes", help="detection sidecar JSON "
                                   "(default: boxes.json inside the input dir)")
    p.add_argument("--out", required=True, help="output frame directory")
    p.add_argument("--no-burn-in", action="store_true")
    p.add_argument("--burn-in-frames", type=int, default=None)
    p.add_argument("--config", help="TOML config file")

    p = sub.add_parser("eval-idi", help="identity invariance score")
    p.add_argument("--real", required=True, help="directory of real sequences")
    p.add_argument("--generated", required=True,
                   help="directory of anonymized sequences")
    p.add_argument("--embeddings", required=True,
                   help="'file:<sidecar>' or a provider name")
    p.add_argument("--feature-seed", type=int, default=0)
    p.add_argument("--out", help="also write the JSON result here")

    for name, blurb in (("eval-fid", "Frechet distance over image features"),
                        ("eval-fvd", "Frechet distance over clip features")):
        p = sub.add_parser(name, help=blurb)
        p.add_argument("--real", required=True)
        p.add_argument("--generated", required=True)
        p.add_argument("--feature-dim", type=int, default=64)
        p.add_argument("--feature-seed", type=int, default=0)
        p.add_argument("--out", help="also write the JSON result here")

    p = sub.add_parser("curate", help="build a training dataset from raw footage")
    p.add_argument("--frames", required=True, help="directory of PNG frames")
    p.add_argument("--detections", required=True, help="detection sidecar JSON")
    p.add_argument("--out", required=True, help="dataset root to write")
    p.add_argument("--split", default="train")
    p.add_argument("--sigma-iou", type=float, default=None)
    p.add_argument("--min-len", type=int, default=None)
    p.add_argument("--max-hamming", type=int, default=None)
    p.add_argument("--config", help="TOML config file")

    return parser


def _dispatch(args):
    if args.command == "train-image":
        return _cmd_train(args, "image")
    if args.command == "train-video":
        return _cmd_train(args, "video")
    cfg = load_config(getattr(args, "config", None))
    return {
        "anonymize-image": _cmd_anonymize_image,
        "anonymize-video": _cmd_anonymize_video,
        "eval-idi": _cmd_eval_idi,
        "eval-fid": _cmd_eval_fid,
        "eval-fvd": _cmd_eval_fvd,
        "curate": _cmd_curate,
    }[args.command](args, cfg)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as err:
        getattr(err, "parser", parser).print_help(sys.stderr)
        print(f"error: {err}", file=sys.stderr)
        return 1
    _configure_logging(args.log_level, args.json_logs)
    if args.seed is not None:
        torch.manual_seed(args.seed)
        np.random.seed(args.seed)
    started = datetime.now(timezone.utc).isoformat()
    try:
        manifest_dir, cfg, artifacts = _dispatch(args)
    except UsageError as err:
        if hasattr(err, "parser"):
            err.parser.print_help(sys.stderr)
        print(f"error: {err}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        log.warning("interrupted")
        return 130
    except JaganError as err:
        log.error("%s: %s", type(err).__name__, err)
        return 2
    except OSError as err:
        log.error("%s", err)
        return 2
    snapshot = dataclasses.asdict(cfg) if dataclasses.is_dataclass(cfg) else {}
    _write_manifest(Path(manifest_dir), args.command, snapshot, args.seed,
                    artifacts, started)
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
