"""Command-line front end: ``synth``, ``pair``, ``rectify`` and ``analyze``.

Exit codes: 0 success, 1 configuration or I/O error, 2 finished with an empty result.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from . import __version__
from .analysis import (
    depth_error_sensitivity,
    estimated_motion_statistics,
    export_curve,
    export_stats,
    motion_statistics,
)
from .config import RunConfig, load_run_config
from .correspondence import LUMA
from .dataset import SequenceSpec, frame_dir, list_frames, load_ground_truth, write_sequence
from .errors import ConfigError, NoOverlapError, WeakRectError
from .fileio import (
    list_images,
    load_image,
    read_intrinsics,
    read_json,
    save_mask_png,
    save_png,
    write_json_atomic,
    write_text_atomic,
)
from .geometry import CameraIntrinsics
from .manifest import SequenceManifest, load_manifest, pair_record, resolve, save_manifest
from .pairing import FrameRef, ImageMatcher, PairStatus, pair_seed, pair_sequence
from .rectify import measure_residual_rotation, weak_rectify

logger = logging.getLogger("weakrect")

EXIT_OK, EXIT_CONFIG, EXIT_EMPTY = 0, 1, 2
MANIFEST_NAME = "manifest.json"
INDEX_NAME = "index.json"


def _parallel_map(fn: Callable, items: list, jobs: int) -> list:
    """Order-preserving map, in worker processes when ``jobs > 1``."""
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _rel(path: str | os.PathLike, start: str | os.PathLike) -> str:
    return Path(os.path.relpath(path, start)).as_posix()


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then ``--config``, then explicit flags."""
    cfg = load_run_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides: dict[str, Any] = {}
    for flag, key in [
        ("m", "m"), ("k", "k"), ("flow_min", "flow_min"), ("flow_max", "flow_max"),
        ("seed", "seed"), ("max_uses_per_frame", "max_uses_per_frame"), ("fill", "fill"),
        ("samples", "samples_per_pair"),
    ]:
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "eps", None) is not None:
        overrides["eps_list"] = tuple(args.eps)
    if getattr(args, "measure_residual", False):
        overrides["measure_residual"] = True
    if not overrides:
        return cfg
    return RunConfig.from_dict({**cfg.as_dict(), **overrides})


# ---- synth ----------------------------------------------------------------------


def cmd_synth(args: argparse.Namespace) -> int:
    spec = SequenceSpec(
        frames=args.frames,
        width=args.width,
        height=args.height,
        focal=args.focal,
        step=args.step,
        rotation_amplitude_deg=args.rotation_deg,
        seed=args.seed if args.seed is not None else 0,
    )
    out = write_sequence(args.output, spec, args.jobs)
    print(f"wrote {spec.frames} frames to {out}")
    return EXIT_OK


# ---- pair -----------------------------------------------------------------------


def _readable_frames(frames: list[FrameRef]) -> tuple[list[FrameRef], tuple[int, int] | None]:
    good, size = [], None
    for f in frames:
        try:
            with Image.open(f.path) as im:
                im.load()
                dims = im.size
        except (OSError, UnidentifiedImageError) as exc:
            logger.warning("skipping unreadable image %s: %s", f.path, exc)
            continue
        if size is None:
            size = dims
        elif dims != size:
            logger.warning("skipping %s: size %s differs from %s", f.path, dims, size)
            continue
        good.append(f)
    return good, size


def _is_sequence(d: Path) -> bool:
    return bool(list_images(frame_dir(d)))


def pair_one(seq_dir: Path, out_dir: Path, K: CameraIntrinsics, cfg: RunConfig, jobs: int) -> SequenceManifest:
    frames, size = _readable_frames(list_frames(seq_dir))
    if len(frames) < 2:
        raise ConfigError(f"{seq_dir}: fewer than two readable frames")
    out_dir.mkdir(parents=True, exist_ok=True)
    candidates = pair_sequence(frames, K, cfg.pairing, ImageMatcher(cfg.matching), cfg.ransac, jobs)

    (out_dir / "matches").mkdir(exist_ok=True)
    records = []
    for c in candidates:
        rel = None
        if c.inliers is not None:
            name = f"matches/{c.a.index:06d}_{c.b.index:06d}.npy"
            np.save(out_dir / name, np.hstack(c.inliers))
            rel = name
        rec = pair_record(c, rel)
        rec["a"]["path"] = _rel(c.a.path, out_dir)
        rec["b"]["path"] = _rel(c.b.path, out_dir)
        records.append(rec)
    config = cfg.as_dict()
    config["luma_weights"] = LUMA.tolist()
    manifest = SequenceManifest(
        source_dir=_rel(seq_dir, out_dir),
        resolution=size,
        intrinsics=K,
        config=config,
        frames=[{"index": f.index, "path": _rel(f.path, out_dir)} for f in frames],
        pairs=records,
    )
    save_manifest(out_dir / MANIFEST_NAME, manifest)
    return manifest


def cmd_pair(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    src = Path(args.input)
    if not src.is_dir():
        raise ConfigError(f"{src} is not a directory")
    out = Path(args.output) if args.output else src
    if _is_sequence(src):
        sequences = [(src, out)]
    else:
        sequences = [(d, out / d.name) for d in sorted(p for p in src.iterdir() if p.is_dir()) if _is_sequence(d)]
    if not sequences:
        raise ConfigError(f"no images found under {src}")

    accepted, index = 0, []
    for seq_dir, seq_out in sequences:
        intr = Path(args.intrinsics) if args.intrinsics else seq_dir / "intrinsics.txt"
        K = read_intrinsics(intr)
        manifest = pair_one(seq_dir, seq_out, K, cfg, args.jobs)
        n = len(manifest.accepted())
        accepted += n
        index.append({"manifest": _rel(seq_out / MANIFEST_NAME, out), "accepted": n, "candidates": len(manifest.pairs)})
        counts: dict[str, int] = {}
        for r in manifest.pairs:
            counts[r["status"]] = counts.get(r["status"], 0) + 1
        print(f"{seq_dir}: {len(manifest.pairs)} candidates, " + ", ".join(f"{k}={v}" for k, v in sorted(counts.items())))
    if len(sequences) > 1:
        write_json_atomic(out / INDEX_NAME, {"version": "1", "sequences": index})
    return EXIT_OK if accepted else EXIT_EMPTY


# ---- rectify --------------------------------------------------------------------


def _rectify_task(task) -> dict[str, Any]:
    manifest_path, rec, K, cfg_dict, pair_seed_value = task
    cfg = RunConfig.from_dict(cfg_dict)
    base = Path(manifest_path).parent
    img1 = load_image(resolve(manifest_path, rec["a"]["path"]))
    img2 = load_image(resolve(manifest_path, rec["b"]["path"]))
    R = np.array(rec["pose"]["rotation"])
    try:
        pair = weak_rectify(img1, img2, K, R, cfg.resample)
    except NoOverlapError as exc:
        return {"error": str(exc)}
    stem = f"rectified/{rec['a']['index']:06d}_{rec['b']['index']:06d}"
    out: dict[str, Any] = {
        "pair": [rec["a"]["index"], rec["b"]["index"]],
        "img1": f"{stem}_1.png",
        "img2": f"{stem}_2.png",
        "mask1": None,
        "mask2": None,
        "H1": pair.H1.tolist(),
        "H2": pair.H2.tolist(),
        "crop": list(pair.crop),
        "K_out": pair.K_out.as_dict(),
        "residual_rotation_deg": None,
    }
    save_png(base / out["img1"], pair.img1)
    save_png(base / out["img2"], pair.img2)
    if cfg.resample.fill == "mark-invalid":
        out["mask1"], out["mask2"] = f"{stem}_1_mask.png", f"{stem}_2_mask.png"
        save_mask_png(base / out["mask1"], pair.valid1)
        save_mask_png(base / out["mask2"], pair.valid2)
    if cfg.measure_residual:
        try:
            ransac = dataclasses.replace(cfg.ransac, seed=pair_seed_value)
            out["residual_rotation_deg"] = measure_residual_rotation(pair, cfg.matching, ransac)
        except WeakRectError as exc:
            logger.warning("residual rotation for %s unavailable: %s", out["pair"], exc)
    return out


def rectify_manifest(manifest_path: Path, cfg: RunConfig, jobs: int) -> SequenceManifest:
    manifest = load_manifest(manifest_path)
    accepted = manifest.accepted()
    (manifest_path.parent / "rectified").mkdir(exist_ok=True)
    tasks = [
        (str(manifest_path), rec, manifest.intrinsics, cfg.as_dict(), pair_seed(cfg.seed, rec["a"]["index"], rec["b"]["index"]))
        for rec in accepted
    ]
    results = _parallel_map(_rectify_task, tasks, jobs)
    rectified = []
    for rec, res in zip(accepted, results):
        if "error" in res:
            rec["status"] = PairStatus.REJECTED_NO_OVERLAP.value
            rec["reason"] = res["error"]
            logger.warning("pair %s demoted: %s", (rec["a"]["index"], rec["b"]["index"]), res["error"])
        else:
            rectified.append(res)
    manifest.rectified = rectified
    save_manifest(manifest_path, manifest)
    return manifest


def _manifest_paths(target: Path) -> list[Path]:
    if target.is_dir():
        if (target / MANIFEST_NAME).is_file():
            return [target / MANIFEST_NAME]
        if (target / INDEX_NAME).is_file():
            return [target / e["manifest"] for e in read_json(target / INDEX_NAME)["sequences"]]
        raise ConfigError(f"no manifest in {target}")
    return [target]


def cmd_rectify(args: argparse.Namespace) -> int:
    paths = _manifest_paths(Path(args.manifest))
    total = 0
    for path in paths:
        manifest = load_manifest(path)
        # the run's own settings, with fill policy and residual measurement from the command line
        cfg = RunConfig.from_dict({k: v for k, v in manifest.config.items() if k != "luma_weights"})
        cfg = dataclasses.replace(
            cfg,
            fill=args.fill or cfg.fill,
            measure_residual=args.measure_residual or cfg.measure_residual,
        )
        if not manifest.accepted():
            print(f"{path}: no accepted pairs")
            continue
        manifest = rectify_manifest(path, cfg, args.jobs)
        total += len(manifest.rectified)
        for r in manifest.rectified:
            extra = "" if r["residual_rotation_deg"] is None else f", residual {r['residual_rotation_deg']:.4f} deg"
            print(f"{path}: pair {tuple(r['pair'])} crop {tuple(r['crop'])}{extra}")
    return EXIT_OK if total else EXIT_EMPTY


# ---- analyze --------------------------------------------------------------------


def _gt_pairs(args: argparse.Namespace, gt) -> list[tuple[int, int]]:
    if args.manifest:
        manifest = load_manifest(args.manifest)
        return [(r["a"]["index"], r["b"]["index"]) for r in manifest.accepted()]
    return [(i, i + args.pair_stride) for i in range(0, len(gt) - args.pair_stride)]


def cmd_analyze(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    depth_range = (cfg.depth_min, cfg.depth_max)
    if args.ground_truth:
        gt = load_ground_truth(args.ground_truth)
        keys = _gt_pairs(args, gt)
        if not keys:
            text = export_stats(motion_statistics([], gt.intrinsics)) if args.mode == "stats" else export_curve(
                depth_error_sensitivity([], gt.intrinsics, cfg.eps_list)
            )
            write_text_atomic(args.output, text)
            return EXIT_EMPTY
        pairs = [(gt.frame(a), gt.frame(b)) for a, b in keys]
        ids = [f"{a:06d}_{b:06d}" for a, b in keys]
        if args.mode == "stats":
            result = motion_statistics(pairs, gt.intrinsics, cfg.samples_per_pair, cfg.seed, depth_range, ids)
            text, empty = export_stats(result), not result.pair_ids
        else:
            curve = depth_error_sensitivity(pairs, gt.intrinsics, cfg.eps_list, cfg.samples_per_pair, cfg.seed, depth_range)
            text, empty = export_curve(curve), not any(curve.n_samples)
    elif args.manifest:
        if args.mode != "stats":
            raise ConfigError("sensitivity mode needs --ground-truth depth and poses")
        manifest = load_manifest(args.manifest)
        entries, ids = [], []
        for r in manifest.accepted():
            if not r.get("matches"):
                continue
            m = np.load(resolve(args.manifest, r["matches"]))
            entries.append((np.array(r["pose"]["rotation"]), m[:, :2], m[:, 2:]))
            ids.append(f"{r['a']['index']:06d}_{r['b']['index']:06d}")
        result = estimated_motion_statistics(entries, manifest.intrinsics, ids)
        text, empty = export_stats(result), not result.pair_ids
    else:
        raise ConfigError("give --ground-truth and/or --manifest")
    write_text_atomic(args.output, text)
    print(f"wrote {args.output}")
    return EXIT_EMPTY if empty else EXIT_OK


# ---- parser ---------------------------------------------------------------------


def _eps_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad eps list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="weakrect", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (unknown keys are rejected)")
    common.add_argument("--seed", type=int, help="run seed (default 0)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")

    p = sub.add_parser("synth", parents=[common], help="render a synthetic sequence with ground truth")
    p.add_argument("--output", required=True, help="directory to create")
    p.add_argument("--frames", type=int, default=25)
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=480)
    p.add_argument("--focal", type=float, default=320.0, help="focal length in px")
    p.add_argument("--step", type=float, default=0.025, help="camera travel per frame (0 for pure rotation)")
    p.add_argument("--rotation-deg", type=float, default=1.5, help="peak orientation wobble per axis")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pair", parents=[common], help="select keyframe pairs by translational flow")
    p.add_argument("input", help="sequence directory (images or frames/), or a directory of sequences")
    p.add_argument("--intrinsics", help="fx fy cx cy text file or JSON (default <sequence>/intrinsics.txt)")
    p.add_argument("--output", help="manifest directory (default: the input directory)")
    p.add_argument("--m", type=int, help="keyframe stride (default 10)")
    p.add_argument("--k", type=int, help="pairing window (default 10)")
    p.add_argument("--flow-min", type=float, help="lower flow bound, px, exclusive (default 10)")
    p.add_argument("--flow-max", type=float, help="upper flow bound, px, exclusive (default 50)")
    p.add_argument("--max-uses-per-frame", type=int, help="cap on accepted pairs per frame (default unlimited)")
    p.set_defaults(func=cmd_pair)

    p = sub.add_parser("rectify", parents=[common], help="weakly rectify the accepted pairs of a manifest")
    p.add_argument("manifest", help="manifest file, or a directory holding manifest.json or index.json")
    p.add_argument("--fill", choices=["mark-invalid", "constant"], help="out-of-frame pixel policy")
    p.add_argument("--measure-residual", action="store_true", help="re-estimate rotation on each rectified pair")
    p.set_defaults(func=cmd_rectify)

    p = sub.add_parser("analyze", parents=[common], help="motion statistics or depth-error sensitivity tables")
    p.add_argument("--ground-truth", help="sequence directory with depth/, poses.txt and intrinsics.txt")
    p.add_argument("--manifest", help="manifest whose accepted pairs are analyzed")
    p.add_argument("--mode", choices=["stats", "sensitivity"], default="stats")
    p.add_argument("--eps", type=_eps_list, help="comma-separated relative depth errors")
    p.add_argument("--samples", type=int, help="sampled points per pair (default 1000)")
    p.add_argument("--pair-stride", type=int, default=1, help="frame gap of ground-truth pairs without a manifest")
    p.add_argument("--output", required=True, help="CSV file to write")
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
