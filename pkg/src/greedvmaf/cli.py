"""Command-line entry points: features, train, predict, evaluate.

Every subcommand is deterministic given its flags and seed.  Exit code 0
means the requested artifact was fully written; missing input files exit
with code 2, other failures with code 1.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path

import numpy as np

from .evaluate import (
    DatasetManifest,
    Hyperparams,
    ManifestRow,
    SplitSpec,
    run_all_splits,
    run_experiment,
    split_by_content,
)
from .features import (
    config_digest,
    extract_feature_vector,
    feature_names_for,
    read_feature_csv,
    write_entropy_csv,
    write_feature_csv,
)
from .greed import GreedConfig
from .svr import grid_search, load_model, predict, save_model, train_svr
from .video import load_raw_yuv, load_y4m

__all__ = ["main"]


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--scales", default="4,5", help="comma-separated downscale exponents"
    )
    parser.add_argument("--patch-size", type=int, default=5)
    parser.add_argument(
        "--sigma-n2", type=float, default=0.1, help="neural-noise variance"
    )
    parser.add_argument("--ms-window", type=int, default=7)


def _add_raw_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--width", type=int, help="raw YUV frame width")
    parser.add_argument("--height", type=int, help="raw YUV frame height")
    parser.add_argument("--pix-fmt", default="yuv420p", help="raw YUV pixel format")
    parser.add_argument(
        "--fps", help="raw YUV frame rate for both sides (per-side flags override)"
    )


def _config_from_args(args) -> GreedConfig:
    scales = tuple(int(s) for s in str(args.scales).split(",") if s != "")
    return GreedConfig(
        scales=scales,
        patch_size=args.patch_size,
        sigma_n2=args.sigma_n2,
        ms_window=args.ms_window,
    )


def _load_video(
    path: str,
    fps: Fraction | None = None,
    width: int | None = None,
    height: int | None = None,
    pix_fmt: str = "yuv420p",
    content_id: str | None = None,
):
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(path)
    if p.suffix.lower() == ".y4m":
        return load_y4m(p, content_id=content_id)
    if width is None or height is None or fps is None:
        raise ValueError(f"{path}: raw YUV needs --width, --height and a frame rate")
    return load_raw_yuv(p, width, height, fps, pix_fmt=pix_fmt, content_id=content_id)


def _parse_fps(text: str | None) -> Fraction | None:
    return None if text is None else Fraction(str(text))


# ---------------------------------------------------------------------------
# Manifest handling

_MANIFEST_PATH_HEADER = ("ref_path", "dist_path", "content_id", "fps_ref", "fps_dist", "mos")


def _read_manifest(path: Path) -> DatasetManifest:
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: empty manifest")
        fields = set(reader.fieldnames)
        has_paths = {"ref_path", "dist_path"} <= fields
        has_features = "feature_csv" in fields
        if not (has_paths or has_features):
            raise ValueError(
                f"{path}: manifest needs ref_path/dist_path or feature_csv columns"
            )
        for required in ("content_id", "fps_ref", "fps_dist", "mos"):
            if required not in fields:
                raise ValueError(f"{path}: manifest missing column {required!r}")
        rows = []
        for rec in reader:
            rows.append(
                ManifestRow(
                    content_id=rec["content_id"],
                    mos=float(rec["mos"]),
                    fps_ref=Fraction(rec["fps_ref"]),
                    fps_dist=Fraction(rec["fps_dist"]),
                    ref_path=rec.get("ref_path") or None,
                    dist_path=rec.get("dist_path") or None,
                    feature_csv=rec.get("feature_csv") or None,
                )
            )
    if not rows:
        raise ValueError(f"{path}: manifest has no rows")
    return DatasetManifest(tuple(rows))


def _pair_cache_key(row: ManifestRow, digest: str) -> str:
    key = json.dumps(
        [str(Path(row.ref_path).resolve()), str(Path(row.dist_path).resolve()), digest]
    )
    return hashlib.sha256(key.encode()).hexdigest()[:24]


def _extract_row(task):
    """Worker: feature vector for one manifest row (used by the process pool)."""
    row_doc, width, height, pix_fmt, config_doc = task
    config = GreedConfig(
        scales=tuple(config_doc["scales"]),
        patch_size=config_doc["patch_size"],
        sigma_n2=config_doc["sigma_n2"],
        ms_window=config_doc["ms_window"],
    )
    ref = _load_video(
        row_doc["ref_path"],
        fps=Fraction(row_doc["fps_ref"]),
        width=width,
        height=height,
        pix_fmt=pix_fmt,
        content_id=row_doc["content_id"],
    )
    dist = _load_video(
        row_doc["dist_path"],
        fps=Fraction(row_doc["fps_dist"]),
        width=width,
        height=height,
        pix_fmt=pix_fmt,
        content_id=row_doc["content_id"],
    )
    return extract_feature_vector(ref, dist, config).values


def _manifest_features(
    manifest: DatasetManifest, args, config: GreedConfig
) -> np.ndarray:
    """Feature matrix for a manifest: from feature CSVs, cache, or extraction."""
    names = feature_names_for(config)
    digest = config_digest(config)
    cache_dir = Path(args.cache_dir) if getattr(args, "cache_dir", None) else None
    if cache_dir:
        cache_dir.mkdir(parents=True, exist_ok=True)

    values: list[np.ndarray | None] = []
    pending: list[int] = []
    for idx, row in enumerate(manifest.rows):
        if row.feature_csv:
            vec = read_feature_csv(row.feature_csv, expected_names=names)[0]
            values.append(vec.values)
            continue
        if row.ref_path is None or row.dist_path is None:
            raise ValueError(f"manifest row {idx}: neither paths nor features given")
        if cache_dir:
            cached = cache_dir / f"{_pair_cache_key(row, digest)}.json"
            if cached.exists():
                doc = json.loads(cached.read_text())
                values.append(np.asarray(doc["values"], dtype=np.float64))
                continue
        values.append(None)
        pending.append(idx)

    if pending:
        tasks = [
            (
                {
                    "ref_path": manifest.rows[i].ref_path,
                    "dist_path": manifest.rows[i].dist_path,
                    "fps_ref": str(manifest.rows[i].fps_ref),
                    "fps_dist": str(manifest.rows[i].fps_dist),
                    "content_id": manifest.rows[i].content_id,
                },
                args.width,
                args.height,
                args.pix_fmt,
                {
                    "scales": list(config.scales),
                    "patch_size": config.patch_size,
                    "sigma_n2": config.sigma_n2,
                    "ms_window": config.ms_window,
                },
            )
            for i in pending
        ]
        jobs = max(1, int(getattr(args, "jobs", 1) or 1))
        if jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                extracted = list(pool.map(_extract_row, tasks))
        else:
            extracted = [_extract_row(t) for t in tasks]
        for idx, vec in zip(pending, extracted):
            values[idx] = vec
            if cache_dir:
                row = manifest.rows[idx]
                cached = cache_dir / f"{_pair_cache_key(row, digest)}.json"
                cached.write_text(
                    json.dumps(
                        {
                            "format_version": 1,
                            "names": list(names),
                            "values": [float(v) for v in vec],
                        }
                    )
                )
    return np.vstack(values)


# ---------------------------------------------------------------------------
# Subcommands


def _load_video_from_args(args, path: str, fps: Fraction | None):
    if fps is None:
        fps = _parse_fps(getattr(args, "fps", None))
    return _load_video(
        path, fps=fps, width=args.width, height=args.height, pix_fmt=args.pix_fmt
    )


def _cmd_features(args) -> int:
    config = _config_from_args(args)
    ref = _load_video_from_args(args, args.ref, _parse_fps(args.fps_ref))
    dist = _load_video_from_args(args, args.dist, _parse_fps(args.fps_dist))
    vec = extract_feature_vector(ref, dist, config)
    if args.output:
        write_feature_csv(args.output, [vec])
    else:
        print(",".join(vec.names))
        print(",".join(repr(float(v)) for v in vec.values))
    if args.dump_entropies:
        write_entropy_csv(args.dump_entropies, dist, config)
    return 0


def _cmd_train(args) -> int:
    config = _config_from_args(args)
    manifest = _read_manifest(Path(args.manifest))
    features = _manifest_features(manifest, args, config)
    mos = manifest.mos_array()
    names = feature_names_for(config)

    spec = SplitSpec(fractions=(0.7, 0.15, 0.15), seed=args.seed, iterations=1)
    split = split_by_content(manifest, spec, 0)
    train_idx = np.asarray(split.train + split.test, dtype=np.intp)
    val_idx = np.asarray(split.val, dtype=np.intp)
    hp = grid_search(
        (features[train_idx], mos[train_idx]),
        (features[val_idx], mos[val_idx]),
        kernel=args.kernel,
    )
    # hyperparameters picked on held-out contents; final model uses all rows
    model = train_svr(features, mos, kernel=args.kernel, hp=hp, feature_names=names)
    save_model(model, args.model_out)
    print(f"wrote {args.model_out} (kernel={args.kernel}, C={hp.C}, "
          f"epsilon={hp.epsilon}, gamma={hp.gamma})")
    return 0


def _cmd_predict(args) -> int:
    model = load_model(args.model)
    config = _config_from_args(args)
    if args.manifest:
        manifest = _read_manifest(Path(args.manifest))
        features = _manifest_features(manifest, args, config)
        for row, score in zip(manifest.rows, predict(model, features)):
            label = row.dist_path or row.feature_csv
            print(f"{label}\t{score!r}")
        return 0
    if not args.ref or not args.dist:
        raise ValueError("predict needs --ref and --dist, or --manifest")
    ref = _load_video_from_args(args, args.ref, _parse_fps(args.fps_ref))
    dist = _load_video_from_args(args, args.dist, _parse_fps(args.fps_dist))
    vec = extract_feature_vector(ref, dist, config)
    score = predict(model, vec.values[None, :])[0]
    print(repr(float(score)))
    return 0


def _cmd_evaluate(args) -> int:
    config = _config_from_args(args)
    manifest = _read_manifest(Path(args.manifest))
    features = _manifest_features(manifest, args, config)
    fixed_hp = Hyperparams(C=args.svr_c, epsilon=args.svr_epsilon, gamma=args.svr_gamma)

    if args.all_splits:
        report = run_all_splits(
            manifest,
            features,
            train_fraction=args.train_fraction,
            kernel=args.kernel,
            fixed_hp=fixed_hp,
            by_fps=args.by_fps,
            jobs=args.jobs,
        )
    else:
        fractions = tuple(float(f) for f in args.fractions.split(","))
        spec = SplitSpec(
            fractions=fractions, seed=args.seed, iterations=args.iterations
        )
        report = run_experiment(
            manifest,
            features,
            spec,
            kernel=args.kernel,
            fixed_hp=fixed_hp,
            by_fps=args.by_fps,
            jobs=args.jobs,
        )

    doc = report.to_dict()
    text = json.dumps(doc, indent=2, sort_keys=True)
    if args.report_out:
        Path(args.report_out).write_text(text + "\n")

    med = report.medians
    print(f"iterations: {len(report.iterations)}  skipped: {report.n_skipped}")
    print(
        "median  srocc={srocc:.4f}  krocc={krocc:.4f}  "
        "plcc={plcc:.4f}  rmse={rmse:.4f}".format(**med)
    )
    if report.by_fps_medians:
        for fps_label, metrics in report.by_fps_medians.items():
            line = "  ".join(f"{k}={v:.4f}" for k, v in metrics.items())
            print(f"fps {fps_label}: {line}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="greedvmaf",
        description="Frame-rate-aware full-reference video quality assessment",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_feat = sub.add_parser("features", help="extract the 21 fused features for a pair")
    p_feat.add_argument("--ref", required=True)
    p_feat.add_argument("--dist", required=True)
    p_feat.add_argument("--fps-ref", help="frame rate for raw YUV reference")
    p_feat.add_argument("--fps-dist", help="frame rate for raw YUV distorted")
    p_feat.add_argument("-o", "--output", help="write a feature CSV instead of stdout")
    p_feat.add_argument(
        "--dump-entropies", help="also write per-frame mean entropies per subband"
    )
    _add_raw_flags(p_feat)
    _add_config_flags(p_feat)
    p_feat.set_defaults(func=_cmd_features)

    p_train = sub.add_parser("train", help="fit an SVR quality model from a manifest")
    p_train.add_argument("--manifest", required=True)
    p_train.add_argument("--model-out", required=True)
    p_train.add_argument("--kernel", choices=("linear", "rbf"), default="linear")
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--cache-dir")
    p_train.add_argument("--jobs", type=int, default=1)
    _add_raw_flags(p_train)
    _add_config_flags(p_train)
    p_train.set_defaults(func=_cmd_train)

    p_pred = sub.add_parser("predict", help="score videos with a trained model")
    p_pred.add_argument("--model", required=True)
    p_pred.add_argument("--ref")
    p_pred.add_argument("--dist")
    p_pred.add_argument("--manifest", help="batch mode: one score per manifest row")
    p_pred.add_argument("--fps-ref")
    p_pred.add_argument("--fps-dist")
    p_pred.add_argument("--cache-dir")
    p_pred.add_argument("--jobs", type=int, default=1)
    _add_raw_flags(p_pred)
    _add_config_flags(p_pred)
    p_pred.set_defaults(func=_cmd_predict)

    p_eval = sub.add_parser("evaluate", help="run the split/train/test protocol")
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--kernel", choices=("linear", "rbf"), default="linear")
    p_eval.add_argument("--iterations", type=int, default=200)
    p_eval.add_argument(
        "--fractions", default="0.7,0.15,0.15", help="train,val,test or train,test"
    )
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument(
        "--all-splits",
        action="store_true",
        help="enumerate every train/test content combination",
    )
    p_eval.add_argument("--train-fraction", type=float, default=0.8)
    p_eval.add_argument("--by-fps", action="store_true")
    p_eval.add_argument("--report-out")
    p_eval.add_argument("--cache-dir")
    p_eval.add_argument("--jobs", type=int, default=1)
    p_eval.add_argument("--svr-c", type=float, default=1.0,
                        help="C for two-way splits (no validation subset)")
    p_eval.add_argument("--svr-epsilon", type=float, default=0.1)
    p_eval.add_argument("--svr-gamma", type=float, default=0.125)
    _add_raw_flags(p_eval)
    _add_config_flags(p_eval)
    p_eval.set_defaults(func=_cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
