"""The fused 21-dimensional feature vector and its CSV round trip.

Order contract: vif_s0..vif_s3, dlm, then the temporal entropic differences
for each scale (subbands 1..7), then one spatial entropic difference per
scale.  Spatial features are computed against the pseudo reference (the
reference subsampled to the distorted rate), never against a duplicated
distorted video.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .greed import GreedConfig, extract_greed_features, temporal_entropy_profile
from .video import VideoSequence, temporal_subsample
from .vmaf_spatial import extract_vmaf_spatial

__all__ = [
    "FEATURE_NAMES",
    "FeatureVector",
    "feature_names_for",
    "extract_feature_vector",
    "write_feature_csv",
    "read_feature_csv",
    "write_entropy_csv",
    "config_digest",
]

FEATURE_CSV_VERSION = 1

_META_COLUMNS = ("format_version", "ref", "dist", "fps_ref", "fps_dist")


def feature_names_for(config: GreedConfig) -> tuple[str, ...]:
    names = [f"vif_s{i}" for i in range(4)] + ["dlm"]
    for s in config.scales:
        names.extend(f"tgreed_s{s}_k{k}" for k in range(1, 8))
    names.extend(f"sgreed_s{s}" for s in config.scales)
    return tuple(names)


FEATURE_NAMES = feature_names_for(GreedConfig())


@dataclass(frozen=True)
class FeatureVector:
    names: tuple[str, ...]
    values: np.ndarray
    ref: str = ""
    dist: str = ""
    fps_ref: Fraction = Fraction(0)
    fps_dist: Fraction = Fraction(0)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (len(self.names),):
            raise ValueError(
                f"{len(self.names)} names but value shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("non-finite feature values")
        object.__setattr__(self, "values", values)


def extract_feature_vector(
    ref: VideoSequence, dist: VideoSequence, config: GreedConfig | None = None
) -> FeatureVector:
    """All fused features for one (reference, distorted) pair."""
    if config is None:
        config = GreedConfig()
    pr = temporal_subsample(ref, dist.fps)
    n = min(len(pr), len(dist))
    pr_t = VideoSequence(pr.frames[:n], pr.fps, pr.content_id)
    dist_t = VideoSequence(dist.frames[:n], dist.fps, dist.content_id)
    spatial = extract_vmaf_spatial(pr_t, dist_t)
    greed = extract_greed_features(ref, dist, config)
    return FeatureVector(
        names=feature_names_for(config),
        values=np.concatenate([spatial.as_array(), greed.as_array()]),
        ref=ref.content_id,
        dist=dist.content_id,
        fps_ref=ref.fps,
        fps_dist=dist.fps,
    )


def write_feature_csv(path: str | Path, vectors: list[FeatureVector]) -> None:
    if not vectors:
        raise ValueError("nothing to write")
    names = vectors[0].names
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(_META_COLUMNS) + list(names))
        for vec in vectors:
            if vec.names != names:
                raise ValueError("mixed feature layouts in one CSV")
            writer.writerow(
                [FEATURE_CSV_VERSION, vec.ref, vec.dist, str(vec.fps_ref), str(vec.fps_dist)]
                + [repr(float(v)) for v in vec.values]
            )


def read_feature_csv(
    path: str | Path, expected_names: tuple[str, ...] | None = None
) -> list[FeatureVector]:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header[: len(_META_COLUMNS)]) != _META_COLUMNS:
            raise ValueError(f"{path}: not a feature CSV (bad header)")
        names = tuple(header[len(_META_COLUMNS) :])
        if expected_names is not None and names != tuple(expected_names):
            raise ValueError(
                f"{path}: feature columns {names} do not match expected layout"
            )
        vectors = []
        for row in reader:
            meta, vals = row[: len(_META_COLUMNS)], row[len(_META_COLUMNS) :]
            if int(meta[0]) != FEATURE_CSV_VERSION:
                raise ValueError(
                    f"{path}: unsupported feature CSV version {meta[0]!r}"
                )
            vectors.append(
                FeatureVector(
                    names=names,
                    values=np.asarray([float(v) for v in vals]),
                    ref=meta[1],
                    dist=meta[2],
                    fps_ref=Fraction(meta[3]),
                    fps_dist=Fraction(meta[4]),
                )
            )
    if not vectors:
        raise ValueError(f"{path}: feature CSV has no rows")
    return vectors


def write_entropy_csv(
    path: str | Path, video: VideoSequence, config: GreedConfig | None = None
) -> None:
    """Per-frame mean scaled entropy per (scale, subband) for one video."""
    profile = temporal_entropy_profile(video, config)
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["format_version", "video", "fps", "scale", "subband", "frame", "mean_epsilon"]
        )
        for (scale, subband), series in sorted(profile.items()):
            for frame, value in enumerate(series):
                writer.writerow(
                    [
                        FEATURE_CSV_VERSION,
                        video.content_id,
                        str(video.fps),
                        scale,
                        subband,
                        frame,
                        repr(float(value)),
                    ]
                )


def config_digest(config: GreedConfig) -> str:
    """Stable digest of every knob that changes feature values (cache key part)."""
    doc = {
        "scales": list(config.scales),
        "patch_size": config.patch_size,
        "sigma_n2": config.sigma_n2,
        "ms_window": config.ms_window,
        "filters": {
            "dec_lo": config.filter_bank.dec_lo.tolist(),
            "dec_hi": config.filter_bank.dec_hi.tolist(),
            "levels": config.filter_bank.levels,
        },
    }
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]
