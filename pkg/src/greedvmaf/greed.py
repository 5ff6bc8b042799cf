"""Scaled-entropy maps and the temporal/spatial entropic-difference features.

Every band-pass frame is cut into non-overlapping patches; each patch gets a
GGD fit by kurtosis matching, a deterministic Gaussian noise channel (moment
propagation), and a scaled entropy

    eps = log(1 + var_noisy) * h_ggd(alpha_noisy, beta_noisy)

Temporal features compare the scaled entropies of reference, pseudo
reference (reference subsampled to the distorted rate) and distorted video;
the spatial feature does the same on mean-subtracted frames.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .bandpass import (
    FilterBankSpec,
    SubbandSequence,
    spatial_ms_filter,
    temporal_wavelet_packet,
)
from .ggd import alpha_from_variance, propagate_noise_moments, solve_beta
from .video import VideoSequence, downscale_video, subsample_frame_indices, temporal_subsample

__all__ = [
    "EntropyMap",
    "GreedConfig",
    "GreedFeatures",
    "scaled_entropy_map",
    "spatial_entropy_map",
    "tgreed_subband",
    "sgreed",
    "extract_greed_features",
    "temporal_entropy_profile",
]

# Patches whose variance cannot be distinguished from zero get entropy 0;
# the log(1 + var) premultiplier exists precisely to damp such regions.
_DEGENERATE_VAR = 1e-100


@dataclass(frozen=True)
class GreedConfig:
    """Knobs shared by the entropic-difference features."""

    scales: tuple[int, ...] = (4, 5)
    patch_size: int = 5
    sigma_n2: float = 0.1
    ms_window: int = 7
    filter_bank: FilterBankSpec = field(default_factory=FilterBankSpec)

    def __post_init__(self):
        if not self.scales:
            raise ValueError("at least one scale required")
        if any(s < 0 for s in self.scales):
            raise ValueError("scales must be non-negative")
        if self.patch_size < 2:
            raise ValueError("patch size must be >= 2")
        if self.sigma_n2 < 0:
            raise ValueError("noise variance must be >= 0")


@dataclass(frozen=True)
class EntropyMap:
    """Per-patch scaled entropies, one row of patches per frame.

    values has shape (T, patch_rows, patch_cols).
    """

    values: np.ndarray
    patch_size: int

    def __post_init__(self):
        if self.values.ndim != 3:
            raise ValueError("entropy map must be (T, rows, cols)")
        if self.values.shape[1] * self.values.shape[2] < 1:
            raise ValueError("frame smaller than one patch")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite entropies")

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def patches_per_frame(self) -> int:
        return self.values.shape[1] * self.values.shape[2]


def _patch_moments(frames: np.ndarray, patch_size: int) -> tuple[np.ndarray, np.ndarray]:
    """Population variance and kurtosis of each non-overlapping patch.

    Border pixels that do not fill a patch are dropped.  Returns two
    (T, rows, cols) arrays; kurtosis is 0 where the variance is degenerate.
    """
    t, h, w = frames.shape
    rows, cols = h // patch_size, w // patch_size
    if rows < 1 or cols < 1:
        raise ValueError(
            f"frames {h}x{w} hold no {patch_size}x{patch_size} patch"
        )
    patches = (
        frames[:, : rows * patch_size, : cols * patch_size]
        .reshape(t, rows, patch_size, cols, patch_size)
        .transpose(0, 1, 3, 2, 4)
        .reshape(t, rows, cols, patch_size * patch_size)
    )
    centred = patches - patches.mean(axis=-1, keepdims=True)
    m2 = np.mean(centred**2, axis=-1)
    m4 = np.mean(centred**4, axis=-1)
    degenerate = m2 <= _DEGENERATE_VAR
    safe_m2 = np.where(degenerate, 1.0, m2)
    kurt = np.where(degenerate, 0.0, m4 / (safe_m2 * safe_m2))
    return m2, kurt


def _scaled_entropies(m2: np.ndarray, kurt: np.ndarray, sigma_n2: float) -> np.ndarray:
    degenerate = m2 <= _DEGENERATE_VAR
    v, k = propagate_noise_moments(np.where(degenerate, 1.0, m2), kurt, sigma_n2)
    beta = solve_beta(k)
    alpha = alpha_from_variance(v, beta)
    entropy = 1.0 / beta - np.log(beta) + np.log(2.0 * alpha) + gammaln(1.0 / beta)
    eps = np.log1p(v) * entropy
    return np.where(degenerate, 0.0, eps)


def scaled_entropy_map(
    subband: SubbandSequence, patch_size: int = 5, sigma_n2: float = 0.1
) -> EntropyMap:
    """Scaled entropy of every patch of every frame of a temporal subband."""
    m2, kurt = _patch_moments(subband.frames, patch_size)
    return EntropyMap(
        values=_scaled_entropies(m2, kurt, sigma_n2), patch_size=patch_size
    )


def spatial_entropy_map(
    video: VideoSequence,
    patch_size: int = 5,
    sigma_n2: float = 0.1,
    ms_window: int = 7,
) -> EntropyMap:
    """Scaled entropy of mean-subtracted frames (the spatial analogue)."""
    coeffs = spatial_ms_filter(video.frames, ms_window)
    m2, kurt = _patch_moments(coeffs, patch_size)
    return EntropyMap(
        values=_scaled_entropies(m2, kurt, sigma_n2), patch_size=patch_size
    )


def tgreed_subband(
    ref_map: EntropyMap,
    pr_map: EntropyMap,
    dist_map: EntropyMap,
    ref_frame_indices: np.ndarray | None = None,
) -> float:
    """Temporal entropic difference for one subband, pooled over frames.

    Per frame: mean over patches of
        |(1 + |eps_D - eps_PR|) * (eps_R + 1) / (eps_PR + 1) - 1|
    The reference map may cover more frames (higher rate); in that case
    ``ref_frame_indices`` aligns each pseudo-reference frame with its source
    frame in the reference.
    """
    if pr_map.values.shape != dist_map.values.shape:
        raise ValueError(
            f"pseudo-reference and distorted maps disagree: "
            f"{pr_map.values.shape} vs {dist_map.values.shape}"
        )
    ref = ref_map.values
    if ref_frame_indices is not None:
        ref = ref[np.asarray(ref_frame_indices, dtype=np.intp)]
    elif ref.shape[0] != pr_map.values.shape[0]:
        raise ValueError(
            "reference map has a different frame count; pass ref_frame_indices"
        )
    if ref.shape != pr_map.values.shape:
        raise ValueError(
            f"reference map geometry {ref.shape[1:]} does not match "
            f"{pr_map.values.shape[1:]}"
        )
    pr = pr_map.values
    dist = dist_map.values
    per_patch = np.abs((1.0 + np.abs(dist - pr)) * (ref + 1.0) / (pr + 1.0) - 1.0)
    return float(per_patch.mean(axis=(1, 2)).mean())


def sgreed(
    ref_video: VideoSequence,
    dist_video: VideoSequence,
    patch_size: int = 5,
    sigma_n2: float = 0.1,
    ms_window: int = 7,
) -> float:
    """Spatial entropic difference, pooled over patches then frames."""
    if ref_video.frames.shape != dist_video.frames.shape:
        raise ValueError(
            f"geometry mismatch: {ref_video.frames.shape} vs "
            f"{dist_video.frames.shape}"
        )
    theta_r = spatial_entropy_map(ref_video, patch_size, sigma_n2, ms_window)
    theta_d = spatial_entropy_map(dist_video, patch_size, sigma_n2, ms_window)
    diff = np.abs(theta_d.values - theta_r.values)
    return float(diff.mean(axis=(1, 2)).mean())


@dataclass(frozen=True)
class GreedFeatures:
    """14 temporal + 2 spatial entropic-difference features.

    tgreed is ordered subbands 1..7 of the first scale, then of the second;
    sgreed follows the scale order.
    """

    tgreed: np.ndarray
    sgreed: np.ndarray
    scales: tuple[int, ...]

    def __post_init__(self):
        n_bands = self.tgreed.size // len(self.scales)
        if self.tgreed.size != n_bands * len(self.scales):
            raise ValueError("tgreed length must be a multiple of the scale count")
        if self.sgreed.size != len(self.scales):
            raise ValueError("one sgreed value per scale expected")
        if not (np.all(np.isfinite(self.tgreed)) and np.all(np.isfinite(self.sgreed))):
            raise ValueError("non-finite features")
        if np.any(self.tgreed < 0) or np.any(self.sgreed < 0):
            raise ValueError("entropic differences must be non-negative")

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.tgreed, self.sgreed])


def extract_greed_features(
    ref: VideoSequence,
    dist: VideoSequence,
    config: GreedConfig | None = None,
) -> GreedFeatures:
    """Run the full entropic-difference pipeline for one video pair.

    Builds the pseudo reference by temporal subsampling, then per scale:
    block-downscale, temporal wavelet packet, per-subband temporal features
    and one spatial feature.  Identical inputs at equal rates give exact
    zeros.
    """
    if config is None:
        config = GreedConfig()
    if dist.fps > ref.fps:
        raise ValueError(
            f"distorted rate {dist.fps} exceeds reference rate {ref.fps}"
        )
    pr = temporal_subsample(ref, dist.fps)
    ref_idx = subsample_frame_indices(len(ref), ref.fps, dist.fps)

    # Trim to a common frame count in case the sources were cut differently.
    n = min(len(pr), len(dist))
    if n < config.filter_bank.min_frames:
        raise ValueError(
            f"need at least {config.filter_bank.min_frames} aligned frames, got {n}"
        )
    pr = VideoSequence(pr.frames[:n], pr.fps, pr.content_id)
    dist_t = VideoSequence(dist.frames[:n], dist.fps, dist.content_id)
    ref_idx = ref_idx[:n]

    tgreed: list[float] = []
    sgreed_vals: list[float] = []
    for s in config.scales:
        ref_s = downscale_video(ref, s)
        pr_s = downscale_video(pr, s)
        dist_s = downscale_video(dist_t, s)
        ref_bands = temporal_wavelet_packet(ref_s, config.filter_bank)
        pr_bands = temporal_wavelet_packet(pr_s, config.filter_bank)
        dist_bands = temporal_wavelet_packet(dist_s, config.filter_bank)
        for rb, pb, db in zip(ref_bands, pr_bands, dist_bands):
            maps = [
                scaled_entropy_map(b, config.patch_size, config.sigma_n2)
                for b in (rb, pb, db)
            ]
            tgreed.append(
                tgreed_subband(maps[0], maps[1], maps[2], ref_frame_indices=ref_idx)
            )
        sgreed_vals.append(
            sgreed(
                pr_s,
                dist_s,
                patch_size=config.patch_size,
                sigma_n2=config.sigma_n2,
                ms_window=config.ms_window,
            )
        )
    return GreedFeatures(
        tgreed=np.asarray(tgreed),
        sgreed=np.asarray(sgreed_vals),
        scales=tuple(config.scales),
    )


def temporal_entropy_profile(
    video: VideoSequence, config: GreedConfig | None = None
) -> dict[tuple[int, int], np.ndarray]:
    """Per-frame mean scaled entropy, keyed by (scale, subband).

    Backs the entropy-dump output used to inspect the frame-rate bias of
    band-pass entropies.
    """
    if config is None:
        config = GreedConfig()
    profile: dict[tuple[int, int], np.ndarray] = {}
    for s in config.scales:
        video_s = downscale_video(video, s)
        for band in temporal_wavelet_packet(video_s, config.filter_bank):
            emap = scaled_entropy_map(band, config.patch_size, config.sigma_n2)
            profile[(s, band.subband_index)] = emap.values.mean(axis=(1, 2))
    return profile
