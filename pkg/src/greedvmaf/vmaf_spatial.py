"""Pixel-domain VIF (four scales) and a wavelet detail-loss measure (DLM).

VIF compares local Gaussian-windowed signal statistics of reference and
distorted frames through an information-fidelity ratio; each coarser scale
smooths and dyadically downsamples the inputs.  DLM runs a 4-level db2 DWT,
splits the distorted detail coefficients into a restored (detail-loss) part
and an additive residual by projecting onto the reference coefficients, then
compares contrast-sensitivity-weighted restored vs reference energy with
Minkowski pooling (exponent 3).

Both features are computed between the pseudo reference (reference
subsampled to the distorted frame rate) and the distorted video, at native
resolution, and are averaged over frames.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import cos, log10, pi, radians

import numpy as np
from scipy.ndimage import correlate1d

from .video import VideoSequence

__all__ = [
    "VifConfig",
    "DlmConfig",
    "VmafSpatialFeatures",
    "vif_per_scale",
    "dlm",
    "extract_vmaf_spatial",
]

_EPS = 1e-10


@dataclass(frozen=True)
class VifConfig:
    n_scales: int = 4
    window: int = 9
    sigma_nsq: float = 2.0  # variance regulariser on the [0, 255] scale

    @property
    def window_sigma(self) -> float:
        return self.window / 6.0


@dataclass(frozen=True)
class DlmConfig:
    levels: int = 4
    angle_threshold_deg: float = 1.0
    pool_exponent: float = 3.0
    border_divisor: int = 16
    # Watson-model threshold parameters driving the per-subband weights.
    csf_a: float = 0.495
    csf_k: float = 0.466
    csf_f0: float = 0.401
    csf_g_hv: float = 1.0
    csf_g_diag: float = 0.534
    norm_view_dist: float = 3.0
    ref_display_height: int = 1080


@dataclass(frozen=True)
class VmafSpatialFeatures:
    """vif holds one value per scale, coarse last; dlm is scalar."""

    vif: np.ndarray
    dlm: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.vif)) or not np.isfinite(self.dlm):
            raise ValueError("non-finite spatial features")

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.vif, [self.dlm]])


def _gaussian_kernel(window: int, sigma: float) -> np.ndarray:
    half = (window - 1) / 2.0
    x = np.arange(window) - half
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _blur(stack: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    out = correlate1d(stack, kernel, axis=-1, mode="reflect")
    return correlate1d(out, kernel, axis=-2, mode="reflect")


def vif_per_scale(
    ref: VideoSequence, dist: VideoSequence, config: VifConfig | None = None
) -> np.ndarray:
    """Information-fidelity ratio per scale, averaged over frames."""
    if config is None:
        config = VifConfig()
    if ref.frames.shape != dist.frames.shape:
        raise ValueError(
            f"geometry mismatch: {ref.frames.shape} vs {dist.frames.shape}"
        )
    kernel = _gaussian_kernel(config.window, config.window_sigma)
    r = ref.frames
    d = dist.frames
    sigma_nsq = config.sigma_nsq
    values = []
    for scale in range(config.n_scales):
        if scale > 0:
            r = _blur(r, kernel)[:, ::2, ::2]
            d = _blur(d, kernel)[:, ::2, ::2]
        mu1 = _blur(r, kernel)
        mu2 = _blur(d, kernel)
        sigma1_sq = np.maximum(_blur(r * r, kernel) - mu1 * mu1, 0.0)
        sigma2_sq = np.maximum(_blur(d * d, kernel) - mu2 * mu2, 0.0)
        sigma12 = _blur(r * d, kernel) - mu1 * mu2

        g = sigma12 / (sigma1_sq + _EPS)
        sv_sq = sigma2_sq - g * sigma12
        g = np.where(sigma1_sq < _EPS, 0.0, g)
        sv_sq = np.where(sigma1_sq < _EPS, sigma2_sq, sv_sq)
        sigma1_sq = np.where(sigma1_sq < _EPS, 0.0, sigma1_sq)
        sv_sq = np.where(sigma2_sq < _EPS, 0.0, sv_sq)
        g = np.where(sigma2_sq < _EPS, 0.0, g)
        sv_sq = np.where(g < 0.0, sigma2_sq, sv_sq)
        g = np.maximum(g, 0.0)
        sv_sq = np.maximum(sv_sq, _EPS)

        num = np.log1p(g * g * sigma1_sq / (sv_sq + sigma_nsq)).sum(axis=(1, 2))
        den = np.log1p(sigma1_sq / sigma_nsq).sum(axis=(1, 2))
        per_frame = np.where(den > _EPS, num / np.maximum(den, _EPS), 1.0)
        values.append(float(per_frame.mean()))
    return np.asarray(values)


# db2 orthonormal analysis filters.
_DB2_LO = np.array(
    [-0.12940952255092145, 0.22414386804201339, 0.8365163037378079, 0.48296291314469025]
)
_DB2_HI = np.array(
    [-0.48296291314469025, 0.8365163037378079, -0.22414386804201339, -0.12940952255092145]
)


def _dwt_level(stack: np.ndarray) -> dict[str, np.ndarray]:
    lo_c = correlate1d(stack, _DB2_LO, axis=-1, mode="reflect")[..., ::2]
    hi_c = correlate1d(stack, _DB2_HI, axis=-1, mode="reflect")[..., ::2]
    return {
        "a": correlate1d(lo_c, _DB2_LO, axis=-2, mode="reflect")[..., ::2, :],
        "h": correlate1d(lo_c, _DB2_HI, axis=-2, mode="reflect")[..., ::2, :],
        "v": correlate1d(hi_c, _DB2_LO, axis=-2, mode="reflect")[..., ::2, :],
        "d": correlate1d(hi_c, _DB2_HI, axis=-2, mode="reflect")[..., ::2, :],
    }


def _csf_weight(level: int, diagonal: bool, cfg: DlmConfig) -> float:
    """Inverse Watson quantisation step for the subband (display-model CSF)."""
    r = cfg.norm_view_dist * cfg.ref_display_height * pi / 180.0
    amplitudes = ((0.67234, 0.72709), (0.41317, 0.49428), (0.22727, 0.28688), (0.11792, 0.15214))
    g = cfg.csf_g_diag if diagonal else cfg.csf_g_hv
    amp = amplitudes[level][1 if diagonal else 0]
    t = log10(2.0 ** (level + 1) * cfg.csf_f0 * g / r)
    q = 2.0 * cfg.csf_a * 10.0 ** (cfg.csf_k * t * t) / amp
    return 1.0 / q


def _border_crop(band: np.ndarray, divisor: int) -> np.ndarray:
    h, w = band.shape[-2:]
    bh = int(round(h / divisor))
    bw = int(round(w / divisor))
    if h - 2 * bh < 1:
        bh = 0
    if w - 2 * bw < 1:
        bw = 0
    return band[..., bh : h - bh, bw : w - bw]


def dlm(
    ref: VideoSequence, dist: VideoSequence, config: DlmConfig | None = None
) -> float:
    """Detail-loss ratio in [0, ~1]; 1 means no detail loss."""
    if config is None:
        config = DlmConfig()
    if ref.frames.shape != dist.frames.shape:
        raise ValueError(
            f"geometry mismatch: {ref.frames.shape} vs {dist.frames.shape}"
        )
    cos_thresh_sq = cos(radians(config.angle_threshold_deg)) ** 2
    p = config.pool_exponent
    o_ll = ref.frames
    t_ll = dist.frames
    n_frames = o_ll.shape[0]
    num = np.zeros(n_frames)
    den = np.zeros(n_frames)
    for level in range(config.levels):
        o = _dwt_level(o_ll)
        t = _dwt_level(t_ll)
        o_ll, t_ll = o.pop("a"), t.pop("a")

        ot_dp = o["h"] * t["h"] + o["v"] * t["v"]
        o_mag_sq = o["h"] ** 2 + o["v"] ** 2
        t_mag_sq = t["h"] ** 2 + t["v"] ** 2
        same_direction = (ot_dp >= 0.0) & (
            ot_dp * ot_dp >= cos_thresh_sq * o_mag_sq * t_mag_sq
        )
        for band in ("h", "v", "d"):
            ob, tb = o[band], t[band]
            with np.errstate(divide="ignore", invalid="ignore"):
                k = np.clip(tb / ob, 0.0, 1.0)
            k = np.where(np.isfinite(k), k, 0.0)
            restored = np.where(same_direction, tb, k * ob)
            w = _csf_weight(level, band == "d", config)
            num += (
                (np.abs(w * _border_crop(restored, config.border_divisor)) ** p)
                .sum(axis=(1, 2))
            ) ** (1.0 / p)
            den += (
                (np.abs(w * _border_crop(ob, config.border_divisor)) ** p)
                .sum(axis=(1, 2))
            ) ** (1.0 / p)
    per_frame = (num + _EPS) / (den + _EPS)
    return float(per_frame.mean())


def extract_vmaf_spatial(
    pr: VideoSequence,
    dist: VideoSequence,
    vif_config: VifConfig | None = None,
    dlm_config: DlmConfig | None = None,
) -> VmafSpatialFeatures:
    """VIF (4 scales) and DLM at native resolution for an aligned pair."""
    return VmafSpatialFeatures(
        vif=vif_per_scale(pr, dist, vif_config),
        dlm=dlm(pr, dist, dlm_config),
    )
