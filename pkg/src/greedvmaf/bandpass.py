"""Temporal wavelet-packet filter bank and spatial mean-subtraction filter.

The temporal decomposition is an undecimated (a trous) 3-level wavelet
packet tree built on the biorthogonal-2.2 pair, yielding 8 leaves the same
length as the input.  Leaves are returned in frequency order; the
all-lowpass leaf (index 0) is discarded by `temporal_wavelet_packet`, so
subbands are numbered 1..7 from lowest to highest retained frequency.

Boundaries use half-sample symmetric extension: the signal is mirrored once
to twice its length and every convolution is circular on that domain.  All
four bior-2.2 filters are symmetric, so each node of the tree keeps the
mirror symmetry and truncating leaves back to the original length loses
nothing; `wavelet_packet_reconstruct` re-extends them and inverts exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.ndimage import correlate1d, uniform_filter

__all__ = [
    "FilterBankSpec",
    "SubbandSequence",
    "temporal_wavelet_packet",
    "wavelet_packet_analyze",
    "wavelet_packet_reconstruct",
    "spatial_ms_filter",
    "frequency_order",
]

_SQRT2 = np.sqrt(2.0)

# Zero-phase biorthogonal-2.2 (CDF 5/3-tap) filters.  With these centred
# taps, analysis followed by 0.5 * synthesis is the identity:
#   conv(dec_lo, rec_lo) + conv(dec_hi, rec_hi) = 2 * delta
_BIOR22_DEC_LO = _SQRT2 * np.array([-0.125, 0.25, 0.75, 0.25, -0.125])
_BIOR22_DEC_HI = _SQRT2 * np.array([0.25, -0.5, 0.25])
_BIOR22_REC_LO = _SQRT2 * np.array([0.25, 0.5, 0.25])
_BIOR22_REC_HI = _SQRT2 * np.array([0.125, 0.25, -0.75, 0.25, 0.125])


@dataclass(frozen=True)
class FilterBankSpec:
    """Analysis/synthesis filter pairs plus tree depth.

    Filters are centred (odd length, zero phase).  Construction verifies the
    perfect-reconstruction identity to 1e-10.
    """

    dec_lo: np.ndarray = field(default_factory=lambda: _BIOR22_DEC_LO.copy())
    dec_hi: np.ndarray = field(default_factory=lambda: _BIOR22_DEC_HI.copy())
    rec_lo: np.ndarray = field(default_factory=lambda: _BIOR22_REC_LO.copy())
    rec_hi: np.ndarray = field(default_factory=lambda: _BIOR22_REC_HI.copy())
    levels: int = 3
    boundary: str = "symmetric"

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.boundary != "symmetric":
            raise ValueError(f"unsupported boundary mode {self.boundary!r}")
        for name in ("dec_lo", "dec_hi", "rec_lo", "rec_hi"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.ndim != 1 or arr.size % 2 == 0:
                raise ValueError(f"{name} must be a centred odd-length filter")
            object.__setattr__(self, name, arr)
        residual = _pr_residual(self.dec_lo, self.dec_hi, self.rec_lo, self.rec_hi)
        if residual > 1e-10:
            raise ValueError(
                f"filters are not a perfect-reconstruction pair (residual {residual:.3g})"
            )

    @property
    def n_subbands(self) -> int:
        return 2**self.levels - 1

    @property
    def min_frames(self) -> int:
        return 2**self.levels


def _pr_residual(dec_lo, dec_hi, rec_lo, rec_hi) -> float:
    p = _centered_sum(np.convolve(dec_lo, rec_lo), np.convolve(dec_hi, rec_hi))
    target = np.zeros_like(p)
    target[p.size // 2] = 2.0
    return float(np.max(np.abs(p - target)))


def _centered_sum(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = max(a.size, b.size)
    out = np.zeros(n)
    out[(n - a.size) // 2 : (n - a.size) // 2 + a.size] += a
    out[(n - b.size) // 2 : (n - b.size) // 2 + b.size] += b
    return out


@dataclass(frozen=True)
class SubbandSequence:
    """Band-pass coefficients of one temporal subband, frame-aligned to input."""

    subband_index: int
    frames: np.ndarray  # (T, H, W)
    source_fps: Fraction

    def __post_init__(self):
        if not 1 <= self.subband_index:
            raise ValueError("subband index must be >= 1")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError("non-finite subband coefficients")

    def __len__(self) -> int:
        return self.frames.shape[0]


def frequency_order(levels: int) -> list[int]:
    """Frequency index of each natural-order leaf (binary-reflected Gray decode)."""
    order = []
    for n in range(2**levels):
        acc = 0
        f = 0
        for i in range(levels):
            acc ^= (n >> (levels - 1 - i)) & 1
            f = (f << 1) | acc
        order.append(f)
    return order


def _upsampled(filt: np.ndarray, step: int) -> np.ndarray:
    if step == 1:
        return filt
    out = np.zeros((filt.size - 1) * step + 1)
    out[::step] = filt
    return out


def _mirror(x: np.ndarray) -> np.ndarray:
    return np.concatenate([x, x[::-1]], axis=0)


def wavelet_packet_analyze(signal: np.ndarray, spec: FilterBankSpec) -> list[np.ndarray]:
    """Full undecimated packet tree along axis 0, leaves in frequency order."""
    x = np.asarray(signal, dtype=np.float64)
    n = x.shape[0]
    if n < spec.min_frames:
        raise ValueError(
            f"need at least {spec.min_frames} frames for {spec.levels} levels, got {n}"
        )
    nodes = [_mirror(x)]
    for level in range(spec.levels):
        step = 2**level
        lo = _upsampled(spec.dec_lo, step)
        hi = _upsampled(spec.dec_hi, step)
        nodes = [
            filtered
            for node in nodes
            for filtered in (
                correlate1d(node, lo, axis=0, mode="wrap"),
                correlate1d(node, hi, axis=0, mode="wrap"),
            )
        ]
    leaves = [None] * len(nodes)
    for natural, freq in enumerate(frequency_order(spec.levels)):
        leaves[freq] = nodes[natural][:n]
    return leaves


def wavelet_packet_reconstruct(leaves: list[np.ndarray], spec: FilterBankSpec) -> np.ndarray:
    """Invert `wavelet_packet_analyze`; expects all 2**levels leaves in frequency order."""
    if len(leaves) != 2**spec.levels:
        raise ValueError(f"expected {2 ** spec.levels} leaves, got {len(leaves)}")
    n = leaves[0].shape[0]
    order = frequency_order(spec.levels)
    nodes: list[np.ndarray | None] = [None] * len(leaves)
    for natural, freq in enumerate(order):
        nodes[natural] = _mirror(np.asarray(leaves[freq], dtype=np.float64))
    for level in reversed(range(spec.levels)):
        step = 2**level
        lo = _upsampled(spec.rec_lo, step)
        hi = _upsampled(spec.rec_hi, step)
        nodes = [
            0.5
            * (
                correlate1d(nodes[2 * i], lo, axis=0, mode="wrap")
                + correlate1d(nodes[2 * i + 1], hi, axis=0, mode="wrap")
            )
            for i in range(len(nodes) // 2)
        ]
    return nodes[0][:n]


def temporal_wavelet_packet(
    video, spec: FilterBankSpec | None = None
) -> list[SubbandSequence]:
    """Band-pass decompose a video along time; the lowpass leaf is dropped.

    Returns `spec.n_subbands` sequences ordered from lowest to highest
    retained frequency, each frame-for-frame aligned with the input.
    """
    if spec is None:
        spec = FilterBankSpec()
    leaves = wavelet_packet_analyze(video.frames, spec)
    return [
        SubbandSequence(subband_index=k, frames=leaves[k], source_fps=video.fps)
        for k in range(1, len(leaves))
    ]


def spatial_ms_filter(plane: np.ndarray, window: int = 7) -> np.ndarray:
    """Subtract the local windowed mean (uniform window, symmetric boundary)."""
    plane = np.asarray(plane, dtype=np.float64)
    if window % 2 == 0 or window < 1:
        raise ValueError(f"window must be odd and positive, got {window}")
    if window > min(plane.shape[-2:]):
        raise ValueError(
            f"window {window} exceeds plane extent {plane.shape[-2]}x{plane.shape[-1]}"
        )
    size = (1,) * (plane.ndim - 2) + (window, window)
    return plane - uniform_filter(plane, size=size, mode="reflect")
