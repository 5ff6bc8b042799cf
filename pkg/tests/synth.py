"""Synthetic video content shared across the test modules."""

from __future__ import annotations

from fractions import Fraction

import numpy as np
from scipy.ndimage import gaussian_filter

from greedvmaf.video import VideoSequence


def moving_texture(
    n_frames: int = 16,
    size: int = 256,
    fps: int | Fraction = 30,
    seed: int = 0,
    speed: tuple[int, int] = (2, 1),
    smoothness: float = 3.0,
) -> VideoSequence:
    """Smooth periodic random texture translated by `speed` pixels per frame."""
    rng = np.random.default_rng(seed)
    field = gaussian_filter(rng.normal(size=(size, size)), smoothness, mode="wrap")
    field = 128.0 + 60.0 * field / np.abs(field).max()
    frames = [
        np.roll(field, (t * speed[0], t * speed[1]), axis=(0, 1))
        for t in range(n_frames)
    ]
    return VideoSequence(np.asarray(frames), Fraction(fps), f"tex{seed}")


def blurred(video: VideoSequence, sigma: float) -> VideoSequence:
    return VideoSequence(
        gaussian_filter(video.frames, (0, sigma, sigma)),
        video.fps,
        video.content_id,
    )


def noisy(video: VideoSequence, sigma: float, seed: int = 0) -> VideoSequence:
    rng = np.random.default_rng(seed)
    frames = np.clip(video.frames + rng.normal(0.0, sigma, video.frames.shape), 0, 255)
    return VideoSequence(frames, video.fps, video.content_id)


def sample_ggd(alpha: float, beta: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw GGD(0, alpha, beta) samples via the gamma transform (test oracle)."""
    w = rng.gamma(shape=1.0 / beta, scale=1.0, size=n)
    signs = rng.integers(0, 2, size=n) * 2 - 1
    return alpha * w ** (1.0 / beta) * signs
