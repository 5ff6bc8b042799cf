"""Raw video I/O and resampling.

Parses Y4M (YUV4MPEG2) streams and headerless planar YUV, keeping only the
luma plane as float64 in [0, 255].  Also provides the spatial block
downscaling and the temporal subsample/duplicate operations every feature
extractor builds on.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

__all__ = [
    "VideoSequence",
    "Y4MParseError",
    "TruncatedStreamError",
    "UnsupportedFormatError",
    "load_y4m",
    "load_raw_yuv",
    "write_y4m",
    "downscale",
    "downscale_video",
    "subsample_frame_indices",
    "temporal_subsample",
    "temporal_upsample_duplicate",
]


class Y4MParseError(ValueError):
    """Malformed Y4M stream; carries the byte offset of the offending data."""

    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (byte offset {byte_offset})")
        self.byte_offset = byte_offset


class TruncatedStreamError(ValueError):
    """Stream ended mid-frame; carries the index of the incomplete frame."""

    def __init__(self, frame_index: int):
        super().__init__(f"stream truncated inside frame {frame_index}")
        self.frame_index = frame_index


class UnsupportedFormatError(ValueError):
    pass


# Chroma samples per luma sample (both planes combined) and sample bit depth.
# Samples wider than 8 bits are two bytes each, little endian.
_PIX_FMTS = {
    "mono": (0.0, 8),
    "mono10": (0.0, 10),
    "yuv420p": (0.5, 8),
    "yuv422p": (1.0, 8),
    "yuv444p": (2.0, 8),
    "yuv420p10le": (0.5, 10),
    "yuv422p10le": (1.0, 10),
    "yuv444p10le": (2.0, 10),
}

_Y4M_CHROMA = {
    "mono": "mono",
    "mono10": "mono10",
    "420": "yuv420p",
    "420jpeg": "yuv420p",
    "420mpeg2": "yuv420p",
    "420paldv": "yuv420p",
    "422": "yuv422p",
    "444": "yuv444p",
    "420p10": "yuv420p10le",
    "422p10": "yuv422p10le",
    "444p10": "yuv444p10le",
}


@dataclass(frozen=True)
class VideoSequence:
    """An ordered stack of luma planes with frame-rate metadata.

    ``frames`` has shape (T, H, W), dtype float64, values in [0, 255].
    The array is marked read-only so sequences can be shared freely.
    """

    frames: np.ndarray
    fps: Fraction
    content_id: str = ""

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 3:
            raise ValueError(f"frames must be (T, H, W), got shape {frames.shape}")
        if frames.shape[0] < 1:
            raise ValueError("no frames")
        if frames.shape[1] < 1 or frames.shape[2] < 1:
            raise ValueError(f"degenerate frame geometry {frames.shape[1:]}")
        if not np.all(np.isfinite(frames)):
            raise ValueError("non-finite luma samples")
        fps = Fraction(self.fps)
        if fps <= 0:
            raise ValueError(f"fps must be positive, got {fps}")
        frames = np.ascontiguousarray(frames)
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "fps", fps)

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]


def _decode_plane(buf: bytes, count: int, bits: int) -> np.ndarray:
    if bits == 8:
        plane = np.frombuffer(buf, dtype=np.uint8, count=count).astype(np.float64)
    else:
        plane = np.frombuffer(buf, dtype="<u2", count=count).astype(np.float64)
        plane *= 255.0 / float((1 << bits) - 1)
    return plane


def _frame_byte_counts(width: int, height: int, pix_fmt: str) -> tuple[int, int, int]:
    chroma_ratio, bits = _PIX_FMTS[pix_fmt]
    if chroma_ratio == 0.5 and (width % 2 or height % 2):
        raise UnsupportedFormatError(
            f"{pix_fmt} requires even dimensions, got {width}x{height}"
        )
    if chroma_ratio == 1.0 and width % 2:
        raise UnsupportedFormatError(f"{pix_fmt} requires even width, got {width}")
    bytes_per_sample = 1 if bits == 8 else 2
    luma = width * height * bytes_per_sample
    chroma = int(width * height * chroma_ratio) * bytes_per_sample
    return luma, chroma, bits


def _read_frames(
    data: bytes,
    pos: int,
    width: int,
    height: int,
    pix_fmt: str,
    framed: bool,
) -> list[np.ndarray]:
    """Walk the payload collecting luma planes; ``framed`` means Y4M FRAME markers."""
    luma_bytes, chroma_bytes, bits = _frame_byte_counts(width, height, pix_fmt)
    frames: list[np.ndarray] = []
    index = 0
    n = len(data)
    while pos < n:
        if framed:
            end = data.find(b"\n", pos)
            if end < 0:
                raise TruncatedStreamError(index)
            marker = data[pos:end]
            if not marker.startswith(b"FRAME"):
                raise Y4MParseError("expected FRAME marker", pos)
            pos = end + 1
        if pos + luma_bytes > n:
            raise TruncatedStreamError(index)
        plane = _decode_plane(data[pos : pos + luma_bytes], width * height, bits)
        frames.append(plane.reshape(height, width))
        pos += luma_bytes
        if pos + chroma_bytes > n:
            raise TruncatedStreamError(index)
        pos += chroma_bytes  # chroma skipped
        index += 1
    return frames


def load_y4m(path: str | Path, content_id: str | None = None) -> VideoSequence:
    """Load the luma plane of a YUV4MPEG2 file.

    fps comes from the stream header; chroma planes are skipped.  Raises
    Y4MParseError / TruncatedStreamError / UnsupportedFormatError on bad input.
    """
    path = Path(path)
    data = path.read_bytes()
    if not data.startswith(b"YUV4MPEG2"):
        raise Y4MParseError("missing YUV4MPEG2 magic", 0)
    header_end = data.find(b"\n")
    if header_end < 0:
        raise Y4MParseError("unterminated stream header", len(data))

    width = height = None
    fps = None
    chroma = "420jpeg"
    offset = len(b"YUV4MPEG2")
    for token in re.finditer(rb"\S+", data[offset:header_end]):
        tok = token.group().decode("ascii", "replace")
        tok_off = offset + token.start()
        kind, value = tok[0], tok[1:]
        if kind == "W":
            width = _positive_int(value, "width", tok_off)
        elif kind == "H":
            height = _positive_int(value, "height", tok_off)
        elif kind == "F":
            m = re.fullmatch(r"(\d+):(\d+)", value)
            if not m or int(m.group(2)) == 0 or int(m.group(1)) == 0:
                raise Y4MParseError(f"bad frame rate token {tok!r}", tok_off)
            fps = Fraction(int(m.group(1)), int(m.group(2)))
        elif kind == "C":
            chroma = value
        elif kind in ("I", "A", "X"):
            continue
        else:
            raise Y4MParseError(f"unknown header token {tok!r}", tok_off)
    if width is None or height is None or fps is None:
        raise Y4MParseError("header missing W, H or F", header_end)
    if chroma not in _Y4M_CHROMA:
        raise UnsupportedFormatError(f"unsupported chroma subsampling C{chroma}")
    pix_fmt = _Y4M_CHROMA[chroma]

    frames = _read_frames(data, header_end + 1, width, height, pix_fmt, framed=True)
    if not frames:
        raise ValueError("no frames")
    return VideoSequence(
        frames=np.stack(frames),
        fps=fps,
        content_id=content_id if content_id is not None else path.stem,
    )


def _positive_int(text: str, what: str, offset: int) -> int:
    if not text.isdigit() or int(text) <= 0:
        raise Y4MParseError(f"bad {what} token {text!r}", offset)
    return int(text)


def load_raw_yuv(
    path: str | Path,
    width: int,
    height: int,
    fps: Fraction | str | float,
    pix_fmt: str = "yuv420p",
    content_id: str | None = None,
) -> VideoSequence:
    """Load headerless planar YUV; geometry must be supplied by the caller."""
    if pix_fmt not in _PIX_FMTS:
        raise UnsupportedFormatError(f"unsupported pixel format {pix_fmt!r}")
    path = Path(path)
    data = path.read_bytes()
    frames = _read_frames(data, 0, width, height, pix_fmt, framed=False)
    if not frames:
        raise ValueError("no frames")
    return VideoSequence(
        frames=np.stack(frames),
        fps=Fraction(str(fps)) if not isinstance(fps, Fraction) else fps,
        content_id=content_id if content_id is not None else path.stem,
    )


def write_y4m(video: VideoSequence, path: str | Path) -> None:
    """Write a luma-only (Cmono) Y4M file; rounds samples to 8-bit.

    Round trip through load_y4m is bit-exact for integer-valued sequences.
    """
    path = Path(path)
    header = (
        f"YUV4MPEG2 W{video.width} H{video.height} "
        f"F{video.fps.numerator}:{video.fps.denominator} Ip A1:1 Cmono\n"
    )
    luma = np.clip(np.rint(video.frames), 0, 255).astype(np.uint8)
    with path.open("wb") as fh:
        fh.write(header.encode("ascii"))
        for frame in luma:
            fh.write(b"FRAME\n")
            fh.write(frame.tobytes())


def downscale(plane: np.ndarray, s: int) -> np.ndarray:
    """Reduce both spatial dimensions by 2**s using block averaging.

    Output is floor(h / 2**s) x floor(w / 2**s); trailing rows/columns that
    do not fill a block are dropped.
    """
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2:
        raise ValueError("plane must be 2-D")
    block = 1 << s
    h, w = plane.shape
    if h < block or w < block:
        raise ValueError(
            f"plane {h}x{w} too small for 2^{s} = {block} block downscale"
        )
    hh, ww = h // block, w // block
    cropped = plane[: hh * block, : ww * block]
    return cropped.reshape(hh, block, ww, block).mean(axis=(1, 3))


def downscale_video(video: VideoSequence, s: int) -> VideoSequence:
    block = 1 << s
    t, h, w = video.frames.shape
    if h < block or w < block:
        raise ValueError(f"frames {h}x{w} too small for 2^{s} block downscale")
    hh, ww = h // block, w // block
    cropped = video.frames[:, : hh * block, : ww * block]
    frames = cropped.reshape(t, hh, block, ww, block).mean(axis=(2, 4))
    return VideoSequence(frames=frames, fps=video.fps, content_id=video.content_id)


def subsample_frame_indices(
    n_frames: int, fps: Fraction, target_fps: Fraction
) -> np.ndarray:
    """Source index per retained frame: round-half-up of t * fps / target_fps."""
    ratio = Fraction(fps) / Fraction(target_fps)
    out_len = int(n_frames / ratio)  # floor(n * target / fps)
    half = Fraction(1, 2)
    idx = [min(int(t * ratio + half), n_frames - 1) for t in range(out_len)]
    return np.asarray(idx, dtype=np.intp)


def temporal_subsample(video: VideoSequence, target_fps: Fraction | str | float) -> VideoSequence:
    """Drop frames to reach a lower frame rate (pseudo-reference construction)."""
    target = _as_fraction(target_fps)
    if target > video.fps:
        raise ValueError(
            f"cannot subsample {video.fps} fps up to {target} fps; use duplication"
        )
    if target == video.fps:
        return video
    idx = subsample_frame_indices(len(video), video.fps, target)
    if idx.size == 0:
        raise ValueError("subsampling would leave no frames")
    return VideoSequence(
        frames=video.frames[idx], fps=target, content_id=video.content_id
    )


def temporal_upsample_duplicate(
    video: VideoSequence, target_fps: Fraction | str | float
) -> VideoSequence:
    """Raise the frame rate by duplicating frames (floor index mapping)."""
    target = _as_fraction(target_fps)
    if target < video.fps:
        raise ValueError(
            f"cannot duplicate {video.fps} fps down to {target} fps; use subsampling"
        )
    if target == video.fps:
        return video
    ratio = Fraction(video.fps) / target
    out_len = int(len(video) * target / video.fps)
    idx = np.asarray(
        [min(int(t * ratio), len(video) - 1) for t in range(out_len)], dtype=np.intp
    )
    return VideoSequence(
        frames=video.frames[idx], fps=target, content_id=video.content_id
    )


def _as_fraction(value: Fraction | str | float) -> Fraction:
    frac = value if isinstance(value, Fraction) else Fraction(str(value))
    if frac <= 0:
        raise ValueError(f"frame rate must be positive, got {value}")
    return frac
