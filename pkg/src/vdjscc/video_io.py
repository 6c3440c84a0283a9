"""Raw clip files, synthetic test videos and token mask maps.

Raw clips are header-less unsigned 8-bit planar volumes laid out
frame-major, then channel, then row, then column. Mask maps are plain
(P2) graymaps, one per temporal token slice.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError

PATTERNS = ("moving_square", "bouncing_ball", "static_noise_background_with_mover")


@dataclass
class VideoClip:
    frames: np.ndarray  # (T, C, H, W) in [0, 1]
    frame_rate: float = 25.0
    # (T, H, W) boolean footprint of the moving object, synthetic clips only
    object_mask: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 4:
            raise DimensionError(f"VideoClip frames must be T x C x H x W, got {self.frames.shape}")

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.frames.shape


def load_raw(path, T: int, C: int, H: int, W: int) -> VideoClip:
    raw = Path(path).read_bytes()
    expected = T * C * H * W
    if len(raw) != expected:
        raise OSError(f"{path}: expected {expected} bytes for {T}x{C}x{H}x{W}, found {len(raw)}")
    data = np.frombuffer(raw, dtype=np.uint8).reshape(T, C, H, W)
    return VideoClip(data / 255.0)


def to_uint8(frames: np.ndarray) -> np.ndarray:
    return np.round(np.clip(frames, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_raw(clip: VideoClip, path) -> None:
    Path(path).write_bytes(to_uint8(clip.frames).tobytes())


def _background(rng: np.random.Generator, C: int, H: int, W: int) -> np.ndarray:
    # smooth two-axis gradient with a random tint per channel
    yy, xx = np.meshgrid(np.linspace(0, 1, H), np.linspace(0, 1, W), indexing="ij")
    out = np.empty((C, H, W))
    for c in range(C):
        a, b = rng.uniform(-0.3, 0.3, size=2)
        out[c] = rng.uniform(0.3, 0.6) + a * yy + b * xx
    return np.clip(out, 0.05, 0.95)


def _square_track(rng, T, H, W, size):
    """Integer start/velocity that keeps a size x size object inside the frame for T frames."""
    pos, vel = [], []
    for extent in (H, W):
        room = extent - size
        vmax = max(1, min(3, room // max(T - 1, 1)))
        v = int(rng.integers(1, vmax + 1)) * int(rng.choice([-1, 1]))
        span = abs(v) * (T - 1)
        if span > room:
            v = 0
            span = 0
        start = int(rng.integers(0, room - span + 1))
        if v < 0:
            start += span
        pos.append(start)
        vel.append(v)
    return np.array(pos), np.array(vel)


def _bounce_track(rng, T, H, W, size):
    pos = np.array([rng.integers(0, H - size + 1), rng.integers(0, W - size + 1)])
    vel = np.array([rng.integers(1, 4) * rng.choice([-1, 1]), rng.integers(1, 4) * rng.choice([-1, 1])])
    track = []
    for _ in range(T):
        track.append(pos.copy())
        nxt = pos + vel
        for ax, extent in enumerate((H, W)):
            if nxt[ax] < 0 or nxt[ax] > extent - size:
                vel[ax] = -vel[ax]
                nxt[ax] = pos[ax] + vel[ax]
        pos = np.clip(nxt, 0, [H - size, W - size])
    return track


def synthesize_clip(seed: int, T: int, C: int, H: int, W: int, pattern: str = "moving_square") -> VideoClip:
    """Deterministic video of one object moving over a fixed background."""
    if pattern not in PATTERNS:
        raise ConfigError(f"unknown synthetic pattern {pattern!r}; expected one of {PATTERNS}")
    rng = np.random.default_rng(seed)
    size = max(2, min(H, W) // 4)
    if pattern == "static_noise_background_with_mover":
        bg = rng.uniform(0.0, 1.0, size=(C, H, W))
    else:
        bg = _background(rng, C, H, W)
    color = rng.uniform(0.0, 1.0, size=C)
    # keep the object visible against the background
    color = np.where(np.abs(color - bg.mean(axis=(1, 2))) < 0.3, 1.0 - color, color)

    if pattern == "bouncing_ball":
        track = _bounce_track(rng, T, H, W, size)
        yy, xx = np.mgrid[0:size, 0:size]
        r = (size - 1) / 2
        shape = (yy - r) ** 2 + (xx - r) ** 2 <= (r + 0.25) ** 2
    else:
        start, vel = _square_track(rng, T, H, W, size)
        track = [start + tau * vel for tau in range(T)]
        shape = np.ones((size, size), dtype=bool)

    frames = np.empty((T, C, H, W))
    footprint = np.zeros((T, H, W), dtype=bool)
    for tau, (py, px) in enumerate(track):
        frames[tau] = bg
        footprint[tau, py : py + size, px : px + size] = shape
        for c in range(C):
            frames[tau, c][footprint[tau]] = color[c]
    return VideoClip(frames, object_mask=footprint)


def synthesize_set(base_seed: int, count: int, T, C, H, W, pattern="moving_square") -> list[VideoClip]:
    return [synthesize_clip(base_seed * 100_003 + i, T, C, H, W, pattern) for i in range(count)]


def write_mask_map(mask, n_t: int, n_h: int, n_w: int, path, scale: int = 1) -> list[Path]:
    """Write one P2 graymap per temporal slice: kept tokens white, dropped black.

    ``path`` is a prefix; files are named ``<prefix>_t<idx>.pgm``.
    """
    mask = np.asarray(mask).reshape(-1)
    if mask.size != n_t * n_h * n_w:
        raise DimensionError(f"mask has {mask.size} entries, grid needs {n_t}x{n_h}x{n_w}")
    grid = mask.reshape(n_t, n_h, n_w).astype(bool)
    prefix = Path(path)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    written = []
    for i in range(n_t):
        img = np.where(grid[i], 255, 0)
        img = np.repeat(np.repeat(img, scale, axis=0), scale, axis=1)
        lines = ["P2", f"{img.shape[1]} {img.shape[0]}", "255"]
        lines += [" ".join(str(v) for v in row) for row in img]
        out = prefix.with_name(f"{prefix.name}_t{i}.pgm")
        out.write_text("\n".join(lines) + "\n")
        written.append(out)
    return written


def read_pgm(path) -> np.ndarray:
    tokens = []
    for line in Path(path).read_text().splitlines():
        tokens += line.split("#", 1)[0].split()
    if tokens[0] != "P2":
        raise OSError(f"{path}: not a plain graymap")
    w, h = int(tokens[1]), int(tokens[2])
    return np.array(tokens[4 : 4 + w * h], dtype=np.int64).reshape(h, w)
