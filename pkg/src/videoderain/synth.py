"""Synthetic rainy videos with exact ground truth.

A static background is replicated over time, sparse additive rain (anti-aliased
streaks plus speckle splashes near the ground) is drawn independently per
frame, and each frame is jittered by a small affine warp before noise is
added. Random draws come from numpy's counter-based Philox generator keyed by
``(seed, stream)``, so outputs are identical across platforms.
"""

from dataclasses import dataclass, field

import numpy as np

from . import align
from .io import read_luminance

__all__ = [
    "SynthConfig",
    "SynthTruth",
    "make_background",
    "make_rain",
    "make_jitter",
    "compose",
    "synthesize",
]

_STREAM_RAIN, _STREAM_JITTER, _STREAM_NOISE = 1, 2, 3


def _rng(seed, stream):
    key = np.array([int(seed) % 2**64, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class SynthConfig:
    height: int = 64
    width: int = 64
    frames: int = 24
    background_kind: str = "checkerboard"  # checkerboard | smooth-gradient | natural-image-file
    background_path: str = ""
    cell_size: int = 8
    checker_levels: tuple = (0.2, 0.6)
    streak_density: float = 0.05
    streak_angle_range: tuple = (-10.0, 10.0)  # degrees from vertical
    streak_length_range: tuple = (8.0, 20.0)
    streak_width: float = 1.0
    streak_intensity_range: tuple = (0.2, 0.4)
    splash_density: float = 0.0
    jitter_max: float = 0.0
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if min(self.height, self.width) < 1 or self.frames < 2:
            raise ValueError("need height, width >= 1 and frames >= 2")
        for name in ("streak_density", "splash_density"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        lo, hi = self.streak_intensity_range
        if not 0.0 < lo <= hi <= 1.0:
            raise ValueError(f"streak_intensity_range {self.streak_intensity_range} not within (0, 1]")
        if self.streak_angle_range[0] > self.streak_angle_range[1]:
            raise ValueError("streak_angle_range must be (low, high)")
        if self.streak_length_range[0] > self.streak_length_range[1] or self.streak_length_range[0] < 0:
            raise ValueError("streak_length_range must be (low, high) with low >= 0")
        if self.streak_width <= 0 or self.jitter_max < 0 or self.noise_sigma < 0:
            raise ValueError("streak_width must be > 0; jitter_max and noise_sigma >= 0")
        if self.background_kind not in ("checkerboard", "smooth-gradient", "natural-image-file"):
            raise ValueError(f"unknown background_kind {self.background_kind!r}")


@dataclass
class SynthTruth:
    clean: np.ndarray  # (h, w, t)
    rain: np.ndarray  # (h, w, t), nonnegative
    jitter: np.ndarray  # (t, 6)
    observed: np.ndarray  # (h, w, t)
    config: SynthConfig = field(default=None, repr=False)


def make_background(cfg):
    """Static background replicated over ``cfg.frames`` frames (float32)."""
    h, w, t = cfg.height, cfg.width, cfg.frames
    if cfg.background_kind == "checkerboard":
        y, x = np.mgrid[0:h, 0:w]
        parity = ((y // cfg.cell_size) + (x // cfg.cell_size)) % 2
        lo, hi = cfg.checker_levels
        img = np.where(parity == 0, lo, hi)
    elif cfg.background_kind == "smooth-gradient":
        ramp = np.linspace(0.0, 1.0, w) if w > 1 else np.zeros(1)
        img = np.broadcast_to(ramp, (h, w))
    else:
        img = read_luminance(cfg.background_path)
        if img.shape != (h, w):
            raise ValueError(
                f"background image is {img.shape[0]}x{img.shape[1]}, config asks for {h}x{w}"
            )
    img = np.asarray(img, dtype=np.float32)
    return np.repeat(img[:, :, None], t, axis=2)


def _segment_coverage(shape, p0, p1, width):
    """Anti-aliased coverage of a thick line segment, restricted to its bounding box."""
    h, w = shape
    pad = width / 2.0 + 1.0
    r0 = max(int(np.floor(min(p0[1], p1[1]) - pad)), 0)
    r1 = min(int(np.ceil(max(p0[1], p1[1]) + pad)), h - 1)
    c0 = max(int(np.floor(min(p0[0], p1[0]) - pad)), 0)
    c1 = min(int(np.ceil(max(p0[0], p1[0]) + pad)), w - 1)
    if r0 > r1 or c0 > c1:
        return None
    y, x = np.mgrid[r0 : r1 + 1, c0 : c1 + 1].astype(np.float64)
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    L2 = dx * dx + dy * dy
    s = np.clip(((x - p0[0]) * dx + (y - p0[1]) * dy) / L2, 0.0, 1.0) if L2 > 0 else 0.0
    dist = np.hypot(x - (p0[0] + s * dx), y - (p0[1] + s * dy))
    cov = np.clip(width / 2.0 + 0.5 - dist, 0.0, 1.0)
    return (slice(r0, r1 + 1), slice(c0, c1 + 1)), cov


def _streak_frame(cfg, rng):
    h, w = cfg.height, cfg.width
    frame = np.zeros((h, w))
    target = cfg.streak_density * h * w
    if target <= 0:
        return frame
    support = 0
    # accept a streak only if it does not overshoot the target by more than 10%
    for _ in range(100 * int(target) + 100):
        if support >= 0.97 * target:
            break
        cx, cy = rng.uniform(0, w), rng.uniform(0, h)
        theta = np.deg2rad(rng.uniform(*cfg.streak_angle_range))
        length = rng.uniform(*cfg.streak_length_range)
        value = rng.uniform(*cfg.streak_intensity_range)
        ux, uy = np.sin(theta), np.cos(theta)
        p0 = (cx - 0.5 * length * ux, cy - 0.5 * length * uy)
        p1 = (cx + 0.5 * length * ux, cy + 0.5 * length * uy)
        hit = _segment_coverage((h, w), p0, p1, cfg.streak_width)
        if hit is None:
            continue
        sl, cov = hit
        trial = np.maximum(frame[sl], value * cov)
        new_support = support - np.count_nonzero(frame[sl]) + np.count_nonzero(trial)
        if new_support > 1.1 * target:
            continue
        frame[sl] = trial
        support = new_support
    return frame


def make_rain(cfg):
    """Sparse nonnegative rain layer (float32), drawn independently for every frame."""
    rng = _rng(cfg.seed, _STREAM_RAIN)
    h, w, t = cfg.height, cfg.width, cfg.frames
    rain = np.zeros((h, w, t), dtype=np.float32)
    bottom = h - h // 4
    for f in range(t):
        frame = _streak_frame(cfg, rng)
        if cfg.splash_density > 0 and bottom < h:
            hit = rng.random((h - bottom, w)) < cfg.splash_density
            vals = rng.uniform(*cfg.streak_intensity_range, size=hit.shape)
            frame[bottom:] = np.maximum(frame[bottom:], np.where(hit, vals, 0.0))
        rain[:, :, f] = frame
    return rain


def make_jitter(cfg):
    """Per-frame affine jitter ``(t, 6)``; frame 0 is the identity reference.

    Translations are uniform in ``[-jitter_max, jitter_max]``; the rotation
    about the frame centre is bounded so that it moves the frame edge by at
    most ``jitter_max`` pixels.
    """
    t = cfg.frames
    taus = np.tile(align.IDENTITY, (t, 1))
    if cfg.jitter_max <= 0:
        return taus
    rng = _rng(cfg.seed, _STREAM_JITTER)
    cx, cy = (cfg.width - 1) / 2.0, (cfg.height - 1) / 2.0
    max_angle = cfg.jitter_max / (0.5 * max(cfg.height, cfg.width))
    for f in range(1, t):
        sx, sy = rng.uniform(-cfg.jitter_max, cfg.jitter_max, size=2)
        th = rng.uniform(-max_angle, max_angle)
        co, si = np.cos(th), np.sin(th)
        taus[f] = [co, -si, cx - co * cx + si * cy + sx, si, co, cy - si * cx - co * cy + sy]
    return taus


def compose(clean, rain, jitter, noise_sigma=0.0, seed=0):
    """Observed video ``clip(warp(clean + rain, jitter) + noise, 0, 1)``.

    Truth layers are stored unclipped; only the observation is clipped.
    """
    clean = np.asarray(clean, dtype=np.float32)
    rain = np.asarray(rain, dtype=np.float32)
    jitter = np.asarray(jitter, dtype=np.float64)
    if clean.shape != rain.shape or jitter.shape != (clean.shape[2], 6):
        raise ValueError(
            f"shape mismatch: clean {clean.shape}, rain {rain.shape}, jitter {jitter.shape}"
        )
    scene = clean.astype(np.float64) + rain
    observed = align.warp_video(scene, jitter)
    if noise_sigma > 0:
        observed = observed + noise_sigma * _rng(seed, _STREAM_NOISE).standard_normal(observed.shape)
    observed = np.clip(observed, 0.0, 1.0).astype(np.float32)
    return SynthTruth(clean=clean, rain=rain, jitter=jitter, observed=observed)


def synthesize(cfg):
    """Background, rain, jitter and observation for one configuration."""
    truth = compose(make_background(cfg), make_rain(cfg), make_jitter(cfg), cfg.noise_sigma, cfg.seed)
    truth.config = cfg
    return truth
