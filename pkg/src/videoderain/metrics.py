"""Image-quality metrics and diagnostics for deraining results."""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

__all__ = [
    "psnr",
    "ssim",
    "GradientHistogramPair",
    "gradient_isotropy",
    "section_line",
    "roughness",
    "rain_support_f1",
    "temporal_median",
    "background_correlation",
]


def psnr(x, y, peak=1.0):
    """Peak signal-to-noise ratio in dB; identical inputs give ``inf``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if peak <= 0:
        raise ValueError("peak must be positive")
    mse = np.mean((x - y) ** 2)
    if mse == 0:
        return float("inf")
    return float(10.0 * np.log10(peak**2 / mse))


def _gaussian_window(size=11, sigma=1.5):
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


def ssim(x, y, data_range=1.0):
    """Mean SSIM with an 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03.

    Local statistics are evaluated only where the window fits inside the image.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 2:
        raise ValueError(f"need two 2-D images of equal shape, got {x.shape} and {y.shape}")
    if min(x.shape) < 11:
        raise ValueError(f"image {x.shape} smaller than the 11x11 SSIM window")
    win = _gaussian_window()
    C1 = (0.01 * data_range) ** 2
    C2 = (0.03 * data_range) ** 2

    def filt(img):
        return ndimage.correlate(img, win, mode="constant")[5:-5, 5:-5]

    mx, my = filt(x), filt(y)
    sxx = filt(x * x) - mx * mx
    syy = filt(y * y) - my * my
    sxy = filt(x * y) - mx * my
    num = (2 * mx * my + C1) * (2 * sxy + C2)
    den = (mx * mx + my * my + C1) * (sxx + syy + C2)
    return float(np.mean(num / den))


@dataclass(frozen=True)
class GradientHistogramPair:
    bin_edges: np.ndarray  # 65 edges over [-0.5, 0.5]
    h_counts: np.ndarray  # normalized, sums to 1
    v_counts: np.ndarray


BIN_EDGES = np.linspace(-0.5, 0.5, 65)


def _hist(values):
    v = np.clip(values.ravel(), BIN_EDGES[0], BIN_EDGES[-1])
    counts, _ = np.histogram(v, bins=BIN_EDGES)
    return counts / counts.sum()


def _js_divergence(p, q):
    m = 0.5 * (p + q)

    def kl(a, b):
        nz = a > 0
        return float(np.sum(a[nz] * np.log(a[nz] / b[nz])))

    return max(0.5 * kl(p, m) + 0.5 * kl(q, m), 0.0)


def gradient_isotropy(frame):
    """Horizontal/vertical forward-difference histograms and their JS divergence (nats)."""
    img = np.asarray(frame, dtype=np.float64)
    if img.ndim != 2 or min(img.shape) < 2:
        raise ValueError(f"need a 2-D image with both sides >= 2, got {img.shape}")
    h = _hist(np.diff(img, axis=1))
    v = _hist(np.diff(img, axis=0))
    return GradientHistogramPair(BIN_EDGES.copy(), h, v), _js_divergence(h, v)


def section_line(frame, row):
    frame = np.asarray(frame)
    if not 0 <= row < frame.shape[0]:
        raise ValueError(f"row {row} outside [0, {frame.shape[0]})")
    return frame[row].astype(np.float64)


def roughness(profile):
    """Mean absolute second difference of a 1-D profile."""
    profile = np.asarray(profile, dtype=np.float64)
    if profile.size < 3:
        return 0.0
    return float(np.mean(np.abs(np.diff(profile, n=2))))


def rain_support_f1(R_hat, R_true, threshold=0.05):
    """F1 score of the supports ``|R| > threshold``; two empty supports score 1."""
    a = np.abs(np.asarray(R_hat)) > threshold
    b = np.abs(np.asarray(R_true)) > threshold
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    tp = np.count_nonzero(a & b)
    denom = np.count_nonzero(a) + np.count_nonzero(b)
    if denom == 0:
        return 1.0
    return 2.0 * tp / denom


def temporal_median(video):
    """Per-pixel median over frames, replicated back to the video shape."""
    video = np.asarray(video)
    med = np.median(video, axis=2, keepdims=True)
    return np.broadcast_to(med, video.shape).astype(video.dtype)


def background_correlation(rain, background):
    """Correlation between rain-layer magnitude and background edge strength.

    Misregistration leaves copies of the background's edges in the rain
    layer, so ``|R|`` lines up with ``|grad B|``. Rain drawn independently of
    the scene gives a value near zero. ``background`` may be a single image or
    a video of the same shape as ``rain``.
    """
    r = np.abs(np.asarray(rain, dtype=np.float64))
    b = np.asarray(background, dtype=np.float64)
    if b.ndim == 2 and r.ndim == 3:
        b = b[:, :, None]
    gy, gx = np.gradient(b, axis=(0, 1))
    g = np.broadcast_to(np.hypot(gx, gy), r.shape).ravel()
    r = r.ravel() - r.mean()
    g = g - g.mean()
    denom = np.linalg.norm(r) * np.linalg.norm(g)
    return 0.0 if denom == 0 else float(abs(r @ g) / denom)
