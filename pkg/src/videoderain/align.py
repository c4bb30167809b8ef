"""Per-frame affine warping and the linearized alignment update.

Parameters are six numbers ``(a, b, tx, c, d, ty)``: output pixel ``(x, y)``
(column, row) samples the source image at ``(a*x + b*y + tx, c*x + d*y + ty)``.
"""

import numpy as np
from scipy import ndimage

from .errors import NumericalError

__all__ = [
    "IDENTITY",
    "check_params",
    "warp_affine",
    "warp_video",
    "warp_jacobian",
    "update_tau",
    "endpoint_error",
    "compose",
    "invert",
]

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
DET_RANGE = (0.5, 2.0)


def check_params(params):
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (6,):
        raise ValueError(f"affine parameters must have 6 entries, got {params.shape}")
    det = params[0] * params[4] - params[1] * params[3]
    if not DET_RANGE[0] <= det <= DET_RANGE[1]:
        raise ValueError(f"affine determinant {det:.4g} outside {DET_RANGE}")
    return params


def _source_coords(params, shape):
    a, b, tx, c, d, ty = params
    y, x = np.mgrid[0 : shape[0], 0 : shape[1]].astype(np.float64)
    return a * x + b * y + tx, c * x + d * y + ty


def warp_affine(frame, params):
    """Bilinear resampling of ``frame`` with replicated borders."""
    params = check_params(params)
    frame = np.asarray(frame)
    if np.array_equal(params, IDENTITY):
        return frame.copy()
    sx, sy = _source_coords(params, frame.shape)
    out = ndimage.map_coordinates(
        frame.astype(np.float64), [sy, sx], order=1, mode="nearest"
    )
    return out.astype(frame.dtype, copy=False)


def warp_video(video, taus):
    """Warp every frame of an ``(h, w, t)`` video by its own parameters."""
    video = np.asarray(video)
    out = np.empty_like(video)
    for f in range(video.shape[2]):
        out[:, :, f] = warp_affine(video[:, :, f], taus[f])
    return out


def _central_gradients(img):
    # replicate boundary: the one-sided neighbour equals the edge pixel
    p = np.pad(img, 1, mode="edge")
    gx = 0.5 * (p[1:-1, 2:] - p[1:-1, :-2])
    gy = 0.5 * (p[2:, 1:-1] - p[:-2, 1:-1])
    return gx, gy


def warp_jacobian(frame, params):
    """Derivative of the warped frame with respect to each of the six parameters.

    Returns an array of shape ``(6, h, w)``. Spatial gradients are taken on the
    warped frame and mapped back to source coordinates through the inverse
    transpose of the linear part.
    """
    params = check_params(params)
    frame = np.asarray(frame, dtype=np.float64)
    warped = warp_affine(frame, params)
    wx, wy = _central_gradients(warped)
    a, b, _, c, d, _ = params
    det = a * d - b * c
    # grad_source = A^{-T} grad_warped
    gx = (d * wx - c * wy) / det
    gy = (-b * wx + a * wy) / det
    y, x = np.mgrid[0 : frame.shape[0], 0 : frame.shape[1]].astype(np.float64)
    return np.stack([gx * x, gx * y, gx, gy * x, gy * y, gy])


def _inside_mask(params, shape):
    sx, sy = _source_coords(params, shape)
    return (sx >= 0) & (sx <= shape[1] - 1) & (sy >= 0) & (sy <= shape[0] - 1)


def update_tau(observed, background, rain, params, damping=1e-6, max_halvings=5, exclude=None):
    """One Gauss-Newton step of ``min ||O o tau - B - R||^2`` over the six parameters.

    Pixels whose source falls outside the frame, and the strongest 10% of the
    rain layer, are left out of the normal equations. The step is halved up to
    ``max_halvings`` times until the residual does not grow; if none of the
    trial steps helps, the parameters come back unchanged. ``exclude`` is an
    optional boolean image of further pixels to leave out, both from the normal
    equations and from the residual that judges the step.
    """
    params = check_params(params)
    O = np.asarray(observed, dtype=np.float64)
    B = np.asarray(background, dtype=np.float64)
    R = np.asarray(rain, dtype=np.float64)
    if not O.shape == B.shape == R.shape:
        raise ValueError(f"frame shapes differ: {O.shape}, {B.shape}, {R.shape}")

    keep = None if exclude is None else ~np.asarray(exclude, dtype=bool)

    def energy(p):
        r = warp_affine(O, p) - B - R
        return float(np.sum(r**2 if keep is None else r[keep] ** 2))

    warped = warp_affine(O, params)
    base = energy(params)
    gap = B - warped
    inside = _inside_mask(params, O.shape)
    jac_all = warp_jacobian(O, params)

    absr = np.abs(R)
    mask = inside & ~(absr > np.percentile(absr, 90))
    if keep is not None:
        mask &= keep
    jac = jac_all[:, mask]
    H = jac @ jac.T
    H[np.diag_indices(6)] += damping * np.trace(H) / 6.0
    cond = np.linalg.cond(H)
    if not np.isfinite(cond) or cond > 1e14:
        raise NumericalError(
            f"alignment normal matrix is singular (condition number {cond:.3g})"
        )
    step = np.linalg.solve(H, jac @ (gap + R)[mask])

    for _ in range(max_halvings + 1):
        trial = params + step
        det = trial[0] * trial[4] - trial[1] * trial[3]
        if DET_RANGE[0] <= det <= DET_RANGE[1] and energy(trial) <= base:
            return trial
        step = 0.5 * step
    return params


def compose(outer, inner):
    """Parameters of ``x -> outer(inner(x))``."""
    A1 = np.array([[outer[0], outer[1], outer[2]], [outer[3], outer[4], outer[5]], [0, 0, 1.0]])
    A2 = np.array([[inner[0], inner[1], inner[2]], [inner[3], inner[4], inner[5]], [0, 0, 1.0]])
    return (A1 @ A2)[:2].ravel()


def invert(params):
    A = np.array([[params[0], params[1], params[2]], [params[3], params[4], params[5]], [0, 0, 1.0]])
    return np.linalg.inv(A)[:2].ravel()


def endpoint_error(estimate, truth, shape):
    """Mean pixel distance between the maps of two parameter sets over a frame."""
    ex, ey = _source_coords(np.asarray(estimate, dtype=np.float64), shape)
    tx, ty = _source_coords(np.asarray(truth, dtype=np.float64), shape)
    return float(np.mean(np.hypot(ex - tx, ey - ty)))
