"""Dense 3-D tensor primitives.

Tensors are plain numpy arrays of shape ``(I1, I2, I3)``; for videos that is
``(height, width, frames)``. Mode numbers are 1-based, as in the usual
tensor-algebra notation, so mode 3 is the temporal axis.

Unfoldings follow the Kolda-Bader ordering: the mode-n fibers become columns,
arranged so that the first remaining index varies fastest.
"""

import numpy as np

from .errors import NumericalError

__all__ = [
    "unfold",
    "fold",
    "mode3_product",
    "soft_threshold",
    "svd_rank_d",
    "svt_matrix",
    "tnn",
    "svt_tnn",
    "svt_tnn_with_norm",
    "temporal_gradient",
    "temporal_gradient_adjoint",
]


def _check_mode(mode):
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode!r}")


def unfold(T, mode):
    """Mode-``mode`` matricization of a 3-D tensor.

    Returns an ``I_mode x (prod of the other dims)`` matrix whose column
    index is ``j = i_a + I_a * i_b`` for the remaining indices ``a < b``.
    """
    _check_mode(mode)
    T = np.asarray(T)
    if T.ndim != 3:
        raise ValueError(f"expected a 3-D tensor, got shape {T.shape}")
    return np.moveaxis(T, mode - 1, 0).reshape(T.shape[mode - 1], -1, order="F")


def fold(M, mode, dims):
    """Inverse of :func:`unfold`."""
    _check_mode(mode)
    M = np.asarray(M)
    dims = tuple(int(x) for x in dims)
    if len(dims) != 3:
        raise ValueError(f"dims must have three entries, got {dims}")
    rest = [dims[i] for i in range(3) if i != mode - 1]
    if M.ndim != 2 or M.shape != (dims[mode - 1], rest[0] * rest[1]):
        raise ValueError(
            f"matrix of shape {M.shape} cannot be folded along mode {mode} into {dims}"
        )
    full = (dims[mode - 1], rest[0], rest[1])
    return np.moveaxis(M.reshape(full, order="F"), 0, mode - 1)


def mode3_product(T, Q):
    """Multiply a tensor ``a x b x t`` by a ``d x t`` matrix along mode 3."""
    T = np.asarray(T)
    Q = np.asarray(Q)
    if T.ndim != 3 or Q.ndim != 2 or Q.shape[1] != T.shape[2]:
        raise ValueError(
            f"mode-3 product needs Q with {T.shape[-1]} columns, got Q {Q.shape} "
            f"and T {T.shape}"
        )
    return np.einsum("abt,dt->abd", T, Q)


def soft_threshold(X, tau):
    """Elementwise shrinkage ``sign(x) * max(|x| - tau, 0)``.

    This is the proximal operator of ``tau * |x|``. Scalars in, scalar out.
    """
    if tau < 0:
        raise ValueError(f"threshold must be nonnegative, got {tau}")
    X = np.asarray(X)
    out = np.sign(X) * np.maximum(np.abs(X) - tau, 0.0)
    if out.ndim == 0:
        return float(out)
    return out


def _svd(M):
    try:
        return np.linalg.svd(M, full_matrices=False)
    except np.linalg.LinAlgError:
        pass
    # gesdd occasionally fails where the slower QR-iteration driver succeeds
    import scipy.linalg

    try:
        return scipy.linalg.svd(M, full_matrices=False, lapack_driver="gesvd")
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"SVD of a {M.shape} matrix did not converge after the gesdd and "
            f"gesvd drivers (2 attempts): {exc}"
        ) from exc


def svd_rank_d(M, d):
    """Top-``d`` singular triplets of ``M``.

    Returns ``(U, S, V)`` with ``U`` of shape ``(rows, d)``, ``S`` non-increasing
    and ``V`` of shape ``(cols, d)`` so that ``U @ diag(S) @ V.T`` is the best
    rank-``d`` approximation.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {M.shape}")
    if not 1 <= d <= min(M.shape):
        raise ValueError(f"rank d={d} outside [1, {min(M.shape)}]")
    U, S, Vt = _svd(M)
    return U[:, :d], S[:d], Vt[:d].T


def svt_matrix(M, tau):
    """Singular value thresholding: the prox of ``tau * ||.||_*``."""
    if tau < 0:
        raise ValueError(f"threshold must be nonnegative, got {tau}")
    M = np.asarray(M, dtype=np.float64)
    U, S, Vt = _svd(M)
    return (U * np.maximum(S - tau, 0.0)) @ Vt


def tnn(T):
    """Tubal nuclear norm.

    Mean over the frontal slices of ``fft(T, axis=2)`` of their nuclear norms.
    Leading batch axes are allowed: ``T[..., n1, n2, n3]`` gives one value per
    batch entry.
    """
    T = np.asarray(T, dtype=np.float64)
    F = np.moveaxis(np.fft.fft(T, axis=-1), -1, -3)
    s = np.linalg.svd(F, compute_uv=False)
    return s.sum(axis=(-1, -2)) / T.shape[-1]


def svt_tnn(T, tau):
    """Proximal operator of ``tau * tnn``.

    Thresholds the singular values of every Fourier-domain frontal slice by
    ``tau`` and transforms back. Accepts leading batch axes like :func:`tnn`.
    """
    return svt_tnn_with_norm(T, tau)[0]


def svt_tnn_with_norm(T, tau):
    """:func:`svt_tnn` plus the tubal nuclear norm of its output (per batch entry)."""
    if tau < 0:
        raise ValueError(f"threshold must be nonnegative, got {tau}")
    T = np.asarray(T, dtype=np.float64)
    n3 = T.shape[-1]
    F = np.moveaxis(np.fft.fft(T, axis=-1), -1, -3)
    # conjugate-symmetric slices give conjugate SVDs, so only the first half is needed
    half = n3 // 2 + 1
    try:
        U, S, Vh = np.linalg.svd(F[..., :half, :, :], full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Fourier-slice SVD failed for tensor {T.shape}: {exc}") from exc
    S = np.maximum(S - tau, 0.0)
    G = np.empty_like(F)
    G[..., :half, :, :] = (U * S[..., None, :]) @ Vh
    if n3 > half:
        G[..., half:, :, :] = np.conj(G[..., 1 : n3 - half + 1, :, :][..., ::-1, :, :])
    out = np.fft.ifft(np.moveaxis(G, -3, -1), axis=-1).real
    weight = np.ones(half)
    weight[1 : n3 - half + 1] = 2.0
    norm = np.einsum("...fr,f->...", S, weight) / n3
    return out, norm


def _check_frames(T):
    T = np.asarray(T)
    if T.ndim != 3 or T.shape[2] < 2:
        raise ValueError(f"temporal difference needs at least 2 frames, got shape {T.shape}")
    return T


def temporal_gradient(T):
    """Circular forward difference along the frame axis."""
    T = _check_frames(T)
    out = np.empty_like(T)
    np.subtract(T[:, :, 1:], T[:, :, :-1], out=out[:, :, :-1])
    np.subtract(T[:, :, 0], T[:, :, -1], out=out[:, :, -1])
    return out


def temporal_gradient_adjoint(G):
    """Adjoint of :func:`temporal_gradient`."""
    G = _check_frames(G)
    out = np.empty_like(G)
    np.subtract(G[:, :, :-1], G[:, :, 1:], out=out[:, :, 1:])
    np.subtract(G[:, :, -1], G[:, :, 0], out=out[:, :, 0])
    return out
