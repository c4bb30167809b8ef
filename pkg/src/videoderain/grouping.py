"""Non-local patch grouping.

A group collects ``k`` similar ``p x p`` patches (found by block matching on a
reference image) and stacks their temporal tubes into a ``p^2 x k x t``
tensor. Gathering is a pure selection, so its adjoint is an accumulating
scatter.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import sparse

__all__ = [
    "PatchGroup",
    "GroupState",
    "GroupSet",
    "cluster_groups",
    "gather",
    "scatter_accumulate",
]


@dataclass(frozen=True)
class PatchGroup:
    """Top-left corners of ``k`` matched patches, exemplar first."""

    exemplar: tuple
    members: np.ndarray  # (k, 2) int rows of (row, col)
    patch_size: int
    distances: np.ndarray = None

    @property
    def k(self):
        return len(self.members)


@dataclass
class GroupState:
    """Per-group solver state: gathered tensor, subspace basis and low-rank estimate."""

    gathered: np.ndarray  # (p^2, k, t)
    Q: np.ndarray  # (d, t), orthonormal rows
    J: np.ndarray  # (p^2, k, d)
    lam: float = 1.0


def _grid(n, p, stride):
    starts = list(range(0, n - p + 1, stride))
    if starts[-1] != n - p:
        starts.append(n - p)
    return starts


def cluster_groups(reference, p=8, k=32, stride=4, search_radius=20):
    """Block matching on a regular grid of exemplars.

    For every exemplar on the stride grid (last row/column snapped inside the
    frame), the ``k - 1`` nearest patches in squared L2 distance within
    ``search_radius`` are added after the exemplar itself. Ties are broken by
    row-major position, so the result is deterministic.
    """
    ref = np.asarray(reference, dtype=np.float64)
    if ref.ndim != 2:
        raise ValueError(f"reference must be a 2-D image, got shape {ref.shape}")
    h, w = ref.shape
    if not 1 <= p <= min(h, w):
        raise ValueError(f"patch size {p} does not fit a {h}x{w} image")
    if k < 1 or stride < 1 or search_radius < 0:
        raise ValueError("k and stride must be >= 1 and search_radius >= 0")
    if stride > p:
        raise ValueError(f"stride {stride} > patch size {p} leaves pixels uncovered")

    patches = sliding_window_view(ref, (p, p)).reshape(h - p + 1, w - p + 1, p * p)
    groups = []
    for r0 in _grid(h, p, stride):
        for c0 in _grid(w, p, stride):
            r_lo, r_hi = max(0, r0 - search_radius), min(h - p, r0 + search_radius)
            c_lo, c_hi = max(0, c0 - search_radius), min(w - p, c0 + search_radius)
            window = patches[r_lo : r_hi + 1, c_lo : c_hi + 1]
            dist = ((window - patches[r0, c0]) ** 2).sum(axis=-1).ravel()
            n_cand = dist.size
            if k > n_cand:
                raise ValueError(
                    f"group size {k} exceeds the {n_cand} candidates around ({r0}, {c0})"
                )
            ex = (r0 - r_lo) * (c_hi - c_lo + 1) + (c0 - c_lo)
            dist_sorted = dist.copy()
            dist_sorted[ex] = -1.0  # exemplar first
            order = np.argsort(dist_sorted, kind="stable")[:k]
            rows = r_lo + order // (c_hi - c_lo + 1)
            cols = c_lo + order % (c_hi - c_lo + 1)
            groups.append(
                PatchGroup(
                    exemplar=(r0, c0),
                    members=np.stack([rows, cols], axis=1),
                    patch_size=p,
                    distances=dist[order],
                )
            )
    return groups


def _patch_index(group, dims):
    h, w = dims[:2]
    p = group.patch_size
    m = np.asarray(group.members)
    if (
        m.min() < 0
        or (m[:, 0] + p > h).any()
        or (m[:, 1] + p > w).any()
    ):
        raise ValueError(f"group member patch outside a {h}x{w} frame")
    off_r, off_c = np.divmod(np.arange(p * p), p)
    # (p^2, k) flat pixel indices, patch entries row-major
    return (m[None, :, 0] + off_r[:, None]) * w + (m[None, :, 1] + off_c[:, None])


def gather(video, group):
    """Stack the member patches of ``group`` into a ``p^2 x k x t`` tensor."""
    video = np.asarray(video)
    idx = _patch_index(group, video.shape)
    return video.reshape(-1, video.shape[2])[idx]


def scatter_accumulate(items, dims):
    """Adjoint of :func:`gather` summed over groups.

    ``items`` is an iterable of ``(PatchGroup, tensor)`` pairs. Returns the
    accumulated video and the per-voxel contribution counts.
    """
    h, w, t = dims
    total = np.zeros((h * w, t))
    counts = np.zeros((h * w, t))
    for group, values in items:
        idx = _patch_index(group, dims)
        values = np.asarray(values)
        if values.shape != idx.shape + (t,):
            raise ValueError(
                f"group tensor has shape {values.shape}, expected {idx.shape + (t,)}"
            )
        np.add.at(total, idx.ravel(), values.reshape(-1, t))
        np.add.at(counts, idx.ravel(), 1.0)
    return total.reshape(h, w, t), counts.reshape(h, w, t)


class GroupSet:
    """All groups of one frame size, with vectorized gather and scatter."""

    def __init__(self, groups, dims):
        if not groups:
            raise ValueError("at least one group is required")
        self.groups = list(groups)
        self.dims = (int(dims[0]), int(dims[1]))
        self.p = self.groups[0].patch_size
        self.k = self.groups[0].k
        for g in self.groups:
            if g.patch_size != self.p or g.k != self.k:
                raise ValueError("all groups must share patch and group size")
        # (G, p^2, k)
        self.index = np.stack([_patch_index(g, self.dims) for g in self.groups])
        npix = self.dims[0] * self.dims[1]
        gid = np.repeat(np.arange(len(self.groups)), self.p * self.p * self.k)
        # (G, h*w) count of times each group reads each pixel
        self.counts = np.bincount(
            gid * npix + self.index.ravel(), minlength=len(self.groups) * npix
        ).reshape(len(self.groups), npix).astype(np.float64)
        flat = self.index.ravel()
        self._scatter = sparse.csr_matrix(
            (np.ones(flat.size), (flat, np.arange(flat.size))), shape=(npix, flat.size)
        )

    def __len__(self):
        return len(self.groups)

    def gather(self, video):
        """``(G, p^2, k, t)`` stack of all group tensors."""
        return video.reshape(-1, video.shape[2])[self.index]

    def scatter(self, values, frames):
        """Sum ``(G, p^2, k, t)`` values back onto an ``(h, w, t)`` video."""
        return (self._scatter @ values.reshape(-1, frames)).reshape(self.dims + (frames,))

    def coverage(self):
        return self.counts.sum(axis=0).reshape(self.dims)
