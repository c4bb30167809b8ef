"""Alternating minimization for static-scene video deraining.

The model splits an aligned rainy video into a background ``B`` and a sparse
rain layer ``R``::

    min  1/2 ||B + R - O o tau||^2 + mu ||R||_1
         + omega * sum_i ( ||S_i B x3 Q_i - J_i||^2 / lambda^2 + tnn(J_i) )
         + gamma ||grad_t B||_1

``S_i`` gathers a non-local patch group, ``Q_i`` (``d x t``, orthonormal rows)
projects its temporal axis onto a low-dimensional subspace, and ``J_i`` is the
low-rank estimate of the projected group. Each outer iteration updates
``tau``, ``R``, ``(Q_i, J_i)`` and ``B`` in that order; every update is
guarded so the objective never increases.

Because ``S_i`` only selects pixels and ``Q_i^T Q_i`` only mixes frames, the
quadratic part of the B-subproblem acts on each pixel's temporal tube
independently. The solver stores it as one ``t x t`` block per pixel.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage
from scipy.sparse.linalg import LinearOperator, cg

from . import align
from .errors import NumericalError
from .grouping import GroupSet, cluster_groups
from .metrics import temporal_median
from .tensor_core import (
    soft_threshold,
    svd_rank_d,
    svt_tnn,
    svt_tnn_with_norm,
    temporal_gradient,
    temporal_gradient_adjoint,
    tnn,
    unfold,
)

__all__ = [
    "SolverConfig",
    "IterationRecord",
    "DecompositionResult",
    "estimate_mu",
    "objective",
    "solve_R",
    "solve_Q",
    "solve_J",
    "solve_B",
    "derain",
]

log = logging.getLogger(__name__)

_BRIGHT_TOL = 0.02


@dataclass
class SolverConfig:
    omega: float = 0.005
    mu: float = None  # None: 3 * robust noise estimate, floored at mu_floor
    mu_floor: float = 0.01
    gamma: float = 0.05
    lambda_global: float = 1.0
    d_max: int = 3
    d_rel_tol: float = 1e-3
    patch: int = 8
    group: int = 32
    stride: int = 4
    search_radius: int = 20
    outer_max: int = 30
    outer_tol: float = 1e-4
    admm_rho: float = 1.0
    admm_max: int = 50
    admm_tol: float = 1e-5
    cg_tol: float = 1e-8
    cg_max: int = 500
    enable_subspace: bool = True
    enable_affine: bool = True
    recluster_every: int = 5
    reference_frame: int = 0
    init_align_rounds: int = 5

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.d_max not in (1, 2, 3):
            raise ValueError(f"d_max must be 1, 2 or 3, got {self.d_max}")
        for name in ("omega", "gamma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.mu is not None and self.mu < 0:
            raise ValueError("mu must be >= 0")
        if self.lambda_global <= 0 or self.admm_rho <= 0:
            raise ValueError("lambda_global and admm_rho must be positive")
        for name in ("outer_tol", "admm_tol", "cg_tol", "d_rel_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("patch", "group", "stride", "outer_max", "admm_max", "cg_max", "recluster_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.reference_frame < 0 or self.init_align_rounds < 0 or self.search_radius < 0:
            raise ValueError("reference_frame, init_align_rounds and search_radius must be >= 0")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    objective: float
    rel_change: float
    rain_sparsity: float


@dataclass
class DecompositionResult:
    background: np.ndarray  # clamped to [0, 1]
    rain: np.ndarray  # O o tau - background
    tau: np.ndarray  # (t, 6)
    residual: np.ndarray  # O o tau - B - R before export
    rain_sparse: np.ndarray  # the L1-regularized rain variable
    history: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    config: SolverConfig = None
    groups: list = None
    group_Q: list = None
    group_J: list = None


def estimate_mu(O, floor=0.0):
    """Three times the MAD noise estimate of the temporal differences, at least ``floor``."""
    g = temporal_gradient(np.asarray(O, dtype=np.float64))
    sigma = 1.4826 * np.median(np.abs(g - np.median(g)))
    return max(3.0 * sigma, floor)


def _require_mu(cfg):
    if cfg.mu is None:
        raise ValueError("cfg.mu must be resolved (see estimate_mu) before evaluating the objective")
    return cfg.mu


# ---------------------------------------------------------------- subproblems


def solve_R(O_warped, B, mu):
    """Rain update: shrink the fidelity residual by ``mu``."""
    O_warped = np.asarray(O_warped, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if O_warped.shape != B.shape:
        raise ValueError(f"shape mismatch: {O_warped.shape} vs {B.shape}")
    return soft_threshold(O_warped - B, mu)


def _select_d(sigma, d_max, rel_tol):
    if sigma[0] <= 0:
        return 1
    return int(min(d_max, max(1, np.count_nonzero(sigma > rel_tol * sigma[0]))))


def _orient(Q):
    # make the largest-magnitude entry of every row positive
    idx = np.argmax(np.abs(Q), axis=-1)
    s = np.sign(np.take_along_axis(Q, idx[..., None], axis=-1))
    s[s == 0] = 1.0
    return Q * s


def solve_Q(gathered, d):
    """Temporal subspace of a group: top-``d`` left singular vectors of its mode-3 unfolding, as rows."""
    gathered = np.asarray(gathered, dtype=np.float64)
    t = gathered.shape[2]
    if not 1 <= d <= t:
        raise ValueError(f"subspace dimension {d} outside [1, {t}]")
    U, _, _ = svd_rank_d(unfold(gathered, 3), d)
    return _orient(U.T)


def solve_J(projected, lam):
    """Low-rank estimate of a projected group: prox of ``(lam^2 / 2) * tnn``."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    return svt_tnn(projected, lam**2 / 2.0)


# ----------------------------------------------------------- group bookkeeping


def _batches(Qs):
    by_d = {}
    for i, Q in enumerate(Qs):
        by_d.setdefault(Q.shape[0], []).append(i)
    return {d: np.array(ix) for d, ix in by_d.items()}


class _GroupModel:
    """(Q_i, J_i) for every group of a :class:`GroupSet`, with its energy at fit time."""

    def __init__(self, gset, Qs, Js, tnn_sum, value=None):
        self.gset = gset
        self.Qs = Qs  # list of (d_i, t)
        self.Js = Js  # list of (p^2, k, d_i)
        self.tnn_sum = tnn_sum
        self.value = value
        self.batches = _batches(Qs)

    def quadratic(self, cfg, t):
        """Per-pixel ``t x t`` blocks of ``2 w/l^2 sum S^T(. x3 Q^T Q)S``, the matching
        right-hand side, and the constant ``w/l^2 sum ||J||^2``."""
        scale = 2.0 * cfg.omega / cfg.lambda_global**2
        G = len(self.Qs)
        proj = np.stack([Q.T @ Q for Q in self.Qs])  # (G, t, t)
        blocks = (self.gset.counts.T @ proj.reshape(G, t * t)).reshape(-1, t, t)
        p2, k = self.gset.index.shape[1:]
        back = np.empty((G, p2 * k, t))
        for d, ix in self.batches.items():
            Qb = np.stack([self.Qs[i] for i in ix])
            Jb = np.stack([self.Js[i] for i in ix]).reshape(len(ix), p2 * k, d)
            back[ix] = Jb @ Qb
        rhs = self.gset.scatter(back, t)
        j_energy = sum(float(np.sum(J**2)) for J in self.Js)
        return scale * blocks, scale * rhs, cfg.omega / cfg.lambda_global**2 * j_energy


def _project(X, Qs, ix):
    G, p2, k, t = X.shape
    Qb = np.stack([Qs[i] for i in ix])
    return (X[ix].reshape(len(ix), p2 * k, t) @ Qb.transpose(0, 2, 1)).reshape(len(ix), p2, k, -1)


def _prox_groups(gset, X, Qs, cfg):
    """J-update for fixed Q, returning the model with its group energy."""
    lam = cfg.lambda_global
    Js = [None] * len(Qs)
    quad = 0.0
    tnn_total = 0.0
    for d, ix in _batches(Qs).items():
        P = _project(X, Qs, ix)
        Jb, norms = svt_tnn_with_norm(P, lam**2 / 2.0)
        quad += float(np.sum((P - Jb) ** 2))
        tnn_total += float(np.sum(norms))
        for i, J in zip(ix, Jb):
            Js[i] = J
    value = cfg.omega * (quad / lam**2 + tnn_total)
    return _GroupModel(gset, Qs, Js, tnn_total, value)


def _fit_Q(X, cfg):
    """Temporal subspace of every group from its Gram matrix (same basis as :func:`solve_Q`)."""
    G, p2, k, t = X.shape
    if not cfg.enable_subspace:
        return [np.eye(t)] * G
    Xr = X.reshape(G, p2 * k, t)
    evals, evecs = np.linalg.eigh(Xr.transpose(0, 2, 1) @ Xr)
    sigma = np.sqrt(np.maximum(evals[:, ::-1], 0.0))
    evecs = evecs[:, :, ::-1]
    return [
        _orient(evecs[i, :, : _select_d(sigma[i], cfg.d_max, cfg.d_rel_tol)].T)
        for i in range(G)
    ]


def _fit_groups(gset, B, cfg, X=None):
    X = gset.gather(B) if X is None else X
    return _prox_groups(gset, X, _fit_Q(X, cfg), cfg)


def _group_term(model, B, cfg):
    """``omega * sum_i (||S_i B x3 Q_i - J_i||^2 / lambda^2 + tnn(J_i))`` evaluated directly."""
    X = model.gset.gather(B)
    quad = 0.0
    norms = 0.0
    for d, ix in model.batches.items():
        Jb = np.stack([model.Js[i] for i in ix])
        quad += float(np.sum((_project(X, model.Qs, ix) - Jb) ** 2))
        norms += float(np.sum(tnn(Jb)))
    return cfg.omega * (quad / cfg.lambda_global**2 + norms)


# ------------------------------------------------------------------ objective


def objective(O, B, R, tau, groups, Q_list, J_list, cfg):
    """Full model energy.

    ``groups`` is a list of :class:`~videoderain.grouping.PatchGroup`;
    ``tau`` may be ``None`` for the identity alignment.
    """
    mu = _require_mu(cfg)
    O = np.asarray(O, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    if not (O.shape == B.shape == R.shape):
        raise ValueError(f"shape mismatch: O {O.shape}, B {B.shape}, R {R.shape}")
    if len(groups) != len(Q_list) or len(groups) != len(J_list):
        raise ValueError("groups, Q_list and J_list must have equal length")
    Ow = O if tau is None else align.warp_video(O, tau)
    val = 0.5 * np.sum((B + R - Ow) ** 2) + mu * np.sum(np.abs(R))
    if groups:
        model = _GroupModel(GroupSet(groups, O.shape), list(Q_list), list(J_list), None)
        val += _group_term(model, B, cfg)
    val += cfg.gamma * np.sum(np.abs(temporal_gradient(B)))
    return float(val)


# ------------------------------------------------------------------ B update


class _BProblem:
    """Quadratic-plus-TV background subproblem with per-pixel temporal blocks."""

    def __init__(self, target, blocks, rhs_nl, const_nl, cfg):
        self.shape = target.shape
        self.y = target
        self.blocks = blocks  # (h*w, t, t)
        self.rhs_nl = rhs_nl
        self.const_nl = const_nl
        self.cfg = cfg
        self.diag = np.diagonal(blocks, axis1=1, axis2=2).reshape(self.shape)

    def nl_apply(self, B):
        t = self.shape[2]
        return np.matmul(self.blocks, B.reshape(-1, t, 1)).reshape(self.shape)

    def nl_energy(self, B):
        return 0.5 * np.sum(B * self.nl_apply(B)) - np.sum(B * self.rhs_nl) + self.const_nl

    def energy(self, B):
        quad = 0.5 * np.sum((B - self.y) ** 2)
        return quad + self.nl_energy(B) + self.cfg.gamma * np.sum(np.abs(temporal_gradient(B)))

    def solve_linear(self, rhs, x0, rho):
        n = rhs.size
        precond = (1.0 / (1.0 + self.diag + 2.0 * rho)).ravel()

        def matvec(v):
            v = v.reshape(self.shape)
            out = v + self.nl_apply(v) + rho * temporal_gradient_adjoint(temporal_gradient(v))
            return out.ravel()

        A = LinearOperator((n, n), matvec=matvec, dtype=np.float64)
        M = LinearOperator((n, n), matvec=lambda v: v * precond, dtype=np.float64)
        b = rhs.ravel()
        x, info = cg(A, b, x0=x0.ravel(), rtol=self.cfg.cg_tol, atol=0.0, maxiter=self.cfg.cg_max, M=M)
        if info > 0:
            res = float(np.linalg.norm(b - matvec(x)))
            raise NumericalError(
                f"conjugate gradient stopped after {self.cfg.cg_max} iterations with residual norm {res:.3e}"
            )
        return x.reshape(self.shape)


def _admm(problem, B_init, state=None):
    cfg = problem.cfg
    rho = cfg.admm_rho
    if cfg.gamma == 0:
        # no TV term: the subproblem is a single linear system
        B = problem.solve_linear(problem.y + problem.rhs_nl, B_init, 0.0)
        if problem.energy(B) > problem.energy(B_init):
            B = B_init
        return B, None
    B = B_init.copy()
    if state is None:
        Z = temporal_gradient(B)
        U = np.zeros_like(B)
    else:
        Z, U = state
    best, best_val = B_init, problem.energy(B_init)
    scale = np.sqrt(B.size)
    for _ in range(cfg.admm_max):
        rhs = problem.y + problem.rhs_nl + rho * temporal_gradient_adjoint(Z - U)
        B = problem.solve_linear(rhs, B, rho)
        gB = temporal_gradient(B)
        Z_old = Z
        Z = soft_threshold(gB + U, cfg.gamma / rho)
        U = U + gB - Z
        val = problem.energy(B)
        if val < best_val:
            best, best_val = B, val
        primal = np.linalg.norm(gB - Z) / scale
        dual = rho * np.linalg.norm(temporal_gradient_adjoint(Z - Z_old)) / scale
        if primal < cfg.admm_tol and dual < cfg.admm_tol:
            break
    return best, (Z, U)


def solve_B(O_warped, R, groups, Q_list, J_list, cfg, B_init):
    """Background update by ADMM on the split ``Z = grad_t B``.

    The B-step solves the normal equations by preconditioned conjugate
    gradients; the returned iterate never has a higher subproblem energy than
    ``B_init``.
    """
    O_warped = np.asarray(O_warped, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    B_init = np.asarray(B_init, dtype=np.float64)
    if not (O_warped.shape == R.shape == B_init.shape):
        raise ValueError("O_warped, R and B_init must share a shape")
    t = O_warped.shape[2]
    if groups:
        model = _GroupModel(GroupSet(groups, O_warped.shape), list(Q_list), list(J_list), None)
        blocks, rhs_nl, const = model.quadratic(cfg, t)
    else:
        blocks = np.zeros((O_warped.shape[0] * O_warped.shape[1], t, t))
        rhs_nl, const = np.zeros_like(O_warped), 0.0
    problem = _BProblem(O_warped - R, blocks, rhs_nl, const, cfg)
    B, _ = _admm(problem, B_init)
    return B


# ------------------------------------------------------------------ driver


class _State:
    def __init__(self, O, cfg, tau):
        self.O = O
        self.cfg = cfg
        self.tau = tau
        self.Ow = align.warp_video(O, tau)
        self.B = None
        self.R = None
        self.model = None
        self.group_value = None  # group energy of (model, B)
        self.admm = None

    def energy(self):
        cfg = self.cfg
        val = 0.5 * np.sum((self.B + self.R - self.Ow) ** 2) + cfg.mu * np.sum(np.abs(self.R))
        val += self.group_value
        val += cfg.gamma * np.sum(np.abs(temporal_gradient(self.B)))
        return float(val)


def _check_finite(value, step):
    if not np.isfinite(value):
        raise NumericalError(f"objective became non-finite after the {step} update")
    return value


def _cluster(B, cfg):
    ref = np.median(B, axis=2)
    return GroupSet(
        cluster_groups(ref, cfg.patch, cfg.group, cfg.stride, cfg.search_radius), B.shape
    )


def _update_tau(state, include_reference=False, shift_bound=None):
    """One linearized step per frame.

    With ``shift_bound`` set (in pixels), pixels that look like rain are also
    left out, for when no rain estimate is available yet: rain is additive, so
    a pixel brighter than a shift of ``shift_bound`` px can explain, or
    brighter than every background value around it, is not used.
    """
    cfg = state.cfg
    O = state.O
    for f in range(O.shape[2]):
        if f == cfg.reference_frame and not include_reference:
            continue
        exclude = None
        if shift_bound is not None:
            B, Ow = state.B[:, :, f], state.Ow[:, :, f]
            gy, gx = np.gradient(B)
            exclude = Ow - B > shift_bound * np.hypot(gx, gy) + _BRIGHT_TOL
            exclude |= Ow > ndimage.maximum_filter(B, 3, mode="nearest") + _BRIGHT_TOL
        try:
            new = align.update_tau(
                O[:, :, f], state.B[:, :, f], state.R[:, :, f], state.tau[f], exclude=exclude
            )
        except NumericalError:
            # a textureless frame carries no alignment information
            continue
        if not np.array_equal(new, state.tau[f]):
            state.tau[f] = new
            state.Ow[:, :, f] = align.warp_affine(O[:, :, f], new)


def _update_groups(state, regroup):
    """Refit (Q_i, J_i), keeping whichever candidate has the lowest group energy.

    The J refit under the current Q is an exact block minimization, so the
    chosen candidate never raises the objective.
    """
    cfg, B = state.cfg, state.B
    gset = state.model.gset
    X = gset.gather(B)
    candidates = [_prox_groups(gset, X, state.model.Qs, cfg)]
    if cfg.enable_subspace:
        candidates.append(_fit_groups(gset, B, cfg, X))
    if regroup:
        candidates.append(_fit_groups(_cluster(B, cfg), B, cfg))
    best = min(candidates, key=lambda m: m.value)
    state.model = best
    state.group_value = best.value


def _update_B(state):
    cfg, t = state.cfg, state.O.shape[2]
    blocks, rhs_nl, const = state.model.quadratic(cfg, t)
    problem = _BProblem(state.Ow - state.R, blocks, rhs_nl, const, cfg)
    state.B, state.admm = _admm(problem, state.B, state.admm)
    state.group_value = float(problem.nl_energy(state.B) + cfg.omega * state.model.tnn_sum)


def derain(O, cfg=None, tau_init=None):
    """Decompose a static-camera rainy video ``(h, w, t)`` into background and rain.

    ``tau_init`` fixes the starting alignment (``(t, 6)``); with
    ``cfg.enable_affine`` false it is used as is.
    """
    cfg = SolverConfig() if cfg is None else cfg
    O = np.asarray(O, dtype=np.float64)
    if O.ndim != 3 or O.shape[2] < 2:
        raise ValueError(f"expected an (h, w, t) video with t >= 2, got {O.shape}")
    if not np.all(np.isfinite(O)):
        raise ValueError("input video contains non-finite values")
    h, w, t = O.shape
    if cfg.reference_frame >= t:
        raise ValueError(f"reference_frame {cfg.reference_frame} outside a {t}-frame video")
    if cfg.mu is None:
        cfg = replace(cfg, mu=estimate_mu(O, cfg.mu_floor))
    tau = np.tile(align.IDENTITY, (t, 1)) if tau_init is None else np.array(tau_init, dtype=np.float64)
    if tau.shape != (t, 6):
        raise ValueError(f"tau_init must have shape {(t, 6)}, got {tau.shape}")

    state = _State(O, cfg, tau)
    if cfg.enable_affine:
        # register every frame to the median of the aligned stack before the descent starts
        for rnd in range(cfg.init_align_rounds):
            state.B = np.array(temporal_median(state.Ow), dtype=np.float64)
            state.R = np.zeros_like(state.B)
            # the first round absorbs the jitter itself, later ones only refine
            _update_tau(state, include_reference=True, shift_bound=1.5 if rnd == 0 else 0.5)
            # move the common geometry back onto the reference frame
            anchor = align.invert(state.tau[cfg.reference_frame])
            state.tau = np.array([align.compose(p, anchor) for p in state.tau])
            state.tau[cfg.reference_frame] = align.IDENTITY
            state.Ow = align.warp_video(O, state.tau)
    state.B = np.array(temporal_median(state.Ow), dtype=np.float64)
    state.R = solve_R(state.Ow, state.B, cfg.mu)
    state.model = _fit_groups(_cluster(state.B, cfg), state.B, cfg)
    state.group_value = state.model.value

    history = [IterationRecord(0, _check_finite(state.energy(), "initialization"), float("nan"),
                               float(np.mean(state.R != 0)))]
    converged = False
    it = 0
    for it in range(1, cfg.outer_max + 1):
        B_prev = state.B
        if cfg.enable_affine:
            _update_tau(state)
            _check_finite(state.energy(), "alignment")
        state.R = solve_R(state.Ow, state.B, cfg.mu)
        _check_finite(state.energy(), "rain")
        _update_groups(state, regroup=(it % cfg.recluster_every == 0))
        _check_finite(state.energy(), "subspace")
        _update_B(state)
        value = _check_finite(state.energy(), "background")
        rel = float(np.linalg.norm(state.B - B_prev) / max(np.linalg.norm(B_prev), 1e-12))
        history.append(IterationRecord(it, value, rel, float(np.mean(state.R != 0))))
        log.debug("iter %d objective %.6g rel-change %.3g", it, value, rel)
        if rel < cfg.outer_tol:
            converged = True
            break

    B = state.B
    background = np.clip(B, 0.0, 1.0)
    return DecompositionResult(
        background=background.astype(np.float32),
        rain=(state.Ow - background).astype(np.float32),
        tau=state.tau.copy(),
        residual=(state.Ow - B - state.R).astype(np.float32),
        rain_sparse=state.R.astype(np.float32),
        history=history,
        converged=converged,
        iterations=it,
        config=cfg,
        groups=state.model.gset.groups,
        group_Q=state.model.Qs,
        group_J=state.model.Js,
    )
