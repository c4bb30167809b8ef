"""Shared synthetic fixtures and memoized solver runs.

Several test modules look at the same end-to-end runs; caching them here keeps
the suite to one solve per configuration.
"""

import functools
import os
import tempfile
from dataclasses import replace

import numpy as np

from conftest import smooth_texture
from videoderain import align, io, solver, synth
from videoderain.metrics import temporal_median

SHAPE = dict(height=64, width=64, frames=24)

# outer iterations per fixture; the ablation count is bounded by the 20-run time budget
STANDARD_ITERS = 10
ABLATION_ITERS = 4
VERTICAL_ITERS = 6


@functools.lru_cache(maxsize=None)
def texture_path():
    d = tempfile.mkdtemp(prefix="videoderain-texture-")
    io.write_frames(smooth_texture((64, 64))[:, :, None], d, bitdepth=16, names=["texture.png"])
    return os.path.join(d, "texture.png")


def standard_config(seed=0, **kw):
    """Checkerboard, no jitter, no noise, 5% streaks plus ground splash."""
    base = dict(SHAPE, streak_density=0.05, splash_density=0.3, jitter_max=0.0, noise_sigma=0.0, seed=seed)
    base.update(kw)
    return synth.SynthConfig(**base)


def jittered_config(seed=0, **kw):
    """Smooth-texture background with 1 px affine jitter."""
    base = dict(
        SHAPE,
        background_kind="natural-image-file",
        background_path=texture_path(),
        streak_density=0.05,
        splash_density=0.0,
        jitter_max=1.0,
        noise_sigma=0.0,
        seed=seed,
    )
    base.update(kw)
    return synth.SynthConfig(**base)


def vertical_config(seed=0):
    return standard_config(seed, streak_angle_range=(0.0, 0.0), splash_density=0.0)


_BUILDERS = {"standard": standard_config, "jittered": jittered_config, "vertical": vertical_config}


@functools.lru_cache(maxsize=None)
def truth(kind, seed=0):
    return synth.synthesize(_BUILDERS[kind](seed))


def truth_from(cfg):
    return synth.synthesize(cfg)


@functools.lru_cache(maxsize=None)
def run(kind, seed=0, **solver_kw):
    """``derain`` on a cached fixture; keyword arguments go to SolverConfig."""
    return solver.derain(truth(kind, seed).observed, solver.SolverConfig(**solver_kw))


def descent_trace(O, cfg, iterations=3):
    """Step through the alternating updates by hand.

    Returns ``(step, before, after, check)`` per update, where ``before`` and
    ``after`` are the solver's running energy and ``check`` is the public
    objective recomputed from scratch on the new iterate.
    """
    O = np.asarray(O, dtype=np.float64)
    if cfg.mu is None:
        cfg = replace(cfg, mu=solver.estimate_mu(O, cfg.mu_floor))
    state = solver._State(O, cfg, np.tile(align.IDENTITY, (O.shape[2], 1)))
    state.B = np.array(temporal_median(O), dtype=np.float64)
    state.R = solver.solve_R(state.Ow, state.B, cfg.mu)
    state.model = solver._fit_groups(solver._cluster(state.B, cfg), state.B, cfg)
    state.group_value = state.model.value

    def check():
        m = state.model
        return solver.objective(O, state.B, state.R, state.tau, m.gset.groups, m.Qs, m.Js, cfg)

    steps = [
        ("tau", lambda it: solver._update_tau(state)),
        ("R", lambda it: setattr(state, "R", solver.solve_R(state.Ow, state.B, cfg.mu))),
        ("groups", lambda it: solver._update_groups(state, regroup=it % 2 == 0)),
        ("B", lambda it: solver._update_B(state)),
    ]
    out = []
    for it in range(1, iterations + 1):
        for name, fn in steps:
            before = state.energy()
            fn(it)
            out.append((f"{name}@{it}", before, state.energy(), check()))
    return out
