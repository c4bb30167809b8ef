"""
Why the alignment step matters
==============================

With a shaking camera the background is no longer the same from frame to
frame. Without alignment the misregistered edges leak into the rain layer.
"""

import os
import tempfile

import numpy as np
from scipy import ndimage

from videoderain import align, io, metrics, solver, synth

rng = np.random.default_rng(7)
tex = ndimage.gaussian_filter(rng.standard_normal((64, 64)), 2.0, mode="wrap")
tex = 0.1 + 0.6 * (tex - tex.min()) / np.ptp(tex)
folder = tempfile.mkdtemp()
io.write_frames(tex[:, :, None], folder, bitdepth=16, names=["texture.png"])

cfg = synth.SynthConfig(height=64, width=64, frames=24, background_kind="natural-image-file",
                        background_path=os.path.join(folder, "texture.png"),
                        streak_density=0.05, splash_density=0.0, jitter_max=1.0, seed=1)
scene = synth.synthesize(cfg)

runs = {}
for affine in (True, False):
    res = runs[affine] = solver.derain(scene.observed, solver.SolverConfig(outer_max=4, enable_affine=affine))
    leak = metrics.background_correlation(res.rain, scene.clean[:, :, 0])
    print("affine %-5s  PSNR %.2f dB   edge leak into rain %.3f"
          % (affine, metrics.psnr(res.background, scene.clean), leak))

# the recovered warps undo the jitter up to the reference frame
ee = [align.endpoint_error(align.compose(j, t), align.IDENTITY, (64, 64))
      for j, t in zip(scene.jitter, runs[True].tau)]
print("mean endpoint error over frames: %.3f px" % np.mean(ee))
