"""
Removing synthetic rain from a static scene
===========================================

A checkerboard is rained on for 24 frames and the decomposition splits the
video back into background and rain. The temporal median is the simplest
competitor, so it is printed alongside.
"""

import numpy as np

from videoderain import metrics, solver, synth
from videoderain.tensor_core import unfold

cfg = synth.SynthConfig(height=64, width=64, frames=24, streak_density=0.05,
                        splash_density=0.3, jitter_max=0.0, noise_sigma=0.0, seed=0)
scene = synth.synthesize(cfg)
print("observed video:", scene.observed.shape, "rain pixels: %.1f%%" % (100 * np.mean(scene.rain > 0.05)))

# the median is exact for streaks, the splash on the ground is what trips it up
median = metrics.temporal_median(scene.observed)
print("temporal median PSNR: %.2f dB" % metrics.psnr(median, scene.clean))

result = solver.derain(scene.observed, solver.SolverConfig(outer_max=10))
print("derained PSNR:        %.2f dB" % metrics.psnr(result.background, scene.clean))
print("rain support F1:      %.4f" % metrics.rain_support_f1(result.rain, scene.rain))

for rec in result.history[:4]:
    print("  iter %d  objective %.5f" % (rec.iteration, rec.objective))

# a static scene is rank one along time
s = np.linalg.svd(unfold(result.background.astype(float), 3), compute_uv=False)
print("sigma2 / sigma1 of the background: %.1e" % (s[1] / s[0]))
