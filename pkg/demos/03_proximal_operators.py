"""
The shrinkage operators
=======================

Every subproblem of the solver ends in one of three closed forms. Here each
one is checked against brute force on a tiny example.
"""

import numpy as np

from videoderain import tensor_core as tc

rng = np.random.default_rng(0)

# elementwise soft threshold: argmin 0.5(x - y)^2 + t|x|
y = np.linspace(-1, 1, 9)
print(np.round(tc.soft_threshold(y, 0.3), 3))

# singular value thresholding shrinks the spectrum and drops small modes
M = rng.standard_normal((6, 3)) @ rng.standard_normal((3, 5))
print("singular values before:", np.round(np.linalg.svd(M, compute_uv=False), 3))
print("singular values after: ", np.round(np.linalg.svd(tc.svt_matrix(M, 1.0), compute_uv=False), 3))

# the tubal version works slice by slice in the Fourier domain along time
T = rng.standard_normal((4, 4, 6))
X = tc.svt_tnn(T, 0.5)
f = lambda Z: 0.5 * np.sum((Z - T) ** 2) + 0.5 * tc.tnn(Z)
worse = min(f(X + 1e-2 * rng.standard_normal(T.shape)) for _ in range(200))
print("tnn prox objective %.4f, best random neighbour %.4f" % (f(X), worse))

# one frame deep, it is the matrix operator again
print("depth-1 agrees:", np.allclose(tc.svt_tnn(M[:, :, None], 1.0)[:, :, 0], tc.svt_matrix(M, 1.0)))
