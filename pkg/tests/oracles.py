"""Independent dense oracles shared by the transform and acceptance tests.

These materialize operators from first principles (explicit base-matrix
formulas), never through the library's fast paths.
"""

import numpy as np
from scipy.linalg import hadamard


def dense_ensemble(ensemble):
    """The m x n matrix of a sampled ensemble, built row by row."""
    n = ensemble.n
    if ensemble.kind == "boe-hadamard":
        base = hadamard(n).astype(float)
    elif ensemble.kind == "boe-dft":
        k, t = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        ang = 2 * np.pi * k * t / n
        base = (np.cos(ang) + np.sin(ang)) / np.sqrt(2)
    elif ensemble.kind == "pce":
        sigma = ensemble.generator.entries
        i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        base = sigma[(i - j) % n]
    else:
        raise ValueError(f"no dense oracle for {ensemble.kind!r}")
    return ensemble.row_signs.entries[:, None] * base[ensemble.row_index]
