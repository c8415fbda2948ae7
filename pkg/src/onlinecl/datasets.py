"""Synthetic datasets for desk-scale experiments and the bundled CLI demos."""

import numpy as np

from .stream import Dataset


def gaussian_blobs(n_classes=10, dim=10, samples_per_class=100, std=1.0, spread=4.0, seed=0):
    """Isotropic Gaussian clusters with seeded random class means."""
    rng = np.random.default_rng(seed)
    means = rng.normal(0.0, spread, size=(n_classes, dim))
    y = np.repeat(np.arange(n_classes), samples_per_class)
    X = means[y] + rng.normal(0.0, std, size=(y.shape[0], dim))
    perm = rng.permutation(y.shape[0])
    return Dataset(X=X[perm], y=y[perm])


def xor_blobs(samples_per_class=400, std=0.8, seed=0):
    """Four 2-D classes: two linearly separable blobs plus an XOR pair.

    Classes 2 and 3 are each a two-cluster mixture arranged so that their
    class means coincide; a nearest-mean rule cannot separate them while a
    nonlinear classifier can.
    """
    rng = np.random.default_rng(seed)
    centers = {
        0: [(8.0, 8.0)],
        1: [(-8.0, -8.0)],
        2: [(0.0, 0.0), (4.0, 4.0)],
        3: [(0.0, 4.0), (4.0, 0.0)],
    }
    xs, ys = [], []
    for label, cluster_centers in centers.items():
        picks = rng.integers(0, len(cluster_centers), size=samples_per_class)
        mus = np.asarray(cluster_centers)[picks]
        xs.append(mus + rng.normal(0.0, std, size=(samples_per_class, 2)))
        ys.append(np.full(samples_per_class, label, dtype=np.int64))
    X = np.concatenate(xs)
    y = np.concatenate(ys)
    perm = rng.permutation(y.shape[0])
    return Dataset(X=X[perm], y=y[perm])
