"""Bounded per-class exemplar stores with drift-aware updates.

Construction is single-pass herding: each class's samples are sorted by
squared feature distance to the class mean and the closest q are kept.
The streaming update keeps the running class mean moving with every new
observation and may swap in the new sample for a stored exemplar.
"""

import json
from dataclasses import dataclass

import numpy as np

from .ncm import ClassMeanState, update_mean
from .validation import check_labels, check_matrix, check_vector


@dataclass
class Exemplar:
    x: np.ndarray
    label: int
    feature: np.ndarray
    source_index: int


class ExemplarSet:
    """Per-class bounded exemplar lists plus shared running class-mean states."""

    def __init__(self, capacity, replace_farthest=False, extractor_version=0):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.replace_farthest = bool(replace_farthest)
        self.extractor_version = int(extractor_version)
        self.by_class = {}
        self.means = {}

    def class_ids(self):
        return sorted(self.by_class)

    def size(self):
        return sum(len(v) for v in self.by_class.values())

    def update(self, x, y, extractor):
        """Absorb one old-class observation (Update Exemplar Set procedure).

        Line 1's running-mean update always persists; the stored exemplar
        whose feature is closest to the updated mean is replaced by the new
        sample iff the new sample's feature is at least as close. With
        replace_farthest=True the farthest exemplar is evicted instead.
        """
        y = int(y)
        if y not in self.by_class:
            raise ValueError(f"unknown class {y}")
        exemplars = self.by_class[y]
        if not exemplars:
            raise ValueError(f"class {y} has an empty exemplar sequence")
        x = check_vector(np.asarray(x, dtype=np.float64), name="x")
        feat_new = check_vector(extractor(x), name="extracted feature")
        state = self.means[y]
        update_mean(state, feat_new)
        mean = state.mean
        dists = np.array([((e.feature - mean) ** 2).sum() for e in exemplars])
        idx = int(np.argmax(dists)) if self.replace_farthest else int(np.argmin(dists))
        d_new = ((feat_new - mean) ** 2).sum()
        if d_new <= dists[idx]:
            exemplars.pop(idx)
            exemplars.append(Exemplar(x=x.copy(), label=y, feature=feat_new, source_index=-1))
        return self

    def sample(self, k, rng):
        """Draw k exemplars uniformly without replacement from the union.

        If k exceeds the union size the remainder is drawn with replacement.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        union = [e for c in self.class_ids() for e in self.by_class[c]]
        if not union:
            raise ValueError("exemplar set is empty")
        order = rng.permutation(len(union))
        if k <= len(union):
            picks = order[:k]
        else:
            extra = rng.integers(0, len(union), size=k - len(union))
            picks = np.concatenate([order, extra])
        return [union[i] for i in picks]

    def training_arrays(self, rng, k):
        ex = self.sample(k, rng)
        X = np.stack([e.x for e in ex])
        y = np.array([e.label for e in ex], dtype=np.int64)
        return X, y

    def refresh_features(self, extractor, version):
        """Recompute stored features after the extractor changed."""
        for exemplars in self.by_class.values():
            for e in exemplars:
                e.feature = check_vector(extractor(e.x), name="extracted feature")
        self.extractor_version = int(version)
        return self

    def save(self, path):
        arrays = {}
        meta = {
            "capacity": self.capacity,
            "replace_farthest": self.replace_farthest,
            "extractor_version": self.extractor_version,
            "classes": [],
        }
        for c in self.class_ids():
            exemplars = self.by_class[c]
            state = self.means[c]
            meta["classes"].append(
                {
                    "class_id": int(c),
                    "count": int(state.count),
                    "n_exemplars": len(exemplars),
                    "source_indices": [int(e.source_index) for e in exemplars],
                }
            )
            arrays[f"x_{c}"] = np.stack([e.x for e in exemplars])
            arrays[f"f_{c}"] = np.stack([e.feature for e in exemplars])
            arrays[f"mean_{c}"] = state.mean
        arrays["meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path):
        with np.load(path) as data:
            meta = json.loads(bytes(data["meta"]).decode())
            out = cls(
                capacity=meta["capacity"],
                replace_farthest=meta["replace_farthest"],
                extractor_version=meta["extractor_version"],
            )
            for entry in meta["classes"]:
                c = entry["class_id"]
                xs = data[f"x_{c}"]
                fs = data[f"f_{c}"]
                out.by_class[c] = [
                    Exemplar(x=xs[i].copy(), label=c, feature=fs[i].copy(), source_index=si)
                    for i, si in enumerate(entry["source_indices"])
                ]
                out.means[c] = ClassMeanState(
                    class_id=c, mean=data[f"mean_{c}"].copy(), count=entry["count"]
                )
        return out


def construct_exemplars(X, y, features, capacity, replace_farthest=False, extractor_version=0):
    """Build an ExemplarSet by herding: per class, keep the q samples whose
    features are closest to the class feature mean (ties by input index).

    Class-mean states are seeded with the batch mean; the count is seeded
    with the number of exemplars retained, not the class size, so that
    streamed observations keep meaningful weight in the running mean.
    """
    X = check_matrix(X, name="X")
    features = check_matrix(features, name="features")
    y = check_labels(y, n_samples=X.shape[0])
    if features.shape[0] != X.shape[0]:
        raise ValueError("features and X must have the same number of rows")
    if y.size == 0:
        raise ValueError("cannot build an exemplar set from zero samples")
    out = ExemplarSet(
        capacity=capacity,
        replace_farthest=replace_farthest,
        extractor_version=extractor_version,
    )
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        feats = features[idx]
        mean = feats.mean(axis=0)
        d = ((feats - mean) ** 2).sum(axis=1)
        order = np.argsort(d, kind="stable")[:capacity]
        out.by_class[int(c)] = [
            Exemplar(
                x=X[idx[i]].copy(),
                label=int(c),
                feature=feats[i].copy(),
                source_index=int(idx[i]),
            )
            for i in order
        ]
        out.means[int(c)] = ClassMeanState(
            class_id=int(c), mean=mean.copy(), count=len(out.by_class[int(c)])
        )
    return out
