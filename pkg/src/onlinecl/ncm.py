"""Online nearest-class-mean classification over deep features."""

from dataclasses import dataclass

import numpy as np

from .validation import check_matrix, check_vector


@dataclass
class ClassMeanState:
    """Running mean of a class's feature vectors; mean is None until count > 0."""

    class_id: int
    mean: np.ndarray | None = None
    count: int = 0


def update_mean(state, feature):
    """Streaming mean update: mean <- n/(n+1)*mean + 1/(n+1)*feature."""
    feature = check_vector(feature)
    if state.count == 0:
        state.mean = feature.copy()
        state.count = 1
        return state
    check_vector(feature, dim=state.mean.shape[0])
    n = state.count
    state.mean = (n / (n + 1)) * state.mean + (1 / (n + 1)) * feature
    state.count = n + 1
    return state


class NCMClassifier:
    """Predicts the class whose feature mean is nearest in Euclidean distance.

    Squared distances are compared (monotone equivalent); ties break toward
    the lowest class id.
    """

    def __init__(self):
        self.states = {}

    def update(self, class_id, feature):
        state = self.states.get(class_id)
        if state is None:
            state = ClassMeanState(class_id=int(class_id))
            self.states[class_id] = state
        update_mean(state, feature)

    def known_classes(self):
        return sorted(c for c, s in self.states.items() if s.count > 0)

    def _mean_matrix(self):
        classes = self.known_classes()
        if not classes:
            raise ValueError("classifier has no class with observed features")
        return np.asarray(classes), np.stack([self.states[c].mean for c in classes])

    def classify(self, feature):
        feature = check_vector(feature)
        return int(self.classify_batch(feature[None, :])[0])

    def classify_batch(self, features):
        features = check_matrix(features, name="features")
        classes, means = self._mean_matrix()
        # argmin picks the first (lowest id) column on exact ties
        d = ((features[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
        return classes[np.argmin(d, axis=1)]
