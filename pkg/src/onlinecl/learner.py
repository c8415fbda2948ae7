"""Learners orchestrating the three framework parts.

ScratchLearner handles the cold-start phase (online NCM/softmax switching),
offline_retrain consolidates everything seen so far and rebuilds exemplars,
and IncrementalLearner runs two-step learning from a trained model while
keeping old-class means and exemplar sets moving with the stream.

Both learners expose an estimator-style surface (predict / partial_fit /
get_params) so they compose with ordinary scikit-learn tooling, with
process_block as the primary prequential entry point: it returns the
pre-update predictions for every sample in the block and then consumes the
block exactly once.
"""

import json
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from . import losses as L
from .exemplar import ExemplarSet, construct_exemplars
from .ncm import NCMClassifier
from .nn import (
    MLP,
    SGDConfig,
    SGDState,
    backward,
    expand_head,
    forward,
    load_model,
    save_model,
    sgd_step,
)
from .validation import check_labels, check_matrix

LOSS_VARIANTS = ("ce", "cd", "mcd")


class ScratchLearner(BaseEstimator):
    """Cold-start online learner combining a softmax baseline with NCM.

    Both classifiers run from the first block: the baseline net trains with
    one cross-entropy SGD step per block while the NCM class means absorb
    the net's current features. Predictions come from the active classifier
    (NCM at first). When the baseline's block accuracy strictly beats NCM's
    for switch_threshold consecutive blocks the learner switches to the
    baseline permanently.
    """

    def __init__(
        self,
        hidden_dims=(64, 64),
        learning_rate=0.1,
        momentum=0.9,
        weight_decay=1e-4,
        switch_threshold=5,
        classifier="auto",
        seed=0,
    ):
        self.hidden_dims = hidden_dims
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.switch_threshold = switch_threshold
        self.classifier = classifier
        self.seed = seed

    def _setup(self, input_dim, n_out):
        if self.classifier not in ("auto", "ncm", "baseline"):
            raise ValueError("classifier must be 'auto', 'ncm' or 'baseline'")
        self.model_ = MLP([input_dim, *self.hidden_dims, n_out], seed=self.seed)
        self.sgd_cfg_ = SGDConfig(self.learning_rate, self.momentum, self.weight_decay)
        self.sgd_state_ = SGDState.zeros_like(self.model_)
        self.ncm_ = NCMClassifier()
        self.active_ = "baseline" if self.classifier == "baseline" else "ncm"
        self.switched_ = False
        self.win_streak_ = 0
        self.updates_applied_ = 0
        self.blocks_seen_ = 0
        self.block_log_ = []  # per block: (ncm_acc, baseline_acc, active)
        self.switch_block_ = None

    def _ensure_capacity(self, X, y):
        if not hasattr(self, "model_") or self.model_ is None:
            self._setup(X.shape[1], int(y.max()) + 1)
        elif int(y.max()) + 1 > self.model_.n_out:
            grow = int(y.max()) + 1 - self.model_.n_out
            self.model_ = expand_head(self.model_, grow, seed=self.seed + self.model_.n_out)
            self.sgd_state_ = SGDState.zeros_like(self.model_)

    def _ncm_predict(self, features):
        if not self.ncm_.known_classes():
            return np.full(features.shape[0], -1, dtype=np.int64)
        return self.ncm_.classify_batch(features)

    def predict(self, X):
        X = check_matrix(X)
        logits, features, _ = forward(self.model_, X)
        if self.active_ == "ncm":
            return self._ncm_predict(features)
        return logits.argmax(axis=1)

    def process_block(self, X, y):
        """Predict every sample with the active classifier, then consume the
        block once: NCM means advance, the baseline takes one CE step, and
        the switch counter updates from the two block accuracies."""
        X = check_matrix(X)
        if X.shape[0] == 0:
            raise ValueError("empty block")
        y = check_labels(y, n_samples=X.shape[0])
        self._ensure_capacity(X, y)

        logits, features, cache = forward(self.model_, X)
        baseline_preds = logits.argmax(axis=1)
        ncm_preds = self._ncm_predict(features)
        preds = ncm_preds if self.active_ == "ncm" else baseline_preds

        for i in range(X.shape[0]):
            self.ncm_.update(int(y[i]), features[i])

        result = L.cross_entropy(logits, y)
        grads = backward(self.model_, cache, result.dlogits)
        sgd_step(self.model_, grads, self.sgd_state_, self.sgd_cfg_)
        self.updates_applied_ += 1

        ncm_acc = float((ncm_preds == y).mean())
        base_acc = float((baseline_preds == y).mean())
        self.block_log_.append((ncm_acc, base_acc, self.active_))
        if self.classifier == "auto" and not self.switched_:
            if base_acc > ncm_acc:
                self.win_streak_ += 1
            else:
                self.win_streak_ = 0
            if self.win_streak_ >= self.switch_threshold:
                self.active_ = "baseline"
                self.switched_ = True
                self.switch_block_ = self.blocks_seen_
        self.blocks_seen_ += 1
        return preds

    def partial_fit(self, X, y):
        self.process_block(X, y)
        return self


@dataclass
class RetrainConfig:
    epochs: int = 20
    batch_size: int = 32
    sgd: SGDConfig = None
    exemplars_per_class: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.sgd is None:
            self.sgd = SGDConfig()


def offline_retrain(model, X, y, cfg):
    """Multi-epoch shuffled mini-batch cross-entropy over all data so far.

    Afterwards the exemplar sets are rebuilt by herding with fresh features
    and the class-mean states reset to the batch means. Every class the
    head knows must be present in the data.
    """
    X = check_matrix(X, n_cols=model.input_dim)
    y = check_labels(y, n_samples=X.shape[0], n_classes=model.n_out)
    present = set(int(c) for c in np.unique(y))
    missing = [c for c in range(model.n_out) if c not in present]
    if missing:
        raise ValueError(f"classes with zero samples: {missing}")

    rng = np.random.default_rng(cfg.seed)
    state = SGDState.zeros_like(model)
    n = X.shape[0]
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            logits, _, cache = forward(model, X[idx])
            result = L.cross_entropy(logits, y[idx])
            grads = backward(model, cache, result.dlogits)
            sgd_step(model, grads, state, cfg.sgd)

    _, features, _ = forward(model, X)
    exemplars = construct_exemplars(X, y, features, capacity=cfg.exemplars_per_class)
    return model, exemplars


class IncrementalLearner(BaseEstimator):
    """Two-step online learner starting from a trained model.

    Per block: predict everything first; route old-class observations into
    the running means and exemplar sets; take one SGD step of the chosen
    distillation-family loss on the block's new-class samples against the
    frozen old model's recorded logits; then one balanced cross-entropy
    step pairing the block with an equal number of sampled exemplars.
    """

    def __init__(
        self,
        loss="mcd",
        beta=0.5,
        temperature=2.0,
        alpha=None,
        learning_rate=0.1,
        momentum=0.9,
        weight_decay=1e-4,
        rehearsal=True,
        update_exemplars=True,
        seed=0,
    ):
        self.loss = loss
        self.beta = beta
        self.temperature = temperature
        self.alpha = alpha
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.rehearsal = rehearsal
        self.update_exemplars = update_exemplars
        self.seed = seed

    def start_phase(self, model, exemplar_set, m_new):
        """Freeze the old model, widen the head by m_new units and attach
        the exemplar state for this incremental phase."""
        if self.loss not in LOSS_VARIANTS:
            raise ValueError(f"loss must be one of {LOSS_VARIANTS}")
        if m_new < 1:
            raise ValueError("m_new must be >= 1")
        self.old_model_ = model.copy()
        self.n_old_ = model.n_out
        self.m_new_ = int(m_new)
        self.model_ = expand_head(model, m_new, seed=self.seed + model.n_out)
        self.sgd_cfg_ = SGDConfig(self.learning_rate, self.momentum, self.weight_decay)
        self.sgd_state_ = SGDState.zeros_like(self.model_)
        self.exemplars_ = exemplar_set
        self.loss_cfg_ = L.LossConfig(
            n_old=self.n_old_,
            m_new=self.m_new_,
            temperature=self.temperature,
            beta=self.beta,
            alpha=self.alpha,
        )
        self.rng_ = np.random.default_rng(self.seed)
        self.updates_applied_ = 0
        self.blocks_seen_ = 0
        return self

    def _theta(self, x):
        # frozen old-class feature extractor
        _, features, _ = forward(self.old_model_, x[None, :])
        return features[0]

    def _step1_loss(self, target_logits, logits, y):
        if self.loss == "ce":
            return L.cross_entropy(logits, y)
        if self.loss == "cd":
            return L.cross_distillation(target_logits, logits, y, self.loss_cfg_)
        return L.modified_cross_distillation(target_logits, logits, y, self.loss_cfg_)

    def predict(self, X):
        logits, _, _ = forward(self.model_, check_matrix(X))
        return logits.argmax(axis=1)

    def process_block(self, block):
        """Run one prequential block; returns the pre-update predictions."""
        X = check_matrix(block.X)
        if X.shape[0] == 0:
            raise ValueError("empty block")
        y = check_labels(block.y, n_samples=X.shape[0], n_classes=self.model_.n_out)
        roles = np.asarray(block.roles)
        if (self.rehearsal or self.update_exemplars) and self.exemplars_.size() == 0:
            raise ValueError("exemplar set is empty")

        preds = self.predict(X)

        new_mask = roles == 0
        if self.update_exemplars:
            for i in np.flatnonzero(~new_mask):
                self.exemplars_.update(X[i], int(y[i]), self._theta)

        if new_mask.any():
            Xn, yn = X[new_mask], y[new_mask]
            logits, _, cache = forward(self.model_, Xn)
            target_logits, _, _ = forward(self.old_model_, Xn)
            result = self._step1_loss(target_logits, logits, yn)
            grads = backward(self.model_, cache, result.dlogits)
            sgd_step(self.model_, grads, self.sgd_state_, self.sgd_cfg_)
            self.updates_applied_ += 1

        if self.rehearsal:
            Xe, ye = self.exemplars_.training_arrays(self.rng_, X.shape[0])
            Xb = np.concatenate([X, Xe])
            yb = np.concatenate([y, ye])
            logits, _, cache = forward(self.model_, Xb)
            result = L.cross_entropy(logits, yb)
            grads = backward(self.model_, cache, result.dlogits)
            sgd_step(self.model_, grads, self.sgd_state_, self.sgd_cfg_)
            self.updates_applied_ += 1

        self.blocks_seen_ += 1
        return preds


def save_phase_checkpoint(path_prefix, model, exemplar_set, loss_cfg):
    """Persist model + exemplars + loss config; restorable to resume the
    lifelong alternation. Round-trip of the model is bit-exact."""
    save_model(f"{path_prefix}.model.npz", model)
    exemplar_set.save(f"{path_prefix}.exemplars.npz")
    cfg = {
        "n_old": loss_cfg.n_old,
        "m_new": loss_cfg.m_new,
        "temperature": loss_cfg.temperature,
        "beta": loss_cfg.beta,
        "alpha": loss_cfg.alpha,
    }
    with open(f"{path_prefix}.losscfg.json", "w") as fh:
        json.dump(cfg, fh, indent=2)


def load_phase_checkpoint(path_prefix):
    model = load_model(f"{path_prefix}.model.npz")
    exemplar_set = ExemplarSet.load(f"{path_prefix}.exemplars.npz")
    with open(f"{path_prefix}.losscfg.json") as fh:
        cfg = json.load(fh)
    loss_cfg = L.LossConfig(**cfg)
    return model, exemplar_set, loss_cfg
