"""Loss family for online class-incremental training.

All losses operate on batches of raw output logits and return both the
batch-mean value and the analytic gradient with respect to those logits,
so the network core stays loss-agnostic. Recorded old-classifier logits
are always treated as constants: no gradient flows into them.
"""

from dataclasses import dataclass

import numpy as np

from .validation import check_labels, check_matrix


def alpha_for(n_old, m_new):
    """Mixing weight between distillation and cross-entropy: n / (n + m)."""
    if n_old < 1:
        raise ValueError("n_old must be >= 1")
    if m_new < 1:
        raise ValueError("m_new must be >= 1")
    return n_old / (n_old + m_new)


@dataclass
class LossConfig:
    """Hyperparameters of the distillation loss family.

    alpha=None means the automatic choice n / (n + m).
    """

    n_old: int
    m_new: int
    temperature: float = 2.0
    beta: float = 0.5
    alpha: float | None = None

    def __post_init__(self):
        if self.n_old < 1 or self.m_new < 1:
            raise ValueError("n_old and m_new must be >= 1")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if not 0 <= self.beta <= 1:
            raise ValueError("beta must be in [0, 1]")
        if self.alpha is not None and not 0 <= self.alpha <= 1:
            raise ValueError("alpha must be in [0, 1]")

    @property
    def effective_alpha(self):
        if self.alpha is not None:
            return self.alpha
        return alpha_for(self.n_old, self.m_new)

    @property
    def n_total(self):
        return self.n_old + self.m_new


@dataclass
class LossResult:
    value: float
    dlogits: np.ndarray


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def tempered_softmax(logits, temperature):
    """Softmax of logits / T, computed with max-subtraction for stability.

    Accepts a single logit vector or a batch; T=1 is the plain softmax.
    """
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    arr = np.asarray(logits, dtype=np.float64)
    squeeze = arr.ndim == 1
    if squeeze:
        arr = arr[None, :]
    arr = check_matrix(arr, name="logits")
    probs = np.exp(_log_softmax(arr / temperature))
    return probs[0] if squeeze else probs


def _one_hot(labels, n_classes):
    out = np.zeros((labels.shape[0], n_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def cross_entropy(logits, labels):
    """Batch-mean softmax cross-entropy with per-sample gradient (p - y)/B."""
    logits = check_matrix(logits, name="logits")
    batch = logits.shape[0]
    labels = check_labels(labels, n_samples=batch, n_classes=logits.shape[1])
    log_p = _log_softmax(logits)
    value = -log_p[np.arange(batch), labels].mean()
    dlogits = (np.exp(log_p) - _one_hot(labels, logits.shape[1])) / batch
    return LossResult(value=float(value), dlogits=dlogits)


def distillation_loss(target_logits, new_logits, cfg):
    """Knowledge distillation on the first n output units.

    Both the recorded targets and the current logits are tempered by T;
    the value is -sum_i p_hat_T[i] * log p_T[i], batch-averaged. Gradient
    flows only into the first n logits.
    """
    n = cfg.n_old
    target_logits = check_matrix(target_logits, name="target_logits", n_cols=n)
    new_logits = check_matrix(new_logits, name="new_logits")
    if new_logits.shape[1] < n:
        raise ValueError("new_logits must have at least n_old columns")
    if new_logits.shape[0] != target_logits.shape[0]:
        raise ValueError("batch size mismatch between targets and logits")
    batch = new_logits.shape[0]
    T = cfg.temperature
    p_hat = tempered_softmax(target_logits, T)
    log_p = _log_softmax(new_logits[:, :n] / T)
    value = -(p_hat * log_p).sum(axis=1).mean()
    dlogits = np.zeros_like(new_logits)
    dlogits[:, :n] = (np.exp(log_p) - p_hat) / (T * batch)
    return LossResult(value=float(value), dlogits=dlogits)


def accommodate(new_logits, target_logits, cfg):
    """Blend old-classifier outputs into the first n units.

    First n entries become beta*o + (1-beta)*o_hat, the remaining m are
    copied from the new classifier unchanged.
    """
    new_logits = check_matrix(new_logits, name="new_logits", n_cols=cfg.n_total)
    target_logits = check_matrix(target_logits, name="target_logits", n_cols=cfg.n_old)
    if new_logits.shape[0] != target_logits.shape[0]:
        raise ValueError("batch size mismatch between targets and logits")
    out = new_logits.copy()
    out[:, : cfg.n_old] = (
        cfg.beta * new_logits[:, : cfg.n_old] + (1 - cfg.beta) * target_logits
    )
    return out


def cross_distillation(target_logits, new_logits, labels, cfg):
    """alpha * distillation + (1 - alpha) * cross-entropy."""
    alpha = cfg.effective_alpha
    dist = distillation_loss(target_logits, new_logits, cfg)
    ce = cross_entropy(new_logits, labels)
    return LossResult(
        value=alpha * dist.value + (1 - alpha) * ce.value,
        dlogits=alpha * dist.dlogits + (1 - alpha) * ce.dlogits,
    )


def modified_cross_distillation(target_logits, new_logits, labels, cfg):
    """Cross-distillation with the cross-entropy term on accommodated logits.

    The accommodation scales the gradient of the cross-entropy part on the
    first n logits by beta; the recorded targets stay constant.
    """
    alpha = cfg.effective_alpha
    dist = distillation_loss(target_logits, new_logits, cfg)
    blended = accommodate(new_logits, target_logits, cfg)
    ce = cross_entropy(blended, labels)
    dce = ce.dlogits.copy()
    dce[:, : cfg.n_old] *= cfg.beta
    return LossResult(
        value=alpha * dist.value + (1 - alpha) * ce.value,
        dlogits=alpha * dist.dlogits + (1 - alpha) * dce,
    )
