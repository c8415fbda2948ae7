"""Metrics and protocol execution for online incremental experiments.

Online (prequential) accuracy counts a sample as correct when the model
predicts it right before consuming the block it arrived in. Held-out
accuracy is computed after each phase, overall and split into classes that
were already known before the phase (old) and classes the phase introduced
(new). Undefined accuracies (empty denominators) are reported as None and
serialized as empty CSV fields, never as 0.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .learner import IncrementalLearner, RetrainConfig, ScratchLearner, offline_retrain
from .nn import MLP, SGDConfig, SGDState, backward, forward, sgd_step
from .losses import cross_entropy
from .stream import iter_blocks
from .validation import check_labels, check_matrix

DEFAULT_BLOCK_CANDIDATES = (1, 2, 4, 8, 16, 32, 64)
PRETEST_PROBE_SIZE = 128


class OnlineAccuracyTracker:
    """Prequential correct/total counters, overall and per sample role."""

    def __init__(self):
        self.correct = {"overall": 0, "new": 0, "old": 0}
        self.total = {"overall": 0, "new": 0, "old": 0}

    def record(self, predicted, actual, role):
        hit = int(predicted == actual)
        self.correct["overall"] += hit
        self.total["overall"] += 1
        key = "old" if role == 1 else "new"
        self.correct[key] += hit
        self.total[key] += 1

    def accuracy(self, kind="overall"):
        if self.total[kind] == 0:
            return None
        return self.correct[kind] / self.total[kind]


def evaluate(model, test_X, test_y, old_class_ids):
    """Argmax accuracy on a held-out set, overall and split by old/new
    class membership. The model is read-only."""
    test_X = check_matrix(test_X, n_cols=model.input_dim)
    test_y = check_labels(test_y, n_samples=test_X.shape[0], n_classes=model.n_out)
    logits, _, _ = forward(model, test_X)
    preds = logits.argmax(axis=1)
    hits = preds == test_y
    old = np.isin(test_y, list(old_class_ids))

    def acc(mask):
        if mask.sum() == 0:
            return None
        return float(hits[mask].mean())

    return {
        "overall": acc(np.ones_like(old)),
        "new": acc(~old),
        "old": acc(old),
    }


@dataclass
class PretestResult:
    scores: dict
    chosen: int


def pretest_block_size(
    model_factory,
    probe_X,
    probe_y,
    candidates=DEFAULT_BLOCK_CANDIDATES,
    sgd=None,
    probe_size=PRETEST_PROBE_SIZE,
):
    """Pick a block size by prequential accuracy on the first probe_size
    samples: each candidate trains a fresh model from model_factory with
    one cross-entropy step per block. Ties break toward the smaller p."""
    probe_X = check_matrix(probe_X)
    probe_y = check_labels(probe_y, n_samples=probe_X.shape[0])
    if probe_X.shape[0] < probe_size:
        raise ValueError(f"probe needs at least {probe_size} samples")
    if sgd is None:
        sgd = SGDConfig()
    X = probe_X[:probe_size]
    y = probe_y[:probe_size]
    scores = {}
    for p in candidates:
        model = model_factory()
        state = SGDState.zeros_like(model)
        correct = 0
        for start in range(0, probe_size, p):
            bx, by = X[start : start + p], y[start : start + p]
            logits, _, cache = forward(model, bx)
            correct += int((logits.argmax(axis=1) == by).sum())
            result = cross_entropy(logits, by)
            grads = backward(model, cache, result.dlogits)
            sgd_step(model, grads, state, sgd)
        scores[p] = correct / probe_size
    chosen = None
    for p in sorted(scores):
        if chosen is None or scores[p] > scores[chosen]:
            chosen = p
    return PretestResult(scores=scores, chosen=chosen)


@dataclass
class ProtocolConfig:
    hidden_dims: tuple = (64, 64)
    learning_rate: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    loss: str = "mcd"
    beta: float = 0.5
    temperature: float = 2.0
    alpha: float | None = None
    exemplars_per_class: int = 10
    update_exemplars: bool = True
    rehearsal: bool = True
    replace_farthest: bool = False
    switch_threshold: int = 5
    scratch_classifier: str = "auto"
    retrain_epochs: int = 20
    retrain_batch_size: int = 32
    seed: int = 0

    def sgd(self):
        return SGDConfig(self.learning_rate, self.momentum, self.weight_decay)


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    prediction_log: list = field(default_factory=list)  # (phase, block, updates_before)
    block_times: list = field(default_factory=list)  # (phase, block, seconds)

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("phase,step,block_index,metric,value\n")
            for phase, step, block_index, metric, value in self.rows:
                block = "" if block_index is None else str(block_index)
                val = "" if value is None else repr(float(value))
                fh.write(f"{phase},{step},{block},{metric},{val}\n")

    def timings_to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("phase,block_index,seconds\n")
            for phase, block, seconds in self.block_times:
                fh.write(f"{phase},{block},{seconds!r}\n")


def _phase_rows(report, phase, tracker, test_metrics):
    for kind in ("overall", "new", "old"):
        report.rows.append((phase, phase, None, f"online_acc_{kind}", tracker.accuracy(kind)))
    for kind in ("overall", "new", "old"):
        report.rows.append((phase, phase, None, f"test_acc_{kind}", test_metrics[kind]))


def run_protocol(dataset, spec, cfg):
    """Execute the full benchmark: scratch phase, offline retraining, then
    each incremental phase with two-step learning, evaluating on the
    held-out set after every phase. Deterministic given (dataset, spec,
    cfg); wall-clock per block is kept out of the deterministic report."""
    from .stream import make_scenario

    scenario = make_scenario(dataset, spec)
    p = spec.block_size
    report = EvalReport()
    overall_tracker = OnlineAccuracyTracker()

    seen_X, seen_y = [], []
    classes_seen = list(scenario.classes_per_phase[0])

    scratch = ScratchLearner(
        hidden_dims=tuple(cfg.hidden_dims),
        learning_rate=cfg.learning_rate,
        momentum=cfg.momentum,
        weight_decay=cfg.weight_decay,
        switch_threshold=cfg.switch_threshold,
        classifier=cfg.scratch_classifier,
        seed=cfg.seed,
    )
    phase_tracker = OnlineAccuracyTracker()
    for block in iter_blocks(scenario.phases[0], p):
        t0 = time.perf_counter()
        before = getattr(scratch, "updates_applied_", 0)
        preds = scratch.process_block(block.X, block.y)
        report.prediction_log.append((0, block.index, before))
        report.block_times.append((0, block.index, time.perf_counter() - t0))
        for pred, actual, role in zip(preds, block.y, block.roles):
            phase_tracker.record(int(pred), int(actual), int(role))
            overall_tracker.record(int(pred), int(actual), int(role))
        report.rows.append(
            (0, 0, block.index, "block_acc", float((preds == block.y).mean()))
        )
    seen_X.append(scenario.phases[0].X)
    seen_y.append(scenario.phases[0].y)

    model = scratch.model_
    test_mask = np.isin(scenario.test_y, classes_seen)
    metrics = evaluate(model, scenario.test_X[test_mask], scenario.test_y[test_mask], [])
    _phase_rows(report, 0, phase_tracker, metrics)
    report.summary["scratch"] = {
        "online_acc": phase_tracker.accuracy(),
        "test_acc": metrics["overall"],
        "switch_block": scratch.switch_block_,
        "active_classifier": scratch.active_,
    }

    retrain_cfg = RetrainConfig(
        epochs=cfg.retrain_epochs,
        batch_size=cfg.retrain_batch_size,
        sgd=cfg.sgd(),
        exemplars_per_class=cfg.exemplars_per_class,
        seed=cfg.seed,
    )
    model, exemplars = offline_retrain(
        model, np.concatenate(seen_X), np.concatenate(seen_y), retrain_cfg
    )
    exemplars.replace_farthest = cfg.replace_farthest

    phase_summaries = []
    for phase in range(1, len(scenario.phases)):
        old_classes = list(classes_seen)
        new_classes = scenario.classes_per_phase[phase]
        learner = IncrementalLearner(
            loss=cfg.loss,
            beta=cfg.beta,
            temperature=cfg.temperature,
            alpha=cfg.alpha,
            learning_rate=cfg.learning_rate,
            momentum=cfg.momentum,
            weight_decay=cfg.weight_decay,
            rehearsal=cfg.rehearsal,
            update_exemplars=cfg.update_exemplars,
            seed=cfg.seed + phase,
        )
        learner.start_phase(model, exemplars, m_new=len(new_classes))
        phase_tracker = OnlineAccuracyTracker()
        for block in iter_blocks(scenario.phases[phase], p):
            t0 = time.perf_counter()
            before = learner.updates_applied_
            preds = learner.process_block(block)
            report.prediction_log.append((phase, block.index, before))
            report.block_times.append((phase, block.index, time.perf_counter() - t0))
            for pred, actual, role in zip(preds, block.y, block.roles):
                phase_tracker.record(int(pred), int(actual), int(role))
                overall_tracker.record(int(pred), int(actual), int(role))
            report.rows.append(
                (phase, phase, block.index, "block_acc", float((preds == block.y).mean()))
            )
        seen_X.append(scenario.phases[phase].X)
        seen_y.append(scenario.phases[phase].y)
        classes_seen.extend(new_classes)

        model = learner.model_
        test_mask = np.isin(scenario.test_y, classes_seen)
        metrics = evaluate(
            model, scenario.test_X[test_mask], scenario.test_y[test_mask], old_classes
        )
        _phase_rows(report, phase, phase_tracker, metrics)
        phase_summaries.append(
            {
                "phase": phase,
                "online_acc": phase_tracker.accuracy(),
                "online_acc_old": phase_tracker.accuracy("old"),
                "online_acc_new": phase_tracker.accuracy("new"),
                "test_acc": metrics["overall"],
                "test_acc_old": metrics["old"],
                "test_acc_new": metrics["new"],
            }
        )
        exemplars = learner.exemplars_

        if phase + 1 < len(scenario.phases):
            model, exemplars = offline_retrain(
                model, np.concatenate(seen_X), np.concatenate(seen_y), retrain_cfg
            )
            exemplars.replace_farthest = cfg.replace_farthest

    report.summary["incremental"] = phase_summaries
    report.summary["online_acc_overall"] = overall_tracker.accuracy()
    report.summary["online_acc_old"] = overall_tracker.accuracy("old")
    report.summary["online_acc_new"] = overall_tracker.accuracy("new")
    report.summary["classes_per_phase"] = [list(c) for c in scenario.classes_per_phase]
    return report
