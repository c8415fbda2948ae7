"""Online class-incremental learning with distillation losses, exemplar
rehearsal and prequential benchmarking."""

from .bench import (
    EvalReport,
    OnlineAccuracyTracker,
    PretestResult,
    ProtocolConfig,
    evaluate,
    pretest_block_size,
    run_protocol,
)
from .exemplar import Exemplar, ExemplarSet, construct_exemplars
from .learner import (
    IncrementalLearner,
    RetrainConfig,
    ScratchLearner,
    load_phase_checkpoint,
    offline_retrain,
    save_phase_checkpoint,
)
from .losses import (
    LossConfig,
    LossResult,
    accommodate,
    alpha_for,
    cross_distillation,
    cross_entropy,
    distillation_loss,
    modified_cross_distillation,
    tempered_softmax,
)
from .ncm import ClassMeanState, NCMClassifier, update_mean
from .nn import (
    MLP,
    GradientSet,
    SGDConfig,
    SGDState,
    backward,
    expand_head,
    forward,
    grad_check,
    load_model,
    save_model,
    sgd_step,
)
from .stream import (
    DataBlock,
    DataFormatError,
    Dataset,
    DriftSpec,
    Scenario,
    ScenarioSpec,
    Stream,
    inject_drift,
    iter_blocks,
    load_dataset,
    make_scenario,
)

__version__ = "0.1.0"
