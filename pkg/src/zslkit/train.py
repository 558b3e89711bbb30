"""Maximum-likelihood training of the compatibility model over seen classes.

Every iteration samples a batch with replacement from the (optionally
over-sampled) training indices, computes the batch NLL gradient in the
extended parameter space, and applies one optimizer step. No explicit weight
penalty is used; regularization comes from early stopping against zero-shot
accuracy on a disjoint validation class split.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .embeddings import ClassEmbeddingSet
from .errors import ConfigError, IncompleteCoverageError, SplitViolationError
from .evaluate import SplitDataset, evaluate_zsl
from .model import CompatModel, extend_embedding
from .optim import AdamState, SgdState, adam_step, sgd_step
from .rng import component_rng

INIT_SCHEMES = ("glorot_uniform", "zeros")
OPTIMIZERS = ("adam", "sgd")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 100
    max_iterations: int = 10_000
    eval_every: int = 100
    seed: int = 0
    init_scheme: str = "glorot_uniform"
    oversample: bool = True
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    use_wx: bool = True
    use_wy: bool = True
    backend: str | None = None  # kernel backend override

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if not 1 <= self.eval_every <= self.max_iterations:
            raise ConfigError("eval_every must be in [1, max_iterations]")
        if self.init_scheme not in INIT_SCHEMES:
            raise ConfigError(f"init_scheme must be one of {INIT_SCHEMES}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("beta1 and beta2 must lie in [0, 1)")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")


@dataclass(frozen=True)
class EvalRecord:
    iteration: int
    train_nll: float  # batch NLL at this iteration, before its update
    val_accuracy: float  # zero-shot normalized accuracy after its update


@dataclass
class TrainReport:
    records: list[EvalRecord]
    best_iteration: int
    best_accuracy: float
    model: CompatModel  # snapshot at best_iteration


def init_model(d: int, m: int, scheme: str = "glorot_uniform",
               seed: int = 0) -> CompatModel:
    """Initialize the (d+1) x (m+1) extended matrix.

    glorot_uniform draws i.i.d. uniform entries bounded by
    sqrt(6 / (fan_in + fan_out)) with the extended dimensions as fans.
    """
    if scheme == "zeros":
        return CompatModel.zeros(d, m)
    if scheme != "glorot_uniform":
        raise ConfigError(f"init_scheme must be one of {INIT_SCHEMES}, got {scheme!r}")
    bound = np.sqrt(6.0 / (d + 1 + m + 1))
    rng = component_rng(seed, "init")
    return CompatModel(rng.uniform(-bound, bound, size=(d + 1, m + 1)))


def oversample_indices(labels, seed: int = 0) -> np.ndarray:
    """Balance class counts by repeating minority-class indices.

    Every original index is kept; each class is topped up to the largest
    class's count with draws (with replacement) from its own indices.
    """
    labels = list(labels)
    if not labels:
        raise ValueError("labels must be non-empty")
    by_class: dict = {}
    for i, lab in enumerate(labels):
        by_class.setdefault(lab, []).append(i)
    target = max(len(v) for v in by_class.values())
    rng = component_rng(seed, "oversample")
    out = list(range(len(labels)))
    for lab, idx in by_class.items():  # insertion order: first appearance
        deficit = target - len(idx)
        if deficit > 0:
            out.extend(rng.choice(idx, size=deficit, replace=True).tolist())
    return np.asarray(out, dtype=np.int64)


def _linear_term_mask(d: int, m: int, use_wx: bool, use_wy: bool) -> np.ndarray:
    """1 where a parameter is trainable. Masking zeroes w_x (last column) or
    w_y (last row); the corner bias stays trainable either way."""
    mask = np.ones((d + 1, m + 1))
    if not use_wx:
        mask[:d, m] = 0.0
    if not use_wy:
        mask[d, :m] = 0.0
    return mask


def train(dataset: SplitDataset, embeddings: ClassEmbeddingSet,
          config: TrainConfig) -> TrainReport:
    """Run the SGD/Adam loop and return the early-stopped model.

    Validation accuracy is measured every `eval_every` iterations by zero-shot
    prediction restricted to the validation classes; the returned model is the
    snapshot at the earliest iteration attaining the best accuracy.
    """
    splits = dataset.splits
    splits.require_disjoint()
    if not splits.zsl_validation:
        raise SplitViolationError("training needs a non-empty validation class split")

    train_classes = splits.seen
    missing = [c for c in train_classes + splits.zsl_validation
               if c not in embeddings]
    if missing:
        raise IncompleteCoverageError(
            f"no embedding for class(es) {missing}")

    _, X, labels = dataset.subset("seen")
    if len(labels) == 0:
        raise SplitViolationError("seen split has no training instances")
    class_index = {c: i for i, c in enumerate(train_classes)}
    label_idx = np.asarray([class_index[l] for l in labels], dtype=np.int64)

    d = dataset.d
    m = embeddings.m
    Phi_e = extend_embedding(X)
    Psi_e = extend_embedding(embeddings.select(train_classes))

    model = init_model(d, m, config.init_scheme, config.seed)
    mask = _linear_term_mask(d, m, config.use_wx, config.use_wy)
    W_e = model.W_e * mask

    if config.oversample:
        pool = oversample_indices(labels, config.seed)
    else:
        pool = np.arange(len(labels), dtype=np.int64)

    if config.optimizer == "adam":
        opt_state = AdamState.for_shape(W_e.shape, alpha=config.learning_rate,
                                        beta1=config.beta1, beta2=config.beta2,
                                        epsilon=config.epsilon)
    else:
        opt_state = SgdState(alpha=config.learning_rate)

    batch_rng = component_rng(config.seed, "batch")
    records: list[EvalRecord] = []
    best_iteration = 0
    best_accuracy = -1.0
    best_W_e = W_e.copy()

    for t in range(1, config.max_iterations + 1):
        batch = pool[batch_rng.integers(0, len(pool), size=config.batch_size)]
        batch_nll, G = kernels.nll_and_grad(W_e, Phi_e[batch], label_idx[batch],
                                            Psi_e, backend=config.backend)
        G *= mask
        if config.optimizer == "adam":
            W_e, opt_state = adam_step(opt_state, W_e, G)
        else:
            W_e = sgd_step(opt_state, W_e, G)

        if t % config.eval_every == 0:
            snapshot = CompatModel(W_e.copy())
            acc = evaluate_zsl(snapshot, dataset, embeddings,
                               "zsl_validation").normalized_accuracy
            records.append(EvalRecord(t, batch_nll, acc))
            if acc > best_accuracy:
                best_accuracy = acc
                best_iteration = t
                best_W_e = snapshot.W_e

    return TrainReport(records, best_iteration, best_accuracy,
                       CompatModel(best_W_e))
