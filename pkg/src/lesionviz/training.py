"""Supervised training: Adam with decoupled weight decay, early stopping on
validation loss, balanced-accuracy evaluation."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import model as M
from .checkpoint import Checkpoint
from .errors import ConfigError, DivergenceError, UndefinedMetricError
from .synthdata import DatasetManifest, load_split
from .tensor import bce_with_logits

log = logging.getLogger(__name__)

EVAL_CHUNK = 100


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    batch_size: int = 32
    patience: int = 7
    max_epochs: int = 30
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"train.learning_rate must be > 0, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ConfigError(f"train.weight_decay must be >= 0, got {self.weight_decay}")
        if self.batch_size < 1:
            raise ConfigError(f"train.batch_size must be >= 1, got {self.batch_size}")
        if self.patience < 1:
            raise ConfigError(f"train.patience must be >= 1, got {self.patience}")
        if self.max_epochs < 1:
            raise ConfigError(f"train.max_epochs must be >= 1, got {self.max_epochs}")

    @property
    def adam(self) -> AdamConfig:
        return AdamConfig(self.learning_rate, self.weight_decay, self.adam_beta1, self.adam_beta2,
                          self.adam_eps)


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    val_loss: float
    val_balanced_accuracy: float


def adam_step(params, grads, state: AdamState, config, names=None):
    """One Adam update with decoupled weight decay.

    ``params``/``grads`` are parallel lists of arrays. ``config`` is an
    :class:`AdamConfig` or anything exposing ``.adam``. Returns new parameter
    arrays and a new state; inputs are left untouched.
    """
    cfg = config.adam if hasattr(config, "adam") else config
    names = names or [f"param[{i}]" for i in range(len(params))]
    for name, p, g in zip(names, params, grads):
        if np.shape(p) != np.shape(g):
            raise ValueError(f"gradient for {name} has shape {np.shape(g)}, expected {np.shape(p)}")
        if not np.isfinite(g).all():
            raise DivergenceError(f"non-finite gradient in {name}")
    t = state.t + 1
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + cfg.eps) + cfg.weight_decay * p
        new_p.append(p - cfg.learning_rate * update)
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(new_m, new_v, t)


def balanced_accuracy(labels, predictions) -> float:
    y = np.asarray(labels).astype(int)
    p = np.asarray(predictions).astype(int)
    if y.shape != p.shape:
        raise ValueError(f"labels and predictions differ in length: {y.shape} vs {p.shape}")
    pos, neg = y == 1, y == 0
    if not pos.any() or not neg.any():
        raise UndefinedMetricError("balanced accuracy needs both classes among the labels")
    sensitivity = float((p[pos] == 1).mean())
    specificity = float((p[neg] == 0).mean())
    return (sensitivity + specificity) / 2.0


class EarlyStopping:
    """Track validation loss; stop after ``patience`` epochs without strict improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = np.inf
        self.best_epoch = None
        self.bad_epochs = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        """Record one epoch; returns True when training should stop."""
        if val_loss < self.best:
            self.best, self.best_epoch, self.bad_epochs = val_loss, epoch, 0
        else:
            self.bad_epochs += 1
        return self.bad_epochs >= self.patience


def predict_logits(spec: M.ModelSpec, params: M.ModelParams, images: np.ndarray) -> np.ndarray:
    out = [M.forward_logit(spec, params, images[i:i + EVAL_CHUNK])[0]
           for i in range(0, len(images), EVAL_CHUNK)]
    return np.concatenate(out)


def evaluate(spec, params, images, labels) -> tuple:
    """Mean BCE loss and balanced accuracy (threshold sigmoid >= 0.5)."""
    logits = predict_logits(spec, params, images)
    loss, _ = bce_with_logits(logits, labels)
    return float(np.mean(loss)), balanced_accuracy(labels, logits >= 0)


def train_step(spec, params: M.ModelParams, state: AdamState, x, y, config: TrainConfig):
    """Forward/backward on one batch and an Adam update. Returns (params, state, loss)."""
    logits, cache = M.forward_logit(spec, params, x)
    loss, dlogit = bce_with_logits(logits, y)
    loss = float(np.mean(loss))
    if not np.isfinite(loss):
        raise DivergenceError("non-finite training loss")
    grads, _ = M.backward_logit(spec, params, cache, dlogit / len(y), need_image=False)
    named = params.named_tensors()
    new, state = adam_step([a for _, a in named], [a for _, a in grads.named_tensors()], state, config,
                           names=[n for n, _ in named])
    return M.ModelParams.from_tensors(new), state, loss


def train(model_spec: M.ModelSpec, manifest: DatasetManifest, config: TrainConfig):
    """Train from scratch and return the best-validation-loss checkpoint and per-epoch metrics."""
    x_train, y_train = load_split(manifest, "train")
    x_val, y_val = load_split(manifest, "val")
    if x_train.shape[1:] != model_spec.input_shape:
        raise ConfigError(f"dataset images {x_train.shape[1:]} do not match model input "
                          f"{model_spec.input_shape}")
    params = M.build(model_spec, config.seed)
    state = AdamState.zeros([a for _, a in params.named_tensors()])
    stopper = EarlyStopping(config.patience)
    best_params, history = params.copy(), []
    n = len(y_train)
    for epoch in range(1, config.max_epochs + 1):
        order = np.random.default_rng([config.seed, epoch]).permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            try:
                params, state, loss = train_step(model_spec, params, state, x_train[idx], y_train[idx], config)
            except DivergenceError as exc:
                raise DivergenceError(f"epoch {epoch}, batch {b}: {exc}") from exc
            total += loss * len(idx)
        val_loss, val_bacc = evaluate(model_spec, params, x_val, y_val)
        if not np.isfinite(val_loss):
            raise DivergenceError(f"epoch {epoch}: non-finite validation loss")
        history.append(EpochMetrics(epoch, total / n, val_loss, val_bacc))
        log.info("epoch %d train_loss %.5f val_loss %.5f val_bacc %.4f", epoch, total / n, val_loss, val_bacc)
        stop = stopper.update(epoch, val_loss)
        if stopper.best_epoch == epoch:
            best_params = params.copy()
        if stop:
            break
    best = history[stopper.best_epoch - 1]
    metadata = {
        "seed": config.seed,
        "epochs_run": len(history),
        "best_epoch": stopper.best_epoch,
        "best_val_loss": best.val_loss,
        "best_val_balanced_accuracy": best.val_balanced_accuracy,
        "dataset_id": manifest.dataset_id,
        "train_config": asdict(config),
    }
    return Checkpoint(model_spec, best_params, metadata), history


def metrics_table(history) -> str:
    lines = ["epoch\ttrain_loss\tval_loss\tval_balanced_accuracy"]
    lines += [f"{m.epoch}\t{m.train_loss:.17g}\t{m.val_loss:.17g}\t{m.val_balanced_accuracy:.17g}"
              for m in history]
    return "\n".join(lines) + "\n"
