"""Loss, initialization, Adam, and the training loop with model selection.

Everything randomized draws from a single numpy Generator seeded by the
config, so a (seed, config, corpus) triple reproduces the run exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError
from .metrics import evaluate

BCE_EPS = 1e-7


class OptimizerStateError(RuntimeError):
    """Optimizer invoked with missing or inconsistent gradient state."""


class TrainingDivergedError(RuntimeError):
    """Training loss became non-finite; carries a diagnostic snapshot."""

    def __init__(self, message: str, snapshot: dict):
        super().__init__(message)
        self.snapshot = snapshot


@dataclass
class TrainConfig:
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 20
    keep_prob: float = 0.8
    seed: int = 0
    eval_every: int = 1
    patience: int = 5

    def validate(self) -> None:
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 < self.keep_prob <= 1.0:
            raise ConfigError(f"keep_prob must be in (0, 1], got {self.keep_prob}")
        for name in ("beta1", "beta2"):
            b = getattr(self, name)
            if not 0.0 <= b < 1.0:
                raise ConfigError(f"{name} must be in [0, 1), got {b}")
        if self.epochs < 1 or self.eval_every < 1 or self.patience < 0:
            raise ConfigError("epochs and eval_every must be >= 1, patience >= 0")


# ---------------------------------------------------------------------------
# loss and initialization
# ---------------------------------------------------------------------------


def bce_loss(y_hat: Tensor, labels) -> Tensor:
    """Mean binary cross entropy; probabilities are clamped away from 0/1."""
    labels = np.asarray(labels, dtype=y_hat.dtype)
    if labels.shape != y_hat.shape:
        raise ad.DimensionError(
            f"labels shape {labels.shape} does not match predictions {y_hat.shape}"
        )
    p = ad.clip(y_hat, BCE_EPS, 1.0 - BCE_EPS)
    y = Tensor(labels)
    one_minus_y = Tensor(1.0 - labels)
    term = y * ad.log(p) + one_minus_y * ad.log(1.0 - p)
    return ad.neg(ad.mean(term))


def glorot_init(
    shape,
    rng: np.random.Generator,
    dtype=np.float32,
    requires_grad: bool = True,
) -> Tensor:
    """Uniform init in +-sqrt(6 / (n_in + n_out)).

    For matrices the two extents are the fan sizes; vectors use
    n_in = length, n_out = 1.
    """
    shape = tuple(int(s) for s in shape)
    if len(shape) == 0 or any(s <= 0 for s in shape):
        raise ConfigError(f"glorot_init needs positive extents, got {shape}")
    if len(shape) == 1:
        fan = shape[0] + 1
    elif len(shape) == 2:
        fan = shape[0] + shape[1]
    else:
        raise ConfigError(f"glorot_init supports rank 1 or 2, got {shape}")
    bound = float(np.sqrt(6.0 / fan))
    data = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return Tensor(data, requires_grad=requires_grad)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: dict[str, Tensor]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p.data) for k, p in params.items()},
            v={k: np.zeros_like(p.data) for k, p in params.items()},
        )


def adam_step(
    params: dict[str, Tensor],
    grads: dict[str, np.ndarray],
    state: AdamState,
    config: TrainConfig,
) -> None:
    """One Adam update with bias correction, in place on the parameters."""
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    corr1 = 1.0 - b1 ** state.t
    corr2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            raise OptimizerStateError(f"missing gradient for parameter {name!r}")
        if g.shape != p.data.shape:
            raise OptimizerStateError(
                f"gradient shape {g.shape} does not match {name!r} {p.data.shape}"
            )
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / corr1
        v_hat = v / corr2
        p.data -= (config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)).astype(
            p.data.dtype
        )


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    params: "ModelParams"  # noqa: F821  (resolved at runtime)
    history: list[dict]
    best_val_auc: float
    best_epoch: int


def train(
    kind: str,
    train_set: Sequence,
    val_set: Sequence,
    model_config,
    config: TrainConfig,
    embedding: np.ndarray | None = None,
    on_epoch: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Train a model with shuffled minibatches and Adam; keep the checkpoint
    with the best validation AUC; stop early when it stalls.

    ``train_set`` and ``val_set`` are encoded applications; both must be
    non-empty. History rows carry epoch, cumulative optimizer steps, mean
    train loss, and validation metrics.
    """
    from .model import forward_batch, init_model_params, make_batch, score_batchwise

    config.validate()
    if not train_set or not val_set:
        raise ConfigError("train and validation sets must be non-empty")
    val_label_set = {a.label for a in val_set}
    if val_label_set != {0, 1}:
        raise ConfigError(
            "validation set needs both classes for AUC model selection"
        )

    rng = np.random.default_rng(config.seed)
    params = init_model_params(kind, model_config, rng, embedding=embedding)
    named = params.named_parameters()
    state = AdamState.for_params(named)

    val_labels = np.array([a.label for a in val_set], dtype=np.int64)
    history: list[dict] = []
    best_snapshot = None
    best_auc = -np.inf
    best_epoch = -1
    evals_since_best = 0
    total_steps = 0

    # The graph runs many small dense kernels; multithreaded BLAS only
    # adds dispatch overhead at these sizes.
    with threadpool_limits(limits=1):
        for epoch in range(1, config.epochs + 1):
            order = rng.permutation(len(train_set))
            losses = []
            for start in range(0, len(order), config.batch_size):
                chunk = [train_set[int(i)]
                         for i in order[start : start + config.batch_size]]
                batch = make_batch(chunk, model_config, kind, dtype=params.dtype)
                out = forward_batch(
                    params, batch, mode="train", keep_prob=config.keep_prob,
                    rng=rng, record_trace=False,
                )
                loss = bce_loss(out.y_hat, batch.labels)
                loss_val = loss.item()
                if not np.isfinite(loss_val):
                    raise TrainingDivergedError(
                        f"loss became {loss_val} at epoch {epoch} "
                        f"step {total_steps + 1}",
                        snapshot={
                            "epoch": epoch,
                            "step": total_steps + 1,
                            "loss": loss_val,
                            "recent_losses": [float(x) for x in losses[-5:]],
                            "history": history,
                        },
                    )
                params.zero_grad()
                ad.backward(loss)
                grads = {k: t.grad for k, t in named.items()}
                adam_step(named, grads, state, config)
                losses.append(loss_val)
                total_steps += 1

            row = {
                "epoch": epoch,
                "step": total_steps,
                "train_loss": float(np.mean(losses)),
            }
            if epoch % config.eval_every == 0 or epoch == config.epochs:
                scores = score_batchwise(params, val_set,
                                         batch_size=config.batch_size)
                report = evaluate(scores, val_labels)
                row["val"] = report.to_dict()
                if report.auc > best_auc:
                    best_auc = report.auc
                    best_epoch = epoch
                    best_snapshot = params.snapshot()
                    evals_since_best = 0
                else:
                    evals_since_best += 1
            history.append(row)
            if on_epoch is not None:
                on_epoch(row)
            if config.patience and evals_since_best >= config.patience:
                break

    if best_snapshot is not None:
        params.load_snapshot(best_snapshot)
    return TrainResult(
        params=params,
        history=history,
        best_val_auc=float(best_auc),
        best_epoch=best_epoch,
    )
