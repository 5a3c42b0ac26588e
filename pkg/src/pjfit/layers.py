"""Reusable network layers: LSTM cell, BiLSTM encoder, attention, pooling.

All layer functions are pure in (parameters, inputs, rng) and accept either
single vectors or batches stacked along a leading axis. Masks are plain
boolean numpy arrays marking real (non-padded) positions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError


class EmptyInputError(ValueError):
    """A layer received an empty sequence."""


@dataclass
class LstmParams:
    """Gate weights [hidden x (input+hidden)] and gate biases [hidden]."""

    W_i: Tensor
    W_f: Tensor
    W_C: Tensor
    W_o: Tensor
    b_i: Tensor
    b_f: Tensor
    b_C: Tensor
    b_o: Tensor

    @property
    def hidden_size(self) -> int:
        return self.W_i.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_i.shape[1] - self.W_i.shape[0]

    def named(self) -> dict[str, Tensor]:
        return {
            "W_i": self.W_i, "W_f": self.W_f, "W_C": self.W_C, "W_o": self.W_o,
            "b_i": self.b_i, "b_f": self.b_f, "b_C": self.b_C, "b_o": self.b_o,
        }


@dataclass
class BiLstmParams:
    fwd: LstmParams
    bwd: LstmParams

    def named(self) -> dict[str, Tensor]:
        out = {f"fwd.{k}": v for k, v in self.fwd.named().items()}
        out.update({f"bwd.{k}": v for k, v in self.bwd.named().items()})
        return out


@dataclass
class SelfAttentionParams:
    """Context vector v [d_a], projection W [d_a x d_in], bias b [d_a]."""

    v: Tensor
    W: Tensor
    b: Tensor

    def named(self) -> dict[str, Tensor]:
        return {"v": self.v, "W": self.W, "b": self.b}


@dataclass
class ConditionedAttentionParams:
    """Scores v' tanh(W cond + U h_t): W [d_a x d_cond], U [d_a x d_in]."""

    v: Tensor
    W: Tensor
    U: Tensor

    def named(self) -> dict[str, Tensor]:
        return {"v": self.v, "W": self.W, "U": self.U}


@dataclass
class EmbeddingTable:
    """Word embedding matrix [vocab x dim], shared by both document sides."""

    W_e: Tensor

    @property
    def vocab_size(self) -> int:
        return self.W_e.shape[0]

    @property
    def dim(self) -> int:
        return self.W_e.shape[1]


# ---------------------------------------------------------------------------
# LSTM
# ---------------------------------------------------------------------------

_GATE_NAMES = ("input", "forget", "cell", "output")


def lstm_step(
    x: Tensor, h_prev: Tensor, c_prev: Tensor, p: LstmParams
) -> tuple[Tensor, Tensor]:
    """One LSTM cell step.

    ``x`` may be a single vector [d_in] or a batch [n, d_in]; hidden and
    cell states follow the same convention.
    """
    single = x.ndim == 1
    if single:
        x = ad.reshape(x, (1, -1))
        h_prev = ad.reshape(h_prev, (1, -1))
        c_prev = ad.reshape(c_prev, (1, -1))

    cat_dim = x.shape[-1] + h_prev.shape[-1]
    for name, W in zip(_GATE_NAMES, (p.W_i, p.W_f, p.W_C, p.W_o)):
        if W.shape[1] != cat_dim:
            raise ad.DimensionError(
                f"{name} gate weight expects input+hidden {W.shape[1]}, "
                f"got {cat_dim}"
            )
    if h_prev.shape[-1] != p.hidden_size or c_prev.shape[-1] != p.hidden_size:
        raise ad.DimensionError(
            f"state width {h_prev.shape[-1]}/{c_prev.shape[-1]} does not match "
            f"hidden size {p.hidden_size}"
        )

    xh = ad.concat([x, h_prev], axis=-1)
    i = ad.sigmoid(ad.matmul(xh, p.W_i, transpose_b=True) + p.b_i)
    f = ad.sigmoid(ad.matmul(xh, p.W_f, transpose_b=True) + p.b_f)
    c_tilde = ad.tanh(ad.matmul(xh, p.W_C, transpose_b=True) + p.b_C)
    c = f * c_prev + i * c_tilde
    o = ad.sigmoid(ad.matmul(xh, p.W_o, transpose_b=True) + p.b_o)
    h = o * ad.tanh(c)

    if single:
        h = ad.reshape(h, (-1,))
        c = ad.reshape(c, (-1,))
    return h, c


def _fused_step(
    xh: Tensor, c_prev: Tensor, W_all: Tensor, b_all: Tensor, hidden: int
) -> tuple[Tensor, Tensor]:
    # One matmul for all four gates; column slices reproduce the per-gate
    # products exactly (same contraction order per output element).
    z = ad.matmul(xh, W_all, transpose_b=True) + b_all
    i = ad.sigmoid(ad.slice_axis(z, z.ndim - 1, 0, hidden))
    f = ad.sigmoid(ad.slice_axis(z, z.ndim - 1, hidden, 2 * hidden))
    c_tilde = ad.tanh(ad.slice_axis(z, z.ndim - 1, 2 * hidden, 3 * hidden))
    c = f * c_prev + i * c_tilde
    o = ad.sigmoid(ad.slice_axis(z, z.ndim - 1, 3 * hidden, 4 * hidden))
    return o * ad.tanh(c), c


def _directional_pass(
    xs: list[Tensor],
    p: LstmParams,
    mask: np.ndarray | None,
    reverse: bool,
) -> list[Tensor]:
    """One scan direction. Outputs at padded positions are unspecified and
    must be masked downstream; states entering real positions are exact.

    Padding sits at the tail of each row, so the forward scan never leaks
    padded state into real positions and needs no blending. The backward
    scan starts inside the padding and blends until every row is real.
    """
    n = xs[0].shape[0]
    dtype = xs[0].dtype
    hidden = p.hidden_size
    W_all = ad.concat([p.W_i, p.W_f, p.W_C, p.W_o], axis=0)
    b_all = ad.concat([p.b_i, p.b_f, p.b_C, p.b_o], axis=0)
    h = Tensor(np.zeros((n, hidden), dtype=dtype))
    c = Tensor(np.zeros((n, hidden), dtype=dtype))
    order = range(len(xs) - 1, -1, -1) if reverse else range(len(xs))
    out: list[Tensor | None] = [None] * len(xs)
    for t in order:
        xh = ad.concat([xs[t], h], axis=-1)
        h_new, c_new = _fused_step(xh, c, W_all, b_all, hidden)
        if reverse and mask is not None and not mask[:, t].all():
            m = Tensor(mask[:, t].astype(dtype)[:, None])
            h = h + m * (h_new - h)
            c = c + m * (c_new - c)
        else:
            h, c = h_new, c_new
        out[t] = h
    return out  # type: ignore[return-value]


def bilstm_encode(
    xs: Sequence[Tensor],
    fwd: LstmParams,
    bwd: LstmParams,
    mask: np.ndarray | None = None,
) -> list[Tensor]:
    """Encode a sequence with forward and backward LSTM passes.

    ``xs`` is a sequence of per-step tensors ([d_in] or [n, d_in]);
    ``mask`` is an optional [n, len(xs)] boolean of real positions.
    Output t is the concatenation [forward state at t; backward state at t].
    """
    if len(xs) == 0:
        raise EmptyInputError("bilstm_encode needs a non-empty sequence")
    single = xs[0].ndim == 1
    if single:
        xs = [ad.reshape(x, (1, -1)) for x in xs]
    else:
        xs = list(xs)
    forward = _directional_pass(xs, fwd, mask, reverse=False)
    backward = _directional_pass(xs, bwd, mask, reverse=True)
    outs = [ad.concat([f, b], axis=-1) for f, b in zip(forward, backward)]
    if single:
        outs = [ad.reshape(o, (-1,)) for o in outs]
    return outs


# ---------------------------------------------------------------------------
# attention
# ---------------------------------------------------------------------------


def _stacked(hs) -> Tensor:
    if isinstance(hs, Tensor):
        return hs
    if len(hs) == 0:
        raise EmptyInputError("attention needs a non-empty sequence")
    return ad.stack(list(hs), axis=-2)


def _score_to_weights(scores_feat: Tensor, v: Tensor, mask, allow_empty: bool):
    # scores_feat: [..., n, d_a]; v: [d_a] -> logits [..., n]. The product
    # runs as one flat 2-D matvec regardless of leading shape.
    flat = ad.reshape(scores_feat, (-1, scores_feat.shape[-1]))
    logits = ad.reshape(ad.matmul(flat, ad.reshape(v, (-1, 1))),
                        scores_feat.shape[:-1])
    if mask is None:
        mask = np.ones(logits.shape, dtype=bool)
    return ad.softmax_masked(logits, mask, allow_empty_rows=allow_empty)


def self_attention(
    hs,
    mask: np.ndarray | None,
    p: SelfAttentionParams,
    allow_empty: bool = False,
) -> tuple[Tensor, Tensor]:
    """Attention with a learned context vector over a single sequence.

    Scores are v' tanh(W h_t + b); returns (weighted context, weights).
    ``hs`` is a stacked tensor [..., n, d_in] or a sequence of step tensors.
    """
    H = _stacked(hs)
    feat = ad.tanh(ad.matmul(H, p.W, transpose_b=True) + p.b)
    weights = _score_to_weights(feat, p.v, mask, allow_empty)
    context = ad.weighted_sum(weights, H)
    return context, weights


def conditioned_attention(
    hs,
    cond: Tensor,
    mask: np.ndarray | None,
    p: ConditionedAttentionParams,
    allow_empty: bool = False,
) -> tuple[Tensor, Tensor]:
    """Attention scored against a conditioning vector: v' tanh(W c + U h_t).

    ``cond`` broadcasts against the sequence axis of ``hs``; shapes
    [..., d_cond] vs [..., n, d_in].
    """
    H = _stacked(hs)
    if cond.ndim == 1:
        # A lone [d_cond] vector broadcasts over the sequence axis directly.
        wc = ad.matmul(ad.reshape(cond, (1, -1)), p.W, transpose_b=True)
    else:
        wc = ad.matmul(cond, p.W, transpose_b=True)
        wc = ad.reshape(wc, wc.shape[:-1] + (1,) + wc.shape[-1:])
    uh = ad.matmul(H, p.U, transpose_b=True)
    feat = ad.tanh(wc + uh)
    weights = _score_to_weights(feat, p.v, mask, allow_empty)
    context = ad.weighted_sum(weights, H)
    return context, weights


# ---------------------------------------------------------------------------
# pooling and dropout
# ---------------------------------------------------------------------------


def mean_pool(vs, mask: np.ndarray | None = None) -> Tensor:
    """Arithmetic mean over the sequence axis, counting only real positions.

    ``vs`` is a stacked tensor [..., n, d] or a sequence of step tensors;
    ``mask`` is boolean [..., n]. With padding present, the divisor is the
    per-row count of real positions, not the padded length.
    """
    V = _stacked(vs)
    if V.shape[-2] == 0:
        raise EmptyInputError("mean_pool needs a non-empty sequence")
    if mask is None:
        return ad.mean(V, axis=-2)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), V.shape[:-1])
    counts = mask.sum(axis=-1)
    if (counts == 0).any():
        raise EmptyInputError("mean_pool row with no real positions")
    dtype = V.dtype
    weights = Tensor(mask.astype(dtype)[..., None])
    inv = Tensor((1.0 / counts).astype(dtype)[..., None])
    return ad.sum(ad.mul(V, weights), axis=-2) * inv


def dropout(
    x: Tensor,
    keep_prob: float,
    mode: str,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Inverted dropout: zero with probability 1-keep_prob, scale survivors.

    Identity in eval mode and at keep_prob == 1; the rng is only consumed
    when a mask is actually drawn.
    """
    if not 0.0 < keep_prob <= 1.0:
        raise ConfigError(f"keep_prob must be in (0, 1], got {keep_prob}")
    if mode not in ("train", "eval"):
        raise ConfigError(f"dropout mode must be train or eval, got {mode!r}")
    if mode == "eval" or keep_prob == 1.0:
        return x
    if rng is None:
        raise ConfigError("dropout in train mode needs an rng")
    mask = (rng.random(x.shape) < keep_prob).astype(x.dtype) / keep_prob
    return ad.mul(x, Tensor(mask))
