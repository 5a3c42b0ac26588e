"""The hierarchical attention matching network and its flat baseline.

Two document sides are encoded with BiLSTMs over a shared embedding. The
full model builds per-requirement representations with word attention,
summarizes the posting with requirement attention, scores every resume
word against every requirement, and pools conditioned experience
representations into a final pair of vectors compared by a dense head.
The basic variant flattens each side into one word sequence and mean-pools
it. Forward passes optionally record every attention distribution.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import Caps, EncodedApplication
from .errors import ConfigError
from .layers import (
    BiLstmParams,
    ConditionedAttentionParams,
    EmbeddingTable,
    LstmParams,
    SelfAttentionParams,
    bilstm_encode,
    conditioned_attention,
    dropout,
    mean_pool,
    self_attention,
)

MODEL_KINDS = ("apjfnn", "bpjfnn", "apjfnn-side")


@dataclass
class ModelConfig:
    """Dimensions, caps, and head options; every width is configurable."""

    vocab_size: int
    embedding_dim: int = 100
    hidden_size: int = 200          # per direction; BiLSTM output is twice this
    attn_dim_self: int = 200        # word- and requirement-level attention
    attn_dim_cond: int = 400        # conditioned attention
    compare_dim: int = 200          # width of the comparison vector
    side_feature_width: int = 0     # 0 disables the side input
    side_values: tuple[str, ...] = ()
    bpjfnn_head: str = "sigmoid"    # or "softmax2"
    max_requirements: int = 15
    max_experiences: int = 15
    max_requirement_words: int = 30
    max_experience_words: int = 300

    def validate(self) -> None:
        for name in (
            "vocab_size", "embedding_dim", "hidden_size",
            "attn_dim_self", "attn_dim_cond", "compare_dim",
        ):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.bpjfnn_head not in ("sigmoid", "softmax2"):
            raise ConfigError(f"unknown bpjfnn_head {self.bpjfnn_head!r}")
        if self.side_feature_width and len(self.side_values) != self.side_feature_width:
            raise ConfigError(
                f"side_values must list {self.side_feature_width} categories"
            )
        self.caps().validate()

    def caps(self) -> Caps:
        return Caps(
            max_requirements=self.max_requirements,
            max_experiences=self.max_experiences,
            max_requirement_words=self.max_requirement_words,
            max_experience_words=self.max_experience_words,
        )

    def to_dict(self) -> dict:
        d = dict(vars(self))
        d["side_values"] = list(self.side_values)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["side_values"] = tuple(d.get("side_values", ()))
        return cls(**d)


@dataclass
class HeadParams:
    W_d: Tensor
    b_d: Tensor
    W_y: Tensor
    b_y: Tensor

    def named(self) -> dict[str, Tensor]:
        return {"W_d": self.W_d, "b_d": self.b_d, "W_y": self.W_y, "b_y": self.b_y}


@dataclass
class ModelParams:
    """Every learnable tensor of one model instance.

    The two word-level encoders are separate; only the embedding matrix is
    shared between the posting and resume sides. Level-two encoders and the
    attention parameters exist only for the hierarchical variants.
    """

    kind: str
    config: ModelConfig
    embedding: EmbeddingTable
    word_bilstm_j: BiLstmParams
    word_bilstm_r: BiLstmParams
    head: HeadParams
    ability_bilstm: BiLstmParams | None = None
    experience_bilstm: BiLstmParams | None = None
    attn_alpha: SelfAttentionParams | None = None
    attn_beta: SelfAttentionParams | None = None
    attn_gamma: ConditionedAttentionParams | None = None
    attn_delta: ConditionedAttentionParams | None = None

    @property
    def dtype(self):
        return self.embedding.W_e.dtype

    def named_parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {"embedding.W_e": self.embedding.W_e}
        groups: list[tuple[str, object]] = [
            ("word_bilstm_j", self.word_bilstm_j),
            ("word_bilstm_r", self.word_bilstm_r),
            ("ability_bilstm", self.ability_bilstm),
            ("experience_bilstm", self.experience_bilstm),
            ("attn_alpha", self.attn_alpha),
            ("attn_beta", self.attn_beta),
            ("attn_gamma", self.attn_gamma),
            ("attn_delta", self.attn_delta),
            ("head", self.head),
        ]
        for prefix, group in groups:
            if group is None:
                continue
            for name, tensor in group.named().items():
                out[f"{prefix}.{name}"] = tensor
        return out

    def zero_grad(self) -> None:
        for t in self.named_parameters().values():
            t.zero_grad()

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_parameters().items()}

    def load_snapshot(self, snap: dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        for k, v in snap.items():
            params[k].data = v.copy()


def _init_lstm(input_dim: int, hidden: int, init) -> LstmParams:
    return LstmParams(
        W_i=init((hidden, input_dim + hidden)),
        W_f=init((hidden, input_dim + hidden)),
        W_C=init((hidden, input_dim + hidden)),
        W_o=init((hidden, input_dim + hidden)),
        b_i=init((hidden,)),
        b_f=init((hidden,)),
        b_C=init((hidden,)),
        b_o=init((hidden,)),
    )


def _init_bilstm(input_dim: int, hidden: int, init) -> BiLstmParams:
    return BiLstmParams(
        fwd=_init_lstm(input_dim, hidden, init),
        bwd=_init_lstm(input_dim, hidden, init),
    )


def init_model_params(
    kind: str,
    config: ModelConfig,
    rng: np.random.Generator,
    dtype=np.float32,
    embedding: np.ndarray | None = None,
) -> ModelParams:
    """Initialize all parameters uniformly within the Glorot bound.

    ``embedding`` optionally supplies a pre-trained [vocab x dim] matrix;
    it is fine-tuned like any other parameter.
    """
    from .training import glorot_init  # deferred: training sits above this module

    if kind not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind {kind!r}; choose from {MODEL_KINDS}")
    config.validate()
    if kind == "apjfnn-side" and config.side_feature_width == 0:
        raise ConfigError("apjfnn-side needs side_feature_width > 0")
    if kind != "apjfnn-side" and config.side_feature_width != 0:
        raise ConfigError(f"{kind} does not take a side feature")

    def init(shape):
        return glorot_init(shape, rng, dtype=dtype)

    if embedding is not None:
        emb = np.asarray(embedding, dtype=dtype)
        if emb.shape != (config.vocab_size, config.embedding_dim):
            raise ConfigError(
                f"embedding shape {emb.shape} does not match "
                f"({config.vocab_size}, {config.embedding_dim})"
            )
        embedding_t = Tensor(emb, requires_grad=True)
    else:
        embedding_t = init((config.vocab_size, config.embedding_dim))

    two_h = 2 * config.hidden_size
    compare_in = 3 * two_h + (config.side_feature_width if kind == "apjfnn-side" else 0)
    head_out = 2 if (kind == "bpjfnn" and config.bpjfnn_head == "softmax2") else 1
    head = HeadParams(
        W_d=init((config.compare_dim, compare_in)),
        b_d=init((config.compare_dim,)),
        W_y=init((head_out, config.compare_dim)),
        b_y=init((head_out,)),
    )

    params = ModelParams(
        kind=kind,
        config=config,
        embedding=EmbeddingTable(W_e=embedding_t),
        word_bilstm_j=_init_bilstm(config.embedding_dim, config.hidden_size, init),
        word_bilstm_r=_init_bilstm(config.embedding_dim, config.hidden_size, init),
        head=head,
    )
    if kind != "bpjfnn":
        params.ability_bilstm = _init_bilstm(two_h, config.hidden_size, init)
        params.experience_bilstm = _init_bilstm(two_h, config.hidden_size, init)
        params.attn_alpha = SelfAttentionParams(
            v=init((config.attn_dim_self,)),
            W=init((config.attn_dim_self, two_h)),
            b=init((config.attn_dim_self,)),
        )
        params.attn_beta = SelfAttentionParams(
            v=init((config.attn_dim_self,)),
            W=init((config.attn_dim_self, two_h)),
            b=init((config.attn_dim_self,)),
        )
        params.attn_gamma = ConditionedAttentionParams(
            v=init((config.attn_dim_cond,)),
            W=init((config.attn_dim_cond, two_h)),
            U=init((config.attn_dim_cond, two_h)),
        )
        params.attn_delta = ConditionedAttentionParams(
            v=init((config.attn_dim_cond,)),
            W=init((config.attn_dim_cond, two_h)),
            U=init((config.attn_dim_cond, two_h)),
        )
    return params


# ---------------------------------------------------------------------------
# batching
# ---------------------------------------------------------------------------


@dataclass
class Batch:
    """Applications padded to per-batch maxima with real-position masks."""

    req_ids: np.ndarray        # [B, P, M] int32, PAD = 0
    req_word_mask: np.ndarray  # [B, P, M] bool
    req_mask: np.ndarray       # [B, P] bool
    exp_ids: np.ndarray        # [B, Q, N]
    exp_word_mask: np.ndarray  # [B, Q, N]
    exp_mask: np.ndarray       # [B, Q]
    labels: np.ndarray         # [B] float
    side: np.ndarray | None = None          # [B, side_width] float
    flat_job_ids: np.ndarray | None = None  # [B, Lj] for the flat variant
    flat_job_mask: np.ndarray | None = None
    flat_res_ids: np.ndarray | None = None
    flat_res_mask: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.req_ids.shape[0]


def _pad_nested(docs: list[list[list[int]]]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = len(docs)
    p = max(len(d) for d in docs)
    m = max(max(len(item) for item in d) for d in docs)
    ids = np.zeros((n, p, m), dtype=np.int32)
    word_mask = np.zeros((n, p, m), dtype=bool)
    list_mask = np.zeros((n, p), dtype=bool)
    for b, doc in enumerate(docs):
        for l, item in enumerate(doc):
            ids[b, l, : len(item)] = item
            word_mask[b, l, : len(item)] = True
            list_mask[b, l] = True
    return ids, word_mask, list_mask


def _pad_flat(docs: list[list[int]]) -> tuple[np.ndarray, np.ndarray]:
    n = len(docs)
    m = max(len(d) for d in docs)
    ids = np.zeros((n, m), dtype=np.int32)
    mask = np.zeros((n, m), dtype=bool)
    for b, doc in enumerate(docs):
        ids[b, : len(doc)] = doc
        mask[b, : len(doc)] = True
    return ids, mask


def encode_side(value: str | None, config: ModelConfig) -> np.ndarray:
    if value is None:
        raise ConfigError("model is configured with a side feature but the "
                          "application carries none")
    if value not in config.side_values:
        raise ConfigError(
            f"side value {value!r} not among configured {config.side_values}"
        )
    vec = np.zeros(config.side_feature_width, dtype=np.float64)
    vec[config.side_values.index(value)] = 1.0
    return vec


def make_batch(
    apps: Sequence[EncodedApplication],
    config: ModelConfig,
    kind: str,
    dtype=np.float32,
) -> Batch:
    """Assemble padded id arrays and masks for one batch of applications."""
    if not apps:
        raise ConfigError("empty batch")
    for app in apps:
        if not app.requirements or any(len(r) == 0 for r in app.requirements):
            raise ConfigError(f"{app.job_id}: empty posting or requirement")
        if not app.experiences or any(len(e) == 0 for e in app.experiences):
            raise ConfigError(f"{app.resume_id}: empty resume or experience")

    req_ids, req_word_mask, req_mask = _pad_nested([a.requirements for a in apps])
    exp_ids, exp_word_mask, exp_mask = _pad_nested([a.experiences for a in apps])
    labels = np.array([a.label for a in apps], dtype=dtype)
    side = None
    if kind == "apjfnn-side":
        side = np.stack([encode_side(a.side, config) for a in apps]).astype(dtype)
    batch = Batch(
        req_ids=req_ids, req_word_mask=req_word_mask, req_mask=req_mask,
        exp_ids=exp_ids, exp_word_mask=exp_word_mask, exp_mask=exp_mask,
        labels=labels, side=side,
    )
    if kind == "bpjfnn":
        flat_job = [[t for req in a.requirements for t in req] for a in apps]
        flat_res = [[t for exp in a.experiences for t in exp] for a in apps]
        batch.flat_job_ids, batch.flat_job_mask = _pad_flat(flat_job)
        batch.flat_res_ids, batch.flat_res_mask = _pad_flat(flat_res)
    return batch


# ---------------------------------------------------------------------------
# forward passes
# ---------------------------------------------------------------------------


@dataclass
class AttentionTrace:
    """Recorded attention distributions of one application's forward pass.

    alpha[l] weighs the words of requirement l; beta weighs requirements;
    gamma[l][k] weighs the words of experience l against requirement k;
    delta weighs experiences.
    """

    alpha: list[np.ndarray]
    beta: np.ndarray
    gamma: list[np.ndarray]
    delta: np.ndarray

    def distributions(self):
        for a in self.alpha:
            yield "alpha", a
        yield "beta", self.beta
        for g in self.gamma:
            for row in g:
                yield "gamma", row
        yield "delta", self.delta


@dataclass
class PredictionOutput:
    y_hat: float
    D: np.ndarray
    g_j: np.ndarray
    g_r: np.ndarray
    trace: AttentionTrace | None


@dataclass
class BatchOutput:
    y_hat: Tensor               # [B]
    D: Tensor                   # [B, compare_dim]
    g_j: Tensor
    g_r: Tensor
    traces: list[AttentionTrace] | None = None


def _encode_word_level(
    params: ModelParams,
    bilstm: BiLstmParams,
    ids: np.ndarray,
    word_mask: np.ndarray,
    mode: str,
    keep_prob: float,
    rng,
) -> Tensor:
    """Embed and BiLSTM-encode [N, T] token ids into [N, T, 2H]."""
    steps = []
    for t in range(ids.shape[1]):
        emb = ad.embedding_lookup(params.embedding.W_e, ids[:, t])
        emb = dropout(emb, keep_prob, mode, rng)
        steps.append(emb)
    hs = bilstm_encode(steps, bilstm.fwd, bilstm.bwd, mask=word_mask)
    return ad.stack(hs, axis=1)


def encode_job(
    params: ModelParams,
    batch: Batch,
    mode: str,
    keep_prob: float,
    rng=None,
) -> tuple[Tensor, Tensor, np.ndarray, np.ndarray]:
    """Posting side: word attention per requirement, then requirement
    attention over a second BiLSTM.

    Returns (g_j [B, 2H], s_j [B, P, 2H], alpha [B, P, M], beta [B, P]).
    """
    B, P, M = batch.req_ids.shape
    flat_ids = batch.req_ids.reshape(B * P, M)
    flat_mask = batch.req_word_mask.reshape(B * P, M)
    H_w = _encode_word_level(
        params, params.word_bilstm_j, flat_ids, flat_mask, mode, keep_prob, rng
    )
    s_flat, alpha_flat = self_attention(
        H_w, flat_mask, params.attn_alpha, allow_empty=True
    )
    two_h = 2 * params.config.hidden_size
    s_j = ad.reshape(s_flat, (B, P, two_h))
    alpha = alpha_flat.data.reshape(B, P, M)

    steps = [ad.index_axis(s_j, 1, t) for t in range(P)]
    cs = bilstm_encode(
        steps, params.ability_bilstm.fwd, params.ability_bilstm.bwd, mask=batch.req_mask
    )
    C = ad.stack(cs, axis=1)
    g_j, beta = self_attention(C, batch.req_mask, params.attn_beta)
    return g_j, s_j, alpha, beta.data


def encode_resume(
    params: ModelParams,
    batch: Batch,
    s_j: Tensor,
    g_j: Tensor,
    mode: str,
    keep_prob: float,
    rng=None,
) -> tuple[Tensor, np.ndarray, np.ndarray]:
    """Resume side: word encoding, requirement-conditioned word attention,
    mean pooling over requirements, experience BiLSTM, posting-conditioned
    experience attention.

    Returns (g_r [B, 2H], gamma [B, Q, P, N], delta [B, Q]).
    """
    B, Q, N = batch.exp_ids.shape
    P = batch.req_ids.shape[1]
    two_h = 2 * params.config.hidden_size
    dtype = params.dtype

    flat_ids = batch.exp_ids.reshape(B * Q, N)
    flat_mask = batch.exp_word_mask.reshape(B * Q, N)
    H_flat = _encode_word_level(
        params, params.word_bilstm_r, flat_ids, flat_mask, mode, keep_prob, rng
    )
    H_r = ad.reshape(H_flat, (B, Q, N, two_h))

    ga = params.attn_gamma
    attn_dim = ga.W.shape[0]
    wc = ad.matmul(s_j, ga.W, transpose_b=True)          # [B, P, A]
    wc = ad.reshape(wc, (B, 1, P, 1, attn_dim))
    uh = ad.matmul(H_r, ga.U, transpose_b=True)          # [B, Q, N, A]
    uh = ad.reshape(uh, (B, Q, 1, N, attn_dim))
    feat = ad.tanh(wc + uh)                              # [B, Q, P, N, A]
    logits = ad.reshape(
        ad.matmul(ad.reshape(feat, (-1, attn_dim)), ad.reshape(ga.v, (-1, 1))),
        (B, Q, P, N),
    )
    word_mask = np.broadcast_to(batch.exp_word_mask[:, :, None, :], (B, Q, P, N))
    gamma = ad.softmax_masked(logits, word_mask, allow_empty_rows=True)
    s_r = ad.matmul(gamma, H_r)  # contract words: [B, Q, P, 2H]

    # Mean over the per-sample real requirement count, not the padded count.
    u = mean_pool(s_r, mask=np.broadcast_to(batch.req_mask[:, None, :], (B, Q, P)))

    steps = [ad.index_axis(u, 1, t) for t in range(Q)]
    cs = bilstm_encode(
        steps,
        params.experience_bilstm.fwd,
        params.experience_bilstm.bwd,
        mask=batch.exp_mask,
    )
    C_r = ad.stack(cs, axis=1)
    g_r, delta = conditioned_attention(C_r, g_j, batch.exp_mask, params.attn_delta)
    return g_r, gamma.data, delta.data


def _prediction_head(
    params: ModelParams,
    g_j: Tensor,
    g_r: Tensor,
    side: np.ndarray | None,
    mode: str,
    keep_prob: float,
    rng=None,
) -> tuple[Tensor, Tensor]:
    """Comparison head: D = tanh(W_d [g_j; g_r; g_j - g_r] + b_d), then a
    sigmoid (or two-way softmax) readout. A side vector, when configured,
    is prepended to the concatenation."""
    parts = [g_j, g_r, ad.sub(g_j, g_r)]
    if params.config.side_feature_width:
        if side is None:
            raise ConfigError("model is configured with a side feature; none supplied")
        parts.insert(0, Tensor(np.asarray(side, dtype=params.dtype)))
    elif side is not None:
        raise ConfigError("side feature supplied to a model configured without one")
    d_in = ad.concat(parts, axis=-1)
    D = ad.tanh(ad.matmul(d_in, params.head.W_d, transpose_b=True) + params.head.b_d)
    D = dropout(D, keep_prob, mode, rng)
    logits = ad.matmul(D, params.head.W_y, transpose_b=True) + params.head.b_y
    if logits.shape[-1] == 2:
        probs = ad.softmax_masked(logits, np.ones(logits.shape, dtype=bool))
        y = ad.index_axis(probs, logits.ndim - 1, 1)
    else:
        y = ad.reshape(ad.sigmoid(logits), logits.shape[:-1])
    return y, D


def _extract_traces(batch: Batch, alpha, beta, gamma, delta) -> list[AttentionTrace]:
    traces = []
    for b in range(batch.size):
        p = int(batch.req_mask[b].sum())
        q = int(batch.exp_mask[b].sum())
        req_lens = batch.req_word_mask[b].sum(axis=1)
        exp_lens = batch.exp_word_mask[b].sum(axis=1)
        traces.append(
            AttentionTrace(
                alpha=[alpha[b, l, : req_lens[l]].astype(np.float64) for l in range(p)],
                beta=beta[b, :p].astype(np.float64),
                gamma=[
                    gamma[b, l, :p, : exp_lens[l]].astype(np.float64)
                    for l in range(q)
                ],
                delta=delta[b, :q].astype(np.float64),
            )
        )
    return traces


def forward_batch(
    params: ModelParams,
    batch: Batch,
    mode: str = "eval",
    keep_prob: float = 1.0,
    rng=None,
    record_trace: bool | None = None,
) -> BatchOutput:
    """Run one batch through the configured model variant.

    Trace recording defaults to on in eval mode and off in training.
    """
    if mode not in ("train", "eval"):
        raise ConfigError(f"mode must be train or eval, got {mode!r}")
    if record_trace is None:
        record_trace = mode == "eval"
    if params.kind == "bpjfnn":
        return _forward_batch_flat(params, batch, mode, keep_prob, rng)
    if batch.side is not None and not params.config.side_feature_width:
        raise ConfigError("side feature supplied to a model configured without one")

    g_j, s_j, alpha, beta = encode_job(params, batch, mode, keep_prob, rng)
    g_r, gamma, delta = encode_resume(params, batch, s_j, g_j, mode, keep_prob, rng)
    y, D = _prediction_head(params, g_j, g_r, batch.side, mode, keep_prob, rng)
    traces = _extract_traces(batch, alpha, beta, gamma, delta) if record_trace else None
    return BatchOutput(y_hat=y, D=D, g_j=g_j, g_r=g_r, traces=traces)


def _forward_batch_flat(
    params: ModelParams, batch: Batch, mode: str, keep_prob: float, rng
) -> BatchOutput:
    if batch.flat_job_ids is None:
        raise ConfigError("batch was not assembled for the flat model")
    if batch.side is not None:
        raise ConfigError("side feature supplied to a model configured without one")
    H_j = _encode_word_level(
        params, params.word_bilstm_j, batch.flat_job_ids, batch.flat_job_mask,
        mode, keep_prob, rng,
    )
    s_j = mean_pool(H_j, mask=batch.flat_job_mask)
    H_r = _encode_word_level(
        params, params.word_bilstm_r, batch.flat_res_ids, batch.flat_res_mask,
        mode, keep_prob, rng,
    )
    s_r = mean_pool(H_r, mask=batch.flat_res_mask)
    y, D = _prediction_head(params, s_j, s_r, None, mode, keep_prob, rng)
    return BatchOutput(y_hat=y, D=D, g_j=s_j, g_r=s_r, traces=None)


def predict(
    app: EncodedApplication,
    params: ModelParams,
    mode: str = "eval",
    keep_prob: float = 1.0,
    rng=None,
) -> PredictionOutput:
    """Score a single application; the trace is always recorded in eval."""
    batch = make_batch([app], params.config, params.kind, dtype=params.dtype)
    out = forward_batch(params, batch, mode=mode, keep_prob=keep_prob, rng=rng)
    return PredictionOutput(
        y_hat=float(out.y_hat.data[0]),
        D=out.D.data[0].copy(),
        g_j=out.g_j.data[0].copy(),
        g_r=out.g_r.data[0].copy(),
        trace=out.traces[0] if out.traces else None,
    )


def score_batchwise(
    params: ModelParams,
    apps: Sequence[EncodedApplication],
    batch_size: int = 64,
) -> np.ndarray:
    """Eval-mode probabilities for a dataset, without recording graphs."""
    scores = np.empty(len(apps), dtype=np.float64)
    with ad.no_grad():
        for start in range(0, len(apps), batch_size):
            chunk = apps[start : start + batch_size]
            batch = make_batch(chunk, params.config, params.kind, dtype=params.dtype)
            out = forward_batch(params, batch, mode="eval", record_trace=False)
            scores[start : start + len(chunk)] = out.y_hat.data
    return scores
