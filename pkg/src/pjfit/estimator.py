"""scikit-learn style estimators wrapping the matching network and the
linear baselines, so everything composes with the wider ecosystem
(get_params/set_params, clone, fit/predict/predict_proba).

``X`` is a sequence of application records: dicts with ``requirements``
and ``experiences`` (lists of pre-segmented strings), optional ``side``,
or :class:`~pjfit.data.Application` objects. ``y`` holds binary labels and
may be omitted when records carry a ``label`` field.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.linear_model import LogisticRegression

from .data import (
    Application,
    Caps,
    Vocabulary,
    build_vocab,
    encode_corpus,
    load_embeddings,
    validate_record,
)
from .errors import ConfigError, ValidationError
from .model import (
    MODEL_KINDS,
    ModelConfig,
    init_model_params,
    predict as model_predict,
    score_batchwise,
)
from .training import TrainConfig, glorot_init, train


def as_applications(X, y=None, require_label: bool = True) -> list[Application]:
    """Validate raw records into Applications, overriding labels with y."""
    apps: list[Application] = []
    for i, item in enumerate(X):
        if isinstance(item, Application):
            app = item
        elif isinstance(item, dict):
            record = dict(item)
            record.setdefault("job_id", f"x{i}")
            record.setdefault("resume_id", f"x{i}")
            if y is not None or not require_label:
                record.setdefault("label", 0)
            app = validate_record(record, where=f"X[{i}]")
        else:
            raise ValidationError(
                f"X[{i}]: expected a dict or Application, got {type(item).__name__}"
            )
        apps.append(app)
    if y is not None:
        y = np.asarray(y)
        if len(y) != len(apps):
            raise ValidationError(f"y length {len(y)} != X length {len(apps)}")
        if y.size and not np.isin(y, (0, 1)).all():
            raise ValidationError("y must be binary 0/1")
        apps = [
            Application(
                a.job_id, a.resume_id, a.requirements, a.experiences,
                int(label), a.side,
            )
            for a, label in zip(apps, y)
        ]
    return apps


class PersonJobFitClassifier(BaseEstimator, ClassifierMixin):
    """Neural posting/resume matcher with a fit/predict interface.

    ``model`` selects the variant: "apjfnn" (hierarchical attention),
    "bpjfnn" (flat BiLSTM + mean pooling), or "apjfnn-side" (adds a
    categorical side feature such as gender to the comparison head).
    """

    def __init__(
        self,
        model: str = "apjfnn",
        embedding_dim: int = 100,
        hidden_size: int = 200,
        attn_dim_self: int = 200,
        attn_dim_cond: int = 400,
        compare_dim: int = 200,
        max_requirements: int = 15,
        max_experiences: int = 15,
        max_requirement_words: int = 30,
        max_experience_words: int = 300,
        min_count: int = 1,
        batch_size: int = 64,
        learning_rate: float = 1e-3,
        epochs: int = 20,
        keep_prob: float = 0.8,
        eval_every: int = 1,
        patience: int = 5,
        validation_fraction: float = 0.1,
        side_values: tuple = ("female", "male"),
        bpjfnn_head: str = "sigmoid",
        embeddings_path: str | None = None,
        seed: int = 0,
    ):
        self.model = model
        self.embedding_dim = embedding_dim
        self.hidden_size = hidden_size
        self.attn_dim_self = attn_dim_self
        self.attn_dim_cond = attn_dim_cond
        self.compare_dim = compare_dim
        self.max_requirements = max_requirements
        self.max_experiences = max_experiences
        self.max_requirement_words = max_requirement_words
        self.max_experience_words = max_experience_words
        self.min_count = min_count
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.keep_prob = keep_prob
        self.eval_every = eval_every
        self.patience = patience
        self.validation_fraction = validation_fraction
        self.side_values = side_values
        self.bpjfnn_head = bpjfnn_head
        self.embeddings_path = embeddings_path
        self.seed = seed

    # ------------------------------------------------------------------
    def _model_config(self, vocab_size: int) -> ModelConfig:
        side = self.model == "apjfnn-side"
        return ModelConfig(
            vocab_size=vocab_size,
            embedding_dim=self.embedding_dim,
            hidden_size=self.hidden_size,
            attn_dim_self=self.attn_dim_self,
            attn_dim_cond=self.attn_dim_cond,
            compare_dim=self.compare_dim,
            side_feature_width=len(self.side_values) if side else 0,
            side_values=tuple(self.side_values) if side else (),
            bpjfnn_head=self.bpjfnn_head,
            max_requirements=self.max_requirements,
            max_experiences=self.max_experiences,
            max_requirement_words=self.max_requirement_words,
            max_experience_words=self.max_experience_words,
        )

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            keep_prob=self.keep_prob,
            seed=self.seed,
            eval_every=self.eval_every,
            patience=self.patience,
        )

    def fit(self, X, y=None, validation_data=None):
        """Train on (X, y); model selection uses ``validation_data`` when
        given, otherwise a seeded validation_fraction carve-out."""
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"model must be one of {MODEL_KINDS}, got {self.model!r}")
        apps = as_applications(X, y)
        if validation_data is not None:
            Xv, yv = validation_data
            val_apps = as_applications(Xv, yv)
            train_apps = apps
        else:
            if not 0.0 < self.validation_fraction < 1.0:
                raise ConfigError(
                    f"validation_fraction must be in (0, 1), got "
                    f"{self.validation_fraction}"
                )
            rng = np.random.default_rng(self.seed)
            order = rng.permutation(len(apps))
            n_val = max(1, int(len(apps) * self.validation_fraction))
            val_apps = [apps[int(i)] for i in order[:n_val]]
            train_apps = [apps[int(i)] for i in order[n_val:]]

        vocab = build_vocab(train_apps, min_count=self.min_count)
        config = self._model_config(len(vocab))
        caps = config.caps()
        train_enc = encode_corpus(train_apps, vocab, caps)
        val_enc = encode_corpus(val_apps, vocab, caps)

        embedding = None
        if self.embeddings_path is not None:
            embedding = load_embeddings(
                self.embeddings_path, vocab, self.embedding_dim,
                np.random.default_rng(self.seed),
            )

        result = train(
            self.model, train_enc, val_enc, config, self._train_config(),
            embedding=embedding,
        )
        self.params_ = result.params
        self.vocab_ = vocab
        self.history_ = result.history
        self.best_val_auc_ = result.best_val_auc
        self.classes_ = np.array([0, 1])
        return self

    def _encode(self, X) -> list:
        if not hasattr(self, "params_"):
            raise ConfigError("estimator is not fitted; call fit first")
        apps = as_applications(X, require_label=False)
        return encode_corpus(apps, self.vocab_, self.params_.config.caps())

    def predict_proba(self, X) -> np.ndarray:
        encoded = self._encode(X)
        scores = score_batchwise(self.params_, encoded, batch_size=self.batch_size)
        return np.column_stack([1.0 - scores, scores])

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)

    def explain(self, x) -> dict:
        """Score one application and return its attention distributions."""
        encoded = self._encode([x])[0]
        out = model_predict(encoded, self.params_, mode="eval")
        trace = out.trace
        return {
            "y_hat": out.y_hat,
            "alpha": [a.tolist() for a in trace.alpha],
            "beta": trace.beta.tolist(),
            "gamma": [g.tolist() for g in trace.gamma],
            "delta": trace.delta.tolist(),
        }


class _TokenFeatureClassifier(BaseEstimator, ClassifierMixin):
    """Shared plumbing for the linear baselines over token features."""

    def __init__(self, min_count: int = 1, C: float = 1.0, max_iter: int = 1000,
                 seed: int = 0):
        self.min_count = min_count
        self.C = C
        self.max_iter = max_iter
        self.seed = seed

    def _features(self, apps: Sequence[Application]) -> np.ndarray:
        raise NotImplementedError

    def _prepare(self, apps: Sequence[Application]) -> None:
        pass

    def fit(self, X, y=None):
        apps = as_applications(X, y)
        self.vocab_ = build_vocab(apps, min_count=self.min_count)
        self._prepare(apps)
        feats = self._features(apps)
        labels = np.array([a.label for a in apps])
        self.lr_ = LogisticRegression(C=self.C, max_iter=self.max_iter)
        self.lr_.fit(feats, labels)
        self.classes_ = self.lr_.classes_
        return self

    def predict_proba(self, X) -> np.ndarray:
        apps = as_applications(X, require_label=False)
        return self.lr_.predict_proba(self._features(apps))

    def predict(self, X) -> np.ndarray:
        apps = as_applications(X, require_label=False)
        return self.lr_.predict(self._features(apps))


class MeanEmbeddingLogistic(_TokenFeatureClassifier):
    """Logistic regression over the spliced mean word vectors of each side.

    Embeddings come from a word2vec-format file when given, otherwise from
    a seeded uniform initialization in the Glorot bound.
    """

    def __init__(self, embedding_dim: int = 100, min_count: int = 1,
                 C: float = 1.0, max_iter: int = 1000, seed: int = 0,
                 embeddings_path: str | None = None):
        super().__init__(min_count=min_count, C=C, max_iter=max_iter, seed=seed)
        self.embedding_dim = embedding_dim
        self.embeddings_path = embeddings_path

    def _prepare(self, apps) -> None:
        rng = np.random.default_rng(self.seed)
        if self.embeddings_path is not None:
            self.embedding_ = load_embeddings(
                self.embeddings_path, self.vocab_, self.embedding_dim, rng
            ).astype(np.float64)
        else:
            self.embedding_ = glorot_init(
                (len(self.vocab_), self.embedding_dim), rng, dtype=np.float64,
                requires_grad=False,
            ).data

    def _features(self, apps) -> np.ndarray:
        feats = np.zeros((len(apps), 2 * self.embedding_dim))
        for i, app in enumerate(apps):
            job_ids = self.vocab_.encode(t for req in app.requirements for t in req)
            res_ids = self.vocab_.encode(t for exp in app.experiences for t in exp)
            feats[i, : self.embedding_dim] = self.embedding_[job_ids].mean(axis=0)
            feats[i, self.embedding_dim :] = self.embedding_[res_ids].mean(axis=0)
        return feats


class BagOfWordsLogistic(_TokenFeatureClassifier):
    """Logistic regression over spliced per-side token count vectors."""

    def _features(self, apps) -> np.ndarray:
        v = len(self.vocab_)
        feats = np.zeros((len(apps), 2 * v))
        for i, app in enumerate(apps):
            for req in app.requirements:
                for idx in self.vocab_.encode(req):
                    feats[i, idx] += 1.0
            for exp in app.experiences:
                for idx in self.vocab_.encode(exp):
                    feats[i, v + idx] += 1.0
        return feats
