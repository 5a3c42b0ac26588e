"""Corpus ingestion, vocabulary, embeddings, truncation, sampling, splits.

The corpus format is UTF-8 JSON lines, one application per line:

    {"job_id": "j1", "resume_id": "r9",
     "requirements": ["know python well", "lead a team"],
     "experiences": ["built services in python"],
     "label": 1, "side": "female"}

Requirement and experience strings are pre-segmented; tokenization is a
plain split on single spaces.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, ValidationError

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_ID = 0
UNK_ID = 1


@dataclass
class Application:
    """One labeled (job posting, resume) pair with token-level text."""

    job_id: str
    resume_id: str
    requirements: list[list[str]]
    experiences: list[list[str]]
    label: int
    side: str | None = None

    def all_tokens(self) -> Iterable[str]:
        for req in self.requirements:
            yield from req
        for exp in self.experiences:
            yield from exp


@dataclass
class EncodedApplication:
    """An application mapped to vocabulary ids and ready for batching."""

    job_id: str
    resume_id: str
    requirements: list[list[int]]
    experiences: list[list[int]]
    label: int
    side: str | None = None


@dataclass
class Caps:
    """Truncation limits for lists and per-list word counts."""

    max_requirements: int = 15
    max_experiences: int = 15
    max_requirement_words: int = 30
    max_experience_words: int = 300

    def validate(self) -> None:
        for name, value in vars(self).items():
            if value < 1:
                raise ConfigError(f"{name} must be positive, got {value}")


@dataclass
class SplitSpec:
    train: float
    val: float
    test: float
    seed: int = 0

    def validate(self) -> None:
        fracs = (self.train, self.val, self.test)
        if any(f <= 0 for f in fracs):
            raise ConfigError(f"split fractions must be positive, got {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {fracs}")


# ---------------------------------------------------------------------------
# corpus loading and validation
# ---------------------------------------------------------------------------


def _tokenize(text: str) -> list[str]:
    return text.split(" ")


def validate_record(record: dict, where: str = "record") -> Application:
    """Build an Application from a raw dict, checking structure and label."""
    if not isinstance(record, dict):
        raise ValidationError(f"{where}: expected an object, got {type(record).__name__}")
    for key in ("job_id", "resume_id", "requirements", "experiences", "label"):
        if key not in record:
            raise ValidationError(f"{where}: missing field {key!r}")
    label = record["label"]
    if label not in (0, 1):
        raise ValidationError(f"{where}: label must be 0 or 1, got {label!r}")

    def _token_lists(items, kind: str) -> list[list[str]]:
        if not isinstance(items, list) or not items:
            raise ValidationError(f"{where}: {kind} must be a non-empty list")
        out = []
        for i, item in enumerate(items):
            if isinstance(item, str):
                tokens = _tokenize(item)
            elif isinstance(item, list):
                tokens = [str(t) for t in item]
            else:
                raise ValidationError(f"{where}: {kind}[{i}] must be text")
            if not tokens or all(t == "" for t in tokens):
                raise ValidationError(f"{where}: {kind}[{i}] is empty")
            out.append([t for t in tokens if t != ""])
        return out

    side = record.get("side")
    return Application(
        job_id=str(record["job_id"]),
        resume_id=str(record["resume_id"]),
        requirements=_token_lists(record["requirements"], "requirements"),
        experiences=_token_lists(record["experiences"], "experiences"),
        label=int(label),
        side=None if side is None else str(side),
    )


def load_corpus(path: str | Path) -> list[Application]:
    """Read a JSONL corpus file; malformed lines report their line number."""
    path = Path(path)
    apps: list[Application] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path} line {lineno}: invalid JSON ({exc})") from exc
            apps.append(validate_record(record, where=f"{path} line {lineno}"))
    return apps


def save_corpus(apps: Sequence[Application], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for app in apps:
            record = {
                "job_id": app.job_id,
                "resume_id": app.resume_id,
                "requirements": [" ".join(req) for req in app.requirements],
                "experiences": [" ".join(exp) for exp in app.experiences],
                "label": app.label,
            }
            if app.side is not None:
                record["side"] = app.side
            fh.write(json.dumps(record, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# vocabulary
# ---------------------------------------------------------------------------


@dataclass
class Vocabulary:
    token_to_id: dict[str, int]
    id_to_token: list[str]
    min_count: int = 1

    def __len__(self) -> int:
        return len(self.id_to_token)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        get = self.token_to_id.get
        return [get(t, UNK_ID) for t in tokens]

    def encode_application(self, app: Application) -> EncodedApplication:
        return EncodedApplication(
            job_id=app.job_id,
            resume_id=app.resume_id,
            requirements=[self.encode(req) for req in app.requirements],
            experiences=[self.encode(exp) for exp in app.experiences],
            label=app.label,
            side=app.side,
        )


def build_vocab(corpus: Sequence[Application], min_count: int = 1) -> Vocabulary:
    """Count tokens and assign ids by (frequency desc, token asc).

    Tokens below ``min_count`` map to the UNK id. Id 0 is PAD, id 1 is UNK.
    """
    if min_count < 1:
        raise ConfigError(f"min_count must be >= 1, got {min_count}")
    counts: dict[str, int] = {}
    for app in corpus:
        for token in app.all_tokens():
            counts[token] = counts.get(token, 0) + 1
    kept = sorted(
        (t for t, c in counts.items() if c >= min_count),
        key=lambda t: (-counts[t], t),
    )
    id_to_token = [PAD_TOKEN, UNK_TOKEN] + kept
    token_to_id = {t: i for i, t in enumerate(id_to_token)}
    return Vocabulary(token_to_id=token_to_id, id_to_token=id_to_token, min_count=min_count)


# ---------------------------------------------------------------------------
# embedding file loading (word2vec text format)
# ---------------------------------------------------------------------------


def load_embeddings(
    path: str | Path,
    vocab: Vocabulary,
    dim: int,
    rng: np.random.Generator,
    dtype=np.float32,
) -> np.ndarray:
    """Load word2vec-text vectors into a [vocab x dim] matrix.

    In-vocabulary rows are copied from the file; rows missing from the file
    are initialized uniformly in the Glorot bound of the full matrix. A
    token repeated in the file keeps its last occurrence with a warning.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValidationError(f"{path} line 1: expected header 'count dim'")
        try:
            file_count, file_dim = int(header[0]), int(header[1])
        except ValueError as exc:
            raise ValidationError(f"{path} line 1: non-numeric header") from exc
        if file_dim != dim:
            raise ConfigError(
                f"embedding dimension mismatch: file has {file_dim}, expected {dim}"
            )
        vectors: dict[str, np.ndarray] = {}
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                raise ValidationError(
                    f"{path} line {lineno}: expected token plus {dim} values, "
                    f"got {len(parts)} fields"
                )
            token = parts[0]
            try:
                vec = np.array([float(v) for v in parts[1:]], dtype=dtype)
            except ValueError as exc:
                raise ValidationError(f"{path} line {lineno}: non-numeric value") from exc
            if token in vectors:
                warnings.warn(
                    f"{path} line {lineno}: token {token!r} repeated; last wins",
                    stacklevel=2,
                )
            vectors[token] = vec
    if len(vectors) != file_count:
        warnings.warn(
            f"{path}: header count {file_count} != {len(vectors)} distinct tokens",
            stacklevel=2,
        )

    bound = float(np.sqrt(6.0 / (len(vocab) + dim)))
    table = rng.uniform(-bound, bound, size=(len(vocab), dim)).astype(dtype)
    for token, vec in vectors.items():
        idx = vocab.token_to_id.get(token)
        if idx is not None:
            table[idx] = vec
    return table


# ---------------------------------------------------------------------------
# truncation
# ---------------------------------------------------------------------------


def truncate_pad(
    app: Application | EncodedApplication, caps: Caps
) -> tuple[Application | EncodedApplication, dict[str, list[list[bool]]]]:
    """Keep the leading lists/words within caps; masks mark real positions.

    Idempotent: an application already within limits comes back unchanged.
    Padding to a common length happens later, at batch assembly.
    """
    caps.validate()
    reqs = [list(r[: caps.max_requirement_words]) for r in app.requirements[: caps.max_requirements]]
    exps = [list(e[: caps.max_experience_words]) for e in app.experiences[: caps.max_experiences]]
    out = replace(app, requirements=reqs, experiences=exps)
    masks = {
        "requirements": [[True] * len(r) for r in reqs],
        "experiences": [[True] * len(e) for e in exps],
    }
    return out, masks


# ---------------------------------------------------------------------------
# sampling, splitting, bias injection
# ---------------------------------------------------------------------------


def undersample(corpus: Sequence[Application], seed: int) -> list[Application]:
    """Per posting keep all positives and min(n+, n-) random negatives.

    Labels are never altered; records are only dropped. Output preserves
    corpus order and is deterministic under the seed.
    """
    rng = np.random.default_rng(seed)
    by_job: dict[str, dict[str, list[int]]] = {}
    for i, app in enumerate(corpus):
        slot = by_job.setdefault(app.job_id, {"pos": [], "neg": []})
        slot["pos" if app.label == 1 else "neg"].append(i)
    keep: set[int] = set()
    for job_id in sorted(by_job):
        slot = by_job[job_id]
        n_keep = min(len(slot["pos"]), len(slot["neg"]))
        keep.update(slot["pos"] if slot["pos"] else [])
        if n_keep and slot["pos"]:
            chosen = rng.choice(len(slot["neg"]), size=n_keep, replace=False)
            keep.update(slot["neg"][int(j)] for j in chosen)
    return [app for i, app in enumerate(corpus) if i in keep]


def split(
    corpus: Sequence[Application], spec: SplitSpec
) -> tuple[list[Application], list[Application], list[Application]]:
    """Disjoint train/val/test cover with sizes within rounding of fractions."""
    spec.validate()
    n = len(corpus)
    order = np.random.default_rng(spec.seed).permutation(n)
    n_train = int(np.floor(n * spec.train))
    n_val = int(np.floor(n * spec.val))
    train_idx = order[:n_train]
    val_idx = order[n_train : n_train + n_val]
    test_idx = order[n_train + n_val :]
    pick = lambda idx: [corpus[int(i)] for i in idx]  # noqa: E731
    return pick(train_idx), pick(val_idx), pick(test_idx)


@dataclass
class FlipRecord:
    index: int
    job_id: str
    resume_id: str
    old_label: int
    new_label: int


@dataclass
class FlipManifest:
    flip_rate: float
    seed: int
    female_value: str
    male_value: str
    female_positives: int
    male_negatives: int
    flips: list[FlipRecord] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "flip_rate": self.flip_rate,
            "seed": self.seed,
            "female_value": self.female_value,
            "male_value": self.male_value,
            "female_positives": self.female_positives,
            "male_negatives": self.male_negatives,
            "flips": [vars(f) for f in self.flips],
        }


def inject_bias(
    corpus: Sequence[Application],
    flip_rate: float,
    seed: int,
    female_value: str = "female",
    male_value: str = "male",
) -> tuple[list[Application], FlipManifest]:
    """Flip floor(rate * count) female positives to 0 and the same share of
    male negatives to 1, uniformly at random under the seed.

    Every record must carry one of the two side values. The input corpus is
    not mutated; only manifest-listed records differ in the returned copy.
    Intended for train and validation data only; never pass a test set in.
    """
    if not 0.0 <= flip_rate <= 1.0:
        raise ConfigError(f"flip_rate must be in [0, 1], got {flip_rate}")
    female_pos: list[int] = []
    male_neg: list[int] = []
    for i, app in enumerate(corpus):
        if app.side is None:
            raise ValidationError(
                f"record {i} ({app.job_id}/{app.resume_id}) has no side feature"
            )
        if app.side not in (female_value, male_value):
            raise ValidationError(
                f"record {i}: side {app.side!r} is neither "
                f"{female_value!r} nor {male_value!r}"
            )
        if app.side == female_value and app.label == 1:
            female_pos.append(i)
        elif app.side == male_value and app.label == 0:
            male_neg.append(i)

    rng = np.random.default_rng(seed)
    n_f = int(np.floor(flip_rate * len(female_pos)))
    n_m = int(np.floor(flip_rate * len(male_neg)))
    flip_f = {female_pos[int(j)] for j in rng.choice(len(female_pos), size=n_f, replace=False)} if n_f else set()
    flip_m = {male_neg[int(j)] for j in rng.choice(len(male_neg), size=n_m, replace=False)} if n_m else set()

    manifest = FlipManifest(
        flip_rate=flip_rate,
        seed=seed,
        female_value=female_value,
        male_value=male_value,
        female_positives=len(female_pos),
        male_negatives=len(male_neg),
    )
    out: list[Application] = []
    for i, app in enumerate(corpus):
        if i in flip_f or i in flip_m:
            new_label = 0 if i in flip_f else 1
            manifest.flips.append(
                FlipRecord(i, app.job_id, app.resume_id, app.label, new_label)
            )
            out.append(replace(app, label=new_label))
        else:
            out.append(app)
    manifest.flips.sort(key=lambda f: f.index)
    return out, manifest


# ---------------------------------------------------------------------------
# preprocessing convenience
# ---------------------------------------------------------------------------


def encode_corpus(
    corpus: Sequence[Application], vocab: Vocabulary, caps: Caps
) -> list[EncodedApplication]:
    """Truncate then map to vocabulary ids, ready for batching."""
    out = []
    for app in corpus:
        truncated, _ = truncate_pad(app, caps)
        out.append(vocab.encode_application(truncated))
    return out
