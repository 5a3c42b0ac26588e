"""Seeded synthetic job/resume corpora with planted skill structure.

Each posting asks for a fixed set of skill tokens, one per requirement,
buried in filler words. Applicants are a mixture of strong and weak
matches: each covers every requested skill independently with the
per-class probability, and distractor skills (drawn off-posting) top the
mention count up to a constant, so the raw number of skill tokens on a
resume carries no label signal - only posting-conditioned matching does.
The label is 1 when coverage reaches a threshold fraction of the posting's
skills, then flipped with a small noise rate. A ground-truth manifest
records the planted skills and positions so learning and attention
localization can be checked against construction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import binom

from .data import Application, save_corpus
from .errors import ConfigError


@dataclass
class GeneratorConfig:
    num_postings: int = 200
    applications_per_posting: int = 40
    skill_vocab_size: int = 50
    skills_per_posting: int = 6
    filler_vocab_size: int = 100
    words_per_requirement: int = 9
    words_per_experience: int = 66
    experiences_per_resume: int = 4
    extra_distractors: int = 0     # beyond the constant-total top-up
    cover_prob_strong: float = 0.85
    cover_prob_weak: float = 0.15
    weak_prob: float = 0.5         # fraction of weak applicants
    match_threshold: float = 0.5   # required covered fraction of posting skills
    noise_rate: float = 0.05
    female_prob: float = 0.5
    seed: int = 7

    def validate(self) -> None:
        counts = (
            "num_postings", "applications_per_posting", "skill_vocab_size",
            "skills_per_posting", "filler_vocab_size", "words_per_requirement",
            "words_per_experience", "experiences_per_resume",
        )
        for name in counts:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.skills_per_posting > self.skill_vocab_size:
            raise ConfigError(
                f"skills_per_posting {self.skills_per_posting} exceeds the "
                f"skill universe {self.skill_vocab_size}"
            )
        if not 0.0 < self.match_threshold <= 1.0:
            raise ConfigError("match_threshold must be in (0, 1]")
        for name in ("cover_prob_strong", "cover_prob_weak", "weak_prob",
                     "noise_rate", "female_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be a probability")
        if self.extra_distractors < 0:
            raise ConfigError("extra_distractors must be >= 0")

    @property
    def required_covered(self) -> int:
        return math.ceil(self.match_threshold * self.skills_per_posting - 1e-9)


def skill_token(i: int) -> str:
    return f"skill{i:03d}"


def filler_token(i: int) -> str:
    return f"w{i:03d}"


def expected_positive_rate(config: GeneratorConfig) -> float:
    """Analytic positive rate of the generator, noise included.

    Coverage of the k posting skills is Binomial(k, class cover prob) under
    the strong/weak applicant mixture; the clean label is 1 when coverage
    reaches the threshold; noise then flips each label independently.
    """
    k = config.skills_per_posting
    need = config.required_covered
    tail_strong = float(binom.sf(need - 1, k, config.cover_prob_strong))
    tail_weak = float(binom.sf(need - 1, k, config.cover_prob_weak))
    p_clean = (1.0 - config.weak_prob) * tail_strong + config.weak_prob * tail_weak
    nu = config.noise_rate
    return p_clean * (1.0 - nu) + (1.0 - p_clean) * nu


def _make_requirement(skill: str, length: int, rng, fillers) -> list[str]:
    tokens = [fillers[int(i)] for i in rng.integers(0, len(fillers), size=length - 1)]
    tokens.insert(int(rng.integers(0, length)), skill)
    return tokens


def generate(
    config: GeneratorConfig,
    corpus_path: str | Path,
    truth_path: str | Path,
) -> dict:
    """Write the corpus and its ground-truth manifest; return summary counts.

    Identical configs (seed included) produce byte-identical files.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    skills = [skill_token(i) for i in range(config.skill_vocab_size)]
    fillers = [filler_token(i) for i in range(config.filler_vocab_size)]

    apps: list[Application] = []
    truth_lines: list[dict] = [
        {
            "type": "meta",
            "config": vars(config),
            "skills": skills,
            "required_covered": config.required_covered,
        }
    ]
    n_positive = 0

    for j in range(config.num_postings):
        job_id = f"job{j:04d}"
        posting_skills = [
            skills[int(i)]
            for i in rng.choice(config.skill_vocab_size,
                                size=config.skills_per_posting, replace=False)
        ]
        requirements = []
        for skill in posting_skills:
            length = int(rng.integers(max(3, config.words_per_requirement - 2),
                                      config.words_per_requirement + 3))
            requirements.append(_make_requirement(skill, length, rng, fillers))
        truth_lines.append(
            {"type": "posting", "job_id": job_id, "skills": posting_skills}
        )

        for a in range(config.applications_per_posting):
            resume_id = f"res{j:04d}_{a:03d}"
            weak = rng.random() < config.weak_prob
            cover_prob = (config.cover_prob_weak if weak
                          else config.cover_prob_strong)
            covered = [s for s in posting_skills if rng.random() < cover_prob]
            label_clean = int(len(covered) >= config.required_covered)
            label = label_clean
            if rng.random() < config.noise_rate:
                label = 1 - label

            n_exp = int(rng.integers(max(1, config.experiences_per_resume - 1),
                                     config.experiences_per_resume + 2))
            experiences = []
            for _ in range(n_exp):
                length = int(rng.integers(max(5, config.words_per_experience - 8),
                                          config.words_per_experience + 9))
                experiences.append(
                    [fillers[int(i)] for i in rng.integers(0, len(fillers), size=length)]
                )
            # Distractors top the skill-mention count up to a constant, so
            # the count itself carries no label signal.
            off_posting = [s for s in skills if s not in posting_skills]
            n_distract = min(
                max(0, config.skills_per_posting - len(covered))
                + config.extra_distractors,
                len(off_posting),
            )
            distractors = [
                off_posting[int(i)]
                for i in rng.choice(len(off_posting), size=n_distract, replace=False)
            ] if n_distract else []
            for token in covered + distractors:
                e = int(rng.integers(0, n_exp))
                pos = int(rng.integers(0, len(experiences[e]) + 1))
                experiences[e].insert(pos, token)

            gender = "female" if rng.random() < config.female_prob else "male"
            apps.append(
                Application(
                    job_id=job_id,
                    resume_id=resume_id,
                    requirements=requirements,
                    experiences=experiences,
                    label=label,
                    side=gender,
                )
            )
            n_positive += label

            locations = {
                skill: [
                    [e, i]
                    for e, exp in enumerate(experiences)
                    for i, tok in enumerate(exp)
                    if tok == skill
                ]
                for skill in covered
            }
            truth_lines.append(
                {
                    "type": "application",
                    "job_id": job_id,
                    "resume_id": resume_id,
                    "strength": "weak" if weak else "strong",
                    "covered": covered,
                    "distractors": distractors,
                    "label_clean": label_clean,
                    "label": label,
                    "skill_locations": locations,
                }
            )

    save_corpus(apps, corpus_path)
    with Path(truth_path).open("w", encoding="utf-8") as fh:
        for line in truth_lines:
            fh.write(json.dumps(line, sort_keys=True) + "\n")
    return {
        "applications": len(apps),
        "positives": n_positive,
        "positive_rate": n_positive / len(apps),
        "expected_positive_rate": expected_positive_rate(config),
    }


def load_truth(truth_path: str | Path) -> dict:
    """Parse a manifest back into {meta, postings, applications}."""
    meta = None
    postings: dict[str, dict] = {}
    applications: list[dict] = []
    with Path(truth_path).open("r", encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            if rec["type"] == "meta":
                meta = rec
            elif rec["type"] == "posting":
                postings[rec["job_id"]] = rec
            else:
                applications.append(rec)
    return {"meta": meta, "postings": postings, "applications": applications}
