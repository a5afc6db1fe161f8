"""Evaluation metrics: smoothed BLEU-4, exact match and binary classification scores."""

from __future__ import annotations

import json
import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import LengthMismatch

_BLEU_TOKEN_RE = re.compile(r"\w+|[^\w\s]")
OVERALL = "overall"


def bleu_tokens(text: str) -> list[str]:
    """Split punctuation off words, then split on whitespace."""
    return _BLEU_TOKEN_RE.findall(text)


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def smoothed_bleu4(hypothesis: str, reference: str) -> float:
    """Sentence BLEU-4 in [0, 100] with add-one smoothing on orders 2-4.

    Unigram precision is left unsmoothed, so a hypothesis sharing no token with
    the reference scores 0.
    """
    hyp = bleu_tokens(hypothesis)
    ref = bleu_tokens(reference)
    if not hyp:
        return 0.0
    log_sum = 0.0
    for n in range(1, 5):
        h_counts = _ngrams(hyp, n)
        r_counts = _ngrams(ref, n)
        matched = sum(min(c, r_counts[g]) for g, c in h_counts.items())
        total = sum(h_counts.values())
        if n == 1:
            if matched == 0:
                return 0.0
            log_sum += math.log(matched / total)
        else:
            log_sum += math.log((matched + 1) / (total + 1))
    bp = 1.0 if len(hyp) >= len(ref) else math.exp(1 - len(ref) / len(hyp))
    return 100.0 * bp * math.exp(log_sum / 4)


def _collapse(text: str) -> str:
    return " ".join(text.split())


def exact_match(hypothesis: str, reference: str) -> bool:
    """Case-sensitive equality after collapsing whitespace runs."""
    return _collapse(hypothesis) == _collapse(reference)


@dataclass
class MetricReport:
    """Per-language metric values plus their unweighted mean under ``overall``."""

    values: dict[str, dict[str, float]]
    degenerate: list[str] = field(default_factory=list)

    @property
    def overall(self) -> dict[str, float]:
        return self.values[OVERALL]

    def to_dict(self) -> dict:
        out: dict = {k: dict(v) for k, v in self.values.items()}
        if self.degenerate:
            out["degenerate"] = list(self.degenerate)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"


def _macro(per_language: dict[str, dict[str, float]]) -> dict[str, float]:
    names = next(iter(per_language.values())).keys()
    return {m: sum(v[m] for v in per_language.values()) / len(per_language) for m in names}


def _group(n: int, languages: Sequence[str] | None) -> dict[str, list[int]]:
    if languages is None:
        return {"all": list(range(n))}
    if len(languages) != n:
        raise LengthMismatch(f"{len(languages)} languages for {n} examples")
    groups: dict[str, list[int]] = defaultdict(list)
    for i, lang in enumerate(languages):
        groups[lang].append(i)
    return dict(sorted(groups.items()))


def _binary_scores(preds: list[bool | None], golds: list[bool]) -> tuple[dict[str, float], bool]:
    tp = sum(1 for p, g in zip(preds, golds) if p is True and g)
    fp = sum(1 for p, g in zip(preds, golds) if p is True and not g)
    # an Unknown prediction is scored as the class opposite to gold
    fn = sum(1 for p, g in zip(preds, golds) if g and p is not True)
    correct = sum(1 for p, g in zip(preds, golds) if p is not None and p == g)
    degenerate = tp + fp == 0 or tp + fn == 0
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    # equal to 2PR/(P+R), but a single rounding step
    f1 = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
    acc = correct / len(golds) if golds else 0.0
    return {"acc": acc, "precision": precision, "recall": recall, "f1": f1}, degenerate


def classification_metrics(preds: Sequence[bool | None], golds: Sequence[bool],
                           languages: Sequence[str] | None = None) -> MetricReport:
    """Accuracy/precision/recall/F1 with True as the positive class.

    A zero denominator yields 0.0 and records the group under ``degenerate``.
    """
    if len(preds) != len(golds):
        raise LengthMismatch(f"{len(preds)} predictions for {len(golds)} gold labels")
    per_language = {}
    degenerate = []
    for lang, idx in _group(len(golds), languages).items():
        scores, bad = _binary_scores([preds[i] for i in idx], [bool(golds[i]) for i in idx])
        per_language[lang] = scores
        if bad:
            degenerate.append(lang)
    values = dict(per_language)
    values[OVERALL] = _macro(per_language) if per_language else dict.fromkeys(("acc", "precision", "recall", "f1"), 0.0)
    return MetricReport(values, degenerate)


def generation_metrics(hyps: Sequence[str], refs: Sequence[str],
                       languages: Sequence[str] | None = None) -> MetricReport:
    """Mean smoothed BLEU-4 and EM (both in [0, 100]) per language, macro-averaged overall."""
    if len(hyps) != len(refs):
        raise LengthMismatch(f"{len(hyps)} hypotheses for {len(refs)} references")
    per_language = {}
    for lang, idx in _group(len(refs), languages).items():
        per_language[lang] = {
            "bleu4": sum(smoothed_bleu4(hyps[i], refs[i]) for i in idx) / len(idx),
            "em": 100.0 * sum(exact_match(hyps[i], refs[i]) for i in idx) / len(idx),
        }
    values = dict(per_language)
    values[OVERALL] = _macro(per_language) if per_language else {"bleu4": 0.0, "em": 0.0}
    return MetricReport(values)


# ---------------------------------------------------------------------------
# prediction files: one {"id", "text"} object per line


def write_jsonl(path: Path, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def read_jsonl(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def read_texts(path: Path) -> dict[str, str]:
    return {str(row["id"]): row["text"] for row in read_jsonl(path)}
