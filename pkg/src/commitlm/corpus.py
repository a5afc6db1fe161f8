"""Corpus ingestion: filtering, strict de-duplication, shards and language sampling."""

from __future__ import annotations

import enum
import hashlib
import json
import threading
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .commits import CommitRecord, LineKind, extract_first_sentence, is_english, record_from_dict, record_to_dict
from .errors import EmptyCorpus, IngestAborted


class Reject(enum.Enum):
    EMPTY_MESSAGE = "EmptyMessage"
    NON_ENGLISH = "NonEnglish"
    TOO_LONG = "TooLong"


@dataclass(frozen=True)
class FilterConfig:
    max_tokens: int = 2000
    english_required: bool = True

    def __post_init__(self):
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


@dataclass
class LanguageStats:
    counts: dict[str, int]
    alpha: float = 0.7


@dataclass
class IngestReport:
    accepted: int = 0
    rejected_by_reason: dict[str, int] = field(default_factory=dict)
    duplicates: int = 0
    accepted_by_language: dict[str, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return self.accepted + sum(self.rejected_by_reason.values()) + self.duplicates

    def to_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "rejected_by_reason": dict(sorted(self.rejected_by_reason.items())),
            "duplicates": self.duplicates,
            "accepted_by_language": dict(sorted(self.accepted_by_language.items())),
            "total": self.total,
        }


EXTENSION_LANGUAGE = {
    "c": "C", "h": "C", "cs": "CSharp", "java": "Java", "js": "JavaScript", "jsx": "JavaScript",
    "mjs": "JavaScript", "php": "PHP", "py": "Python", "ts": "Typescript", "tsx": "Typescript",
}


def infer_language(record: CommitRecord) -> str:
    """Most common language among the changed files' extensions ('' if none is known)."""
    votes = Counter()
    for f in record.files:
        ext = f.path.rsplit(".", 1)[-1].lower() if "." in f.path else ""
        if ext in EXTENSION_LANGUAGE:
            votes[EXTENSION_LANGUAGE[ext]] += 1
    if not votes:
        return ""
    return min(votes, key=lambda k: (-votes[k], k))


def normalize_record(record: CommitRecord) -> CommitRecord:
    return replace(record, message=extract_first_sentence(record.message))


def whitespace_token_count(record: CommitRecord) -> int:
    n = len(record.message.split())
    for f in record.files:
        for h in f.hunks:
            n += sum(len(ln.text.split()) for ln in h.lines)
    return n


def filter_record(record: CommitRecord, cfg: FilterConfig = FilterConfig()) -> Reject | None:
    """Return ``None`` to accept, otherwise the rejection reason.

    ``record.message`` is expected to be normalized already.
    """
    if not record.message.strip():
        return Reject.EMPTY_MESSAGE
    if cfg.english_required and not is_english(record.message):
        return Reject.NON_ENGLISH
    if whitespace_token_count(record) > cfg.max_tokens:
        return Reject.TOO_LONG
    return None


def dedup_key(record: CommitRecord) -> str:
    """SHA-256 over the message and changed (non-context) lines only."""
    parts = [record.message]
    for f in record.files:
        changed = [
            ln.kind.marker + ln.text.rstrip()
            for h in f.hunks
            for ln in h.lines
            if ln.kind is not LineKind.CONTEXT
        ]
        parts.append(f.path + "\n" + "\n".join(changed))
    return hashlib.sha256("\n".join(parts).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# shards

def shard_path(corpus_dir: Path, language: str) -> Path:
    return Path(corpus_dir) / f"{language}.jsonl"


def iter_shard(path: Path) -> Iterable[CommitRecord]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield record_from_dict(json.loads(line))


def load_corpus(corpus_dir: Path) -> dict[str, list[CommitRecord]]:
    corpus_dir = Path(corpus_dir)
    return {p.stem: list(iter_shard(p)) for p in sorted(corpus_dir.glob("*.jsonl"))}


class _KeySet:
    """Dedup keys shared between ingest workers."""

    def __init__(self, keys: Iterable[str] = ()):
        self._keys = set(keys)
        self._lock = threading.Lock()

    def add(self, key: str) -> bool:
        with self._lock:
            if key in self._keys:
                return False
            self._keys.add(key)
            return True


def ingest(records: Iterable[CommitRecord], out_dir: Path, cfg: FilterConfig = FilterConfig(),
           default_language: str = "") -> tuple[dict[str, Path], IngestReport]:
    """Filter, de-duplicate and append records to per-language JSONL shards.

    Keys of records already present in ``out_dir`` are loaded first, so
    re-ingesting a corpus into itself accepts nothing.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seen = _KeySet(dedup_key(r) for recs in load_corpus(out_dir).values() for r in recs)
    report = IngestReport()
    rejected: Counter[str] = Counter()
    by_lang: Counter[str] = Counter()
    handles = {}
    shards: dict[str, Path] = {}
    try:
        for record in records:
            record = normalize_record(record)
            if not record.language:
                record = record.with_language(default_language or infer_language(record) or "unknown")
            reason = filter_record(record, cfg)
            if reason is not None:
                rejected[reason.value] += 1
                continue
            if not seen.add(dedup_key(record)):
                report.duplicates += 1
                continue
            lang = record.language
            if lang not in handles:
                shards[lang] = shard_path(out_dir, lang)
                handles[lang] = open(shards[lang], "a", encoding="utf-8")
            handles[lang].write(json.dumps(record_to_dict(record), ensure_ascii=False, sort_keys=True) + "\n")
            report.accepted += 1
            by_lang[lang] += 1
    except OSError as exc:
        report.rejected_by_reason = dict(rejected)
        report.accepted_by_language = dict(by_lang)
        raise IngestAborted(f"storage failure during ingest: {exc}", report) from exc
    finally:
        for fh in handles.values():
            fh.close()
        report.rejected_by_reason = dict(rejected)
        report.accepted_by_language = dict(by_lang)
    return shards, report


# ---------------------------------------------------------------------------
# temperature sampling over languages

def language_distribution(stats: LanguageStats) -> dict[str, float]:
    """Exponent-smoothed language probabilities ``q_i = p_i^a / sum_j p_j^a``.

    Computed as ``n_i^a / sum_j n_j^a``; the corpus total cancels, so
    ``alpha == 1`` returns the raw proportions exactly. Zero-count languages
    are left out.
    """
    if stats.alpha <= 0:
        raise ValueError("alpha must be positive")
    counts = {k: v for k, v in stats.counts.items() if v > 0}
    if not counts:
        raise EmptyCorpus("all language counts are zero")
    weights = {k: float(v) ** stats.alpha for k, v in counts.items()}
    total = sum(weights.values())
    return {k: w / total for k, w in sorted(weights.items())}


def sample_language(dist: Mapping[str, float], rng: np.random.Generator) -> str:
    names = sorted(dist)
    u = rng.random()
    acc = 0.0
    for name in names:
        acc += dist[name]
        if u < acc:
            return name
    return names[-1]


# ---------------------------------------------------------------------------
# statistics

def _histogram(values: list[int], edges: tuple[int, ...]) -> dict[str, int]:
    bins = Counter()
    for v in values:
        label = next((f"<={e}" for e in edges if v <= e), f">{edges[-1]}")
        bins[label] += 1
    return {label: bins.get(label, 0) for label in [f"<={e}" for e in edges] + [f">{edges[-1]}"]}


_TOKEN_EDGES = (16, 64, 256, 512, 1024, 2000)
_LINE_EDGES = (4, 16, 64, 256)


def corpus_stats(corpus_dir: Path, alpha: float = 0.7) -> dict:
    """Per-language counts plus token and changed-line histograms, JSON-ready."""
    corpus = load_corpus(corpus_dir)
    langs = {}
    for lang, recs in sorted(corpus.items()):
        tokens = [whitespace_token_count(r) for r in recs]
        lines = [sum(len(h.lines) for f in r.files for h in f.hunks) for r in recs]
        langs[lang] = {
            "commits": len(recs),
            "token_histogram": _histogram(tokens, _TOKEN_EDGES),
            "line_histogram": _histogram(lines, _LINE_EDGES),
        }
    counts = {lang: v["commits"] for lang, v in langs.items()}
    return {"alpha": alpha, "counts": counts, "languages": langs, "total": sum(counts.values())}


def stats_from_corpus(corpus_dir: Path, alpha: float = 0.7) -> LanguageStats:
    return LanguageStats(corpus_stats(corpus_dir, alpha)["counts"], alpha)
