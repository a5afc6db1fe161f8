"""Fine-tuning task builders and dataset splitting."""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .commits import CommitRecord, LineKind, is_consecutive_modification
from .errors import NoAddedLines, NotConsecutive, TooSmall
from .sequence import (
    DEFAULT_MAX_LEN, Segment, SegmentedSequence, build_full_input, build_pl2nl_pair, build_plnl2pl_pair,
    build_pre_change_input, infer_segments,
)
from .vocab import CLS, EOS, FALSE, PATCH, SECURITY, TRUE, Vocabulary


class FinetuneTask(enum.Enum):
    SECURITY_PATCH = "spi"
    MSG_GEN = "msg"
    POS_STMT_GEN = "pos"
    SNIPPET_GEN = "snippet"

    @property
    def target_segment(self) -> Segment:
        return {"msg": Segment.MSG, "pos": Segment.POS}.get(self.value, Segment.CTX)

    @property
    def max_target_len(self) -> int:
        # target length caps for each generation task
        return {"spi": 5, "msg": 150, "pos": 300, "snippet": 512}[self.value]


@dataclass(frozen=True)
class LabeledCommit:
    record: CommitRecord
    label: bool


def _labeled_target(ids: list[int], segment: Segment) -> SegmentedSequence:
    return SegmentedSequence(tuple(ids), tuple(infer_segments(ids, segment)))


def build_spi_example(lc: LabeledCommit, vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN
                      ) -> tuple[SegmentedSequence, SegmentedSequence]:
    """Full commit in; ``[CLS] security patch True|False [EOS]`` out."""
    source = build_full_input(lc.record, vocab, max_len, truncate=True)
    ids = [CLS, SECURITY, PATCH, TRUE if lc.label else FALSE, EOS]
    return source, _labeled_target(ids, Segment.CTX)


def parse_spi_prediction(decoded: str | Sequence[int]) -> bool | None:
    """``True``/``False`` after an optional ``security patch`` prefix; ``None`` otherwise."""
    if not isinstance(decoded, str):
        names = {SECURITY: "security", PATCH: "patch", TRUE: "True", FALSE: "False"}
        decoded = " ".join(names.get(t, "?") for t in decoded)
    words = decoded.split()
    if words[:2] == ["security", "patch"]:
        words = words[2:]
    if words and words[0] in ("True", "False"):
        return words[0] == "True"
    return None


def build_msg_gen_example(record: CommitRecord, vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN):
    return build_pl2nl_pair(record, vocab, max_len, truncate=True)


def build_pos_stmt_example(record: CommitRecord, vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN
                           ) -> tuple[SegmentedSequence, SegmentedSequence]:
    """Pre-change commit in; the added lines (newline-joined) out."""
    if not is_consecutive_modification(record):
        raise NotConsecutive(f"commit {record.commit_id} is not a single consecutive modification")
    added = [ln.text for ln in record.files[0].hunks[0].lines if ln.kind is LineKind.ADDED]
    if not added:
        raise NoAddedLines(f"commit {record.commit_id} adds no lines")
    source = build_pre_change_input(record, vocab, max_len, truncate=True)
    ids = [CLS] + vocab.encode("\n".join(added)) + [EOS]
    return source, _labeled_target(ids, Segment.POS)


def build_snippet_example(record: CommitRecord, vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN):
    return build_plnl2pl_pair(record, vocab, max_len, truncate=True)


def build_finetune_example(task: FinetuneTask, item, vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN):
    if task is FinetuneTask.SECURITY_PATCH:
        return build_spi_example(item, vocab, max_len)
    builder = {
        FinetuneTask.MSG_GEN: build_msg_gen_example,
        FinetuneTask.POS_STMT_GEN: build_pos_stmt_example,
        FinetuneTask.SNIPPET_GEN: build_snippet_example,
    }[task]
    return builder(item, vocab, max_len)


# ---------------------------------------------------------------------------
# splitting

SPLIT_SHARES = (75, 10, 15)


def _largest_remainder(total: int, shares: Sequence[int]) -> list[int]:
    denom = sum(shares)
    base = [total * s // denom for s in shares]
    order = sorted(range(len(shares)), key=lambda i: (-(total * shares[i] % denom), i))
    for i in order[: total - sum(base)]:
        base[i] += 1
    return base


def _language(item) -> str:
    rec = item.record if isinstance(item, LabeledCommit) else item
    return rec.language


def split_dataset(items: Sequence, seed: int) -> tuple[list, list, list]:
    """Seeded 75/10/15 split, stratified by language.

    Overall sizes follow largest-remainder rounding; per-language quotas are
    rounded to agree with both the language sizes and the overall sizes.
    """
    if len(items) < 20:
        raise TooSmall(f"need at least 20 records to split, got {len(items)}")
    groups: dict[str, list] = defaultdict(list)
    for item in items:
        groups[_language(item)].append(item)
    langs = sorted(groups)
    totals = _largest_remainder(len(items), SPLIT_SHARES)
    denom = sum(SPLIT_SHARES)
    quota = {lang: [len(groups[lang]) * s // denom for s in SPLIT_SHARES] for lang in langs}
    row_left = {lang: len(groups[lang]) - sum(quota[lang]) for lang in langs}
    col_left = [totals[s] - sum(quota[lang][s] for lang in langs) for s in range(3)]
    cells = sorted(
        ((lang, s) for lang in langs for s in range(3)),
        key=lambda c: (-(len(groups[c[0]]) * SPLIT_SHARES[c[1]] % denom), c[0], c[1]),
    )
    for lang, s in cells:
        if row_left[lang] > 0 and col_left[s] > 0:
            quota[lang][s] += 1
            row_left[lang] -= 1
            col_left[s] -= 1
    for lang in langs:  # any leftovers go wherever the column still has room
        for s in range(3):
            while row_left[lang] > 0 and col_left[s] > 0:
                quota[lang][s] += 1
                row_left[lang] -= 1
                col_left[s] -= 1
    rng = np.random.default_rng(seed)
    out: tuple[list, list, list] = ([], [], [])
    for lang in langs:
        members = groups[lang]
        order = rng.permutation(len(members))
        cut1 = quota[lang][0]
        cut2 = cut1 + quota[lang][1]
        for rank, idx in enumerate(order):
            split = 0 if rank < cut1 else 1 if rank < cut2 else 2
            out[split].append(members[int(idx)])
    return out
