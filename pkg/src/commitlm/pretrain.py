"""Pre-training example generation: commit graphs, noising, pairs and the task schedule."""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .commits import CommitRecord
from .errors import EmptyGraph, TooFewSteps, TooLong
from .sequence import (
    DEFAULT_MAX_LEN, Segment, SegmentedSequence, build_code_input, build_full_input, build_message_input,
    build_pl2nl_pair, build_plnl2pl_pair, example_to_json,
)
from .vocab import BYTE_OFFSET, MASK, Vocabulary


class PretrainTask(enum.Enum):
    TEXT_INFILLING = "text_infilling"
    GTM = "gtm"
    PL2NL = "pl2nl"
    PLNL2PL = "plnl2pl"
    NLPL_ALIGN = "nlpl_align"
    SIMCSE = "simcse"

    @property
    def category(self) -> str:
        return _CATEGORY[self]

    @property
    def has_target(self) -> bool:
        return self.category != "contrastive"


_CATEGORY = {
    PretrainTask.TEXT_INFILLING: "denoise",
    PretrainTask.GTM: "denoise",
    PretrainTask.PL2NL: "generation",
    PretrainTask.PLNL2PL: "generation",
    PretrainTask.NLPL_ALIGN: "contrastive",
    PretrainTask.SIMCSE: "contrastive",
}

TASK_ORDER = tuple(PretrainTask)
# share of total steps per task, as (numerator, denominator=100)
TASK_SHARES = (30, 30, 15, 15, 5, 5)


@dataclass(frozen=True)
class NoiseConfig:
    corruption_rate: float = 0.15
    mean_span: float = 3.0

    def __post_init__(self):
        if not 0 < self.corruption_rate < 1:
            raise ValueError("corruption_rate must lie in (0, 1)")
        if self.mean_span < 1:
            raise ValueError("mean_span must be >= 1")


@dataclass
class PretrainExample:
    task: PretrainTask
    source: SegmentedSequence
    target: SegmentedSequence | None = None
    paired_source: SegmentedSequence | None = None

    def to_json(self) -> str:
        return example_to_json(self.task.value, self.source, self.target, self.paired_source)


def is_maskable(token_id: int) -> bool:
    return token_id >= BYTE_OFFSET


# ---------------------------------------------------------------------------
# commit graph

class Component(enum.Enum):
    MESSAGE = "message"
    FILE_PATH = "file_path"
    CODE = "code"


_COMPONENT_OF = {
    Segment.MSG: Component.MESSAGE,
    Segment.FILE: Component.FILE_PATH,
    Segment.CTX: Component.CODE,
    Segment.NEG: Component.CODE,
    Segment.POS: Component.CODE,
}

# identifiers split on '_', punctuation, whitespace and camelCase / letter-digit boundaries
_WORD_RE = re.compile(r"[A-Z]+(?=[A-Z][a-z])|[A-Z]?[a-z]+|[A-Z]+|[0-9]+|[^\W\d_A-Za-z]+")

STOPWORDS = frozenset(
    "a an and are as at be by for from has have if in into is it its not of on or so that the this to was "
    "were will with".split()
)


def split_words(text: str) -> list[tuple[str, int, int]]:
    """Candidate graph words with their character spans."""
    return [(m.group(), m.start(), m.end()) for m in _WORD_RE.finditer(text)]


def is_node_word(word: str) -> bool:
    return len(word) >= 2 and not word.isdigit() and word not in STOPWORDS


@dataclass(frozen=True)
class Occurrence:
    component: Component
    positions: tuple[int, ...]  # contiguous token positions covering the word


@dataclass
class CommitGraph:
    occurrences: dict[str, list[Occurrence]] = field(default_factory=dict)

    @property
    def nodes(self) -> list[str]:
        return sorted(self.occurrences)

    def __len__(self) -> int:
        return len(self.occurrences)


def _regions(seq: SegmentedSequence):
    """Maximal runs of ordinary tokens sharing one component."""
    start = None
    for i, t in enumerate(seq.token_ids + (-1,)):
        comp = _COMPONENT_OF.get(Segment(seq.segment_ids[i])) if i < len(seq) and is_maskable(t) else None
        if start is not None and (comp is None or comp is not _COMPONENT_OF[Segment(seq.segment_ids[start])]):
            yield _COMPONENT_OF[Segment(seq.segment_ids[start])], start, i
            start = None
        if comp is not None and start is None:
            start = i


def build_commit_graph(seq: SegmentedSequence, vocab: Vocabulary) -> CommitGraph:
    """Link words shared by at least two of message, file path and code.

    ``seq`` is a full input built by ``build_full_input``; every occurrence is
    recorded as the run of subword positions covering it.
    """
    found: dict[str, list[Occurrence]] = {}
    for comp, lo, hi in _regions(seq):
        ids = seq.token_ids[lo:hi]
        offsets = [0]
        for t in ids:
            offsets.append(offsets[-1] + len(vocab.token_bytes(t)))
        raw = vocab.decode_bytes(ids)
        text = raw.decode("utf-8", errors="replace")
        for word, cs, ce in split_words(text):
            if not is_node_word(word):
                continue
            bs = len(text[:cs].encode("utf-8"))
            be = bs + len(word.encode("utf-8"))
            covering = tuple(lo + k for k in range(len(ids)) if offsets[k] < be and offsets[k + 1] > bs)
            found.setdefault(word, []).append(Occurrence(comp, covering))
    graph = CommitGraph()
    for word, occ in found.items():
        if len({o.component for o in occ}) >= 2:
            graph.occurrences[word] = occ
    return graph


def select_mask_nodes(graph: CommitGraph, rng: np.random.Generator) -> list[str]:
    nodes = graph.nodes
    if not nodes:
        raise EmptyGraph("commit graph has no nodes")
    k = max(1, len(nodes) // 2)
    picked = rng.choice(len(nodes), size=k, replace=False)
    return [nodes[i] for i in sorted(int(p) for p in picked)]


def _collapse(seq: SegmentedSequence, ranges: list[tuple[int, int]]) -> SegmentedSequence:
    """Replace each half-open ``[lo, hi)`` range with one MASK carrying the first token's segment."""
    starts = {lo: hi for lo, hi in ranges}
    ids, segs = [], []
    i = 0
    while i < len(seq):
        if i in starts:
            ids.append(MASK)
            segs.append(seq.segment_ids[i])
            i = starts[i]
        else:
            ids.append(seq.token_ids[i])
            segs.append(seq.segment_ids[i])
            i += 1
    return SegmentedSequence(tuple(ids), tuple(segs))


def _merge_ranges(ranges: list[tuple[int, int]]) -> list[tuple[int, int]]:
    merged: list[list[int]] = []
    for lo, hi in sorted(ranges):
        if merged and lo < merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return [(lo, hi) for lo, hi in merged]


def apply_gtm(seq: SegmentedSequence, graph: CommitGraph, selected: list[str]) -> tuple[SegmentedSequence, SegmentedSequence]:
    """Mask every occurrence of the selected nodes, one MASK per occurrence.

    Occurrences whose covering subwords overlap collapse into a single MASK.
    """
    ranges = []
    for node in selected:
        for occ in graph.occurrences[node]:
            ranges.append((occ.positions[0], occ.positions[-1] + 1))
    return _collapse(seq, _merge_ranges(ranges)), seq.with_eos()


# ---------------------------------------------------------------------------
# text infilling

def _span_length(rng: np.random.Generator, mean: float) -> int:
    while True:
        n = int(rng.poisson(mean))
        if n > 0:
            return n


def apply_text_infilling(seq: SegmentedSequence, cfg: NoiseConfig, rng: np.random.Generator
                         ) -> tuple[SegmentedSequence, SegmentedSequence]:
    """Mask random spans of ordinary tokens, each span collapsed into one MASK.

    Span lengths are Poisson(``mean_span``) with zero draws redrawn. Spans
    never overlap or cross special tokens, and exactly
    ``round(corruption_rate * maskable)`` tokens end up covered (the last
    span is shortened when needed).
    """
    maskable = [is_maskable(t) for t in seq.token_ids]
    n_maskable = sum(maskable)
    budget = math.floor(cfg.corruption_rate * n_maskable + 0.5)
    covered = np.zeros(len(seq), dtype=bool)
    free = np.array(maskable, dtype=bool)
    ranges: list[tuple[int, int]] = []
    total = 0
    while total < budget:
        length = min(_span_length(rng, cfg.mean_span), budget - total)
        for _ in range(100):
            # a span fits at s when free[s:s+length] is all True
            if length > len(seq):
                starts = np.array([], dtype=int)
            else:
                window = np.lib.stride_tricks.sliding_window_view(free, length).all(axis=1)
                starts = np.flatnonzero(window)
            if starts.size:
                break
            length = min(_span_length(rng, cfg.mean_span), budget - total)
        else:
            length = 1
            starts = np.flatnonzero(free)
        s = int(starts[rng.integers(starts.size)])
        free[s:s + length] = False
        covered[s:s + length] = True
        ranges.append((s, s + length))
        total += length
    return _collapse(seq, ranges), seq.with_eos()


# ---------------------------------------------------------------------------
# contrastive pairs

def make_nlpl_pair(record: CommitRecord, vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN
                   ) -> tuple[SegmentedSequence, SegmentedSequence]:
    return build_message_input(record, vocab, max_len), build_code_input(record, vocab, max_len)


# ---------------------------------------------------------------------------
# schedule

def _largest_remainder(total: int, shares: tuple[int, ...]) -> list[int]:
    denom = sum(shares)
    base = [total * s // denom for s in shares]
    rema = [total * s % denom for s in shares]
    order = sorted(range(len(shares)), key=lambda i: (-rema[i], i))
    for i in order[: total - sum(base)]:
        base[i] += 1
    return base


@dataclass(frozen=True)
class Schedule:
    total_steps: int

    def __post_init__(self):
        if self.total_steps < 20:
            raise TooFewSteps(f"need at least 20 steps, got {self.total_steps}")

    @cached_property
    def counts(self) -> tuple[int, ...]:
        return tuple(_largest_remainder(self.total_steps, TASK_SHARES))

    @cached_property
    def _table(self) -> bytes:
        # each step goes to the task furthest behind its pro-rata share
        counts = self.counts
        T = self.total_steps
        done = [0] * len(counts)
        out = bytearray(T)
        for n in range(1, T + 1):
            best = max(
                (i for i in range(len(counts)) if done[i] < counts[i]),
                key=lambda i: (n * counts[i] - T * done[i], -i),
            )
            done[best] += 1
            out[n - 1] = best
        return bytes(out)

    def task_at(self, step: int) -> PretrainTask:
        return TASK_ORDER[self._table[step]]

    def __iter__(self):
        return (TASK_ORDER[i] for i in self._table)

    def to_csv(self) -> str:
        return "step,task\n" + "".join(f"{i},{TASK_ORDER[t].value}\n" for i, t in enumerate(self._table))


def build_schedule(total_steps: int) -> Schedule:
    return Schedule(total_steps)


# ---------------------------------------------------------------------------
# example factory

def make_example(record: CommitRecord, task: PretrainTask, vocab: Vocabulary, rng: np.random.Generator,
                 noise: NoiseConfig = NoiseConfig(), max_len: int = DEFAULT_MAX_LEN) -> PretrainExample:
    """Build one example; raises ``TooLong``/``NoChange`` when the record does not qualify."""
    if task in (PretrainTask.TEXT_INFILLING, PretrainTask.GTM):
        # the target carries EOS, so the source must leave room for it
        seq = build_full_input(record, vocab, max_len - 1)
        if task is PretrainTask.GTM:
            graph = build_commit_graph(seq, vocab)
            if len(graph):
                noised, target = apply_gtm(seq, graph, select_mask_nodes(graph, rng))
                return PretrainExample(task, noised, target)
        noised, target = apply_text_infilling(seq, noise, rng)
        return PretrainExample(task, noised, target)
    if task is PretrainTask.PL2NL:
        src, tgt = build_pl2nl_pair(record, vocab, max_len)
        return PretrainExample(task, src, tgt)
    if task is PretrainTask.PLNL2PL:
        src, tgt = build_plnl2pl_pair(record, vocab, max_len)
        if len(tgt) > max_len:
            raise TooLong(len(tgt), max_len)
        return PretrainExample(task, src, tgt)
    if task is PretrainTask.NLPL_ALIGN:
        msg, code = make_nlpl_pair(record, vocab, max_len)
        return PretrainExample(task, msg, paired_source=code)
    return PretrainExample(task, build_full_input(record, vocab, max_len))
