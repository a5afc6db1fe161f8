"""Byte-level BPE vocabulary with reserved special and task-word tokens."""

from __future__ import annotations

import heapq
import json
import re
import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .errors import CorpusTooSmall

VOCAB_VERSION = "commitlm-bpe-1"

SPECIAL_TOKENS = ("[CLS]", "[EOS]", "[MASK]", "[PAD]", "[MSG]", "[FILE]", "[CODE]", "[NEG]", "[POS]", "[END]")
# whole-word tokens used by the patch-identification target; text encoding never emits them
TASK_WORDS = ("security", "patch", "True", "False")
RESERVED = SPECIAL_TOKENS + TASK_WORDS

CLS, EOS, MASK, PAD, MSG, FILE, CODE, NEG, POS, END = range(len(SPECIAL_TOKENS))
SECURITY, PATCH, TRUE, FALSE = range(len(SPECIAL_TOKENS), len(RESERVED))
IDENTIFIERS = frozenset({MSG, FILE, CODE, NEG, POS, END})
BYTE_OFFSET = len(RESERVED)

# pre-tokenisation; the alternatives cover every character so chunks concatenate back to the input
_CHUNK_RE = re.compile(r" ?[A-Za-z]+| ?[0-9]+| ?[^\sA-Za-z0-9]+|\s+(?!\S)|\s+")


def pretokenize(text: str) -> list[str]:
    return _CHUNK_RE.findall(text)


@dataclass
class Vocabulary:
    merges: list[tuple[int, int]] = field(default_factory=list)
    complete: bool = True

    def __post_init__(self):
        self._token_bytes: list[bytes] = [t.encode() for t in RESERVED] + [bytes([b]) for b in range(256)]
        self._ranks: dict[tuple[int, int], int] = {}
        for rank, (a, b) in enumerate(self.merges):
            self._token_bytes.append(self._token_bytes[a] + self._token_bytes[b])
            self._ranks[(a, b)] = rank
        self._cache: dict[str, tuple[int, ...]] = {}

    def __len__(self) -> int:
        return len(self._token_bytes)

    @property
    def size(self) -> int:
        return len(self._token_bytes)

    @staticmethod
    def is_reserved(token_id: int) -> bool:
        return token_id < BYTE_OFFSET

    def token_bytes(self, token_id: int) -> bytes:
        return self._token_bytes[token_id]

    def _encode_chunk(self, chunk: str) -> tuple[int, ...]:
        hit = self._cache.get(chunk)
        if hit is not None:
            return hit
        ids = [BYTE_OFFSET + b for b in chunk.encode("utf-8")]
        while len(ids) > 1:
            best = None
            for i in range(len(ids) - 1):
                rank = self._ranks.get((ids[i], ids[i + 1]))
                if rank is not None and (best is None or rank < best[0]):
                    best = (rank, ids[i], ids[i + 1])
            if best is None:
                break
            _, a, b = best
            new_id = BYTE_OFFSET + 256 + best[0]
            merged, i = [], 0
            while i < len(ids):
                if i + 1 < len(ids) and ids[i] == a and ids[i + 1] == b:
                    merged.append(new_id)
                    i += 2
                else:
                    merged.append(ids[i])
                    i += 1
            ids = merged
        out = tuple(ids)
        if len(self._cache) < 200_000:
            self._cache[chunk] = out
        return out

    def encode(self, text: str) -> list[int]:
        out: list[int] = []
        for chunk in pretokenize(text):
            out.extend(self._encode_chunk(chunk))
        return out

    def decode_bytes(self, ids: Iterable[int]) -> bytes:
        return b"".join(self._token_bytes[i] for i in ids if i >= BYTE_OFFSET)

    def decode(self, ids: Iterable[int], skip_special: bool = True) -> str:
        """Render ids as text. Task words are space-separated from neighbouring text."""
        pieces: list[str] = []
        run: list[int] = []
        has_words = False

        def flush():
            if run:
                pieces.append(self.decode_bytes(run).decode("utf-8", errors="replace"))
                run.clear()

        for i in ids:
            if i >= BYTE_OFFSET:
                run.append(i)
                continue
            flush()
            if i >= len(SPECIAL_TOKENS):
                pieces.append(f" {RESERVED[i]} ")
                has_words = True
            elif not skip_special:
                pieces.append(RESERVED[i])
        flush()
        text = "".join(pieces)
        return " ".join(text.split()) if has_words else text

    def id_to_token(self, token_id: int) -> str:
        if token_id < BYTE_OFFSET:
            return RESERVED[token_id]
        return self._token_bytes[token_id].decode("utf-8", errors="backslashreplace")

    # -- persistence ---------------------------------------------------------

    def to_json(self) -> str:
        return json.dumps(
            {
                "version": VOCAB_VERSION,
                "specials": list(SPECIAL_TOKENS),
                "task_words": list(TASK_WORDS),
                "merges": [list(m) for m in self.merges],
                "complete": self.complete,
            },
            indent=None,
        )

    def save(self, path: Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def from_json(cls, text: str) -> "Vocabulary":
        obj = json.loads(text)
        if obj.get("version") != VOCAB_VERSION:
            raise ValueError(f"unsupported vocabulary version {obj.get('version')!r}")
        if tuple(obj["specials"]) != SPECIAL_TOKENS or tuple(obj["task_words"]) != TASK_WORDS:
            raise ValueError("vocabulary reserved tokens do not match this build")
        return cls([tuple(m) for m in obj["merges"]], obj.get("complete", True))

    @classmethod
    def load(cls, path: Path) -> "Vocabulary":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def train_bpe(texts: Iterable[str], vocab_size: int) -> Vocabulary:
    """Learn byte-pair merges until the vocabulary reaches ``vocab_size``.

    Ties between equally frequent pairs go to the smallest ``(left, right)`` id
    pair, which makes training a pure function of the corpus.
    """
    base = BYTE_OFFSET + 256
    if vocab_size <= base:
        raise ValueError(f"vocab_size must exceed {base} (reserved tokens + 256 bytes)")

    word_freq: Counter[str] = Counter()
    for text in texts:
        word_freq.update(pretokenize(text))
    if not word_freq:
        raise ValueError("empty training corpus")

    words = [[BYTE_OFFSET + b for b in w.encode("utf-8")] for w in word_freq]
    freqs = list(word_freq.values())
    pair_counts: Counter[tuple[int, int]] = Counter()
    where: dict[tuple[int, int], set[int]] = defaultdict(set)
    for idx, w in enumerate(words):
        for pair in zip(w, w[1:]):
            pair_counts[pair] += freqs[idx]
            where[pair].add(idx)
    heap = [(-c, p) for p, c in pair_counts.items()]
    heapq.heapify(heap)

    merges: list[tuple[int, int]] = []
    target = vocab_size - base
    while len(merges) < target:
        while heap:
            neg, pair = heapq.heappop(heap)
            if pair_counts.get(pair, 0) == -neg and -neg > 0:
                break
        else:
            break
        new_id = base + len(merges)
        merges.append(pair)
        touched: dict[tuple[int, int], None] = {}
        for idx in sorted(where.pop(pair, ())):
            w, f = words[idx], freqs[idx]
            for p in zip(w, w[1:]):
                pair_counts[p] -= f
                touched[p] = None
            merged, i = [], 0
            while i < len(w):
                if i + 1 < len(w) and w[i] == pair[0] and w[i + 1] == pair[1]:
                    merged.append(new_id)
                    i += 2
                else:
                    merged.append(w[i])
                    i += 1
            words[idx] = merged
            for p in zip(merged, merged[1:]):
                pair_counts[p] += f
                where[p].add(idx)
                touched[p] = None
        pair_counts.pop(pair, None)
        for p in touched:
            c = pair_counts.get(p, 0)
            if c > 0:
                heapq.heappush(heap, (-c, p))
            else:
                pair_counts.pop(p, None)
    complete = len(merges) == target
    if not complete:
        warnings.warn(
            f"corpus supports only {len(merges)} of {target} requested merges", CorpusTooSmall, stacklevel=2
        )
    return Vocabulary(merges, complete)
