"""Segmented token sequences built from commits, and their inverse parse."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .commits import CommitRecord, LineKind
from .errors import MalformedSequence, NoChange, TooLong
from .vocab import (
    BYTE_OFFSET, CLS, CODE, END, EOS, FILE, IDENTIFIERS, MASK, MSG, NEG, PAD, POS, RESERVED, Vocabulary,
)

DEFAULT_MAX_LEN = 512


class Segment(enum.IntEnum):
    MSG = 0
    FILE = 1
    CTX = 2
    NEG = 3
    POS = 4


NUM_SEGMENTS = len(Segment)

_OPENERS = {MSG: Segment.MSG, FILE: Segment.FILE, CODE: Segment.CTX, NEG: Segment.NEG, POS: Segment.POS}


@dataclass(frozen=True)
class SegmentedSequence:
    token_ids: tuple[int, ...]
    segment_ids: tuple[int, ...]
    truncated: bool = False

    def __post_init__(self):
        if len(self.token_ids) != len(self.segment_ids):
            raise ValueError("token and segment sequences differ in length")

    def __len__(self) -> int:
        return len(self.token_ids)

    def with_eos(self) -> "SegmentedSequence":
        seg = int(Segment.CTX)
        if self.token_ids:
            _, seg = next_segment(self.token_ids[-1], self.segment_ids[-1])
        return SegmentedSequence(self.token_ids + (EOS,), self.segment_ids + (int(seg),), self.truncated)


def next_segment(token: int, current: int) -> tuple[int, int]:
    """Segment carried by ``token`` and the segment for whatever follows it.

    Builders and the decoder both assign segments through this function, so
    generated prefixes get the same segment ids a builder would have given.
    """
    if token in _OPENERS:
        seg = int(_OPENERS[token])
        return seg, seg
    if token == END:
        return current, int(Segment.CTX)
    return current, current


def infer_segments(token_ids: Iterable[int], initial: int = Segment.CTX) -> list[int]:
    out, cur = [], int(initial)
    for t in token_ids:
        seg, cur = next_segment(t, cur)
        out.append(seg)
    return out


# ---------------------------------------------------------------------------
# serialisation

@dataclass(frozen=True)
class Piece:
    """A special token (``token``) or a text region (``text``) in serialised order."""

    segment: Segment
    token: int | None = None
    text: str = ""


def _runs(lines) -> Iterator[tuple[LineKind, list[str]]]:
    kind, buf = None, []
    for ln in lines:
        if ln.kind is not kind and buf:
            yield kind, buf
            buf = []
        kind = ln.kind
        buf.append(ln.text)
    if buf:
        yield kind, buf


def _lines_text(lines: list[str]) -> str:
    return "".join(t + "\n" for t in lines)


def _code_pieces(record: CommitRecord, keep_neg: bool, keep_pos: bool, path_block: bool) -> list[Piece]:
    out: list[Piece] = []
    for f in record.files:
        if path_block:
            out += [Piece(Segment.FILE, FILE), Piece(Segment.FILE, text=f.path), Piece(Segment.CTX, CODE)]
        for h in f.hunks:
            for kind, lines in _runs(h.lines):
                if kind is LineKind.CONTEXT:
                    out.append(Piece(Segment.CTX, text=_lines_text(lines)))
                elif kind is LineKind.DELETED and keep_neg:
                    out += [Piece(Segment.NEG, NEG), Piece(Segment.NEG, text=_lines_text(lines)),
                            Piece(Segment.NEG, END)]
                elif kind is LineKind.ADDED and keep_pos:
                    out += [Piece(Segment.POS, POS), Piece(Segment.POS, text=_lines_text(lines)),
                            Piece(Segment.POS, END)]
    return out


def serialize_commit(record: CommitRecord, with_message: bool = True, keep_neg: bool = True,
                     keep_pos: bool = True) -> list[Piece]:
    """Linearise a commit as ``[CLS] [MSG] M ([FILE] F [CODE] C)*``.

    Each maximal run of deleted (added) lines becomes one ``[NEG]``
    (``[POS]``) ... ``[END]`` span; context text sits between spans.
    """
    out = [Piece(Segment.CTX, CLS)]
    if with_message:
        out += [Piece(Segment.MSG, MSG), Piece(Segment.MSG, text=record.message)]
    return out + _code_pieces(record, keep_neg, keep_pos, path_block=True)


def render_pieces(pieces: list[Piece]) -> str:
    """Human-readable form, e.g. ``[CLS] [MSG] Fix it [FILE] a.py [CODE] ...``."""
    return " ".join(RESERVED[p.token] if p.token is not None else p.text.rstrip("\n") for p in pieces)


def encode_pieces(pieces: list[Piece], vocab: Vocabulary) -> SegmentedSequence:
    ids: list[int] = []
    segs: list[int] = []
    for p in pieces:
        if p.token is not None:
            ids.append(p.token)
            segs.append(int(p.segment))
        elif p.text:
            enc = vocab.encode(p.text)
            ids += enc
            segs += [int(p.segment)] * len(enc)
    return SegmentedSequence(tuple(ids), tuple(segs))


def truncate_context(seq: SegmentedSequence, max_len: int) -> SegmentedSequence:
    """Drop code-context tokens from the end until ``seq`` fits.

    Message, path, identifier and changed-span tokens are never removed.
    """
    if len(seq) <= max_len:
        return seq
    excess = len(seq) - max_len
    in_code = False
    droppable = []
    for i, (t, s) in enumerate(zip(seq.token_ids, seq.segment_ids)):
        if t == CODE:
            in_code = True
        elif t in (MSG, FILE):
            in_code = False
        elif in_code and t >= BYTE_OFFSET and s == Segment.CTX:
            droppable.append(i)
    if len(droppable) < excess:
        raise TooLong(len(seq) - len(droppable), max_len)
    drop = set(droppable[-excess:])
    keep = [i for i in range(len(seq)) if i not in drop]
    return SegmentedSequence(
        tuple(seq.token_ids[i] for i in keep), tuple(seq.segment_ids[i] for i in keep), truncated=True
    )


def _fit(seq: SegmentedSequence, max_len: int, truncate: bool) -> SegmentedSequence:
    if len(seq) <= max_len:
        return seq
    if truncate:
        return truncate_context(seq, max_len)
    raise TooLong(len(seq), max_len)


def _target(ids: list[int], segment: Segment) -> SegmentedSequence:
    ids = [CLS] + ids + [EOS]
    return SegmentedSequence(tuple(ids), tuple(infer_segments(ids, segment)))


# ---------------------------------------------------------------------------
# builders

def build_full_input(record: CommitRecord, vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN,
                     truncate: bool = False) -> SegmentedSequence:
    return _fit(encode_pieces(serialize_commit(record), vocab), max_len, truncate)


def build_code_input(record: CommitRecord, vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN,
                     truncate: bool = False) -> SegmentedSequence:
    """``[CLS] [FILE] F [CODE] C`` without the message."""
    return _fit(encode_pieces(serialize_commit(record, with_message=False), vocab), max_len, truncate)


def build_message_input(record: CommitRecord, vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN) -> SegmentedSequence:
    pieces = [Piece(Segment.CTX, CLS), Piece(Segment.MSG, MSG), Piece(Segment.MSG, text=record.message)]
    return _fit(encode_pieces(pieces, vocab), max_len, False)


def build_message_target(record: CommitRecord, vocab: Vocabulary) -> SegmentedSequence:
    return _target(vocab.encode(record.message), Segment.MSG)


def build_pl2nl_pair(record: CommitRecord, vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN,
                     truncate: bool = False) -> tuple[SegmentedSequence, SegmentedSequence]:
    return build_code_input(record, vocab, max_len, truncate), build_message_target(record, vocab)


def has_changes(record: CommitRecord) -> bool:
    return any(True for _ in record.changed_lines())


def build_pre_change_input(record: CommitRecord, vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN,
                           truncate: bool = False) -> SegmentedSequence:
    """``[CLS] [MSG] M [FILE] F [CODE] C-``: added spans removed."""
    return _fit(encode_pieces(serialize_commit(record, keep_pos=False), vocab), max_len, truncate)


def build_updated_code_target(record: CommitRecord, vocab: Vocabulary) -> SegmentedSequence:
    body = encode_pieces(_code_pieces(record, keep_neg=False, keep_pos=True, path_block=False), vocab)
    return _target(list(body.token_ids), Segment.CTX)


def build_plnl2pl_pair(record: CommitRecord, vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN,
                       truncate: bool = False) -> tuple[SegmentedSequence, SegmentedSequence]:
    if not has_changes(record):
        raise NoChange(f"commit {record.commit_id} has no added or deleted lines")
    return build_pre_change_input(record, vocab, max_len, truncate), build_updated_code_target(record, vocab)


# ---------------------------------------------------------------------------
# inverse parse

@dataclass
class ParsedFile:
    path: str
    spans: list[tuple[str, list[str]]] = field(default_factory=list)  # ("context" | "neg" | "pos", lines)

    def lines_of(self, kind: str) -> list[str]:
        return [ln for k, lines in self.spans if k == kind for ln in lines]


@dataclass
class ParsedSequence:
    message: str | None
    files: list[ParsedFile]
    truncated: bool = False


def _split_lines(text: str) -> list[str]:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def parse_sequence(seq: SegmentedSequence, vocab: Vocabulary) -> ParsedSequence:
    """Recover message, paths and context/deleted/added line spans from a built sequence."""
    ids = list(seq.token_ids)
    if not ids or ids[0] != CLS:
        raise MalformedSequence("sequence must start with [CLS]")
    if ids[-1] == EOS:
        ids.pop()
    message: str | None = None
    files: list[ParsedFile] = []
    region: str | None = None
    span: str | None = None
    buf: list[int] = []

    def text() -> str:
        out = vocab.decode_bytes(buf).decode("utf-8", errors="replace")
        buf.clear()
        return out

    def current_file() -> ParsedFile:
        if not files:
            files.append(ParsedFile(""))
        return files[-1]

    def close_region():
        nonlocal message
        if region == "msg":
            message = text()
        elif region == "file":
            current_file().path = text()
        elif region == "code" and buf:
            current_file().spans.append(("context", _split_lines(text())))

    for pos, t in enumerate(ids[1:], start=1):
        if t == EOS or t == PAD:
            raise MalformedSequence(f"unexpected {RESERVED[t]} at position {pos}")
        if t in (MSG, FILE, CODE):
            if span is not None:
                raise MalformedSequence(f"{RESERVED[t]} inside an open span at position {pos}")
            close_region()
            region = {MSG: "msg", FILE: "file", CODE: "code"}[t]
            if t == FILE:
                files.append(ParsedFile(""))
        elif t in (NEG, POS):
            if span is not None:
                raise MalformedSequence(f"nested span at position {pos}")
            if region is None:
                region = "code"
            if region != "code":
                raise MalformedSequence(f"change span outside code at position {pos}")
            close_region()
            span = "neg" if t == NEG else "pos"
        elif t == END:
            if span is None:
                raise MalformedSequence(f"[END] without an open span at position {pos}")
            current_file().spans.append((span, _split_lines(text())))
            span = None
        elif t == MASK:
            raise MalformedSequence(f"[MASK] at position {pos}; noised sequences cannot be parsed")
        elif t < len(RESERVED):
            raise MalformedSequence(f"unexpected reserved token {RESERVED[t]}")
        else:
            if region is None and span is None:
                # bare target sequences: the segment says what the text is
                region = "msg" if seq.segment_ids[pos] == Segment.MSG else "code"
            buf.append(t)
    if span is not None:
        raise MalformedSequence(f"unterminated [{span.upper()}] span")
    close_region()
    return ParsedSequence(message, files, seq.truncated)


# ---------------------------------------------------------------------------
# example export

def example_to_json(task: str, source: SegmentedSequence, target: SegmentedSequence | None = None,
                    paired: SegmentedSequence | None = None) -> str:
    obj: dict = {"task": task, "source_ids": list(source.token_ids), "source_segs": list(source.segment_ids)}
    if target is not None:
        obj["target_ids"] = list(target.token_ids)
        obj["target_segs"] = list(target.segment_ids)
    if paired is not None:
        obj["paired_ids"] = list(paired.token_ids)
        obj["paired_segs"] = list(paired.segment_ids)
    return json.dumps(obj, separators=(",", ":"))
