"""Structured commits and parsers for unified diffs and ``git show`` dumps."""

from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, field, replace
from typing import Iterator

from .errors import MalformedCommit, MalformedDiff, MalformedHeader

log = logging.getLogger(__name__)


class LineKind(enum.Enum):
    CONTEXT = "c"
    DELETED = "d"
    ADDED = "a"

    @property
    def marker(self) -> str:
        return {"c": " ", "d": "-", "a": "+"}[self.value]


_MARKERS = {" ": LineKind.CONTEXT, "-": LineKind.DELETED, "+": LineKind.ADDED}


@dataclass(frozen=True)
class ChangedLine:
    kind: LineKind
    text: str

    def __post_init__(self):
        if "\n" in self.text:
            raise ValueError("line text must not contain a newline")


@dataclass(frozen=True)
class Hunk:
    old_start: int
    old_count: int
    new_start: int
    new_count: int
    header_context: str = ""
    lines: tuple[ChangedLine, ...] = ()

    def counts(self) -> tuple[int, int]:
        old = sum(1 for ln in self.lines if ln.kind is not LineKind.ADDED)
        new = sum(1 for ln in self.lines if ln.kind is not LineKind.DELETED)
        return old, new

    def is_consistent(self) -> bool:
        return self.counts() == (self.old_count, self.new_count)


@dataclass(frozen=True)
class FileDiff:
    path: str
    hunks: tuple[Hunk, ...] = ()


@dataclass(frozen=True)
class CommitRecord:
    repo: str
    commit_id: str
    language: str
    message: str
    files: tuple[FileDiff, ...] = field(default_factory=tuple)

    def changed_lines(self) -> Iterator[ChangedLine]:
        for f in self.files:
            for h in f.hunks:
                for ln in h.lines:
                    if ln.kind is not LineKind.CONTEXT:
                        yield ln

    def with_language(self, language: str) -> "CommitRecord":
        return replace(self, language=language)


# ---------------------------------------------------------------------------
# hunk headers

_HUNK_RE = re.compile(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@ ?(.*)$")


def parse_hunk_header(line: str) -> tuple[int, int, int, int, str]:
    """Return ``(old_start, old_count, new_start, new_count, header_context)``.

    Omitted counts default to 1, as git does for single-line ranges.
    """
    m = _HUNK_RE.match(line.rstrip("\r\n"))
    if m is None:
        raise MalformedHeader(f"not a hunk header: {line!r}")
    old_start, old_count, new_start, new_count, ctx = m.groups()
    return (
        int(old_start),
        1 if old_count is None else int(old_count),
        int(new_start),
        1 if new_count is None else int(new_count),
        ctx.strip(),
    )


def format_hunk_header(h: Hunk) -> str:
    head = f"@@ -{h.old_start},{h.old_count} +{h.new_start},{h.new_count} @@"
    return f"{head} {h.header_context}" if h.header_context else head


# ---------------------------------------------------------------------------
# unified diffs

_SKIPPED_PREFIXES = (
    "index ",
    "new file mode",
    "deleted file mode",
    "old mode",
    "new mode",
    "similarity index",
    "dissimilarity index",
    "rename from",
    "rename to",
    "copy from",
    "copy to",
)


def _strip_prefix(path: str) -> str:
    path = path.split("\t", 1)[0]
    if path.startswith(("a/", "b/")):
        return path[2:]
    return path


class _FileBuilder:
    def __init__(self, path: str = ""):
        self.old_path = ""
        self.new_path = path
        self.hunks: list[Hunk] = []

    @property
    def path(self) -> str:
        if self.new_path and self.new_path != "/dev/null":
            return self.new_path
        return self.old_path

    def build(self) -> FileDiff | None:
        if not self.hunks:
            return None
        return FileDiff(self.path, tuple(sorted(self.hunks, key=lambda h: h.old_start)))


def parse_unified_diff(text: str) -> list[FileDiff]:
    """Parse the diff portion of a commit into one ``FileDiff`` per changed file.

    Hunk bodies are consumed by their header counts, so content lines that
    happen to start with ``---``/``+++`` are read correctly. Binary and
    mode-only file entries carry no code and are dropped with a warning.
    """
    files: list[FileDiff] = []
    current: _FileBuilder | None = None
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()

    def flush():
        nonlocal current
        if current is not None:
            fd = current.build()
            if fd is not None:
                files.append(fd)
            elif current.path:
                log.warning("skipping %s: no textual hunks", current.path)
        current = None

    offset = 0
    i = 0
    while i < len(lines):
        line = lines[i]
        line_offset = offset
        offset += len(line.encode("utf-8")) + 1
        i += 1
        if line.startswith("diff --git "):
            flush()
            parts = line[len("diff --git "):].split(" b/", 1)
            current = _FileBuilder(parts[1] if len(parts) == 2 else "")
        elif line.startswith("--- "):
            if current is None or current.hunks:
                flush()
                current = _FileBuilder()
            current.old_path = _strip_prefix(line[4:])
        elif line.startswith("+++ "):
            if current is None:
                raise MalformedDiff("'+++' without preceding '---'", line_offset)
            current.new_path = _strip_prefix(line[4:])
        elif line.startswith("@@"):
            if current is None or not current.path:
                raise MalformedDiff("hunk before any file header", line_offset)
            old_start, old_count, new_start, new_count, ctx = parse_hunk_header(line)
            body: list[ChangedLine] = []
            old_left, new_left = old_count, new_count
            while (old_left > 0 or new_left > 0) and i < len(lines):
                raw = lines[i]
                raw_offset = offset
                offset += len(raw.encode("utf-8")) + 1
                i += 1
                if raw.startswith("\\"):
                    continue
                marker = raw[:1] or " "
                kind = _MARKERS.get(marker)
                if kind is None:
                    raise MalformedDiff(f"unexpected line in hunk: {raw!r}", raw_offset)
                if kind is not LineKind.ADDED:
                    old_left -= 1
                if kind is not LineKind.DELETED:
                    new_left -= 1
                if old_left < 0 or new_left < 0:
                    raise MalformedDiff("hunk longer than its header counts", raw_offset)
                body.append(ChangedLine(kind, raw[1:]))
            if old_left or new_left:
                raise MalformedDiff("hunk truncated before its header counts", offset)
            while i < len(lines) and lines[i].startswith("\\"):
                offset += len(lines[i].encode("utf-8")) + 1
                i += 1
            current.hunks.append(Hunk(old_start, old_count, new_start, new_count, ctx, tuple(body)))
        elif line.startswith("Binary files ") or line.startswith("GIT binary patch"):
            log.warning("skipping binary diff entry at byte %d", line_offset)
        elif line.startswith(_SKIPPED_PREFIXES):
            continue
        elif line.strip() == "":
            continue
        else:
            raise MalformedDiff(f"unexpected line outside hunk: {line!r}", line_offset)
    flush()
    return files


def render_unified_diff(files: tuple[FileDiff, ...] | list[FileDiff]) -> str:
    out: list[str] = []
    for f in files:
        out.append(f"diff --git a/{f.path} b/{f.path}")
        out.append(f"--- a/{f.path}")
        out.append(f"+++ b/{f.path}")
        for h in f.hunks:
            out.append(format_hunk_header(h))
            out.extend(ln.kind.marker + ln.text for ln in h.lines)
    return "".join(s + "\n" for s in out)


# ---------------------------------------------------------------------------
# git show

_COMMIT_RE = re.compile(r"^commit ([0-9A-Za-z]+)")


def parse_git_show(text: str, repo: str = "") -> CommitRecord:
    """Parse one ``git show`` style dump. The message is kept raw."""
    lines = text.split("\n")
    i = 0
    while i < len(lines) and not lines[i].strip():
        i += 1
    m = _COMMIT_RE.match(lines[i]) if i < len(lines) else None
    if m is None:
        raise MalformedCommit("missing 'commit <id>' header")
    commit_id = m.group(1)
    i += 1
    # header fields (Author:, Date:, Merge:, ...) up to the first blank line
    while i < len(lines) and lines[i].strip():
        i += 1
    diff_start = next(
        (j for j in range(i, len(lines)) if lines[j].startswith(("diff --git ", "--- "))),
        None,
    )
    if diff_start is None:
        raise MalformedCommit(f"commit {commit_id}: no diff section")
    msg_lines = [ln[4:] if ln.startswith("    ") else ln.strip() for ln in lines[i:diff_start]]
    message = "\n".join(msg_lines).strip("\n")
    files = parse_unified_diff("\n".join(lines[diff_start:]))
    if not files:
        raise MalformedCommit(f"commit {commit_id}: empty diff section")
    return CommitRecord(repo=repo, commit_id=commit_id, language="", message=message, files=tuple(files))


def split_git_log(text: str) -> list[str]:
    """Split ``git log -p`` output into per-commit chunks."""
    chunks: list[list[str]] = []
    for line in text.split("\n"):
        if _COMMIT_RE.match(line) or not chunks:
            chunks.append([])
        chunks[-1].append(line)
    return ["\n".join(c) for c in chunks if any(s.strip() for s in c)]


def render_git_show(record: CommitRecord) -> str:
    body = "".join(f"    {ln}\n" for ln in record.message.split("\n"))
    return f"commit {record.commit_id}\nAuthor: unknown <unknown>\n\n{body}\n" + render_unified_diff(record.files)


# ---------------------------------------------------------------------------
# message normalisation and filters

def extract_first_sentence(message: str) -> str:
    """Cut a commit message down to its first sentence.

    A sentence ends at '.', '!' or '?' followed by whitespace or the end of
    the text (so ``v1.2.3`` survives), or at the first newline.
    """
    text = message.lstrip()
    end = len(text)
    for i, ch in enumerate(text):
        if ch in "\r\n":
            end = i
            break
        if ch in ".!?" and (i + 1 == len(text) or text[i + 1].isspace()):
            end = i + 1
            break
    return text[:end].strip()


def is_english(message: str) -> bool:
    letters = [ch for ch in message if ch.isalpha()]
    if not letters:
        return False
    latin = sum(1 for ch in letters if ch.isascii())
    return 10 * latin >= 9 * len(letters)


def _single_run(indices: list[int]) -> bool:
    return not indices or indices[-1] - indices[0] + 1 == len(indices)


def is_consecutive_modification(record: CommitRecord) -> bool:
    if len(record.files) != 1 or len(record.files[0].hunks) != 1:
        return False
    lines = record.files[0].hunks[0].lines
    added = [i for i, ln in enumerate(lines) if ln.kind is LineKind.ADDED]
    deleted = [i for i, ln in enumerate(lines) if ln.kind is LineKind.DELETED]
    if not added and not deleted:
        return False
    return _single_run(added) and _single_run(deleted)


# ---------------------------------------------------------------------------
# JSON shard form

def record_to_dict(record: CommitRecord) -> dict:
    return {
        "repo": record.repo,
        "commit_id": record.commit_id,
        "language": record.language,
        "message": record.message,
        "files": [
            {
                "path": f.path,
                "hunks": [
                    {
                        "old_start": h.old_start,
                        "old_count": h.old_count,
                        "new_start": h.new_start,
                        "new_count": h.new_count,
                        "header": h.header_context,
                        "lines": [{"k": ln.kind.value, "t": ln.text} for ln in h.lines],
                    }
                    for h in f.hunks
                ],
            }
            for f in record.files
        ],
    }


def record_from_dict(obj: dict) -> CommitRecord:
    if "files" not in obj and "diff" in obj:
        files = tuple(parse_unified_diff(obj["diff"]))
    else:
        files = tuple(
            FileDiff(
                f["path"],
                tuple(
                    Hunk(
                        h["old_start"],
                        h["old_count"],
                        h["new_start"],
                        h["new_count"],
                        h.get("header", ""),
                        tuple(ChangedLine(LineKind(ln["k"]), ln["t"]) for ln in h["lines"]),
                    )
                    for h in f["hunks"]
                ),
            )
            for f in obj["files"]
        )
    return CommitRecord(
        repo=obj.get("repo", ""),
        commit_id=obj.get("commit_id", ""),
        language=obj.get("language", ""),
        message=obj.get("message", ""),
        files=files,
    )
