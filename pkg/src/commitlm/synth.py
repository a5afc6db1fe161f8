"""Deterministic synthetic commits for tests, fixtures and smoke runs."""

from __future__ import annotations

import numpy as np

from .commits import ChangedLine, CommitRecord, FileDiff, Hunk, LineKind

LANGUAGES = ("C", "CSharp", "Java", "JavaScript", "PHP", "Python", "Typescript")

_EXT = {
    "C": "c",
    "CSharp": "cs",
    "Java": "java",
    "JavaScript": "js",
    "PHP": "php",
    "Python": "py",
    "Typescript": "ts",
}

_NOUNS = (
    "threshold", "buffer", "parser", "config", "cache", "token", "handler", "session",
    "index", "reader", "writer", "socket", "queue", "timeout", "retry", "payload",
    "logger", "matrix", "vector", "client", "server", "offset", "header", "schema",
)
_VERBS = ("Fix", "Add", "Remove", "Update", "Refactor", "Rename", "Handle", "Check")
_FUNCS = ("load", "parse", "flush", "reset", "encode", "decode", "open", "close", "build")

BINARIZER_COMMIT_CONTEXT_BEFORE = (
    "        training_features = input_df.loc[input_df['group'] == 'training'].drop(['class', 'group', 'guess'], axis=1)",
    "",
    "        # The binarizer must be fit on only the training data",
)
BINARIZER_COMMIT_DELETED = "        scaler = Binarizer(copy=False)"
BINARIZER_COMMIT_ADDED = "        scaler = Binarizer(copy=False, threshold=threshold)"
BINARIZER_COMMIT_CONTEXT_AFTER = (
    "        scaler.fit(training_features.values.astype(np.float64))",
    "        scaled_features = scaler.transform(input_df.drop(['class', 'group', 'guess'], axis=1).values.astype(np.float64))",
    "",
)


def make_binarizer_commit() -> CommitRecord:
    """The single-hunk tpot commit used as the running example (lines 1025-1031)."""
    lines = (
        [ChangedLine(LineKind.CONTEXT, t) for t in BINARIZER_COMMIT_CONTEXT_BEFORE]
        + [ChangedLine(LineKind.DELETED, BINARIZER_COMMIT_DELETED), ChangedLine(LineKind.ADDED, BINARIZER_COMMIT_ADDED)]
        + [ChangedLine(LineKind.CONTEXT, t) for t in BINARIZER_COMMIT_CONTEXT_AFTER]
    )
    hunk = Hunk(1025, 7, 1025, 7, "def _binarizer", tuple(lines))
    return CommitRecord(
        repo="rsumner33/tpot",
        commit_id="dbec56b8f813733bf24e9947747a242af3bd7d14",
        language="Python",
        message="Bugfix: Pass threshold to binarizer",
        files=(FileDiff("tpot/tpot.py", (hunk,)),),
    )


def binarizer_git_show() -> str:
    body = "\n".join(
        [" " + t for t in BINARIZER_COMMIT_CONTEXT_BEFORE]
        + ["-" + BINARIZER_COMMIT_DELETED, "+" + BINARIZER_COMMIT_ADDED]
        + [" " + t for t in BINARIZER_COMMIT_CONTEXT_AFTER]
    )
    return (
        "commit dbec56b8f813733bf24e9947747a242af3bd7d14\n"
        "Author: Randal S. Olson <rso@randalolson.com>\n"
        "Date:   Fri Dec 4 11:12:47 2015 -0500\n"
        "\n"
        "    Bugfix: Pass threshold to binarizer\n"
        "\n"
        "diff --git a/tpot/tpot.py b/tpot/tpot.py\n"
        "index 1b6c2ae..e4d0b3f 100644\n"
        "--- a/tpot/tpot.py\n"
        "+++ b/tpot/tpot.py\n"
        "@@ -1025,7 +1025,7 @@ def _binarizer\n"
        f"{body}\n"
    )


def _camel(*parts: str) -> str:
    return parts[0] + "".join(p.capitalize() for p in parts[1:])


def _code_line(rng: np.random.Generator, names: list[str]) -> str:
    a, b = (str(x) for x in rng.choice(names, 2))
    fn = str(rng.choice(_FUNCS))
    templates = (
        f"    {a} = {fn}({b});",
        f"    if ({a} == null) return {b};",
        f"    {_camel(fn, a)}({b}, {int(rng.integers(0, 100))});",
        f"    {a}.{fn}();",
        f"    return {a} + {b};",
        f"    // {fn} the {a}",
        "",
    )
    return templates[int(rng.integers(len(templates)))]


def _hunk(rng: np.random.Generator, start: int, names: list[str], consecutive: bool) -> Hunk:
    before = [_code_line(rng, names) for _ in range(int(rng.integers(0, 4)))]
    after = [_code_line(rng, names) for _ in range(int(rng.integers(0, 4)))]
    mode = int(rng.integers(3))  # 0 modify, 1 add only, 2 delete only
    n_del = 0 if mode == 1 else int(rng.integers(1, 3))
    n_add = 0 if mode == 2 else int(rng.integers(1, 3))
    body = [ChangedLine(LineKind.CONTEXT, t) for t in before]
    deleted = [ChangedLine(LineKind.DELETED, _code_line(rng, names)) for _ in range(n_del)]
    added = [ChangedLine(LineKind.ADDED, _code_line(rng, names)) for _ in range(n_add)]
    if not consecutive and len(deleted) == 2:
        deleted.insert(1, ChangedLine(LineKind.CONTEXT, _code_line(rng, names)))
    body += deleted + added + [ChangedLine(LineKind.CONTEXT, t) for t in after]
    old = sum(1 for ln in body if ln.kind is not LineKind.ADDED)
    new = sum(1 for ln in body if ln.kind is not LineKind.DELETED)
    ctx = f"void {names[0]}()" if rng.random() < 0.5 else ""
    return Hunk(start if old else start - 1, old, start if new else start - 1, new, ctx, tuple(body))


def random_commit(rng: np.random.Generator, index: int = 0, language: str | None = None,
                  max_files: int = 2, max_hunks: int = 2) -> CommitRecord:
    """One synthetic commit. The message always shares an identifier with the code."""
    lang = language or str(rng.choice(LANGUAGES))
    names = [str(x) for x in rng.choice(_NOUNS, 3, replace=False)]
    files = []
    for _ in range(int(rng.integers(1, max_files + 1))):
        path = f"src/{names[1]}/{str(rng.choice(_NOUNS))}.{_EXT[lang]}"
        if any(f.path == path for f in files):
            continue
        hunks = []
        start = int(rng.integers(1, 50))
        for _ in range(int(rng.integers(1, max_hunks + 1))):
            h = _hunk(rng, start, names, consecutive=bool(rng.random() < 0.7))
            hunks.append(h)
            start += max(h.old_count, 1) + int(rng.integers(5, 40))
        files.append(FileDiff(path, tuple(hunks)))
    message = f"{rng.choice(_VERBS)} {names[0]} handling in {names[1]}"
    if rng.random() < 0.3:
        message += ". More details follow."
    return CommitRecord(
        repo=f"synth/{names[2]}",
        commit_id=f"{index:08x}{int(rng.integers(1 << 30)):08x}",
        language=lang,
        message=message,
        files=tuple(files),
    )


def random_commits(n: int, seed: int = 0, **kwargs) -> list[CommitRecord]:
    rng = np.random.default_rng(seed)
    return [random_commit(rng, i, **kwargs) for i in range(n)]


def labeled_commits(n: int, seed: int = 0) -> list[tuple[CommitRecord, bool]]:
    """Synthetic security-patch data; positives carry bounds/NULL checks and security wording."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        rec = random_commit(rng, i)
        label = bool(rng.random() < 0.5)
        if label:
            rec = CommitRecord(rec.repo, rec.commit_id, rec.language,
                               f"Fix overflow in {rec.message.split()[1]} check", rec.files)
        out.append((rec, label))
    return out
