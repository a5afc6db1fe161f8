"""Command-line entry point: ingest, build-pretrain, pretrain, finetune, generate, evaluate.

Every command writes ``run_manifest.json`` next to its outputs. All randomness
derives from ``--seed``; exit codes are 0 on success, 1 on internal errors and
2 on usage or input errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
import torch

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .commits import CommitRecord, parse_git_show, record_from_dict, record_to_dict, split_git_log
from .corpus import (
    FilterConfig, LanguageStats, ingest, language_distribution, load_corpus, sample_language,
)
from .errors import (
    CommitLMError, ConfigError, CorruptFile, EmptyCorpus, IngestAborted, LengthMismatch, MalformedCommit,
    MalformedDiff, MalformedHeader, NoAddedLines, NoChange, NotConsecutive, TooFewSteps, TooLong, TooSmall,
    VersionMismatch,
)
from .metrics import classification_metrics, generation_metrics, read_jsonl, write_jsonl
from .model import ModelConfig, greedy_decode
from .pretrain import TASK_ORDER, NoiseConfig, PretrainExample, PretrainTask, build_schedule, make_example
from .sequence import DEFAULT_MAX_LEN, SegmentedSequence
from .tasks import FinetuneTask, LabeledCommit, build_finetune_example, parse_spi_prediction, split_dataset
from .training import ModelState, TrainHyper, train_step
from .vocab import Vocabulary, train_bpe

log = logging.getLogger("commitlm")

INPUT_ERRORS = (
    MalformedCommit, MalformedDiff, MalformedHeader, TooFewSteps, ConfigError, TooSmall, EmptyCorpus,
    VersionMismatch, CorruptFile, LengthMismatch, FileNotFoundError, json.JSONDecodeError,
)

VOCAB_FILE = "vocab.json"
CKPT_DIR = "checkpoint"

# defaults for every config key; a --config JSON file overrides these and flags override both
DEFAULTS = {
    "seed": 0,
    "threads": 1,
    "max_tokens": 2000,
    "vocab_size": 1000,
    "max_len": DEFAULT_MAX_LEN,
    "alpha": 0.7,
    "steps": 200,
    "batch_size": 8,
    "lr": 2e-4,
    "weight_decay": 0.01,
    "clip_norm": 1.0,
    "model": {},
}


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    inputs: dict[str, str]
    outputs: dict[str, str]
    version: str = f"v{__version__}"
    started_at: float = field(default_factory=time.time)
    wall_clock_s: float = 0.0

    def write(self, out_dir: Path) -> Path:
        self.wall_clock_s = round(time.time() - self.started_at, 3)
        body = {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "version": self.version,
            "started_at": self.started_at,
            "wall_clock_s": self.wall_clock_s,
        }
        path = Path(out_dir) / "run_manifest.json"
        _atomic_text(path, json.dumps(body, indent=1, sort_keys=True) + "\n")
        return path


def _atomic_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def resolve_config(args: argparse.Namespace, keys: Iterable[str]) -> dict:
    """Defaults, then the --config file, then explicit flags."""
    cfg = {k: DEFAULTS[k] for k in keys if k in DEFAULTS}
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        cfg.update({k: v for k, v in loaded.items() if k in cfg})
    for k in cfg:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    return cfg


def _pretrain_texts(corpus: dict[str, list[CommitRecord]]) -> Iterable[str]:
    for lang in sorted(corpus):
        for rec in corpus[lang]:
            yield rec.message
            for f in rec.files:
                yield f.path
                for h in f.hunks:
                    for ln in h.lines:
                        yield ln.text + "\n"


def _load_corpus_nonempty(path: Path) -> dict[str, list[CommitRecord]]:
    if not Path(path).is_dir():
        raise FileNotFoundError(f"corpus directory {path} does not exist")
    corpus = {k: v for k, v in load_corpus(path).items() if v}
    if not corpus:
        raise EmptyCorpus(f"no records under {path}")
    return corpus


def _vocab_for(corpus: dict[str, list[CommitRecord]], vocab_path: str | None, size: int) -> Vocabulary:
    if vocab_path:
        return Vocabulary.load(Path(vocab_path))
    return train_bpe(_pretrain_texts(corpus), size)


# ---------------------------------------------------------------------------
# ingest

def read_records(path: Path) -> list[CommitRecord]:
    """Commits from a JSONL shard (``.jsonl``) or a ``git log -p`` / ``git show`` dump."""
    text = Path(path).read_text(encoding="utf-8")
    if Path(path).suffix == ".jsonl":
        out = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                out.append(record_from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise MalformedCommit(f"{path}:{lineno}: {exc}") from exc
        return out
    return [parse_git_show(chunk) for chunk in split_git_log(text)]


def cmd_ingest(args: argparse.Namespace) -> int:
    cfg = resolve_config(args, ["max_tokens"])
    out = Path(args.out)
    manifest = RunManifest("ingest", cfg, 0, {"input": str(args.input)}, {"out": str(out)})
    records = read_records(Path(args.input))
    try:
        _, report = ingest(records, out, FilterConfig(max_tokens=cfg["max_tokens"]), args.language or "")
    except IngestAborted as exc:
        print(json.dumps(exc.report.to_dict(), sort_keys=True))
        raise
    body = json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n"
    _atomic_text(out / "ingest_report.json", body)
    manifest.outputs["report"] = str(out / "ingest_report.json")
    manifest.write(out)
    print(body, end="")
    return 0


# ---------------------------------------------------------------------------
# build-pretrain

def _record_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng([seed, *keys])


def cmd_build_pretrain(args: argparse.Namespace) -> int:
    cfg = resolve_config(args, ["seed", "vocab_size", "max_len"])
    corpus = _load_corpus_nonempty(Path(args.corpus))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    vocab = _vocab_for(corpus, args.vocab, cfg["vocab_size"])
    vocab.save(out / VOCAB_FILE)
    tasks = list(TASK_ORDER) if args.task == "all" else [PretrainTask(args.task)]
    lines = []
    skipped = 0
    index = 0
    for lang in sorted(corpus):
        for rec in corpus[lang]:
            for ti, task in enumerate(TASK_ORDER):
                if task not in tasks:
                    continue
                rng = _record_rng(cfg["seed"], index, ti)
                try:
                    ex = make_example(rec, task, vocab, rng, max_len=cfg["max_len"])
                except (TooLong, NoChange):
                    skipped += 1
                    continue
                lines.append(ex.to_json())
            index += 1
    _atomic_text(out / "examples.jsonl", "".join(line + "\n" for line in lines))
    RunManifest("build-pretrain", dict(cfg, task=args.task), cfg["seed"], {"corpus": str(args.corpus)},
                {"examples": str(out / "examples.jsonl"), "vocab": str(out / VOCAB_FILE)}).write(out)
    print(json.dumps({"examples": len(lines), "skipped": skipped}, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# pretrain

def _draw_batch(records: list[CommitRecord], task: PretrainTask, vocab: Vocabulary, rng: np.random.Generator,
                batch_size: int, max_len: int) -> list[PretrainExample]:
    """Up to ``batch_size`` distinct records of one language that qualify for ``task``."""
    batch = []
    for idx in rng.permutation(len(records)):
        try:
            batch.append(make_example(records[int(idx)], task, vocab, rng, NoiseConfig(), max_len))
        except (TooLong, NoChange):
            continue
        if len(batch) == batch_size:
            break
    return batch


def _model_config(cfg: dict, vocab: Vocabulary) -> ModelConfig:
    overrides = dict(cfg["model"])
    overrides.pop("vocab_size", None)
    overrides.setdefault("max_positions", cfg["max_len"])
    try:
        return ModelConfig(vocab.size, **overrides)
    except TypeError as exc:
        raise ConfigError(f"bad model config: {exc}") from exc


def run_pretraining(corpus: dict[str, list[CommitRecord]], vocab: Vocabulary, cfg: dict, out: Path,
                    state: ModelState | None = None, stop_at: int | None = None) -> ModelState:
    """Train on the interleaved schedule until ``cfg['steps']`` (or ``stop_at``, if earlier)."""
    steps = cfg["steps"]
    end = steps if stop_at is None else min(steps, stop_at)
    schedule = build_schedule(steps)
    _atomic_text(out / "schedule.csv", schedule.to_csv())
    dist = language_distribution(LanguageStats({k: len(v) for k, v in corpus.items()}, cfg["alpha"]))
    if state is None:
        state = ModelState.fresh(_model_config(cfg, vocab), cfg["seed"])
    hyper = TrainHyper.with_warmup(steps, lr=cfg["lr"], weight_decay=cfg["weight_decay"], clip_norm=cfg["clip_norm"])
    curve_path = out / "loss_curve.csv"
    mode = "a" if state.step and curve_path.exists() else "w"
    with open(curve_path, mode, encoding="utf-8") as curve:
        if mode == "w":
            curve.write("step,task,language,batch,loss\n")
        while state.step < end:
            step = state.step
            task = schedule.task_at(step)
            rng = _record_rng(cfg["seed"], step)
            lang = sample_language(dist, rng)
            batch = _draw_batch(corpus[lang], task, vocab, rng, cfg["batch_size"], cfg["max_len"])
            if len(batch) < (2 if task.category == "contrastive" else 1):
                log.warning("step %d: %s has too few %s examples; skipping", step, lang, task.value)
                state.step += 1
                continue
            loss = train_step(state, batch, hyper, cfg["seed"])
            curve.write(f"{step},{task.value},{lang},{len(batch)},{loss:.6f}\n")
    return state


def cmd_pretrain(args: argparse.Namespace) -> int:
    cfg = resolve_config(args, ["seed", "vocab_size", "max_len", "alpha", "steps", "batch_size", "lr",
                                "weight_decay", "clip_norm", "model"])
    build_schedule(cfg["steps"])  # fail fast on too few steps
    corpus = _load_corpus_nonempty(Path(args.corpus))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    state = None
    if args.resume:
        state = load_checkpoint(Path(args.resume))
        vocab = Vocabulary.load(Path(args.resume) / VOCAB_FILE)
    else:
        vocab = _vocab_for(corpus, args.vocab, cfg["vocab_size"])
    state = run_pretraining(corpus, vocab, cfg, out, state, args.stop_at)
    ckpt = out / CKPT_DIR
    save_checkpoint(state, ckpt)
    vocab.save(ckpt / VOCAB_FILE)
    inputs = {"corpus": str(args.corpus)}
    if args.resume:
        inputs["resume"] = str(args.resume)
    RunManifest("pretrain", cfg, cfg["seed"], inputs, {
        "checkpoint": str(ckpt), "loss_curve": str(out / "loss_curve.csv"), "schedule": str(out / "schedule.csv"),
    }).write(out)
    print(json.dumps({"step": state.step, "checkpoint": str(ckpt)}, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# fine-tuning data

@dataclass
class FinetuneExample:
    task: FinetuneTask
    source: SegmentedSequence
    target: SegmentedSequence
    paired_source: None = None


def read_items(path: Path, task: FinetuneTask) -> list:
    """Records (or labeled records for spi) from a corpus dir or a JSONL file."""
    path = Path(path)
    if path.is_dir():
        if task is FinetuneTask.SECURITY_PATCH:
            raise ConfigError("spi data must be a JSONL file with a 'label' field per record")
        corpus = load_corpus(path)
        return [r for lang in sorted(corpus) for r in corpus[lang]]
    rows = read_jsonl(path)
    if task is FinetuneTask.SECURITY_PATCH:
        try:
            return [LabeledCommit(record_from_dict(row), bool(row["label"])) for row in rows]
        except KeyError as exc:
            raise MalformedCommit(f"{path}: record lacks {exc}") from exc
    return [record_from_dict(row) for row in rows]


def _item_to_dict(item) -> dict:
    if isinstance(item, LabeledCommit):
        return dict(record_to_dict(item.record), label=item.label)
    return record_to_dict(item)


def _record_of(item) -> CommitRecord:
    return item.record if isinstance(item, LabeledCommit) else item


def build_examples(task: FinetuneTask, items: list, vocab: Vocabulary, max_len: int) -> tuple[list, list]:
    """Examples for the items that qualify, and the qualifying items themselves."""
    examples, kept = [], []
    for item in items:
        try:
            src, tgt = build_finetune_example(task, item, vocab, max_len)
        except (TooLong, NoChange, NotConsecutive, NoAddedLines):
            continue
        examples.append(FinetuneExample(task, src, tgt))
        kept.append(item)
    return examples, kept


def cmd_finetune(args: argparse.Namespace) -> int:
    cfg = resolve_config(args, ["seed", "max_len", "steps", "batch_size", "lr", "weight_decay", "clip_norm"])
    task = FinetuneTask(args.task)
    state = load_checkpoint(Path(args.ckpt))
    vocab = Vocabulary.load(Path(args.ckpt) / VOCAB_FILE)
    out = Path(args.out)
    (out / "splits").mkdir(parents=True, exist_ok=True)
    items = read_items(Path(args.data), task)
    splits = split_dataset(items, cfg["seed"])
    for name, part in zip(("train", "valid", "test"), splits):
        write_jsonl(out / "splits" / f"{name}.jsonl", (_item_to_dict(it) for it in part))
    examples, _ = build_examples(task, splits[0], vocab, cfg["max_len"])
    if not examples:
        raise TooSmall(f"no training split record qualifies for task {task.value}")
    state.step = 0
    state.exp_avg.clear()
    state.exp_avg_sq.clear()
    steps = cfg["steps"]
    hyper = TrainHyper.with_warmup(steps, lr=cfg["lr"], weight_decay=cfg["weight_decay"], clip_norm=cfg["clip_norm"])
    with open(out / "loss_curve.csv", "w", encoding="utf-8") as curve:
        curve.write("step,loss\n")
        while state.step < steps:
            rng = _record_rng(cfg["seed"], state.step)
            pick = rng.permutation(len(examples))[: cfg["batch_size"]]
            step = state.step
            loss = train_step(state, [examples[int(i)] for i in pick], hyper, cfg["seed"])
            curve.write(f"{step},{loss:.6f}\n")
    ckpt = out / CKPT_DIR
    save_checkpoint(state, ckpt)
    vocab.save(ckpt / VOCAB_FILE)
    RunManifest("finetune", dict(cfg, task=task.value), cfg["seed"], {"ckpt": str(args.ckpt), "data": str(args.data)},
                {"checkpoint": str(ckpt), "splits": str(out / "splits")}).write(out)
    print(json.dumps({"task": task.value, "examples": len(examples), "steps": steps}, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# generate / evaluate

def _reference_text(task: FinetuneTask, target: SegmentedSequence, vocab: Vocabulary) -> str:
    return vocab.decode(target.token_ids[1:-1], skip_special=True)


def cmd_generate(args: argparse.Namespace) -> int:
    cfg = resolve_config(args, ["max_len", "batch_size"])
    task = FinetuneTask(args.task)
    state = load_checkpoint(Path(args.ckpt))
    vocab = Vocabulary.load(Path(args.ckpt) / VOCAB_FILE)
    data = Path(args.data)
    if data.is_dir() and (data / "splits").is_dir():
        data = data / "splits" / f"{args.split}.jsonl"
    items = read_items(data, task)
    examples, kept = build_examples(task, items, vocab, cfg["max_len"])
    hyps, refs = [], []
    bs = cfg["batch_size"]
    for lo in range(0, len(examples), bs):
        chunk = examples[lo:lo + bs]
        outs = greedy_decode(state.model, [ex.source for ex in chunk], task.max_target_len,
                             task.target_segment)
        for j, (ex, ids) in enumerate(zip(chunk, outs)):
            rec = _record_of(kept[lo + j])
            key = f"{lo + j}"
            hyps.append({"id": key, "language": rec.language, "text": vocab.decode(ids, skip_special=True)})
            refs.append({"id": key, "language": rec.language, "text": _reference_text(task, ex.target, vocab)})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(out / "hyps.jsonl", hyps)
    write_jsonl(out / "refs.jsonl", refs)
    RunManifest("generate", dict(cfg, task=task.value, split=args.split), 0,
                {"ckpt": str(args.ckpt), "data": str(data)},
                {"hyps": str(out / "hyps.jsonl"), "refs": str(out / "refs.jsonl")}).write(out)
    print(json.dumps({"task": task.value, "generated": len(hyps)}, sort_keys=True))
    return 0


def evaluate_files(task: FinetuneTask, hyps_path: Path, refs_path: Path):
    hyps = {row["id"]: row for row in read_jsonl(hyps_path)}
    refs = read_jsonl(refs_path)
    missing = [r["id"] for r in refs if r["id"] not in hyps]
    if missing or len(hyps) != len(refs):
        raise LengthMismatch(f"{len(hyps)} hypotheses for {len(refs)} references")
    langs = [r.get("language", "all") for r in refs]
    hyp_texts = [hyps[r["id"]]["text"] for r in refs]
    if task is FinetuneTask.SECURITY_PATCH:
        golds = [parse_spi_prediction(r["text"]) for r in refs]
        if any(g is None for g in golds):
            raise MalformedCommit("spi references must read 'security patch True|False'")
        return classification_metrics([parse_spi_prediction(h) for h in hyp_texts], golds, langs)
    return generation_metrics(hyp_texts, [r["text"] for r in refs], langs)


def cmd_evaluate(args: argparse.Namespace) -> int:
    task = FinetuneTask(args.task)
    hyps_path = Path(args.hyps) if args.hyps else Path(args.pred_dir) / "hyps.jsonl"
    refs_path = Path(args.refs) if args.refs else Path(args.pred_dir) / "refs.jsonl"
    report = evaluate_files(task, hyps_path, refs_path)
    body = report.to_json()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _atomic_text(out / "report.json", body)
    RunManifest("evaluate", {"task": task.value}, 0, {"hyps": str(hyps_path), "refs": str(refs_path)},
                {"report": str(out / "report.json")}).write(out)
    print(body, end="")
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def _common(p: argparse.ArgumentParser, seed: bool = True) -> None:
    p.add_argument("--config", help="JSON file of settings; explicit flags take precedence")
    p.add_argument("--threads", type=int, default=None, help="cap on intra-op threads (default 1)")
    if seed:
        p.add_argument("--seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="commitlm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="filter and de-duplicate commits into per-language shards")
    p.add_argument("--input", required=True, help="git log -p dump or JSONL records")
    p.add_argument("--language", help="language for records that carry none")
    p.add_argument("--max-tokens", dest="max_tokens", type=int, default=None)
    p.add_argument("--out", required=True, help="corpus directory")
    _common(p, seed=False)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("build-pretrain", help="materialise pre-training examples for inspection")
    p.add_argument("--corpus", required=True)
    p.add_argument("--task", default="all", choices=["all"] + [t.value for t in PretrainTask])
    p.add_argument("--vocab", help="existing vocab.json (default: train one on the corpus)")
    p.add_argument("--vocab-size", dest="vocab_size", type=int, default=None)
    p.add_argument("--max-len", dest="max_len", type=int, default=None)
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_build_pretrain)

    p = sub.add_parser("pretrain", help="multi-task pre-training")
    p.add_argument("--corpus", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--vocab", help="existing vocab.json (default: train one on the corpus)")
    p.add_argument("--vocab-size", dest="vocab_size", type=int, default=None)
    p.add_argument("--max-len", dest="max_len", type=int, default=None)
    p.add_argument("--resume", help="checkpoint directory to continue from")
    p.add_argument("--stop-at", dest="stop_at", type=int, default=None,
                   help="checkpoint and exit once this step is reached (resume later with --resume)")
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="fine-tune a checkpoint on one downstream task")
    p.add_argument("--task", required=True, choices=[t.value for t in FinetuneTask])
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True, help="corpus dir, or JSONL (with 'label' for spi)")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--max-len", dest="max_len", type=int, default=None)
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("generate", help="greedy-decode predictions for a split")
    p.add_argument("--task", required=True, choices=[t.value for t in FinetuneTask])
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True, help="finetune output dir (uses splits/) or a JSONL file")
    p.add_argument("--split", default="test", choices=["train", "valid", "test"])
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--max-len", dest="max_len", type=int, default=None)
    p.add_argument("--out", required=True)
    _common(p, seed=False)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score predictions against references")
    p.add_argument("--task", required=True, choices=[t.value for t in FinetuneTask])
    p.add_argument("--pred-dir", dest="pred_dir", help="directory holding hyps.jsonl and refs.jsonl")
    p.add_argument("--hyps")
    p.add_argument("--refs")
    p.add_argument("--out", required=True)
    _common(p, seed=False)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("COMMITLM_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "evaluate" and not args.pred_dir and not (args.hyps and args.refs):
        parser.error("evaluate needs --pred-dir or both --hyps and --refs")
    threads = args.threads
    if threads is None and getattr(args, "config", None):
        try:
            threads = json.loads(Path(args.config).read_text()).get("threads")
        except (OSError, json.JSONDecodeError, AttributeError):
            threads = None
    torch.set_num_threads(max(1, threads or DEFAULTS["threads"]))
    try:
        return args.func(args)
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CommitLMError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - last-resort handler for the exit-code contract
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
