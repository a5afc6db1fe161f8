"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are also repeated in pytest's terminal summary.
"""

import csv
import math
import time
import warnings
from collections import defaultdict
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
import torch

from commitlm.cli import main
from commitlm.commits import LineKind, parse_git_show, render_git_show
from commitlm.corpus import LanguageStats, language_distribution, sample_language
from commitlm.metrics import classification_metrics, smoothed_bleu4
from commitlm.model import ModelConfig, contrastive_loss, greedy_decode, init_params, loss_seq2seq, pooled_representation
from commitlm.pretrain import (
    TASK_ORDER, NoiseConfig, PretrainExample, PretrainTask, apply_gtm, apply_text_infilling, build_commit_graph,
    build_schedule, select_mask_nodes,
)
from commitlm.sequence import Segment, SegmentedSequence, build_full_input, build_pl2nl_pair, build_plnl2pl_pair, \
    infer_segments, parse_sequence
from commitlm.synth import labeled_commits, random_commits
from commitlm.tasks import LabeledCommit, build_spi_example, parse_spi_prediction
from commitlm.training import ModelState, TrainHyper, train_step
from commitlm.vocab import BYTE_OFFSET, CLS, CODE, END, EOS, MASK, NEG, POS, train_bpe

from conftest import commit_texts
from oracles import bleu_reference, central_difference_max_rel_error, q_extended

RESULTS: dict[int, str] = {}

CORPUS_COUNTS = {
    "C": 1_917_109, "CSharp": 660_587, "Java": 935_151, "JavaScript": 986_669,
    "PHP": 1_148_074, "Python": 1_029_676, "Typescript": 762_760,
}


def report(n: int, name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n:2d} ({name}): {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def thousand():
    return random_commits(1000, seed=2024)


@pytest.fixture(scope="module")
def thousand_vocab(thousand):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return train_bpe(commit_texts(thousand), 1500)


def test_01_parser_roundtrip(thousand):
    t0 = time.perf_counter()
    failures = 0
    for rec in thousand:
        text = render_git_show(rec)
        if render_git_show(parse_git_show(text, repo=rec.repo).with_language(rec.language)) != text:
            failures += 1
    elapsed = time.perf_counter() - t0
    report(1, "parser round trip", failures == 0 and elapsed < 30,
           f"{len(thousand) - failures}/1000 byte-identical in {elapsed:.1f}s (limit 30s)")


def _balanced(seq):
    ids, segs = seq.token_ids, seq.segment_ids
    neg_end = sum(1 for t, s in zip(ids, segs) if t == END and s == Segment.NEG)
    pos_end = sum(1 for t, s in zip(ids, segs) if t == END and s == Segment.POS)
    return ids.count(NEG) == neg_end and ids.count(POS) == pos_end


def test_02_sequence_roundtrip(thousand, thousand_vocab):
    vocab = thousand_vocab
    bad_roundtrip = bad_balance = checked = 0
    for rec in thousand:
        full = build_full_input(rec, vocab)
        built = [full, *build_pl2nl_pair(rec, vocab)]
        if any(True for _ in rec.changed_lines()):
            built += list(build_plnl2pl_pair(rec, vocab))
        bad_balance += sum(not _balanced(s) for s in built)
        checked += len(built)
        parsed = parse_sequence(full, vocab)
        ok = parsed.message == rec.message and [f.path for f in parsed.files] == [f.path for f in rec.files]
        for pf, fd in zip(parsed.files, rec.files):
            lines = [ln for h in fd.hunks for ln in h.lines]
            ok &= pf.lines_of("neg") == [ln.text for ln in lines if ln.kind is LineKind.DELETED]
            ok &= pf.lines_of("pos") == [ln.text for ln in lines if ln.kind is LineKind.ADDED]
        bad_roundtrip += not ok
    report(2, "sequence round trip", bad_roundtrip == 0 and bad_balance == 0,
           f"{1000 - bad_roundtrip}/1000 recovered; identifier balance violated in {bad_balance}/{checked} sequences")


def test_03_infilling_statistics():
    ids = [CLS, CODE] + [BYTE_OFFSET + (i % 200) for i in range(198)]
    seq = SegmentedSequence(tuple(ids), tuple(infer_segments(ids)))
    maskable = 198
    cfg = NoiseConfig()
    t0 = time.perf_counter()
    covered = spans = 0
    for i in range(10_000):
        noised, _ = apply_text_infilling(seq, cfg, np.random.default_rng([7, i]))
        kept = sum(1 for t in noised.token_ids if t >= BYTE_OFFSET)
        covered += maskable - kept
        spans += noised.token_ids.count(MASK)
    elapsed = time.perf_counter() - t0
    frac = covered / (10_000 * maskable)
    mean_span = covered / spans
    ok = abs(frac - 0.15) <= 0.01 and abs(mean_span - 3.0) <= 0.15 and elapsed < 60
    report(3, "infilling statistics", ok,
           f"coverage {frac:.4f} (0.15±0.01), mean span {mean_span:.3f} (3.0±0.15), {elapsed:.1f}s (limit 60s)")


def _mask_components(noised):
    comp = {Segment.MSG: "message", Segment.FILE: "path"}
    return {comp.get(Segment(s), "code") for t, s in zip(noised.token_ids, noised.segment_ids) if t == MASK}


def test_04_gtm_structure(thousand_vocab):
    vocab = thousand_vocab
    rng = np.random.default_rng(4)
    graphs = 0
    wrong_count = single_component = 0
    for rec in random_commits(3000, seed=404):
        seq = build_full_input(rec, vocab)
        graph = build_commit_graph(seq, vocab)
        if not len(graph):
            continue
        graphs += 1
        selected = select_mask_nodes(graph, rng)
        wrong_count += len(selected) != max(1, len(graph) // 2)
        for node in selected:
            noised, _ = apply_gtm(seq, graph, [node])
            single_component += len(_mask_components(noised)) < 2
        if graphs == 1000:
            break
    ok = graphs == 1000 and wrong_count == 0 and single_component == 0
    report(4, "GTM structure", ok,
           f"{graphs} graphs; node-count mismatches {wrong_count}; nodes masked in <2 components {single_component}")


def test_05_sampler():
    names = sorted(CORPUS_COUNTS)
    q = language_distribution(LanguageStats(CORPUS_COUNTS, 0.7))
    oracle = q_extended([CORPUS_COUNTS[n] for n in names], 0.7)
    err = max(abs(q[n] - float(o)) for n, o in zip(names, oracle))
    total = sum(CORPUS_COUNTS.values())
    q1 = language_distribution(LanguageStats(CORPUS_COUNTS, 1.0))
    alpha_one_exact = all(q1[n] == CORPUS_COUNTS[n] / total for n in names)
    equal = language_distribution(LanguageStats({n: 1000 for n in names}, 0.7))
    uniform = all(abs(v - 1 / 7) < 1e-15 for v in equal.values())
    rng = np.random.default_rng(5)
    draws = [sample_language(q, rng) for _ in range(10_000)]
    z = max(abs(draws.count(n) / 10_000 - q[n]) / math.sqrt(q[n] * (1 - q[n]) / 10_000) for n in names)
    ok = err < 1e-12 and alpha_one_exact and uniform and z <= 3
    report(5, "sampler", ok,
           f"max |q - oracle| {err:.1e} (<1e-12); alpha=1 exact {alpha_one_exact}; equal counts 1/7 {uniform}; "
           f"max draw deviation {z:.2f} sigma (<=3)")


def test_06_schedule():
    s = build_schedule(80_000)
    counts_ok = s.counts == (24_000, 24_000, 12_000, 12_000, 4_000, 4_000)
    table = np.frombuffer(s._table, dtype=np.uint8)
    actual = np.stack([np.cumsum(table == i) for i in range(6)], axis=1)
    observed = np.bincount(table, minlength=6)
    n = np.arange(1, 80_001)[:, None]
    target = n * np.array(s.counts)[None, :] / 80_000
    worst = float(np.abs(actual - target).max())
    ok = counts_ok and tuple(observed) == s.counts and worst <= 1
    report(6, "schedule", ok, f"counts {tuple(int(c) for c in observed)}; worst prefix deviation {worst:.3f} steps (<=1)")


def _perturbed_tiny(seed=0):
    cfg = ModelConfig(64, layers_enc=2, layers_dec=2, dim=16, heads=4, max_positions=12, dropout_rate=0.1)
    model = init_params(cfg, seed).double()
    gen = torch.Generator().manual_seed(seed + 1)
    with torch.no_grad():
        # move away from the near-zero init so every tensor has a sizeable gradient
        for p in model.parameters():
            p.add_(torch.randn(p.shape, generator=gen, dtype=torch.float64) * 0.3)
    return model


def _rand_seq(rng, length, eos=False):
    ids = [CLS, CODE] + [int(x) for x in rng.integers(BYTE_OFFSET, 64, length - 2)]
    if eos:
        ids[-1] = EOS
    return SegmentedSequence(tuple(ids), tuple(infer_segments(ids)))


def test_07_gradient_checks():
    t0 = time.perf_counter()
    model = _perturbed_tiny()
    params = list(model.parameters())
    rng = np.random.default_rng(0)
    srcs, tgts = [_rand_seq(rng, 12), _rand_seq(rng, 9)], [_rand_seq(rng, 10, True), _rand_seq(rng, 7, True)]
    err_s2s = central_difference_max_rel_error(lambda: loss_seq2seq(model, srcs, tgts), params)
    a = [_rand_seq(rng, 8) for _ in range(4)]
    b = [_rand_seq(rng, 11) for _ in range(4)]
    err_con = central_difference_max_rel_error(
        lambda: contrastive_loss(pooled_representation(model, a), pooled_representation(model, b), model.cfg.tau),
        params)
    elapsed = time.perf_counter() - t0
    n = sum(p.numel() for p in params)
    ok = err_s2s < 1e-3 and err_con < 1e-3 and elapsed < 300
    report(7, "gradient checks", ok,
           f"{n} parameters; max rel err seq2seq {err_s2s:.1e}, contrastive {err_con:.1e} (<1e-3); "
           f"{elapsed:.0f}s (limit 300s)")


def test_08_loss_identities(vocab):
    x = torch.randn(1, 16, dtype=torch.float64, generator=torch.Generator().manual_seed(0))
    b1 = contrastive_loss(x, torch.randn(1, 16, dtype=torch.float64), 0.05).item()
    tau = 0.05
    e = torch.eye(2, dtype=torch.float64)
    b2 = contrastive_loss(e, e, tau).item()
    b2_ref = math.log(1 + math.exp(-1 / tau))
    b2_tau1 = contrastive_loss(e, e, 1.0).item()
    cfg = ModelConfig(vocab.size, dim=32, heads=4, max_positions=64)
    model = init_params(cfg, 0)
    with torch.no_grad():
        model.dec_norm.weight.zero_()
        model.dec_norm.bias.zero_()
        model.out_bias.zero_()
    rng = np.random.default_rng(1)
    ids = [CLS] + [int(t) for t in rng.integers(BYTE_OFFSET, vocab.size, 10)] + [EOS]
    tgt = SegmentedSequence(tuple(ids), tuple(infer_segments(ids)))
    uni = loss_seq2seq(model, [tgt], [tgt]).item()
    ok = (b1 == 0.0 and abs(b2 - b2_ref) < 1e-6 and abs(b2_tau1 - math.log(1 + math.e ** -1)) < 1e-6
          and abs(uni - math.log(vocab.size)) < 1e-6)
    report(8, "loss identities", ok,
           f"b=1 loss {b1}; b=2 orthogonal {b2:.3e} vs {b2_ref:.3e} (tau=1: {b2_tau1:.4f}); "
           f"uniform seq2seq {uni:.6f} vs ln|V| {math.log(vocab.size):.6f}")


def test_09_memorization():
    torch.set_num_threads(1)
    records = random_commits(8, seed=3, max_files=1, max_hunks=1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        vocab = train_bpe(commit_texts(records), 600)
    seqs = [build_full_input(r, vocab, max_len=255) for r in records]
    state = ModelState.fresh(ModelConfig(vocab.size, max_positions=256), 0)
    max_steps = 2000
    hyper = TrainHyper.with_warmup(max_steps, lr=2e-4)
    noise = NoiseConfig()
    probes = [apply_text_infilling(s, noise, np.random.default_rng([99, i])) for i, s in enumerate(seqs)]
    t0 = time.perf_counter()
    em = 0
    step = 0
    while step < max_steps:
        rng = np.random.default_rng([1, step])
        batch = [PretrainExample(PretrainTask.TEXT_INFILLING, *apply_text_infilling(s, noise, rng)) for s in seqs]
        train_step(state, batch, hyper, seed=0)
        step += 1
        if step % 100 == 0:
            outs = greedy_decode(state.model, [p[0] for p in probes], 256)
            em = sum(o == list(p[1].token_ids[1:-1]) for o, p in zip(outs, probes))
            if em == len(seqs):
                break
    elapsed = time.perf_counter() - t0
    report(9, "memorization", em == 8 and elapsed < 600,
           f"masked-span recovery EM {em}/8 after {step} steps (<=2000), {elapsed:.0f}s (limit 600s)")


@pytest.fixture(scope="module")
def smoke_chains(tmp_path_factory):
    """The full ingest -> pretrain(200) -> finetune msg(100) -> generate -> evaluate chain, run twice."""
    root = tmp_path_factory.mktemp("chains")
    log = root / "log.txt"
    log.write_text("".join(render_git_show(r) for r in random_commits(200, seed=1, max_files=1, max_hunks=2)))
    codes = {}
    for name in ("a", "b"):
        d = root / name
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            codes[name] = [
                main(["ingest", "--input", str(log), "--out", str(d / "corpus")]),
                main(["pretrain", "--corpus", str(d / "corpus"), "--steps", "200", "--seed", "7",
                      "--out", str(d / "pt")]),
                main(["finetune", "--task", "msg", "--ckpt", str(d / "pt" / "checkpoint"), "--data",
                      str(d / "corpus"), "--steps", "100", "--seed", "7", "--out", str(d / "ft")]),
                main(["generate", "--task", "msg", "--ckpt", str(d / "ft" / "checkpoint"), "--data", str(d / "ft"),
                      "--out", str(d / "gen")]),
                main(["evaluate", "--task", "msg", "--pred-dir", str(d / "gen"), "--out", str(d / "ev")]),
            ]
    return root, codes


def test_10_learning_signal(smoke_chains):
    root, codes = smoke_chains
    with open(root / "a" / "pt" / "loss_curve.csv") as fh:
        rows = list(csv.DictReader(fh))
    category = {t.value: t.category for t in TASK_ORDER}
    first, last = defaultdict(list), defaultdict(list)
    for row in rows:
        step = int(row["step"])
        if step < 20:
            first[category[row["task"]]].append(float(row["loss"]))
        elif step >= 180:
            last[category[row["task"]]].append(float(row["loss"]))
    parts = []
    ok = codes["a"][1] == 0
    for cat in ("denoise", "generation", "contrastive"):
        if not first[cat] or not last[cat]:
            ok = False
            parts.append(f"{cat}: no steps")
            continue
        f, l = np.mean(first[cat]), np.mean(last[cat])
        ok &= bool(l < f)
        parts.append(f"{cat} {f:.3f}->{l:.3f}")
    per_task = []
    for task in ("simcse", "nlpl_align"):
        f = [float(r["loss"]) for r in rows if r["task"] == task and int(r["step"]) < 20]
        l = [float(r["loss"]) for r in rows if r["task"] == task and int(r["step"]) >= 180]
        per_task.append(f"{task} {np.mean(f):.3f}->{np.mean(l):.3f} (n={len(f)}/{len(l)})")
    report(10, "learning signal", ok,
           "; ".join(parts) + " (first 20 vs final 20 of 200 steps); contrastive by task: " + ", ".join(per_task))


HAND_COUNTED = [
    # preds, golds, (acc, precision, recall, f1) from the confusion table by hand
    ((True, True, False, False), (True, False, True, False),
     (Fraction(1, 2), Fraction(1, 2), Fraction(1, 2), Fraction(1, 2))),
    ((True, True, True, False), (True, True, False, False),
     (Fraction(3, 4), Fraction(2, 3), Fraction(1), Fraction(4, 5))),
    ((None, True, False, True), (True, True, False, False),
     (Fraction(1, 2), Fraction(1, 2), Fraction(1, 2), Fraction(1, 2))),
    ((False, False, False, True), (True, True, True, True),
     (Fraction(1, 4), Fraction(1), Fraction(1, 4), Fraction(2, 5))),
    ((True, True, True, True), (True, True, True, True),
     (Fraction(1), Fraction(1), Fraction(1), Fraction(1))),
]


def test_11_spi_format(vocab):
    lengths_ok = roundtrip_ok = True
    for rec, label in labeled_commits(500, seed=11):
        _, tgt = build_spi_example(LabeledCommit(rec, label), vocab)
        lengths_ok &= len(tgt) == 5
        roundtrip_ok &= parse_spi_prediction(vocab.decode(tgt.token_ids)) is label
    metrics_ok = True
    for preds, golds, want in HAND_COUNTED:
        got = classification_metrics(list(preds), list(golds)).overall
        metrics_ok &= (got["acc"], got["precision"], got["recall"], got["f1"]) == tuple(float(w) for w in want)
    report(11, "SPI format", lengths_ok and roundtrip_ok and metrics_ok,
           f"500 targets of length 5: {lengths_ok}; label round trip: {roundtrip_ok}; "
           f"{len(HAND_COUNTED)} hand-counted confusion fixtures exact: {metrics_ok}")


def test_12_bleu_oracle():
    identical = [smoothed_bleu4(s, s) for s in ("Fix NPE in parser", "a", "x = f(y);  // done")]
    rng = np.random.default_rng(12)
    words = "fix add the bug null check ( ) ; . , buffer parse x y return if else".split()
    worst = 0.0
    for _ in range(50):
        h = " ".join(rng.choice(words, int(rng.integers(1, 15))))
        r = " ".join(rng.choice(words, int(rng.integers(1, 15))))
        worst = max(worst, abs(smoothed_bleu4(h, r) - bleu_reference(h, r)))
    ok = all(v == 100.0 for v in identical) and worst < 1e-6
    report(12, "BLEU oracle", ok, f"identical pairs {identical}; max |diff| over 50 random pairs {worst:.1e} (<1e-6)")


def test_13_determinism(smoke_chains):
    root, codes = smoke_chains
    a, b = root / "a", root / "b"
    same = {}
    for rel in ("pt/checkpoint/tensors.f32", "pt/checkpoint/manifest.json", "ft/checkpoint/tensors.f32",
                "ft/checkpoint/manifest.json", "gen/hyps.jsonl", "ev/report.json"):
        same[rel] = (a / rel).read_bytes() == (b / rel).read_bytes()
    exits_ok = codes["a"] == [0] * 5 and codes["b"] == [0] * 5
    differing = [k for k, v in same.items() if not v]
    report(13, "determinism", exits_ok and not differing,
           f"chain exit codes {codes['a']} / {codes['b']}; {len(same) - len(differing)}/{len(same)} artifacts "
           f"bitwise identical" + (f"; differing: {differing}" if differing else ""))
