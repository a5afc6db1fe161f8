import csv
import json
from collections import defaultdict

import pytest
import torch

from commitlm.checkpoint import load_checkpoint, save_checkpoint
from commitlm.cli import main
from commitlm.commits import record_to_dict, render_git_show
from commitlm.pretrain import PretrainTask
from commitlm.synth import binarizer_git_show, labeled_commits, random_commits
from commitlm.vocab import BYTE_OFFSET, MASK, TRUE

SMALL_MODEL = {"model": {"dim": 32, "heads": 4, "max_positions": 256}, "max_len": 256}


def write_log(path, n=200, seed=1):
    path.write_text("".join(render_git_show(r) for r in random_commits(n, seed=seed, max_files=1, max_hunks=2)))
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    return code, capsys.readouterr()


@pytest.fixture(scope="module")
def smoke(tmp_path_factory):
    """A 200-commit corpus and a 200-step pre-training run shared by the tests below."""
    root = tmp_path_factory.mktemp("smoke")
    cfg = root / "config.json"
    cfg.write_text(json.dumps(SMALL_MODEL))
    assert main(["ingest", "--input", str(write_log(root / "log.txt")), "--out", str(root / "corpus")]) == 0
    assert main(["pretrain", "--corpus", str(root / "corpus"), "--steps", "200", "--config", str(cfg),
                 "--seed", "3", "--out", str(root / "pt")]) == 0
    return root


def test_ingest_reports_and_writes_shards(tmp_path, capsys):
    code, out = run(capsys, "ingest", "--input", write_log(tmp_path / "log.txt"), "--out", tmp_path / "c")
    assert code == 0
    report = json.loads(out.out)
    assert report["accepted"] == 200 and report["total"] == 200
    assert sum(report["accepted_by_language"].values()) == 200
    shard_lines = sum(len(p.read_text().splitlines()) for p in (tmp_path / "c").glob("*.jsonl"))
    assert shard_lines == 200
    manifest = json.loads((tmp_path / "c" / "run_manifest.json").read_text())
    assert manifest["command"] == "ingest" and "wall_clock_s" in manifest


def test_ingest_rerun_on_own_output(tmp_path, capsys):
    run(capsys, "ingest", "--input", write_log(tmp_path / "log.txt", n=30), "--out", tmp_path / "c")
    total = 0
    for shard in sorted((tmp_path / "c").glob("*.jsonl")):
        code, out = run(capsys, "ingest", "--input", shard, "--out", tmp_path / "c")
        report = json.loads(out.out)
        assert code == 0 and report["accepted"] == 0 and report["duplicates"] == report["total"]
        total += report["total"]
    assert total == 30


def test_ingest_missing_input_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as err:
        main(["ingest", "--out", str(tmp_path)])
    assert err.value.code == 2


def test_ingest_malformed_input(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("commit abc\n\n    msg\n\n--- a/x\n+++ b/x\n@@ -1,3 +1,3 @@\n-a\n")
    code, out = run(capsys, "ingest", "--input", bad, "--out", tmp_path / "c")
    assert code == 2 and "error" in out.err
    code, _ = run(capsys, "ingest", "--input", tmp_path / "nope.txt", "--out", tmp_path / "c")
    assert code == 2


def _binarizer_commit_corpus(tmp_path, capsys):
    (tmp_path / "binarizer_commit.txt").write_text(binarizer_git_show())
    code, _ = run(capsys, "ingest", "--input", tmp_path / "binarizer_commit.txt", "--out", tmp_path / "c")
    assert code == 0
    return tmp_path / "c"


def test_build_pretrain_gtm_on_binarizer_commit(tmp_path, capsys):
    corpus = _binarizer_commit_corpus(tmp_path, capsys)
    with pytest.warns(Warning):
        code, _ = run(capsys, "build-pretrain", "--corpus", corpus, "--task", "gtm", "--seed", "0",
                      "--out", tmp_path / "b")
    assert code == 0
    (ex,) = [json.loads(l) for l in (tmp_path / "b" / "examples.jsonl").read_text().splitlines()]
    assert ex["task"] == "gtm"
    segs = {s for t, s in zip(ex["source_ids"], ex["source_segs"]) if t == MASK}
    components = {"M" if s == 0 else "F" if s == 1 else "C" for s in segs}
    assert len(components) >= 2


def test_build_pretrain_all_tasks_deterministic(tmp_path, capsys):
    corpus = tmp_path / "c"
    run(capsys, "ingest", "--input", write_log(tmp_path / "log.txt", n=20), "--out", corpus)
    for name in ("a", "b"):
        code, _ = run(capsys, "build-pretrain", "--corpus", corpus, "--seed", "5", "--out", tmp_path / name)
        assert code == 0
    a = (tmp_path / "a" / "examples.jsonl").read_bytes()
    assert a == (tmp_path / "b" / "examples.jsonl").read_bytes()
    tags = {json.loads(l)["task"] for l in a.decode().splitlines()}
    assert tags == {t.value for t in PretrainTask}


def _curve(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_pretrain_smoke_run(smoke):
    schedule = _curve(smoke / "pt" / "schedule.csv")
    assert {row["task"] for row in schedule} == {t.value for t in PretrainTask}
    rows = _curve(smoke / "pt" / "loss_curve.csv")
    by_task = defaultdict(list)
    for row in rows:
        by_task[row["task"]].append(float(row["loss"]))
    for task in ("text_infilling", "gtm", "pl2nl", "plnl2pl"):
        losses = by_task[task]
        assert sum(losses[-5:]) / 5 < sum(losses[:5]) / 5, task
    ck = load_checkpoint(smoke / "pt" / "checkpoint")
    assert ck.step == 200


def test_pretrain_too_few_steps(tmp_path, capsys, smoke):
    code, out = run(capsys, "pretrain", "--corpus", smoke / "corpus", "--steps", "10", "--out", tmp_path)
    assert code == 2 and "20" in out.err


def test_pretrain_resume_matches_uninterrupted(tmp_path, capsys, smoke):
    common = ["--corpus", smoke / "corpus", "--config", smoke / "config.json", "--seed", "1", "--batch-size", "4",
              "--steps", "30"]
    assert run(capsys, "pretrain", *common, "--out", tmp_path / "full")[0] == 0
    assert run(capsys, "pretrain", *common, "--stop-at", "20", "--out", tmp_path / "part")[0] == 0
    assert load_checkpoint(tmp_path / "part" / "checkpoint").step == 20
    assert run(capsys, "pretrain", *common, "--resume", tmp_path / "part" / "checkpoint",
               "--out", tmp_path / "resumed")[0] == 0
    assert load_checkpoint(tmp_path / "resumed" / "checkpoint").step == 30
    full = (tmp_path / "full" / "checkpoint" / "tensors.f32").read_bytes()
    assert full == (tmp_path / "resumed" / "checkpoint" / "tensors.f32").read_bytes()
    resumed_steps = [int(r["step"]) for r in _curve(tmp_path / "resumed" / "loss_curve.csv")]
    assert resumed_steps[0] == 20


def test_evaluate_identical_msg(tmp_path, capsys):
    rows = [{"id": str(i), "language": "C", "text": f"Fix bug {i} in parser"} for i in range(5)]
    for name in ("h.jsonl", "r.jsonl"):
        (tmp_path / name).write_text("".join(json.dumps(r) + "\n" for r in rows))
    code, out = run(capsys, "evaluate", "--task", "msg", "--hyps", tmp_path / "h.jsonl", "--refs",
                    tmp_path / "r.jsonl", "--out", tmp_path / "ev")
    assert code == 0
    assert json.loads(out.out)["overall"] == {"bleu4": 100.0, "em": 100.0}


def test_evaluate_needs_inputs(tmp_path):
    with pytest.raises(SystemExit) as err:
        main(["evaluate", "--task", "msg", "--out", str(tmp_path)])
    assert err.value.code == 2


def test_spi_rigged_always_true(tmp_path, capsys, smoke):
    state = load_checkpoint(smoke / "pt" / "checkpoint")
    with torch.no_grad():
        state.model.out_bias[TRUE] = 1e4
    rigged = tmp_path / "rigged"
    save_checkpoint(state, rigged)
    (rigged / "vocab.json").write_bytes((smoke / "pt" / "checkpoint" / "vocab.json").read_bytes())
    data = tmp_path / "spi.jsonl"
    data.write_text("".join(json.dumps(dict(record_to_dict(r), label=True)) + "\n"
                            for r, _ in labeled_commits(12, seed=2)))
    code, _ = run(capsys, "generate", "--task", "spi", "--ckpt", rigged, "--data", data, "--max-len", "256",
                  "--out", tmp_path / "gen")
    assert code == 0
    hyps = [json.loads(l)["text"] for l in (tmp_path / "gen" / "hyps.jsonl").read_text().splitlines()]
    assert hyps and all(h.split()[0] == "True" for h in hyps)
    code, out = run(capsys, "evaluate", "--task", "spi", "--pred-dir", tmp_path / "gen", "--out", tmp_path / "ev")
    assert code == 0
    assert json.loads(out.out)["overall"]["recall"] == 1.0


def test_full_chain_msg(tmp_path, capsys, smoke):
    cfg = smoke / "config.json"
    code, _ = run(capsys, "finetune", "--task", "msg", "--ckpt", smoke / "pt" / "checkpoint", "--data",
                  smoke / "corpus", "--steps", "100", "--config", cfg, "--seed", "3", "--out", tmp_path / "ft")
    assert code == 0
    for split in ("train", "valid", "test"):
        assert (tmp_path / "ft" / "splits" / f"{split}.jsonl").exists()
    code, _ = run(capsys, "generate", "--task", "msg", "--ckpt", tmp_path / "ft" / "checkpoint", "--data",
                  tmp_path / "ft", "--split", "test", "--config", cfg, "--out", tmp_path / "gen")
    assert code == 0
    code, out = run(capsys, "evaluate", "--task", "msg", "--pred-dir", tmp_path / "gen", "--out", tmp_path / "ev")
    assert code == 0
    report = json.loads(out.out)
    assert 0 <= report["overall"]["bleu4"] <= 100
    assert set(report) - {"overall"}


def test_config_file_and_flag_precedence(tmp_path, capsys, smoke):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(dict(SMALL_MODEL, steps=25, batch_size=2)))
    code, _ = run(capsys, "pretrain", "--corpus", smoke / "corpus", "--config", cfg, "--steps", "22",
                  "--out", tmp_path / "o")
    assert code == 0
    manifest = json.loads((tmp_path / "o" / "run_manifest.json").read_text())
    assert manifest["config"]["steps"] == 22 and manifest["config"]["batch_size"] == 2
    assert load_checkpoint(tmp_path / "o" / "checkpoint").step == 22


def test_bad_config_is_input_error(tmp_path, capsys, smoke):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{not json")
    code, _ = run(capsys, "pretrain", "--corpus", smoke / "corpus", "--config", cfg, "--out", tmp_path / "o")
    assert code == 2
