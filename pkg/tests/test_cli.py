import csv
import json

import numpy as np
import pytest

from priodiff.cli import EXIT_BAD_CONFIG, EXIT_OK, load_run_config, main
from priodiff.corpus import load_corpus
from priodiff.schedule import linear_base_schedule


def run(*argv):
    return main(list(argv))


@pytest.fixture()
def desk_config(tmp_path):
    cfg = {
        "seed": 7,
        "num_categories": 8,
        "num_steps": 10,
        "corpus_size": 40,
        "denoiser_passes": 40,
        "pos_buckets": 12,
        "vq_epochs": 60,
        "agent_episodes": 200,
    }
    p = tmp_path / "config.json"
    p.write_text(json.dumps(cfg))
    return p


def test_seed_required(tmp_path):
    assert run("synth", "--out", str(tmp_path / "o")) == EXIT_BAD_CONFIG


def test_unknown_config_key(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"seed": 1, "bogus_key": 2}')
    assert run("synth", "--config", str(p), "--out", str(tmp_path / "o")) == EXIT_BAD_CONFIG


def test_missing_config_file(tmp_path):
    assert run("synth", "--config", str(tmp_path / "nope.json"),
               "--out", str(tmp_path / "o")) == EXIT_BAD_CONFIG


def test_preset_flag_overrides_config(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{"seed": 1, "num_categories": 5}')
    cfg = load_run_config(str(p), None, None)
    assert cfg.num_categories == 5
    cfg = load_run_config(str(p), "paper", None)
    assert cfg.num_categories == 8192 and cfg.num_steps == 100


def test_synth_stats_pipeline(tmp_path, desk_config):
    out = tmp_path / "synth"
    assert run("synth", "--config", str(desk_config), "--out", str(out)) == EXIT_OK
    corpus = load_corpus(out / "corpus.jsonl", 8)
    assert len(corpus) == 40

    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 7
    assert "corpus.jsonl" in manifest["artifacts"]

    stats_out = tmp_path / "stats"
    assert run("stats", "--config", str(desk_config), "--corpus",
               str(out / "corpus.jsonl"), "--out", str(stats_out)) == EXIT_OK
    with open(stats_out / "stats.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 8
    assert sum(int(r["count"]) for r in rows) == sum(s.length for s in corpus)


def test_synth_deterministic(tmp_path, desk_config):
    a = tmp_path / "a"
    b = tmp_path / "b"
    run("synth", "--config", str(desk_config), "--out", str(a))
    run("synth", "--config", str(desk_config), "--out", str(b))
    assert (a / "corpus.jsonl").read_bytes() == (b / "corpus.jsonl").read_bytes()
    assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()


def test_score_schedule_pipeline(tmp_path, desk_config):
    synth_out = tmp_path / "synth"
    run("synth", "--config", str(desk_config), "--out", str(synth_out))

    score_out = tmp_path / "scores"
    assert run("score", "--config", str(desk_config), "--corpus",
               str(synth_out / "corpus.jsonl"), "--out", str(score_out),
               "--mode", "static") == EXIT_OK
    recs = [json.loads(line) for line in
            (score_out / "scores.jsonl").read_text().splitlines()]
    assert len(recs) == 40
    for rec in recs:
        scores = np.asarray(rec["scores"])
        assert abs(scores.sum() - scores.size) < 1e-9 * scores.size

    sched_out = tmp_path / "sched"
    assert run("schedule", "--config", str(desk_config),
               "--scores", str(score_out / "scores.jsonl"),
               "--out", str(sched_out)) == EXIT_OK
    with open(sched_out / "schedule.csv") as fh:
        rows = list(csv.DictReader(fh))
    n_pos = len(recs[0]["scores"])
    assert len(rows) == n_pos * 10

    # mean-one scores leave the midpoint mask mass at its base value
    base = linear_base_schedule(10, 8)
    mid = [float(r["gamma_bar"]) for r in rows if r["t"] == "5"]
    assert np.mean(mid) == pytest.approx(base.gamma_bar[0, 5], abs=1e-9)
    assert (sched_out / "bands.csv").exists()


def test_quantize_artifacts(tmp_path, desk_config):
    out = tmp_path / "vq"
    assert run("quantize", "--config", str(desk_config), "--out", str(out)) == EXIT_OK
    for name in ("codebook.json", "tokens.jsonl", "usage.csv", "loss_trace.csv",
                 "manifest.json"):
        assert (out / name).exists(), name
    tokens = load_corpus(out / "tokens.jsonl", 8)
    assert len(tokens) == 40


def test_train_generate_pipeline(tmp_path, desk_config):
    synth_out = tmp_path / "synth"
    run("synth", "--config", str(desk_config), "--out", str(synth_out))

    train_out = tmp_path / "train"
    assert run("train", "--config", str(desk_config), "--corpus",
               str(synth_out / "corpus.jsonl"), "--out", str(train_out)) == EXIT_OK
    assert (train_out / "denoiser.json").exists()
    trace_rows = (train_out / "vlb_trace.csv").read_text().splitlines()
    assert trace_rows[0] == "checkpoint,holdout_vlb"
    assert len(trace_rows) > 1

    gen_a = tmp_path / "gen_a"
    gen_b = tmp_path / "gen_b"
    for out in (gen_a, gen_b):
        assert run("generate", "--config", str(desk_config),
                   "--denoiser", str(train_out / "denoiser.json"),
                   "--out", str(out), "--count", "5", "--length", "6",
                   "--seed", "1") == EXIT_OK
    assert (gen_a / "samples.jsonl").read_bytes() == (gen_b / "samples.jsonl").read_bytes()
    samples = load_corpus(gen_a / "samples.jsonl", 8)
    assert len(samples) == 5
    assert all(s.length == 6 and s.is_clean for s in samples)


def test_generate_requires_length_or_scores(tmp_path, desk_config):
    synth_out = tmp_path / "synth"
    run("synth", "--config", str(desk_config), "--out", str(synth_out))
    train_out = tmp_path / "train"
    run("train", "--config", str(desk_config), "--corpus",
        str(synth_out / "corpus.jsonl"), "--out", str(train_out))
    assert run("generate", "--config", str(desk_config),
               "--denoiser", str(train_out / "denoiser.json"),
               "--out", str(tmp_path / "g")) == EXIT_BAD_CONFIG


def test_dynamic_score_requires_codebook(tmp_path, desk_config):
    synth_out = tmp_path / "synth"
    run("synth", "--config", str(desk_config), "--out", str(synth_out))
    assert run("score", "--config", str(desk_config), "--corpus",
               str(synth_out / "corpus.jsonl"), "--out", str(tmp_path / "s"),
               "--mode", "dynamic") == EXIT_BAD_CONFIG


def test_verify_paper_smoke(tmp_path):
    out = tmp_path / "verify"
    assert run("verify", "--preset", "paper", "--seed", "0",
               "--out", str(out)) == EXIT_OK
    report = json.loads((out / "report.json").read_text())
    assert report["passed"] is True
    assert report["preset"] == "paper"


def test_verify_exit_code_on_failure(tmp_path, monkeypatch):
    from priodiff import cli
    from priodiff.verify import CheckResult

    monkeypatch.setattr(
        cli, "run_desk_suite",
        lambda seed: [CheckResult("forced failure", False, "synthetic", 0.0)])
    assert run("verify", "--preset", "desk", "--seed", "0",
               "--out", str(tmp_path / "v")) == 1


def test_dynamic_score_with_codebook(tmp_path, desk_config):
    vq_out = tmp_path / "vq"
    run("quantize", "--config", str(desk_config), "--out", str(vq_out))
    score_out = tmp_path / "dyn"
    assert run("score", "--config", str(desk_config),
               "--corpus", str(vq_out / "tokens.jsonl"),
               "--out", str(score_out), "--mode", "dynamic",
               "--codebook", str(vq_out / "codebook.json")) == EXIT_OK
    assert (score_out / "agent.json").exists()
    recs = [json.loads(line) for line in
            (score_out / "scores.jsonl").read_text().splitlines()]
    for rec in recs[:5]:
        scores = np.asarray(rec["scores"])
        assert abs(scores.sum() - scores.size) < 1e-9 * scores.size
