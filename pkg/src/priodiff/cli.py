"""Command-line surface wiring the library into reproducible, seeded runs.

Single binary with subcommands. Every command reads an optional JSON config
file plus flag overrides, derives all randomness from one required seed, and
writes its artifacts atomically together with a manifest that records the
config hash, seed, and package version. Outputs are pure functions of
(config, seed) at the content level; manifests carry no timestamps so reruns
are byte-identical.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import (
    count_frequencies,
    load_corpus,
    save_corpus,
    synth_cluster_corpus,
    synth_grammar_corpus,
    write_stats_csv,
)
from .denoiser import TabularTrainConfig, generate, load_tabular, save_tabular, train_tabular
from .priority import (
    OrderingAgentConfig,
    PriorityScores,
    dynamic_scores,
    save_policy,
    static_scores,
    token_entropy,
    train_ordering_agent,
    uniform_scores,
)
from .quantizer import ToyVqConfig, load_codebook, quantize, save_codebook, train_toy_vq, write_usage_csv
from .schedule import apply_priority, export_priority_bands_csv, export_schedule_csv, linear_base_schedule
from .verify import run_desk_suite, run_paper_smoke

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_BAD_CONFIG = 2

PRESETS = {
    "desk": {"num_categories": 16, "num_steps": 10},
    "paper": {"num_categories": 8192, "num_steps": 100},
}


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    seed: int | None = None
    preset: str = "desk"
    num_categories: int = 16
    num_steps: int = 10
    code_width: int = 3
    input_width: int = 4
    eta: float = 0.25
    delta: float = 3.0
    gamma_bar_final: float = 0.9
    kbeta_bar_final: float = 0.1
    priority_mode: str = "static"  # none | static | dynamic
    corpus_size: int = 200
    len_min: int = 6
    len_max: int = 12
    skew: float = 1.0
    clusters: int = 6
    cluster_spread: float = 0.35
    vq_epochs: int = 300
    vq_learning_rate: float = 0.5
    denoiser_passes: int = 200
    denoiser_epsilon: float = 1e-3
    t_buckets: int = 4
    pos_buckets: int = 8
    agent_episodes: int = 1200
    agent_learning_rate: float = 0.15

    def validate(self) -> None:
        if self.seed is None:
            raise ConfigError("seed is required (flag --seed or config key \"seed\")")
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}")
        if self.priority_mode not in ("none", "static", "dynamic"):
            raise ConfigError(f"unknown priority_mode {self.priority_mode!r}")
        if self.num_categories < 2 or self.num_steps < 1:
            raise ConfigError("num_categories must be >= 2 and num_steps >= 1")

    def base_schedule(self):
        return linear_base_schedule(self.num_steps, self.num_categories,
                                    self.gamma_bar_final, self.kbeta_bar_final)


def load_run_config(config_path: str | None, preset: str | None,
                    seed: int | None) -> RunConfig:
    """Defaults <- preset <- config file <- explicit flags, then validation."""
    fields = {f.name for f in dataclasses.fields(RunConfig)}
    values: dict = {}
    file_preset = None
    if config_path is not None:
        path = Path(config_path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(raw) - fields
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        file_preset = raw.get("preset")
        values.update(raw)

    chosen_preset = preset or file_preset or "desk"
    merged = dict(PRESETS.get(chosen_preset, {}))
    merged.update(values)
    merged["preset"] = chosen_preset
    if preset is not None:  # explicit flag wins over file values
        merged.update(PRESETS[preset])
        merged["preset"] = preset
    if seed is not None:
        merged["seed"] = seed
    cfg = RunConfig(**merged)
    cfg.validate()
    return cfg


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out_dir: Path, command: str, cfg: RunConfig,
                    artifacts: list[Path]) -> None:
    cfg_dict = dataclasses.asdict(cfg)
    cfg_json = json.dumps(cfg_dict, sort_keys=True, separators=(",", ":"))
    manifest = {
        "command": command,
        "package_version": __version__,
        "seed": cfg.seed,
        "preset": cfg.preset,
        "config_sha256": hashlib.sha256(cfg_json.encode()).hexdigest(),
        "config": cfg_dict,
        "artifacts": {p.name: _sha256(p) for p in sorted(artifacts)},
    }
    _atomic_write(out_dir / "manifest.json",
                  (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode())


def _staged(out_dir: Path, name: str):
    """Write artifacts through a temp file then move into place."""
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir / name


def _write_via(path: Path, writer) -> Path:
    tmp = path.parent / f".{path.name}.stage"
    writer(tmp)
    os.replace(tmp, path)
    return path


def _load_scores_file(path: Path) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            out[rec["sequence_id"]] = np.asarray(rec["scores"], dtype=np.float64)
    return out


# ---------------------------------------------------------------------------
# command handlers


def cmd_synth(cfg: RunConfig, args) -> int:
    out_dir = Path(args.out)
    seqs = synth_grammar_corpus(cfg.seed, cfg.corpus_size, cfg.num_categories,
                                (cfg.len_min, cfg.len_max), cfg.skew)
    corpus_path = _write_via(_staged(out_dir, "corpus.jsonl"),
                             lambda p: save_corpus(seqs, p))
    _write_manifest(out_dir, "synth", cfg, [corpus_path])
    print(f"wrote {corpus_path} ({len(seqs)} sequences)")
    return EXIT_OK


def cmd_stats(cfg: RunConfig, args) -> int:
    out_dir = Path(args.out)
    corpus = load_corpus(args.corpus, cfg.num_categories)
    stats = count_frequencies(corpus)
    stats_path = _write_via(_staged(out_dir, "stats.csv"),
                            lambda p: write_stats_csv(stats, p))
    _write_manifest(out_dir, "stats", cfg, [stats_path])
    print(f"wrote {stats_path} (total {stats.total} tokens)")
    return EXIT_OK


def cmd_quantize(cfg: RunConfig, args) -> int:
    out_dir = Path(args.out)
    continuous = synth_cluster_corpus(cfg.seed, cfg.corpus_size, dim=cfg.input_width,
                                      n_clusters=cfg.clusters, spread=cfg.cluster_spread,
                                      skew=cfg.skew)
    vq_cfg = ToyVqConfig(num_codes=cfg.num_categories, code_width=cfg.code_width,
                         input_width=cfg.input_width, eta=cfg.eta, delta=cfg.delta,
                         learning_rate=cfg.vq_learning_rate, epochs=cfg.vq_epochs,
                         seed=cfg.seed)
    model, trace = train_toy_vq(continuous, vq_cfg)

    tokens = []
    for i, seq in enumerate(continuous):
        ts = quantize(model.encode(seq.frames), model.codebook, count_usage=False)
        tokens.append(dataclasses.replace(ts, seq_id=f"q{i:05d}"))
    from .quantizer import usage_report
    report = usage_report(model.codebook, tokens)

    book_path = _write_via(_staged(out_dir, "codebook.json"),
                           lambda p: save_codebook(model.codebook, p))
    tokens_path = _write_via(_staged(out_dir, "tokens.jsonl"),
                             lambda p: save_corpus(tokens, p))
    usage_path = _write_via(_staged(out_dir, "usage.csv"),
                            lambda p: write_usage_csv(report, p))

    def write_trace(p):
        with open(p, "w", encoding="utf-8") as fh:
            fh.write("epoch,reconstruction,embedding,commitment,orthogonal,total\n")
            for i, r in enumerate(trace):
                fh.write(f"{i},{r.reconstruction!r},{r.embedding!r},"
                         f"{r.commitment!r},{r.orthogonal!r},{r.total!r}\n")

    trace_path = _write_via(_staged(out_dir, "loss_trace.csv"), write_trace)
    _write_manifest(out_dir, "quantize", cfg,
                    [book_path, tokens_path, usage_path, trace_path])
    print(f"wrote {book_path}; usage fraction {report.fraction:.3f}, "
          f"entropy {report.entropy:.3f} nats")
    return EXIT_OK


def cmd_score(cfg: RunConfig, args) -> int:
    out_dir = Path(args.out)
    corpus = load_corpus(args.corpus, cfg.num_categories)
    mode = args.mode or cfg.priority_mode
    artifacts: list[Path] = []

    if mode == "static":
        entropy = token_entropy(count_frequencies(corpus))
        scored = []
        for seq in corpus:
            try:
                scored.append(static_scores(seq, entropy))
            except ValueError:
                scored.append(uniform_scores(seq.length))
    elif mode == "dynamic":
        if not args.codebook:
            raise ConfigError("dynamic scoring needs --codebook for the decoder")
        book = load_codebook(args.codebook)
        agent_cfg = OrderingAgentConfig(learning_rate=cfg.agent_learning_rate,
                                        episodes=cfg.agent_episodes, seed=cfg.seed)
        policy, _ = train_ordering_agent(corpus, book, agent_cfg)
        agent_path = _write_via(_staged(out_dir, "agent.json"),
                                lambda p: save_policy(policy, agent_cfg, p))
        artifacts.append(agent_path)
        scored = [dynamic_scores(seq, policy, book) for seq in corpus]
    elif mode == "none":
        scored = [uniform_scores(seq.length) for seq in corpus]
    else:
        raise ConfigError(f"unknown scoring mode {mode!r}")

    def write_scores(p):
        with open(p, "w", encoding="utf-8") as fh:
            for i, (seq, sc) in enumerate(zip(corpus, scored)):
                rec = {"sequence_id": seq.seq_id or f"s{i:05d}",
                       "scores": [float(v) for v in sc.scores]}
                fh.write(json.dumps(rec, separators=(",", ":")) + "\n")

    scores_path = _write_via(_staged(out_dir, "scores.jsonl"), write_scores)
    artifacts.append(scores_path)
    _write_manifest(out_dir, "score", cfg, artifacts)
    print(f"wrote {scores_path} ({mode} mode, {len(scored)} sequences)")
    return EXIT_OK


def cmd_schedule(cfg: RunConfig, args) -> int:
    out_dir = Path(args.out)
    scores_by_id = _load_scores_file(Path(args.scores))
    if not scores_by_id:
        raise ConfigError(f"no scores found in {args.scores}")
    seq_id = args.sequence_id or next(iter(scores_by_id))
    if seq_id not in scores_by_id:
        raise ConfigError(f"sequence id {seq_id!r} not present in {args.scores}")
    scores = PriorityScores(scores_by_id[seq_id])

    base = cfg.base_schedule()
    table = apply_priority(base, scores)
    schedule_path = _write_via(_staged(out_dir, "schedule.csv"),
                               lambda p: export_schedule_csv(table, p))
    bands_path = _write_via(_staged(out_dir, "bands.csv"),
                            lambda p: export_priority_bands_csv(table, scores, p))
    _write_manifest(out_dir, "schedule", cfg, [schedule_path, bands_path])
    print(f"wrote {schedule_path} for sequence {seq_id} "
          f"({table.num_positions} positions, T={table.num_steps})")
    return EXIT_OK


def cmd_train(cfg: RunConfig, args) -> int:
    out_dir = Path(args.out)
    corpus = load_corpus(args.corpus, cfg.num_categories)
    table = cfg.base_schedule()
    train_cfg = TabularTrainConfig(passes=cfg.denoiser_passes,
                                   epsilon=cfg.denoiser_epsilon,
                                   t_buckets=cfg.t_buckets,
                                   pos_buckets=cfg.pos_buckets,
                                   seed=cfg.seed)
    den, trace = train_tabular(corpus, table, train_cfg)
    den_path = _write_via(_staged(out_dir, "denoiser.json"),
                          lambda p: save_tabular(den, train_cfg, p))

    def write_trace(p):
        with open(p, "w", encoding="utf-8") as fh:
            fh.write("checkpoint,holdout_vlb\n")
            for i, v in enumerate(trace):
                fh.write(f"{i},{v!r}\n")

    trace_path = _write_via(_staged(out_dir, "vlb_trace.csv"), write_trace)
    _write_manifest(out_dir, "train", cfg, [den_path, trace_path])
    print(f"wrote {den_path}; final holdout bound {trace[-1]:.4f} nats")
    return EXIT_OK


def cmd_generate(cfg: RunConfig, args) -> int:
    out_dir = Path(args.out)
    den, _ = load_tabular(args.denoiser)
    if den.num_categories != cfg.num_categories:
        raise ConfigError("denoiser checkpoint and config disagree on num_categories")
    base = cfg.base_schedule()
    if args.scores:
        scores_by_id = _load_scores_file(Path(args.scores))
        seq_id = args.sequence_id or next(iter(scores_by_id))
        if seq_id not in scores_by_id:
            raise ConfigError(f"sequence id {seq_id!r} not present in {args.scores}")
        table = apply_priority(base, PriorityScores(scores_by_id[seq_id]))
        length = table.num_positions
    else:
        table = base
        length = args.length
        if length is None:
            raise ConfigError("--length is required without --scores")

    rng = np.random.default_rng(cfg.seed)
    seqs = []
    for i in range(args.count):
        out = generate(den, table, length, args.condition, rng)
        seqs.append(dataclasses.replace(out, seq_id=f"g{i:05d}"))
    samples_path = _write_via(_staged(out_dir, "samples.jsonl"),
                              lambda p: save_corpus(seqs, p))
    _write_manifest(out_dir, "generate", cfg, [samples_path])
    print(f"wrote {samples_path} ({args.count} sequences of length {length})")
    return EXIT_OK


def cmd_verify(cfg: RunConfig, args) -> int:
    results = (run_desk_suite(cfg.seed) if cfg.preset == "desk"
               else run_paper_smoke(cfg.seed))
    width = max(len(r.name) for r in results)
    for r in results:
        mark = "PASS" if r.passed else "FAIL"
        print(f"[{mark}] {r.name:<{width}} ({r.seconds:6.2f}s) {r.detail}")
    total = sum(r.seconds for r in results)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed in {total:.1f}s")

    if args.out:
        out_dir = Path(args.out)
        report = {
            "preset": cfg.preset,
            "seed": cfg.seed,
            "passed": not failed,
            "checks": [dataclasses.asdict(r) for r in results],
        }
        report_path = _staged(out_dir, "report.json")
        _atomic_write(report_path,
                      (json.dumps(report, indent=2, sort_keys=True) + "\n").encode())
        _write_manifest(out_dir, "verify", cfg, [report_path])
    return EXIT_CHECK_FAILED if failed else EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="priodiff",
        description="Priority-aware mask-and-replace categorical diffusion toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="run seed (required here or in config)")
        p.add_argument("--preset", choices=sorted(PRESETS),
                       help="desk (K=16, T=10) or paper (K=8192, T=100)")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("synth", help="generate a synthetic token corpus")
    common(p)

    p = sub.add_parser("stats", help="per-category frequency counts")
    common(p)
    p.add_argument("--corpus", required=True)

    p = sub.add_parser("quantize", help="train the toy quantizer and tokenize")
    common(p)

    p = sub.add_parser("score", help="per-token priority scores")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--mode", choices=["none", "static", "dynamic"])
    p.add_argument("--codebook", help="codebook checkpoint (decoder for dynamic mode)")

    p = sub.add_parser("schedule", help="per-position corruption schedule")
    common(p)
    p.add_argument("--scores", required=True, help="scores.jsonl from the score command")
    p.add_argument("--sequence-id", help="which sequence's scores to use (default first)")

    p = sub.add_parser("train", help="train the tabular denoiser")
    common(p)
    p.add_argument("--corpus", required=True)

    p = sub.add_parser("generate", help="sample sequences through the reverse chain")
    common(p)
    p.add_argument("--denoiser", required=True)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--length", type=int)
    p.add_argument("--condition", type=int)
    p.add_argument("--scores", help="optional scores.jsonl for a priority schedule")
    p.add_argument("--sequence-id")

    p = sub.add_parser("verify", help="run the brute-force oracle suite")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    p.add_argument("--out", help="optional directory for report.json")

    return parser


HANDLERS = {
    "synth": cmd_synth,
    "stats": cmd_stats,
    "quantize": cmd_quantize,
    "score": cmd_score,
    "schedule": cmd_schedule,
    "train": cmd_train,
    "generate": cmd_generate,
    "verify": cmd_verify,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_run_config(getattr(args, "config", None),
                              getattr(args, "preset", None),
                              getattr(args, "seed", None))
        return HANDLERS[args.command](cfg, args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
