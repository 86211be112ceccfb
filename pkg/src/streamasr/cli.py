"""Command line interface.

Subcommands:

* ``gen-corpus``: synthesize a deterministic corpus (JSON Lines).
* ``build-sequences``: lay a corpus out as training sequences.
* ``decode``: run one decoding strategy over a corpus and score it.
* ``ablate``: strategy-by-chunk-size grid with a summary table.
* ``verify``: run the self-check battery (``--full`` for full scale).

Writing commands drop ``<out>.manifest.json`` beside their output: the
resolved configuration, package version, and a sha256 per input file, so a
run is reproducible from the manifest alone. A ``--config`` file of
``key=value`` lines (long option names, underscores) seeds any command's
defaults; explicit flags win.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

from . import __version__
from .corpus import CorpusConfig, gen_synthetic_corpus, read_corpus, write_corpus
from .engine import (
    PARADIGM_OF,
    STRATEGIES,
    StrategyConfig,
    run_stream,
    session_new,
)
from .layout import ChunkingConfig, SpecialTokens, build_cs, build_ns, build_ss
from .metrics import (
    LatencyReport,
    RowSummary,
    edit_distance,
    emission_latency,
    pool_counts,
    summarize,
    to_csv,
)
from .model import ToyDecoder, make_boundary_oracle, make_teacher_oracle
from .verify import run_battery

_BUILDERS = {"ns": build_ns, "ss": build_ss, "cs": build_cs}


def chunk_ms_to_frames(chunk_ms: float, frames_per_second: float) -> int:
    """Floor to whole frames; a chunk is never shorter than one frame."""
    return max(1, int(math.floor(chunk_ms * frames_per_second / 1000.0)))


def _sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _write_manifest(out: str, command: str, ns: argparse.Namespace,
                    inputs: list[str], summary: dict | None = None) -> None:
    config = {
        k: v for k, v in vars(ns).items()
        if k not in ("func", "command", "config") and not k.startswith("_")
    }
    manifest = {
        "command": command,
        "version": __version__,
        "config": config,
        "inputs": {p: _sha256(p) for p in inputs},
        "outputs": [out],
    }
    if summary is not None:
        manifest["summary"] = summary
    with open(f"{out}.manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_config_overrides(argv: list[str]) -> dict[str, str]:
    """key=value defaults; values stay strings, commands coerce on use."""
    if "--config" not in argv:
        return {}
    path = argv[argv.index("--config") + 1]
    overrides: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise SystemExit(f"config line without '=': {raw.rstrip()}")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key == "fps":
                key = "frames_per_second"
            overrides[key] = value
    return overrides


# --------------------------------------------------------------------------
# subcommands


def _cmd_gen_corpus(ns: argparse.Namespace) -> int:
    cfg = CorpusConfig(
        num_utterances=int(ns.num_utterances),
        vocab_size=int(ns.vocab_size),
        frames_per_second=float(ns.frames_per_second),
        min_tokens=int(ns.min_tokens),
        max_tokens=int(ns.max_tokens),
        frames_per_token_mean=float(ns.frames_per_token_mean),
        noise_std=float(ns.noise_std),
        frame_dim=int(ns.frame_dim),
        seed=int(ns.seed),
    )
    utts = gen_synthetic_corpus(cfg)
    write_corpus(ns.out, utts, cfg, inline_frames=bool(ns.inline_frames))
    _write_manifest(ns.out, "gen-corpus", ns, [])
    print(f"wrote {len(utts)} utterances to {ns.out}")
    return 0


def _cmd_build_sequences(ns: argparse.Namespace) -> int:
    utts = read_corpus(ns.corpus)
    sp = SpecialTokens()
    frames = chunk_ms_to_frames(float(ns.chunk_ms), float(ns.frames_per_second))
    ck = ChunkingConfig(frames, int(ns.speech_text_ratio))
    with open(ns.out, "w", encoding="utf-8") as fh:
        for u in utts:
            if ns.paradigm == "ns":
                seq = build_ns(u, sp)
            else:
                seq = _BUILDERS[ns.paradigm](u, ck, sp)
            rec = {
                "id": u.id,
                "paradigm": ns.paradigm,
                "chunk_frames": frames,
                "positions": [str(p) for p in seq.positions],
                "targets": seq.targets,
                "segments": [[list(s), list(t)] for s, t in seq.segments],
            }
            fh.write(json.dumps(rec) + "\n")
    _write_manifest(ns.out, "build-sequences", ns, [ns.corpus])
    print(f"wrote {len(utts)} {ns.paradigm} sequences to {ns.out}")
    return 0


def _make_model_factory(ns: argparse.Namespace, utts, sp: SpecialTokens,
                        vocab: int):
    """Returns model_for(utt, paradigm, chunking) for the --model spec."""
    spec = ns.model
    if spec == "teacher":
        def factory(u, paradigm, ck):
            if paradigm == "ns":
                return make_teacher_oracle(build_ns(u, sp), sp, vocab)
            return make_teacher_oracle(_BUILDERS[paradigm](u, ck, sp), sp, vocab)
        return factory
    if spec.startswith("boundary:"):
        window = int(spec.split(":", 1)[1])
        suite = make_boundary_oracle(utts, window, sp=sp, vocab_size=vocab)
        return lambda u, paradigm, ck: suite.bind(u, paradigm)
    model = ToyDecoder.load(spec)
    return lambda u, paradigm, ck: model


def _run_strategy(utts, strategy: StrategyConfig, ck: ChunkingConfig,
                  factory, sp: SpecialTokens, fps: float, chunk_ms: float):
    paradigm = PARADIGM_OF[strategy.name]
    per_utt = []
    counts = []
    pooled_lat = LatencyReport()
    positions = 0
    for u in utts:
        sess = session_new(factory(u, paradigm, ck), ck, strategy, sp)
        hyp = run_stream(sess, u.frames)
        c = edit_distance(u.tokens, hyp)
        counts.append(c)
        lat = emission_latency(sess.records, u.alignments, chunk_ms, fps)
        pooled_lat.emit_ms.extend(lat.emit_ms)
        pooled_lat.finalize_ms.extend(lat.finalize_ms)
        positions += sess.stats.forward_positions
        per_utt.append({
            "id": u.id,
            "ref": list(u.tokens),
            "hyp": hyp,
            "errors": {
                "substitutions": c.substitutions,
                "insertions": c.insertions,
                "deletions": c.deletions,
                "ref_len": c.ref_len,
            },
            "records": [
                {
                    "token": r.token,
                    "first_token": r.first_token,
                    "retracted_value": r.retracted_value,
                    "emit_chunk": r.emit_chunk,
                    "finalize_chunk": r.finalize_chunk,
                    "provisional": r.provisional,
                    "revised": r.revised,
                    "retracted": r.retracted,
                }
                for r in sess.records
            ],
            "stats": sess.stats.as_dict(),
        })
    pooled = pool_counts(counts)
    row = RowSummary(
        name=f"{strategy.name}@{ck.chunk_frames}f",
        wers=((100.0 * pooled.wer,),),
        counts=pooled,
        emit_ms=pooled_lat.mean_emit_ms,
        finalize_ms=pooled_lat.mean_finalize_ms,
        max_spike_ms=pooled_lat.max_spike_ms,
        forward_positions=positions,
    )
    return row, per_utt


def _strategy_from_ns(ns: argparse.Namespace, name: str) -> StrategyConfig:
    # --beam-width only applies to beam strategies, so a mixed
    # greedy-and-beam sweep can share one flag value
    width = int(ns.beam_width) if name.endswith("_beam") else 1
    return StrategyConfig(
        name=name,
        beam_width=width,
        hold_n=int(ns.hold_n),
        wait_k=int(ns.wait_k),
        max_decode_per_turn=int(ns.max_decode_per_turn),
    )


def _cmd_decode(ns: argparse.Namespace) -> int:
    utts = read_corpus(ns.corpus)
    sp = SpecialTokens()
    vocab = int(ns.vocab_size)
    fps = float(ns.frames_per_second)
    ck = ChunkingConfig(chunk_ms_to_frames(float(ns.chunk_ms), fps),
                        int(ns.speech_text_ratio))
    factory = _make_model_factory(ns, utts, sp, vocab)
    strategy = _strategy_from_ns(ns, ns.strategy)
    row, per_utt = _run_strategy(utts, strategy, ck, factory, sp, fps,
                                 float(ns.chunk_ms))
    print(summarize([row]))
    if ns.out:
        # one JSON line per utterance; the run-level summary lives in the
        # manifest next to it
        with open(ns.out, "w", encoding="utf-8") as fh:
            for entry in per_utt:
                fh.write(json.dumps(entry) + "\n")
        _write_manifest(
            ns.out, "decode", ns, [ns.corpus],
            summary={
                "strategy": strategy.name,
                "chunk_frames": ck.chunk_frames,
                "wer": row.counts.wer,
                "emit_latency_ms": row.emit_ms,
                "finalize_latency_ms": row.finalize_ms,
                "max_spike_ms": row.max_spike_ms,
                "forward_positions": row.forward_positions,
            })
    return 0


def _cmd_ablate(ns: argparse.Namespace) -> int:
    utts = read_corpus(ns.corpus)
    sp = SpecialTokens()
    vocab = int(ns.vocab_size)
    fps = float(ns.frames_per_second)
    strategies = [s.strip() for s in ns.strategies.split(",") if s.strip()]
    for s in strategies:
        if s not in STRATEGIES:
            raise SystemExit(f"unknown strategy {s!r}")
    rows = []
    results = []
    for chunk_ms in (float(x) for x in ns.chunk_ms.split(",")):
        ck = ChunkingConfig(chunk_ms_to_frames(chunk_ms, fps),
                            int(ns.speech_text_ratio))
        factory = _make_model_factory(ns, utts, sp, vocab)
        for name in strategies:
            strategy = _strategy_from_ns(ns, name)
            row, _ = _run_strategy(utts, strategy, ck, factory, sp, fps,
                                   chunk_ms)
            rows.append(row)
            c = row.counts
            results.append({
                "strategy": name,
                "chunk_ms": chunk_ms,
                "chunk_frames": ck.chunk_frames,
                "wer": c.wer,
                "substitutions": c.substitutions,
                "insertions": c.insertions,
                "deletions": c.deletions,
                "ref_len": c.ref_len,
                "emit_latency_ms": row.emit_ms,
                "finalize_latency_ms": row.finalize_ms,
                "max_spike_ms": row.max_spike_ms,
                "forward_positions": row.forward_positions,
            })
    print(summarize(rows))
    if ns.out:
        with open(ns.out, "w", encoding="utf-8") as fh:
            json.dump({"rows": results}, fh, indent=2)
            fh.write("\n")
        _write_manifest(ns.out, "ablate", ns, [ns.corpus])
    if ns.csv:
        with open(ns.csv, "w", encoding="utf-8") as fh:
            fh.write(to_csv(rows))
        _write_manifest(ns.csv, "ablate", ns, [ns.corpus])
    return 0


def _cmd_verify(ns: argparse.Namespace) -> int:
    results = run_battery(full=bool(ns.full), seed=int(ns.seed))
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


# --------------------------------------------------------------------------
# parser


def _add_fps_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument("--fps", "--frames-per-second", dest="frames_per_second",
                   default=25.0, type=float)


def _add_common_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", default="boundary:1",
                   help="parameter file path, 'teacher', or 'boundary:<window>'")
    p.add_argument("--vocab-size", default=32, type=int)
    _add_fps_arg(p)
    p.add_argument("--speech-text-ratio", default=2, type=int)
    p.add_argument("--beam-width", default=1, type=int)
    p.add_argument("--hold-n", default=1, type=int)
    p.add_argument("--wait-k", default=1, type=int)
    p.add_argument("--max-decode-per-turn", default=256, type=int)


def build_parser() -> tuple[argparse.ArgumentParser, list[argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="streamasr",
        description="training-sequence construction and streaming decoding",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-corpus", help="synthesize a deterministic corpus")
    g.add_argument("--config", help="key=value defaults file")
    g.add_argument("--out", required=True)
    g.add_argument("--num-utterances", default=200, type=int)
    g.add_argument("--vocab-size", default=32, type=int)
    _add_fps_arg(g)
    g.add_argument("--min-tokens", default=5, type=int)
    g.add_argument("--max-tokens", default=20, type=int)
    g.add_argument("--frames-per-token-mean", default=4.0, type=float)
    g.add_argument("--noise-std", default=0.05, type=float)
    g.add_argument("--frame-dim", default=8, type=int)
    g.add_argument("--seed", default=0, type=int)
    g.add_argument("--inline-frames", action="store_true",
                   help="store frame matrices instead of regeneration seeds")
    g.set_defaults(func=_cmd_gen_corpus)

    b = sub.add_parser("build-sequences", help="lay a corpus out for training")
    b.add_argument("--config", help="key=value defaults file")
    b.add_argument("--corpus", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--paradigm", choices=("ns", "ss", "cs"), required=True)
    b.add_argument("--chunk-ms", default=640.0, type=float)
    _add_fps_arg(b)
    b.add_argument("--speech-text-ratio", default=2, type=int)
    b.set_defaults(func=_cmd_build_sequences)

    d = sub.add_parser("decode", help="decode a corpus with one strategy")
    d.add_argument("--config", help="key=value defaults file")
    d.add_argument("--corpus", required=True)
    d.add_argument("--strategy", choices=STRATEGIES, required=True)
    d.add_argument("--chunk-ms", default=640.0, type=float)
    d.add_argument("--out")
    _add_common_model_args(d)
    d.set_defaults(func=_cmd_decode)

    a = sub.add_parser("ablate", help="strategy x chunk-size comparison grid")
    a.add_argument("--config", help="key=value defaults file")
    a.add_argument("--corpus", required=True)
    a.add_argument(
        "--strategies",
        default="ss_greedy,cs_fallback_greedy,ss_beam,cs_fallback_beam")
    a.add_argument("--chunk-ms", default="1000,640,320")
    a.add_argument("--out", help="JSON summary path")
    a.add_argument("--csv", help="CSV report path")
    _add_common_model_args(a)
    # the stock grid pairs each greedy strategy with its width-3 beam twin
    a.set_defaults(func=_cmd_ablate, beam_width=3)

    v = sub.add_parser("verify", help="run the self-check battery")
    v.add_argument("--config", help="key=value defaults file")
    v.add_argument("--full", action="store_true", help="full-scale checks")
    v.add_argument("--seed", default=0, type=int)
    v.set_defaults(func=_cmd_verify)
    return parser, [g, b, d, a, v]


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subcommands = build_parser()
    overrides = _read_config_overrides(argv)
    if overrides:
        # subparsers parse into their own namespace, so defaults go on them
        for sp in subcommands:
            sp.set_defaults(**overrides)
            for action in sp._actions:
                # a config-supplied value satisfies a required flag
                if action.dest in overrides:
                    action.required = False
    ns = parser.parse_args(argv)
    try:
        return ns.func(ns)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
