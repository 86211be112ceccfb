"""Unified training-sequence construction and streaming decoding.

The package covers one pipeline at desk scale: synthesize or ingest an
aligned corpus (`corpus`), lay each utterance out for non-streaming,
standard streaming, or context-aware streaming training (`layout`), run a
deterministic toy decoder or a replay oracle over those layouts (`model`),
decode chunk by chunk with commit, fallback, or re-decoding strategies
(`engine`), and score the result (`metrics`). `verify` wires the
guarantees to executable checks; `cli` fronts everything.
"""

__version__ = "0.1.0"

from .corpus import (
    FIRST_TEXT_ID,
    CharAlignment,
    CorpusConfig,
    TokenAlignment,
    Utterance,
    aggregate_alignments,
    gen_synthetic_corpus,
    normalize_text,
    read_corpus,
    write_corpus,
)
from .engine import (
    STRATEGIES,
    EmissionRecord,
    SessionStats,
    StrategyConfig,
    StreamingSession,
    beam_turn_decode,
    collect_stats,
    fallback_rewind,
    final_hypothesis,
    push_chunk,
    run_stream,
    session_new,
)
from .layout import (
    ChunkingConfig,
    MixedSequence,
    Position,
    SpecialTokens,
    build_cs,
    build_ns,
    build_ss,
    chunk_bounds,
    chunk_utterance,
    sample_paradigm,
    stage_plan,
)
from .metrics import ErrorCounts, edit_distance, emission_latency, summarize
from .model import (
    KVCache,
    ModelConfig,
    StreamItem,
    ToyDecoder,
    adapter_forward,
    build_attention_mask,
    make_boundary_oracle,
    make_teacher_oracle,
    make_toy_model,
    masked_ce_loss,
    param_count,
)
from .verify import run_battery

__all__ = [
    "__version__",
    "FIRST_TEXT_ID",
    "CharAlignment",
    "CorpusConfig",
    "TokenAlignment",
    "Utterance",
    "aggregate_alignments",
    "gen_synthetic_corpus",
    "normalize_text",
    "read_corpus",
    "write_corpus",
    "ChunkingConfig",
    "MixedSequence",
    "Position",
    "SpecialTokens",
    "build_cs",
    "build_ns",
    "build_ss",
    "chunk_bounds",
    "chunk_utterance",
    "sample_paradigm",
    "stage_plan",
    "KVCache",
    "ModelConfig",
    "StreamItem",
    "ToyDecoder",
    "adapter_forward",
    "build_attention_mask",
    "make_boundary_oracle",
    "make_teacher_oracle",
    "make_toy_model",
    "masked_ce_loss",
    "param_count",
    "STRATEGIES",
    "EmissionRecord",
    "SessionStats",
    "StrategyConfig",
    "StreamingSession",
    "beam_turn_decode",
    "collect_stats",
    "fallback_rewind",
    "final_hypothesis",
    "push_chunk",
    "run_stream",
    "session_new",
    "ErrorCounts",
    "edit_distance",
    "emission_latency",
    "summarize",
    "run_battery",
]
