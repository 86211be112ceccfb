"""Synthetic corpus generation and alignment ingestion.

Everything downstream (chunk assignment, interleaved layouts, latency
accounting) reads the per-token frame spans produced here, so the rules are
kept deliberately small: text is normalized to lowercase with punctuation
stripped, character timings are aggregated to token level by min/max, and
millisecond timings are converted to frame indices by flooring.

Token ids below FIRST_TEXT_ID are reserved for layout specials (pad, sos,
eos) and never appear in corpus token sequences.
"""

from __future__ import annotations

import json
import math
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

# Reserved id prefix: 0 = pad, 1 = sos, 2 = eos. Kept here (not in layout)
# so corpus generation does not depend on layout code.
FIRST_TEXT_ID = 3

__all__ = [
    "FIRST_TEXT_ID",
    "AlignmentError",
    "OverlappingSpans",
    "MultiCharCjkToken",
    "CharAlignment",
    "TokenAlignment",
    "Utterance",
    "CorpusConfig",
    "normalize_text",
    "aggregate_alignments",
    "make_codebook",
    "gen_synthetic_corpus",
    "write_corpus",
    "read_corpus",
    "load_char_alignments",
]


class AlignmentError(ValueError):
    """Malformed alignment input."""


class OverlappingSpans(AlignmentError):
    """Character spans overlap, leave gaps, or fall out of range."""


class MultiCharCjkToken(AlignmentError):
    """A token span covers more than one CJK character.

    CJK text is kept at character granularity; a subword spanning several
    characters has no usable character-level timing.
    """


@dataclass(frozen=True)
class CharAlignment:
    char: str
    start_ms: int
    end_ms: int


@dataclass(frozen=True)
class TokenAlignment:
    token_id: int
    start_frame: int
    end_frame: int  # inclusive


@dataclass
class Utterance:
    id: str
    tokens: list[int]
    alignments: list[TokenAlignment]
    frames: np.ndarray  # [num_frames, frame_dim], float64

    @property
    def num_frames(self) -> int:
        return int(self.frames.shape[0])


@dataclass(frozen=True)
class CorpusConfig:
    num_utterances: int = 200
    vocab_size: int = 32
    frames_per_second: float = 25.0
    min_tokens: int = 5
    max_tokens: int = 20
    frames_per_token_mean: float = 4.0
    noise_std: float = 0.05
    frame_dim: int = 8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.vocab_size <= FIRST_TEXT_ID:
            raise ValueError("vocab_size must exceed the reserved special ids")
        if not (1 <= self.min_tokens <= self.max_tokens):
            raise ValueError("need 1 <= min_tokens <= max_tokens")
        if self.frames_per_token_mean < 2:
            raise ValueError("frames_per_token_mean must be >= 2")


_WS_RE = None  # whitespace handled via str.split, no regex needed


def normalize_text(text: str) -> str:
    """Lowercase, strip punctuation, collapse whitespace. Idempotent."""
    lowered = text.lower()
    kept = "".join(
        ch for ch in lowered if not unicodedata.category(ch).startswith("P")
    )
    return " ".join(kept.split())


_CJK_RANGES = (
    (0x2E80, 0x2EFF),    # radicals
    (0x3400, 0x4DBF),    # ext A
    (0x4E00, 0x9FFF),    # unified
    (0xF900, 0xFAFF),    # compatibility
    (0x20000, 0x2FA1F),  # ext B..F + compat supplement
)


def _is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


def _ms_to_frame(ms: float, fps: float) -> int:
    # Floor: a frame is counted once its start time has been reached.
    return int(math.floor(ms * fps / 1000.0))


def aggregate_alignments(
    chars: Sequence[CharAlignment],
    token_char_spans: Sequence[tuple[int, int]],
    frames_per_second: float,
    token_ids: Sequence[int] | None = None,
) -> list[TokenAlignment]:
    """Aggregate character timings to token spans.

    ``token_char_spans`` are inclusive (start, end) indices into ``chars``
    and must partition the character sequence in order. Token frame spans
    are min/max over the constituent characters, floored to frame indices.
    ``token_ids`` defaults to the span ordinal; callers mapping to a real
    vocabulary pass their own ids.
    """
    for i, ca in enumerate(chars):
        if ca.start_ms > ca.end_ms:
            raise AlignmentError(f"char {i}: start_ms > end_ms")
        if i and ca.start_ms < chars[i - 1].end_ms:
            raise OverlappingSpans(f"char {i} overlaps char {i - 1}")
    if token_ids is not None and len(token_ids) != len(token_char_spans):
        raise AlignmentError("token_ids and token_char_spans length mismatch")

    out: list[TokenAlignment] = []
    expect = 0
    for j, (lo, hi) in enumerate(token_char_spans):
        if lo != expect or hi < lo or hi >= len(chars):
            raise OverlappingSpans(
                f"token span {j} ({lo},{hi}) does not partition the chars"
            )
        expect = hi + 1
        n_cjk = sum(1 for k in range(lo, hi + 1) if _is_cjk(chars[k].char))
        if n_cjk > 1:
            raise MultiCharCjkToken(
                f"token span {j} covers {n_cjk} CJK characters"
            )
        start = _ms_to_frame(min(chars[k].start_ms for k in range(lo, hi + 1)),
                             frames_per_second)
        end = _ms_to_frame(max(chars[k].end_ms for k in range(lo, hi + 1)),
                           frames_per_second)
        tid = token_ids[j] if token_ids is not None else j
        out.append(TokenAlignment(tid, start, end))
    if expect != len(chars):
        raise OverlappingSpans("token spans do not cover all characters")
    return out


def make_codebook(seed: int, vocab_size: int, frame_dim: int) -> np.ndarray:
    """Fixed per-token frame embeddings, derived only from (seed, vocab, dim)."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    return rng.uniform(-1.0, 1.0, size=(vocab_size, frame_dim))


def _token_length_bounds(mean: float) -> tuple[int, int]:
    m = int(round(mean))
    return max(1, m - 1), m + 1


def _gen_frames(
    cfg: CorpusConfig,
    index: int,
    alignments: Sequence[TokenAlignment],
    num_frames: int,
    codebook: np.ndarray,
) -> np.ndarray:
    # Frames draw from a stream separate from the structure stream so that
    # lazily stored corpora can regenerate them from (seed, index) alone.
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2, index]))
    frames = np.zeros((num_frames, cfg.frame_dim), dtype=np.float64)
    for al in alignments:
        frames[al.start_frame : al.end_frame + 1] = codebook[al.token_id]
    if cfg.noise_std > 0:
        frames += rng.normal(0.0, cfg.noise_std, size=frames.shape)
    return frames


def _gen_structure(
    cfg: CorpusConfig, index: int
) -> tuple[list[int], list[TokenAlignment], int]:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1, index]))
    n = int(rng.integers(cfg.min_tokens, cfg.max_tokens + 1))
    tokens = [int(t) for t in rng.integers(FIRST_TEXT_ID, cfg.vocab_size, n)]
    lo, hi = _token_length_bounds(cfg.frames_per_token_mean)
    lengths = rng.integers(lo, hi + 1, n)
    alignments: list[TokenAlignment] = []
    at = 0
    for tid, ln in zip(tokens, lengths):
        alignments.append(TokenAlignment(tid, at, at + int(ln) - 1))
        at += int(ln)
    # 1..2 trailing silence frames keep the last token end strictly inside
    # the stream, so a full-context decode always sees audio past it.
    trailing = int(rng.integers(1, 3))
    return tokens, alignments, at + trailing


def gen_synthetic_corpus(cfg: CorpusConfig) -> list[Utterance]:
    """Deterministic synthetic corpus: contiguous token spans plus noise.

    Each token occupies a contiguous frame span whose vectors are its
    codebook row plus gaussian noise; 1..2 trailing frames are noise only.
    Byte-identical output for identical config.
    """
    codebook = make_codebook(cfg.seed, cfg.vocab_size, cfg.frame_dim)
    utts = []
    for i in range(cfg.num_utterances):
        tokens, alignments, num_frames = _gen_structure(cfg, i)
        frames = _gen_frames(cfg, i, alignments, num_frames, codebook)
        utts.append(
            Utterance(
                id=f"utt{i:05d}",
                tokens=tokens,
                alignments=alignments,
                frames=frames,
            )
        )
    return utts


def write_corpus(
    path: str | Path,
    utts: Iterable[Utterance],
    cfg: CorpusConfig | None = None,
    inline_frames: bool = False,
) -> None:
    """JSON Lines, one utterance per line.

    With ``inline_frames`` the frame matrix is stored row-major; otherwise a
    frames_seed record carries everything needed to regenerate the frames
    bit-exactly (requires ``cfg``).
    """
    if not inline_frames and cfg is None:
        raise ValueError("lazy frame storage needs the corpus config")
    with open(path, "w", encoding="utf-8") as fh:
        for i, u in enumerate(utts):
            rec: dict = {
                "id": u.id,
                "tokens": u.tokens,
                "alignments": [[a.start_frame, a.end_frame] for a in u.alignments],
            }
            if inline_frames:
                rec["frames"] = [[float(x) for x in row] for row in u.frames]
                rec["frame_dim"] = int(u.frames.shape[1])
            else:
                assert cfg is not None
                rec["num_frames"] = u.num_frames
                rec["frames_seed"] = {
                    "seed": cfg.seed,
                    "index": i,
                    "noise_std": cfg.noise_std,
                    "frame_dim": cfg.frame_dim,
                    "vocab_size": cfg.vocab_size,
                }
            fh.write(json.dumps(rec) + "\n")


def read_corpus(path: str | Path) -> list[Utterance]:
    utts = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            alignments = [
                TokenAlignment(tid, s, e)
                for tid, (s, e) in zip(rec["tokens"], rec["alignments"])
            ]
            if "frames" in rec:
                frames = np.asarray(rec["frames"], dtype=np.float64)
                if frames.size == 0:
                    frames = frames.reshape(0, rec.get("frame_dim", 0))
            else:
                fs = rec["frames_seed"]
                cfg = CorpusConfig(
                    num_utterances=1,
                    vocab_size=fs["vocab_size"],
                    noise_std=fs["noise_std"],
                    frame_dim=fs["frame_dim"],
                    seed=fs["seed"],
                )
                codebook = make_codebook(
                    fs["seed"], fs["vocab_size"], fs["frame_dim"]
                )
                frames = _gen_frames(
                    cfg, fs["index"], alignments, rec["num_frames"], codebook
                )
            utts.append(
                Utterance(
                    id=rec["id"],
                    tokens=list(rec["tokens"]),
                    alignments=alignments,
                    frames=frames,
                )
            )
    return utts


def load_char_alignments(path: str | Path) -> list[CharAlignment]:
    """Read the character-alignment ingest format: JSONL of char/start_ms/end_ms."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            out.append(CharAlignment(rec["char"], rec["start_ms"], rec["end_ms"]))
    return out


def validate_utterance(u: Utterance) -> None:
    """Invariant check used by tests and the verify command."""
    if len(u.tokens) != len(u.alignments):
        raise AlignmentError(f"{u.id}: tokens/alignments length mismatch")
    prev_end = -1
    for al in u.alignments:
        if al.start_frame > al.end_frame:
            raise AlignmentError(f"{u.id}: empty span")
        if al.start_frame <= prev_end:
            raise OverlappingSpans(f"{u.id}: unsorted or overlapping spans")
        prev_end = al.end_frame
    if u.alignments and u.alignments[-1].end_frame >= u.num_frames:
        raise AlignmentError(f"{u.id}: alignment past the last frame")
    for t in u.tokens:
        if t < FIRST_TEXT_ID:
            raise AlignmentError(f"{u.id}: reserved id {t} used as token")
