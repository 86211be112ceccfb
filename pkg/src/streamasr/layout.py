"""Training-sequence construction for the three decoding paradigms.

A single utterance can be laid out three ways:

* non-streaming: all speech, then sos and the transcript, eos as the final
  target;
* standard streaming: speech chunks interleaved with fixed-size text slots,
  pad acting as both slot filler and turn-stop;
* context-aware streaming: the standard streaming layout with each
  non-terminal segment's last token masked to pad in the input and
  re-queued for the successor segment, which is what lets inference revise
  a chunk-final token one chunk later at no added emission latency.

The slot arithmetic is shared: a chunk of ``n`` frames owns
``ceil(n / ratio)`` text slots; tokens become due in the first chunk whose
end boundary lies past their final frame; overflow carries forward and any
remainder after the last chunk forms a speech-less flush segment.

Targets follow teacher forcing over the laid-out inputs. A text position
followed by speech (or by nothing) targets pad: the turn-stop. A text
position followed by the flush segment targets the flush's first token, so
generation flows through the boundary without waiting for audio that will
never arrive. In the context-aware layout the position before a masked slot
targets the masked token itself (the provisional prediction) and eos is
never a target; the standard streaming layout instead ends with exactly one
eos at the utterance's final stop position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .corpus import FIRST_TEXT_ID, TokenAlignment, Utterance

__all__ = [
    "SpecialTokens",
    "ChunkingConfig",
    "Position",
    "speech",
    "text",
    "SegmentPlan",
    "MixedSequence",
    "chunk_bounds",
    "chunk_utterance",
    "build_ns",
    "build_ss",
    "build_cs",
    "sample_paradigm",
    "StageConfig",
    "stage_plan",
]

PARADIGMS = ("ns", "ss", "cs")


@dataclass(frozen=True)
class SpecialTokens:
    pad: int = 0
    sos: int = 1
    eos: int = 2
    first_text_id: int = FIRST_TEXT_ID

    def __post_init__(self) -> None:
        ids = (self.pad, self.sos, self.eos)
        if len(set(ids)) != 3:
            raise ValueError("special ids must be distinct")
        if self.first_text_id <= max(ids):
            raise ValueError("first_text_id must exceed every special id")

    def is_text(self, token_id: int) -> bool:
        return token_id >= self.first_text_id


@dataclass(frozen=True)
class ChunkingConfig:
    chunk_frames: int
    speech_text_ratio: int = 2

    def __post_init__(self) -> None:
        if self.chunk_frames < 1 or self.speech_text_ratio < 1:
            raise ValueError("chunk_frames and speech_text_ratio must be >= 1")

    def slots(self, n_frames: int) -> int:
        """Text slot budget for a chunk of n_frames frames."""
        return math.ceil(n_frames / self.speech_text_ratio)


@dataclass(frozen=True)
class Position:
    """One sequence position: a speech frame ("s") or a text token ("t")."""

    kind: str  # "s" | "t"
    value: int  # frame index or token id

    def __str__(self) -> str:
        return f"{self.kind}:{self.value}"


def speech(frame_index: int) -> Position:
    return Position("s", frame_index)


def text(token_id: int) -> Position:
    return Position("t", token_id)


@dataclass
class SegmentPlan:
    """Chunk assignment: which token occurrences a segment emits.

    ``token_indexes`` are occurrence indices into the utterance token list
    (standard-streaming view: due order with overflow carried forward).
    The flush segment, if present, has an empty frame range.
    """

    chunk_index: int
    frame_start: int
    frame_end: int  # half-open
    token_indexes: list[int]
    is_flush: bool = False

    @property
    def n_frames(self) -> int:
        return self.frame_end - self.frame_start


@dataclass
class MixedSequence:
    positions: list[Position]
    targets: list[int | None]  # None = no loss at this position
    # ((speech_lo, speech_hi), (text_lo, text_hi)) position-index ranges,
    # half-open; together the segments tile the sequence.
    segments: list[tuple[tuple[int, int], tuple[int, int]]]
    paradigm: str = "ss"

    def __len__(self) -> int:
        return len(self.positions)


def chunk_bounds(total_frames: int, chunk_frames: int) -> list[tuple[int, int]]:
    if total_frames <= 0:
        return []
    return [
        (s, min(s + chunk_frames, total_frames))
        for s in range(0, total_frames, chunk_frames)
    ]


def _dues_by_chunk(
    alignments: Sequence[TokenAlignment], bounds: Sequence[tuple[int, int]]
) -> list[list[int]]:
    """Token occurrence indices becoming due per chunk.

    A token is due in the first chunk whose end boundary lies strictly past
    the token's last frame, so a token ending exactly on a chunk's final
    frame belongs to that chunk.
    """
    dues: list[list[int]] = [[] for _ in bounds]
    k = 0
    for i, al in enumerate(alignments):
        while k < len(bounds) and al.end_frame >= bounds[k][1]:
            k += 1
        if k >= len(bounds):
            raise ValueError(f"token {i} ends past the stream ({al.end_frame})")
        dues[k].append(i)
    return dues


def chunk_utterance(
    alignments: Sequence[TokenAlignment],
    cfg: ChunkingConfig,
    total_frames: int,
) -> list[SegmentPlan]:
    """Standard-streaming chunk assignment with overflow and flush."""
    bounds = chunk_bounds(total_frames, cfg.chunk_frames)
    dues = _dues_by_chunk(alignments, bounds)
    plans: list[SegmentPlan] = []
    pending: list[int] = []
    for k, (lo, hi) in enumerate(bounds):
        pending.extend(dues[k])
        m = cfg.slots(hi - lo)
        take, pending = pending[:m], pending[m:]
        plans.append(SegmentPlan(k, lo, hi, take))
    if pending:
        plans.append(
            SegmentPlan(len(bounds), total_frames, total_frames, pending, is_flush=True)
        )
    return plans


@dataclass
class _Seg:
    # Builder-internal final view of one segment's text slots.
    plan_frames: tuple[int, int]
    chunk_index: int
    tokens: list[int]       # occurrence indices, in emission order
    masked_last: bool       # context-aware: last token shows as pad in input
    n_slots: int            # padded width; flush segments have no padding
    is_flush: bool


def _emit(
    utt: Utterance, segs: list[_Seg], sp: SpecialTokens, paradigm: str
) -> MixedSequence:
    """Lay out positions and teacher-forcing targets from final-view segments."""
    positions: list[Position] = []
    ranges: list[tuple[tuple[int, int], tuple[int, int]]] = []
    # Per text position: the input token id and, for a masked slot, the
    # original token id it stands for.
    slot_input: list[int] = []
    slot_original: list[int | None] = []

    for seg in segs:
        s_lo = len(positions)
        positions.extend(speech(f) for f in range(*seg.plan_frames))
        t_lo = len(positions)
        for j, occ in enumerate(seg.tokens):
            tok = utt.tokens[occ]
            if seg.masked_last and j == len(seg.tokens) - 1:
                positions.append(text(sp.pad))
                slot_input.append(sp.pad)
                slot_original.append(tok)
            else:
                positions.append(text(tok))
                slot_input.append(tok)
                slot_original.append(None)
        for _ in range(seg.n_slots - len(seg.tokens)):
            positions.append(text(sp.pad))
            slot_input.append(sp.pad)
            slot_original.append(None)
        ranges.append(((s_lo, t_lo), (t_lo, len(positions))))

    # Map position index -> slot arrays index for text positions.
    is_text_pos = [p.kind == "t" for p in positions]
    slot_at: list[int | None] = []
    ti = 0
    for flag in is_text_pos:
        slot_at.append(ti if flag else None)
        ti += 1 if flag else 0

    def is_fill(pos_idx: int) -> bool:
        si = slot_at[pos_idx]
        assert si is not None
        return slot_input[si] == sp.pad and slot_original[si] is None

    targets: list[int | None] = [None] * len(positions)
    last_speech = {rng[0][1] - 1 for rng in ranges if rng[0][1] > rng[0][0]}

    for p in range(len(positions)):
        q = p + 1
        if not is_text_pos[p]:
            if p in last_speech:
                # Predicts the first slot: its original token when masked.
                si = slot_at[q]
                assert si is not None
                orig = slot_original[si]
                targets[p] = orig if orig is not None else slot_input[si]
            continue
        if is_fill(p):
            continue  # pad filler carries no loss
        if q >= len(positions) or not is_text_pos[q]:
            targets[p] = sp.pad  # turn-stop before speech or at sequence end
        else:
            si = slot_at[q]
            assert si is not None
            orig = slot_original[si]
            targets[p] = orig if orig is not None else slot_input[si]

    if paradigm == "ss":
        # Exactly one eos, at the utterance's final stop position: the last
        # real token overall, or the last speech of a trailing empty segment.
        stop = None
        for p in range(len(positions) - 1, -1, -1):
            if is_text_pos[p] and not is_fill(p):
                stop = p
                break
        if stop is None or _seg_index_of(ranges, stop) != len(segs) - 1:
            # Tokens ended before the final segment: eos on its last speech.
            s_rng = ranges[-1][0]
            if s_rng[1] > s_rng[0]:
                stop = s_rng[1] - 1
        if stop is not None:
            targets[stop] = sp.eos
    return MixedSequence(positions, targets, ranges, paradigm=paradigm)


def _seg_index_of(
    ranges: list[tuple[tuple[int, int], tuple[int, int]]], pos: int
) -> int:
    for i, (s_rng, t_rng) in enumerate(ranges):
        if s_rng[0] <= pos < t_rng[1]:
            return i
    raise IndexError(pos)


def build_ns(utt: Utterance, sp: SpecialTokens | None = None) -> MixedSequence:
    """Non-streaming layout: speech, sos, transcript; eos as final target."""
    sp = sp or SpecialTokens()
    if not utt.tokens:
        raise ValueError("empty utterance")
    positions = [speech(f) for f in range(utt.num_frames)]
    t_lo = len(positions)
    positions.append(text(sp.sos))
    positions.extend(text(t) for t in utt.tokens)
    targets: list[int | None] = [None] * len(positions)
    for i, tok in enumerate(utt.tokens):
        targets[t_lo + i] = tok
    targets[t_lo + len(utt.tokens)] = sp.eos
    seg = ((0, t_lo), (t_lo, len(positions)))
    return MixedSequence(positions, targets, [seg], paradigm="ns")


def build_ss(
    utt: Utterance, cfg: ChunkingConfig, sp: SpecialTokens | None = None
) -> MixedSequence:
    """Standard streaming layout: interleaved chunks, pad turn-stops, one eos."""
    sp = sp or SpecialTokens()
    plans = chunk_utterance(utt.alignments, cfg, utt.num_frames)
    segs = [
        _Seg(
            plan_frames=(pl.frame_start, pl.frame_end),
            chunk_index=pl.chunk_index,
            tokens=list(pl.token_indexes),
            masked_last=False,
            n_slots=len(pl.token_indexes) if pl.is_flush else cfg.slots(pl.n_frames),
            is_flush=pl.is_flush,
        )
        for pl in plans
    ]
    return _emit(utt, segs, sp, "ss")


def cs_assignment(
    alignments: Sequence[TokenAlignment],
    cfg: ChunkingConfig,
    total_frames: int,
) -> tuple[list[tuple[list[int], bool]], list[tuple[int, int]]]:
    """Context-aware takes per chunk plus the flush queue.

    Returns ([(take, masked_last)] per chunk (+ flush entry last if any),
    chunk bounds). A non-terminal segment's last taken occurrence is masked
    and re-queued at the front, re-appearing in the successor segment. The
    final chunk is terminal only when its take leaves slots to spare; a
    budget-full final take cannot prove the queue empty, so it masks and
    flushes like any other boundary.
    """
    bounds = chunk_bounds(total_frames, cfg.chunk_frames)
    dues = _dues_by_chunk(alignments, bounds)
    takes: list[tuple[list[int], bool]] = []
    pending: list[int] = []
    for k, (lo, hi) in enumerate(bounds):
        pending.extend(dues[k])
        m = cfg.slots(hi - lo)
        take, pending = pending[:m], pending[m:]
        last_chunk = k == len(bounds) - 1
        masked = bool(take) and (not last_chunk or len(take) == m)
        if masked:
            pending.insert(0, take[-1])
        takes.append((take, masked))
    if pending:
        takes.append((pending, False))
    return takes, bounds


def build_cs(
    utt: Utterance, cfg: ChunkingConfig, sp: SpecialTokens | None = None
) -> MixedSequence:
    """Context-aware streaming layout: masked carries, no eos anywhere."""
    sp = sp or SpecialTokens()
    takes, bounds = cs_assignment(utt.alignments, cfg, utt.num_frames)
    segs: list[_Seg] = []
    for k, (take, masked) in enumerate(takes):
        is_flush = k >= len(bounds)
        lo, hi = bounds[k] if not is_flush else (utt.num_frames, utt.num_frames)
        segs.append(
            _Seg(
                plan_frames=(lo, hi),
                chunk_index=k,
                tokens=list(take),
                masked_last=masked,
                n_slots=len(take) if is_flush else cfg.slots(hi - lo),
                is_flush=is_flush,
            )
        )
    return _emit(utt, segs, sp, "cs")


def sample_paradigm(step: int, chunk_attention_active: bool, seed: int) -> str:
    """Paradigm for a training step: uniform over ns/ss/cs when dynamic
    chunk attention is active, ns otherwise. Deterministic in (seed, step)."""
    if not chunk_attention_active:
        return "ns"
    rng = np.random.default_rng(np.random.SeedSequence([seed, 3, step]))
    return PARADIGMS[int(rng.integers(3))]


@dataclass(frozen=True)
class StageConfig:
    stage: int
    encoder_trainable: bool
    adapter_trainable: bool
    decoder_trainable: bool
    paradigms: tuple[str, ...]
    chunk_attention_active: bool


def stage_plan() -> list[StageConfig]:
    """The five-stage fine-tuning schedule.

    Streaming paradigms join only in the final stage, which is also the
    only one running dynamic chunk attention; earlier stages progressively
    unfreeze adapter, then encoder+adapter, then decoder, then everything.
    """
    return [
        StageConfig(1, False, True, False, ("ns",), False),
        StageConfig(2, True, True, False, ("ns",), False),
        StageConfig(3, False, False, True, ("ns",), False),
        StageConfig(4, True, True, True, ("ns",), False),
        StageConfig(5, True, True, True, ("ns", "ss", "cs"), True),
    ]
