"""Sequence layouts pinned against hand-derived values for the running example."""

import numpy as np
import pytest

from streamasr.corpus import CorpusConfig, TokenAlignment, Utterance, gen_synthetic_corpus
from streamasr.layout import (
    ChunkingConfig,
    SpecialTokens,
    build_cs,
    build_ns,
    build_ss,
    chunk_bounds,
    chunk_utterance,
    sample_paradigm,
    stage_plan,
)


def _kinds_values(seq):
    return [(p.kind, p.value) for p in seq.positions]


def _spoken(n):
    return [("s", i) for i in range(n)]


# -----------------------------
# chunking
# -----------------------------

def test_chunk_bounds_covers_with_short_tail():
    assert chunk_bounds(10, 4) == [(0, 4), (4, 8), (8, 10)]
    assert chunk_bounds(8, 4) == [(0, 4), (4, 8)]
    assert chunk_bounds(0, 4) == []


def test_slots_budget_is_ceil():
    ck = ChunkingConfig(chunk_frames=4, speech_text_ratio=2)
    assert ck.slots(4) == 2
    assert ck.slots(3) == 2
    assert ck.slots(1) == 1


def test_chunking_config_validation():
    with pytest.raises(ValueError):
        ChunkingConfig(chunk_frames=0)
    with pytest.raises(ValueError):
        ChunkingConfig(chunk_frames=4, speech_text_ratio=0)


def test_chunk_assignment_running_example(running_example, chunk4):
    plans = chunk_utterance(running_example.alignments, chunk4, 8)
    assert [(p.frame_start, p.frame_end) for p in plans] == [(0, 4), (4, 8)]
    assert [p.token_indexes for p in plans] == [[0], [1, 2]]
    assert not any(p.is_flush for p in plans)


def test_token_on_chunk_edge_assigned_to_that_chunk(chunk4):
    # end frame 3 < chunk end 4: due in the first chunk
    plans = chunk_utterance([TokenAlignment(9, 0, 3)], chunk4, 8)
    assert plans[0].token_indexes == [0]


def test_overflow_carries_then_flushes(chunk4):
    # 5 tokens all due inside a single 4-frame chunk
    aligns = [TokenAlignment(10 + i, min(i, 3), min(i, 3)) for i in range(5)]
    plans = chunk_utterance(aligns, chunk4, 4)
    assert plans[0].token_indexes == [0, 1]
    assert plans[-1].is_flush
    assert plans[-1].token_indexes == [2, 3, 4]
    assert plans[-1].n_frames == 0


# -----------------------------
# non-streaming layout
# -----------------------------

def test_ns_running_example(running_example):
    seq = build_ns(running_example)
    assert _kinds_values(seq) == _spoken(8) + [("t", 1), ("t", 10), ("t", 11), ("t", 12)]
    assert seq.targets == [None] * 8 + [10, 11, 12, 2]
    assert seq.segments == [((0, 8), (8, 12))]
    assert seq.paradigm == "ns"


def test_ns_single_token():
    u = Utterance("one", [10], [TokenAlignment(10, 0, 1)], np.zeros((4, 8)))
    seq = build_ns(u)
    assert seq.targets == [None] * 4 + [10, 2]


def test_ns_loss_popcount_is_tokens_plus_one(tiny_corpus):
    for u in tiny_corpus:
        seq = build_ns(u)
        assert sum(t is not None for t in seq.targets) == len(u.tokens) + 1


# -----------------------------
# standard streaming layout
# -----------------------------

def test_ss_running_example(running_example, chunk4):
    seq = build_ss(running_example, chunk4)
    expect = _spoken(4) + [("t", 10), ("t", 0)]
    expect += [("s", i) for i in range(4, 8)] + [("t", 11), ("t", 12)]
    assert _kinds_values(seq) == expect
    assert seq.targets == [None, None, None, 10, 0, None,
                           None, None, None, 11, 12, 2]
    assert seq.segments == [((0, 4), (4, 6)), ((6, 10), (10, 12))]


def test_ss_single_chunk_single_token(chunk4):
    u = Utterance("one", [10], [TokenAlignment(10, 0, 1)], np.zeros((4, 8)))
    seq = build_ss(u, chunk4)
    assert _kinds_values(seq) == _spoken(4) + [("t", 10), ("t", 0)]
    # last speech predicts the token, the token predicts eos, fill is silent
    assert seq.targets == [None, None, None, 10, 2, None]


def test_ss_empty_chunk_predicts_pad(chunk4):
    # both tokens land in chunk 2; chunk 1 is pure silence
    u = Utterance(
        "sil",
        [10, 11],
        [TokenAlignment(10, 4, 5), TokenAlignment(11, 6, 7)],
        np.zeros((8, 8)),
    )
    seq = build_ss(u, chunk4)
    assert seq.targets[3] == 0          # last speech of the silent chunk
    assert set(seq.targets[4:6]) == {None}
    assert _kinds_values(seq)[4:6] == [("t", 0), ("t", 0)]


def test_ss_no_eos_in_inputs_until_targets(tiny_corpus, chunk4, sp):
    for u in tiny_corpus:
        seq = build_ss(u, chunk4)
        assert all(
            not (p.kind == "t" and p.value == sp.eos) for p in seq.positions
        )
        # exactly one eos target: on the last token, or on the final
        # segment's last speech when only silence remains
        at = [i for i, t in enumerate(seq.targets) if t == sp.eos]
        assert len(at) == 1
        pos = seq.positions[at[0]]
        if pos.kind == "t":
            assert pos.value == u.tokens[-1]
        else:
            (s_lo, s_hi), _ = seq.segments[-1]
            assert at[0] == s_hi - 1


# -----------------------------
# context-aware streaming layout
# -----------------------------

def test_cs_running_example(running_example, chunk4):
    seq = build_cs(running_example, chunk4)
    expect = _spoken(4) + [("t", 0), ("t", 0)]
    expect += [("s", i) for i in range(4, 8)] + [("t", 10), ("t", 0)]
    expect += [("t", 11), ("t", 12)]
    assert _kinds_values(seq) == expect
    # provisional A at the masked slot's predecessor, regenerated after the
    # next chunk's audio, B carried into the flush, pad terminal
    assert seq.targets == [None, None, None, 10, 0, None,
                           None, None, None, 10, 11, 11, 12, 0]
    assert seq.segments == [((0, 4), (4, 6)), ((6, 10), (10, 12)),
                            ((12, 12), (12, 14))]


def test_cs_single_chunk_is_ss_minus_eos(chunk4):
    u = Utterance("one", [10], [TokenAlignment(10, 0, 1)], np.zeros((4, 8)))
    ss = build_ss(u, chunk4)
    cs = build_cs(u, chunk4)
    assert _kinds_values(cs) == _kinds_values(ss)
    assert cs.targets == [0 if t == 2 else t for t in ss.targets]


def test_cs_structural_invariants(sp):
    utts = gen_synthetic_corpus(CorpusConfig(num_utterances=40, seed=5))
    ck = ChunkingConfig(chunk_frames=6, speech_text_ratio=2)
    for u in utts:
        seq = build_cs(u, ck)
        values = [p.value for p in seq.positions if p.kind == "t"]
        assert sp.eos not in values
        assert sp.eos not in [t for t in seq.targets if t is not None]
        # every non-terminal segment masks its carried token, so real slots
        # form a contiguous prefix and the segment always ends on pad
        for (_, _), (tlo, thi) in seq.segments[:-1]:
            slot_vals = [seq.positions[i].value for i in range(tlo, thi)]
            assert slot_vals and slot_vals[-1] == sp.pad
            seen_pad = False
            for v in slot_vals:
                if v == sp.pad:
                    seen_pad = True
                else:
                    assert not seen_pad


def test_cs_and_ss_share_chunk_geometry(tiny_corpus, chunk4):
    for u in tiny_corpus:
        ss = build_ss(u, chunk4)
        cs = build_cs(u, chunk4)
        # same speech spans; CS may append a flush segment
        assert [s for s, _ in cs.segments[:len(ss.segments)]] == [s for s, _ in ss.segments]


# -----------------------------
# paradigm sampling and staging
# -----------------------------

def test_sampler_inactive_is_always_ns():
    for step in range(50):
        assert sample_paradigm(step, False, seed=3) == "ns"


def test_sampler_deterministic():
    a = [sample_paradigm(s, True, seed=9) for s in range(200)]
    b = [sample_paradigm(s, True, seed=9) for s in range(200)]
    assert a == b


def test_sampler_ratio_within_tolerance():
    n = 3000
    counts = {"ns": 0, "ss": 0, "cs": 0}
    for step in range(n):
        counts[sample_paradigm(step, True, seed=0)] += 1
    for c in counts.values():
        assert abs(c - n / 3) <= 0.05 * n


def test_stage_plan_shape():
    plan = stage_plan()
    assert len(plan) == 5
    s1, s5 = plan[0], plan[-1]
    assert (s1.encoder_trainable, s1.adapter_trainable, s1.decoder_trainable) == (
        False, True, False)
    assert s1.paradigms == ("ns",)
    assert not s1.chunk_attention_active
    assert (s5.encoder_trainable, s5.adapter_trainable, s5.decoder_trainable) == (
        True, True, True)
    assert set(s5.paradigms) == {"ns", "ss", "cs"}
    assert s5.chunk_attention_active
