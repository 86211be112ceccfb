"""Streaming sessions: turn traces, record lifecycle, accounting, guards."""

import numpy as np
import pytest

from streamasr.corpus import CorpusConfig, gen_synthetic_corpus
from streamasr.engine import (
    ConfigMismatch,
    PushAfterFinish,
    StrategyConfig,
    collect_stats,
    final_hypothesis,
    push_chunk,
    run_stream,
    session_new,
)
from streamasr.layout import (
    ChunkingConfig,
    SpecialTokens,
    build_cs,
    build_ss,
    chunk_bounds,
)
from streamasr.model import (
    SymbolicCache,
    default_confusable_map,
    make_boundary_oracle,
    make_teacher_oracle,
)

SP = SpecialTokens()


class Scripted:
    """One-hot model keyed on (real token count, newest frame index).

    Lets a test pin down stop behavior the corpus oracles never produce,
    like mid-stream eos or a retracting re-decode.
    """

    vocab_size = 16

    def __init__(self, table, default=SP.pad):
        self.table = dict(table)
        self.default = default

    def new_cache(self):
        return SymbolicCache(SP)

    def forward(self, cache, items):
        cache.append_items(items)
        t = self.table.get((cache.real_count, cache.max_frame), self.default)
        logits = np.full(self.vocab_size, -40.0)
        logits[t] = 0.0
        return logits


def _frames(n, dim=8):
    return np.zeros((n, dim))


# -----------------------------
# construction guards
# -----------------------------

def test_session_new_validation(chunk4):
    model = Scripted({})
    ok = StrategyConfig("ss_greedy")
    with pytest.raises(ConfigMismatch):
        session_new(model, chunk4, StrategyConfig("nope"))
    with pytest.raises(ConfigMismatch):
        session_new(model, chunk4, StrategyConfig("ss_beam", beam_width=0))
    with pytest.raises(ConfigMismatch):
        session_new(model, chunk4, StrategyConfig("ss_greedy", beam_width=2))
    with pytest.raises(ConfigMismatch):
        session_new(model, chunk4, StrategyConfig("ns_redecode_hold_n", hold_n=-1))
    with pytest.raises(ConfigMismatch):
        session_new(model, chunk4, StrategyConfig("ns_redecode_wait_k", wait_k=-1))
    with pytest.raises(ConfigMismatch):
        session_new(model, chunk4, StrategyConfig("ss_greedy", max_decode_per_turn=0))
    with pytest.raises(ConfigMismatch):
        session_new(object(), chunk4, ok)
    assert session_new(model, chunk4, ok).finished is False


def test_chunk_frames_pin(chunk4):
    model = Scripted({})
    cfg = StrategyConfig("ss_greedy", chunk_frames=4)
    session_new(model, chunk4, cfg, SP)  # matching pin is fine
    with pytest.raises(ConfigMismatch):
        session_new(model, ChunkingConfig(8), cfg, SP)


def test_new_session_stats_zero(chunk4):
    s = session_new(Scripted({}), chunk4, StrategyConfig("ss_greedy"), SP)
    st = collect_stats(s)
    assert (st.turns, st.forward_positions, st.rollback_count,
            st.revised, st.retracted, st.early_eos) == (0, 0, 0, 0, 0, 0)
    assert st.per_turn == []


def test_push_after_finish(chunk4):
    s = session_new(Scripted({}), chunk4, StrategyConfig("ss_greedy"), SP)
    push_chunk(s, _frames(4), is_last=True)
    with pytest.raises(PushAfterFinish):
        push_chunk(s, _frames(4), is_last=True)


def test_frames_must_be_matrix(chunk4):
    s = session_new(Scripted({}), chunk4, StrategyConfig("ss_greedy"), SP)
    with pytest.raises(ValueError):
        push_chunk(s, np.zeros(4), is_last=True)


# -----------------------------
# teacher traces on the running example
# -----------------------------

def test_ss_teacher_trace(running_example, chunk4, sp):
    seq = build_ss(running_example, chunk4)
    model = make_teacher_oracle(seq, sp)
    s = session_new(model, chunk4, StrategyConfig("ss_greedy"), sp)
    r0 = push_chunk(s, running_example.frames[:4])
    r1 = push_chunk(s, running_example.frames[4:], is_last=True)
    assert [r.token for r in r0] == [10]
    assert [r.token for r in r1] == [11, 12]
    assert final_hypothesis(s) == [10, 11, 12]
    assert [r.emit_chunk for r in s.records] == [0, 1, 1]
    # ss emissions are final on arrival
    assert all(not r.provisional and r.finalize_chunk == r.emit_chunk
               for r in s.records)
    # the session walks exactly the training layout, position for position
    assert collect_stats(s).forward_positions == len(seq)


def test_cs_teacher_trace(running_example, chunk4, sp):
    seq = build_cs(running_example, chunk4)
    model = make_teacher_oracle(seq, sp)
    s = session_new(model, chunk4, StrategyConfig("cs_fallback_greedy"), sp)
    r0 = push_chunk(s, running_example.frames[:4])
    assert [r.token for r in r0] == [10]
    assert r0[0].provisional and r0[0].finalize_chunk is None
    r1 = push_chunk(s, running_example.frames[4:], is_last=True)
    # turn 2 confirms A then emits the rest
    assert r1[0] is r0[0]
    assert r1[0].finalize_chunk == 1 and not r1[0].revised
    assert final_hypothesis(s) == [10, 11, 12]
    st = collect_stats(s)
    assert st.rollback_count == 1 and st.checksum_checks == 1
    assert st.revised == 0 and st.retracted == 0
    # total work = the training layout plus the re-decoded slot span
    assert st.forward_positions == len(seq) + st.rollback_positions


def test_two_sessions_share_model(running_example, chunk4, sp):
    seq = build_ss(running_example, chunk4)
    model = make_teacher_oracle(seq, sp)
    a = session_new(model, chunk4, StrategyConfig("ss_greedy"), sp)
    b = session_new(model, chunk4, StrategyConfig("ss_greedy"), sp)
    push_chunk(a, running_example.frames[:4])
    push_chunk(b, running_example.frames[:4])
    push_chunk(b, running_example.frames[4:], is_last=True)
    push_chunk(a, running_example.frames[4:], is_last=True)
    assert final_hypothesis(a) == final_hypothesis(b) == [10, 11, 12]


# -----------------------------
# boundary ambiguity and the fallback lifecycle
# -----------------------------

def test_ss_commits_the_confused_token(edge_example, chunk4, sp):
    suite = make_boundary_oracle([edge_example], confusion_window=1, vocab_size=32)
    confuse = default_confusable_map(sp, 32)
    s = session_new(suite.bind("edge", "ss"), chunk4,
                    StrategyConfig("ss_greedy"), sp)
    hyp = run_stream(s, edge_example.frames)
    assert hyp == [confuse(13), 20]  # the edge token stays wrong


def test_cs_fallback_revises_the_confused_token(edge_example, chunk4, sp):
    suite = make_boundary_oracle([edge_example], confusion_window=1, vocab_size=32)
    confuse = default_confusable_map(sp, 32)
    s = session_new(suite.bind("edge", "cs"), chunk4,
                    StrategyConfig("cs_fallback_greedy"), sp)
    hyp = run_stream(s, edge_example.frames)
    assert hyp == [13, 20]
    rec = s.records[0]
    assert rec.first_token == confuse(13)
    assert rec.revised and rec.retracted_value == confuse(13)
    assert rec.emit_chunk == 0 and rec.finalize_chunk == 1
    assert collect_stats(s).revised == 1


def test_confirmed_token_has_no_retracted_value(running_example, chunk4, sp):
    model = make_teacher_oracle(build_cs(running_example, chunk4), sp)
    s = session_new(model, chunk4, StrategyConfig("cs_fallback_greedy"), sp)
    run_stream(s, running_example.frames)
    assert all(r.retracted_value is None for r in s.records)


def test_retraction_when_redecode_drops_the_token(chunk4):
    # turn 1 hallucinates token 10 at the edge; the re-decode with more
    # audio drops it entirely
    model = Scripted({(0, 3): 10})
    s = session_new(model, chunk4, StrategyConfig("cs_fallback_greedy"), SP)
    r0 = push_chunk(s, _frames(4))
    assert [r.token for r in r0] == [10] and r0[0].provisional
    push_chunk(s, _frames(4), is_last=True)
    rec = s.records[0]
    assert rec.retracted and not rec.revised
    assert final_hypothesis(s) == []
    assert collect_stats(s).retracted == 1


def test_early_eos_is_flagged(chunk4):
    # eos right after the first emission, two chunks before the stream ends
    model = Scripted({(0, 3): 10, (1, 3): SP.eos, (1, 7): 11, (2, 7): 12})
    s = session_new(model, chunk4, StrategyConfig("ss_greedy"), SP)
    push_chunk(s, _frames(4))
    assert collect_stats(s).early_eos == 1
    push_chunk(s, _frames(4), is_last=True)
    assert collect_stats(s).early_eos == 1
    assert final_hypothesis(s) == [10, 11, 12]


# -----------------------------
# degenerate streams
# -----------------------------

def test_zero_frame_stream_flush_only(chunk4):
    for name in ("ss_greedy", "cs_fallback_greedy", "ns_redecode_hold_n"):
        s = session_new(Scripted({}), chunk4, StrategyConfig(name), SP)
        assert run_stream(s, np.zeros((0, 8))) == []
        assert s.finished and collect_stats(s).turns == 1


def test_cs_empty_final_chunk_flushes_pending(edge_example, chunk4, sp):
    suite = make_boundary_oracle([edge_example], confusion_window=1, vocab_size=32)

    def session():
        return session_new(suite.bind("edge", "cs"), chunk4,
                           StrategyConfig("cs_fallback_greedy"), sp)

    normal = session()
    hyp_a = run_stream(normal, edge_example.frames)
    split = session()
    push_chunk(split, edge_example.frames[:4])
    push_chunk(split, edge_example.frames[4:])        # not marked last
    push_chunk(split, np.zeros((0, 8)), is_last=True)  # flush-only turn
    hyp_b = final_hypothesis(split)
    assert hyp_a == hyp_b == [13, 20]


def test_run_stream_equals_manual_pushes(edge_example, chunk4, sp):
    suite = make_boundary_oracle([edge_example], confusion_window=1, vocab_size=32)
    a = session_new(suite.bind("edge", "cs"), chunk4,
                    StrategyConfig("cs_fallback_greedy"), sp)
    hyp = run_stream(a, edge_example.frames)
    b = session_new(suite.bind("edge", "cs"), chunk4,
                    StrategyConfig("cs_fallback_greedy"), sp)
    push_chunk(b, edge_example.frames[:4])
    push_chunk(b, edge_example.frames[4:], is_last=True)
    assert hyp == final_hypothesis(b)
    assert collect_stats(a).forward_positions == collect_stats(b).forward_positions


# -----------------------------
# accounting
# -----------------------------

def test_cache_reuse_counts_prior_context(running_example, chunk4, sp):
    model = make_teacher_oracle(build_ss(running_example, chunk4), sp)
    s = session_new(model, chunk4, StrategyConfig("ss_greedy"), sp)
    push_chunk(s, running_example.frames[:4])
    reused_at_entry = len(s.cache)
    push_chunk(s, running_example.frames[4:], is_last=True)
    assert collect_stats(s).cache_reused_positions == reused_at_entry


def test_per_turn_accounting_sums_to_totals(edge_example, chunk4, sp):
    suite = make_boundary_oracle([edge_example], confusion_window=1, vocab_size=32)
    s = session_new(suite.bind("edge", "cs"), chunk4,
                    StrategyConfig("cs_fallback_greedy"), sp)
    run_stream(s, edge_example.frames)
    st = collect_stats(s)
    assert len(st.per_turn) == st.turns
    assert sum(t["prefill"] for t in st.per_turn) == st.prefill_positions
    assert sum(t["decode"] for t in st.per_turn) == st.decode_positions
    assert st.prefill_positions + st.decode_positions == st.forward_positions


# -----------------------------
# beam strategies
# -----------------------------

def test_beam_width_one_equals_greedy(chunk4, sp):
    utts = gen_synthetic_corpus(CorpusConfig(num_utterances=4, seed=2))
    suite = make_boundary_oracle(utts, confusion_window=1)
    for u in utts:
        for beam_name, greedy_name, paradigm in (
            ("ss_beam", "ss_greedy", "ss"),
            ("cs_fallback_beam", "cs_fallback_greedy", "cs"),
        ):
            a = session_new(suite.bind(u.id, paradigm), chunk4,
                            StrategyConfig(beam_name, beam_width=1), sp)
            b = session_new(suite.bind(u.id, paradigm), chunk4,
                            StrategyConfig(greedy_name), sp)
            assert run_stream(a, u.frames) == run_stream(b, u.frames)
            assert ([r.emit_chunk for r in a.records]
                    == [r.emit_chunk for r in b.records])


def test_beam_runs_wider(edge_example, chunk4, sp):
    suite = make_boundary_oracle([edge_example], confusion_window=1, vocab_size=32)
    s = session_new(suite.bind("edge", "ss"), chunk4,
                    StrategyConfig("ss_beam", beam_width=3), sp)
    hyp = run_stream(s, edge_example.frames)
    assert len(hyp) == 2
    # wider search explores more candidates than the one-path greedy walk
    greedy = session_new(suite.bind("edge", "ss"), chunk4,
                         StrategyConfig("ss_greedy"), sp)
    run_stream(greedy, edge_example.frames)
    assert (collect_stats(s).forward_positions
            > collect_stats(greedy).forward_positions)


# -----------------------------
# re-decoding baselines
# -----------------------------

def _ns_session(u, name, ck, sp, **kw):
    suite = make_boundary_oracle([u], confusion_window=1, vocab_size=32)
    return session_new(suite.bind(u.id, "ns"), ck, StrategyConfig(name, **kw), sp)


def test_ns_strategies_recover_the_reference(edge_example, chunk4, sp):
    for name, kw in (
        ("ns_redecode_hold_n", {"hold_n": 1}),
        ("ns_redecode_local_agreement", {}),
        ("ns_redecode_wait_k", {"wait_k": 1}),
    ):
        s = _ns_session(edge_example, name, chunk4, sp, **kw)
        assert run_stream(s, edge_example.frames) == [13, 20]


def test_ns_commits_are_monotone(chunk4, sp):
    utts = gen_synthetic_corpus(CorpusConfig(num_utterances=3, seed=4))
    suite = make_boundary_oracle(utts, confusion_window=1)
    for u in utts:
        s = session_new(suite.bind(u.id, "ns"), chunk4,
                        StrategyConfig("ns_redecode_hold_n", hold_n=1), sp)
        committed = []
        bounds = chunk_bounds(u.num_frames, 4)
        for lo, hi in bounds:
            push_chunk(s, u.frames[lo:hi], is_last=hi == u.num_frames)
            hyp = final_hypothesis(s)
            assert hyp[:len(committed)] == committed
            committed = hyp
        assert committed == u.tokens


def test_ns_redecodes_from_scratch_each_turn(edge_example, chunk4, sp):
    s = _ns_session(edge_example, "ns_redecode_hold_n", chunk4, sp, hold_n=1)
    run_stream(s, edge_example.frames)
    st = collect_stats(s)
    # quadratic prefill: chunk 1 re-reads nothing, chunk 2 re-reads chunk 1
    assert st.cache_reused_positions == 0
    assert st.prefill_positions >= 4 + 1 + 8 + 1
