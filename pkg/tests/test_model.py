"""Toy transformer, caches, masks, loss, and the two decoding oracles."""

import numpy as np
import pytest

from streamasr.layout import ChunkingConfig, SpecialTokens, build_ns, build_ss, speech, text
from streamasr.model import (
    AdapterParams,
    ContextOverflow,
    KVCache,
    ModelConfig,
    RollbackPastChunkBoundary,
    StreamItem,
    SymbolicCache,
    ToyDecoder,
    adapter_forward,
    build_attention_mask,
    default_confusable_map,
    make_boundary_oracle,
    make_teacher_oracle,
    make_toy_model,
    masked_ce_loss,
    param_count,
)

CFG = ModelConfig(vocab_size=16, embed_dim=8, num_layers=2, num_heads=2,
                  ffn_dim=16, frame_dim=4, adapter_hidden=8, max_context=256,
                  seed=0)


def _items(model, n_frames, tokens):
    rng = np.random.default_rng(7)
    out = [
        StreamItem(speech(i), rng.standard_normal(model.cfg.frame_dim))
        for i in range(n_frames)
    ]
    out += [StreamItem(text(t)) for t in tokens]
    return out


# -----------------------------
# attention masks
# -----------------------------

def test_full_mask_is_causal():
    m = build_attention_mask("full", 4, 4)
    assert np.array_equal(m, np.tril(np.ones((4, 4), dtype=bool)))


def test_full_mask_offsets_trailing_queries():
    m = build_attention_mask("full", 2, 5)
    assert m.shape == (2, 5)
    assert m[0].tolist() == [True, True, True, True, False]
    assert m[1].tolist() == [True] * 5


def test_chunk_mask_degenerates_and_saturates():
    causal = build_attention_mask("full", 6, 6)
    assert np.array_equal(build_attention_mask("chunk", 6, 6, chunk_size=1), causal)
    assert build_attention_mask("chunk", 6, 6, chunk_size=100).all()


def test_chunk_mask_sees_own_chunk_end():
    m = build_attention_mask("chunk", 4, 4, chunk_size=2)
    # position 0 attends through position 1 (same chunk), not position 2
    assert m[0].tolist() == [True, True, False, False]
    assert m[2].tolist() == [True, True, True, True]


def test_mask_errors():
    with pytest.raises(ValueError):
        build_attention_mask("full", 5, 4)
    with pytest.raises(ValueError):
        build_attention_mask("chunk", 4, 4)
    with pytest.raises(ValueError):
        build_attention_mask("diag", 4, 4)


# -----------------------------
# loss
# -----------------------------

def test_masked_ce_ignores_none_targets():
    logits = np.zeros((3, 4))
    # uniform logits: every supervised position costs log(4)
    assert masked_ce_loss(logits, [None, 2, None]) == pytest.approx(np.log(4))
    assert masked_ce_loss(logits, [None, None, None]) == 0.0


def test_masked_ce_picks_target_prob():
    logits = np.array([[10.0, 0.0, 0.0]])
    assert masked_ce_loss(logits, [0]) < 1e-4
    assert masked_ce_loss(logits, [1]) > 5.0


def test_masked_ce_length_mismatch():
    with pytest.raises(ValueError):
        masked_ce_loss(np.zeros((2, 4)), [1])


# -----------------------------
# adapter and parameter count
# -----------------------------

def test_adapter_maps_frame_to_embed_dim():
    rng = np.random.default_rng(0)
    p = AdapterParams(
        w1=rng.standard_normal((8, 4)), b1=np.zeros(8),
        w2=rng.standard_normal((6, 8)), b2=np.zeros(6),
    )
    out = adapter_forward(rng.standard_normal(4), p)
    assert out.shape == (6,)
    assert np.isfinite(out).all()


def test_param_count_matches_parameters():
    from streamasr.model import _param_blocks

    model = make_toy_model(CFG)
    assert param_count(CFG) == sum(b.size for b in _param_blocks(model.params))
    deeper = ModelConfig(vocab_size=20, embed_dim=12, num_layers=3, num_heads=3,
                         ffn_dim=24, frame_dim=5, adapter_hidden=7,
                         max_context=50, seed=2)
    assert param_count(deeper) == sum(
        b.size for b in _param_blocks(make_toy_model(deeper).params))


# -----------------------------
# toy decoder
# -----------------------------

def test_model_deterministic():
    a = make_toy_model(CFG)
    b = make_toy_model(CFG)
    items = _items(a, 3, [5, 6])
    la = a.forward_sequence(items)
    lb = b.forward_sequence(items)
    assert np.array_equal(la, lb)
    assert np.isfinite(la).all()


def test_depth_zero_is_analytic():
    cfg = ModelConfig(vocab_size=16, embed_dim=8, num_layers=0, num_heads=2,
                      ffn_dim=16, frame_dim=4, adapter_hidden=8,
                      max_context=64, seed=1)
    m = make_toy_model(cfg)
    items = _items(m, 0, [5, 6, 7])
    logits = m.forward_sequence(items)
    x = m.embed_items(items, start=0)
    assert np.allclose(logits, x @ m.params.out_w.T + m.params.out_b,
                       atol=1e-12)


def test_chunked_forward_matches_one_shot():
    m = make_toy_model(CFG)
    items = _items(m, 6, [4, 5, 6, 7])
    full = m.forward_sequence(items)
    cache = m.new_cache()
    got = []
    for lo in range(0, len(items), 3):
        chunk = items[lo:lo + 3]
        x = m.embed_items(chunk, start=len(cache))
        got.append(m.forward_embedded(x, cache))
    err = np.abs(np.concatenate(got) - full).max()
    assert err < 1e-12


def test_forward_rejects_out_of_vocab():
    m = make_toy_model(CFG)
    with pytest.raises(ValueError):
        m.forward(m.new_cache(), [StreamItem(text(CFG.vocab_size))])


def test_save_load_round_trip(tmp_path):
    m = make_toy_model(CFG)
    path = tmp_path / "m.npz"
    m.save(str(path))
    back = ToyDecoder.load(str(path))
    assert back.cfg == m.cfg
    items = _items(m, 2, [3, 4])
    assert np.array_equal(m.forward_sequence(items), back.forward_sequence(items))


# -----------------------------
# KV cache bookkeeping
# -----------------------------

def test_kv_cache_overflow():
    cfg = ModelConfig(vocab_size=16, embed_dim=8, num_layers=1, num_heads=2,
                      ffn_dim=16, frame_dim=4, adapter_hidden=8,
                      max_context=4, seed=0)
    m = make_toy_model(cfg)
    cache = m.new_cache()
    m.forward(cache, _items(m, 0, [5, 6, 7]))
    with pytest.raises(ContextOverflow):
        m.forward(cache, _items(m, 0, [5, 6]))


def test_rollback_guard_blocks_committed_prefix():
    m = make_toy_model(CFG)
    cache = m.new_cache()
    m.forward(cache, _items(m, 0, [5, 6]))
    cache.mark_chunk()
    m.forward(cache, _items(m, 0, [7, 8]))
    cache.rollback(2)  # back to the boundary: fine
    assert len(cache) == 2
    with pytest.raises(RollbackPastChunkBoundary):
        cache.rollback(1)
    with pytest.raises(ValueError):
        cache.rollback(99)


def test_branch_is_independent_and_checksum_stable():
    m = make_toy_model(CFG)
    cache = m.new_cache()
    m.forward(cache, _items(m, 0, [5, 6, 7]))
    cache.mark_chunk()
    before = cache.checksum()
    fork = cache.branch()
    assert fork.chunk_marks == cache.chunk_marks
    assert fork.checksum() == before
    m.forward(fork, _items(m, 0, [8]))
    assert len(cache) == 3 and len(fork) == 4
    assert cache.checksum() == before
    # prefix rows agree after divergence
    assert fork.checksum(3) == before


# -----------------------------
# symbolic cache
# -----------------------------

def test_symbolic_cache_counts(sp):
    c = SymbolicCache(sp)
    c.append_items([StreamItem(speech(0)), StreamItem(speech(1)),
                    StreamItem(text(10)), StreamItem(text(sp.pad))])
    assert len(c) == 4
    assert c.real_count == 1      # pad is not a real token
    assert c.max_frame == 1
    c.mark_chunk()
    c.append_items([StreamItem(text(11))])
    assert c.real_count == 2
    c.rollback(4)
    assert c.real_count == 1
    fork = c.branch()
    fork.append_items([StreamItem(speech(5))])
    assert fork.max_frame == 5 and c.max_frame == 1


def test_symbolic_checksum_tracks_content(sp):
    a = SymbolicCache(sp)
    b = SymbolicCache(sp)
    a.append_items([StreamItem(text(10))])
    b.append_items([StreamItem(text(11))])
    assert a.checksum() != b.checksum()
    b.rollback(0)
    b.append_items([StreamItem(text(10))])
    assert a.checksum() == b.checksum()


# -----------------------------
# oracles
# -----------------------------

def test_teacher_oracle_replays_ns(running_example, sp):
    seq = build_ns(running_example)
    oracle = make_teacher_oracle(seq, sp)
    cache = oracle.new_cache()
    items = [StreamItem(speech(i), running_example.frames[i]) for i in range(8)]
    items.append(StreamItem(text(sp.sos)))
    logits = oracle.forward(cache, items)
    hyp = []
    while True:
        t = int(np.argmax(logits))
        if t in (sp.pad, sp.eos):
            break
        hyp.append(t)
        logits = oracle.forward(cache, [StreamItem(text(t))])
    assert hyp == running_example.tokens


def test_confusable_map_never_identity(sp):
    confuse = default_confusable_map(sp, 16)
    for t in range(sp.first_text_id, 16):
        ct = confuse(t)
        assert ct != t
        assert sp.first_text_id <= ct < 16


def test_boundary_oracle_confuses_edge_token(edge_example, sp):
    suite = make_boundary_oracle([edge_example], confusion_window=1, vocab_size=32)
    oracle = suite.bind("edge", "ss")
    confuse = default_confusable_map(sp, 32)
    cache = oracle.new_cache()
    # token 13 ends at frame 3; with context up to frame 3 it reads confused
    frames = [StreamItem(speech(i), edge_example.frames[i]) for i in range(4)]
    logits = oracle.forward(cache, frames)
    assert int(np.argmax(logits)) == confuse(13)
    # one more frame of context resolves it
    cache2 = oracle.new_cache()
    frames5 = [StreamItem(speech(i), edge_example.frames[i]) for i in range(5)]
    assert int(np.argmax(oracle.forward(cache2, frames5))) == 13


def test_boundary_oracle_window_zero_is_perfect(edge_example):
    suite = make_boundary_oracle([edge_example], confusion_window=0, vocab_size=32)
    oracle = suite.bind("edge", "ss")
    cache = oracle.new_cache()
    frames = [StreamItem(speech(i), edge_example.frames[i]) for i in range(4)]
    assert int(np.argmax(oracle.forward(cache, frames))) == 13


def test_boundary_oracle_stop_tokens(edge_example, sp):
    suite = make_boundary_oracle([edge_example], confusion_window=0, vocab_size=32)
    for paradigm, done_stop, wait_stop in (
        ("ns", sp.eos, sp.eos),
        ("ss", sp.eos, sp.pad),
        ("cs", sp.pad, sp.pad),
    ):
        oracle = suite.bind("edge", paradigm)
        cache = oracle.new_cache()
        items = [StreamItem(speech(i), edge_example.frames[i]) for i in range(8)]
        items += [StreamItem(text(13)), StreamItem(text(20))]
        logits = oracle.forward(cache, items)
        assert int(np.argmax(logits)) == done_stop
        # before any audio, nothing is audible yet
        fresh = oracle.new_cache()
        logits = oracle.forward(fresh, [StreamItem(text(sp.pad))])
        assert int(np.argmax(logits)) == wait_stop
