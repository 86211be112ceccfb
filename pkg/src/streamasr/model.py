"""Decoder models for desk-scale experiments.

Three interchangeable models drive the streaming engine, all sharing one
contract: ``new_cache()`` plus ``forward(cache, items) -> logits`` for the
last appended position.

* ``ToyDecoder``: a small deterministic pre-norm transformer over mixed
  speech/text positions. Speech frames enter through a two-linear-layer
  ReLU adapter, text through an embedding table; absolute position
  embeddings keep chunked and one-shot forwards equivalent. Depth 0
  degenerates to output-projected input embeddings.
* ``TeacherOracle``: replays a built layout, emitting the layout target of
  whatever position was appended last. Round-trip tests use it to show the
  engine regenerates builder layouts exactly.
* ``BoundaryOracle``: emits ground truth except for tokens whose final
  frame sits at the current context edge, which it confuses
  deterministically. It models the chunk-boundary ambiguity that the
  fallback decoding strategies exist to repair.

Caches are append-only below recorded chunk boundaries; rollback past the
most recent boundary raises, and checksums let callers prove entries below
a boundary never changed.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .corpus import Utterance
from .layout import MixedSequence, Position, SpecialTokens

__all__ = [
    "ContextOverflow",
    "StepBeyondSequence",
    "RollbackPastChunkBoundary",
    "ImmutabilityViolation",
    "StreamItem",
    "build_attention_mask",
    "masked_ce_loss",
    "AdapterParams",
    "adapter_forward",
    "ModelConfig",
    "param_count",
    "KVCache",
    "SymbolicCache",
    "ToyDecoder",
    "make_toy_model",
    "TeacherOracle",
    "make_teacher_oracle",
    "BoundaryOracle",
    "BoundaryOracleSuite",
    "make_boundary_oracle",
    "default_confusable_map",
]


class ContextOverflow(RuntimeError):
    """Appending would exceed the model's maximum context length."""


class StepBeyondSequence(RuntimeError):
    """A replay oracle was stepped past the end of its layout."""


class RollbackPastChunkBoundary(RuntimeError):
    """Rollback target lies below the most recent chunk boundary."""


class ImmutabilityViolation(RuntimeError):
    """Cache content below a chunk boundary changed since it was recorded."""


@dataclass(frozen=True)
class StreamItem:
    """One position pushed through a model: a text token or a speech frame.

    ``pos`` carries the symbolic identity (frame index or token id); speech
    items also carry the frame vector for models that embed audio.
    """

    pos: Position
    frame: np.ndarray | None = None


# --------------------------------------------------------------------------
# attention masks and loss


def build_attention_mask(
    mode: str, query_len: int, key_len: int, chunk_size: int | None = None
) -> np.ndarray:
    """Boolean [query_len, key_len] mask, True = may attend.

    ``full`` is plain causal attention; queries are the trailing
    ``query_len`` rows of the key sequence. ``chunk`` is causal at chunk
    granularity with full attention inside a chunk, so position i sees
    everything up to the end of its own chunk; chunk(1) degenerates to the
    causal mask and the mask tends to all-True as the chunk size grows.
    """
    if key_len < query_len:
        raise ValueError("key_len must cover the query span")
    offset = key_len - query_len
    qi = np.arange(query_len)[:, None] + offset
    kj = np.arange(key_len)[None, :]
    if mode == "full":
        return kj <= qi
    if mode == "chunk":
        if not chunk_size or chunk_size < 1:
            raise ValueError("chunk mode needs chunk_size >= 1")
        return (kj // chunk_size) <= (qi // chunk_size)
    raise ValueError(f"unknown mask mode {mode!r}")


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def masked_ce_loss(logits: np.ndarray, targets: Sequence[int | None]) -> float:
    """Mean cross-entropy over positions with a target; masked ones add nothing."""
    if logits.shape[0] != len(targets):
        raise ValueError("logits/targets length mismatch")
    idx = [i for i, t in enumerate(targets) if t is not None]
    if not idx:
        return 0.0
    lp = _log_softmax(logits[idx])
    picked = lp[np.arange(len(idx)), [targets[i] for i in idx]]
    return float(-picked.mean())


# --------------------------------------------------------------------------
# adapter


@dataclass
class AdapterParams:
    w1: np.ndarray  # [hidden, frame_dim]
    b1: np.ndarray  # [hidden]
    w2: np.ndarray  # [embed_dim, hidden]
    b2: np.ndarray  # [embed_dim]


def adapter_forward(frame: np.ndarray, params: AdapterParams) -> np.ndarray:
    """Two linear layers with a ReLU between: frame vectors to embedding space."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape[-1] != params.w1.shape[1]:
        raise ValueError(
            f"frame dim {frame.shape[-1]} != adapter input {params.w1.shape[1]}"
        )
    h = np.maximum(frame @ params.w1.T + params.b1, 0.0)
    return h @ params.w2.T + params.b2


# --------------------------------------------------------------------------
# config and parameters


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int = 32
    embed_dim: int = 16
    num_layers: int = 2
    num_heads: int = 2
    ffn_dim: int = 32
    frame_dim: int = 8
    adapter_hidden: int = 16
    max_context: int = 2048
    seed: int = 0

    def __post_init__(self) -> None:
        if self.embed_dim % self.num_heads:
            raise ValueError("embed_dim must divide evenly into heads")
        if min(self.vocab_size, self.embed_dim, self.num_heads,
               self.ffn_dim, self.frame_dim, self.adapter_hidden,
               self.max_context) < 1:
            raise ValueError("all dimensions must be positive")
        if self.num_layers < 0:
            raise ValueError("num_layers must be >= 0")


@dataclass
class LayerParams:
    ln1_g: np.ndarray
    ln1_b: np.ndarray
    wq: np.ndarray
    bq: np.ndarray
    wk: np.ndarray
    bk: np.ndarray
    wv: np.ndarray
    bv: np.ndarray
    wo: np.ndarray
    bo: np.ndarray
    ln2_g: np.ndarray
    ln2_b: np.ndarray
    ffn_w1: np.ndarray
    ffn_b1: np.ndarray
    ffn_w2: np.ndarray
    ffn_b2: np.ndarray


@dataclass
class ToyParams:
    embed: np.ndarray     # [vocab, d]
    pos: np.ndarray       # [max_context, d]
    adapter: AdapterParams
    layers: list[LayerParams]
    out_w: np.ndarray     # [vocab, d]
    out_b: np.ndarray     # [vocab]


def param_count(cfg: ModelConfig) -> int:
    """Exact parameter count implied by the declaration order."""
    d, v = cfg.embed_dim, cfg.vocab_size
    n = v * d + cfg.max_context * d
    n += cfg.adapter_hidden * cfg.frame_dim + cfg.adapter_hidden
    n += d * cfg.adapter_hidden + d
    per_layer = 2 * d + 4 * (d * d + d) + 2 * d
    per_layer += cfg.ffn_dim * d + cfg.ffn_dim + d * cfg.ffn_dim + d
    n += cfg.num_layers * per_layer
    n += v * d + v
    return n


def _init_params(cfg: ModelConfig) -> ToyParams:
    # One sequential stream; the draw order is the serialization order.
    rng = np.random.default_rng(cfg.seed)

    def draw(*shape: int) -> np.ndarray:
        return rng.uniform(-0.1, 0.1, size=shape)

    d = cfg.embed_dim
    embed = draw(cfg.vocab_size, d)
    pos = draw(cfg.max_context, d)
    adapter = AdapterParams(
        w1=draw(cfg.adapter_hidden, cfg.frame_dim),
        b1=draw(cfg.adapter_hidden),
        w2=draw(d, cfg.adapter_hidden),
        b2=draw(d),
    )
    layers = []
    for _ in range(cfg.num_layers):
        layers.append(
            LayerParams(
                ln1_g=draw(d), ln1_b=draw(d),
                wq=draw(d, d), bq=draw(d),
                wk=draw(d, d), bk=draw(d),
                wv=draw(d, d), bv=draw(d),
                wo=draw(d, d), bo=draw(d),
                ln2_g=draw(d), ln2_b=draw(d),
                ffn_w1=draw(cfg.ffn_dim, d), ffn_b1=draw(cfg.ffn_dim),
                ffn_w2=draw(d, cfg.ffn_dim), ffn_b2=draw(d),
            )
        )
    out_w = draw(cfg.vocab_size, d)
    out_b = draw(cfg.vocab_size)
    return ToyParams(embed, pos, adapter, layers, out_w, out_b)


def _param_blocks(p: ToyParams) -> list[np.ndarray]:
    blocks = [p.embed, p.pos, p.adapter.w1, p.adapter.b1, p.adapter.w2, p.adapter.b2]
    for lp in p.layers:
        blocks += [lp.ln1_g, lp.ln1_b, lp.wq, lp.bq, lp.wk, lp.bk, lp.wv, lp.bv,
                   lp.wo, lp.bo, lp.ln2_g, lp.ln2_b,
                   lp.ffn_w1, lp.ffn_b1, lp.ffn_w2, lp.ffn_b2]
    blocks += [p.out_w, p.out_b]
    return blocks


# --------------------------------------------------------------------------
# caches


class _MarkedCache:
    """Shared chunk-boundary bookkeeping for all cache kinds."""

    def __init__(self) -> None:
        self.chunk_marks: list[int] = []

    def __len__(self) -> int:  # pragma: no cover - overridden
        raise NotImplementedError

    def checksum(self, upto: int | None = None) -> int:  # pragma: no cover
        raise NotImplementedError

    def _truncate(self, n: int) -> None:  # pragma: no cover
        raise NotImplementedError

    def mark_chunk(self) -> None:
        self.chunk_marks.append(len(self))

    def rollback(self, n: int) -> None:
        """Truncate to length n. Only the suffix above the most recent chunk
        boundary is mutable; anything below is immutable history."""
        if n > len(self):
            raise ValueError(f"rollback target {n} beyond length {len(self)}")
        if self.chunk_marks and n < self.chunk_marks[-1]:
            raise RollbackPastChunkBoundary(
                f"target {n} below chunk boundary {self.chunk_marks[-1]}"
            )
        self._truncate(n)

    def _copy_marks_to(self, other: "_MarkedCache") -> None:
        other.chunk_marks = list(self.chunk_marks)


class KVCache(_MarkedCache):
    """Per-layer key/value history for the toy transformer.

    Rows are written once when a position is first forwarded and never
    rewritten; ``checksum`` hashes the live prefix so tests can prove it.
    """

    def __init__(self, num_layers: int, embed_dim: int, max_context: int) -> None:
        super().__init__()
        self.max_context = max_context
        self.length = 0
        self.k = [np.zeros((max_context, embed_dim)) for _ in range(num_layers)]
        self.v = [np.zeros((max_context, embed_dim)) for _ in range(num_layers)]

    def __len__(self) -> int:
        return self.length

    def append(self, layer: int, k_rows: np.ndarray, v_rows: np.ndarray) -> None:
        n = k_rows.shape[0]
        end = self.length + n
        if end > self.max_context:
            raise ContextOverflow(f"{end} > max_context {self.max_context}")
        self.k[layer][self.length : end] = k_rows
        self.v[layer][self.length : end] = v_rows

    def advance(self, n: int) -> None:
        if self.length + n > self.max_context:
            raise ContextOverflow(
                f"{self.length + n} > max_context {self.max_context}"
            )
        self.length += n

    def _truncate(self, n: int) -> None:
        self.length = n

    def branch(self) -> "KVCache":
        other = KVCache(len(self.k), self.k[0].shape[1] if self.k else 0,
                        self.max_context)
        if not self.k:
            other.k, other.v = [], []
        other.length = self.length
        for i in range(len(self.k)):
            other.k[i][: self.length] = self.k[i][: self.length]
            other.v[i][: self.length] = self.v[i][: self.length]
        self._copy_marks_to(other)
        return other

    def checksum(self, upto: int | None = None) -> int:
        n = self.length if upto is None else upto
        c = 0
        for i in range(len(self.k)):
            c = zlib.crc32(self.k[i][:n].tobytes(), c)
            c = zlib.crc32(self.v[i][:n].tobytes(), c)
        return c


class SymbolicCache(_MarkedCache):
    """Position history for replay oracles: no tensors, just identities.

    Keeps prefix counts of real text tokens and a running max over speech
    frame indices so an oracle can answer "which occurrence comes next" and
    "how much audio is in context" at any rollback state.
    """

    def __init__(self, sp: SpecialTokens) -> None:
        super().__init__()
        self.sp = sp
        self.kinds: list[str] = []
        self.values: list[int] = []
        self._reals: list[int] = []      # prefix count, len+1 entries
        self._max_frame: list[int] = []  # prefix running max, len+1 entries
        self._reals.append(0)
        self._max_frame.append(-1)

    def __len__(self) -> int:
        return len(self.kinds)

    def append_items(self, items: Sequence[StreamItem]) -> None:
        for it in items:
            self.kinds.append(it.pos.kind)
            self.values.append(it.pos.value)
            real = it.pos.kind == "t" and self.sp.is_text(it.pos.value)
            self._reals.append(self._reals[-1] + (1 if real else 0))
            frame = it.pos.value if it.pos.kind == "s" else -1
            self._max_frame.append(max(self._max_frame[-1], frame))

    @property
    def real_count(self) -> int:
        return self._reals[len(self.kinds)]

    @property
    def max_frame(self) -> int:
        return self._max_frame[len(self.kinds)]

    def _truncate(self, n: int) -> None:
        del self.kinds[n:]
        del self.values[n:]
        del self._reals[n + 1 :]
        del self._max_frame[n + 1 :]

    def branch(self) -> "SymbolicCache":
        other = SymbolicCache(self.sp)
        other.kinds = list(self.kinds)
        other.values = list(self.values)
        other._reals = list(self._reals)
        other._max_frame = list(self._max_frame)
        self._copy_marks_to(other)
        return other

    def checksum(self, upto: int | None = None) -> int:
        n = len(self.kinds) if upto is None else upto
        packed = ",".join(
            f"{self.kinds[i]}{self.values[i]}" for i in range(n)
        ).encode()
        return zlib.crc32(packed)


# --------------------------------------------------------------------------
# toy transformer


def _layer_norm(x: np.ndarray, g: np.ndarray, b: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + 1e-5) * g + b


class ToyDecoder:
    """Deterministic pre-norm transformer decoder over mixed positions.

    depth 0 reduces to logits = out_w @ (embedding + position), which makes
    the wiring analytically checkable. No final layer norm for the same
    reason. float64 throughout; chunked decoding with the KV cache matches
    a one-shot forward to float reassociation error.
    """

    def __init__(self, cfg: ModelConfig, params: ToyParams | None = None) -> None:
        self.cfg = cfg
        self.params = params if params is not None else _init_params(cfg)
        self.vocab_size = cfg.vocab_size

    def new_cache(self) -> KVCache:
        return KVCache(self.cfg.num_layers, self.cfg.embed_dim, self.cfg.max_context)

    # -- embedding

    def embed_items(self, items: Sequence[StreamItem], start: int) -> np.ndarray:
        if start + len(items) > self.cfg.max_context:
            raise ContextOverflow(
                f"{start + len(items)} > max_context {self.cfg.max_context}"
            )
        rows = np.empty((len(items), self.cfg.embed_dim))
        for i, it in enumerate(items):
            if it.pos.kind == "t":
                if not (0 <= it.pos.value < self.cfg.vocab_size):
                    raise ValueError(f"token id {it.pos.value} out of vocabulary")
                rows[i] = self.params.embed[it.pos.value]
            else:
                if it.frame is None:
                    raise ValueError("speech item without a frame vector")
                rows[i] = adapter_forward(it.frame, self.params.adapter)
        rows += self.params.pos[start : start + len(items)]
        return rows

    # -- core forward

    def forward_embedded(
        self,
        x: np.ndarray,
        cache: KVCache,
        mask_mode: str = "full",
        chunk_size: int | None = None,
    ) -> np.ndarray:
        """Append the embedded span to the cache, return logits for each row."""
        s = x.shape[0]
        h_count = self.cfg.num_heads
        dh = self.cfg.embed_dim // h_count
        new_len = len(cache) + s
        for li, lp in enumerate(self.params.layers):
            h = _layer_norm(x, lp.ln1_g, lp.ln1_b)
            q = h @ lp.wq.T + lp.bq
            k = h @ lp.wk.T + lp.bk
            v = h @ lp.wv.T + lp.bv
            cache.append(li, k, v)
            keys = cache.k[li][:new_len]
            vals = cache.v[li][:new_len]
            mask = build_attention_mask(mask_mode, s, new_len, chunk_size)
            qh = q.reshape(s, h_count, dh).transpose(1, 0, 2)
            kh = keys.reshape(new_len, h_count, dh).transpose(1, 0, 2)
            vh = vals.reshape(new_len, h_count, dh).transpose(1, 0, 2)
            scores = qh @ kh.transpose(0, 2, 1) / np.sqrt(dh)
            scores = np.where(mask[None, :, :], scores, -np.inf)
            probs = np.exp(scores - scores.max(axis=-1, keepdims=True))
            probs /= probs.sum(axis=-1, keepdims=True)
            ctx = (probs @ vh).transpose(1, 0, 2).reshape(s, self.cfg.embed_dim)
            x = x + ctx @ lp.wo.T + lp.bo
            h2 = _layer_norm(x, lp.ln2_g, lp.ln2_b)
            ff = np.maximum(h2 @ lp.ffn_w1.T + lp.ffn_b1, 0.0) @ lp.ffn_w2.T
            x = x + ff + lp.ffn_b2
        cache.advance(s)
        return x @ self.params.out_w.T + self.params.out_b

    def forward(self, cache: KVCache, items: Sequence[StreamItem]) -> np.ndarray:
        """Engine entry point: append items, return last-position logits."""
        x = self.embed_items(items, start=len(cache))
        logits = self.forward_embedded(x, cache)
        return logits[-1]

    def forward_sequence(
        self,
        items: Sequence[StreamItem],
        mask_mode: str = "full",
        chunk_size: int | None = None,
    ) -> np.ndarray:
        """One-shot forward over a whole sequence with a fresh cache."""
        cache = self.new_cache()
        x = self.embed_items(items, start=0)
        return self.forward_embedded(x, cache, mask_mode, chunk_size)

    # -- serialization

    _MAGIC = b"SADC"
    _VERSION = 1

    def save(self, path: str) -> None:
        """Flat binary: header with dims and seed, then float64 parameter
        blocks in declaration order. Reload is byte-exact."""
        c = self.cfg
        header = struct.pack(
            "<4sH9q",
            self._MAGIC, self._VERSION,
            c.vocab_size, c.embed_dim, c.num_layers, c.num_heads, c.ffn_dim,
            c.frame_dim, c.adapter_hidden, c.max_context, c.seed,
        )
        with open(path, "wb") as fh:
            fh.write(header)
            for block in _param_blocks(self.params):
                fh.write(np.ascontiguousarray(block, dtype=np.float64).tobytes())

    @classmethod
    def load(cls, path: str) -> "ToyDecoder":
        with open(path, "rb") as fh:
            raw = fh.read()
        head = struct.calcsize("<4sH9q")
        magic, version, *dims = struct.unpack("<4sH9q", raw[:head])
        if magic != cls._MAGIC or version != cls._VERSION:
            raise ValueError("not a toy decoder parameter file")
        cfg = ModelConfig(*dims)
        model = cls(cfg)  # allocates correctly shaped blocks
        offset = head
        for block in _param_blocks(model.params):
            n = block.size * 8
            block[...] = np.frombuffer(
                raw[offset : offset + n], dtype=np.float64
            ).reshape(block.shape)
            offset += n
        if offset != len(raw):
            raise ValueError("parameter file size mismatch")
        return model


def make_toy_model(cfg: ModelConfig) -> ToyDecoder:
    return ToyDecoder(cfg)


# --------------------------------------------------------------------------
# replay oracles


_ORACLE_LOW = -30.0  # non-target logit; softmax mass on the target is ~1


def _one_hot_logits(vocab_size: int, token_id: int) -> np.ndarray:
    out = np.full(vocab_size, _ORACLE_LOW)
    out[token_id] = 0.0
    return out


class TeacherOracle:
    """Emits the layout target for the last appended position.

    Position-indexed: the engine may append values that differ from the
    layout (a fallback decode appends the provisional token itself where
    the layout shows pad) and the reply is still the layout's target for
    that slot. Stepping past the layout raises.
    """

    def __init__(self, seq: MixedSequence, sp: SpecialTokens, vocab_size: int):
        self.seq = seq
        self.sp = sp
        self.vocab_size = vocab_size

    def new_cache(self) -> SymbolicCache:
        return SymbolicCache(self.sp)

    def forward(self, cache: SymbolicCache, items: Sequence[StreamItem]) -> np.ndarray:
        cache.append_items(items)
        idx = len(cache) - 1
        if idx >= len(self.seq.targets):
            raise StepBeyondSequence(f"position {idx} past layout end")
        t = self.seq.targets[idx]
        return _one_hot_logits(self.vocab_size, t if t is not None else self.sp.pad)


def make_teacher_oracle(
    seq: MixedSequence, sp: SpecialTokens | None = None, vocab_size: int = 32
) -> TeacherOracle:
    return TeacherOracle(seq, sp or SpecialTokens(), vocab_size)


def default_confusable_map(sp: SpecialTokens, vocab_size: int) -> Callable[[int], int]:
    """Cyclic next-token map over the text vocabulary; never maps to self."""
    span = vocab_size - sp.first_text_id

    def confuse(t: int) -> int:
        return sp.first_text_id + ((t - sp.first_text_id + 1) % span)

    return confuse


class BoundaryOracle:
    """Deterministic stand-in for a trained model with boundary ambiguity.

    State lives entirely in the symbolic cache: the count of real text
    tokens identifies the next occurrence to emit, the max speech frame
    identifies the context edge. A token whose end frame lies within the
    confusion window of the edge, with no audio past it in context, comes
    out wrong; re-decoded with later audio it comes out right. Stop symbols
    follow the bound paradigm: pad for turn-stops, eos only where the
    non-streaming and standard streaming layouts end an utterance.
    """

    def __init__(
        self,
        utt: Utterance,
        paradigm: str,
        sp: SpecialTokens,
        vocab_size: int,
        confusion_window: int,
        confusable: Callable[[int], int] | None = None,
    ):
        if paradigm not in ("ns", "ss", "cs"):
            raise ValueError(f"unknown paradigm {paradigm!r}")
        self.utt = utt
        self.paradigm = paradigm
        self.sp = sp
        self.vocab_size = vocab_size
        self.window = confusion_window
        self.confusable = confusable or default_confusable_map(sp, vocab_size)

    def new_cache(self) -> SymbolicCache:
        return SymbolicCache(self.sp)

    def _stop_token(self, utterance_done: bool) -> int:
        if self.paradigm == "ns":
            return self.sp.eos
        if self.paradigm == "cs":
            return self.sp.pad
        return self.sp.eos if utterance_done else self.sp.pad

    def forward(self, cache: SymbolicCache, items: Sequence[StreamItem]) -> np.ndarray:
        cache.append_items(items)
        o = cache.real_count
        if o >= len(self.utt.tokens):
            return _one_hot_logits(self.vocab_size, self._stop_token(True))
        end = self.utt.alignments[o].end_frame
        edge = cache.max_frame
        if end > edge:  # not yet audible: wait for more speech
            return _one_hot_logits(self.vocab_size, self._stop_token(False))
        tok = self.utt.tokens[o]
        confused = (
            self.window > 0
            and (edge - end) < self.window
            and edge <= end  # no speech past the token in context
        )
        return _one_hot_logits(
            self.vocab_size, self.confusable(tok) if confused else tok
        )


class BoundaryOracleSuite:
    """Per-utterance factory for boundary oracles over one corpus."""

    def __init__(
        self,
        utts: Sequence[Utterance],
        confusion_window: int,
        confusable: Callable[[int], int] | None = None,
        sp: SpecialTokens | None = None,
        vocab_size: int = 32,
    ):
        self.by_id = {u.id: u for u in utts}
        self.window = confusion_window
        self.confusable = confusable
        self.sp = sp or SpecialTokens()
        self.vocab_size = vocab_size

    def bind(self, utt: Utterance | str, paradigm: str) -> BoundaryOracle:
        u = self.by_id[utt] if isinstance(utt, str) else utt
        return BoundaryOracle(
            u, paradigm, self.sp, self.vocab_size, self.window, self.confusable
        )


def make_boundary_oracle(
    utts: Sequence[Utterance],
    confusion_window: int,
    confusable_map: Callable[[int], int] | None = None,
    sp: SpecialTokens | None = None,
    vocab_size: int = 32,
) -> BoundaryOracleSuite:
    return BoundaryOracleSuite(utts, confusion_window, confusable_map, sp, vocab_size)
