"""Error and latency metrics for streaming transcripts.

Edit distance is the standard dynamic program with a pinned tie-break so
error category counts are deterministic: at equal total cost a
substitution is preferred over an insertion, an insertion over a deletion.

Latency idealizes chunk arrival: chunk k is fully available at time
(k+1)*chunk_ms and compute is free, so strategy comparisons isolate the
algorithmic delay. A token whose audio ends at end_frame (time
end_frame/fps*1000 ms) and which first appears in chunk k has emission
latency (k+1)*chunk_ms - end_ms, clamped at zero; finalization latency is
the same with the finalizing chunk. Hypothesis tokens are matched to
reference tokens through the edit alignment, so insertions carry no
latency and deleted reference tokens none either.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

from .corpus import TokenAlignment
from .engine import EmissionRecord

__all__ = [
    "ErrorCounts",
    "edit_distance",
    "align_tokens",
    "pool_counts",
    "LatencyReport",
    "emission_latency",
    "RowSummary",
    "summarize",
    "to_csv",
]


@dataclass(frozen=True)
class ErrorCounts:
    substitutions: int
    insertions: int
    deletions: int
    ref_len: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def wer(self) -> float:
        if self.ref_len == 0:
            return 0.0 if self.errors == 0 else float("inf")
        return self.errors / self.ref_len


def edit_distance(ref: Sequence[int], hyp: Sequence[int]) -> ErrorCounts:
    """Levenshtein alignment counts; ties resolve sub > ins > del."""
    nr, nh = len(ref), len(hyp)
    # cell = (cost, subs, inss, dels)
    prev = [(j, 0, j, 0) for j in range(nh + 1)]
    for i in range(1, nr + 1):
        cur = [(i, 0, 0, i)]
        for j in range(1, nh + 1):
            dc, ds, di, dd = prev[j - 1]
            if ref[i - 1] == hyp[j - 1]:
                best = (dc, ds, di, dd)
            else:
                best = (dc + 1, ds + 1, di, dd)
            ic, is_, ii, id_ = cur[j - 1]
            if ic + 1 < best[0]:
                best = (ic + 1, is_, ii + 1, id_)
            ec, es, ei, ed = prev[j]
            if ec + 1 < best[0]:
                best = (ec + 1, es, ei, ed + 1)
            cur.append(best)
        prev = cur
    cost, s, i_, d = prev[nh]
    assert s + i_ + d == cost
    return ErrorCounts(s, i_, d, nr)


def align_tokens(
    ref: Sequence[int], hyp: Sequence[int],
) -> list[tuple[int, int]]:
    """(ref_index, hyp_index) pairs for matched and substituted tokens under
    the same optimal alignment edit_distance counts, same tie-break. Inserted
    hypothesis tokens and deleted reference tokens pair with nothing."""
    nr, nh = len(ref), len(hyp)
    cost = [[0] * (nh + 1) for _ in range(nr + 1)]
    cost[0] = list(range(nh + 1))
    for i in range(1, nr + 1):
        cost[i][0] = i
        for j in range(1, nh + 1):
            best = cost[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1])
            if cost[i][j - 1] + 1 < best:
                best = cost[i][j - 1] + 1
            if cost[i - 1][j] + 1 < best:
                best = cost[i - 1][j] + 1
            cost[i][j] = best
    pairs: list[tuple[int, int]] = []
    i, j = nr, nh
    while i > 0 or j > 0:
        # mirror the forward preference: diagonal, then insertion, then
        # deletion, so the traced path is the one the counts describe
        if i > 0 and j > 0 and \
                cost[i][j] == cost[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            pairs.append((i - 1, j - 1))
            i, j = i - 1, j - 1
        elif j > 0 and cost[i][j] == cost[i][j - 1] + 1:
            j -= 1
        else:
            i -= 1
    pairs.reverse()
    return pairs


def pool_counts(counts: Sequence[ErrorCounts]) -> ErrorCounts:
    return ErrorCounts(
        sum(c.substitutions for c in counts),
        sum(c.insertions for c in counts),
        sum(c.deletions for c in counts),
        sum(c.ref_len for c in counts),
    )


# --------------------------------------------------------------------------
# latency


@dataclass
class LatencyReport:
    emit_ms: list[float] = field(default_factory=list)
    finalize_ms: list[float] = field(default_factory=list)

    @property
    def mean_emit_ms(self) -> float:
        return sum(self.emit_ms) / len(self.emit_ms) if self.emit_ms else 0.0

    @property
    def mean_finalize_ms(self) -> float:
        return (sum(self.finalize_ms) / len(self.finalize_ms)
                if self.finalize_ms else 0.0)

    @property
    def max_spike_ms(self) -> float:
        """Worst per-token finalization delay; the cost of waiting out a
        commit policy shows up here long before it moves the mean."""
        return max(self.finalize_ms, default=0.0)


def emission_latency(
    records: Sequence[EmissionRecord],
    aligns: Sequence[TokenAlignment],
    chunk_ms: float,
    fps: float,
) -> LatencyReport:
    live = [r for r in records if not r.retracted]
    ref = [a.token_id for a in aligns]
    hyp = [r.token for r in live]
    report = LatencyReport()
    for ri, hj in align_tokens(ref, hyp):
        r = live[hj]
        end_ms = aligns[ri].end_frame / fps * 1000.0
        f_chunk = r.finalize_chunk if r.finalize_chunk is not None else r.emit_chunk
        report.emit_ms.append(max(0.0, (r.emit_chunk + 1) * chunk_ms - end_ms))
        report.finalize_ms.append(max(0.0, (f_chunk + 1) * chunk_ms - end_ms))
    return report


# --------------------------------------------------------------------------
# summary table


@dataclass
class RowSummary:
    """One strategy/chunk-size row of a comparison report.

    ``wers`` holds WER percentages grouped by dataset family, e.g.
    ((2.46, 3.54), (2.74, 6.65)); the single-corpus case is ((wer,),).
    """

    name: str
    wers: tuple[tuple[float, ...], ...]
    counts: ErrorCounts | None = None
    emit_ms: float | None = None
    finalize_ms: float | None = None
    max_spike_ms: float | None = None
    forward_positions: int | None = None

    @property
    def avg_wer(self) -> float:
        flat = [w for group in self.wers for w in group]
        return sum(flat) / len(flat) if flat else 0.0

    @property
    def wer_cell(self) -> str:
        groups = ", ".join(
            " | ".join(f"{w:.2f}" for w in group) for group in self.wers
        )
        return f"{groups}, avg {self.avg_wer:.2f}"


def _fmt(value, pattern: str) -> str:
    return pattern.format(value) if value is not None else "-"


def summarize(rows: Sequence[RowSummary]) -> str:
    """Aligned markdown comparison table, one row per strategy/chunk size."""
    header = ["strategy", "wer%", "emit ms", "final ms", "spike ms",
              "positions"]
    body = [
        [
            r.name,
            r.wer_cell,
            _fmt(r.emit_ms, "{:.2f}"),
            _fmt(r.finalize_ms, "{:.2f}"),
            _fmt(r.max_spike_ms, "{:.2f}"),
            _fmt(r.forward_positions, "{:d}"),
        ]
        for r in rows
    ]
    widths = [
        max(len(header[c]), *(len(row[c]) for row in body)) if body
        else len(header[c])
        for c in range(len(header))
    ]
    def line(cells):
        return "| " + " | ".join(
            c.ljust(widths[i]) for i, c in enumerate(cells)) + " |"
    out = [line(header),
           "|" + "|".join("-" * (w + 2) for w in widths) + "|"]
    out.extend(line(row) for row in body)
    return "\n".join(out)


def to_csv(rows: Sequence[RowSummary]) -> str:
    """The same report as comma-separated values, counters included."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["strategy", "wer_pct", "substitutions", "insertions",
                "deletions", "ref_len", "emit_ms", "finalize_ms",
                "max_spike_ms", "forward_positions"])
    for r in rows:
        c = r.counts
        w.writerow([
            r.name,
            f"{r.avg_wer:.4f}",
            c.substitutions if c else "",
            c.insertions if c else "",
            c.deletions if c else "",
            c.ref_len if c else "",
            f"{r.emit_ms:.2f}" if r.emit_ms is not None else "",
            f"{r.finalize_ms:.2f}" if r.finalize_ms is not None else "",
            f"{r.max_spike_ms:.2f}" if r.max_spike_ms is not None else "",
            r.forward_positions if r.forward_positions is not None else "",
        ])
    return buf.getvalue()
