"""Word error rate with full substitution/deletion/insertion accounting."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

__all__ = ["WerBreakdown", "align_edit", "corpus_wer", "wer", "parse_glosses"]

# backtrace operation codes
MATCH, SUB, DEL, INS = "=", "S", "D", "I"


@dataclass(frozen=True)
class WerBreakdown:
    substitutions: int = 0
    deletions: int = 0
    insertions: int = 0
    matches: int = 0
    ref_len: int = 0

    @property
    def hyp_len(self) -> int:
        return self.matches + self.substitutions + self.insertions

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def wer(self) -> float:
        if self.ref_len == 0:
            raise ZeroDivisionError("WER is undefined for an empty reference")
        return self.errors / self.ref_len

    def __add__(self, other: "WerBreakdown") -> "WerBreakdown":
        return WerBreakdown(
            self.substitutions + other.substitutions,
            self.deletions + other.deletions,
            self.insertions + other.insertions,
            self.matches + other.matches,
            self.ref_len + other.ref_len,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["wer"] = self.wer if self.ref_len else None
        return d


def parse_glosses(line: str) -> list[str]:
    return line.split()


def align_edit(ref: Sequence[str], hyp: Sequence[str]) -> tuple[WerBreakdown, list[tuple[str, str | None, str | None]]]:
    """Minimal unit-cost alignment of ``hyp`` against ``ref``.

    Returns the operation counts and one optimal alignment as a list of
    ``(op, ref_token, hyp_token)`` triples, ``op`` being one of ``= S D I``.
    Among equal-cost predecessors the backtrace prefers the diagonal, then a
    deletion, then an insertion.
    """
    ref, hyp = list(ref), list(hyp)
    n, m = len(ref), len(hyp)
    cost = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        cost[i][0] = i
    for j in range(1, m + 1):
        cost[0][j] = j
    for i in range(1, n + 1):
        row, prev = cost[i], cost[i - 1]
        r = ref[i - 1]
        for j in range(1, m + 1):
            diag = prev[j - 1] + (r != hyp[j - 1])
            row[j] = min(diag, prev[j] + 1, row[j - 1] + 1)

    trace = []
    i, j = n, m
    while i or j:
        if i and j and cost[i][j] == cost[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            trace.append((MATCH if ref[i - 1] == hyp[j - 1] else SUB, ref[i - 1], hyp[j - 1]))
            i, j = i - 1, j - 1
        elif i and cost[i][j] == cost[i - 1][j] + 1:
            trace.append((DEL, ref[i - 1], None))
            i -= 1
        else:
            trace.append((INS, None, hyp[j - 1]))
            j -= 1
    trace.reverse()

    counts = {MATCH: 0, SUB: 0, DEL: 0, INS: 0}
    for op, _, _ in trace:
        counts[op] += 1
    br = WerBreakdown(counts[SUB], counts[DEL], counts[INS], counts[MATCH], n)
    assert br.errors == cost[n][m]
    return br, trace


def wer(ref: Sequence[str], hyp: Sequence[str]) -> float:
    if len(ref) == 0:
        raise ValueError("WER is undefined for an empty reference")
    return align_edit(ref, hyp)[0].wer


def corpus_wer(pairs: Iterable[tuple[Sequence[str], Sequence[str]]]) -> tuple[float, WerBreakdown]:
    """Pool edit operations over all pairs and divide by total reference words."""
    total = WerBreakdown()
    n_pairs = 0
    for ref, hyp in pairs:
        total = total + align_edit(ref, hyp)[0]
        n_pairs += 1
    if n_pairs == 0:
        raise ValueError("corpus_wer needs at least one pair")
    if total.ref_len == 0:
        raise ValueError("all references are empty")
    return total.wer, total
