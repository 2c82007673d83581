"""Symbolic expansion of residual connection styles into their implicit paths.

A stack of n residual blocks can be read as the formal sum of all paths
from input to output: at every junction a path either takes the skip or
goes through the block's operations. Expanding the block recurrence
multilinearly makes that ensemble explicit, one additive term per path.

The four styles expanded here, with h a single operation and (f, g) a
paired first/second operation:

    a   x_{l+1} = x_l + h_l(x_l)
    b   x_{l+1} = x_l + g_l(f_l(x_l))
    c   x'      = x_l + f_l(x_l);  x_{l+1} = x' + g_l(x')
    d   x_{l+1} = x_l + g_l(f_l(x_l) + r_l);  r_{l+1} = f_l(x_l) + r_l

Style d threads a second residual stream r (the carrier, empty before the
first block), which is what lets f_i meet g_j across blocks: its pair set
over all paths is exactly {(i, j): i <= j}, with every f consumed by some
g and every g fed by some f. Style b pairs only the diagonal (i, i);
style c leaves both unpaired f's and unpaired g's in its paths.

A pair here means direct composition: f_i's output is the immediate
argument of g_j inside one term. Co-occurrence in separate additive
branches does not count.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError

STYLES = ("a", "b", "c", "d")

MAX_BLOCKS = 12  # term counts grow fast; style d hits 75,025 terms at n=12


@dataclass(frozen=True)
class TermExpr:
    """One additive path term.

    ops lists the operations in application order (ops[0] touches the
    input first); the empty tuple is the identity path. direct_pairs are
    the (i, j) composition pairs recorded while the term was built.
    """

    ops: tuple[tuple[str, int], ...]
    direct_pairs: tuple[tuple[int, int], ...] = ()

    def wrap(self, kind: str, index: int) -> "TermExpr":
        pairs = self.direct_pairs
        if kind == "g" and self.ops and self.ops[-1][0] == "f":
            pairs = pairs + ((self.ops[-1][1], index),)
        return TermExpr(self.ops + ((kind, index),), pairs)

    def label(self) -> str:
        if not self.ops:
            return "1"
        return "->".join(f"{k}{i}" for k, i in self.ops)

    @property
    def unpaired_f(self) -> int:
        count = 0
        for pos, (kind, _) in enumerate(self.ops):
            if kind == "f":
                nxt = self.ops[pos + 1][0] if pos + 1 < len(self.ops) else None
                if nxt != "g":
                    count += 1
        return count

    @property
    def unpaired_g(self) -> int:
        count = 0
        for pos, (kind, _) in enumerate(self.ops):
            if kind == "g":
                prev = self.ops[pos - 1][0] if pos > 0 else None
                if prev != "f":
                    count += 1
        return count


@dataclass(frozen=True)
class PathReport:
    style: str
    n_blocks: int
    n_terms: int
    pair_set: frozenset[tuple[int, int]]
    unpaired_f: int
    unpaired_g: int


@dataclass(frozen=True)
class VerifyResult:
    report: PathReport
    law: str | None  # human-readable statement of the style's pairing law
    passed: bool | None  # None when the style carries no law (a, c)


def expand(style: str, n: int) -> list[TermExpr]:
    """All additive path terms of an n-block stack of the given style."""
    if style not in STYLES:
        raise ConfigError(f"unknown connection style {style!r}")
    if not 1 <= n <= MAX_BLOCKS:
        raise ConfigError(f"block count {n} outside 1..{MAX_BLOCKS}")
    identity = TermExpr(())
    if style == "a":
        terms = [identity]
        for l in range(1, n + 1):
            terms = terms + [t.wrap("h", l) for t in terms]
        return terms
    if style == "b":
        terms = [identity]
        for l in range(1, n + 1):
            terms = terms + [t.wrap("f", l).wrap("g", l) for t in terms]
        return terms
    if style == "c":
        terms = [identity]
        for l in range(1, n + 1):
            mid = terms + [t.wrap("f", l) for t in terms]
            terms = mid + [t.wrap("g", l) for t in mid]
        return terms
    # style d: x terms plus the carrier terms r (f outputs accumulated so far)
    x_terms = [identity]
    r_terms: list[TermExpr] = []
    for l in range(1, n + 1):
        gated = [t.wrap("f", l) for t in x_terms] + r_terms
        x_terms = x_terms + [t.wrap("g", l) for t in gated]
        r_terms = gated
    return x_terms


def pairing_report(terms: list[TermExpr], style: str = "?", n_blocks: int = 0) -> PathReport:
    """Aggregate pair set and unpaired-operation counts over all terms."""
    pairs: set[tuple[int, int]] = set()
    unpaired_f = 0
    unpaired_g = 0
    for t in terms:
        pairs.update(t.direct_pairs)
        unpaired_f += t.unpaired_f
        unpaired_g += t.unpaired_g
    return PathReport(style=style, n_blocks=n_blocks, n_terms=len(terms),
                      pair_set=frozenset(pairs), unpaired_f=unpaired_f,
                      unpaired_g=unpaired_g)


def verify_pairing(style: str, n: int) -> VerifyResult:
    """Expand and check the style's pairing law, when it has one.

    Style d must pair every (i, j) with i <= j and leave nothing unpaired;
    style b must pair exactly the diagonal. Styles a and c carry no law.
    """
    report = pairing_report(expand(style, n), style=style, n_blocks=n)
    if style == "d":
        want = frozenset((i, j) for i in range(1, n + 1) for j in range(i, n + 1))
        ok = (report.pair_set == want
              and report.unpaired_f == 0 and report.unpaired_g == 0)
        return VerifyResult(report, "pairs == {(i, j): i <= j}, nothing unpaired", ok)
    if style == "b":
        want = frozenset((i, i) for i in range(1, n + 1))
        ok = (report.pair_set == want
              and report.unpaired_f == 0 and report.unpaired_g == 0)
        return VerifyResult(report, "diagonal pairs only, nothing unpaired", ok)
    return VerifyResult(report, None, None)
