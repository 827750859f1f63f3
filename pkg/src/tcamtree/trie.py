"""Unibit trie construction, lean-level statistics, and controlled prefix expansion."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional

from .errors import DuplicatePrefix, EmptyDatabase, LevelOutOfRange, TargetTooShort
from .prefixdb import DEFAULT_NEXT_HOP, PrefixDatabase


class TrieNode:
    __slots__ = ("depth", "zero", "one", "value")

    def __init__(self, depth: int):
        self.depth = depth
        self.zero: Optional[TrieNode] = None
        self.one: Optional[TrieNode] = None
        self.value: Optional[str] = None

    @property
    def children(self):
        return [c for c in (self.zero, self.one) if c is not None]

    def child(self, bit: str) -> Optional["TrieNode"]:
        return self.one if bit == "1" else self.zero


def build_unibit_trie(db: PrefixDatabase) -> TrieNode:
    """One node per distinct prefix path; a node's value is set where an entry ends."""
    root = TrieNode(0)
    for p in db.entries:
        node = root
        for bit in p.bits:
            if bit == "1":
                if node.one is None:
                    node.one = TrieNode(node.depth + 1)
                node = node.one
            else:
                if node.zero is None:
                    node.zero = TrieNode(node.depth + 1)
                node = node.zero
        node.value = p.next_hop
    return root


def trie_lookup(root: TrieNode, address: str) -> str:
    """Walk the trie on `address`, returning the deepest stored value seen."""
    best = DEFAULT_NEXT_HOP
    node = root
    if node.value is not None:
        best = node.value
    for bit in address:
        node = node.child(bit)
        if node is None:
            break
        if node.value is not None:
            best = node.value
    return best


@dataclass(frozen=True)
class LeanLevelRow:
    depth: int
    nonleaf_count: int
    b: Fraction                  # 100 * nonleaf_count / N, kept exact
    worst_overhead: Fraction     # 2 * b: pointer waste plus packing waste


class LeanLevelTable:
    """Per-depth non-leaf counts; low counts mark cheap places to cut the trie."""

    def __init__(self, rows: Iterable[LeanLevelRow], total_prefixes: int):
        self.rows = tuple(rows)
        self.total_prefixes = total_prefixes
        self._by_depth = {r.depth: r for r in self.rows}

    @property
    def max_depth(self) -> int:
        return self.rows[-1].depth if self.rows else 0

    def row(self, depth: int) -> LeanLevelRow:
        try:
            return self._by_depth[depth]
        except KeyError:
            raise LevelOutOfRange(f"no lean-level row for depth {depth}") from None

    def nonleaf(self, depth: int) -> int:
        return self.row(depth).nonleaf_count

    def b(self, depth: int) -> Fraction:
        return self.row(depth).b

    def to_csv(self, min_level: int = 1, max_level: Optional[int] = None) -> str:
        from ._util import decimal_str

        if max_level is None:
            max_level = self.max_depth
        lines = ["level,b_percent,worst_overhead_percent"]
        for depth in range(min_level, max_level + 1):
            r = self.row(depth)
            lines.append(f"{depth},{decimal_str(r.b)},{decimal_str(r.worst_overhead)}")
        return "".join(line + "\n" for line in lines)


def compute_lean_levels(
    root: TrieNode, total_prefixes: int, max_depth: Optional[int] = None
) -> LeanLevelTable:
    """Count nodes with at least one child at every depth 0..max_depth."""
    if total_prefixes < 1:
        raise EmptyDatabase("lean levels need at least one prefix")
    counts: dict[int, int] = {}
    deepest = 0
    stack = [root]
    while stack:
        node = stack.pop()
        deepest = max(deepest, node.depth)
        kids = node.children
        if kids:
            counts[node.depth] = counts.get(node.depth, 0) + 1
            stack.extend(kids)
    if max_depth is None:
        max_depth = deepest
    rows = []
    for depth in range(max_depth + 1):
        n = counts.get(depth, 0)
        b = Fraction(100 * n, total_prefixes)
        rows.append(LeanLevelRow(depth, n, b, 2 * b))
    return LeanLevelTable(rows, total_prefixes)


def expand_prefixes(
    entries: Iterable[tuple[str, int, str]], target_length: int
) -> dict[str, str]:
    """Rewrite each entry as all its `target_length`-bit completions; longer originals win.

    Exact-match lookup on the result equals longest-prefix-match on the input
    for every target_length-bit key that some entry covers.
    """
    items = sorted(entries, key=lambda e: (e[1], e[0]))
    out: dict[str, str] = {}
    seen: set[str] = set()
    for bits, length, value in items:
        if len(bits) != length:
            raise ValueError("entry bits must match the stated length")
        if length > target_length:
            raise TargetTooShort(
                f"entry of length {length} cannot expand to {target_length} bits"
            )
        if bits in seen:
            raise DuplicatePrefix(f"duplicate entry {bits}/{length} in expansion input")
        seen.add(bits)
        span = 1 << (target_length - length)
        base = int(bits, 2) << (target_length - length) if bits else 0
        for key in range(base, base + span):
            out[format(key, f"0{target_length}b")] = value
    return out


def expanded_size(entries: Iterable[tuple[str, int, str]], target_length: int) -> int:
    """Distinct-key count of expand_prefixes without enumerating keys.

    Each entry covers a contiguous key range, so the answer is the size of an
    interval union; this stays cheap even when the expansion itself would not.
    """
    intervals = []
    for bits, length, _ in entries:
        if length > target_length:
            raise TargetTooShort(
                f"entry of length {length} cannot expand to {target_length} bits"
            )
        base = int(bits, 2) << (target_length - length) if bits else 0
        intervals.append((base, base + (1 << (target_length - length))))
    intervals.sort()
    total = 0
    end = None
    for lo, hi in intervals:
        if end is None or lo > end:
            total += hi - lo
            end = hi
        elif hi > end:
            total += hi - end
            end = hi
    return total
