"""Fixed-stride trees of match tables: construction, block costs, stride search.

A tree table holds ternary entries of its stride width.  An original prefix
that ends inside a level becomes a terminal entry padded with trailing
don't-cares; a prefix that crosses the level boundary is represented by a
fully-specified stub entry that carries a pointer to a child table and
inherits the value of the stub key's best match among the table's own
terminal entries.  Entries are matched in descending order of specified bits,
so a first-match lookup returns the longest local match.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Optional

from ._util import ceil_div, ceil_log2
from .errors import BudgetZero, DuplicatePrefix, NotFound, PrefixExceedsCoverage
from .prefixdb import PrefixDatabase
from .trie import LeanLevelTable

TCAM = "tcam"
SRAM = "sram"


@dataclass(frozen=True)
class GrainSpec:
    """Geometry of one physical TCAM block: ternary width x entry depth."""

    width: int = 44
    depth: int = 512

    def __post_init__(self):
        if self.width < 1 or self.depth < 1:
            raise ValueError("grain width and depth must be >= 1")

    @property
    def bits(self) -> int:
        return self.width * self.depth

    @property
    def default_tag_bits(self) -> int:
        return ceil_log2(self.depth)

    @classmethod
    def parse(cls, text: str) -> "GrainSpec":
        w, _, d = text.lower().partition("x")
        return cls(int(w), int(d))

    def __str__(self):
        return f"{self.width}x{self.depth}"


@dataclass(frozen=True)
class StrideList:
    """Ordered per-level bit consumptions; their sum is the coverage length."""

    strides: tuple[int, ...]

    def __post_init__(self):
        if not self.strides:
            raise ValueError("at least one stride is required")
        if any(s < 1 for s in self.strides):
            raise ValueError("every stride must be >= 1")

    @property
    def coverage(self) -> int:
        return sum(self.strides)

    @property
    def boundaries(self) -> tuple[int, ...]:
        acc, out = 0, []
        for s in self.strides:
            acc += s
            out.append(acc)
        return tuple(out)

    def start_bit(self, level: int) -> int:
        return sum(self.strides[:level])

    def __len__(self):
        return len(self.strides)

    def __getitem__(self, i):
        return self.strides[i]

    @classmethod
    def parse(cls, text: str) -> "StrideList":
        return cls(tuple(int(part) for part in text.split("-")))

    def __str__(self):
        return "-".join(str(s) for s in self.strides)


def blocks_for_table(table_width: int, table_depth: int, grain: GrainSpec) -> int:
    """Blocks to tile one table: horizontal stitches times vertical stitches."""
    if table_width < 0 or table_depth < 0:
        raise ValueError("width and depth must be >= 0")
    return ceil_div(table_width, grain.width) * ceil_div(table_depth, grain.depth)


class TableEntry:
    """One ternary row: key, optional value (with the local length that produced
    it), optional child pointer.  `is_terminal` marks values that belong to a
    database prefix ending in this table, as opposed to values inherited by a
    stub from the table's own terminals."""

    __slots__ = ("key_bits", "bmp_value", "bmp_local_len", "is_terminal", "child", "seq")

    def __init__(self, key_bits, bmp_value, bmp_local_len, is_terminal, child, seq):
        self.key_bits = key_bits
        self.bmp_value = bmp_value
        self.bmp_local_len = bmp_local_len
        self.is_terminal = is_terminal
        self.child = child
        self.seq = seq

    @property
    def specified_len(self) -> int:
        star = self.key_bits.find("*")
        return len(self.key_bits) if star < 0 else star

    @property
    def child_kind(self) -> Optional[str]:
        # The flag a parent row exposes so the next stage knows which lookup to run.
        return None if self.child is None else self.child.kind

    def matches(self, segment: str) -> bool:
        n = self.specified_len
        return segment[:n] == self.key_bits[:n]

    def __repr__(self):
        mark = "T" if self.is_terminal else "s"
        return f"<{self.key_bits} {mark} {self.bmp_value} child={self.child is not None}>"


class TreeTable:
    """One node of the tree: an ordered ternary table over `stride_width` bits."""

    def __init__(self, level_index: int, stride_width: int, start_bit: int):
        self.level_index = level_index
        self.stride_width = stride_width
        self.start_bit = start_bit
        self.kind = TCAM
        self.sram_key_len: Optional[int] = None
        self._entries: dict[str, TableEntry] = {}
        self._next_seq = 0
        self._ordered: Optional[list[TableEntry]] = None
        self._sram_index = None

    # -- structure ---------------------------------------------------------

    def next_seq(self) -> int:
        self._next_seq += 1
        return self._next_seq

    def invalidate(self):
        self._ordered = None
        self._sram_index = None

    def get(self, key_bits: str) -> Optional[TableEntry]:
        return self._entries.get(key_bits)

    @property
    def entry_count(self) -> int:
        return len(self._entries)

    def entries(self) -> list[TableEntry]:
        """Entries in match priority order: descending specified bits, then creation."""
        if self._ordered is None:
            self._ordered = sorted(
                self._entries.values(), key=lambda e: (-e.specified_len, e.seq)
            )
        return self._ordered

    def raw_entries(self):
        return self._entries.values()

    def terminal_prefixes(self) -> list[tuple[str, int, str]]:
        """(bits, length, value) for database prefixes that end in this table."""
        out = []
        for e in self._entries.values():
            if e.is_terminal:
                out.append((e.key_bits[: e.bmp_local_len], e.bmp_local_len, e.bmp_value))
        return out

    def stub_count(self) -> int:
        """Child-bearing entries: the pointer overhead charged to this table."""
        return sum(1 for e in self._entries.values() if e.child is not None)

    def pure_stub_count(self) -> int:
        """Child-bearing entries that are not also terminals: the rows the
        tree holds beyond the database entries themselves."""
        return sum(
            1 for e in self._entries.values() if e.child is not None and not e.is_terminal
        )

    def max_local_length(self) -> int:
        """Expansion target for SRAM conversion: the full stride when any stub
        exists (stub keys must stay exact), else the longest terminal."""
        if any(e.child is not None for e in self._entries.values()):
            return self.stride_width
        return max((e.bmp_local_len for e in self._entries.values() if e.is_terminal), default=0)

    def local_lpm(self, key: str, exclude: Optional[TableEntry] = None):
        """Longest terminal entry matching `key`; (None, None) when nothing does."""
        best_val, best_len = None, None
        for e in self._entries.values():
            if not e.is_terminal or e is exclude:
                continue
            l = e.bmp_local_len
            if (best_len is None or l > best_len) and l <= len(key):
                if key[:l] == e.key_bits[:l]:
                    best_val, best_len = e.bmp_value, l
        return best_val, best_len

    # -- lookup ------------------------------------------------------------

    def lookup(self, segment: str):
        """(hit, value, value_local_len, child) for one stride segment."""
        if self.kind == SRAM:
            return self._sram_lookup(segment)
        for e in self.entries():
            if e.matches(segment):
                return True, e.bmp_value, e.bmp_local_len, e.child
        return False, None, None, None

    def _sram_index_build(self):
        by_len: dict[int, dict[str, str]] = {}
        stubs: dict[str, TableEntry] = {}
        for e in self._entries.values():
            if e.is_terminal:
                by_len.setdefault(e.bmp_local_len, {})[e.key_bits[: e.bmp_local_len]] = e.bmp_value
            if e.child is not None:
                stubs[e.key_bits] = e
        # The live key width follows the contents: updates that add a longer
        # entry widen the expansion (sram_key_len keeps the as-converted width
        # for accounting only).
        self._sram_index = (sorted(by_len.items(), reverse=True), stubs, self.max_local_length())

    def _sram_lookup(self, segment: str):
        # Exact match over keys expanded to the local maximum length, evaluated
        # without materializing the expansion: longest terminal match plus stub probe.
        if self._sram_index is None:
            self._sram_index_build()
        by_len, stubs, m = self._sram_index
        key = segment[:m]
        value = None
        local_len = None
        for length, table in by_len:
            hop = table.get(key[:length])
            if hop is not None:
                value, local_len = hop, length
                break
        stub = stubs.get(segment) if m == self.stride_width else None
        if value is None and stub is None:
            return False, None, None, None
        return True, value, local_len, (stub.child if stub is not None else None)

    def expanded_entries(self) -> dict[str, tuple[Optional[str], Optional["TreeTable"]]]:
        """Materialized exact-match rows (value, child) at max_local_length bits."""
        from .trie import expand_prefixes

        m = self.max_local_length()
        rows: dict[str, tuple[Optional[str], Optional[TreeTable]]] = {}
        for key, value in expand_prefixes(self.terminal_prefixes(), m).items():
            rows[key] = (value, None)
        for e in self._entries.values():
            if e.child is not None:
                value = rows.get(e.key_bits, (None, None))[0]
                rows[e.key_bits] = (value, e.child)
        return rows

    def __repr__(self):
        return (
            f"<TreeTable level={self.level_index} stride={self.stride_width}"
            f" entries={self.entry_count} kind={self.kind}>"
        )


class TcamTree:
    """The built tree: root table, per-level table lists, entry accounting."""

    def __init__(self, stride_list: StrideList, address_width: int):
        self.stride_list = stride_list
        self.address_width = address_width
        self.levels: list[list[TreeTable]] = [[] for _ in stride_list.strides]
        self.root = self.new_table(0)

    def new_table(self, level_index: int) -> TreeTable:
        t = TreeTable(
            level_index,
            self.stride_list[level_index],
            self.stride_list.start_bit(level_index),
        )
        self.levels[level_index].append(t)
        return t

    def drop_table(self, table: TreeTable):
        self.levels[table.level_index].remove(table)

    def all_tables(self) -> list[TreeTable]:
        return [t for level in self.levels for t in level]

    @property
    def coverage(self) -> int:
        return self.stride_list.coverage

    @property
    def terminal_count(self) -> int:
        return sum(
            1 for t in self.all_tables() for e in t.raw_entries() if e.is_terminal
        )

    @property
    def total_entries(self) -> int:
        return sum(t.entry_count for t in self.all_tables())

    def stub_counts(self) -> dict[int, int]:
        """Pointer overhead per level boundary: child-bearing entries, which
        equal the unibit trie's non-leaf counts at those depths."""
        out = {}
        for level_index, tables in enumerate(self.levels):
            boundary = self.stride_list.boundaries[level_index]
            out[boundary] = sum(t.stub_count() for t in tables)
        return out

    def pure_stub_counts(self) -> dict[int, int]:
        """Rows held beyond the database entries, per level boundary: a stub
        merged with a terminal occupies no extra row and is not counted."""
        out = {}
        for level_index, tables in enumerate(self.levels):
            boundary = self.stride_list.boundaries[level_index]
            out[boundary] = sum(t.pure_stub_count() for t in tables)
        return out

    def structure(self):
        """Deterministic nested dump, used for equality and report assertions."""

        def dump(table):
            return {
                "kind": table.kind,
                "entries": [
                    (
                        e.key_bits,
                        e.bmp_value,
                        e.bmp_local_len,
                        e.is_terminal,
                        dump(e.child) if e.child is not None else None,
                    )
                    for e in table.entries()
                ],
            }

        return dump(self.root)


# -- construction and edits -------------------------------------------------


def tree_insert(tree: TcamTree, bits: str, value: str):
    """Insert one prefix, creating stub/child chains as needed.

    Safe under arbitrary insertion order: a new terminal refreshes the
    inherited values of matching stubs, and a new stub inherits from the
    terminals already present.
    """
    if len(bits) > tree.coverage:
        raise PrefixExceedsCoverage(
            f"prefix of length {len(bits)} exceeds coverage {tree.coverage}"
        )
    table = tree.root
    consumed = 0
    level = 0
    while True:
        s = table.stride_width
        rem = bits[consumed:]
        if len(rem) <= s:
            key = rem + "*" * (s - len(rem))
            entry = table.get(key)
            if entry is not None and entry.is_terminal:
                raise DuplicatePrefix(f"prefix {bits}/{len(bits)} already present")
            if entry is not None:
                entry.is_terminal = True
                entry.bmp_value = value
                entry.bmp_local_len = len(rem)
            else:
                entry = TableEntry(key, value, len(rem), True, None, table.next_seq())
                table._entries[key] = entry
            for other in table._entries.values():
                if other.is_terminal or other.child is None:
                    continue
                if other.key_bits[: len(rem)] == rem and (
                    other.bmp_local_len is None or other.bmp_local_len < len(rem)
                ):
                    other.bmp_value = value
                    other.bmp_local_len = len(rem)
            table.invalidate()
            return
        stub_key = rem[:s]
        entry = table.get(stub_key)
        if entry is None:
            inherited_value, inherited_len = table.local_lpm(stub_key)
            child = tree.new_table(level + 1)
            entry = TableEntry(
                stub_key, inherited_value, inherited_len, False, child, table.next_seq()
            )
            table._entries[stub_key] = entry
            table.invalidate()
        elif entry.child is None:
            entry.child = tree.new_table(level + 1)
            table.invalidate()
        table = entry.child
        consumed += s
        level += 1


def tree_delete(tree: TcamTree, bits: str):
    """Remove one prefix; empty child tables and their stubs are collected."""
    path: list[tuple[TreeTable, TableEntry]] = []
    table = tree.root
    consumed = 0
    while True:
        s = table.stride_width
        rem = bits[consumed:]
        if len(rem) <= s:
            key = rem + "*" * (s - len(rem))
            entry = table.get(key)
            if entry is None or not entry.is_terminal or entry.bmp_local_len != len(rem):
                raise NotFound(f"prefix {bits}/{len(bits)} not in tree")
            if entry.child is not None:
                entry.is_terminal = False
                entry.bmp_value, entry.bmp_local_len = table.local_lpm(
                    entry.key_bits, exclude=entry
                )
            else:
                del table._entries[key]
            for other in table._entries.values():
                if other.is_terminal or other.child is None:
                    continue
                other.bmp_value, other.bmp_local_len = table.local_lpm(other.key_bits)
            table.invalidate()
            break
        entry = table.get(rem[:s])
        if entry is None or entry.child is None:
            raise NotFound(f"prefix {bits}/{len(bits)} not in tree")
        path.append((table, entry))
        table = entry.child
        consumed += s
    # lazy upward collection of emptied tables
    while table.entry_count == 0 and path:
        parent, entry = path.pop()
        tree.drop_table(table)
        entry.child = None
        if not entry.is_terminal:
            del parent._entries[entry.key_bits]
        parent.invalidate()
        table = parent


def build_tree(db: PrefixDatabase, strides: StrideList) -> TcamTree:
    """Build the fixed-stride tree for a whole database.

    Deterministic: prefixes are inserted in (length, file order), so entry
    sequence numbers and the resulting priority order depend only on the
    database contents.
    """
    if strides.coverage > db.address_width:
        raise ValueError(
            f"strides cover {strides.coverage} bits but addresses have {db.address_width}"
        )
    too_long = [p for p in db.entries if p.length > strides.coverage]
    if too_long:
        raise PrefixExceedsCoverage(
            f"{len(too_long)} entries exceed coverage {strides.coverage}"
            f" (first: {too_long[0]})"
        )
    tree = TcamTree(strides, db.address_width)
    for _, _, p in sorted(
        ((p.length, i, p) for i, p in enumerate(db.entries)), key=lambda t: (t[0], t[1])
    ):
        tree_insert(tree, p.bits, p.next_hop)
    return tree


# -- stride search ------------------------------------------------------------


@dataclass(frozen=True)
class StrideSearchConfig:
    height: int                    # number of strides in the tree
    coverage: int                  # total bits the strides must add up to
    budget: int                    # acceptable-overhead threshold (entry count)
    grain: GrainSpec = GrainSpec()
    tag_bits: Optional[int] = None

    def __post_init__(self):
        if self.height < 1:
            raise ValueError("height must be >= 1")
        if self.budget < 0:
            raise ValueError("budget must be >= 0")

    @property
    def effective_tag_bits(self) -> int:
        return self.grain.default_tag_bits if self.tag_bits is None else self.tag_bits


@dataclass(frozen=True)
class ScoredStrides:
    strides: StrideList
    levels: tuple[int, ...]
    overhead: int


@dataclass(frozen=True)
class StrideSearchResult:
    config: StrideSearchConfig
    items: tuple[ScoredStrides, ...]
    # The printed recurrence reuses the last chosen level's pointer count for
    # the final segment; we keep that reading and say so wherever scores are shown.
    convention_note: str = (
        "final-segment overhead term uses the pointer count of the last chosen level"
    )


def choose_strides(
    db: PrefixDatabase, cfg: StrideSearchConfig, lean: LeanLevelTable
) -> StrideSearchResult:
    """Enumerate split-level combinations and keep those under the overhead budget.

    For each (height-1)-subset of levels 1..coverage-1, the overhead charge per
    chosen level is (ceil((level + tag - prev) / grain_width) + 1) * nonleaf(level),
    plus the same form once more for the final segment up to the coverage length.
    Results are sorted by ascending overhead.
    """
    if cfg.height < 2:
        raise ValueError("stride search needs height >= 2; height 1 is the single-table baseline")
    if lean.max_depth < cfg.coverage - 1:
        raise ValueError("lean-level table does not reach the coverage length")
    levels = range(1, cfg.coverage)
    if cfg.budget == 0 and any(lean.nonleaf(l) > 0 for l in levels):
        raise BudgetZero("no split can satisfy a zero overhead budget")
    tag = cfg.effective_tag_bits
    w = cfg.grain.width
    accepted = []
    for combo in combinations(levels, cfg.height - 1):
        overhead = 0
        prev = 0
        for lvl in combo:
            overhead += (ceil_div(lvl + tag - prev, w) + 1) * lean.nonleaf(lvl)
            prev = lvl
        last = combo[-1]
        overhead += (ceil_div(cfg.coverage + tag - prev, w) + 1) * lean.nonleaf(last)
        if overhead < cfg.budget:
            strides = []
            prev = 0
            for lvl in combo:
                strides.append(lvl - prev)
                prev = lvl
            strides.append(cfg.coverage - prev)
            accepted.append(
                ScoredStrides(StrideList(tuple(strides)), combo, overhead)
            )
    accepted.sort(key=lambda s: (s.overhead, s.levels))
    return StrideSearchResult(cfg, tuple(accepted))
