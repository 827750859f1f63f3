"""SRAM hybridization of tree tables and tag-based packing into super-tables.

Hybridization trades ternary rows for exact-match rows: a table whose
controlled prefix expansion stays within a conversion-factor budget is
re-marked as SRAM, and its expanded rows are pooled into page accounting.
Packing groups the remaining TCAM tables of each level into tagged
super-tables so that fragmentation is amortized over whole block sets.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional

from ._util import ceil_div, ceil_log2
from .errors import TagOverflow
from .tiler import SRAM, TCAM, GrainSpec, TcamTree, TreeTable, blocks_for_table
from .trie import expanded_size


@dataclass(frozen=True)
class SramPageSpec:
    """Geometry of one SRAM page: row width in bits x rows."""

    page_width: int = 128
    page_depth: int = 1024

    @classmethod
    def parse(cls, text: str) -> "SramPageSpec":
        w, _, d = text.lower().partition("x")
        return cls(int(w), int(d))

    def __str__(self):
        return f"{self.page_width}x{self.page_depth}"


@dataclass(frozen=True)
class HybridizationConfig:
    enabled: bool = True
    factor: Fraction = Fraction(3)          # expansion budget: expanded <= factor * rows
    sram_spec: SramPageSpec = SramPageSpec()
    value_bits: int = 16                    # assumed result width per row; not published
    tag_bits: Optional[int] = None          # disambiguator budget for pooled rows

    def __post_init__(self):
        object.__setattr__(self, "factor", Fraction(str(self.factor)) if isinstance(self.factor, float) else Fraction(self.factor))
        if self.factor < 1:
            raise ValueError("conversion factor must be >= 1")

    @property
    def effective_tag_bits(self) -> int:
        if self.tag_bits is not None:
            return self.tag_bits
        return ceil_log2(self.sram_spec.page_depth)


def hybridize(tree: TcamTree, cfg: HybridizationConfig) -> tuple[TcamTree, int]:
    """Re-mark eligible tables as SRAM, in place; returns (tree, pooled row count).

    Runs before tagging.  A table qualifies when the expansion of its own
    terminal entries to the local maximum length is at most factor times its
    current row count, and an expanded row (tag + key + value) fits the page
    width.  Tables with no terminal entries stay TCAM: expanding pure pointer
    tables saves nothing.  Parent rows expose the child's kind via
    TableEntry.child_kind so a walk knows which lookup the next stage runs.
    """
    if not cfg.enabled:
        return tree, 0
    total_rows = 0
    for tables in tree.levels:
        for table in tables:
            terminals = table.terminal_prefixes()
            if not terminals:
                continue
            target = table.max_local_length()
            expanded = expanded_size(terminals, target)
            row_bits = cfg.effective_tag_bits + target + cfg.value_bits
            if expanded > cfg.factor * table.entry_count:
                continue
            if row_bits > cfg.sram_spec.page_width:
                continue
            table.kind = SRAM
            table.sram_key_len = target
            table.invalidate()
            total_rows += sram_rows_for_table(table)
    return tree, total_rows


def sram_rows_for_table(table: TreeTable) -> int:
    """Exact-match rows a converted table occupies: the expanded terminal keys
    plus any stub keys the expansion does not already cover.  Uses the live
    expansion width, matching the lookup path."""
    terminals = table.terminal_prefixes()
    target = table.max_local_length()
    rows = expanded_size(terminals, target)
    intervals = sorted(
        (
            (int(bits, 2) << (target - length)) if bits else 0,
            ((int(bits, 2) + 1) << (target - length)) if bits else (1 << target),
        )
        for bits, length, _ in terminals
    )
    for e in table.raw_entries():
        if e.child is None:
            continue
        key = int(e.key_bits, 2)
        if not any(lo <= key < hi for lo, hi in intervals):
            rows += 1
    return rows


class SuperTable:
    """Same-level tables packed onto one block set, told apart by a tag prefix."""

    def __init__(self, level_index: int, tag_bits: int, members, grain: GrainSpec):
        self.level_index = level_index
        self.tag_bits = tag_bits
        self.members: list[tuple[int, TreeTable]] = list(members)
        self.grain = grain
        if len(self.members) > (1 << tag_bits):
            raise TagOverflow(
                f"{len(self.members)} members cannot be told apart by {tag_bits} tag bits"
            )
        tags = [tag for tag, _ in self.members]
        if len(set(tags)) != len(tags):
            raise ValueError("tags within a super-table must be unique")
        # Entry capacity as mapped; updates may extend it a block row at a time.
        self.allocated_rows = ceil_div(self.total_entries, grain.depth)

    @property
    def effective_width(self) -> int:
        return self.tag_bits + max(t.stride_width for _, t in self.members)

    @property
    def total_entries(self) -> int:
        return sum(t.entry_count for _, t in self.members)

    @property
    def block_count(self) -> int:
        return blocks_for_table(self.effective_width, self.total_entries, self.grain)

    @property
    def horizontal_blocks(self) -> int:
        return ceil_div(self.effective_width, self.grain.width)

    @property
    def allocated_blocks(self) -> int:
        return self.horizontal_blocks * self.allocated_rows

    @property
    def entry_capacity(self) -> int:
        return self.allocated_rows * self.grain.depth

    @property
    def empty_entries(self) -> int:
        return self.entry_capacity - self.total_entries

    def member_for(self, table: TreeTable) -> Optional[int]:
        for tag, t in self.members:
            if t is table:
                return tag
        return None

    def __repr__(self):
        return (
            f"<SuperTable level={self.level_index} members={len(self.members)}"
            f" entries={self.total_entries} blocks={self.block_count}>"
        )


def _emit_group(level_index, group, tag_bits, grain, out):
    """One super-table for the group, unless the tag tax makes separate
    untagged tables cheaper; a lone table never needs a tag (nothing shares
    its block set), which also keeps post-tag <= pre-tag on narrow grains."""
    if len(group) == 1:
        out.append(SuperTable(level_index, 0, [(0, group[0])], grain))
        return
    packed = SuperTable(level_index, tag_bits, list(enumerate(group)), grain)
    separate = sum(
        blocks_for_table(t.stride_width, t.entry_count, grain) for t in group
    )
    if packed.block_count <= separate:
        out.append(packed)
    else:
        out.extend(SuperTable(level_index, 0, [(0, t)], grain) for t in group)


def tag_and_pack(
    tree: TcamTree,
    grain: GrainSpec,
    tag_bits: Optional[int] = None,
    max_group_entries: Optional[int] = None,
    allow_multiple_groups: bool = True,
) -> list[SuperTable]:
    """Group each level's TCAM tables into super-tables.

    Tables are taken largest-first (pairing large with small bounds the size of
    any one group) and a group closes at 2**tag_bits members, or earlier when
    an optional per-group entry cap would be exceeded.  The root stays alone
    and untagged; SRAM tables are never tagged.
    """
    if tag_bits is None:
        tag_bits = grain.default_tag_bits
    result: list[SuperTable] = []
    for level_index, tables in enumerate(tree.levels):
        tcams = [t for t in tables if t.kind == TCAM]
        if not tcams:
            continue
        if level_index == 0:
            for t in tcams:
                result.append(SuperTable(0, 0, [(0, t)], grain))
            continue
        if not allow_multiple_groups and len(tcams) > (1 << tag_bits):
            raise TagOverflow(
                f"level {level_index} has {len(tcams)} tables for {tag_bits} tag bits"
            )
        ordered = sorted(
            enumerate(tcams), key=lambda it: (-it[1].entry_count, it[0])
        )
        group: list[TreeTable] = []
        group_entries = 0
        for _, t in ordered:
            closes = len(group) >= (1 << tag_bits) or (
                max_group_entries is not None
                and group
                and group_entries + t.entry_count > max_group_entries
            )
            if closes:
                _emit_group(level_index, group, tag_bits, grain, result)
                group, group_entries = [], 0
            group.append(t)
            group_entries += t.entry_count
        if group:
            _emit_group(level_index, group, tag_bits, grain, result)
    return result


def pre_tag_blocks(tree: TcamTree, grain: GrainSpec) -> int:
    """Block cost if every TCAM table were tiled on its own, untagged."""
    return sum(
        blocks_for_table(t.stride_width, t.entry_count, grain)
        for t in tree.all_tables()
        if t.kind == TCAM
    )


@dataclass(frozen=True)
class ResourceReport:
    tcam_blocks_pre_tag: int
    tcam_blocks_post_tag: int
    sram_pages: int
    tcam_bits: int
    sram_entries: int
    baseline_blocks: int
    improvement_factor: Optional[Fraction]   # None means infinite (no TCAM used)

    def __post_init__(self):
        if self.tcam_blocks_post_tag > self.tcam_blocks_pre_tag:
            raise ValueError("tagging must not increase the block count")
        for name in ("tcam_blocks_pre_tag", "tcam_blocks_post_tag", "sram_pages",
                     "tcam_bits", "sram_entries", "baseline_blocks"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


def resource_totals(
    supertables: Iterable[SuperTable],
    sram_entry_total: int,
    grain: GrainSpec,
    sram_spec: SramPageSpec,
    baseline_blocks: int,
) -> ResourceReport:
    """Block, page, and bit totals for a packed plan, against a stated baseline."""
    supertables = list(supertables)
    post = sum(st.block_count for st in supertables)
    pre = sum(
        blocks_for_table(t.stride_width, t.entry_count, grain)
        for st in supertables
        for _, t in st.members
    )
    pages = ceil_div(sram_entry_total, sram_spec.page_depth)
    if post == 0:
        improvement = None if baseline_blocks > 0 else Fraction(1)
    else:
        improvement = Fraction(baseline_blocks, post)
    return ResourceReport(
        tcam_blocks_pre_tag=pre,
        tcam_blocks_post_tag=post,
        sram_pages=pages,
        tcam_bits=post * grain.bits,
        sram_entries=sram_entry_total,
        baseline_blocks=baseline_blocks,
        improvement_factor=improvement,
    )
