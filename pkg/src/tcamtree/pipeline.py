"""Stage mapping and the runtime model: search, insert, delete, overflow.

Placement honors one hard constraint: every block of a child super-table
lives in a physical stage strictly after every stage used by its parent.
The walk itself is match/action per level: take the next stride segment,
look it up, remember the best value seen, descend on the returned child,
and stop on the first miss or missing child.  Entries that the planned
structure cannot hold (too long for the stride coverage, or no block space
left) sit in a small overflow buffer; its matches are compared against the
tree's by explicit prefix length, overflow winning ties.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Union

from ._util import ceil_div
from .errors import (
    CapacityExceeded,
    DuplicatePrefix,
    NotFound,
    OverflowFull,
    StageDepthExceeded,
)
from .packing import (
    HybridizationConfig,
    SramPageSpec,
    SuperTable,
    hybridize,
    sram_rows_for_table,
    tag_and_pack,
)
from .prefixdb import DEFAULT_NEXT_HOP, Prefix, PrefixDatabase
from .tiler import (
    SRAM,
    GrainSpec,
    StrideList,
    TcamTree,
    TreeTable,
    build_tree,
    tree_delete,
    tree_insert,
)


@dataclass(frozen=True)
class PipelineProfile:
    """Per-stage block/page capacities.  The default is a synthetic layout
    (16 stages x 24 TCAM blocks, 16 x 80 SRAM pages); vendor stage layouts
    are not published, so reports label it as such."""

    stage_count: int = 16
    tcam_blocks_per_stage: int = 24
    sram_pages_per_stage: int = 80

    def __post_init__(self):
        if self.stage_count < 1:
            raise ValueError("stage_count must be >= 1")

    @property
    def total_tcam_blocks(self) -> int:
        return self.stage_count * self.tcam_blocks_per_stage

    @property
    def total_sram_pages(self) -> int:
        return self.stage_count * self.sram_pages_per_stage

    @property
    def is_synthetic_default(self) -> bool:
        return self == PipelineProfile()


SYNTHETIC_PROFILE_NOTE = (
    "pipeline profile is a synthetic default (16x24 TCAM blocks, 16x80 SRAM pages);"
    " per-stage capacities of real chips are not published"
)


@dataclass(frozen=True)
class Span:
    stage: int       # 1-based
    start: int       # first block/page index within the stage
    count: int

    @property
    def end(self) -> int:
        return self.start + self.count


class PipelinePlan:
    """Placements for every super-table and per-level SRAM pool, plus free space."""

    def __init__(self, profile: PipelineProfile):
        self.profile = profile
        self.placements: list[list[Span]] = []
        self.sram_spans: dict[int, list[Span]] = {}
        self.extra_spans: dict[int, list[Span]] = {}   # growth during updates, by id(st)
        self._tcam_next = [0] * (profile.stage_count + 1)   # index 0 unused
        self._sram_next = [0] * (profile.stage_count + 1)
        self.level_min_stage: dict[int, int] = {}
        self.level_max_stage: dict[int, int] = {}
        self.edges: list[tuple[int, int]] = []

    # -- capacity ------------------------------------------------------------

    def _free(self, stage: int, sram: bool) -> int:
        per = self.profile.sram_pages_per_stage if sram else self.profile.tcam_blocks_per_stage
        used = self._sram_next[stage] if sram else self._tcam_next[stage]
        return per - used

    def _take(self, stage: int, count: int, sram: bool) -> Span:
        nxt = self._sram_next if sram else self._tcam_next
        span = Span(stage, nxt[stage], count)
        nxt[stage] += count
        return span

    def _give_back(self, span: Span, sram: bool):
        nxt = self._sram_next if sram else self._tcam_next
        if nxt[span.stage] != span.end:
            raise AssertionError("can only release the most recent span in a stage")
        nxt[span.stage] -= span.count

    def place(self, amount: int, first_stage: int, last_stage: int, sram: bool):
        """Contiguous-per-stage spans over consecutive stages, first fit.

        Returns the span list or None when no start stage within the window
        can hold the amount with consecutive spill.
        """
        if amount == 0:
            return []
        for start in range(first_stage, last_stage + 1):
            if self._free(start, sram) <= 0:
                continue
            spans = []
            remaining = amount
            stage = start
            while remaining > 0:
                if stage > last_stage:
                    spans = None
                    break
                take = min(self._free(stage, sram), remaining)
                if take <= 0:
                    spans = None
                    break
                spans.append((stage, take))
                remaining -= take
                stage += 1
            if spans is not None:
                return [self._take(stage, take, sram) for stage, take in spans]
        return None

    def note_level_use(self, level: int, spans: Iterable[Span]):
        for span in spans:
            lo = self.level_min_stage.get(level, span.stage)
            hi = self.level_max_stage.get(level, span.stage)
            self.level_min_stage[level] = min(lo, span.stage)
            self.level_max_stage[level] = max(hi, span.stage)

    def window(self, level: int) -> tuple[int, int]:
        """Stages a level-`level` placement may legally occupy right now."""
        first = self.level_max_stage.get(level - 1, 0) + 1
        deeper = [s for l, s in self.level_min_stage.items() if l > level]
        last = min(deeper) - 1 if deeper else self.profile.stage_count
        return first, last

    def stages_used(self) -> int:
        highs = list(self.level_max_stage.values())
        return max(highs) if highs else 0

    def validate_dependencies(self, supertables: list[SuperTable]):
        """Assert every parent placement ends before any child placement starts."""
        for parent, child in self.edges:
            pmax = max(s.stage for s in self.placements[parent])
            cmin = min(s.stage for s in self.placements[child])
            if pmax >= cmin:
                raise AssertionError(
                    f"dependency violated: super-table {parent} (stage {pmax})"
                    f" not before {child} (stage {cmin})"
                )
        for level, spans in self.sram_spans.items():
            if not spans:
                continue
            prev = self.level_max_stage.get(level - 1)
            if prev is not None and min(s.stage for s in spans) <= prev and level > 0:
                raise AssertionError(f"SRAM pool of level {level} overlaps level {level - 1}")


def map_to_pipeline(
    supertables: list[SuperTable],
    sram_pools: dict[int, int],
    profile: PipelineProfile,
) -> PipelinePlan:
    """Greedy level-by-level placement with first-fit inside each level."""
    plan = PipelinePlan(profile)
    plan.placements = [[] for _ in supertables]
    by_level: dict[int, list[int]] = {}
    for i, st in enumerate(supertables):
        by_level.setdefault(st.level_index, []).append(i)
    levels = sorted(set(by_level) | set(l for l, pages in sram_pools.items() if pages))
    floor = 1
    for level in levels:
        needs_blocks = sum(supertables[i].allocated_blocks for i in by_level.get(level, []))
        needs_pages = sram_pools.get(level, 0)
        if needs_blocks == 0 and needs_pages == 0:
            continue
        if floor > profile.stage_count:
            raise StageDepthExceeded(
                f"level {level} needs a stage after {floor - 1},"
                f" but the profile has only {profile.stage_count}"
            )
        for i in by_level.get(level, []):
            st = supertables[i]
            spans = plan.place(st.allocated_blocks, floor, profile.stage_count, sram=False)
            if spans is None:
                free = sum(plan._free(s, False) for s in range(floor, profile.stage_count + 1))
                raise CapacityExceeded(
                    f"cannot place {st.allocated_blocks} blocks for a level-{level}"
                    f" super-table; {free} blocks free in stages {floor}..{profile.stage_count}",
                    blocks_short=max(0, st.allocated_blocks - free),
                )
            plan.placements[i] = spans
            plan.note_level_use(level, spans)
        if needs_pages:
            spans = plan.place(needs_pages, floor, profile.stage_count, sram=True)
            if spans is None:
                free = sum(plan._free(s, True) for s in range(floor, profile.stage_count + 1))
                raise CapacityExceeded(
                    f"cannot place {needs_pages} SRAM pages for level {level};"
                    f" {free} pages free in stages {floor}..{profile.stage_count}",
                    pages_short=max(0, needs_pages - free),
                )
            plan.sram_spans[level] = spans
            plan.note_level_use(level, spans)
        floor = plan.level_max_stage[level] + 1
    # Parent/child edges between placed super-tables, for the dependency invariant.
    st_of: dict[int, int] = {}
    for i, st in enumerate(supertables):
        for _, t in st.members:
            st_of[id(t)] = i
    for i, st in enumerate(supertables):
        for _, t in st.members:
            for e in t.raw_entries():
                if e.child is not None and id(e.child) in st_of:
                    plan.edges.append((i, st_of[id(e.child)]))
    plan.validate_dependencies(supertables)
    return plan


# -- runtime ------------------------------------------------------------------


class OverflowBuffer:
    """Side table for entries the planned structure cannot hold."""

    def __init__(self, capacity: int = 512):
        self.capacity = capacity
        self.entries: list[Prefix] = []

    def __len__(self):
        return len(self.entries)

    def contains(self, bits: str) -> bool:
        return any(p.bits == bits for p in self.entries)

    def add(self, prefix: Prefix):
        if len(self.entries) >= self.capacity:
            raise OverflowFull(
                f"overflow buffer at capacity {self.capacity}; reconfigure to proceed"
            )
        self.entries.append(prefix)

    def remove(self, bits: str) -> bool:
        for i, p in enumerate(self.entries):
            if p.bits == bits:
                del self.entries[i]
                return True
        return False

    def lpm(self, address: str) -> tuple[Optional[str], int]:
        best, best_len = None, -1
        for p in self.entries:
            if p.length > best_len and address.startswith(p.bits):
                best, best_len = p.next_hop, p.length
        return best, best_len


def tree_lookup(tree: TcamTree, address: str) -> tuple[Optional[str], int]:
    """Walk the table tree; returns (value, matched prefix length) or (None, -1)."""
    table: Optional[TreeTable] = tree.root
    value, vlen = None, -1
    pos = 0
    while table is not None:
        segment = address[pos : pos + table.stride_width]
        hit, v, local_len, child = table.lookup(segment)
        if not hit:
            break
        if v is not None:
            value, vlen = v, table.start_bit + local_len
        pos += table.stride_width
        table = child
    return value, vlen


class PipelineState:
    """A deployable lookup structure: tree, optional packing/placement, overflow."""

    def __init__(
        self,
        tree: TcamTree,
        overflow: OverflowBuffer,
        *,
        grain: Optional[GrainSpec] = None,
        tag_bits: Optional[int] = None,
        supertables: Optional[list[SuperTable]] = None,
        plan: Optional[PipelinePlan] = None,
    ):
        self.tree = tree
        self.overflow = overflow
        self.grain = grain
        self.tag_bits = tag_bits
        self.supertables = supertables
        self.plan = plan
        self.sram_rows = 0
        self._st_of: dict[int, SuperTable] = {}
        if supertables is not None:
            for st in supertables:
                for _, t in st.members:
                    self._st_of[id(t)] = st

    # -- construction --------------------------------------------------------

    @classmethod
    def from_database(
        cls, db: PrefixDatabase, strides: StrideList, overflow_capacity: int = 512
    ) -> "PipelineState":
        """Unpacked tree plus overflow; updates are not capacity-constrained."""
        coverage = strides.coverage
        tree = build_tree(db.restricted(coverage), strides)
        overflow = OverflowBuffer(overflow_capacity)
        for p in db.entries:
            if p.length > coverage:
                overflow.add(p)
        return cls(tree, overflow)

    @classmethod
    def planned(
        cls,
        db: PrefixDatabase,
        strides: StrideList,
        *,
        grain: GrainSpec = GrainSpec(),
        tag_bits: Optional[int] = None,
        profile: Optional[PipelineProfile] = None,
        hybrid: Optional[HybridizationConfig] = None,
        overflow_capacity: int = 512,
    ) -> "PipelineState":
        """Full build: tree, optional hybridization, packing, optional placement."""
        coverage = strides.coverage
        tag = grain.default_tag_bits if tag_bits is None else tag_bits
        tree = build_tree(db.restricted(coverage), strides)
        sram_rows = 0
        if hybrid is not None and hybrid.enabled:
            tree, sram_rows = hybridize(tree, hybrid)
        supertables = tag_and_pack(tree, grain, tag)
        plan = None
        if profile is not None:
            page_depth = (hybrid.sram_spec.page_depth if hybrid else SramPageSpec().page_depth)
            pools: dict[int, int] = {}
            for level_index, tables in enumerate(tree.levels):
                rows = sum(sram_rows_for_table(t) for t in tables if t.kind == SRAM)
                if rows:
                    pools[level_index] = ceil_div(rows, page_depth)
            plan = map_to_pipeline(supertables, pools, profile)
        state = cls(
            tree,
            OverflowBuffer(overflow_capacity),
            grain=grain,
            tag_bits=tag,
            supertables=supertables,
            plan=plan,
        )
        for p in db.entries:
            if p.length > coverage:
                state.overflow.add(p)
        state.sram_rows = sram_rows
        return state

    # -- lookup ----------------------------------------------------------------

    @property
    def coverage(self) -> int:
        return self.tree.coverage

    @property
    def address_width(self) -> int:
        return self.tree.address_width

    def lookup_with_length(self, address: str) -> tuple[Optional[str], int]:
        tree_value, tree_len = tree_lookup(self.tree, address)
        over_value, over_len = self.overflow.lpm(address)
        if over_value is not None and over_len >= tree_len:
            return over_value, over_len
        return tree_value, tree_len

    def search(self, address: str) -> str:
        if len(address) != self.address_width or address.strip("01"):
            raise ValueError(f"address must be exactly {self.address_width} bits of 0/1")
        value, _ = self.lookup_with_length(address)
        return value if value is not None else DEFAULT_NEXT_HOP

    def contains(self, bits: str) -> bool:
        return self._find_terminal(bits) is not None or self.overflow.contains(bits)

    def _find_terminal(self, bits: str):
        table = self.tree.root
        consumed = 0
        while True:
            s = table.stride_width
            rem = bits[consumed:]
            if len(rem) <= s:
                e = table.get(rem + "*" * (s - len(rem)))
                if e is not None and e.is_terminal and e.bmp_local_len == len(rem):
                    return table, e
                return None
            e = table.get(rem[:s])
            if e is None or e.child is None:
                return None
            table = e.child
            consumed += s

    # -- updates -----------------------------------------------------------------

    def insert(self, prefix: Prefix):
        """Add one prefix, spilling to the overflow buffer when capacity is short."""
        if self.contains(prefix.bits):
            raise DuplicatePrefix(f"prefix {prefix} already present")
        if prefix.length > self.coverage:
            self.overflow.add(prefix)
            return
        if self.plan is None and self.supertables is None:
            tree_insert(self.tree, prefix.bits, prefix.next_hop)
            return
        increments = self._plan_increments(prefix.bits)
        undo: list = []
        joins: dict[int, SuperTable] = {}
        if not self._reserve(increments, undo, joins):
            for action in reversed(undo):
                action()
            self.overflow.add(prefix)
            return
        level_sizes = [len(tables) for tables in self.tree.levels]
        tree_insert(self.tree, prefix.bits, prefix.next_hop)
        self._commit_new_tables(level_sizes, joins)

    def delete(self, prefix: Prefix):
        """Remove one prefix from the tree or the overflow buffer."""
        if self.overflow.remove(prefix.bits):
            return
        found = self._find_terminal(prefix.bits)
        if found is None:
            raise NotFound(f"prefix {prefix} not present")
        before = {id(t) for t in self.tree.all_tables()}
        tree_delete(self.tree, prefix.bits)
        if self.supertables is None:
            return
        gone = before - {id(t) for t in self.tree.all_tables()}
        for tid in gone:
            st = self._st_of.pop(tid, None)
            if st is not None:
                st.members = [(tag, t) for tag, t in st.members if id(t) != tid]
                if not st.members:
                    # blocks stay allocated until a replan; membership just empties
                    self.supertables.remove(st)

    # -- capacity bookkeeping ------------------------------------------------------

    def _terminal_level(self, bits: str) -> int:
        for level, boundary in enumerate(self.tree.stride_list.boundaries):
            if len(bits) <= boundary:
                return level
        raise AssertionError("prefix beyond coverage reached _terminal_level")

    def _plan_increments(self, bits: str):
        """(kind, payload) actions an insert will need, without mutating the tree."""
        table = self.tree.root
        consumed = 0
        level = 0
        final_level = self._terminal_level(bits)
        while True:
            s = table.stride_width
            rem = bits[consumed:]
            if len(rem) <= s:
                if table.get(rem + "*" * (s - len(rem))) is None:
                    return [("entry", table)]
                return []   # merges into an existing stub row
            e = table.get(rem[:s])
            if e is None:
                new_tables = [("table", lvl) for lvl in range(level + 1, final_level + 1)]
                return [("entry", table)] + new_tables
            if e.child is None:
                return [("table", lvl) for lvl in range(level + 1, final_level + 1)]
            table = e.child
            consumed += s
            level += 1

    def _reserve(self, increments, undo, joins) -> bool:
        if self.plan is None:
            # Packed but unplaced states grow without stage constraints.
            return True
        for i, (kind, payload) in enumerate(increments):
            if kind == "entry":
                st = self._st_of.get(id(payload))
                if payload.kind == SRAM or st is None:
                    continue
                if not self._fit_entries(st, 1, undo):
                    return False
            else:
                host = self._host_for_level(payload)
                if host is not None and self._fit_entries(host, 1, undo):
                    joins[i] = host
                    continue
                if not self._reserve_new_supertable(payload, undo, joins, i):
                    return False
        return True

    def _fit_entries(self, st: SuperTable, extra: int, undo) -> bool:
        pending = getattr(st, "_pending", 0)
        while st.total_entries + pending + extra > st.entry_capacity:
            spans = self.plan.place(
                st.horizontal_blocks, *self.plan.window(st.level_index), sram=False
            )
            if spans is None:
                return False
            st.allocated_rows += 1
            self.plan.extra_spans.setdefault(id(st), []).extend(spans)
            self.plan.note_level_use(st.level_index, spans)

            def revert(st=st, spans=spans):
                st.allocated_rows -= 1
                for span in reversed(spans):
                    self.plan._give_back(span, sram=False)
                    self.plan.extra_spans[id(st)].remove(span)

            undo.append(revert)
        st._pending = pending + extra

        def clear(st=st, extra=extra):
            st._pending = getattr(st, "_pending", 0) - extra

        undo.append(clear)
        return True

    def _host_for_level(self, level: int) -> Optional[SuperTable]:
        candidates = [
            st
            for st in self.supertables
            if st.level_index == level and len(st.members) < (1 << st.tag_bits)
        ]
        return candidates[-1] if candidates else None

    def _reserve_new_supertable(self, level: int, undo, joins, key) -> bool:
        width = self.tag_bits + self.tree.stride_list[level]
        blocks = ceil_div(width, self.grain.width)
        spans = self.plan.place(blocks, *self.plan.window(level), sram=False)
        if spans is None:
            return False
        self.plan.note_level_use(level, spans)
        joins[key] = ("new", level, spans)

        def revert(spans=spans):
            for span in reversed(spans):
                self.plan._give_back(span, sram=False)

        undo.append(revert)
        return True

    def _commit_new_tables(self, level_sizes, joins):
        for st in self.supertables:
            if hasattr(st, "_pending"):
                st._pending = 0
        new_by_level: dict[int, list[TreeTable]] = {}
        for level, tables in enumerate(self.tree.levels):
            if len(tables) > level_sizes[level]:
                new_by_level[level] = tables[level_sizes[level] :]
        for _, target in sorted(joins.items()):
            if isinstance(target, SuperTable):
                level = target.level_index
                table = new_by_level[level].pop(0)
                next_tag = max((tag for tag, _ in target.members), default=-1) + 1
                target.members.append((next_tag, table))
                self._st_of[id(table)] = target
            else:
                _, level, spans = target
                table = new_by_level[level].pop(0)
                st = SuperTable(level, self.tag_bits, [(0, table)], self.grain)
                self.supertables.append(st)
                self._st_of[id(table)] = st
                if self.plan is not None:
                    self.plan.extra_spans[id(st)] = list(spans)
        # States that are packed but unplaced get no reservations: absorb here.
        for level, leftovers in new_by_level.items():
            for table in leftovers:
                host = self._host_for_level(level)
                if host is not None:
                    next_tag = max((tag for tag, _ in host.members), default=-1) + 1
                    host.members.append((next_tag, table))
                    self._st_of[id(table)] = host
                else:
                    st = SuperTable(level, self.tag_bits or 0, [(0, table)], self.grain)
                    self.supertables.append(st)
                    self._st_of[id(table)] = st


def search(target: Union[TcamTree, PipelineState], address: str) -> str:
    """Longest-prefix-match through a built tree or a full pipeline state."""
    if isinstance(target, PipelineState):
        return target.search(address)
    if len(address) != target.address_width or address.strip("01"):
        raise ValueError(f"address must be exactly {target.address_width} bits of 0/1")
    value, _ = tree_lookup(target, address)
    return value if value is not None else DEFAULT_NEXT_HOP


def insert_prefix(state: PipelineState, prefix: Prefix) -> PipelineState:
    state.insert(prefix)
    return state


def delete_prefix(state: PipelineState, prefix: Prefix) -> PipelineState:
    state.delete(prefix)
    return state
