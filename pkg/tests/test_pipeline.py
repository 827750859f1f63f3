import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tcamtree import (
    GrainSpec,
    Prefix,
    PrefixDatabase,
    StrideList,
    delete_prefix,
    insert_prefix,
    map_to_pipeline,
    oracle_lookup,
    search,
)
from tcamtree.errors import (
    CapacityExceeded,
    DuplicatePrefix,
    NotFound,
    OverflowFull,
    StageDepthExceeded,
)
from tcamtree.pipeline import OverflowBuffer, PipelineProfile, PipelineState
from tcamtree.tiler import TableEntry, TcamTree

from tests.helpers import (
    all_addresses,
    full_space_mismatches,
    random_database,
    random_strides,
    table1_db,
)


def synthetic_supertables(level_blocks):
    """Fabricated one-table super-tables with fixed block demands per level."""
    from tcamtree.packing import SuperTable

    grain = GrainSpec(8, 4)
    strides = StrideList(tuple(8 for _ in level_blocks))
    tree = TcamTree(strides, address_width=8 * len(level_blocks))
    supers = []
    prev_tables = []
    for level, block_counts in enumerate(level_blocks):
        tables_here = []
        for blocks in block_counts:
            table = tree.new_table(level) if level else tree.root
            for i in range(blocks * grain.depth):
                key = format(i % 256, "08b")
                if table.get(key) is None:
                    table._entries[key] = TableEntry(key, f"v{i}", 8, True, None, table.next_seq())
            table.invalidate()
            tables_here.append(table)
            supers.append(SuperTable(level, 0, [(0, table)], grain))
        if prev_tables:
            # chain a dependency: first table of the previous level points here
            parent = prev_tables[0]
            for t in tables_here:
                key = format(len(parent._entries) % 256, "08b")
                parent._entries[key] = TableEntry(key, None, None, False, t, parent.next_seq())
            parent.invalidate()
        prev_tables = tables_here
    return supers


class TestMapToPipeline:
    def test_table1_two_stage_placement(self):
        db = table1_db()
        profile = PipelineProfile(stage_count=2, tcam_blocks_per_stage=4, sram_pages_per_stage=4)
        state = PipelineState.planned(db, StrideList.parse("3-3"), profile=profile)
        spans0 = state.plan.placements[0]
        spans1 = state.plan.placements[1]
        assert [s.stage for s in spans0] == [1]
        assert [s.stage for s in spans1] == [2]

    def test_one_stage_profile_cannot_host_two_levels(self):
        db = table1_db()
        profile = PipelineProfile(stage_count=1, tcam_blocks_per_stage=8, sram_pages_per_stage=8)
        with pytest.raises(StageDepthExceeded):
            PipelineState.planned(db, StrideList.parse("3-3"), profile=profile)

    def test_spill_pushes_next_level_later(self):
        supers = synthetic_supertables([[1], [30], [1]])
        profile = PipelineProfile(stage_count=8, tcam_blocks_per_stage=24, sram_pages_per_stage=8)
        plan = map_to_pipeline(supers, {}, profile)
        level2 = [s for sup, s in zip(supers, plan.placements) if sup.level_index == 1]
        stages = sorted(span.stage for spans in level2 for span in spans)
        assert stages == [2, 3]
        level3 = [s for sup, s in zip(supers, plan.placements) if sup.level_index == 2]
        assert min(span.stage for spans in level3 for span in spans) == 4

    def test_capacity_exhaustion_reports_shortfall(self):
        supers = synthetic_supertables([[1], [60]])  # 60 blocks of demand at level 2
        profile = PipelineProfile(stage_count=4, tcam_blocks_per_stage=8, sram_pages_per_stage=8)
        with pytest.raises(CapacityExceeded) as err:
            map_to_pipeline(supers, {}, profile)
        assert err.value.blocks_short > 0

    def test_dependency_invariant_holds_on_random_plans(self):
        rng = random.Random(7)
        for _ in range(20):
            width = rng.randint(4, 10)
            db = random_database(rng, width, max_entries=60)
            strides = random_strides(rng, width)
            profile = PipelineProfile(stage_count=12, tcam_blocks_per_stage=40, sram_pages_per_stage=40)
            state = PipelineState.planned(
                db, strides, grain=GrainSpec(8, 8), profile=profile
            )
            state.plan.validate_dependencies(state.supertables)
            for parent, child in state.plan.edges:
                pmax = max(s.stage for s in state.plan.placements[parent])
                cmin = min(s.stage for s in state.plan.placements[child])
                assert pmax < cmin

    def test_deterministic_given_profile_and_order(self):
        db = table1_db()
        profile = PipelineProfile(stage_count=4, tcam_blocks_per_stage=4, sram_pages_per_stage=4)
        a = PipelineState.planned(db, StrideList.parse("3-3"), profile=profile)
        b = PipelineState.planned(db, StrideList.parse("3-3"), profile=profile)
        assert a.plan.placements == b.plan.placements


class TestSearch:
    def test_table1_walk_examples(self):
        state = PipelineState.from_database(table1_db(), StrideList.parse("3-3"))
        assert state.search("100110") == "E"
        assert state.search("101111") == "A"
        assert state.search("000000") == "default"

    def test_search_rejects_bad_width(self):
        state = PipelineState.from_database(table1_db(), StrideList.parse("3-3"))
        with pytest.raises(ValueError):
            state.search("1001")

    def test_overflow_entry_wins_by_length(self):
        db = PrefixDatabase(8, [Prefix("10", 2, "short"), Prefix("101010", 6, "long")])
        state = PipelineState.from_database(db, StrideList.parse("2-2"))
        assert len(state.overflow) == 1
        assert state.search("10101010") == "long"
        assert state.search("10111111") == "short"


class TestInsert:
    def test_insert_gains_priority_over_shorter(self):
        db = table1_db()
        state = PipelineState.from_database(db, StrideList.parse("3-3"))
        insert_prefix(state, Prefix("101", 3, "G"))
        keys = [e.key_bits for e in state.tree.root.entries()]
        assert keys.index("101") < keys.index("1**")
        entries = [(p.bits, p.length, p.next_hop) for p in db.entries] + [("101", 3, "G")]
        count, samples = full_space_mismatches(entries, state)
        assert count == 0, samples

    def test_duplicate_insert_rejected(self):
        state = PipelineState.from_database(table1_db(), StrideList.parse("3-3"))
        with pytest.raises(DuplicatePrefix):
            state.insert(Prefix("1000", 4, "Z"))

    def test_long_prefix_goes_to_overflow(self):
        state = PipelineState.from_database(table1_db(), StrideList.parse("3-2"))
        state.insert(Prefix("110011", 6, "Z"))
        assert state.overflow.contains("110011")
        assert state.search("110011") == "Z"

    def test_full_supertable_grows_by_one_block(self):
        grain = GrainSpec(8, 4)
        db = PrefixDatabase(
            8, [Prefix(format(i, "06b"), 6, f"h{i}") for i in range(4)]
        )
        profile = PipelineProfile(stage_count=4, tcam_blocks_per_stage=4, sram_pages_per_stage=4)
        state = PipelineState.planned(
            db, StrideList.parse("6-2"), grain=grain, profile=profile
        )
        (root_super,) = [s for s in state.supertables if s.level_index == 0]
        assert root_super.total_entries == root_super.entry_capacity == 4
        before_blocks = root_super.allocated_blocks
        state.insert(Prefix("111111", 6, "new"))
        assert root_super.allocated_blocks == before_blocks + 1
        assert len(state.overflow) == 0
        entries = [(p.bits, p.length, p.next_hop) for p in db.entries] + [("111111", 6, "new")]
        count, samples = full_space_mismatches(entries, state)
        assert count == 0, samples

    def test_no_stage_room_spills_to_overflow(self):
        grain = GrainSpec(8, 4)
        db = PrefixDatabase(
            8, [Prefix(format(i, "06b"), 6, f"h{i}") for i in range(4)]
        )
        profile = PipelineProfile(stage_count=1, tcam_blocks_per_stage=1, sram_pages_per_stage=1)
        state = PipelineState.planned(
            db, StrideList.parse("6"), grain=grain, profile=profile
        )
        state.insert(Prefix("111111", 6, "new"))
        assert state.overflow.contains("111111")
        assert state.search("11111111") == "new"

    def test_overflow_full_raises(self):
        db = PrefixDatabase(6, [Prefix("1", 1, "A")])
        state = PipelineState.from_database(db, StrideList.parse("3"), overflow_capacity=1)
        state.insert(Prefix("1010", 4, "X"))
        with pytest.raises(OverflowFull):
            state.insert(Prefix("1011", 4, "Y"))

    def test_exact_match_table_widens_for_longer_insert(self):
        from tcamtree import HybridizationConfig

        # converted with 2-bit keys; a later 4-bit insert must widen the
        # exact-match width, not vanish behind the as-converted key length
        db = PrefixDatabase(4, [Prefix("00", 2, "a")])
        state = PipelineState.planned(
            db, StrideList.parse("4"), hybrid=HybridizationConfig(factor=3)
        )
        assert state.tree.root.kind == "sram"
        assert state.tree.root.sram_key_len == 2
        state.insert(Prefix("0110", 4, "b"))
        assert state.search("0110") == "b"
        assert state.search("0011") == "a"
        assert state.search("1111") == "default"
        entries = [("00", 2, "a"), ("0110", 4, "b")]
        count, samples = full_space_mismatches(entries, state)
        assert count == 0, samples


class TestDelete:
    def test_delete_reverts_to_next_best(self):
        db = table1_db()
        state = PipelineState.from_database(db, StrideList.parse("3-3"))
        delete_prefix(state, Prefix("100110", 6, "E"))
        # remaining matches for 100110: only the /1 entry
        assert state.search("100110") == "A"
        entries = [(p.bits, p.length, p.next_hop) for p in db.entries if p.next_hop != "E"]
        count, samples = full_space_mismatches(entries, state)
        assert count == 0, samples

    def test_delete_shortest_unsets_inherited_values(self):
        state = PipelineState.from_database(table1_db(), StrideList.parse("3-3"))
        delete_prefix(state, Prefix("1", 1, "A"))
        assert state.search("111111") == "default"
        stub = state.tree.root.get("100")
        assert stub is not None and stub.bmp_value is None

    def test_delete_absent_prefix(self):
        state = PipelineState.from_database(table1_db(), StrideList.parse("3-3"))
        with pytest.raises(NotFound):
            delete_prefix(state, Prefix("111", 3, "Q"))

    def test_merged_entry_survives_terminal_removal(self):
        db = PrefixDatabase(4, [Prefix("01", 2, "X"), Prefix("0111", 4, "Y")])
        state = PipelineState.from_database(db, StrideList.parse("2-2"))
        merged = state.tree.root.get("01")
        assert merged.is_terminal and merged.child is not None
        state.delete(Prefix("01", 2, "X"))
        merged = state.tree.root.get("01")
        assert merged is not None and not merged.is_terminal
        assert state.search("0111") == "Y"
        assert state.search("0100") == "default"

    def test_emptied_child_tables_are_collected(self):
        db = PrefixDatabase(4, [Prefix("0111", 4, "Y")])
        state = PipelineState.from_database(db, StrideList.parse("2-2"))
        assert len(state.tree.levels[1]) == 1
        state.delete(Prefix("0111", 4, "Y"))
        assert len(state.tree.levels[1]) == 0
        assert state.tree.root.entry_count == 0

    def test_delete_from_overflow(self):
        state = PipelineState.from_database(table1_db(), StrideList.parse("3-2"))
        state.insert(Prefix("110011", 6, "Z"))
        state.delete(Prefix("110011", 6, "Z"))
        assert not state.overflow.contains("110011")


class TestOverflowBuffer:
    def test_lpm_picks_longest(self):
        buf = OverflowBuffer(4)
        buf.add(Prefix("10", 2, "a"))
        buf.add(Prefix("1010", 4, "b"))
        assert buf.lpm("10101111") == ("b", 4)
        assert buf.lpm("10111111") == ("a", 2)
        assert buf.lpm("00000000") == (None, -1)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_interleaved_updates_stay_oracle_equal(seed):
    rng = random.Random(seed)
    width = rng.randint(4, 7)
    db = random_database(rng, width, max_entries=12)
    coverage = rng.choice([width, max(1, width - 2)])
    strides = random_strides(rng, coverage)
    state = PipelineState.from_database(db, strides)
    shadow = {p.bits: p for p in db.entries}
    for _ in range(30):
        length = rng.randint(0, width)
        bits = format(rng.getrandbits(length), f"0{length}b") if length else ""
        if bits in shadow:
            state.delete(shadow.pop(bits))
        else:
            p = Prefix(bits, length, f"h{rng.randint(0, 9)}")
            state.insert(p)
            shadow[bits] = p
        current = PrefixDatabase(width, list(shadow.values()))
        for address in all_addresses(width):
            assert state.search(address) == oracle_lookup(current, address)
