"""Shared test machinery: fixtures, random generators, independent oracles,
and a vectorized full-address-space evaluator for exhaustive equivalence runs.

The evaluator reproduces the level-by-level walk with numpy gathers so that
checking every address of a 16-bit space takes milliseconds.  It is itself
validated against the scalar search path in test_vectoreval.py; the oracle
side (`oracle_vector`) is a third, independent longest-match implementation
based on range assignment in ascending length order.
"""

from __future__ import annotations

import random
from pathlib import Path

import numpy as np

from tcamtree import Prefix, PrefixDatabase, StrideList, parse_database
from tcamtree.pipeline import PipelineState
from tcamtree.prefixdb import DEFAULT_NEXT_HOP

DATA_DIR = Path(__file__).parent / "data"

TABLE1_TEXT = (DATA_DIR / "table1.txt").read_text()


def table1_db() -> PrefixDatabase:
    return parse_database(TABLE1_TEXT, 6)


def all_addresses(width: int):
    for value in range(1 << width):
        yield format(value, f"0{width}b")


def linear_scan_lookup(db: PrefixDatabase, address: str) -> str:
    """Deliberately naive reference: scan every entry, keep the longest match."""
    best, best_len = DEFAULT_NEXT_HOP, -1
    for p in db.entries:
        if p.length > best_len and address.startswith(p.bits):
            best, best_len = p.next_hop, p.length
    return best


# -- random inputs -------------------------------------------------------------


def random_database(
    rng: random.Random, width: int, max_entries: int = 2000, max_length: int = None
) -> PrefixDatabase:
    if max_length is None:
        max_length = width
    target = rng.randint(1, max_entries)
    seen = set()
    entries = []
    for _ in range(target * 2):
        if len(entries) >= target:
            break
        length = rng.randint(0, max_length)
        bits = format(rng.getrandbits(length), f"0{length}b") if length else ""
        if bits in seen:
            continue
        seen.add(bits)
        entries.append(Prefix(bits, length, f"h{rng.randint(0, 30)}"))
    return PrefixDatabase(width, entries)


def random_strides(rng: random.Random, coverage: int) -> StrideList:
    cuts = sorted(rng.sample(range(1, coverage), rng.randint(0, min(3, coverage - 1))))
    strides = []
    prev = 0
    for c in cuts:
        strides.append(c - prev)
        prev = c
    strides.append(coverage - prev)
    return StrideList(tuple(strides))


# -- vectorized full-space evaluation ------------------------------------------


class HopIds:
    """Stable label -> small-int mapping shared by both sides of a comparison."""

    def __init__(self):
        self._ids = {DEFAULT_NEXT_HOP: 0}

    def get(self, label) -> int:
        if label not in self._ids:
            self._ids[label] = len(self._ids)
        return self._ids[label]

    def label(self, idx: int) -> str:
        for label, i in self._ids.items():
            if i == idx:
                return label
        raise KeyError(idx)


def oracle_vector(entries, width: int, hops: HopIds) -> np.ndarray:
    """Full-space next-hop ids by ascending-length range assignment."""
    size = 1 << width
    val = np.zeros(size, dtype=np.int32)
    for bits, length, hop in sorted(entries, key=lambda e: e[1]):
        lo = (int(bits, 2) << (width - length)) if bits else 0
        val[lo : lo + (1 << (width - length))] = hops.get(hop)
    return val


def db_oracle_vector(db: PrefixDatabase, hops: HopIds) -> np.ndarray:
    return oracle_vector(
        [(p.bits, p.length, p.next_hop) for p in db.entries], db.address_width, hops
    )


def state_vector(state: PipelineState, hops: HopIds) -> np.ndarray:
    """Full-space next-hop ids produced by the planned structure.

    Walks the tree level by level over the whole covered space at once, then
    overlays the overflow buffer with explicit length comparison (overflow
    wins length ties, mirroring the scalar path).
    """
    width = state.address_width
    coverage = state.coverage
    tree = state.tree
    cov_size = 1 << coverage

    gid = {id(t): i for i, t in enumerate(tree.all_tables())}
    n_tables = len(gid)
    cur = np.full(cov_size, -1, dtype=np.int64)
    cur[:] = gid[id(tree.root)]
    val = np.zeros(cov_size, dtype=np.int32)
    vlen = np.full(cov_size, -1, dtype=np.int32)

    boundaries = tree.stride_list.boundaries
    for level, tables in enumerate(tree.levels):
        if not tables:
            break
        s = tree.stride_list[level]
        start_bit = boundaries[level] - s
        seg_count = 1 << s
        V = np.zeros((len(tables), seg_count), dtype=np.int32)
        L = np.full((len(tables), seg_count), -1, dtype=np.int32)
        C = np.full((len(tables), seg_count), -1, dtype=np.int64)
        H = np.zeros((len(tables), seg_count), dtype=np.int8)
        row_of = np.full(n_tables, -1, dtype=np.int64)
        for row, t in enumerate(tables):
            row_of[gid[id(t)]] = row
            for e in reversed(t.entries()):
                p = e.specified_len
                lo = (int(e.key_bits[:p], 2) << (s - p)) if p else 0
                hi = lo + (1 << (s - p))
                H[row, lo:hi] = 1
                if e.bmp_value is not None:
                    V[row, lo:hi] = hops.get(e.bmp_value)
                    L[row, lo:hi] = e.bmp_local_len
                else:
                    V[row, lo:hi] = 0
                    L[row, lo:hi] = -1
                C[row, lo:hi] = gid[id(e.child)] if e.child is not None else -1
        idx = np.nonzero(cur >= 0)[0]
        if idx.size == 0:
            break
        seg = (idx >> (coverage - boundaries[level])) & (seg_count - 1)
        rows = row_of[cur[idx]]
        h = H[rows, seg]
        v = V[rows, seg]
        got_value = (h == 1) & (v != 0)
        val[idx[got_value]] = v[got_value]
        vlen[idx[got_value]] = start_bit + L[rows, seg][got_value]
        cur[idx] = np.where(h == 1, C[rows, seg], -1)

    if width > coverage:
        rep = 1 << (width - coverage)
        val = np.repeat(val, rep)
        vlen = np.repeat(vlen, rep)

    if state.overflow.entries:
        size = 1 << width
        oval = np.zeros(size, dtype=np.int32)
        olen = np.full(size, -1, dtype=np.int32)
        for p in sorted(state.overflow.entries, key=lambda p: p.length):
            lo = (int(p.bits, 2) << (width - p.length)) if p.bits else 0
            hi = lo + (1 << (width - p.length))
            oval[lo:hi] = hops.get(p.next_hop)
            olen[lo:hi] = p.length
        take = (olen >= 0) & (olen >= vlen)
        val = np.where(take, oval, val)
    return val


def full_space_mismatches(db_entries, state: PipelineState, limit: int = 5):
    """(count, samples) of addresses where the state disagrees with the oracle."""
    hops = HopIds()
    width = state.address_width
    want = oracle_vector(db_entries, width, hops)
    got = state_vector(state, hops)
    bad = np.nonzero(want != got)[0]
    samples = [
        (format(int(a), f"0{width}b"), hops.label(int(got[a])), hops.label(int(want[a])))
        for a in bad[:limit]
    ]
    return int(bad.size), samples


def db_entry_tuples(db: PrefixDatabase):
    return [(p.bits, p.length, p.next_hop) for p in db.entries]
