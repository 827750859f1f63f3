"""Longest-prefix-match lookup as a tree of fixed-grain TCAM blocks.

Planner, resource estimator, and functional simulator: parse a prefix
database, build a fixed-stride tree of match tables, optionally convert
near-aligned tables to SRAM, pack the rest into tagged super-tables, map
them onto pipeline stages, and check all of it against a reference lookup
and closed-form bounds.
"""

from .bounds import (
    BoundsReport,
    TilingCondition,
    lower_bound_bits,
    max_savings_factor,
    single_tcam_baseline,
    tiling_condition,
)
from .packing import (
    HybridizationConfig,
    ResourceReport,
    SramPageSpec,
    SuperTable,
    hybridize,
    resource_totals,
    tag_and_pack,
)
from .pipeline import (
    OverflowBuffer,
    PipelinePlan,
    PipelineProfile,
    PipelineState,
    delete_prefix,
    insert_prefix,
    map_to_pipeline,
    search,
)
from .prefixdb import (
    DEFAULT_NEXT_HOP,
    MaxThreshold,
    Prefix,
    PrefixDatabase,
    max_threshold_length,
    oracle_lookup,
    parse_database,
    parse_file,
    serialize,
)
from .tiler import (
    GrainSpec,
    StrideList,
    StrideSearchConfig,
    TcamTree,
    TreeTable,
    blocks_for_table,
    build_tree,
    choose_strides,
)
from .trie import (
    LeanLevelTable,
    build_unibit_trie,
    compute_lean_levels,
    expand_prefixes,
    trie_lookup,
)

__all__ = [
    "BoundsReport",
    "DEFAULT_NEXT_HOP",
    "GrainSpec",
    "HybridizationConfig",
    "LeanLevelTable",
    "MaxThreshold",
    "OverflowBuffer",
    "PipelinePlan",
    "PipelineProfile",
    "PipelineState",
    "Prefix",
    "PrefixDatabase",
    "ResourceReport",
    "SramPageSpec",
    "StrideList",
    "StrideSearchConfig",
    "SuperTable",
    "TcamTree",
    "TilingCondition",
    "TreeTable",
    "blocks_for_table",
    "build_tree",
    "build_unibit_trie",
    "choose_strides",
    "compute_lean_levels",
    "delete_prefix",
    "expand_prefixes",
    "hybridize",
    "insert_prefix",
    "lower_bound_bits",
    "map_to_pipeline",
    "max_savings_factor",
    "max_threshold_length",
    "oracle_lookup",
    "parse_database",
    "parse_file",
    "resource_totals",
    "search",
    "serialize",
    "single_tcam_baseline",
    "tag_and_pack",
    "tiling_condition",
    "trie_lookup",
]

__version__ = "0.1.0"
