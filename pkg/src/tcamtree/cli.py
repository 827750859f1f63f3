"""Command-line surface: lean-level analysis, planning, verification, grain sweeps.

Plan reports are emitted as canonical JSON (sorted keys, exact rationals as
strings, fixed decimal renderings) so identical inputs produce byte-identical
output.  Sweeps emit flat CSV for hand-off to plotting tools.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from . import bounds as bounds_model
from ._util import ceil_log2, fixed_decimal_str
from .errors import EmptyDatabase, MalformedLine, PlannerError
from .packing import (
    HybridizationConfig,
    SramPageSpec,
    resource_totals,
    tag_and_pack,
)
from .pipeline import (
    SYNTHETIC_PROFILE_NOTE,
    PipelineProfile,
    PipelineState,
)
from .prefixdb import (
    PrefixDatabase,
    max_threshold_length,
    oracle_lookup,
    parse_file,
)
from .tiler import SRAM, GrainSpec, StrideList, build_tree
from .trie import build_unibit_trie, compute_lean_levels


@dataclass
class PlanConfig:
    db_path: str
    address_width: int
    strides: StrideList
    grain: GrainSpec = GrainSpec()
    tag_bits: Optional[int] = None
    hybridize: bool = False
    factor: Fraction = Fraction(3)
    sram_page: SramPageSpec = SramPageSpec()
    profile: PipelineProfile = field(default_factory=PipelineProfile)
    coverage: Fraction = Fraction(99, 100)
    overflow_capacity: int = 512
    seed: int = 0

    @property
    def effective_tag_bits(self) -> int:
        return self.grain.default_tag_bits if self.tag_bits is None else self.tag_bits

    def hybrid_config(self) -> Optional[HybridizationConfig]:
        if not self.hybridize:
            return None
        return HybridizationConfig(
            enabled=True,
            factor=self.factor,
            sram_spec=self.sram_page,
            tag_bits=self.effective_tag_bits,
        )


def _improvement_fields(improvement: Optional[Fraction]) -> dict:
    if improvement is None:
        return {"improvement_factor": "infinite", "improvement_exact": "infinite"}
    return {
        "improvement_factor": fixed_decimal_str(improvement, 3),
        "improvement_exact": str(improvement),
    }


def build_plan(db: PrefixDatabase, cfg: PlanConfig, map_stages: bool = True):
    """Run build -> (hybridize) -> tag -> map -> bounds; returns (state, report)."""
    if len(db) == 0:
        raise EmptyDatabase("cannot plan for an empty database")
    threshold = max_threshold_length(db, cfg.coverage)
    state = PipelineState.planned(
        db,
        cfg.strides,
        grain=cfg.grain,
        tag_bits=cfg.tag_bits,
        profile=cfg.profile if map_stages else None,
        hybrid=cfg.hybrid_config(),
        overflow_capacity=cfg.overflow_capacity,
    )
    baseline_blocks, _ = bounds_model.single_tcam_baseline(
        len(db), cfg.strides.coverage, cfg.grain
    )
    resources = resource_totals(
        state.supertables, state.sram_rows, cfg.grain, cfg.sram_page, baseline_blocks
    )
    root = build_unibit_trie(db)
    lean = compute_lean_levels(root, len(db), max_depth=cfg.strides.coverage)
    split_level = cfg.strides.boundaries[0] if len(cfg.strides) >= 2 else None
    breport = bounds_model.build_report(
        entry_count=len(db),
        max_length=db.max_length(),
        threshold_length=threshold.length,
        baseline_width=cfg.strides.coverage,
        grain=cfg.grain,
        lean=lean,
        split_level=split_level,
    )
    report = _render_report(db, cfg, state, resources, breport, threshold)
    return state, report


def _render_report(db, cfg, state, resources, breport, threshold) -> dict:
    notes = []
    if cfg.profile.is_synthetic_default:
        notes.append(SYNTHETIC_PROFILE_NOTE)
    levels = []
    for level_index, tables in enumerate(state.tree.levels):
        if not tables:
            continue
        levels.append(
            {
                "level": level_index,
                "stride": cfg.strides[level_index],
                "tables": len(tables),
                "sram_tables": sum(1 for t in tables if t.kind == SRAM),
                "entries": sum(t.entry_count for t in tables),
            }
        )
    tiling = None
    if breport.tiling is not None:
        tiling = {
            "level": breport.tiling.level,
            "b_percent": str(breport.tiling.b),
            "lhs": breport.tiling.lhs,
            "feasible": breport.tiling.feasible,
            "epsilon_bound": str(breport.tiling.epsilon_bound),
        }
    pipeline = None
    if state.plan is not None:
        placements = []
        for i, st in enumerate(state.supertables):
            placements.append(
                {
                    "supertable": i,
                    "level": st.level_index,
                    "tag_bits": st.tag_bits,
                    "member_tables": len(st.members),
                    "blocks": st.allocated_blocks,
                    "spans": [[s.stage, s.start, s.count] for s in state.plan.placements[i]],
                }
            )
        sram_spans = [
            {"level": level, "spans": [[s.stage, s.start, s.count] for s in spans]}
            for level, spans in sorted(state.plan.sram_spans.items())
        ]
        pipeline = {
            "stage_count": cfg.profile.stage_count,
            "stages_used": state.plan.stages_used(),
            "placements": placements,
            "sram_spans": sram_spans,
        }
    report = {
        "config": {
            "db": str(cfg.db_path),
            "address_width": cfg.address_width,
            "strides": str(cfg.strides),
            "grain": str(cfg.grain),
            "tag_bits": cfg.effective_tag_bits,
            "hybridize": cfg.hybridize,
            "conversion_factor": str(cfg.factor) if cfg.hybridize else None,
            "sram_page": str(cfg.sram_page),
            "overflow_capacity": cfg.overflow_capacity,
            "threshold_coverage": str(cfg.coverage),
            "profile": {
                "stage_count": cfg.profile.stage_count,
                "tcam_blocks_per_stage": cfg.profile.tcam_blocks_per_stage,
                "sram_pages_per_stage": cfg.profile.sram_pages_per_stage,
            },
        },
        "database": {
            "entry_count": len(db),
            "max_length": db.max_length(),
            "threshold_length": threshold.length,
            "overflow_entries": len(state.overflow),
        },
        "resources": {
            "tcam_blocks_pre_tag": resources.tcam_blocks_pre_tag,
            "tcam_blocks_post_tag": resources.tcam_blocks_post_tag,
            "tcam_bits": resources.tcam_bits,
            "sram_entries": resources.sram_entries,
            "sram_pages": resources.sram_pages,
            "baseline_blocks": resources.baseline_blocks,
            **_improvement_fields(resources.improvement_factor),
        },
        "bounds": {
            "lower_bound_bits": breport.lower_bound_bits,
            "baseline_width": breport.baseline_width,
            "baseline_blocks": breport.baseline_blocks,
            "baseline_bits": breport.baseline_bits,
            "max_savings_factor_baseline_width": breport.max_savings_factor_baseline_width,
            "max_savings_factor_threshold": breport.max_savings_factor_threshold,
            "tiling": tiling,
        },
        "tree": {
            "levels": levels,
            "terminal_entries": state.tree.terminal_count,
            "total_entries": state.tree.total_entries,
        },
        "pipeline": pipeline,
        "notes": notes,
    }
    return report


def render_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def _flatten(prefix: str, value, rows: list):
    if isinstance(value, dict):
        for k in sorted(value):
            _flatten(f"{prefix}.{k}" if prefix else str(k), value[k], rows)
    elif isinstance(value, list):
        for i, item in enumerate(value):
            _flatten(f"{prefix}[{i}]", item, rows)
    else:
        rows.append((prefix, "" if value is None else str(value)))


def render_csv(report: dict) -> str:
    rows: list[tuple[str, str]] = []
    _flatten("", report, rows)
    return "key,value\n" + "".join(f"{k},{v}\n" for k, v in rows)


# -- verification ----------------------------------------------------------------


def read_trace(path, width: int):
    """Trace replay input: one address per line, binary or dotted-quad."""
    from .prefixdb import dotted_to_bits

    addresses = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "." in line:
                if width != 32:
                    raise MalformedLine(lineno, "dotted addresses need width 32")
                line = dotted_to_bits(line)
            if len(line) != width or line.strip("01"):
                raise MalformedLine(lineno, f"expected a {width}-bit address")
            addresses.append(line)
    return addresses


def verification_addresses(db: PrefixDatabase, mode: str, samples: int, seed: int):
    """Exhaustive for small widths; otherwise seeded samples plus every prefix
    padded with zeros and with ones."""
    width = db.address_width
    if mode == "exhaustive" and width > 24:
        raise PlannerError(
            f"exhaustive verification of a {width}-bit space is not tractable;"
            " use --mode sampled"
        )
    if mode == "exhaustive" or (mode == "auto" and width <= 16):
        for value in range(1 << width):
            yield format(value, f"0{width}b")
        return
    seen = set()
    for p in db.entries:
        for pad in ("0", "1"):
            addr = p.bits + pad * (width - p.length)
            if addr not in seen:
                seen.add(addr)
                yield addr
    rng = random.Random(seed)
    for _ in range(samples):
        addr = format(rng.getrandbits(width), f"0{width}b")
        if addr not in seen:
            seen.add(addr)
            yield addr


def inject_fault(state: PipelineState):
    """Corrupt every terminal value so the verifier must observe mismatches."""
    for table in state.tree.all_tables():
        for e in table.raw_entries():
            if e.is_terminal:
                e.bmp_value = e.bmp_value + "?corrupt"
        table.invalidate()


def run_verify(db, cfg: PlanConfig, mode: str, samples: int, fault: bool,
               max_mismatches: int, trace: Optional[str] = None):
    state, _ = build_plan(db, cfg, map_stages=False)
    if fault:
        inject_fault(state)
    if trace is not None:
        addresses = read_trace(trace, db.address_width)
    else:
        addresses = verification_addresses(db, mode, samples, cfg.seed)
    mismatches = []
    checked = 0
    for address in addresses:
        checked += 1
        got = state.search(address)
        expected = oracle_lookup(db, address)
        if got != expected:
            if len(mismatches) < max_mismatches:
                mismatches.append((address, got, expected))
    return checked, mismatches


# -- grain sweep -------------------------------------------------------------------


def sweep_rows(db, strides: StrideList, widths, depth_rule: str, reference: GrainSpec,
               threshold_coverage: Fraction = Fraction(99, 100)):
    """One row per grain width: single-table bits, tree bits, improvements.

    The single-table side is sized to the threshold length.  A single stride is
    a degenerate tree, so the tree column never exceeds the single-table cost.
    Depth rule `bits` holds width*depth at the reference product; `fixed` keeps
    the reference depth.
    """
    if len(db) == 0:
        raise EmptyDatabase("cannot sweep an empty database")
    threshold = max_threshold_length(db, threshold_coverage)
    ref_bits = bounds_model.single_tcam_baseline(
        len(db), max(threshold.length, 1), reference
    )[1]
    tree = build_tree(db.restricted(strides.coverage), strides)
    rows = []
    for width in widths:
        if depth_rule == "bits":
            depth = max(1, (reference.width * reference.depth) // width)
        else:
            depth = reference.depth
        grain = GrainSpec(width, depth)
        _, single_bits = bounds_model.single_tcam_baseline(
            len(db), max(threshold.length, 1), grain
        )
        supertables = tag_and_pack(tree, grain, ceil_log2(depth))
        plan_bits = sum(st.block_count for st in supertables) * grain.bits
        tree_bits = min(plan_bits, single_bits)
        rows.append(
            {
                "grain_width": width,
                "grain_depth": depth,
                "single_tcam_bits": single_bits,
                "single_tcam_improvement": fixed_decimal_str(
                    Fraction(ref_bits, single_bits), 3
                ),
                "plan_bits": plan_bits,
                "tree_bits": tree_bits,
                "tree_improvement": fixed_decimal_str(Fraction(ref_bits, tree_bits), 3),
            }
        )
    return rows


def render_sweep_csv(rows) -> str:
    header = [
        "grain_width",
        "grain_depth",
        "single_tcam_bits",
        "single_tcam_improvement",
        "plan_bits",
        "tree_bits",
        "tree_improvement",
    ]
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(row[k]) for k in header))
    return "".join(line + "\n" for line in lines)


# -- argument plumbing -----------------------------------------------------------------


def _write_output(text: str, out: Optional[str]):
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load_profile(path: Optional[str]) -> PipelineProfile:
    if path is None:
        return PipelineProfile()
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    return PipelineProfile(
        stage_count=raw["stage_count"],
        tcam_blocks_per_stage=raw["tcam_blocks_per_stage"],
        sram_pages_per_stage=raw["sram_pages_per_stage"],
    )


def _plan_config(args) -> PlanConfig:
    return PlanConfig(
        db_path=args.db,
        address_width=args.width,
        strides=StrideList.parse(args.strides),
        grain=GrainSpec.parse(args.grain),
        tag_bits=args.tag_bits,
        hybridize=args.hybridize,
        factor=Fraction(str(args.factor)),
        sram_page=SramPageSpec.parse(args.sram_page),
        profile=_load_profile(args.profile),
        coverage=Fraction(str(args.coverage)),
        overflow_capacity=args.overflow_capacity,
        seed=args.seed,
    )


def _add_plan_arguments(sub):
    sub.add_argument("--db", required=True, help="prefix database in canonical text form")
    sub.add_argument("--width", required=True, type=int, help="address width in bits")
    sub.add_argument("--strides", required=True, help="hyphen-joined strides, e.g. 19-29-16")
    sub.add_argument("--grain", default="44x512", help="TCAM block geometry WxD")
    sub.add_argument("--tag-bits", type=int, default=None, help="tag width; default ceil(log2 depth)")
    sub.add_argument("--hybridize", action="store_true", help="convert eligible tables to SRAM")
    sub.add_argument("--factor", default="3", help="conversion factor for hybridization")
    sub.add_argument("--sram-page", default="128x1024", help="SRAM page geometry WxD")
    sub.add_argument("--profile", default=None, help="JSON pipeline profile file")
    sub.add_argument("--coverage", default="0.99", help="fraction defining the threshold length")
    sub.add_argument("--overflow-capacity", type=int, default=512)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", default=None, help="write output to this path instead of stdout")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="tcamtree",
        description="Plan, verify, and size longest-prefix-match lookup as a tree of TCAM blocks.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    p_analyze = commands.add_parser("analyze", help="per-level pointer overhead as CSV")
    p_analyze.add_argument("--db", required=True)
    p_analyze.add_argument("--width", required=True, type=int)
    p_analyze.add_argument("--max-level", type=int, default=None)
    p_analyze.add_argument("--out", default=None)

    p_plan = commands.add_parser("plan", help="build a full plan and report resources")
    _add_plan_arguments(p_plan)
    p_plan.add_argument("--format", choices=("json", "csv"), default="json")

    p_verify = commands.add_parser("verify", help="check the plan against the reference lookup")
    _add_plan_arguments(p_verify)
    p_verify.add_argument("--mode", choices=("auto", "exhaustive", "sampled"), default="auto")
    p_verify.add_argument("--samples", type=int, default=1000)
    p_verify.add_argument("--trace", default=None,
                          help="replay addresses from this file instead of generating them")
    p_verify.add_argument("--inject-fault", action="store_true",
                          help="corrupt the plan first; the verifier must then fail")
    p_verify.add_argument("--max-mismatches", type=int, default=20)

    p_sweep = commands.add_parser("sweep-grain", help="bit totals across grain widths")
    p_sweep.add_argument("--db", required=True)
    p_sweep.add_argument("--width", required=True, type=int)
    p_sweep.add_argument("--strides", required=True)
    p_sweep.add_argument("--widths", required=True, help="comma-separated grain widths")
    p_sweep.add_argument("--depth-rule", choices=("bits", "fixed"), default="bits",
                         help="bits: hold width*depth at the reference; fixed: keep reference depth")
    p_sweep.add_argument("--grain", default="44x512", help="reference grain for improvements")
    p_sweep.add_argument("--coverage", default="0.99")
    p_sweep.add_argument("--out", default=None)

    args = parser.parse_args(argv)
    try:
        if args.command == "analyze":
            db = parse_file(args.db, args.width)
            if len(db) == 0:
                raise EmptyDatabase("analyze needs a non-empty database")
            root = build_unibit_trie(db)
            max_level = args.max_level if args.max_level is not None else db.address_width
            lean = compute_lean_levels(root, len(db), max_depth=max_level)
            _write_output(lean.to_csv(1, max_level), args.out)
            return 0
        if args.command == "plan":
            cfg = _plan_config(args)
            db = parse_file(args.db, args.width)
            _, report = build_plan(db, cfg)
            text = render_json(report) if args.format == "json" else render_csv(report)
            _write_output(text, args.out)
            return 0
        if args.command == "verify":
            cfg = _plan_config(args)
            db = parse_file(args.db, args.width)
            checked, mismatches = run_verify(
                db, cfg, args.mode, args.samples, args.inject_fault,
                args.max_mismatches, trace=args.trace,
            )
            if mismatches:
                lines = [f"FAIL {checked - 0} addresses checked, mismatches:"]
                lines += [f"({a}, {g}, {e})" for a, g, e in mismatches]
                _write_output("".join(l + "\n" for l in lines), args.out)
                return 1
            _write_output(f"PASS {checked}/{checked}\n", args.out)
            return 0
        if args.command == "sweep-grain":
            db = parse_file(args.db, args.width)
            widths = [int(w) for w in args.widths.split(",")]
            rows = sweep_rows(
                db,
                StrideList.parse(args.strides),
                widths,
                args.depth_rule,
                GrainSpec.parse(args.grain),
                Fraction(str(args.coverage)),
            )
            _write_output(render_sweep_csv(rows), args.out)
            return 0
    except (PlannerError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError("unreachable command")


if __name__ == "__main__":
    sys.exit(main())
