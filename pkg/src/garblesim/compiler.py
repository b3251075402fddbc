"""Program optimization passes and stream generation.

Pass pipeline (applied in CLI token order):
  full | segment:<N>   reorder by dependence level, globally or per segment
  rename               output addresses follow program order (num_inputs+1+k)
  esw                  clear live bits on spent wires (window liveness rule)
  oor                  replace out-of-window operands with 0, emit the
                       address queue contents
  sched:<G>            partition onto G gate engines by replaying an
                       ideal-memory run of the timing model

The window model here is purely static: the wire window holds two
half-ranges, so while outputs land in half h, exactly halves {h-1, h} are
resident. A producer in half p is spent unless some consumer's output sits
in half >= p+2; an operand in half <= h-2 of its consumer is out of range.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .isa import (
    INSTRUCTION_BYTES,
    OOR_ADDR_BYTES,
    OP_AND,
    TABLE_BYTES,
    WIRE_BYTES,
    Program,
    program_copy,
)


class CompileError(Exception):
    pass


@dataclass(frozen=True)
class WindowModel:
    capacity_wires: int

    def __post_init__(self):
        n = self.capacity_wires
        if n < 2 or n & (n - 1):
            raise CompileError(f"window capacity {n} must be a power of two >= 2")

    @property
    def half(self) -> int:
        return self.capacity_wires // 2

    @classmethod
    def from_bytes(cls, sww_bytes: int) -> "WindowModel":
        return cls(sww_bytes // WIRE_BYTES)


@dataclass
class StreamSet:
    num_ges: int
    ge_instr_positions: list[list[int]]  # program positions, per GE, in order
    ge_tables: list[list[int]]  # table indices per GE
    ge_oor_addrs: list[list[int]]  # original wire addresses per GE
    live_writeback: dict[int, int]  # program position -> output address

    def instruction_count(self) -> int:
        return sum(len(s) for s in self.ge_instr_positions)


@dataclass(frozen=True)
class TrafficReport:
    live_wires: int
    oor_wires: int
    bytes_wires_in: int
    bytes_wires_out: int
    bytes_tables: int
    bytes_instructions: int
    bytes_oor_addrs: int

    @property
    def total_wires(self) -> int:
        return self.live_wires + self.oor_wires

    def to_json(self) -> str:
        d = {
            "live_wires": self.live_wires,
            "oor_wires": self.oor_wires,
            "total_wires": self.total_wires,
            "bytes_wires_in": self.bytes_wires_in,
            "bytes_wires_out": self.bytes_wires_out,
            "bytes_tables": self.bytes_tables,
            "bytes_instructions": self.bytes_instructions,
            "bytes_oor_addrs": self.bytes_oor_addrs,
        }
        return json.dumps(d, sort_keys=True, indent=2)


def instruction_levels(p: Program) -> list[int]:
    """Dependence level per instruction; inputs and OoR-lowered operands
    resolve through their recorded original addresses."""
    producer_level: dict[int, int] = {}
    levels = []
    for ins in p.instructions:
        lvl = 0
        for operand, lowered in ((ins.in0, ins.oor0), (ins.in1, ins.oor1)):
            addr = lowered if operand == 0 and lowered is not None else operand
            lvl = max(lvl, producer_level.get(addr, 0))
        lvl += 1
        producer_level[ins.out_addr] = lvl
        levels.append(lvl)
    return levels


def _require_not_lowered(p: Program, what: str):
    done = p.meta.get("passes", [])
    for pass_name in ("esw", "oor"):
        if pass_name in done:
            raise CompileError(
                f"{what} after {pass_name} would invalidate the window analysis;"
                " reorder first, then rename/esw/oor"
            )


def reorder_full(p: Program) -> Program:
    """Breadth-first schedule: stable sort of the whole program by level."""
    _require_not_lowered(p, "reorder_full")
    q = program_copy(p)
    levels = instruction_levels(q)
    order = sorted(range(len(q.instructions)), key=lambda k: (levels[k], k))
    q.instructions = [q.instructions[k] for k in order]
    q.passes().append("full")
    return q


def reorder_segment(p: Program, segment_size: int) -> Program:
    """Level-sort each contiguous segment; cross-segment order is kept.

    Levels are computed per segment (operands produced earlier count as
    ready), so independent work inside a segment interleaves even when one
    chain continues from the previous segment.
    """
    if segment_size < 1:
        raise CompileError("segment size must be >= 1")
    _require_not_lowered(p, "reorder_segment")
    q = program_copy(p)
    out = []
    for start in range(0, len(q.instructions), segment_size):
        seg = q.instructions[start : start + segment_size]
        local_level: dict[int, int] = {}
        keys = []
        for ins in seg:
            lvl = 0
            for operand, lowered in ((ins.in0, ins.oor0), (ins.in1, ins.oor1)):
                addr = lowered if operand == 0 and lowered is not None else operand
                lvl = max(lvl, local_level.get(addr, 0))
            lvl += 1
            local_level[ins.out_addr] = lvl
            keys.append(lvl)
        order = sorted(range(len(seg)), key=lambda k: (keys[k], k))
        out.extend(seg[k] for k in order)
    q.instructions = out
    q.passes().append(f"segment:{segment_size}")
    q.meta["segment_size"] = segment_size
    return q


def rename_wires(p: Program) -> Program:
    """Rewrite output addresses to follow program order and propagate the
    mapping into operands; primary input addresses are untouched."""
    q = program_copy(p)
    base = q.num_inputs + 1
    mapping: dict[int, int] = {}
    for k, ins in enumerate(q.instructions):
        mapping[ins.out_addr] = base + k
    def remap(addr: int) -> int:
        if addr <= q.num_inputs:
            return addr
        try:
            return mapping[addr]
        except KeyError:
            raise CompileError(f"operand address {addr} has no producer") from None
    for k, ins in enumerate(q.instructions):
        if ins.in0:
            ins.in0 = remap(ins.in0)
        if ins.oor0 is not None:
            ins.oor0 = remap(ins.oor0)
        if ins.in1:
            ins.in1 = remap(ins.in1)
        if ins.oor1 is not None:
            ins.oor1 = remap(ins.oor1)
        ins.out_addr = base + k
    q.output_addrs = {
        w: (a if a <= q.num_inputs else mapping[a]) for w, a in q.output_addrs.items()
    }
    if "rename" not in q.passes():
        q.passes().append("rename")
    return q


def _require_renamed(p: Program, what: str):
    if not p.is_renamed():
        raise CompileError(f"{what} requires a renamed program")


def mark_live(p: Program, w: WindowModel) -> Program:
    """ESW: live(k) iff some consumer reads instruction k's output from a
    window generation at least two halves later, or the wire is a declared
    circuit output (it must reach DRAM for readout)."""
    _require_renamed(p, "mark_live")
    if "oor" in p.meta.get("passes", []):
        raise CompileError(
            "mark_live after lowering could strand already-emitted OoR fetches"
        )
    q = program_copy(p)
    h = w.half
    live = [False] * len(q.instructions)
    base = q.num_inputs + 1
    output_addrs = set(q.output_addrs.values())
    for ins in q.instructions:
        consumer_half = ins.out_addr // h
        for operand, lowered in ((ins.in0, ins.oor0), (ins.in1, ins.oor1)):
            addr = lowered if operand == 0 and lowered is not None else operand
            if addr > q.num_inputs and consumer_half >= addr // h + 2:
                live[addr - base] = True
    for k, ins in enumerate(q.instructions):
        ins.live = live[k] or ins.out_addr in output_addrs
    q.passes().append("esw")
    q.meta["window_wires"] = w.capacity_wires
    return q


def lower_oor(p: Program, w: WindowModel) -> tuple[Program, list[int]]:
    """Replace out-of-window operands with address 0 and build the OoR
    address sequence (in0 before in1 when both are lowered).

    Primary inputs above the initial window capacity are never preloaded,
    so they are lowered regardless of half distance.
    """
    _require_renamed(p, "lower_oor")
    q = program_copy(p)
    h = w.half
    n = w.capacity_wires
    base = q.num_inputs + 1
    seq: list[int] = []
    live = {ins.out_addr: ins.live for ins in q.instructions}
    for ins in q.instructions:
        out_half = ins.out_addr // h
        lowered0 = lowered1 = None
        for which, operand in (("in0", ins.in0), ("in1", ins.in1)):
            if operand == 0:
                continue
            is_input = operand <= q.num_inputs
            oor = operand // h <= out_half - 2 or (is_input and operand >= n)
            if not oor:
                continue
            if not is_input and not live[operand]:
                raise CompileError(
                    f"operand {operand} is out of range but its producer is not live"
                )
            if which == "in0":
                lowered0 = operand
            else:
                lowered1 = operand
        if lowered0 is not None:
            ins.oor0 = lowered0
            ins.in0 = 0
            seq.append(lowered0)
        if lowered1 is not None:
            ins.oor1 = lowered1
            ins.in1 = 0
            seq.append(lowered1)
    q.passes().append("oor")
    q.meta["window_wires"] = w.capacity_wires
    q.meta["oor_count"] = len(seq)
    return q, seq


def schedule_ges(p: Program, num_ges: int, w: WindowModel | None = None) -> StreamSet:
    """Partition the program onto gate engines.

    The assignment comes from a run of the timing model with idealized
    memory (queues always full, no bandwidth limit): each cycle the next
    unissued instruction goes to the lowest-numbered engine that can accept
    one. Per-engine sequences preserve program order; table and OoR streams
    are derived by filtering each engine's instructions.
    """
    if num_ges < 1:
        raise CompileError("need at least one gate engine")
    from . import simulator  # local import; simulator depends on this module

    if w is None:
        w = WindowModel(_default_window_wires(p))
    assignment = simulator.scheduling_run(p, num_ges, w)
    return streams_from_assignment(p, num_ges, assignment)


def streams_from_assignment(
    p: Program, num_ges: int, assignment: list[list[int]]
) -> StreamSet:
    table_of = p.table_index_of()
    ge_tables = []
    ge_oor = []
    for positions in assignment:
        tables = [table_of[k] for k in positions if p.instructions[k].op == OP_AND]
        oor = []
        for k in positions:
            ins = p.instructions[k]
            if ins.oor0 is not None:
                oor.append(ins.oor0)
            if ins.oor1 is not None:
                oor.append(ins.oor1)
        ge_tables.append(tables)
        ge_oor.append(oor)
    live_wb = {
        k: ins.out_addr for k, ins in enumerate(p.instructions) if ins.live
    }
    return StreamSet(
        num_ges=num_ges,
        ge_instr_positions=assignment,
        ge_tables=ge_tables,
        ge_oor_addrs=ge_oor,
        live_writeback=live_wb,
    )


def _default_window_wires(p: Program) -> int:
    need = p.num_inputs + len(p.instructions) + 1
    n = 2
    while n < need:
        n *= 2
    return n


def traffic_report(p: Program, w: WindowModel, streams: StreamSet) -> TrafficReport:
    """Static byte accounting per stream class (16 B/wire, 32 B/table,
    8 B/instruction, 4 B/OoR address)."""
    live = sum(1 for ins in p.instructions if ins.live)
    oor = sum(len(s) for s in streams.ge_oor_addrs)
    ands = sum(1 for ins in p.instructions if ins.op == OP_AND)
    return TrafficReport(
        live_wires=live,
        oor_wires=oor,
        bytes_wires_in=WIRE_BYTES * oor,
        bytes_wires_out=WIRE_BYTES * live,
        bytes_tables=TABLE_BYTES * ands,
        bytes_instructions=INSTRUCTION_BYTES * len(p.instructions),
        bytes_oor_addrs=OOR_ADDR_BYTES * oor,
    )


PASS_TOKENS = ("baseline", "full", "segment", "rename", "esw", "oor", "sched")


def apply_passes(
    p: Program, tokens: str | list[str], w: WindowModel
) -> tuple[Program, StreamSet | None]:
    """Run a comma-separated pass list, e.g. "full,rename,esw,oor,sched:16".

    `baseline` is a no-op marker. Returns the compiled program and, when a
    sched:<G> token is present, the stream set.
    """
    if isinstance(tokens, str):
        tokens = [t.strip() for t in tokens.split(",") if t.strip()]
    streams = None
    for tok in tokens:
        name, _, arg = tok.partition(":")
        if name == "baseline":
            continue
        elif name == "full":
            p = reorder_full(p)
        elif name == "segment":
            size = int(arg) if arg else w.half
            p = reorder_segment(p, size)
        elif name == "rename":
            p = rename_wires(p)
        elif name == "esw":
            p = mark_live(p, w)
        elif name == "oor":
            p, _ = lower_oor(p, w)
        elif name == "sched":
            if not arg:
                raise CompileError("sched token needs a GE count, e.g. sched:16")
            streams = schedule_ges(p, int(arg), w)
        else:
            raise CompileError(f"unknown pass token {tok!r}")
    return p, streams
