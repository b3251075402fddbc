"""Cycle-accurate model of the accelerator.

Machine structure per gate engine (GE): an in-order frontend (fetch,
decode, three wire-read stages), two execution units (a fully pipelined
AND unit of 21/18 stages for garbler/evaluator and a one-cycle XOR unit),
and a two-stage writeback that commits to the shared wire window and, for
live wires and garbler tables, to an outbound DRAM buffer. Writeback is in
program order per GE; forwarding makes a result usable the cycle after its
execute stage completes, across all GEs, which is what gives dependent
gates a producer-consumer separation of exactly the execute latency.

The wire window (a banked scratchpad holding two contiguous half-ranges of
wire addresses) advances half a window at a time when the output frontier
crosses the top. An advance waits until every write into the departing half
has committed (its live spills are issued with the commit) and no older
instruction still needs to read a departing address.

Streams (instructions, tables, OoR addresses, OoR wire data) are pulled
on-chip by per-GE DMA channels arbitrated round-robin under a bandwidth
token bucket; live wires and garbler tables drain through the same model.
Functional values ride along with the timing model using the real label
math, so final outputs are bit-exact against the software garbler.
"""

from __future__ import annotations

import hashlib
import json
from collections import deque
from dataclasses import dataclass, field, replace

from .compiler import CompileError, StreamSet, WindowModel
from .gcrypto import eval_and_raw, garble_and_raw
from .isa import OP_AND, OP_NOP, OP_XOR, Program

INF = 1 << 62

STALL_OPERAND = "operand_not_ready"
STALL_BANK = "bank_conflict"
STALL_QUEUE = "queue_empty"
STALL_WBACK = "writeback_backpressure"
STALL_CAUSES = (STALL_OPERAND, STALL_BANK, STALL_QUEUE, STALL_WBACK)


class SimulationError(Exception):
    pass


@dataclass(frozen=True)
class DramConfig:
    bandwidth_bytes_per_cycle: float
    base_latency_cycles: int = 100
    burst_bytes: int = 64


DDR4 = DramConfig(bandwidth_bytes_per_cycle=35.2)
HBM2 = DramConfig(bandwidth_bytes_per_cycle=512.0)


@dataclass(frozen=True)
class PipelineConfig:
    and_latency_garbler: int = 21
    and_latency_evaluator: int = 18
    xor_latency: int = 1
    fetch_decode: int = 2
    sww_read: int = 3
    writeback: int = 2


@dataclass
class SimConfig:
    mode: str = "evaluator"  # or "garbler"
    num_ges: int = 1
    sww_bytes: int = 2 * 1024 * 1024
    banks_per_ge: int = 4
    queue_depths: dict = field(
        default_factory=lambda: {"instr": 1024, "table": 256, "oor": 256}
    )
    dram: DramConfig = DDR4
    pipeline: PipelineConfig = PipelineConfig()
    sww_accesses_per_bank_per_cycle: int = 2
    wb_buffer_entries: int = 64
    ideal_memory: bool = False
    zero_compute: bool = False
    collect_trace: bool = False
    collect_occupancy: bool = False
    deadlock_cycles: int = 200_000
    oor_retry_delay: int | None = None

    @property
    def window_wires(self) -> int:
        return self.sww_bytes // 16

    @property
    def num_banks(self) -> int:
        return self.num_ges * self.banks_per_ge

    @property
    def and_latency(self) -> int:
        if self.mode == "garbler":
            return self.pipeline.and_latency_garbler
        return self.pipeline.and_latency_evaluator

    def validate(self):
        if self.mode not in ("garbler", "evaluator"):
            raise SimulationError(f"unknown mode {self.mode!r}")
        n = self.window_wires
        if n < 2 or n & (n - 1):
            raise SimulationError(f"window capacity {n} wires must be a power of two")
        if self.num_ges < 1:
            raise SimulationError("need at least one GE")
        if n % self.num_banks:
            raise SimulationError(
                f"bank count {self.num_banks} must divide window capacity {n}"
            )
        if self.pipeline.fetch_decode < 2 or self.pipeline.sww_read < 3:
            raise SimulationError("frontend needs >=2 fetch/decode and >=3 read stages")
        if self.pipeline.writeback < 1:
            raise SimulationError("writeback needs at least one stage")
        if self.sww_accesses_per_bank_per_cycle < 1:
            raise SimulationError("banks must serve at least one access per cycle")
        if self.wb_buffer_entries < 2:
            # a garbler AND with a live output commits a table and a spill
            raise SimulationError("writeback buffer needs at least two entries")
        if self.queue_depths.get("instr", 0) < 1 or self.queue_depths.get("table", 0) < 1:
            raise SimulationError("instruction and table queues need >=1 entry")
        if self.queue_depths.get("oor", 0) < 2:
            # an instruction may pop both operands from the queue in one cycle
            raise SimulationError("OoR queue needs at least two entries")
        return self


def sww_map(addr: int, cfg: SimConfig) -> tuple[int, int]:
    """Bank and slot-within-bank of a wire address (consecutive addresses
    stripe across banks)."""
    if addr < 1:
        raise SimulationError("wire addresses start at 1")
    banks = cfg.num_banks
    return addr % banks, (addr % cfg.window_wires) // banks


@dataclass
class SwwState:
    capacity: int
    window_base: int = 0
    valid: list = None  # one flag per physical slot

    def __post_init__(self):
        if self.valid is None:
            self.valid = [False] * self.capacity

    @property
    def half(self) -> int:
        return self.capacity // 2

    def resident(self, addr: int) -> bool:
        return self.window_base <= addr < self.window_base + self.capacity


def window_advance(s: SwwState, new_output_addr: int) -> SwwState:
    """Slide the window up one half; the departing slots are invalidated.

    Precondition: new_output_addr is the first address past the current
    top. A jump of more than one half-window means the compiler contract
    (sequential output addresses) was broken.
    """
    top = s.window_base + s.capacity
    if new_output_addr != top:
        if new_output_addr > top:
            raise SimulationError(
                f"output address {new_output_addr} jumps past window top {top}"
            )
        raise SimulationError(
            f"output address {new_output_addr} does not require an advance"
        )
    h = s.half
    n = s.capacity
    for addr in range(s.window_base, s.window_base + h):
        s.valid[addr % n] = False
    s.window_base += h
    return s


@dataclass
class DramImage:
    input_labels: dict[int, int] = field(default_factory=dict)
    tables: list = field(default_factory=list)  # (t_g, t_e) by table index
    delta: int | None = None  # garbler mode only


def dram_image_for_evaluator(p: Program, gc, active_input_labels) -> DramImage:
    """Active input labels plus the table stream from a GarbledCircuit."""
    wires = sorted(p.input_addrs)
    if len(active_input_labels) != len(wires):
        raise SimulationError("one active label per circuit input required")
    labels = {p.input_addrs[w]: lab for w, lab in zip(wires, active_input_labels)}
    if p.const_addr is not None:
        if gc.one_active_label is None:
            raise SimulationError("program uses the constant-one wire; garble first")
        labels[p.const_addr] = gc.one_active_label
    return DramImage(
        input_labels=labels, tables=[(t.t_g, t.t_e) for t in gc.tables]
    )


def dram_image_for_garbler(p: Program, ctx) -> DramImage:
    """Zero labels of the inputs plus the garbler's global offset."""
    labels = {p.input_addrs[w]: ctx.zero_labels[w] for w in sorted(p.input_addrs)}
    if p.const_addr is not None:
        labels[p.const_addr] = ctx.zero_labels[ctx.one_wire]
    return DramImage(input_labels=labels, delta=ctx.delta)


@dataclass
class SimReport:
    mode: str
    num_ges: int
    total_cycles: int
    retired: int
    gates_per_cycle: float
    steady_gates_per_cycle: float
    window_advances: int
    oor_retries: int
    live_count: int
    oor_count: int
    bytes: dict
    per_ge: list
    functional_digest: str

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "num_ges": self.num_ges,
            "total_cycles": self.total_cycles,
            "retired": self.retired,
            "gates_per_cycle": self.gates_per_cycle,
            "steady_gates_per_cycle": self.steady_gates_per_cycle,
            "window_advances": self.window_advances,
            "oor_retries": self.oor_retries,
            "live_count": self.live_count,
            "oor_count": self.oor_count,
            "bytes": self.bytes,
            "per_ge": self.per_ge,
            "functional_digest": self.functional_digest,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


@dataclass
class SimResult:
    report: SimReport
    output_labels: list | None = None  # evaluator: active; garbler: zero labels
    tables: list | None = None  # garbler mode, by table index
    trace: dict | None = None  # position -> (ge, fetch, dispatch, done, retire)
    occupancy: list | None = None  # per-cycle (busy GEs, retired, window base)


def occupancy_csv(occupancy: list) -> str:
    """Per-cycle occupancy rows for plotting."""
    lines = ["cycle,busy_ges,retired,window_base"]
    for cycle, row in enumerate(occupancy):
        lines.append(f"{cycle},{row[0]},{row[1]},{row[2]}")
    return "\n".join(lines) + "\n"


class _Flight:
    """One instruction in flight. Zero operands stay zero; their values
    arrive from the OoR queue and are cached in v0/v1."""

    __slots__ = (
        "pos", "op", "in0", "in1", "live", "out", "src", "oor0", "oor1",
        "v0", "v1", "read0", "read1", "table", "table_idx", "value",
        "fetch_c", "dispatch_c", "done_c",
    )

    def __init__(self, pos, ins):
        self.pos = pos
        self.op = ins.op
        self.in0 = ins.in0
        self.in1 = ins.in1
        self.live = ins.live
        self.out = ins.out_addr
        self.src = ins.src_gate
        self.oor0 = ins.oor0
        self.oor1 = ins.oor1
        self.v0 = self.v1 = None
        self.read0 = self.read1 = False  # bank read issued for in0/in1
        self.table = None
        self.table_idx = -1
        self.value = None
        self.fetch_c = self.dispatch_c = self.done_c = -1


class _GE:
    __slots__ = (
        "idx", "positions", "instr_q", "fetch", "decode_pipe", "r1", "rmid",
        "r3", "and_pipe", "xor_pipe", "complete", "next_wb", "wb_pipe",
        "outbound", "table_q", "oor_q", "oor_consumed", "table_consumed",
        "stalls", "busy", "idle", "retired", "instr_src_done",
    )

    def __init__(self, idx, positions, cfg):
        self.idx = idx
        self.positions = positions  # program positions assigned to this GE
        self.instr_q = deque()
        self.fetch = None
        self.decode_pipe = [None] * (cfg.pipeline.fetch_decode - 1)
        self.r1 = None
        self.rmid = [None] * (cfg.pipeline.sww_read - 2)
        self.r3 = None
        self.and_pipe = deque()
        self.xor_pipe = deque()
        self.complete = {}
        self.next_wb = 0  # index into positions of the next in-order writeback
        self.wb_pipe = [None] * cfg.pipeline.writeback
        self.outbound = deque()
        self.table_q = deque()  # (table_idx, t_g, t_e)
        self.oor_q = deque()  # (addr, value-or-None)
        self.oor_consumed = 0
        self.table_consumed = 0
        self.stalls = {c: 0 for c in STALL_CAUSES}
        self.busy = 0
        self.idle = 0
        self.retired = 0
        self.instr_src_done = False

    def in_flight(self) -> bool:
        return bool(
            self.fetch
            or any(self.decode_pipe)
            or self.r1
            or any(self.rmid)
            or self.r3
            or self.and_pipe
            or self.xor_pipe
            or self.complete
            or any(self.wb_pipe)
        )


# DMA channel kinds
_CH_INSTR = 0
_CH_TABLE = 1
_CH_OORADDR = 2
_CH_OORDATA = 3
_CH_DRAIN = 4

_ITEM_BYTES = {_CH_INSTR: 8, _CH_TABLE: 32, _CH_OORADDR: 4, _CH_OORDATA: 16}

_BYTE_CLASS = {
    _CH_INSTR: "instructions_in",
    _CH_TABLE: "tables_in",
    _CH_OORADDR: "oor_addrs_in",
    _CH_OORDATA: "wires_in",
}


class Channel:
    """One DMA stream: a cursor over source items feeding a bounded sink."""

    __slots__ = ("kind", "ge", "items", "cursor", "inflight", "reserved", "next_try")

    def __init__(self, kind, ge, items):
        self.kind = kind
        self.ge = ge
        self.items = items
        self.cursor = 0
        self.inflight = deque()  # (complete_cycle, payload list)
        self.reserved = 0
        self.next_try = 0

    def exhausted(self) -> bool:
        return self.cursor >= len(self.items) and not self.inflight


class DramModel:
    """Bandwidth token bucket with round-robin channel arbitration.

    Tokens accumulate in millibytes per GE cycle (integer arithmetic keeps
    runs bit-for-bit reproducible); each transfer moves up to burst_bytes
    and completes base_latency_cycles after issue. Completion order per
    channel equals issue order. Re-reads of a not-yet-valid OoR wire wait
    out a retry delay without consuming bandwidth.
    """

    def __init__(self, cfg: SimConfig, channels, engine):
        self.cfg = cfg
        self.channels = channels
        self.engine = engine
        self.tokens = 0
        self.rate_mb = round(cfg.dram.bandwidth_bytes_per_cycle * 1000)
        self.cap_mb = max(self.rate_mb, cfg.dram.burst_bytes * 1000) * 4
        self.rr = 0
        self.events = 0  # issues + deliveries; cheap progress marker

    def tick(self, cycle: int) -> int:
        """Deliver due transfers, then issue new ones; returns completions."""
        engine = self.engine
        completed = 0
        for ch in self.channels:
            q = ch.inflight
            while q and q[0][0] <= cycle:
                _, payload = q.popleft()
                engine.deliver(ch, payload, cycle)
                ch.reserved -= len(payload)
                completed += 1
        self.events += completed
        self.tokens = min(self.tokens + self.rate_mb, self.cap_mb)
        progress = True
        while progress and self.tokens > 0:
            progress = False
            nch = len(self.channels)
            for off in range(nch):
                ch = self.channels[(self.rr + off) % nch]
                # skip channels with nothing to move before paying for a call
                if ch.kind == _CH_DRAIN:
                    if not ch.ge.outbound:
                        continue
                elif ch.cursor >= len(ch.items):
                    continue
                if self._try_issue(ch, cycle):
                    progress = True
                    self.events += 1
                if self.tokens <= 0:
                    break
        self.rr = (self.rr + 1) % max(1, len(self.channels))
        return completed

    def _try_issue(self, ch: Channel, cycle: int) -> bool:
        engine = self.engine
        latency = self.cfg.dram.base_latency_cycles
        if ch.kind == _CH_DRAIN:
            buf = ch.ge.outbound
            if not buf:
                return False
            kind, ident, nbytes, value = buf[0]
            if self.tokens < nbytes * 1000:
                return False
            buf.popleft()
            self.tokens -= nbytes * 1000
            engine.count_bytes("wires_out" if kind == "wire" else "tables_out", nbytes)
            ch.inflight.append((cycle + latency, [(kind, ident, value)]))
            ch.reserved += 1
            return True
        if ch.cursor >= len(ch.items):
            return False
        item_bytes = _ITEM_BYTES[ch.kind]
        space = engine.sink_space(ch)
        if space <= 0:
            return False
        want = min(
            max(1, self.cfg.dram.burst_bytes // item_bytes),
            space,
            len(ch.items) - ch.cursor,
        )
        if ch.kind == _CH_OORDATA:
            if cycle < ch.next_try:
                return False
            want = engine.fetchable_oor(ch, want, cycle)
            if want == 0:
                # head-of-line wire not valid in DRAM yet; retry later
                ch.next_try = cycle + (
                    self.cfg.oor_retry_delay or latency
                )
                engine.oor_retries += 1
                return False
            if want < 0:  # no addresses staged yet; no penalty
                return False
        nbytes = want * item_bytes
        if self.tokens < nbytes * 1000:
            return False
        self.tokens -= nbytes * 1000
        if ch.kind == _CH_OORDATA:
            payload = engine.take_oor(ch, want)
        else:
            payload = list(ch.items[ch.cursor : ch.cursor + want])
        ch.cursor += want
        ch.reserved += want
        engine.count_bytes(_BYTE_CLASS[ch.kind], nbytes)
        ch.inflight.append((cycle + latency, payload))
        return True


def dram_model_tick(dram: DramModel, cycle: int) -> int:
    """Advance the DRAM model one GE cycle; returns transfers completed."""
    return dram.tick(cycle)


class _Engine:
    """Shared core for scheduling runs and full simulations."""

    def __init__(self, p: Program, cfg: SimConfig, assignment, image, streams,
                 sched_mode: bool):
        cfg.validate()
        self.p = p
        self.cfg = cfg
        self.sched_mode = sched_mode
        self.streams = streams
        self.image = image
        self.n = cfg.window_wires
        self.h = self.n // 2
        self.num_banks = cfg.num_banks
        self.bank_cap = cfg.sww_accesses_per_bank_per_cycle
        self.functional = not sched_mode
        self.garbler = cfg.mode == "garbler"
        self.and_lat = 1 if cfg.zero_compute else cfg.and_latency
        self.xor_lat = 1 if cfg.zero_compute else cfg.pipeline.xor_latency
        self.num_inputs = p.num_inputs
        self.max_addr = p.num_inputs + len(p.instructions)
        lowered = "oor" in p.meta.get("passes", [])
        if lowered:
            declared = p.meta.get("window_wires")
            if declared is not None and declared != self.n:
                raise SimulationError(
                    f"program was lowered for a {declared}-wire window, "
                    f"config has {self.n}"
                )
        elif self.max_addr >= self.n:
            raise CompileError(
                "program does not fit the wire window; run the oor pass"
            )
        self.values = [None] * (self.max_addr + 1)
        self.ready = [INF] * (self.max_addr + 1)
        self.dram_valid = [INF] * (self.max_addr + 1)
        self.sww = SwwState(self.n)
        n_half = self.max_addr // self.h + 3
        self.writes_left = [0] * n_half
        self.readers_left = [0] * n_half
        for ins in p.instructions:
            self.writes_left[ins.out_addr // self.h] += 1
            for operand in (ins.in0, ins.in1):
                if operand:
                    self.readers_left[operand // self.h] += 1
        for addr in range(1, p.num_inputs + 1):
            self.dram_valid[addr] = -1
            if image is not None:
                self.values[addr] = image.input_labels.get(addr)
            if addr < self.n:
                self.ready[addr] = -1
                self.sww.valid[addr % self.n] = True
        self.delta = image.delta if image else None
        if self.garbler and self.functional and self.delta is None:
            raise SimulationError("garbler simulation needs delta in the DRAM image")
        self.table_count = sum(1 for i in p.instructions if i.op == OP_AND)
        self.tables_out = [None] * (self.table_count if self.garbler else 0)
        self.table_of = p.table_index_of() if self.garbler else {}
        self.ges = [_GE(g, assignment[g], cfg) for g in range(cfg.num_ges)]
        self.assignment = assignment
        self.bytes = {
            "instructions_in": 0, "tables_in": 0, "tables_out": 0,
            "oor_addrs_in": 0, "wires_in": 0, "wires_out": 0,
        }
        self.window_advances = 0
        self.oor_retries = 0
        self.retired_total = 0
        self.first_retire = -1
        self.last_retire = -1
        self.trace = {} if cfg.collect_trace else None
        self.occupancy = [] if cfg.collect_occupancy else None
        self.global_cursor = 0  # sched-mode issue pointer
        self.last_progress_cycle = 0
        self._progress_mark = (-1, -1)
        self.complete_cap = 2 * max(self.and_lat, 4)
        self.zc_tables = {}
        if cfg.zero_compute and self.functional:
            self._precompute_functional()
        self.dram = None
        self.oor_staging = {}
        if not sched_mode and not cfg.ideal_memory:
            self._build_dram()
        else:
            self._prefill_queues()

    # --- setup -----------------------------------------------------------

    def _precompute_functional(self):
        """Zero-compute mode ignores data hazards in the timing loop, so
        label values are computed here in program order instead."""
        values = self.values
        table_of = self.p.table_index_of()
        for pos, ins in enumerate(self.p.instructions):
            if ins.op == OP_NOP:
                continue
            v0 = values[ins.oor0 if ins.in0 == 0 else ins.in0]
            v1 = values[ins.oor1 if ins.in1 == 0 else ins.in1]
            if ins.op == OP_XOR:
                values[ins.out_addr] = v0 ^ v1
            elif self.garbler:
                wc0, tg, te = garble_and_raw(self.delta, v0, v1, ins.src_gate)
                values[ins.out_addr] = wc0
                self.zc_tables[pos] = (table_of[pos], (tg, te))
            else:
                tg, te = self.image.tables[table_of[pos]]
                values[ins.out_addr] = eval_and_raw(v0, v1, tg, te, ins.src_gate)

    def _build_dram(self):
        st = self.streams
        channels = []
        for ge in self.ges:
            instrs = [_Flight(pos, self.p.instructions[pos]) for pos in ge.positions]
            channels.append(Channel(_CH_INSTR, ge, instrs))
            if not self.garbler:
                tabs = [(idx, *self.image.tables[idx]) for idx in st.ge_tables[ge.idx]]
                channels.append(Channel(_CH_TABLE, ge, tabs))
            addrs = list(st.ge_oor_addrs[ge.idx])
            channels.append(Channel(_CH_OORADDR, ge, addrs))
            channels.append(Channel(_CH_OORDATA, ge, list(addrs)))
            channels.append(Channel(_CH_DRAIN, ge, []))
            self.oor_staging[ge.idx] = deque()
        self.dram = DramModel(self.cfg, channels, self)

    def _prefill_queues(self):
        """Idealized memory: every queue holds its whole stream up front.
        Stream bytes are still accounted so reports stay comparable."""
        if self.sched_mode:
            return
        st = self.streams
        for ge in self.ges:
            for pos in ge.positions:
                ge.instr_q.append(_Flight(pos, self.p.instructions[pos]))
            ge.instr_src_done = True
            self.count_bytes("instructions_in", 8 * len(ge.positions))
            if st is None:
                continue
            if not self.garbler:
                for idx in st.ge_tables[ge.idx]:
                    tg, te = self.image.tables[idx]
                    ge.table_q.append((idx, tg, te))
                self.count_bytes("tables_in", 32 * len(st.ge_tables[ge.idx]))
            for addr in st.ge_oor_addrs[ge.idx]:
                ge.oor_q.append((addr, None))
            self.count_bytes("oor_addrs_in", 4 * len(st.ge_oor_addrs[ge.idx]))
            self.count_bytes("wires_in", 16 * len(st.ge_oor_addrs[ge.idx]))

    # --- DRAM callbacks ---------------------------------------------------

    def sink_space(self, ch: Channel) -> int:
        depths = self.cfg.queue_depths
        ge = ch.ge
        if ch.kind == _CH_INSTR:
            return depths["instr"] - len(ge.instr_q) - ch.reserved
        if ch.kind == _CH_TABLE:
            return depths["table"] - len(ge.table_q) - ch.reserved
        if ch.kind == _CH_OORADDR:
            return depths["oor"] - len(self.oor_staging[ge.idx]) - ch.reserved
        if ch.kind == _CH_OORDATA:
            return depths["oor"] - len(ge.oor_q) - ch.reserved
        return 0

    def fetchable_oor(self, ch: Channel, want: int, cycle: int) -> int:
        """How many staged OoR addresses can fetch now, preserving stream
        order. 0 means the head wire's spill has not landed (retry with
        penalty); -1 means no addresses have arrived yet."""
        staging = self.oor_staging[ch.ge.idx]
        if not staging:
            return -1
        count = 0
        for k in range(min(want, len(staging))):
            if self.dram_valid[staging[k]] > cycle:
                break
            count += 1
        return count

    def take_oor(self, ch: Channel, count: int):
        staging = self.oor_staging[ch.ge.idx]
        payload = []
        for _ in range(count):
            addr = staging.popleft()
            payload.append((addr, self.values[addr] if self.functional else None))
        return payload

    def deliver(self, ch: Channel, payload, cycle: int):
        ge = ch.ge
        if ch.kind == _CH_INSTR:
            ge.instr_q.extend(payload)
        elif ch.kind == _CH_TABLE:
            ge.table_q.extend(payload)
        elif ch.kind == _CH_OORADDR:
            self.oor_staging[ge.idx].extend(payload)
        elif ch.kind == _CH_OORDATA:
            ge.oor_q.extend(payload)
        else:  # drain completions land in DRAM
            for kind, ident, value in payload:
                if kind == "wire":
                    self.dram_valid[ident] = cycle
                else:
                    self.tables_out[ident] = value

    def count_bytes(self, klass: str, nbytes: int):
        self.bytes[klass] += nbytes

    # --- pipeline phases --------------------------------------------------

    def _commit(self, ge: _GE, fl: _Flight, cycle: int) -> bool:
        """Try to enter writeback: window advance, outbound space, SWW write."""
        sww = self.sww
        while fl.out >= sww.window_base + self.n:
            departing = sww.window_base // self.h
            if self.writes_left[departing] or self.readers_left[departing]:
                return False
            window_advance(sww, sww.window_base + self.n)
            self.window_advances += 1
        need = 0
        if fl.op != OP_NOP:
            if fl.live:
                need += 1
            if self.garbler and fl.op == OP_AND:
                need += 1
        if need and not self.cfg.ideal_memory:
            if len(ge.outbound) + need > self.cfg.wb_buffer_entries:
                return False
        if fl.op != OP_NOP:
            slot = fl.out % self.n
            if sww.valid[slot]:
                raise SimulationError(
                    f"slot {slot} written twice in one residency generation"
                )
            sww.valid[slot] = True
            if self.garbler and fl.op == OP_AND:
                if self.cfg.ideal_memory:
                    self.tables_out[fl.table_idx] = fl.table
                    self.count_bytes("tables_out", 32)
                else:
                    ge.outbound.append(("table", fl.table_idx, 32, fl.table))
            if fl.live:
                if self.cfg.ideal_memory:
                    self.dram_valid[fl.out] = cycle
                    self.count_bytes("wires_out", 16)
                else:
                    ge.outbound.append(("wire", fl.out, 16, fl.value))
        self.writes_left[fl.out // self.h] -= 1
        return True

    def _wb_phase(self, ge: _GE, cycle: int) -> bool:
        pipe = ge.wb_pipe
        tail = pipe[-1]
        if tail is not None:
            ge.retired += 1
            self.retired_total += 1
            if self.first_retire < 0:
                self.first_retire = cycle
            self.last_retire = cycle
            if self.trace is not None:
                self.trace[tail.pos] = (
                    ge.idx, tail.fetch_c, tail.dispatch_c, tail.done_c, cycle
                )
            pipe[-1] = None
        for i in range(len(pipe) - 1, 0, -1):
            if pipe[i] is None:
                pipe[i] = pipe[i - 1]
                pipe[i - 1] = None
        blocked = False
        if pipe[0] is None and ge.next_wb < len(ge.positions):
            fl = ge.complete.get(ge.positions[ge.next_wb])
            if fl is not None:
                if self._commit(ge, fl, cycle):
                    del ge.complete[fl.pos]
                    ge.next_wb += 1
                    pipe[0] = fl
                else:
                    blocked = True
        return blocked

    def _exec_phase(self, ge: _GE, cycle: int):
        for pipe in (ge.and_pipe, ge.xor_pipe):
            while pipe and pipe[0][0] <= cycle:
                _, fl = pipe.popleft()
                if self.cfg.zero_compute and self.functional:
                    fl.value = self.values[fl.out]
                    if fl.pos in self.zc_tables:
                        fl.table_idx, fl.table = self.zc_tables[fl.pos]
                elif self.functional and fl.op != OP_NOP:
                    if fl.op == OP_XOR:
                        fl.value = fl.v0 ^ fl.v1
                    elif self.garbler:
                        wc0, tg, te = garble_and_raw(self.delta, fl.v0, fl.v1, fl.src)
                        fl.value = wc0
                        fl.table = (tg, te)
                        fl.table_idx = self.table_of[fl.pos]
                    else:
                        tg, te = fl.table
                        fl.value = eval_and_raw(fl.v0, fl.v1, tg, te, fl.src)
                    self.values[fl.out] = fl.value
                fl.done_c = cycle
                self.ready[fl.out] = cycle
                ge.complete[fl.pos] = fl

    def _dispatch(self, ge: _GE, cycle: int) -> bool:
        """Move r3 into an execute unit; True means an operand stalled it."""
        fl = ge.r3
        if fl is None:
            return False
        if len(ge.complete) >= self.complete_cap:
            return False  # completion buffer full; backpressure, not a hazard
        if not self.cfg.zero_compute:
            ready = self.ready
            if fl.in0 and ready[fl.in0] > cycle:
                return True
            if fl.in1 and ready[fl.in1] > cycle:
                return True
        base = self.sww.window_base
        for operand in (fl.in0, fl.in1):
            if operand:
                if operand < base and not self.cfg.zero_compute:
                    raise SimulationError(
                        f"instruction {fl.pos} read wire {operand} after it left "
                        f"the window (base {base}); compiler contract violated"
                    )
                self.readers_left[operand // self.h] -= 1
        if self.functional:
            if fl.in0:
                fl.v0 = self.values[fl.in0]
            if fl.in1:
                fl.v1 = self.values[fl.in1]
        fl.dispatch_c = cycle
        if fl.op == OP_AND:
            ge.and_pipe.append((cycle + self.and_lat, fl))
        else:
            ge.xor_pipe.append((cycle + self.xor_lat, fl))
        ge.r3 = None
        return False

    def _read_phase(self, ge: _GE, cycle: int, bank_load) -> str | None:
        stall = STALL_OPERAND if self._dispatch(ge, cycle) else None
        rmid = ge.rmid
        if ge.r3 is None and rmid[-1] is not None:
            ge.r3 = rmid[-1]
            rmid[-1] = None
        for i in range(len(rmid) - 1, 0, -1):
            if rmid[i] is None:
                rmid[i] = rmid[i - 1]
                rmid[i - 1] = None
        fl = ge.r1
        if fl is not None and rmid[0] is None:
            moved, cause = self._try_issue_reads(ge, fl, cycle, bank_load)
            if moved:
                rmid[0] = fl
                ge.r1 = None
            elif stall is None:
                stall = cause
        return stall

    def _try_issue_reads(self, ge: _GE, fl: _Flight, cycle, bank_load):
        """R1: queue pops (OoR wires, table) and bank arbitration."""
        if fl.op == OP_NOP:
            return True, None
        n_oor = (1 if fl.in0 == 0 else 0) + (1 if fl.in1 == 0 else 0)
        if n_oor and self.sched_mode:
            # scheduling run: queues idealized, but a wire can only sit in
            # the queue once its producer has executed
            for addr in (fl.oor0, fl.oor1):
                if addr and addr > self.num_inputs and self.ready[addr] > cycle:
                    return False, STALL_QUEUE
        elif n_oor:
            if len(ge.oor_q) < n_oor:
                self._check_oor_underflow(ge, fl)
                return False, STALL_QUEUE
            # same producer-exists rule for prefilled (ideal memory) queues
            for k in range(n_oor):
                addr, _ = ge.oor_q[k]
                if addr > self.num_inputs and self.ready[addr] > cycle:
                    return False, STALL_QUEUE
        if fl.op == OP_AND and not self.garbler and not self.sched_mode:
            if not ge.table_q:
                self._check_table_underflow(ge, fl)
                return False, STALL_QUEUE
        if not self.cfg.zero_compute:
            # grant bank reads per operand; a grant sticks across cycles, so
            # two same-bank operands serialize instead of wedging the stage
            for which in (0, 1):
                operand = fl.in0 if which == 0 else fl.in1
                done = fl.read0 if which == 0 else fl.read1
                if done or not operand:
                    continue
                bank = operand % self.num_banks
                if bank_load.get(bank, 0) + 1 > self.bank_cap:
                    continue
                bank_load[bank] = bank_load.get(bank, 0) + 1
                if which == 0:
                    fl.read0 = True
                else:
                    fl.read1 = True
            if (fl.in0 and not fl.read0) or (fl.in1 and not fl.read1):
                return False, STALL_BANK
        if not self.sched_mode:
            if fl.in0 == 0:
                addr, val = ge.oor_q.popleft()
                ge.oor_consumed += 1
                fl.v0 = self.values[addr] if val is None and self.functional else val
            if fl.in1 == 0:
                addr, val = ge.oor_q.popleft()
                ge.oor_consumed += 1
                fl.v1 = self.values[addr] if val is None and self.functional else val
            if fl.op == OP_AND and not self.garbler:
                idx, tg, te = ge.table_q.popleft()
                ge.table_consumed += 1
                fl.table = (tg, te)
                fl.table_idx = idx
        return True, None

    def _check_oor_underflow(self, ge: _GE, fl: _Flight):
        if self.dram is None:
            # prefilled queue holds the whole remaining stream
            raise SimulationError(
                f"GE {ge.idx}: OoR wire stream underflow at instruction {fl.pos}"
            )
        for ch in self.dram.channels:
            if ch.ge is ge and ch.kind in (_CH_OORADDR, _CH_OORDATA):
                if not ch.exhausted():
                    return
        if self.oor_staging.get(ge.idx):
            return
        raise SimulationError(
            f"GE {ge.idx}: OoR wire stream underflow at instruction {fl.pos}"
        )

    def _check_table_underflow(self, ge: _GE, fl: _Flight):
        if self.dram is None:
            raise SimulationError(
                f"GE {ge.idx}: table stream underflow at instruction {fl.pos}"
            )
        for ch in self.dram.channels:
            if ch.ge is ge and ch.kind == _CH_TABLE and not ch.exhausted():
                return
        raise SimulationError(
            f"GE {ge.idx}: table stream underflow at instruction {fl.pos}"
        )

    def _front_phase(self, ge: _GE, cycle: int) -> bool:
        dp = ge.decode_pipe
        if ge.r1 is None and dp[-1] is not None:
            ge.r1 = dp[-1]
            dp[-1] = None
        for i in range(len(dp) - 1, 0, -1):
            if dp[i] is None:
                dp[i] = dp[i - 1]
                dp[i - 1] = None
        if ge.fetch is not None and dp[0] is None:
            dp[0] = ge.fetch
            ge.fetch = None
        blocked = False
        if ge.fetch is None:
            if self.sched_mode:
                if self.global_cursor < len(self.p.instructions):
                    pos = self.global_cursor
                    self.global_cursor += 1
                    fl = _Flight(pos, self.p.instructions[pos])
                    fl.fetch_c = cycle
                    ge.fetch = fl
                    self.assignment[ge.idx].append(pos)
            elif ge.instr_q:
                fl = ge.instr_q.popleft()
                fl.fetch_c = cycle
                ge.fetch = fl
            elif self._instr_pending(ge):
                blocked = True
        return blocked

    def _instr_pending(self, ge: _GE) -> bool:
        if self.dram is None:
            return False
        for ch in self.dram.channels:
            if ch.ge is ge and ch.kind == _CH_INSTR and not ch.exhausted():
                return True
        return False

    def _drains_pending(self) -> bool:
        if self.dram is not None:
            for ch in self.dram.channels:
                if ch.kind == _CH_DRAIN and ch.inflight:
                    return True
        return any(ge.outbound for ge in self.ges)

    # --- main loop ---------------------------------------------------------

    def run(self) -> int:
        total = (
            len(self.p.instructions)
            if self.sched_mode
            else sum(len(ge.positions) for ge in self.ges)
        )
        cycle = -1
        while True:
            if self.retired_total >= total and not self._drains_pending():
                break
            cycle += 1
            if self.dram is not None:
                self.dram.tick(cycle)
            bank_load = {}
            stalls = []
            for ge in self.ges:
                stalls.append(STALL_WBACK if self._wb_phase(ge, cycle) else None)
            for ge in self.ges:
                self._exec_phase(ge, cycle)
            for g, ge in enumerate(self.ges):
                cause = self._read_phase(ge, cycle, bank_load)
                if stalls[g] is None and cause is not None:
                    stalls[g] = cause
            for g, ge in enumerate(self.ges):
                if self._front_phase(ge, cycle) and stalls[g] is None:
                    stalls[g] = STALL_QUEUE
            busy_now = 0
            for g, ge in enumerate(self.ges):
                cause = stalls[g]
                if cause is not None:
                    ge.stalls[cause] += 1
                elif ge.in_flight():
                    ge.busy += 1
                    busy_now += 1
                else:
                    ge.idle += 1
            if self.occupancy is not None:
                self.occupancy.append(
                    (busy_now, self.retired_total, self.sww.window_base)
                )
            mark = (self.retired_total, self._dma_position())
            if mark != self._progress_mark:
                self._progress_mark = mark
                self.last_progress_cycle = cycle
            elif cycle - self.last_progress_cycle > self.cfg.deadlock_cycles:
                raise SimulationError(self._deadlock_dump(cycle))
        return cycle + 1

    def _dma_position(self) -> int:
        return -1 if self.dram is None else self.dram.events

    def _deadlock_dump(self, cycle: int) -> str:
        lines = [
            f"no progress for {self.cfg.deadlock_cycles} cycles at cycle {cycle}",
            f"window base {self.sww.window_base}, retired {self.retired_total}",
        ]
        for ge in self.ges:
            lines.append(
                f"GE{ge.idx}: fetch={ge.fetch.pos if ge.fetch else '-'}"
                f" r1={ge.r1.pos if ge.r1 else '-'}"
                f" r3={ge.r3.pos if ge.r3 else '-'}"
                f" exec={len(ge.and_pipe) + len(ge.xor_pipe)}"
                f" complete={sorted(ge.complete)[:4]}"
                f" iq={len(ge.instr_q)} tq={len(ge.table_q)} oq={len(ge.oor_q)}"
                f" out={len(ge.outbound)}"
            )
        return "deadlock: " + "; ".join(lines)


def scheduling_run(p: Program, num_ges: int, w: WindowModel) -> list[list[int]]:
    """Ideal-memory run of the timing model that records which GE accepts
    each instruction; the compiler replays this assignment."""
    cfg = SimConfig(
        mode="evaluator",
        num_ges=num_ges,
        sww_bytes=w.capacity_wires * 16,
        ideal_memory=True,
    )
    assignment: list[list[int]] = [[] for _ in range(num_ges)]
    eng = _Engine(p, cfg, assignment, image=None, streams=None, sched_mode=True)
    eng.run()
    return assignment


def _check_queue_discipline(eng: _Engine):
    st = eng.streams
    if st is None:
        return
    for ge in eng.ges:
        want_oor = len(st.ge_oor_addrs[ge.idx])
        if ge.oor_consumed != want_oor:
            raise SimulationError(
                f"GE {ge.idx} consumed {ge.oor_consumed} OoR wires,"
                f" stream has {want_oor}"
            )
        if not eng.garbler:
            want_tab = len(st.ge_tables[ge.idx])
            if ge.table_consumed != want_tab:
                raise SimulationError(
                    f"GE {ge.idx} consumed {ge.table_consumed} tables,"
                    f" stream has {want_tab}"
                )


def simulate(
    p: Program, streams: StreamSet, image: DramImage, cfg: SimConfig
) -> SimResult:
    """Run the full machine model and return timing plus functional outputs."""
    if streams.num_ges != cfg.num_ges:
        raise SimulationError(
            f"stream set was scheduled for {streams.num_ges} GEs,"
            f" config has {cfg.num_ges}"
        )
    eng = _Engine(
        p, cfg, streams.ge_instr_positions, image, streams, sched_mode=False
    )
    total_cycles = eng.run()
    _check_queue_discipline(eng)

    if eng.garbler:
        for idx, t in enumerate(eng.tables_out):
            if t is None:
                raise SimulationError(f"garbler table {idx} never produced")
    output_wires = sorted(p.output_addrs)
    output_labels = [eng.values[p.output_addrs[w]] for w in output_wires]
    digest = hashlib.sha256()
    for lab in output_labels:
        digest.update(lab.to_bytes(16, "little"))
    if eng.garbler:
        for tg, te in eng.tables_out:
            digest.update(tg.to_bytes(16, "little"))
            digest.update(te.to_bytes(16, "little"))

    retired = eng.retired_total
    steady_span = eng.last_retire - eng.first_retire + 1 if retired else 0
    per_ge = [
        {
            "busy": ge.busy,
            "idle": ge.idle,
            "retired": ge.retired,
            "stalls": {c: ge.stalls[c] for c in STALL_CAUSES},
            "utilization": round(ge.busy / total_cycles, 6) if total_cycles else 0.0,
        }
        for ge in eng.ges
    ]
    report = SimReport(
        mode=cfg.mode,
        num_ges=cfg.num_ges,
        total_cycles=total_cycles,
        retired=retired,
        gates_per_cycle=round(retired / total_cycles, 6) if total_cycles else 0.0,
        steady_gates_per_cycle=(
            round(retired / steady_span, 6) if steady_span else 0.0
        ),
        window_advances=eng.window_advances,
        oor_retries=eng.oor_retries,
        live_count=sum(1 for ins in p.instructions if ins.live),
        oor_count=sum(len(s) for s in streams.ge_oor_addrs),
        bytes=dict(eng.bytes),
        per_ge=per_ge,
        functional_digest=digest.hexdigest(),
    )
    return SimResult(
        report=report,
        output_labels=output_labels,
        tables=list(eng.tables_out) if eng.garbler else None,
        trace=eng.trace,
        occupancy=eng.occupancy,
    )


def parse_config_text(text: str, base: SimConfig | None = None) -> SimConfig:
    """key=value config format: mode, ges, sww_bytes, banks_per_ge,
    dram.bandwidth, dram.latency, dram.burst, dram.preset, queue.instr/
    table/oor, pipeline.<field>, ideal_memory, zero_compute."""
    cfg = base or SimConfig()
    dram = cfg.dram
    pipe = cfg.pipeline
    queues = dict(cfg.queue_depths)
    fields: dict = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SimulationError(f"config line {ln}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key == "mode":
            fields["mode"] = val
        elif key in ("ges", "num_ges"):
            fields["num_ges"] = int(val)
        elif key == "sww_bytes":
            fields["sww_bytes"] = int(val)
        elif key == "banks_per_ge":
            fields["banks_per_ge"] = int(val)
        elif key == "wb_buffer_entries":
            fields["wb_buffer_entries"] = int(val)
        elif key in ("ideal_memory", "zero_compute", "collect_trace"):
            fields[key] = val.lower() in ("1", "true", "yes")
        elif key == "dram.bandwidth":
            dram = replace(dram, bandwidth_bytes_per_cycle=float(val))
        elif key == "dram.latency":
            dram = replace(dram, base_latency_cycles=int(val))
        elif key == "dram.burst":
            dram = replace(dram, burst_bytes=int(val))
        elif key == "dram.preset":
            dram = {"ddr4": DDR4, "hbm2": HBM2}[val.lower()]
        elif key.startswith("queue."):
            queues[key.split(".", 1)[1]] = int(val)
        elif key.startswith("pipeline."):
            pipe = replace(pipe, **{key.split(".", 1)[1]: int(val)})
        else:
            raise SimulationError(f"config line {ln}: unknown key {key!r}")
    return replace(cfg, dram=dram, pipeline=pipe, queue_depths=queues, **fields)
