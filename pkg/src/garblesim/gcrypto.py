"""Labels, FreeXOR, and Half-Gate garbling/evaluation.

Labels are 128-bit integers whose least-significant bit doubles as the
point-and-permute select bit. A single global offset R (lsb forced to 1)
relates the two labels of every wire: W1 = W0 ^ R. XOR gates are label
XORs with no table; each AND gate produces one 32-byte table of two
128-bit halves (t_g, t_e) via the Half-Gate construction, hashed with the
re-keyed tweak scheme in cryptocore (tweaks 2i and 2i+1 for gate index i).

Whole-circuit garble/evaluate/encode/decode below are the functional
reference the machine model is checked against, bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .cryptocore import MASK128, Prf, tccr_hash, tccr_hash_pair
from .netlist import Circuit

_TAG_DELTA = 0
_TAG_WIRE = 1 << 120


class GarbleError(Exception):
    pass


class CorruptLabelError(GarbleError):
    """An output label matched neither candidate during decode."""


@dataclass(frozen=True)
class GarbledTable:
    t_g: int
    t_e: int

    def to_bytes(self) -> bytes:
        return self.t_g.to_bytes(16, "little") + self.t_e.to_bytes(16, "little")

    @classmethod
    def from_bytes(cls, raw: bytes) -> "GarbledTable":
        if len(raw) != 32:
            raise GarbleError(f"garbled table must be 32 bytes, got {len(raw)}")
        return cls(
            int.from_bytes(raw[:16], "little"), int.from_bytes(raw[16:], "little")
        )


@dataclass
class GarblerContext:
    delta: int
    seed: int
    zero_labels: dict[int, int] = field(default_factory=dict)
    input_wires: tuple[int, ...] = ()
    output_wires: tuple[int, ...] = ()
    one_wire: int | None = None
    _prf: Prf | None = field(default=None, repr=False)

    def prf(self) -> Prf:
        if self._prf is None:
            self._prf = Prf(self.seed)
        return self._prf


@dataclass(frozen=True)
class GarbledCircuit:
    tables: tuple[GarbledTable, ...]
    input_zero_labels: tuple[int, ...]
    output_zero_labels: tuple[int, ...]
    # active label of the public constant-one wire; present iff the source
    # circuit contains INV gates (lowered to XOR with this wire)
    one_active_label: int | None = None


def gen_delta(seed: int) -> int:
    """Derive the global offset R from a seed; lsb forced to 1."""
    return Prf(seed).value(_TAG_DELTA) | 1


def new_context(seed: int) -> GarblerContext:
    return GarblerContext(delta=gen_delta(seed), seed=seed & MASK128)


def gen_label(ctx: GarblerContext, wire: int) -> int:
    """Generate and record the zero-label of a wire (W1 is W0 ^ delta)."""
    if wire in ctx.zero_labels:
        raise GarbleError(f"wire {wire} already has a label")
    w0 = ctx.prf().value(_TAG_WIRE | wire)
    ctx.zero_labels[wire] = w0
    return w0


def garble_and(
    ctx: GarblerContext, wa0: int, wb0: int, gate_index: int
) -> tuple[int, GarbledTable]:
    """Garbler's Half-Gate for one AND: 4 hash calls, 2 key expansions."""
    wc0, t_g, t_e = garble_and_raw(ctx.delta, wa0, wb0, gate_index)
    return wc0, GarbledTable(t_g, t_e)


def garble_and_raw(r: int, wa0: int, wb0: int, gate_index: int):
    pa = wa0 & 1
    pb = wb0 & 1
    j = 2 * gate_index
    ha0, ha1 = tccr_hash_pair(wa0, wa0 ^ r, j)
    hb0, hb1 = tccr_hash_pair(wb0, wb0 ^ r, j + 1)
    t_g = ha0 ^ ha1 ^ (r if pb else 0)
    wg0 = ha0 ^ (t_g if pa else 0)
    t_e = hb0 ^ hb1 ^ wa0
    we0 = hb0 ^ ((t_e ^ wa0) if pb else 0)
    return wg0 ^ we0, t_g, t_e


def eval_and(wa: int, wb: int, table: GarbledTable, gate_index: int) -> int:
    """Evaluator's Half-Gate for one AND: 2 hash calls, 2 key expansions."""
    return eval_and_raw(wa, wb, table.t_g, table.t_e, gate_index)


def eval_and_raw(wa: int, wb: int, t_g: int, t_e: int, gate_index: int) -> int:
    j = 2 * gate_index
    wg = tccr_hash(wa, j) ^ (t_g if wa & 1 else 0)
    we = tccr_hash(wb, j + 1) ^ ((t_e ^ wa) if wb & 1 else 0)
    return wg ^ we


def free_xor(wa: int, wb: int) -> int:
    """XOR gate on labels; same function for garbler and evaluator."""
    return wa ^ wb


def garble_circuit(c: Circuit, seed: int) -> tuple[GarblerContext, GarbledCircuit]:
    """Garble a whole circuit; tables come out in AND-gate order.

    INV gates are free: their output zero-label is W0_in ^ W0_one where the
    constant-one wire (id = num_wires) carries the public value 1.
    """
    ctx = new_context(seed)
    for w in c.inputs:
        gen_label(ctx, w)
    one_active = None
    if c.has_inv():
        ctx.one_wire = c.num_wires
        one0 = gen_label(ctx, ctx.one_wire)
        one_active = one0 ^ ctx.delta
    z = ctx.zero_labels
    tables = []
    for i, g in enumerate(c.gates):
        if g.op == "XOR":
            z[g.output] = z[g.inputs[0]] ^ z[g.inputs[1]]
        elif g.op == "INV":
            z[g.output] = z[g.inputs[0]] ^ z[ctx.one_wire]
        else:
            wc0, table = garble_and(ctx, z[g.inputs[0]], z[g.inputs[1]], i)
            z[g.output] = wc0
            tables.append(table)
    ctx.input_wires = c.inputs
    ctx.output_wires = c.outputs
    gc = GarbledCircuit(
        tables=tuple(tables),
        input_zero_labels=tuple(z[w] for w in c.inputs),
        output_zero_labels=tuple(z[w] for w in c.outputs),
        one_active_label=one_active,
    )
    return ctx, gc


def eval_circuit(c: Circuit, gc: GarbledCircuit, active_input_labels) -> list[int]:
    """Evaluate on active labels, consuming tables strictly in AND order."""
    if len(active_input_labels) != len(c.inputs):
        raise GarbleError("one active label per primary input required")
    values: dict[int, int] = dict(zip(c.inputs, active_input_labels))
    next_table = 0
    for i, g in enumerate(c.gates):
        if g.op == "XOR":
            values[g.output] = values[g.inputs[0]] ^ values[g.inputs[1]]
        elif g.op == "INV":
            if gc.one_active_label is None:
                raise GarbleError("circuit has INV gates but no constant-one label")
            values[g.output] = values[g.inputs[0]] ^ gc.one_active_label
        else:
            if next_table >= len(gc.tables):
                raise GarbleError("table underflow: more AND gates than tables")
            t = gc.tables[next_table]
            next_table += 1
            values[g.output] = eval_and(
                values[g.inputs[0]], values[g.inputs[1]], t, i
            )
    if next_table != len(gc.tables):
        raise GarbleError("table overflow: fewer AND gates than tables")
    return [values[w] for w in c.outputs]


def tables_from_bytes(raw: bytes) -> tuple[GarbledTable, ...]:
    """Parse a raw table stream (concatenated 32-byte records)."""
    if len(raw) % 32:
        raise GarbleError("table stream length not a multiple of 32")
    return tuple(GarbledTable.from_bytes(raw[o : o + 32]) for o in range(0, len(raw), 32))


def labels_to_bytes(labels) -> bytes:
    return b"".join(lab.to_bytes(16, "little") for lab in labels)


def labels_from_bytes(raw: bytes) -> tuple[int, ...]:
    """Parse a raw label stream (16-byte little-endian records)."""
    if len(raw) % 16:
        raise GarbleError("label stream length not a multiple of 16")
    return tuple(
        int.from_bytes(raw[o : o + 16], "little") for o in range(0, len(raw), 16)
    )


def encode_inputs(ctx: GarblerContext, input_bits) -> list[int]:
    """Select W0 or W0 ^ R per input bit."""
    if len(input_bits) != len(ctx.input_wires):
        raise GarbleError("one bit per primary input required")
    return [
        ctx.zero_labels[w] ^ (ctx.delta if b & 1 else 0)
        for w, b in zip(ctx.input_wires, input_bits)
    ]


def decode_outputs(ctx: GarblerContext, active_output_labels) -> list[int]:
    """Map each output label back to its bit; reject foreign labels."""
    bits = []
    for w, label in zip(ctx.output_wires, active_output_labels):
        w0 = ctx.zero_labels[w]
        if label == w0:
            bits.append(0)
        elif label == w0 ^ ctx.delta:
            bits.append(1)
        else:
            raise CorruptLabelError(f"output wire {w}: label matches neither candidate")
    return bits
