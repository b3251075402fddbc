"""Accelerator instruction set: assembler, bit-exact encoding, and a
plaintext interpreter used as a semantics oracle in tests.

An instruction carries an operation (NOP/XOR/AND), two input wire addresses,
and a live bit; the output address is implied by program position. Address 0
never names a real wire: a zero operand tells the hardware to pop the
out-of-range wire queue instead of reading the wire window.

Address space: 0 reserved, primary inputs at 1..num_inputs (the constant-one
wire, materialized only when the circuit contains INV gates, sits at the
highest input address), gate outputs from num_inputs+1 upward. Operand fields
in the 64-bit word hold full wire addresses and are validated against the
configured address width (17 bits for the 2 MB wire window).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .netlist import Circuit

OP_NOP = 0
OP_XOR = 1
OP_AND = 2

OP_NAMES = {OP_NOP: "NOP", OP_XOR: "XOR", OP_AND: "AND"}

DEFAULT_ADDR_WIDTH = 17  # 2 MB window / 16 B per wire = 131072 slots
_CONTAINER_ADDR_BITS = 30

INSTRUCTION_BYTES = 8
WIRE_BYTES = 16
TABLE_BYTES = 32
OOR_ADDR_BYTES = 4


class IsaError(Exception):
    pass


class AddressOverflowError(IsaError):
    pass


@dataclass
class Instruction:
    op: int
    in0: int
    in1: int
    live: bool = True
    # not encoded: the output address travels with the instruction through
    # reordering and is re-derived from position by renaming
    out_addr: int = field(default=0, compare=False)
    # provenance: source gate index in the circuit (tweak + table identity)
    src_gate: int = field(default=-1, compare=False)
    # original addresses of operands that were lowered to the OoR queue
    oor0: int | None = field(default=None, compare=False)
    oor1: int | None = field(default=None, compare=False)


@dataclass
class Program:
    instructions: list[Instruction]
    num_inputs: int  # address-space inputs, including the constant-one wire
    input_addrs: dict[int, int]  # circuit input wire id -> address
    output_addrs: dict[int, int]  # circuit output wire id -> address
    const_addr: int | None = None
    meta: dict = field(default_factory=dict)

    def passes(self) -> list[str]:
        return self.meta.setdefault("passes", [])

    def is_renamed(self) -> bool:
        base = self.num_inputs + 1
        return all(
            ins.out_addr == base + k for k, ins in enumerate(self.instructions)
        )

    def and_positions(self) -> list[int]:
        return [k for k, ins in enumerate(self.instructions) if ins.op == OP_AND]

    def table_index_of(self) -> dict[int, int]:
        """Map program position -> table index (AND rank in source-gate order)."""
        order = sorted(self.and_positions(), key=lambda k: self.instructions[k].src_gate)
        ranks = {pos: rank for rank, pos in enumerate(order)}
        return {pos: ranks[pos] for pos in self.and_positions()}


def assemble(c: Circuit) -> Program:
    """Lower a circuit to the baseline program (netlist file order).

    INV(x) becomes XOR(x, one_wire). Output addresses are assigned by
    program position, inputs sit at 1..num_inputs in declaration order, and
    every live bit starts true.
    """
    n_in = len(c.inputs)
    const_addr = n_in + 1 if c.has_inv() else None
    num_inputs = n_in + (1 if const_addr else 0)
    addr_of = {w: i + 1 for i, w in enumerate(c.inputs)}
    instrs: list[Instruction] = []
    for k, g in enumerate(c.gates):
        out = num_inputs + 1 + k
        if g.op == "AND":
            ins = Instruction(OP_AND, addr_of[g.inputs[0]], addr_of[g.inputs[1]])
        elif g.op == "XOR":
            ins = Instruction(OP_XOR, addr_of[g.inputs[0]], addr_of[g.inputs[1]])
        else:
            ins = Instruction(OP_XOR, addr_of[g.inputs[0]], const_addr)
        ins.out_addr = out
        ins.src_gate = k
        addr_of[g.output] = out
        instrs.append(ins)
    return Program(
        instructions=instrs,
        num_inputs=num_inputs,
        input_addrs={w: w + 1 for w in c.inputs},
        output_addrs={w: addr_of[w] for w in c.outputs},
        const_addr=const_addr,
        meta={"passes": ["baseline"], "num_gates": len(c.gates)},
    )


def encode_instruction(
    ins: Instruction, position: int, addr_width: int = DEFAULT_ADDR_WIDTH
) -> int:
    """Pack into the 64-bit word: op bits [1:0], live bit [2], in0 bits
    [32:3], in1 bits [62:33], bit 63 zero."""
    if not 0 < addr_width <= _CONTAINER_ADDR_BITS:
        raise IsaError(f"address width {addr_width} outside 1..{_CONTAINER_ADDR_BITS}")
    limit = 1 << addr_width
    for name, a in (("in0", ins.in0), ("in1", ins.in1)):
        if not 0 <= a < limit:
            raise AddressOverflowError(
                f"instruction {position}: {name}={a} exceeds {addr_width}-bit addresses"
            )
    if ins.op not in OP_NAMES:
        raise IsaError(f"instruction {position}: bad opcode {ins.op}")
    return ins.op | (int(ins.live) << 2) | (ins.in0 << 3) | (ins.in1 << 33)


def decode_instruction(word: int) -> Instruction:
    if not 0 <= word < 1 << 63:
        raise IsaError("instruction word out of 64-bit range (bit 63 must be 0)")
    op = word & 0b11
    if op not in OP_NAMES:
        raise IsaError(f"bad opcode bits {op:#04b}")
    return Instruction(
        op=op,
        in0=(word >> 3) & ((1 << _CONTAINER_ADDR_BITS) - 1),
        in1=(word >> 33) & ((1 << _CONTAINER_ADDR_BITS) - 1),
        live=bool(word & 0b100),
    )


def encode_stream(instructions, addr_width: int = DEFAULT_ADDR_WIDTH) -> bytes:
    """Little-endian 64-bit words, one per instruction."""
    out = bytearray()
    for k, ins in enumerate(instructions):
        out += encode_instruction(ins, k, addr_width).to_bytes(8, "little")
    return bytes(out)


def decode_stream(raw: bytes) -> list[Instruction]:
    if len(raw) % 8:
        raise IsaError("instruction stream length not a multiple of 8")
    return [
        decode_instruction(int.from_bytes(raw[o : o + 8], "little"))
        for o in range(0, len(raw), 8)
    ]


def interpret(p: Program, input_bits, oor_addrs=None) -> list[int]:
    """Plaintext semantics of a program; testing oracle only.

    `oor_addrs` supplies the original addresses of zero operands in program
    order (required once the OoR-lowering pass has run).
    """
    circuit_inputs = sorted(p.input_addrs)
    if len(input_bits) != len(circuit_inputs):
        raise IsaError(f"expected {len(circuit_inputs)} input bits")
    env: dict[int, int] = {}
    for w, b in zip(circuit_inputs, input_bits):
        env[p.input_addrs[w]] = b & 1
    if p.const_addr is not None:
        env[p.const_addr] = 1
    oor_iter = iter(oor_addrs or ())

    def fetch(addr: int) -> int:
        if addr == 0:
            try:
                addr = next(oor_iter)
            except StopIteration:
                raise IsaError("OoR address stream underflow") from None
        try:
            return env[addr]
        except KeyError:
            raise IsaError(f"read of undefined address {addr}") from None

    for ins in p.instructions:
        if ins.op == OP_NOP:
            continue
        a = fetch(ins.in0)
        b = fetch(ins.in1)
        env[ins.out_addr] = (a ^ b) if ins.op == OP_XOR else (a & b)
    leftover = next(oor_iter, None)
    if leftover is not None:
        raise IsaError("OoR address stream overflow")
    return [env[p.output_addrs[w]] for w in sorted(p.output_addrs)]


def program_copy(p: Program) -> Program:
    return Program(
        instructions=[replace(ins) for ins in p.instructions],
        num_inputs=p.num_inputs,
        input_addrs=dict(p.input_addrs),
        output_addrs=dict(p.output_addrs),
        const_addr=p.const_addr,
        meta={**p.meta, "passes": list(p.meta.get("passes", []))},
    )
