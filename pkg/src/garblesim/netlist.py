"""Boolean netlists: Bristol-format I/O, validation, levelization, plaintext
evaluation, and synthetic circuit generators.

Wire-id conventions (classic Bristol dialect):
  - ids are dense integers starting at 0, primary inputs first
  - each gate defines exactly one fresh output wire, so
    num_wires = num_inputs + num_gates
  - declared circuit outputs are the trailing wire ids

The stored gate order is a topological order; every input of a gate is a
primary input or the output of an earlier gate. All parse/generate paths
run the validator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

GATE_OPS = ("AND", "XOR", "INV")
_ARITY = {"AND": 2, "XOR": 2, "INV": 1}


class CircuitError(Exception):
    """Base class for netlist problems."""


class BristolSyntaxError(CircuitError):
    def __init__(self, line: int, column: int, message: str):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class BristolSemanticError(CircuitError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class Gate:
    op: str
    inputs: tuple[int, ...]
    output: int


@dataclass(frozen=True)
class Circuit:
    num_wires: int
    inputs: tuple[int, ...]
    outputs: tuple[int, ...]
    gates: tuple[Gate, ...]
    # bit widths of the declared input/output values, for file round-trips
    input_widths: tuple[int, ...] = field(default=(), compare=False)
    output_widths: tuple[int, ...] = field(default=(), compare=False)

    def and_count(self) -> int:
        return sum(1 for g in self.gates if g.op == "AND")

    def has_inv(self) -> bool:
        return any(g.op == "INV" for g in self.gates)


@dataclass(frozen=True)
class LevelStats:
    num_levels: int
    gates_per_level: tuple[int, ...]
    and_fraction: float
    avg_ilp: float


def validate(c: Circuit) -> Circuit:
    """Check the structural invariants; raises BristolSemanticError."""
    n_in = len(c.inputs)
    if tuple(c.inputs) != tuple(range(n_in)):
        raise BristolSemanticError(0, "primary inputs must be wires 0..n_inputs-1")
    if c.num_wires != n_in + len(c.gates):
        raise BristolSemanticError(
            0, f"num_wires {c.num_wires} != inputs {n_in} + gates {len(c.gates)}"
        )
    n_out = len(c.outputs)
    if tuple(c.outputs) != tuple(range(c.num_wires - n_out, c.num_wires)):
        raise BristolSemanticError(0, "circuit outputs must be the trailing wire ids")
    defined = [False] * c.num_wires
    for w in c.inputs:
        defined[w] = True
    for k, g in enumerate(c.gates):
        line = k + 4  # gates start on line 4 of the file form
        if g.op not in _ARITY:
            raise BristolSemanticError(line, f"unsupported gate tag {g.op!r}")
        if len(g.inputs) != _ARITY[g.op]:
            raise BristolSemanticError(line, f"{g.op} takes {_ARITY[g.op]} inputs")
        for w in g.inputs:
            if not 0 <= w < c.num_wires:
                raise BristolSemanticError(line, f"wire {w} out of range")
            if not defined[w]:
                raise BristolSemanticError(line, f"wire {w} used before definition")
        if not 0 <= g.output < c.num_wires:
            raise BristolSemanticError(line, f"wire {g.output} out of range")
        if defined[g.output]:
            raise BristolSemanticError(line, f"wire {g.output} multiply defined")
        defined[g.output] = True
    if not all(defined):
        missing = defined.index(False)
        raise BristolSemanticError(0, f"wire {missing} is never defined")
    return c


def _parse_value_header(tokens: list[str], line: int) -> tuple[int, ...]:
    # "<n> <bits...>" with len(bits) == n; a lone token is the old one-value
    # dialect, read as a single value of that many bits
    if len(tokens) == 1:
        return (int(tokens[0]),)
    n = int(tokens[0])
    if len(tokens) - 1 != n:
        raise BristolSyntaxError(
            line, len(tokens), f"expected {n} width fields, found {len(tokens) - 1}"
        )
    return tuple(int(t) for t in tokens[1:])


def parse_bristol(text: str) -> Circuit:
    """Parse classic Bristol circuit text into a validated Circuit."""
    lines = text.splitlines()
    rows: list[tuple[int, list[str]]] = []
    for ln, raw in enumerate(lines, start=1):
        toks = raw.split()
        if toks:
            rows.append((ln, toks))
    if len(rows) < 3:
        raise BristolSyntaxError(len(lines), 0, "missing header lines")

    def ints(row, expect=None):
        ln, toks = row
        out = []
        for col, t in enumerate(toks, start=1):
            try:
                v = int(t)
            except ValueError:
                raise BristolSyntaxError(ln, col, f"expected integer, found {t!r}") from None
            if v < 0:
                raise BristolSyntaxError(ln, col, "negative value")
            out.append(v)
        if expect is not None and len(out) != expect:
            raise BristolSyntaxError(ln, len(toks), f"expected {expect} fields")
        return out

    num_gates, num_wires = ints(rows[0], expect=2)
    in_widths = _parse_value_header(rows[1][1], rows[1][0])
    out_widths = _parse_value_header(rows[2][1], rows[2][0])
    n_in = sum(in_widths)
    n_out = sum(out_widths)

    gate_rows = rows[3:]
    if len(gate_rows) != num_gates:
        ln = gate_rows[-1][0] if gate_rows else rows[2][0]
        raise BristolSyntaxError(ln, 0, f"declared {num_gates} gates, found {len(gate_rows)}")

    gates = []
    for ln, toks in gate_rows:
        if len(toks) < 4:
            raise BristolSyntaxError(ln, len(toks), "short gate line")
        op = toks[-1]
        if op not in GATE_OPS:
            raise BristolSemanticError(ln, f"unsupported gate tag {op!r}")
        nums = ints((ln, toks[:-1]))
        ni, no = nums[0], nums[1]
        if no != 1:
            raise BristolSyntaxError(ln, 2, "gates must have exactly one output")
        if len(nums) != 2 + ni + 1:
            raise BristolSyntaxError(ln, len(toks), f"expected {ni} inputs and 1 output")
        gates.append(Gate(op, tuple(nums[2 : 2 + ni]), nums[2 + ni]))

    c = Circuit(
        num_wires=num_wires,
        inputs=tuple(range(n_in)),
        outputs=tuple(range(num_wires - n_out, num_wires)),
        gates=tuple(gates),
        input_widths=in_widths,
        output_widths=out_widths,
    )
    return validate(c)


def write_bristol(c: Circuit) -> str:
    """Emit a validated Circuit in the classic Bristol dialect."""
    in_widths = c.input_widths or (1,) * len(c.inputs)
    out_widths = c.output_widths or (1,) * len(c.outputs)
    lines = [
        f"{len(c.gates)} {c.num_wires}",
        f"{len(in_widths)} " + " ".join(str(w) for w in in_widths),
        f"{len(out_widths)} " + " ".join(str(w) for w in out_widths),
    ]
    for g in c.gates:
        ins = " ".join(str(w) for w in g.inputs)
        lines.append(f"{len(g.inputs)} 1 {ins} {g.output} {g.op}")
    return "\n".join(lines) + "\n"


def plaintext_evaluate(c: Circuit, input_bits) -> list[int]:
    """Evaluate with ordinary Boolean semantics; the end-to-end reference."""
    if len(input_bits) != len(c.inputs):
        raise CircuitError(
            f"expected {len(c.inputs)} input bits, got {len(input_bits)}"
        )
    values = [0] * c.num_wires
    for w, b in zip(c.inputs, input_bits):
        values[w] = b & 1
    for g in c.gates:
        if g.op == "XOR":
            values[g.output] = values[g.inputs[0]] ^ values[g.inputs[1]]
        elif g.op == "AND":
            values[g.output] = values[g.inputs[0]] & values[g.inputs[1]]
        else:
            values[g.output] = values[g.inputs[0]] ^ 1
    return [values[w] for w in c.outputs]


def level_schedule(c: Circuit) -> tuple[list[int], LevelStats]:
    """ASAP dependence levels: inputs at 0, level(g) = 1 + max(producers)."""
    wire_level = [0] * c.num_wires
    gate_levels = []
    for g in c.gates:
        lvl = 1 + max((wire_level[w] for w in g.inputs), default=0)
        wire_level[g.output] = lvl
        gate_levels.append(lvl)
    num_levels = max(gate_levels, default=0)
    per_level = [0] * num_levels
    for lvl in gate_levels:
        per_level[lvl - 1] += 1
    n = len(c.gates)
    stats = LevelStats(
        num_levels=num_levels,
        gates_per_level=tuple(per_level),
        and_fraction=(c.and_count() / n) if n else 0.0,
        avg_ilp=(n / num_levels) if num_levels else 0.0,
    )
    return gate_levels, stats


class _Builder:
    """Accumulates gates on scratch ids, then renumbers into canonical form
    (inputs first, declared outputs on the trailing ids, gate order kept)."""

    def __init__(self):
        self.n_inputs = 0
        self.gates: list[tuple[str, tuple[int, ...]]] = []
        self._next = 0

    def new_input(self) -> int:
        assert not self.gates, "declare inputs before gates"
        self.n_inputs += 1
        self._next += 1
        return self._next - 1

    def add(self, op: str, *ins: int) -> int:
        out = self._next
        self._next += 1
        self.gates.append((op, ins))
        return out

    def build(self, outputs, in_widths=(), out_widths=()) -> Circuit:
        num_wires = self._next
        out_set = list(dict.fromkeys(outputs))
        if len(out_set) != len(outputs):
            raise CircuitError("duplicate output wire")
        remap = [-1] * num_wires
        for w in range(self.n_inputs):
            remap[w] = w
        tail_start = num_wires - len(out_set)
        for i, w in enumerate(out_set):
            if w < self.n_inputs:
                raise CircuitError("primary input declared as circuit output")
            remap[w] = tail_start + i
        nxt = self.n_inputs
        for k, (_, _) in enumerate(self.gates):
            w = self.n_inputs + k
            if remap[w] < 0:
                while nxt in range(tail_start, num_wires):
                    nxt += 1
                remap[w] = nxt
                nxt += 1
        gates = tuple(
            Gate(op, tuple(remap[w] for w in ins), remap[self.n_inputs + k])
            for k, (op, ins) in enumerate(self.gates)
        )
        c = Circuit(
            num_wires=num_wires,
            inputs=tuple(range(self.n_inputs)),
            outputs=tuple(range(tail_start, num_wires)),
            gates=gates,
            input_widths=tuple(in_widths) or (1,) * self.n_inputs,
            output_widths=tuple(out_widths) or (1,) * len(out_set),
        )
        return validate(c)


def _gen_chain(length: int, op: str = "AND") -> Circuit:
    b = _Builder()
    x = b.new_input()
    y = b.new_input()
    cur = b.add(op, x, y)
    for i in range(1, length):
        cur = b.add(op, cur, (x, y)[i % 2])
    return b.build([cur])


def _gen_parallel(count: int, op: str = "AND") -> Circuit:
    b = _Builder()
    ins = [b.new_input() for _ in range(2 * count)]
    outs = [b.add(op, ins[2 * i], ins[2 * i + 1]) for i in range(count)]
    return b.build(outs)


def _gen_xor_tree(width: int) -> Circuit:
    if width < 2 or width & (width - 1):
        raise CircuitError("xor_tree width must be a power of two >= 2")
    b = _Builder()
    layer = [b.new_input() for _ in range(width)]
    while len(layer) > 1:
        layer = [b.add("XOR", layer[i], layer[i + 1]) for i in range(0, len(layer), 2)]
    return b.build(layer)


def _ripple_add(b: _Builder, xs, ys, carry_out: bool = True):
    """Ripple-carry sum of two equal-width little-endian bit vectors."""
    assert len(xs) == len(ys)
    out = []
    c = None
    for i, (x, y) in enumerate(zip(xs, ys)):
        t = b.add("XOR", x, y)
        if c is None:
            out.append(t)
            c = b.add("AND", x, y)
        else:
            out.append(b.add("XOR", t, c))
            last = i == len(xs) - 1
            if not last or carry_out:
                u = b.add("AND", t, c)
                v = b.add("AND", x, y)
                c = b.add("XOR", u, v)
    return out, c


def _gen_adder(bits: int) -> Circuit:
    b = _Builder()
    xs = [b.new_input() for _ in range(bits)]
    ys = [b.new_input() for _ in range(bits)]
    sums, carry = _ripple_add(b, xs, ys, carry_out=True)
    return b.build(
        sums + [carry],
        in_widths=(bits, bits),
        out_widths=(bits + 1,),
    )


def _mul_trunc(b: _Builder, xs, ys):
    """Truncating shift-add multiplier over `bits`-wide values (mod 2^bits)."""
    bits = len(xs)
    acc = [b.add("AND", xs[i], ys[0]) for i in range(bits)]
    for s in range(1, bits):
        pp = [b.add("AND", xs[i], ys[s]) for i in range(bits - s)]
        hi, _ = _ripple_add(b, acc[s:], pp, carry_out=False)
        acc = acc[:s] + hi
    return acc


def _gen_matmul_like(dim: int = 4, bits: int = 8) -> Circuit:
    """dim x dim matrix product with `bits`-wide truncating arithmetic:
    an array of shift-add multipliers feeding adder trees. High ILP and
    heavy reuse of the operand wires, like real matrix kernels."""
    b = _Builder()
    a = [[[b.new_input() for _ in range(bits)] for _ in range(dim)] for _ in range(dim)]
    bm = [[[b.new_input() for _ in range(bits)] for _ in range(dim)] for _ in range(dim)]
    prods = {}
    for i in range(dim):
        for j in range(dim):
            for k in range(dim):
                prods[i, j, k] = _mul_trunc(b, a[i][k], bm[k][j])
    outs = []
    for i in range(dim):
        for j in range(dim):
            terms = [prods[i, j, k] for k in range(dim)]
            while len(terms) > 1:
                nxt = []
                for t in range(0, len(terms) - 1, 2):
                    s, _ = _ripple_add(b, terms[t], terms[t + 1], carry_out=False)
                    nxt.append(s)
                if len(terms) % 2:
                    nxt.append(terms[-1])
                terms = nxt
            outs.extend(terms[0])
    widths = (bits,) * (2 * dim * dim)
    return b.build(outs, in_widths=widths, out_widths=(bits,) * (dim * dim))


def _gen_fanout_chain(depth: int = 256, fanout: int = 3, reach: int = 8) -> Circuit:
    """Low-ILP chain network with wide, delayed fanout: a long dependence
    chain emitted first, then `fanout` passes of side gates that each re-read
    the whole chain. Dependence levels stay narrow (1 + fanout wide) while
    the emission order revisits old wires from far away."""
    b = _Builder()
    x = b.new_input()
    y = b.new_input()
    chain = [b.add("AND", x, y)]
    for d in range(1, depth):
        op = "XOR" if d % 3 else "AND"
        chain.append(b.add(op, chain[-1], (x, y)[d % 2]))
    sides = []
    for f in range(fanout):
        for d in range(depth):
            other = chain[max(0, d - reach)]
            sides.append(b.add("XOR", chain[d], other))
    # fold each side pass to a single output so the output count stays small
    outs = [chain[-1]]
    for f in range(fanout):
        pass_slice = sides[f * depth : (f + 1) * depth]
        acc = pass_slice[0]
        for s in pass_slice[1:]:
            acc = b.add("XOR", acc, s)
        outs.append(acc)
    return b.build(outs)


_GENERATORS = {
    "chain": _gen_chain,
    "parallel": _gen_parallel,
    "xor_tree": _gen_xor_tree,
    "adder": _gen_adder,
    "matmul_like": _gen_matmul_like,
    "fanout_chain": _gen_fanout_chain,
}


def gen_test_circuit(kind: str, *args, **kwargs) -> Circuit:
    """Build a synthetic benchmark circuit.

    Kinds: chain(length, op) | parallel(count, op) | xor_tree(width) |
    adder(bits) | matmul_like(dim, bits) | fanout_chain(depth, fanout, reach).
    """
    try:
        gen = _GENERATORS[kind]
    except KeyError:
        raise CircuitError(
            f"unsupported circuit kind {kind!r} (have {sorted(_GENERATORS)})"
        ) from None
    for v in args:
        if isinstance(v, int) and v <= 0:
            raise CircuitError("size parameters must be positive")
    for v in kwargs.values():
        if isinstance(v, int) and v <= 0:
            raise CircuitError("size parameters must be positive")
    return gen(*args, **kwargs)


def bits_from_int(value: int, width: int) -> list[int]:
    """Little-endian bit vector of `width` bits."""
    return [(value >> i) & 1 for i in range(width)]


def int_from_bits(bits) -> int:
    return sum(b << i for i, b in enumerate(bits))
