"""Shared pipeline helpers for the test suite."""

import random

import pytest

from garblesim import compiler as cp
from garblesim import gcrypto as gc
from garblesim import isa
from garblesim import netlist as nl
from garblesim import simulator as sim


def window_for(p: isa.Program, wires: int | None = None) -> cp.WindowModel:
    """A window that covers the whole program unless a size is forced."""
    return cp.WindowModel(wires if wires else cp._default_window_wires(p))


def compile_circuit(circ, passes="full,rename,esw,oor", window_wires=None, ges=1):
    p = isa.assemble(circ)
    w = window_for(p, window_wires)
    p, streams = cp.apply_passes(p, passes, w)
    if streams is None:
        streams = cp.schedule_ges(p, ges, w)
    return p, streams, w


def sim_once(
    circ,
    bits,
    seed=42,
    mode="evaluator",
    ges=1,
    passes="full,rename,esw,oor",
    window_wires=None,
    **cfg_kwargs,
):
    """Compile, garble, and simulate one input; returns (result, ctx, gcirc)."""
    p, streams, w = compile_circuit(circ, passes, window_wires, ges)
    ctx, gcirc = gc.garble_circuit(circ, seed)
    if mode == "evaluator":
        image = sim.dram_image_for_evaluator(p, gcirc, gc.encode_inputs(ctx, bits))
    else:
        image = sim.dram_image_for_garbler(p, ctx)
    cfg = sim.SimConfig(
        mode=mode, num_ges=ges, sww_bytes=w.capacity_wires * 16, **cfg_kwargs
    )
    return sim.simulate(p, streams, image, cfg), ctx, gcirc


def random_bits(rng: random.Random, n: int) -> list[int]:
    return [rng.randrange(2) for _ in range(n)]


def random_circuit(rng: random.Random, n_gates: int, n_inputs: int = 3) -> nl.Circuit:
    """Random well-formed circuit; outputs are the last few wires."""
    b = nl._Builder()
    wires = [b.new_input() for _ in range(n_inputs)]
    for _ in range(n_gates):
        op = rng.choice(("AND", "XOR", "INV"))
        if op == "INV":
            wires.append(b.add(op, rng.choice(wires)))
        else:
            wires.append(b.add(op, rng.choice(wires), rng.choice(wires)))
    n_out = rng.randrange(1, min(4, n_gates) + 1)
    gate_outs = wires[n_inputs:]
    outs = rng.sample(gate_outs, min(n_out, len(gate_outs)))
    return b.build(outs)


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)
