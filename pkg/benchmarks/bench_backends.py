#!/usr/bin/env python3
"""Benchmark the compiled AES core against the pure-Python fallback.

Measures the primitive the garbler actually spends its time in (a full
key expansion followed by one whitened block encryption per hash), then
whole-circuit garbling and evaluation throughput, and finally an end-to-end
simulator run so the backend choice can be judged in context.

Usage:
    python benchmarks/bench_backends.py [--rounds N]
"""

import argparse
import random
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from garblesim import compiler as cp  # noqa: E402
from garblesim import gcrypto as gc  # noqa: E402
from garblesim import isa  # noqa: E402
from garblesim import netlist as nl  # noqa: E402
from garblesim import simulator as sim  # noqa: E402
from garblesim.cryptocore import BACKEND, get_backend, sigma  # noqa: E402


def bench_hash(backend_name: str, rounds: int) -> float:
    be = get_backend(backend_name)
    x = 0x0123456789ABCDEF0123456789ABCDEF
    t0 = time.perf_counter()
    for i in range(rounds):
        rk = be.expand_key(2 * i)
        s = sigma(x)
        x = be.encrypt_block(rk, s) ^ s
    return rounds / (time.perf_counter() - t0)


def bench_garble(circ, reps: int) -> tuple[float, float]:
    t0 = time.perf_counter()
    for r in range(reps):
        ctx, gcirc = gc.garble_circuit(circ, r)
    g_rate = reps * len(circ.gates) / (time.perf_counter() - t0)
    bits = [0] * len(circ.inputs)
    active = gc.encode_inputs(ctx, bits)
    t0 = time.perf_counter()
    for _ in range(reps):
        gc.eval_circuit(circ, gcirc, active)
    e_rate = reps * len(circ.gates) / (time.perf_counter() - t0)
    return g_rate, e_rate


def bench_simulator(ges: int = 8) -> tuple[int, float]:
    rng = random.Random(0)
    circ = nl.gen_test_circuit("matmul_like", 4, 8)
    p = isa.assemble(circ)
    wires = 2048
    w = cp.WindowModel(wires)
    p, _ = cp.apply_passes(p, "full,rename,esw,oor", w)
    streams = cp.schedule_ges(p, ges, w)
    ctx, gcirc = gc.garble_circuit(circ, 1)
    bits = [rng.randrange(2) for _ in circ.inputs]
    image = sim.dram_image_for_evaluator(p, gcirc, gc.encode_inputs(ctx, bits))
    cfg = sim.SimConfig(
        mode="evaluator", num_ges=ges, sww_bytes=wires * 16, dram=sim.HBM2
    )
    t0 = time.perf_counter()
    res = sim.simulate(p, streams, image, cfg)
    return res.report.total_cycles, time.perf_counter() - t0


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--rounds", type=int, default=30_000)
    args = ap.parse_args()

    print(f"active backend: {BACKEND}")
    rates = {}
    names = ["pure"] + (["compiled"] if BACKEND == "compiled" else [])
    for name in names:
        rates[name] = bench_hash(name, args.rounds)
        print(f"  {name:9s} label hash: {rates[name]:>12,.0f} hashes/s")
    if len(rates) == 2:
        print(f"  speedup: {rates['compiled'] / rates['pure']:.1f}x")
    else:
        print("  (build the compiled core: python setup_ext.py build_ext --inplace)")

    for kind, params, reps in (("adder", (32,), 50), ("matmul_like", (4, 8), 2)):
        circ = nl.gen_test_circuit(kind, *params)
        g_rate, e_rate = bench_garble(circ, reps)
        label = f"{kind}{params}"
        print(
            f"  {label:18s} garble {g_rate:>11,.0f} gates/s, "
            f"evaluate {e_rate:>11,.0f} gates/s"
        )

    cycles, wall = bench_simulator()
    print(
        f"  simulator (matmul_like 4x8, 8 GEs, HBM2): {cycles} cycles "
        f"in {wall:.2f}s wall ({cycles / wall:,.0f} cycles/s)"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
