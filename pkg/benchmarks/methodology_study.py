#!/usr/bin/env python3
"""Desk-scale performance methodology study.

Two experiments on the matmul-style benchmark:

1. Gate-engine scaling, 1 to 16 engines, under DDR4-class and HBM2-class
   bandwidth. DDR4 saturates almost immediately (the reordered program is
   bandwidth-bound), HBM2 keeps scaling.

2. Compute/traffic decomposition across window sizes and instruction
   orders: each cell reports the full run next to a compute-only run
   (idealized memory) and a traffic-only run (instant gates). The baseline
   order is compute-bound; full reordering minimizes compute time but
   spreads wire accesses and raises traffic time on small windows; segment
   reordering keeps the baseline's locality while recovering most of the
   parallelism.

Writes CSVs next to stdout tables.

Usage:
    python benchmarks/methodology_study.py [--out DIR]
"""

import argparse
import csv
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


class Study:
    def __init__(self, seed=7):
        self.circ = nl.gen_test_circuit("matmul_like", 4, 8)
        self.ctx, self.gcirc = gc.garble_circuit(self.circ, seed)
        rng = random.Random(seed)
        self.bits = [rng.randrange(2) for _ in self.circ.inputs]

    def cycles(self, ges, dram, passes="full,rename,esw,oor", wires=2048, **kw):
        p = isa.assemble(self.circ)
        w = cp.WindowModel(wires)
        p, _ = cp.apply_passes(p, passes, w)
        streams = cp.schedule_ges(p, ges, w)
        image = sim.dram_image_for_evaluator(
            p, self.gcirc, gc.encode_inputs(self.ctx, self.bits)
        )
        cfg = sim.SimConfig(
            mode="evaluator", num_ges=ges, sww_bytes=wires * 16, dram=dram, **kw
        )
        return sim.simulate(p, streams, image, cfg).report.total_cycles


def ge_scaling(study, outdir):
    print("== gate-engine scaling (matmul_like 4x8, 2048-wire window) ==")
    rows = []
    for name, dram in (("ddr4", sim.DDR4), ("hbm2", sim.HBM2)):
        cycles = {g: study.cycles(g, dram) for g in (1, 2, 4, 8, 16)}
        speed = cycles[1] / cycles[16]
        print(
            f"  {name}: "
            + "  ".join(f"{g}GE={c}" for g, c in cycles.items())
            + f"  (1->16 speedup {speed:.1f}x)"
        )
        for g, c in cycles.items():
            rows.append({"dram": name, "ges": g, "cycles": c})
    path = outdir / "ge_scaling.csv"
    with path.open("w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["dram", "ges", "cycles"])
        w.writeheader()
        w.writerows(rows)
    print(f"  -> {path}")


def decomposition(study, outdir):
    print("== compute/traffic decomposition (DDR4, 8 engines) ==")
    print("   order      window   full-run   compute-only   traffic-only")
    rows = []
    for wires in (1024, 2048, 4096):
        orders = (
            ("baseline", "rename,esw,oor"),
            ("segment", f"segment:{wires // 2},rename,esw,oor"),
            ("full", "full,rename,esw,oor"),
        )
        for name, passes in orders:
            full = study.cycles(8, sim.DDR4, passes, wires)
            compute = study.cycles(8, sim.DDR4, passes, wires, ideal_memory=True)
            traffic = study.cycles(8, sim.DDR4, passes, wires, zero_compute=True)
            print(
                f"   {name:9s} {wires:6d}   {full:8d}   {compute:12d}   {traffic:12d}"
            )
            rows.append(
                {
                    "order": name, "window_wires": wires, "full_run": full,
                    "compute_only": compute, "traffic_only": traffic,
                }
            )
    path = outdir / "decomposition.csv"
    with path.open("w", newline="") as f:
        w = csv.DictWriter(
            f,
            fieldnames=[
                "order", "window_wires", "full_run", "compute_only",
                "traffic_only",
            ],
        )
        w.writeheader()
        w.writerows(rows)
    print(f"  -> {path}")


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="benchmarks/results")
    args = ap.parse_args()
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    study = Study()
    ge_scaling(study, outdir)
    decomposition(study, outdir)
    print(f"total {time.perf_counter() - t0:.1f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
