"""Command-line driver: generate circuits, compile, garble, simulate,
compare runs, and benchmark the AES backends.

Every run is determined by a manifest (circuit or generator spec, pass
list, machine config, seed, output directory): running the same manifest
twice produces byte-identical stream files and reports. The run exit code
is 0 only when the simulator's functional outputs match the software
garbler oracle.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from pathlib import Path

from . import compiler as cp
from . import gcrypto as gc
from . import isa
from . import netlist as nl
from . import simulator as sim
from .cryptocore import BACKEND, Prf, get_backend, sigma


class CliError(Exception):
    pass


# --- manifest handling ------------------------------------------------------


def _gen_from_spec(spec: str) -> nl.Circuit:
    """Generator spec syntax: kind[:arg,arg,...], e.g. adder:8 or
    matmul_like:4,8."""
    kind, _, argstr = spec.partition(":")
    args = [int(a) for a in argstr.split(",") if a] if argstr else []
    return nl.gen_test_circuit(kind, *args)


def load_circuit(manifest: dict) -> nl.Circuit:
    if manifest.get("circuit"):
        return nl.parse_bristol(Path(manifest["circuit"]).read_text())
    if manifest.get("gen"):
        return _gen_from_spec(manifest["gen"])
    raise CliError("manifest needs either 'circuit' (path) or 'gen' (kind:args)")


def sim_config(manifest: dict) -> sim.SimConfig:
    cfg = sim.SimConfig(
        mode=manifest.get("mode", "evaluator"),
        num_ges=int(manifest.get("ges", 1)),
        sww_bytes=int(manifest.get("sww_bytes", 2 * 1024 * 1024)),
    )
    dram = manifest.get("dram", "ddr4")
    if isinstance(dram, str):
        cfg.dram = {"ddr4": sim.DDR4, "hbm2": sim.HBM2}[dram.lower()]
    else:
        cfg.dram = sim.DramConfig(
            bandwidth_bytes_per_cycle=float(dram.get("bandwidth", 35.2)),
            base_latency_cycles=int(dram.get("latency", 100)),
            burst_bytes=int(dram.get("burst", 64)),
        )
    if manifest.get("config_file"):
        cfg = sim.parse_config_text(Path(manifest["config_file"]).read_text(), cfg)
    cfg.ideal_memory = bool(manifest.get("ideal_memory", False))
    cfg.zero_compute = bool(manifest.get("zero_compute", False))
    if manifest.get("banks_per_ge"):
        cfg.banks_per_ge = int(manifest["banks_per_ge"])
    return cfg


def manifest_inputs(manifest: dict, circuit: nl.Circuit) -> list[int]:
    """Input bits; 'random' draws them from the manifest seed."""
    spec = manifest.get("inputs", "random")
    if isinstance(spec, list):
        if len(spec) != len(circuit.inputs):
            raise CliError(f"need {len(circuit.inputs)} input bits")
        return [b & 1 for b in spec]
    if spec == "zero":
        return [0] * len(circuit.inputs)
    if spec == "random":
        prf = Prf(int(manifest.get("seed", 0)) ^ 0xA5A5)
        return [prf.value(i) & 1 for i in range(len(circuit.inputs))]
    raise CliError(f"bad inputs spec {spec!r}")


def compile_program(circuit: nl.Circuit, manifest: dict):
    """Assemble and run the pass list; returns (program, streams, window)."""
    passes = manifest.setdefault("passes", "full,rename,esw,oor")
    ges = int(manifest.get("ges", 1))
    if "sched" not in passes:
        passes = f"{passes},sched:{ges}"
    sww_bytes = int(manifest.get("sww_bytes", 2 * 1024 * 1024))
    w = cp.WindowModel.from_bytes(sww_bytes)
    p = isa.assemble(circuit)
    p, streams = cp.apply_passes(p, passes, w)
    if streams is None:
        streams = cp.schedule_ges(p, ges, w)
    p.meta["pass_list"] = passes
    return p, streams, w


def address_width(p: isa.Program) -> int:
    max_addr = p.num_inputs + len(p.instructions)
    return max(isa.DEFAULT_ADDR_WIDTH, max_addr.bit_length())


# --- artifact writers -------------------------------------------------------


def write_compile_artifacts(outdir: Path, p, streams, w, report) -> list[Path]:
    outdir.mkdir(parents=True, exist_ok=True)
    width = address_width(p)
    instr_path = outdir / "instructions.bin"
    with instr_path.open("wb") as f:
        for positions in streams.ge_instr_positions:
            f.write(isa.encode_stream((p.instructions[k] for k in positions), width))
    tables_path = outdir / "table_order.bin"
    with tables_path.open("wb") as f:
        for tabs in streams.ge_tables:
            for idx in tabs:
                f.write(idx.to_bytes(4, "little"))
    oor_path = outdir / "oor_addrs.bin"
    with oor_path.open("wb") as f:
        for addrs in streams.ge_oor_addrs:
            for a in addrs:
                f.write(a.to_bytes(4, "little"))
    meta_path = outdir / "program.meta"
    lines = [
        f"num_inputs={p.num_inputs}",
        f"const_addr={p.const_addr if p.const_addr is not None else 0}",
        f"num_instructions={len(p.instructions)}",
        f"address_width={width}",
        f"window_wires={w.capacity_wires}",
        f"passes={','.join(p.meta.get('passes', []))}",
        f"segment_size={p.meta.get('segment_size', 0)}",
        f"num_ges={streams.num_ges}",
        "ge_instr_counts=" + ",".join(str(len(s)) for s in streams.ge_instr_positions),
        "ge_table_counts=" + ",".join(str(len(s)) for s in streams.ge_tables),
        "ge_oor_counts=" + ",".join(str(len(s)) for s in streams.ge_oor_addrs),
    ]
    meta_path.write_text("\n".join(lines) + "\n")
    traffic_path = outdir / "traffic.json"
    traffic_path.write_text(report.to_json() + "\n")
    return [instr_path, tables_path, oor_path, meta_path, traffic_path]


def write_garble_artifacts(outdir: Path, ctx, gcirc) -> list[Path]:
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    tables_path = outdir / "tables.bin"
    with tables_path.open("wb") as f:
        for t in gcirc.tables:
            f.write(t.to_bytes())
    paths.append(tables_path)
    for name, labels in (
        ("input_zero_labels.bin", gcirc.input_zero_labels),
        ("output_zero_labels.bin", gcirc.output_zero_labels),
    ):
        path = outdir / name
        with path.open("wb") as f:
            for lab in labels:
                f.write(lab.to_bytes(16, "little"))
        paths.append(path)
    delta_path = outdir / "delta.bin"
    delta_path.write_bytes(ctx.delta.to_bytes(16, "little"))
    paths.append(delta_path)
    return paths


# --- subcommands ------------------------------------------------------------


def cmd_gen(args) -> int:
    circ = _gen_from_spec(args.kind)
    text = nl.write_bristol(circ)
    if args.out:
        Path(args.out).write_text(text)
        _, stats = nl.level_schedule(circ)
        print(
            f"{args.kind}: {len(circ.gates)} gates, {circ.num_wires} wires, "
            f"{stats.num_levels} levels, ilp {stats.avg_ilp:.1f}, "
            f"and% {100 * stats.and_fraction:.1f} -> {args.out}"
        )
    else:
        sys.stdout.write(text)
    return 0


def _manifest_from_args(args) -> dict:
    manifest = {}
    if getattr(args, "manifest", None):
        manifest = json.loads(Path(args.manifest).read_text())
    for key in (
        "circuit", "gen", "passes", "mode", "ges", "sww_bytes", "seed",
        "dram", "out", "ideal_memory", "zero_compute", "config_file",
        "occupancy",
    ):
        val = getattr(args, key, None)
        if val is not None:
            manifest[key] = val
    manifest.setdefault("seed", 1)
    return manifest


def cmd_compile(args) -> int:
    manifest = _manifest_from_args(args)
    circ = load_circuit(manifest)
    p, streams, w = compile_program(circ, manifest)
    report = cp.traffic_report(p, w, streams)
    outdir = Path(manifest.get("out", "compiled"))
    paths = write_compile_artifacts(outdir, p, streams, w, report)
    print(f"wrote {len(paths)} files to {outdir}")
    for path in paths:
        print(f"  {path.name}: {path.stat().st_size} bytes")
    return 0


def cmd_garble(args) -> int:
    manifest = _manifest_from_args(args)
    circ = load_circuit(manifest)
    ctx, gcirc = gc.garble_circuit(circ, int(manifest["seed"]))
    outdir = Path(manifest.get("out", "garbled"))
    paths = write_garble_artifacts(outdir, ctx, gcirc)
    print(
        f"garbled {len(circ.gates)} gates ({len(gcirc.tables)} tables) "
        f"into {outdir}"
    )
    for path in paths:
        print(f"  {path.name}: {path.stat().st_size} bytes")
    return 0


def run_manifest(manifest: dict) -> tuple[sim.SimResult, bool, dict]:
    """Compile, garble, simulate, and verify one manifest."""
    circ = load_circuit(manifest)
    seed = int(manifest.get("seed", 1))
    cfg = sim_config(manifest)
    # a config file may override GE count or window size; the compiled
    # streams must match the machine they run on
    manifest["ges"] = cfg.num_ges
    manifest["sww_bytes"] = cfg.sww_bytes
    p, streams, w = compile_program(circ, manifest)
    ctx, gcirc = gc.garble_circuit(circ, seed)
    bits = manifest_inputs(manifest, circ)
    if cfg.mode == "evaluator":
        active = gc.encode_inputs(ctx, bits)
        image = sim.dram_image_for_evaluator(p, gcirc, active)
    else:
        image = sim.dram_image_for_garbler(p, ctx)
    if manifest.get("occupancy"):
        cfg.collect_occupancy = True
    result = sim.simulate(p, streams, image, cfg)
    if cfg.mode == "evaluator":
        want = gc.eval_circuit(circ, gcirc, gc.encode_inputs(ctx, bits))
        ok = result.output_labels == want
        decoded = gc.decode_outputs(ctx, result.output_labels) if ok else None
        if ok and decoded != nl.plaintext_evaluate(circ, bits):
            ok = False
    else:
        ok = result.tables == [(t.t_g, t.t_e) for t in gcirc.tables] and (
            result.output_labels == list(gcirc.output_zero_labels)
        )
    traffic = cp.traffic_report(p, w, streams)
    extras = {
        "traffic": traffic,
        "program": p,
        "streams": streams,
        "window": w,
        "inputs": bits,
    }
    return result, ok, extras


def cmd_run(args) -> int:
    manifest = _manifest_from_args(args)
    t0 = time.perf_counter()
    result, ok, extras = run_manifest(manifest)
    dt = time.perf_counter() - t0
    report = result.report
    outdir = Path(manifest.get("out", "run"))
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "report.json").write_text(report.to_json() + "\n")
    (outdir / "traffic.json").write_text(extras["traffic"].to_json() + "\n")
    (outdir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    )
    write_compile_artifacts(
        outdir, extras["program"], extras["streams"], extras["window"],
        extras["traffic"],
    )
    if result.occupancy is not None:
        (outdir / "occupancy.csv").write_text(sim.occupancy_csv(result.occupancy))
    status = "verified" if ok else "ORACLE MISMATCH"
    print(
        f"{manifest.get('gen') or manifest.get('circuit')}: "
        f"{report.retired} gates in {report.total_cycles} cycles "
        f"({report.gates_per_cycle:.3f}/cycle), {status}, {dt:.2f}s wall"
    )
    if not ok:
        print("functional outputs differ from the software oracle", file=sys.stderr)
        return 1
    return 0


_REPORT_COLUMNS = (
    "run", "mode", "passes", "ges", "sww_bytes", "dram_bw", "total_cycles",
    "gates_per_cycle", "steady_gates_per_cycle", "live_wires", "oor_wires",
    "total_wires", "bytes_wires_in", "bytes_wires_out", "bytes_tables",
    "bytes_instructions", "bytes_oor_addrs",
)


def cmd_report(args) -> int:
    rows = []
    for d in args.rundirs:
        run = Path(d)
        try:
            rep = json.loads((run / "report.json").read_text())
            traffic = json.loads((run / "traffic.json").read_text())
            manifest = json.loads((run / "manifest.json").read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise CliError(f"missing or corrupt report files in {d}: {e}") from None
        dram = manifest.get("dram", "ddr4")
        dram_bw = (
            {"ddr4": 35.2, "hbm2": 512.0}.get(str(dram).lower(), dram)
            if isinstance(dram, str)
            else dram.get("bandwidth")
        )
        rows.append(
            {
                "run": run.name,
                "mode": rep["mode"],
                "passes": manifest.get("passes", ""),
                "ges": rep["num_ges"],
                "sww_bytes": manifest.get("sww_bytes", 2 * 1024 * 1024),
                "dram_bw": dram_bw,
                "total_cycles": rep["total_cycles"],
                "gates_per_cycle": rep["gates_per_cycle"],
                "steady_gates_per_cycle": rep["steady_gates_per_cycle"],
                "live_wires": traffic["live_wires"],
                "oor_wires": traffic["oor_wires"],
                "total_wires": traffic["total_wires"],
                "bytes_wires_in": traffic["bytes_wires_in"],
                "bytes_wires_out": traffic["bytes_wires_out"],
                "bytes_tables": traffic["bytes_tables"],
                "bytes_instructions": traffic["bytes_instructions"],
                "bytes_oor_addrs": traffic["bytes_oor_addrs"],
            }
        )
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_REPORT_COLUMNS)
    for row in rows:
        writer.writerow([row[c] for c in _REPORT_COLUMNS])
    text = buf.getvalue()
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {len(rows)} rows to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_sweep(args) -> int:
    manifest = _manifest_from_args(args)
    key, _, values = args.vary.partition("=")
    if not values:
        raise CliError("sweep --vary takes key=v1,v2,... (e.g. ges=1,2,4,8,16)")
    base_out = Path(manifest.get("out", "sweep"))
    worst = 0
    for raw in values.split(","):
        sub = dict(manifest)
        sub[key] = int(raw) if raw.isdigit() else raw
        sub["out"] = str(base_out / f"{key}_{raw}")
        ns = argparse.Namespace(manifest=None)
        for k, v in sub.items():
            setattr(ns, k, v)
        worst = max(worst, cmd_run(ns))
    return worst


def cmd_bench(args) -> int:
    """Compare the pure and compiled AES backends on the label hash and on
    whole-circuit garbling."""
    backends = ["pure"]
    if BACKEND == "compiled":
        backends.append("compiled")
    else:
        print("compiled backend not built (python setup_ext.py build_ext --inplace)")
    rounds = args.rounds
    results = {}
    for name in backends:
        be = get_backend(name)
        t0 = time.perf_counter()
        x = 0x0123456789ABCDEF0123456789ABCDEF
        for i in range(rounds):
            rk = be.expand_key(2 * i)
            s = sigma(x)
            x = be.encrypt_block(rk, s) ^ s
        dt = time.perf_counter() - t0
        results[name] = rounds / dt
        print(f"{name:9s} {rounds} rekeyed hashes in {dt:.3f}s "
              f"({rounds / dt:,.0f} hashes/s)")
    circ = nl.gen_test_circuit("adder", 32)
    t0 = time.perf_counter()
    reps = max(1, args.rounds // 2000)
    for r in range(reps):
        gc.garble_circuit(circ, r)
    dt = time.perf_counter() - t0
    gates = reps * len(circ.gates)
    print(
        f"garble adder(32) x{reps} with {BACKEND} backend: "
        f"{gates / dt:,.0f} gates/s"
    )
    if len(results) == 2:
        print(f"compiled/pure speedup: {results['compiled'] / results['pure']:.1f}x")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="garblesim",
        description="garbled-circuit compiler and accelerator model",
    )
    sub = ap.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen", help="generate a benchmark circuit (Bristol text)")
    g.add_argument("kind", help="kind:args, e.g. adder:8, matmul_like:4,8")
    g.add_argument("--out", help="output file (stdout if omitted)")
    g.set_defaults(fn=cmd_gen)

    def common(p, with_mode=True):
        p.add_argument("--manifest", help="JSON manifest; flags override it")
        p.add_argument("--circuit", help="Bristol circuit file")
        p.add_argument("--gen", help="generator spec kind:args")
        p.add_argument("--passes", help="e.g. full,rename,esw,oor,sched:16")
        p.add_argument("--ges", type=int, help="gate engine count")
        p.add_argument("--sww-bytes", dest="sww_bytes", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--config-file", dest="config_file",
                       help="key=value machine config file")
        if with_mode:
            p.add_argument("--mode", choices=["garbler", "evaluator"])
            p.add_argument("--dram", choices=["ddr4", "hbm2"])
            p.add_argument("--ideal-memory", dest="ideal_memory",
                           action="store_const", const=True)
            p.add_argument("--zero-compute", dest="zero_compute",
                           action="store_const", const=True)
            p.add_argument("--occupancy", action="store_const", const=True,
                           help="write a per-cycle occupancy.csv trace")

    c = sub.add_parser("compile", help="compile a circuit to stream files")
    common(c, with_mode=False)
    c.set_defaults(fn=cmd_compile)

    gb = sub.add_parser("garble", help="garble a circuit to table/label files")
    common(gb, with_mode=False)
    gb.set_defaults(fn=cmd_garble)

    r = sub.add_parser("run", help="compile + garble + simulate + verify")
    common(r)
    r.set_defaults(fn=cmd_run)

    rep = sub.add_parser("report", help="tabulate completed runs as CSV")
    rep.add_argument("rundirs", nargs="+")
    rep.add_argument("--out", help="CSV path (stdout if omitted)")
    rep.set_defaults(fn=cmd_report)

    sw = sub.add_parser("sweep", help="run a manifest over a parameter range")
    common(sw)
    sw.add_argument("--vary", required=True, help="key=v1,v2,... e.g. ges=1,4,16")
    sw.set_defaults(fn=cmd_sweep)

    b = sub.add_parser("bench", help="compare pure vs compiled AES backends")
    b.add_argument("--rounds", type=int, default=20000)
    b.set_defaults(fn=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (CliError, cp.CompileError, sim.SimulationError, nl.CircuitError,
            isa.IsaError, gc.GarbleError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
