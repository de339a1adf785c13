"""Single-shot measured runner, one process per sample.

The benchmark harness spawns this module once per measurement so that
startup cost, peak memory, and lifetime are attributable to exactly one
program on one engine.  Phase timings and the return value go to stdout
on the metrics protocol:

    METRIC startup_ms <float>
    METRIC exec_ms <float>
    METRIC return_value <int>

The startup phase covers everything up to the entry call: reading and
parsing the fixture, engine setup, and staging of initial memory.  The
exec phase is the entry call alone.  Engine errors are written to
stderr and reported through a nonzero exit status; a return value that
differs from the program's expected value is not an error here — the
harness owns that comparison.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from . import OffloadError
from .bench import staged_bytes


def _emit(name: str, value) -> None:
    print(f"METRIC {name} {value}")


def _run_ebpf(opts) -> None:
    from .asm import parse_patched
    from .vm import VmConfig, execute, instantiate, write_static_mem

    t0 = time.perf_counter()
    patched = parse_patched(Path(opts.fixture).read_text(encoding="utf-8"))
    config = VmConfig(fuel_limit=opts.fuel)
    instance = instantiate(patched, config, (opts.args[0], opts.args[1], 0))
    size = opts.static_mem_size or patched.static_mem_size
    staged = staged_bytes(opts.stage or "", size)
    if staged:
        write_static_mem(instance, 0, staged)
    t1 = time.perf_counter()
    outcome = execute(instance)
    t2 = time.perf_counter()
    _emit("startup_ms", (t1 - t0) * 1000.0)
    _emit("exec_ms", (t2 - t1) * 1000.0)
    _emit("return_value", outcome.return_value)
    _emit("instructions", outcome.instructions_executed)


def _run_wasm(opts) -> None:
    from .wasm import WasmBinary, invoke_entry, pass_buffer
    from .wasm_node import NodeAdapter

    t0 = time.perf_counter()
    binary = WasmBinary.load(opts.fixture)
    with NodeAdapter() as adapter:
        instance = adapter.instantiate(binary)
        staged = staged_bytes(opts.stage or "", opts.static_mem_size)
        if staged:
            buffer = pass_buffer(instance, staged)
            ptr, length = buffer.guest_ptr, buffer.length
        else:
            ptr, length = 0, 0
        t1 = time.perf_counter()
        value = invoke_entry(instance, opts.entry,
                             (ptr, length, opts.args[0], opts.args[1]))
        t2 = time.perf_counter()
    _emit("startup_ms", (t1 - t0) * 1000.0)
    _emit("exec_ms", (t2 - t1) * 1000.0)
    _emit("return_value", value)


def _run_native(opts) -> None:
    from .native import native_engine_run

    staged = staged_bytes(opts.stage or "", opts.static_mem_size)
    value, exec_ms, startup_ms = native_engine_run(
        opts.fixture, opts.entry, static_mem=staged,
        args=(opts.args[0], opts.args[1]))
    _emit("startup_ms", startup_ms)
    _emit("exec_ms", exec_ms)
    _emit("return_value", value)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="python -m csoffload.runner",
        description="Run one fixture on one engine and print METRIC lines.")
    parser.add_argument("--engine", required=True,
                        choices=["ebpf-vm", "wasm-v8", "native"])
    parser.add_argument("--fixture", required=True)
    parser.add_argument("--args", nargs=2, type=int, default=[0, 0],
                        metavar=("A", "B"))
    parser.add_argument("--fuel", type=int, default=None,
                        help="instruction budget (ebpf-vm only)")
    parser.add_argument("--stage", choices=["u64-sequence"], default=None,
                        help="fill staged memory with the u64 sequence 1..size/8")
    parser.add_argument("--static-mem-size", type=int, default=0)
    parser.add_argument("--entry", default="entry",
                        help="wasm export or native symbol to call")
    opts = parser.parse_args(argv)

    try:
        if opts.engine == "ebpf-vm":
            _run_ebpf(opts)
        elif opts.engine == "wasm-v8":
            _run_wasm(opts)
        else:
            _run_native(opts)
    except OffloadError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
