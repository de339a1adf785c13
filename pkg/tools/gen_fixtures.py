#!/usr/bin/env python3
"""Regenerate the packaged corpus fixtures from their sources.

Every fixture header is derived from the corresponding oracle, never
written by hand.  Each program is assembled and executed under the eBPF
VM before being written out; the WASM text is converted and, when a
node binary is available, executed under V8 as well.  A disagreement
with the oracle aborts generation.

Usage: python3 tools/gen_fixtures.py [output-dir]
"""

from __future__ import annotations

import shutil
import sys
from pathlib import Path

from csoffload.asm import (
    PatchedProgramFile,
    assemble,
    parse_patched,
    serialize_patched,
)
from csoffload.bench import staged_bytes
from csoffload.corpus import evaluate_oracle
from csoffload.vm import VmConfig, execute, instantiate, write_static_mem
from csoffload.wat import wat_to_wasm

EBPF_SOURCES = {
    "dummy": """
    mov64 r0, 1
    exit
""",
    "fib": """
    # r3 = n; iterate pairs (r0, r6) = (F(i), F(i+1))
    mov64 r0, 0
    mov64 r6, 1
loop:
    jeq r3, 0, done
    mov64 r7, r0
    add64 r7, r6
    mov64 r0, r6
    mov64 r6, r7
    sub64 r3, 1
    ja loop
done:
    exit
""",
    "sum": """
    # staged array of u64 in static memory: r1 = base, r2 = byte size
    mov64 r0, 0
    mov64 r6, r1
    mov64 r7, r2
    div64 r7, 8
loop:
    jeq r7, 0, done
    ldxdw r8, [r6 + 0]
    add64 r0, r8
    add64 r6, 8
    sub64 r7, 1
    ja loop
done:
    exit
""",
    "summing_loop": """
    # r3 = n; accumulate 1..n without touching memory
    mov64 r0, 0
    mov64 r6, 1
loop:
    jgt r6, r3, done
    add64 r0, r6
    add64 r6, 1
    ja loop
done:
    exit
""",
    "prime_count": """
    # sieve over static memory: r1 = base (zeroed), r3 = n
    mov64 r0, 0
    mov64 r6, 2
outer:
    jgt r6, r3, done
    mov64 r7, r1
    add64 r7, r6
    ldxb r8, [r7 + 0]
    jne r8, 0, next
    add64 r0, 1
    mov64 r9, r6
    mul64 r9, r6
mark:
    jgt r9, r3, next
    mov64 r7, r1
    add64 r7, r9
    stb [r7 + 0], 1
    add64 r9, r6
    ja mark
next:
    add64 r6, 1
    ja outer
done:
    exit
""",
    "multifact": """
    # r3 = n, r4 = k; product of n, n-k, ... down to the last positive term
    mov64 r0, 1
loop:
    mul64 r0, r3
    jle r3, r4, done
    sub64 r3, r4
    ja loop
done:
    exit
""",
}

# All modules share the allocation preamble so the host can stage input
# buffers the same way for every program.
WAT_PREAMBLE = """\
  (memory (export "memory") 2)
  (global $heap (mut i32) (i32.const 16))
  (func (export "malloc") (param $n i32) (result i32)
    (local $p i32)
    (local.set $p (global.get $heap))
    (global.set $heap
      (i32.and
        (i32.add (i32.add (global.get $heap) (local.get $n)) (i32.const 23))
        (i32.const -16)))
    (local.get $p))
"""

WAT_BODIES = {
    "dummy": """\
  (func (export "dummy_entry") (param $mem i32) (param $len i64)
        (param $a i64) (param $b i64) (result i64)
    (i64.const 1))
""",
    "fib": """\
  (func (export "fib_entry") (param $mem i32) (param $len i64)
        (param $a i64) (param $b i64) (result i64)
    (local $x i64) (local $y i64) (local $t i64)
    (local.set $y (i64.const 1))
    (block $done
      (loop $next
        (br_if $done (i64.eqz (local.get $a)))
        (local.set $t (i64.add (local.get $x) (local.get $y)))
        (local.set $x (local.get $y))
        (local.set $y (local.get $t))
        (local.set $a (i64.sub (local.get $a) (i64.const 1)))
        (br $next)))
    (local.get $x))
""",
    "sum": """\
  (func (export "sum_entry") (param $mem i32) (param $len i64)
        (param $a i64) (param $b i64) (result i64)
    (local $total i64) (local $end i32) (local $p i32)
    (local.set $p (local.get $mem))
    (local.set $end (i32.add (local.get $mem) (i32.wrap_i64 (local.get $len))))
    (block $done
      (loop $next
        (br_if $done (i32.ge_u (local.get $p) (local.get $end)))
        (local.set $total (i64.add (local.get $total) (i64.load (local.get $p))))
        (local.set $p (i32.add (local.get $p) (i32.const 8)))
        (br $next)))
    (local.get $total))
""",
    "summing_loop": """\
  (func (export "summing_loop_entry") (param $mem i32) (param $len i64)
        (param $a i64) (param $b i64) (result i64)
    (local $total i64) (local $i i64)
    (local.set $i (i64.const 1))
    (block $done
      (loop $next
        (br_if $done (i64.gt_u (local.get $i) (local.get $a)))
        (local.set $total (i64.add (local.get $total) (local.get $i)))
        (local.set $i (i64.add (local.get $i) (i64.const 1)))
        (br $next)))
    (local.get $total))
""",
    "prime_count": """\
  (func (export "prime_count_entry") (param $mem i32) (param $len i64)
        (param $a i64) (param $b i64) (result i64)
    (local $count i64) (local $i i32) (local $n i32) (local $j i64)
    (local.set $n (i32.wrap_i64 (local.get $a)))
    (local.set $i (i32.const 2))
    (block $done
      (loop $outer
        (br_if $done (i32.gt_u (local.get $i) (local.get $n)))
        (block $next
          (br_if $next (i32.load8_u (i32.add (local.get $mem) (local.get $i))))
          (local.set $count (i64.add (local.get $count) (i64.const 1)))
          (local.set $j (i64.mul (i64.extend_i32_u (local.get $i))
                                 (i64.extend_i32_u (local.get $i))))
          (block $marked
            (loop $mark
              (br_if $marked (i64.gt_u (local.get $j) (local.get $a)))
              (i32.store8 (i32.add (local.get $mem) (i32.wrap_i64 (local.get $j)))
                          (i32.const 1))
              (local.set $j (i64.add (local.get $j)
                                     (i64.extend_i32_u (local.get $i))))
              (br $mark))))
        (local.set $i (i32.add (local.get $i) (i32.const 1)))
        (br $outer)))
    (local.get $count))
""",
    "multifact": """\
  (func (export "multifact_entry") (param $mem i32) (param $len i64)
        (param $a i64) (param $b i64) (result i64)
    (local $r i64)
    (local.set $r (i64.const 1))
    (block $done
      (loop $next
        (local.set $r (i64.mul (local.get $r) (local.get $a)))
        (br_if $done (i64.le_u (local.get $a) (local.get $b)))
        (local.set $a (i64.sub (local.get $a) (local.get $b)))
        (br $next)))
    (local.get $r))
""",
}

# name -> (oracle id, oracle args, entry args (a, b), static size, stage)
PROGRAMS = {
    "dummy": ("dummy", (), (0, 0), 0, ""),
    "fib": ("fib", (50,), (50, 0), 0, ""),
    "sum": ("sum", (100,), (0, 0), 800, "u64-sequence"),
    "summing_loop": ("sum", (1_000_000,), (1_000_000, 0), 0, ""),
    "prime_count": ("prime_count", (100_000,), (100_000, 0), 100_001, ""),
    "multifact": ("multifact", (25, 3), (25, 3), 0, ""),
}


def check_ebpf(name: str, patched: PatchedProgramFile, args: tuple[int, int],
               staged: bytes) -> int:
    instance = instantiate(patched, VmConfig(), (args[0], args[1], 0))
    if staged:
        write_static_mem(instance, 0, staged)
    outcome = execute(instance)
    print(f"  ebpf: {outcome.return_value} "
          f"({outcome.instructions_executed} instructions)")
    return outcome.return_value


def check_wasm(name: str, wasm: bytes, entry: str, args: tuple[int, int],
               staged: bytes) -> int | None:
    if shutil.which("node") is None:
        print("  wasm: node not found, skipping execution check")
        return None
    from csoffload.wasm import WasmBinary, invoke_entry, pass_buffer
    from csoffload.wasm_node import NodeAdapter

    with NodeAdapter() as adapter:
        instance = adapter.instantiate(WasmBinary(wasm))
        if staged:
            buffer = pass_buffer(instance, staged)
            ptr, length = buffer.guest_ptr, buffer.length
        else:
            ptr, length = 0, 0
        value = invoke_entry(instance, entry, (ptr, length, args[0], args[1]))
    print(f"  wasm: {value}")
    return value


def manifest_text(name: str, oracle_id: str, oracle_args: tuple[int, ...],
                  expected: int, args: tuple[int, int], static: int,
                  stage: str) -> str:
    oracle_list = "[" + ", ".join(str(v) for v in oracle_args) + "]"
    return (
        f'name = "{name}"\n'
        f'oracle = "{oracle_id}"\n'
        f"oracle_args = {oracle_list}\n"
        f"expected = {expected}\n"
        f"args = [{args[0]}, {args[1]}]\n"
        f"static_mem_size = {static}\n"
        f'stage = "{stage}"\n'
        f'entry = "{name}_entry"\n'
        "\n"
        "[fixtures]\n"
        f'ebpf = "{name}.pbpf"\n'
        f'wat = "{name}.wat"\n'
        f'wasm = "{name}.wasm"\n'
    )


def main() -> int:
    out_root = Path(sys.argv[1]) if len(sys.argv) > 1 else (
        Path(__file__).resolve().parent.parent
        / "src" / "csoffload" / "corpus_fixtures")

    for name, (oracle_id, oracle_args, args, static, stage) in PROGRAMS.items():
        expected = evaluate_oracle(oracle_id, oracle_args)
        print(f"{name}: oracle {oracle_id}{oracle_args} = {expected}")
        staged = staged_bytes(stage, static)

        body = assemble(EBPF_SOURCES[name])
        patched = PatchedProgramFile(expected, static, body)
        got = check_ebpf(name, patched, args, staged)
        if got != expected:
            print(f"  FAIL: ebpf returned {got}")
            return 1
        pbpf_text = serialize_patched(patched)
        reparsed = parse_patched(pbpf_text)
        assert reparsed.body.instructions == body.instructions

        wat_text = "(module\n" + WAT_PREAMBLE + WAT_BODIES[name] + ")\n"
        wasm = wat_to_wasm(wat_text)
        got = check_wasm(name, wasm, f"{name}_entry", args, staged)
        if got is not None and got != expected:
            print(f"  FAIL: wasm returned {got}")
            return 1

        directory = out_root / name
        directory.mkdir(parents=True, exist_ok=True)
        (directory / f"{name}.pbpf").write_text(pbpf_text, encoding="utf-8")
        (directory / f"{name}.wat").write_text(wat_text, encoding="utf-8")
        (directory / f"{name}.wasm").write_bytes(wasm)
        (directory / "manifest.toml").write_text(
            manifest_text(name, oracle_id, oracle_args, expected, args,
                          static, stage), encoding="utf-8")
        print(f"  wrote {directory}")

    sizes = {name: (out_root / name / f"{name}.pbpf").stat().st_size
             for name in PROGRAMS}
    smallest = min(sizes, key=sizes.get)
    print(f"pbpf sizes: {sizes}")
    if smallest != "dummy":
        print(f"FAIL: expected dummy to be the smallest fixture, got {smallest}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
