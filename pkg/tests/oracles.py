"""Independent reference evaluators used as oracles by the test suite.

Everything here is deliberately written in a different style from the
production interpreter: registers live in a dict, wrapping goes through
struct packing, and dispatch is on mnemonic strings rather than opcode
table entries.  A shared misunderstanding between implementation and
oracle is what this guards against.

Two evaluators:

- naive_alu_eval: straight-line ALU programs only, for differential
  semantics tests against the production interpreter.
- call_aware_eval: whole multi-function objects with genuine
  call/return control flow (a return-address stack), the reference that
  inlined single-function programs must match.
"""

from __future__ import annotations

import struct

from csoffload.isa import Program
from csoffload.patcher import EbpfObject

STATIC_BASE = 0x1000_0000
STACK_BASE = 0x7000_0000


class OracleTrap(Exception):
    """The oracle's own runtime fault (bad memory access, budget)."""


def _u64(v: int) -> int:
    return v % (1 << 64)


def _u32(v: int) -> int:
    return v % (1 << 32)


def _s64(v: int) -> int:
    return struct.unpack("<q", struct.pack("<Q", _u64(v)))[0]


def _s32(v: int) -> int:
    return struct.unpack("<i", struct.pack("<I", _u32(v)))[0]


def _alu_step(regs: dict[int, int], insn) -> None:
    """Apply one ALU/swap/lddw instruction to the register dict."""
    mn = insn.mnemonic
    if mn == "lddw":
        regs[insn.dst] = insn.wide_imm
        return
    if mn in ("le16", "le32", "le64", "be16", "be32", "be64"):
        width = int(mn[2:])
        fmt = {16: "H", 32: "I", 64: "Q"}[width]
        lo = regs[insn.dst] % (1 << width)
        if mn.startswith("be"):
            regs[insn.dst] = struct.unpack(
                ">" + fmt, struct.pack("<" + fmt, lo))[0]
        else:
            regs[insn.dst] = lo
        return

    if mn.endswith("64"):
        stem, wide = mn[:-2], True
    elif mn.endswith("32"):
        stem, wide = mn[:-2], False
    else:
        raise ValueError(f"not an ALU mnemonic: {mn}")

    if insn.kind.value == "alu_reg":
        operand = regs[insn.src]
    else:
        operand = _u64(insn.imm)   # immediates sign-extend to 64 bits

    a = regs[insn.dst]
    if not wide:
        a, operand = _u32(a), _u32(operand)

    if stem == "mov":
        result = operand
    elif stem == "add":
        result = a + operand
    elif stem == "sub":
        result = a - operand
    elif stem == "mul":
        result = a * operand
    elif stem == "div":
        result = a // operand    # ZeroDivisionError is the contract
    elif stem == "mod":
        result = a % operand
    elif stem == "or":
        result = a | operand
    elif stem == "and":
        result = a & operand
    elif stem == "xor":
        result = a ^ operand
    elif stem == "lsh":
        result = a << (operand % (64 if wide else 32))
    elif stem == "rsh":
        result = a >> (operand % (64 if wide else 32))
    elif stem == "arsh":
        shift = operand % (64 if wide else 32)
        result = (_s64(a) if wide else _s32(a)) >> shift
    elif stem == "neg":
        result = -a
    else:
        raise ValueError(f"not an ALU mnemonic: {mn}")

    regs[insn.dst] = _u64(result) if wide else _u32(result)


def naive_alu_eval(program: Program,
                   initial: dict[int, int] | None = None) -> dict[int, int]:
    """Evaluate a straight-line ALU program; returns the register file."""
    regs = {i: 0 for i in range(11)}
    if initial:
        regs.update(initial)
    for insn in program.instructions:
        if insn.mnemonic == "exit":
            break
        _alu_step(regs, insn)
    return regs


def _compare(mn: str, a: int, b: int) -> bool:
    if mn == "jeq":
        return a == b
    if mn == "jne":
        return a != b
    if mn == "jgt":
        return a > b
    if mn == "jge":
        return a >= b
    if mn == "jlt":
        return a < b
    if mn == "jle":
        return a <= b
    if mn == "jset":
        return a & b != 0
    if mn == "jsgt":
        return _s64(a) > _s64(b)
    if mn == "jsge":
        return _s64(a) >= _s64(b)
    if mn == "jslt":
        return _s64(a) < _s64(b)
    if mn == "jsle":
        return _s64(a) <= _s64(b)
    raise ValueError(mn)


def call_aware_eval(obj: EbpfObject, static_mem: bytes = b"",
                    args: tuple[int, int, int] = (0, 0, 0),
                    stack_size: int = 512,
                    max_steps: int = 1_000_000,
                    static_out: bytearray | None = None) -> int:
    """Execute an unpatched object with true call/return semantics.

    Calls are control flow only: one shared register file and one shared
    stack, plus a return-address stack the hardware-free ISA lacks.
    This is exactly the behavior call inlining must reproduce.
    """
    regs = {i: 0 for i in range(11)}
    static = bytearray(static_mem)
    stack = bytearray(stack_size)
    regs[1] = STATIC_BASE if static else 0
    regs[2] = len(static)
    regs[3], regs[4], regs[5] = (_u64(a) for a in args)
    regs[10] = STACK_BASE + stack_size
    regions = ((STATIC_BASE, static), (STACK_BASE, stack))

    def locate(addr: int, width: int) -> tuple[bytearray, int]:
        for base, buf in regions:
            if base <= addr and addr + width <= base + len(buf):
                return buf, addr - base
        raise OracleTrap(f"{width}-byte access at {addr:#x}")

    by_slot = []
    for func in obj.functions:
        table = {}
        slot = 0
        for insn in func.instructions:
            table[slot] = insn
            slot += insn.slots
        by_slot.append(table)

    frames: list[tuple[int, int]] = []
    fi = obj.function_index(obj.entry)
    pc = 0
    for _ in range(max_steps):
        insn = by_slot[fi].get(pc)
        if insn is None:
            raise OracleTrap(f"pc {pc} not at an instruction in "
                             f"'{obj.functions[fi].name}'")
        mn = insn.mnemonic
        kind = insn.kind.value
        if mn == "exit":
            if not frames:
                if static_out is not None:
                    static_out[:] = static
                return regs[0]
            fi, pc = frames.pop()
            continue
        if mn == "call":
            if insn.src != 1:
                raise OracleTrap("helper calls are outside this oracle")
            frames.append((fi, pc + 1))
            fi, pc = insn.imm, 0
            continue
        if mn == "ja":
            pc = pc + 1 + insn.offset
            continue
        if kind in ("jmp_imm", "jmp_reg"):
            if kind == "jmp_reg":
                rhs = regs[insn.src]
            else:
                rhs = _u64(insn.imm)
            if _compare(mn, regs[insn.dst], rhs):
                pc = pc + 1 + insn.offset
            else:
                pc += 1
            continue
        if kind == "mem_ldx":
            addr = _u64(regs[insn.src] + insn.offset)
            buf, i = locate(addr, insn.spec.width)
            regs[insn.dst] = int.from_bytes(buf[i:i + insn.spec.width], "little")
        elif kind in ("mem_st", "mem_stx"):
            addr = _u64(regs[insn.dst] + insn.offset)
            width = insn.spec.width
            buf, i = locate(addr, width)
            value = regs[insn.src] if kind == "mem_stx" else _u64(insn.imm)
            buf[i:i + width] = (value % (1 << (8 * width))).to_bytes(width, "little")
        else:
            _alu_step(regs, insn)
        pc += insn.slots
    raise OracleTrap(f"step budget {max_steps} exceeded")
