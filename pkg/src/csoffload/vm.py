"""Verifier and fuel-metered interpreter for offload bytecode.

Execution model:

- Registers are eleven unsigned 64-bit cells; r10 is the read-only frame
  pointer.  A guest instruction that writes r10 traps IllegalWriteToR10.
- Guest addresses are synthetic.  Static memory sits at STATIC_BASE and
  the stack below r10 = STACK_BASE + stack_size.  Every load and store
  is bounds-checked against those two regions; anything else traps
  MemoryOutOfBounds.  Memory is little-endian regardless of host.
- Entry ABI: r1 = static memory base (0 when the region is empty),
  r2 = static memory size in bytes, r3-r5 = caller-supplied scalars.
- Each retired instruction consumes one unit of fuel; with a finite
  fuel limit execution always returns.

The verifier separates always-enforced safety checks (trailing exit,
jump bounds, resolvable calls, constant zero divides) from policy lints
(clobbering the r1 input pointer at entry, provably non-terminating
jumps), which default to warnings.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

from . import OffloadError
from .asm import PatchedProgramFile
from .isa import (
    FRAME_POINTER,
    HELPER_CALL,
    Instruction,
    Kind,
    Program,
)

__all__ = [
    "VmError", "VerificationFailed", "AllocationFailure", "InvalidConfig",
    "OutOfBounds", "FuelExhausted", "MemoryOutOfBounds", "DivisionByZero",
    "UnknownHelper", "IllegalWriteToR10", "InstanceConsumed",
    "Severity", "Diagnostic", "VerificationReport", "VerifierPolicy",
    "VmConfig", "VmInstance", "ExecutionOutcome",
    "verify", "instantiate", "instantiate_program",
    "write_static_mem", "read_static_mem", "execute", "run_patched",
    "run_program",
    "STATIC_BASE", "STACK_BASE", "DEFAULT_STACK_SIZE",
]

MASK64 = (1 << 64) - 1
MASK32 = (1 << 32) - 1

STATIC_BASE = 0x1000_0000
STACK_BASE = 0x7000_0000
DEFAULT_STACK_SIZE = 512

# keeps the two regions disjoint
_MAX_STATIC_SIZE = STACK_BASE - STATIC_BASE

HelperFn = Callable[[int, int, int, int, int], int]


class VmError(OffloadError):
    pass


class VerificationFailed(VmError):
    def __init__(self, report: "VerificationReport"):
        self.report = report
        lines = "; ".join(
            f"slot {d.slot}: {d.message}" for d in report.errors())
        super().__init__(f"program rejected by verifier: {lines}")


class AllocationFailure(VmError):
    pass


class InvalidConfig(VmError):
    pass


class OutOfBounds(VmError):
    """Host-side staging access outside the static memory region."""


class FuelExhausted(VmError):
    def __init__(self, fuel_limit: int):
        self.fuel_limit = fuel_limit
        self.instructions_executed = fuel_limit
        super().__init__(f"fuel exhausted after {fuel_limit} instructions")


class MemoryOutOfBounds(VmError):
    def __init__(self, slot: int, address: int, width: int):
        self.slot = slot
        self.address = address
        self.width = width
        super().__init__(
            f"slot {slot}: {width}-byte access at 0x{address:x} is outside "
            f"stack and static memory")


class DivisionByZero(VmError):
    def __init__(self, slot: int):
        self.slot = slot
        super().__init__(f"slot {slot}: division or modulus by zero")


class UnknownHelper(VmError):
    def __init__(self, index: int, slot: int | None = None):
        self.index = index
        self.slot = slot
        super().__init__(f"no helper registered at index {index}")


class IllegalWriteToR10(VmError):
    def __init__(self, slot: int):
        self.slot = slot
        super().__init__(f"slot {slot}: r10 is the read-only frame pointer")


class InstanceConsumed(VmError):
    pass


class Severity:
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class Diagnostic:
    slot: int
    code: str
    message: str
    severity: str = Severity.ERROR


@dataclass(frozen=True)
class VerificationReport:
    diagnostics: tuple[Diagnostic, ...]

    @property
    def ok(self) -> bool:
        return not any(d.severity == Severity.ERROR for d in self.diagnostics)

    def errors(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.severity == Severity.ERROR]

    def warnings(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.severity == Severity.WARNING]


@dataclass(frozen=True)
class VerifierPolicy:
    """Safety checks always run; these switches control the extras."""

    allow_loops: bool = True
    lint_entry_r1_clobber: bool = True
    lint_nonterminating_ja: bool = True
    lints_as_errors: bool = False


@dataclass(frozen=True)
class VmConfig:
    stack_size: int = DEFAULT_STACK_SIZE
    fuel_limit: int | None = None
    helpers: dict[int, HelperFn] = field(default_factory=dict)
    verifier_policy: VerifierPolicy = VerifierPolicy()
    snapshot_static_mem: bool = False

    def __post_init__(self):
        if self.stack_size <= 0:
            raise InvalidConfig("stack_size must be positive")
        if self.fuel_limit is not None and self.fuel_limit <= 0:
            raise InvalidConfig("fuel_limit must be positive or None")


@dataclass(frozen=True)
class ExecutionOutcome:
    return_value: int
    instructions_executed: int
    static_mem_final: bytes | None = None


def _register_effects(insn: Instruction) -> tuple[frozenset[int], frozenset[int]]:
    """(reads, writes) over register indices, for data-flow lints."""
    kind = insn.kind
    op = insn.spec.alu_op
    if kind in (Kind.ALU_IMM, Kind.ALU_REG):
        reads = set() if op == "mov" else {insn.dst}
        if kind is Kind.ALU_REG:
            reads.add(insn.src)
        return frozenset(reads), frozenset({insn.dst})
    if kind in (Kind.ALU_UNARY, Kind.SWAP):
        return frozenset({insn.dst}), frozenset({insn.dst})
    if kind is Kind.LDDW:
        return frozenset(), frozenset({insn.dst})
    if kind is Kind.MEM_LDX:
        return frozenset({insn.src}), frozenset({insn.dst})
    if kind is Kind.MEM_ST:
        return frozenset({insn.dst}), frozenset()
    if kind is Kind.MEM_STX:
        return frozenset({insn.dst, insn.src}), frozenset()
    if kind is Kind.CALL:
        return frozenset({1, 2, 3, 4, 5}), frozenset({0})
    if kind in (Kind.JMP_IMM, Kind.JMP_REG):
        reads = {insn.dst}
        if kind is Kind.JMP_REG:
            reads.add(insn.src)
        return frozenset(reads), frozenset()
    return frozenset(), frozenset()   # ja, exit


def _inescapable_loop(at_slot: dict[int, tuple[int, Instruction]],
                      target: int, slot_count: int) -> bool:
    """True when control starting at `target` can never reach exit or a
    conditional branch (follows only straight-line flow and ja)."""
    seen: set[int] = set()
    pc = target
    while pc not in seen:
        seen.add(pc)
        entry = at_slot.get(pc)
        if entry is None:
            return False    # lands outside or mid-wide-load; bounds check reports it
        insn = entry[1]
        kind = insn.kind
        if kind in (Kind.EXIT, Kind.JMP_IMM, Kind.JMP_REG):
            return False
        if kind is Kind.JA:
            pc = pc + 1 + insn.offset
        else:
            pc = pc + insn.slots
        if not 0 <= pc < slot_count:
            return False
    return True


def verify(program: Program, policy: VerifierPolicy | None = None,
           helpers: Iterable[int] | None = None) -> VerificationReport:
    """Static checks; returns a report and never raises.

    `helpers` is the set of registered helper indices; calls outside it
    are errors (an empty registry is the default, so any helper call in
    an unknown environment is loud).
    """
    policy = policy or VerifierPolicy()
    helper_set = frozenset(helpers) if helpers is not None else frozenset()
    lint_severity = Severity.ERROR if policy.lints_as_errors else Severity.WARNING
    diags: list[Diagnostic] = []
    at_slot = program.instruction_at_slot()
    slots = program.slot_index()
    slot_count = program.slot_count

    if program.instructions[-1].kind is not Kind.EXIT:
        diags.append(Diagnostic(
            slots[-1], "MissingExit", "last instruction must be exit"))

    for slot, insn in zip(slots, program.instructions):
        if not (0 <= insn.dst <= 10 and 0 <= insn.src <= 10):
            diags.append(Diagnostic(
                slot, "RegisterOutOfRange", "register index above r10"))
        if insn.is_jump:
            target = slot + 1 + insn.offset
            if not 0 <= target < slot_count:
                diags.append(Diagnostic(
                    slot, "JumpOutOfBounds",
                    f"jump target {target} outside [0, {slot_count})"))
            elif target not in at_slot:
                diags.append(Diagnostic(
                    slot, "JumpIntoWideLoad",
                    f"jump target {target} is the middle of a wide load"))
            elif not policy.allow_loops and insn.offset < 0:
                diags.append(Diagnostic(
                    slot, "BackwardJump",
                    "backward jumps are disabled by policy"))
        if insn.kind is Kind.CALL:
            if insn.src != HELPER_CALL:
                diags.append(Diagnostic(
                    slot, "UnresolvedLocalCall",
                    "local call survives in a runnable program; "
                    "inline it first"))
            elif insn.imm not in helper_set:
                diags.append(Diagnostic(
                    slot, "UnknownHelperIndex",
                    f"helper {insn.imm} is not registered with the VM"))
        if (insn.kind is Kind.ALU_IMM and insn.spec.alu_op in ("div", "mod")
                and insn.imm == 0):
            diags.append(Diagnostic(
                slot, "ConstZeroDivide",
                "division or modulus by constant zero"))

    if policy.lint_entry_r1_clobber:
        for insn in program.instructions:
            if insn.kind in (Kind.JA, Kind.JMP_IMM, Kind.JMP_REG, Kind.EXIT):
                break
            reads, writes = _register_effects(insn)
            if 1 in reads:
                break
            if 1 in writes:
                diags.append(Diagnostic(
                    0, "EntryR1Clobber",
                    "entry code overwrites r1 before reading the static "
                    "memory pointer it carries", lint_severity))
                break
            if insn.kind is Kind.CALL:
                break

    if policy.lint_nonterminating_ja:
        for slot, insn in zip(slots, program.instructions):
            if insn.kind is Kind.JA and insn.offset < 0:
                target = slot + 1 + insn.offset
                if 0 <= target < slot_count and _inescapable_loop(
                        at_slot, target, slot_count):
                    diags.append(Diagnostic(
                        slot, "NonTerminatingJa",
                        "unconditional backward jump with no exit on its "
                        "path never terminates", lint_severity))

    return VerificationReport(tuple(diags))


class VmInstance:
    """A verified program plus its memory, ready to execute once."""

    def __init__(self, program: Program, config: VmConfig,
                 static_mem_size: int, args: tuple[int, int, int] = (0, 0, 0)):
        if static_mem_size < 0 or static_mem_size > _MAX_STATIC_SIZE:
            raise AllocationFailure(
                f"static memory size {static_mem_size} outside [0, {_MAX_STATIC_SIZE}]")
        try:
            self.static_mem = bytearray(static_mem_size)
            self.stack = bytearray(config.stack_size)
        except MemoryError as exc:
            raise AllocationFailure(str(exc)) from exc
        self.program = program
        self.config = config
        self.registers: list[int] = [0] * 11
        self.registers[1] = STATIC_BASE if static_mem_size else 0
        self.registers[2] = static_mem_size
        self.registers[3] = args[0] & MASK64
        self.registers[4] = args[1] & MASK64
        self.registers[5] = args[2] & MASK64
        self.registers[10] = STACK_BASE + config.stack_size
        self.pc = 0
        self.fuel_used = 0
        self._consumed = False


class _Halt(Exception):
    pass


def _to_signed64(v: int) -> int:
    return v - (1 << 64) if v >= 1 << 63 else v


def _to_signed32(v: int) -> int:
    return v - (1 << 32) if v >= 1 << 31 else v


def _compile(instance: VmInstance) -> list:
    """Turn each instruction into a zero-argument closure returning the
    next slot index.  Exit raises _Halt; traps raise VmError."""
    regs = instance.registers
    static = instance.static_mem
    stack = instance.stack
    s_lo, s_hi = STATIC_BASE, STATIC_BASE + len(static)
    k_lo, k_hi = STACK_BASE, STACK_BASE + len(stack)
    helpers = instance.config.helpers
    program = instance.program

    handlers: list = [None] * program.slot_count

    def trap_mid_wide(slot):
        def op():
            raise MemoryOutOfBounds(slot, 0, 0)
        return op

    def mk_write_r10(slot):
        def op():
            raise IllegalWriteToR10(slot)
        return op

    def mk_alu(insn: Instruction, slot: int, nxt: int):
        op_name = insn.spec.alu_op
        bits = insn.spec.bits
        dst = insn.dst
        kind = insn.kind
        if kind is Kind.ALU_REG:
            src = insn.src
            fetch = lambda: regs[src]
        else:
            const = insn.imm & MASK64        # sign-extended to 64
            fetch = lambda: const

        if bits == 32:
            def fetch32(inner=fetch):
                return inner() & MASK32

            if op_name == "mov":
                def op():
                    regs[dst] = fetch32()
                    return nxt
            elif op_name == "add":
                def op():
                    regs[dst] = (regs[dst] + fetch32()) & MASK32
                    return nxt
            elif op_name == "sub":
                def op():
                    regs[dst] = (regs[dst] - fetch32()) & MASK32
                    return nxt
            elif op_name == "mul":
                def op():
                    regs[dst] = ((regs[dst] & MASK32) * fetch32()) & MASK32
                    return nxt
            elif op_name == "div":
                def op():
                    d = fetch32()
                    if d == 0:
                        raise DivisionByZero(slot)
                    regs[dst] = (regs[dst] & MASK32) // d
                    return nxt
            elif op_name == "mod":
                def op():
                    d = fetch32()
                    if d == 0:
                        raise DivisionByZero(slot)
                    regs[dst] = (regs[dst] & MASK32) % d
                    return nxt
            elif op_name == "or":
                def op():
                    regs[dst] = (regs[dst] | fetch32()) & MASK32
                    return nxt
            elif op_name == "and":
                def op():
                    regs[dst] = regs[dst] & fetch32()
                    return nxt
            elif op_name == "xor":
                def op():
                    regs[dst] = (regs[dst] ^ fetch32()) & MASK32
                    return nxt
            elif op_name == "lsh":
                def op():
                    regs[dst] = ((regs[dst] & MASK32) << (fetch32() & 31)) & MASK32
                    return nxt
            elif op_name == "rsh":
                def op():
                    regs[dst] = (regs[dst] & MASK32) >> (fetch32() & 31)
                    return nxt
            elif op_name == "arsh":
                def op():
                    regs[dst] = (_to_signed32(regs[dst] & MASK32)
                                 >> (fetch32() & 31)) & MASK32
                    return nxt
            else:
                assert op_name == "neg"
                def op():
                    regs[dst] = (-(regs[dst] & MASK32)) & MASK32
                    return nxt
            return op

        if op_name == "mov":
            def op():
                regs[dst] = fetch()
                return nxt
        elif op_name == "add":
            def op():
                regs[dst] = (regs[dst] + fetch()) & MASK64
                return nxt
        elif op_name == "sub":
            def op():
                regs[dst] = (regs[dst] - fetch()) & MASK64
                return nxt
        elif op_name == "mul":
            def op():
                regs[dst] = (regs[dst] * fetch()) & MASK64
                return nxt
        elif op_name == "div":
            def op():
                d = fetch()
                if d == 0:
                    raise DivisionByZero(slot)
                regs[dst] = regs[dst] // d
                return nxt
        elif op_name == "mod":
            def op():
                d = fetch()
                if d == 0:
                    raise DivisionByZero(slot)
                regs[dst] = regs[dst] % d
                return nxt
        elif op_name == "or":
            def op():
                regs[dst] = regs[dst] | fetch()
                return nxt
        elif op_name == "and":
            def op():
                regs[dst] = regs[dst] & fetch()
                return nxt
        elif op_name == "xor":
            def op():
                regs[dst] = regs[dst] ^ fetch()
                return nxt
        elif op_name == "lsh":
            def op():
                regs[dst] = (regs[dst] << (fetch() & 63)) & MASK64
                return nxt
        elif op_name == "rsh":
            def op():
                regs[dst] = regs[dst] >> (fetch() & 63)
                return nxt
        elif op_name == "arsh":
            def op():
                regs[dst] = (_to_signed64(regs[dst]) >> (fetch() & 63)) & MASK64
                return nxt
        else:
            assert op_name == "neg"
            def op():
                regs[dst] = (-regs[dst]) & MASK64
                return nxt
        return op

    def mk_swap(insn: Instruction, nxt: int):
        dst = insn.dst
        width = insn.imm
        if insn.spec.alu_op == "le":
            mask = (1 << width) - 1
            def op():
                regs[dst] = regs[dst] & mask
                return nxt
        else:
            nbytes = width // 8
            mask = (1 << width) - 1
            def op():
                regs[dst] = int.from_bytes(
                    (regs[dst] & mask).to_bytes(nbytes, "little"), "big")
                return nxt
        return op

    def mk_ldx(insn: Instruction, slot: int, nxt: int):
        dst, src, off = insn.dst, insn.src, insn.offset
        width = insn.spec.width
        def op():
            addr = (regs[src] + off) & MASK64
            if s_lo <= addr and addr + width <= s_hi:
                i = addr - s_lo
                regs[dst] = int.from_bytes(static[i:i + width], "little")
            elif k_lo <= addr and addr + width <= k_hi:
                i = addr - k_lo
                regs[dst] = int.from_bytes(stack[i:i + width], "little")
            else:
                raise MemoryOutOfBounds(slot, addr, width)
            return nxt
        return op

    def mk_store(insn: Instruction, slot: int, nxt: int):
        dst, off = insn.dst, insn.offset
        width = insn.spec.width
        wmask = (1 << (8 * width)) - 1
        if insn.kind is Kind.MEM_ST:
            data = ((insn.imm & MASK64) & wmask).to_bytes(width, "little")
            def op():
                addr = (regs[dst] + off) & MASK64
                if s_lo <= addr and addr + width <= s_hi:
                    i = addr - s_lo
                    static[i:i + width] = data
                elif k_lo <= addr and addr + width <= k_hi:
                    i = addr - k_lo
                    stack[i:i + width] = data
                else:
                    raise MemoryOutOfBounds(slot, addr, width)
                return nxt
        else:
            src = insn.src
            def op():
                addr = (regs[dst] + off) & MASK64
                value = (regs[src] & wmask).to_bytes(width, "little")
                if s_lo <= addr and addr + width <= s_hi:
                    i = addr - s_lo
                    static[i:i + width] = value
                elif k_lo <= addr and addr + width <= k_hi:
                    i = addr - k_lo
                    stack[i:i + width] = value
                else:
                    raise MemoryOutOfBounds(slot, addr, width)
                return nxt
        return op

    def mk_jump(insn: Instruction, slot: int, nxt: int):
        taken = slot + 1 + insn.offset
        name = insn.spec.alu_op
        dst = insn.dst
        if insn.kind is Kind.JMP_REG:
            src = insn.src
            fetch = lambda: regs[src]
        else:
            const = insn.imm & MASK64
            fetch = lambda: const
        if name == "jeq":
            def op():
                return taken if regs[dst] == fetch() else nxt
        elif name == "jne":
            def op():
                return taken if regs[dst] != fetch() else nxt
        elif name == "jgt":
            def op():
                return taken if regs[dst] > fetch() else nxt
        elif name == "jge":
            def op():
                return taken if regs[dst] >= fetch() else nxt
        elif name == "jlt":
            def op():
                return taken if regs[dst] < fetch() else nxt
        elif name == "jle":
            def op():
                return taken if regs[dst] <= fetch() else nxt
        elif name == "jset":
            def op():
                return taken if regs[dst] & fetch() else nxt
        elif name == "jsgt":
            def op():
                return taken if _to_signed64(regs[dst]) > _to_signed64(fetch()) else nxt
        elif name == "jsge":
            def op():
                return taken if _to_signed64(regs[dst]) >= _to_signed64(fetch()) else nxt
        elif name == "jslt":
            def op():
                return taken if _to_signed64(regs[dst]) < _to_signed64(fetch()) else nxt
        else:
            assert name == "jsle"
            def op():
                return taken if _to_signed64(regs[dst]) <= _to_signed64(fetch()) else nxt
        return op

    def mk_call(insn: Instruction, slot: int, nxt: int):
        index = insn.imm
        if insn.src != HELPER_CALL:
            def op():
                raise UnknownHelper(index, slot)
            return op
        fn = helpers.get(index)
        if fn is None:
            def op():
                raise UnknownHelper(index, slot)
            return op
        def op():
            regs[0] = fn(regs[1], regs[2], regs[3], regs[4], regs[5]) & MASK64
            return nxt
        return op

    for slot, insn in zip(program.slot_index(), program.instructions):
        nxt = slot + insn.slots
        kind = insn.kind
        reads, writes = _register_effects(insn)
        if FRAME_POINTER in writes:
            handlers[slot] = mk_write_r10(slot)
            if insn.is_wide:
                handlers[slot + 1] = trap_mid_wide(slot + 1)
        elif kind in (Kind.ALU_REG, Kind.ALU_IMM, Kind.ALU_UNARY):
            handlers[slot] = mk_alu(insn, slot, nxt)
        elif kind is Kind.SWAP:
            handlers[slot] = mk_swap(insn, nxt)
        elif kind is Kind.LDDW:
            value = insn.wide_imm
            def op(dst=insn.dst, value=value, nxt=nxt):
                regs[dst] = value
                return nxt
            handlers[slot] = op
            handlers[slot + 1] = trap_mid_wide(slot + 1)
        elif kind is Kind.MEM_LDX:
            handlers[slot] = mk_ldx(insn, slot, nxt)
        elif kind in (Kind.MEM_ST, Kind.MEM_STX):
            handlers[slot] = mk_store(insn, slot, nxt)
        elif kind is Kind.JA:
            target = slot + 1 + insn.offset
            def op(target=target):
                return target
            handlers[slot] = op
        elif kind in (Kind.JMP_IMM, Kind.JMP_REG):
            handlers[slot] = mk_jump(insn, slot, nxt)
        elif kind is Kind.CALL:
            handlers[slot] = mk_call(insn, slot, nxt)
        else:
            assert kind is Kind.EXIT
            def op():
                raise _Halt
            handlers[slot] = op
    return handlers


def instantiate_program(program: Program, config: VmConfig,
                        static_mem_size: int,
                        args: tuple[int, int, int] = (0, 0, 0)) -> VmInstance:
    """Verify, then build a ready-to-run instance (the startup phase)."""
    report = verify(program, config.verifier_policy, config.helpers.keys())
    if not report.ok:
        raise VerificationFailed(report)
    return VmInstance(program, config, static_mem_size, args)


def instantiate(file: PatchedProgramFile, config: VmConfig,
                args: tuple[int, int, int] = (0, 0, 0)) -> VmInstance:
    return instantiate_program(file.body, config, file.static_mem_size, args)


def write_static_mem(instance: VmInstance, offset: int, data: bytes) -> None:
    if offset < 0 or offset + len(data) > len(instance.static_mem):
        raise OutOfBounds(
            f"write of {len(data)} bytes at offset {offset} exceeds "
            f"static memory of {len(instance.static_mem)} bytes")
    instance.static_mem[offset:offset + len(data)] = data


def read_static_mem(instance: VmInstance, offset: int, length: int) -> bytes:
    if offset < 0 or length < 0 or offset + length > len(instance.static_mem):
        raise OutOfBounds(
            f"read of {length} bytes at offset {offset} exceeds "
            f"static memory of {len(instance.static_mem)} bytes")
    return bytes(instance.static_mem[offset:offset + length])


def execute(instance: VmInstance) -> ExecutionOutcome:
    """Interpret until exit; one fuel per retired instruction."""
    if instance._consumed:
        raise InstanceConsumed("instance already executed")
    instance._consumed = True
    handlers = _compile(instance)
    limit = instance.config.fuel_limit
    pc = instance.pc
    count = 0
    try:
        if limit is None:
            while True:
                count += 1
                pc = handlers[pc]()
        else:
            while count < limit:
                count += 1
                pc = handlers[pc]()
            raise FuelExhausted(limit)
    except _Halt:
        pass
    except VmError:
        instance.fuel_used = count
        instance.pc = pc
        raise
    instance.fuel_used = count
    instance.pc = pc
    snapshot = bytes(instance.static_mem) if instance.config.snapshot_static_mem else None
    return ExecutionOutcome(
        return_value=instance.registers[0],
        instructions_executed=count,
        static_mem_final=snapshot)


def run_program(program: Program, config: VmConfig,
                static_mem: bytes = b"", static_mem_size: int | None = None,
                args: tuple[int, int, int] = (0, 0, 0)) -> ExecutionOutcome:
    """Instantiate, stage `static_mem`, execute."""
    size = len(static_mem) if static_mem_size is None else static_mem_size
    instance = instantiate_program(program, config, size, args)
    if static_mem:
        write_static_mem(instance, 0, static_mem)
    return execute(instance)


def run_patched(file: PatchedProgramFile, config: VmConfig,
                args: tuple[int, int, int] = (0, 0, 0),
                static_mem: bytes = b"") -> tuple[ExecutionOutcome, bool]:
    """Execute a patched file and compare r0 with its embedded header."""
    instance = instantiate(file, config, args)
    if static_mem:
        write_static_mem(instance, 0, static_mem)
    outcome = execute(instance)
    return outcome, outcome.return_value == file.expected_output
