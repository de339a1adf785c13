"""eBPF instruction set: in-memory model and bit-exact binary codec.

Wire format is the standard eBPF 8-byte slot, little-endian:

    byte 0      opcode
    byte 1      registers, dst in the low nibble, src in the high nibble
    bytes 2-3   signed 16-bit offset (jump displacement / memory offset)
    bytes 4-7   signed 32-bit immediate

The 64-bit immediate load (``lddw``) is the only two-slot instruction:
the second slot carries the high 32 bits of the immediate and must have
every other field zero.

Supported subset: full ALU64/ALU32 arithmetic and logic, byte swaps,
``lddw``, LDX/ST/STX with b/h/w/dw widths, and the 64-bit JMP class.
Signed division and floating point have no opcodes in eBPF and therefore
no representation here; atomics and the 32-bit jump class are rejected
as unknown opcodes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum

from . import OffloadError

__all__ = [
    "DecodeError", "UnknownOpcode", "ReservedFieldNonzero", "MissingSecondSlot",
    "TruncatedInput", "EmptyProgram",
    "Kind", "InsnSpec", "OPCODES", "MNEMONICS",
    "Instruction", "Program",
    "decode_instruction", "decode_program", "encode_instruction", "encode_program",
    "SLOT_SIZE", "NUM_REGISTERS", "FRAME_POINTER",
    "HELPER_CALL", "LOCAL_CALL",
]

SLOT_SIZE = 8
NUM_REGISTERS = 11      # r0..r10
FRAME_POINTER = 10      # r10, read-only frame pointer

# src field of a call instruction: 0 = registered helper, 1 = local
# (BPF-to-BPF) call as emitted by compilers.  Local calls only appear in
# unpatched objects; the verifier rejects them in runnable programs.
HELPER_CALL = 0
LOCAL_CALL = 1

_SLOT = struct.Struct("<BBhi")


class DecodeError(OffloadError):
    """Raised when bytes do not form a supported instruction."""

    def __init__(self, message: str, slot: int | None = None):
        self.slot = slot
        super().__init__(message if slot is None else f"slot {slot}: {message}")


class UnknownOpcode(DecodeError):
    def __init__(self, opcode: int, slot: int | None = None):
        self.opcode = opcode
        super().__init__(f"unknown or unsupported opcode 0x{opcode:02x}", slot)


class ReservedFieldNonzero(DecodeError):
    pass


class MissingSecondSlot(DecodeError):
    pass


class TruncatedInput(DecodeError):
    pass


class EmptyProgram(DecodeError):
    pass


class Kind(Enum):
    """Operand shape of an instruction, used for field validation."""

    ALU_REG = "alu_reg"      # dst op= src          (imm, offset zero)
    ALU_IMM = "alu_imm"      # dst op= imm          (src, offset zero)
    ALU_UNARY = "alu_unary"  # dst = op dst         (src, imm, offset zero)
    SWAP = "swap"            # byte swap, imm selects 16/32/64
    LDDW = "lddw"            # dst = imm64, two slots
    MEM_LDX = "mem_ldx"      # dst = *(size *)(src + offset)
    MEM_ST = "mem_st"        # *(size *)(dst + offset) = imm
    MEM_STX = "mem_stx"      # *(size *)(dst + offset) = src
    JA = "ja"                # pc += offset
    JMP_REG = "jmp_reg"      # if dst cmp src: pc += offset
    JMP_IMM = "jmp_imm"      # if dst cmp imm: pc += offset
    CALL = "call"            # helper (src=0) or local (src=1) call
    EXIT = "exit"


@dataclass(frozen=True)
class InsnSpec:
    """Static description of one opcode."""

    opcode: int
    mnemonic: str        # swap opcodes carry the "le"/"be" stem; width comes from imm
    kind: Kind
    width: int = 0       # memory access width in bytes, 0 for non-memory ops
    alu_op: str = ""     # semantic tag for the interpreter ("add", "jeq", ...)
    bits: int = 64       # 32 for the ALU32 class


def _build_table() -> dict[int, InsnSpec]:
    table: dict[int, InsnSpec] = {}

    def put(spec: InsnSpec) -> None:
        assert spec.opcode not in table
        table[spec.opcode] = spec

    # ALU operation field values shared by the ALU64 (0x07) and ALU32 (0x04)
    # classes; each op has a K (imm, +0x00) and X (reg, +0x08) source form.
    binary_alu = [
        (0x00, "add"), (0x10, "sub"), (0x20, "mul"), (0x30, "div"),
        (0x40, "or"), (0x50, "and"), (0x60, "lsh"), (0x70, "rsh"),
        (0x90, "mod"), (0xa0, "xor"), (0xb0, "mov"), (0xc0, "arsh"),
    ]
    for cls, bits, suffix in ((0x07, 64, "64"), (0x04, 32, "32")):
        for op, name in binary_alu:
            put(InsnSpec(cls | op, name + suffix, Kind.ALU_IMM, alu_op=name, bits=bits))
            put(InsnSpec(cls | op | 0x08, name + suffix, Kind.ALU_REG, alu_op=name, bits=bits))
        put(InsnSpec(cls | 0x80, "neg" + suffix, Kind.ALU_UNARY, alu_op="neg", bits=bits))

    # Byte swaps live in the ALU32 class with op 0xd0; the source bit picks
    # le (K) or be (X) and imm picks the width.
    put(InsnSpec(0xd4, "le", Kind.SWAP, alu_op="le", bits=64))
    put(InsnSpec(0xdc, "be", Kind.SWAP, alu_op="be", bits=64))

    put(InsnSpec(0x18, "lddw", Kind.LDDW))

    widths = [(0x00, 4, "w"), (0x08, 2, "h"), (0x10, 1, "b"), (0x18, 8, "dw")]
    for size_bits, width, letter in widths:
        put(InsnSpec(0x61 | size_bits, "ldx" + letter, Kind.MEM_LDX, width=width))
        put(InsnSpec(0x62 | size_bits, "st" + letter, Kind.MEM_ST, width=width))
        put(InsnSpec(0x63 | size_bits, "stx" + letter, Kind.MEM_STX, width=width))

    put(InsnSpec(0x05, "ja", Kind.JA))
    conds = [
        (0x10, "jeq"), (0x20, "jgt"), (0x30, "jge"), (0x40, "jset"),
        (0x50, "jne"), (0x60, "jsgt"), (0x70, "jsge"),
        (0xa0, "jlt"), (0xb0, "jle"), (0xc0, "jslt"), (0xd0, "jsle"),
    ]
    for op, name in conds:
        put(InsnSpec(0x05 | op, name, Kind.JMP_IMM, alu_op=name))
        put(InsnSpec(0x05 | op | 0x08, name, Kind.JMP_REG, alu_op=name))
    put(InsnSpec(0x85, "call", Kind.CALL))
    put(InsnSpec(0x95, "exit", Kind.EXIT))

    return table


OPCODES: dict[int, InsnSpec] = _build_table()

#: Every recognized mnemonic, including the width-suffixed swap forms.
MNEMONICS: frozenset[str] = frozenset(
    s.mnemonic for s in OPCODES.values() if s.kind is not Kind.SWAP
) | frozenset(f"{stem}{w}" for stem in ("le", "be") for w in (16, 32, 64))

_SWAP_WIDTHS = (16, 32, 64)


def _check(cond: bool, message: str, slot: int | None) -> None:
    if not cond:
        raise ReservedFieldNonzero(message, slot)


@dataclass(frozen=True)
class Instruction:
    """One decoded instruction.

    ``wide_imm`` is present exactly for ``lddw``; all other fields mirror
    the wire layout.  Construction validates field ranges and the
    reserved-field rules for the opcode, so every Instruction encodes.
    """

    opcode: int
    dst: int = 0
    src: int = 0
    offset: int = 0
    imm: int = 0
    wide_imm: int | None = None

    def __post_init__(self):
        spec = OPCODES.get(self.opcode)
        if spec is None:
            raise UnknownOpcode(self.opcode)
        if not 0 <= self.dst < NUM_REGISTERS:
            raise DecodeError(f"dst register r{self.dst} out of range")
        if not 0 <= self.src < NUM_REGISTERS:
            raise DecodeError(f"src register r{self.src} out of range")
        if not -0x8000 <= self.offset <= 0x7FFF:
            raise DecodeError(f"offset {self.offset} outside signed 16-bit range")
        if not -0x8000_0000 <= self.imm <= 0x7FFF_FFFF:
            raise DecodeError(f"immediate {self.imm} outside signed 32-bit range")
        if self.wide_imm is not None:
            if spec.kind is not Kind.LDDW:
                raise DecodeError("wide_imm only valid for lddw")
            if not 0 <= self.wide_imm < 1 << 64:
                raise DecodeError("wide immediate outside unsigned 64-bit range")
        elif spec.kind is Kind.LDDW:
            raise DecodeError("lddw requires wide_imm")
        self._validate_reserved(spec)

    def _validate_reserved(self, spec: InsnSpec) -> None:
        kind = spec.kind
        slot = None
        if kind in (Kind.ALU_REG, Kind.MEM_LDX, Kind.MEM_STX, Kind.JMP_REG):
            _check(self.imm == 0, "imm must be zero for register-source form", slot)
        if kind in (Kind.ALU_IMM, Kind.ALU_UNARY, Kind.SWAP, Kind.MEM_ST,
                    Kind.JMP_IMM, Kind.JA, Kind.LDDW, Kind.EXIT):
            _check(self.src == 0, "src must remain zero", slot)
        if kind in (Kind.ALU_REG, Kind.ALU_IMM, Kind.ALU_UNARY, Kind.SWAP,
                    Kind.LDDW, Kind.CALL, Kind.EXIT):
            _check(self.offset == 0, "offset must remain zero", slot)
        if kind in (Kind.ALU_UNARY, Kind.JA):
            _check(self.imm == 0, "imm must remain zero", slot)
        if kind is Kind.JA:
            _check(self.dst == 0, "dst must remain zero for ja", slot)
        if kind is Kind.SWAP:
            if self.imm not in _SWAP_WIDTHS:
                raise DecodeError(f"byte swap width must be 16/32/64, got {self.imm}")
        if kind is Kind.CALL:
            _check(self.dst == 0, "dst must remain zero for call", slot)
            if self.src not in (HELPER_CALL, LOCAL_CALL):
                raise ReservedFieldNonzero(
                    f"call src must be 0 (helper) or 1 (local), got {self.src}", slot)
        if kind is Kind.EXIT:
            _check(self.dst == 0 and self.imm == 0, "exit takes no operands", slot)

    @property
    def spec(self) -> InsnSpec:
        return OPCODES[self.opcode]

    @property
    def kind(self) -> Kind:
        return OPCODES[self.opcode].kind

    @property
    def mnemonic(self) -> str:
        spec = OPCODES[self.opcode]
        if spec.kind is Kind.SWAP:
            return f"{spec.mnemonic}{self.imm}"
        return spec.mnemonic

    @property
    def is_wide(self) -> bool:
        return self.kind is Kind.LDDW

    @property
    def slots(self) -> int:
        return 2 if self.is_wide else 1

    @property
    def is_jump(self) -> bool:
        return self.kind in (Kind.JA, Kind.JMP_REG, Kind.JMP_IMM)


@dataclass(frozen=True)
class Program:
    """An ordered, non-empty instruction sequence.

    ``slot_count`` counts 8-byte slots, so it exceeds the instruction
    count by one per ``lddw``.  Jump-target bounds and the trailing-exit
    rule are the verifier's responsibility, not the constructor's, so
    that malformed programs can be built and then diagnosed.
    """

    instructions: tuple[Instruction, ...]
    slot_count: int = -1

    def __post_init__(self):
        instructions = tuple(self.instructions)
        object.__setattr__(self, "instructions", instructions)
        if not instructions:
            raise EmptyProgram("program has no instructions")
        object.__setattr__(
            self, "slot_count", sum(i.slots for i in instructions))

    def slot_index(self) -> tuple[int, ...]:
        """Slot index of each instruction, in order."""
        out = []
        slot = 0
        for insn in self.instructions:
            out.append(slot)
            slot += insn.slots
        return tuple(out)

    def instruction_at_slot(self) -> dict[int, tuple[int, Instruction]]:
        """Map of slot index -> (instruction index, Instruction)."""
        return {
            slot: (i, insn)
            for i, (slot, insn) in enumerate(zip(self.slot_index(), self.instructions))
        }


def decode_instruction(slot: bytes, next_slot: bytes | None = None,
                       slot_index: int | None = None) -> Instruction:
    """Decode one 8-byte slot (two for ``lddw``) into an Instruction.

    ``next_slot`` must be supplied exactly when the opcode is the 64-bit
    immediate load; callers consuming a stream should advance by
    ``instruction.slots``.
    """
    if len(slot) != SLOT_SIZE:
        raise TruncatedInput(f"instruction slot must be 8 bytes, got {len(slot)}", slot_index)
    opcode, regs, offset, imm = _SLOT.unpack(slot)
    dst, src = regs & 0x0F, regs >> 4
    spec = OPCODES.get(opcode)
    if spec is None:
        raise UnknownOpcode(opcode, slot_index)

    wide_imm = None
    if spec.kind is Kind.LDDW:
        if src != 0:
            raise ReservedFieldNonzero(
                "lddw with nonzero src is a map pseudo-load, unsupported", slot_index)
        if next_slot is None:
            raise MissingSecondSlot("lddw needs a second slot", slot_index)
        if len(next_slot) != SLOT_SIZE:
            raise TruncatedInput("lddw second slot truncated", slot_index)
        op2, regs2, off2, imm2 = _SLOT.unpack(next_slot)
        if op2 != 0 or regs2 != 0 or off2 != 0:
            raise ReservedFieldNonzero(
                "lddw second slot must only carry the high immediate", slot_index)
        wide_imm = (imm2 & 0xFFFF_FFFF) << 32 | (imm & 0xFFFF_FFFF)
        imm = 0

    try:
        return Instruction(opcode=opcode, dst=dst, src=src, offset=offset,
                           imm=imm, wide_imm=wide_imm)
    except DecodeError as exc:
        if slot_index is not None and exc.slot is None:
            raise type(exc)(str(exc), slot_index) from None
        raise


def encode_instruction(instr: Instruction) -> bytes:
    """Encode to 8 bytes, or 16 for ``lddw``."""
    if instr.wide_imm is not None:
        low = instr.wide_imm & 0xFFFF_FFFF
        high = instr.wide_imm >> 32
        first = _SLOT.pack(instr.opcode, instr.src << 4 | instr.dst, instr.offset,
                           low - (1 << 32) if low >= 1 << 31 else low)
        second = _SLOT.pack(0, 0, 0, high - (1 << 32) if high >= 1 << 31 else high)
        return first + second
    return _SLOT.pack(instr.opcode, instr.src << 4 | instr.dst, instr.offset, instr.imm)


def decode_program(data: bytes) -> Program:
    """Decode a byte string of 8-byte slots into a Program."""
    if len(data) % SLOT_SIZE != 0:
        raise TruncatedInput(
            f"bytecode length {len(data)} is not a multiple of 8")
    if not data:
        raise EmptyProgram("empty bytecode")
    instructions = []
    slot = 0
    total = len(data) // SLOT_SIZE
    while slot < total:
        chunk = data[slot * SLOT_SIZE:(slot + 1) * SLOT_SIZE]
        nxt = None
        if OPCODES.get(chunk[0]) is not None and OPCODES[chunk[0]].kind is Kind.LDDW:
            nxt = data[(slot + 1) * SLOT_SIZE:(slot + 2) * SLOT_SIZE]
            if not nxt:
                raise MissingSecondSlot("lddw needs a second slot", slot)
        insn = decode_instruction(chunk, nxt, slot_index=slot)
        instructions.append(insn)
        slot += insn.slots
    return Program(tuple(instructions))


def encode_program(program: Program) -> bytes:
    """Inverse of :func:`decode_program`."""
    return b"".join(encode_instruction(i) for i in program.instructions)
