"""Textual assembler/disassembler and the patched-program file format.

Grammar, one instruction per line:

    mov64 r1, 0x2a          # ALU, immediate source (hex or decimal)
    add64 r1, r2            # ALU, register source
    neg64 r1                # unary
    le16 r1                 # byte swap, width in the mnemonic
    lddw r2, 0x100000000    # 64-bit immediate load
    ldxw r0, [r1 + 4]       # loads and stores use [rN +/- off]
    stxdw [r10 - 8], r0
    stw [r1 + 0], 7
    ja next                 # jump targets are labels or signed offsets
    jne r1, 0, -3
    call 1                  # helper call by index
    call local 2            # unpatched BPF-to-BPF call by function index
    exit

``label:`` defines a jump target, alone on a line or before an
instruction.  ``#`` starts a comment.  ``.func NAME`` opens a function
and switches the result type from Program to AsmModule; in module text,
``call NAME`` resolves to a local call by function position.

The patched-program file is plaintext: line 1 the expected result
(decimal u64), line 2 the static memory size in bytes (decimal), every
further line assembly of a single flat function ending in ``exit``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from . import OffloadError
from .isa import (
    HELPER_CALL,
    LOCAL_CALL,
    OPCODES,
    Instruction,
    InsnSpec,
    Kind,
    Program,
)

__all__ = [
    "AsmError", "AsmSyntaxError", "UnknownMnemonic", "UnsupportedOperation",
    "UnresolvedLabel", "ImmediateOutOfRange",
    "MissingHeaderLine", "NonNumericHeader", "MissingTrailingExit",
    "AsmFunction", "AsmModule", "PatchedProgramFile",
    "assemble", "disassemble", "disassemble_module",
    "parse_patched", "serialize_patched",
]

U64_MAX = (1 << 64) - 1


class AsmError(OffloadError):
    """Base for assembler errors; carries the source position when known."""

    def __init__(self, message: str, line: int | None = None,
                 column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}: " if column is None else f"line {line}, col {column}: "
        super().__init__(where + message)


class AsmSyntaxError(AsmError):
    pass


class UnknownMnemonic(AsmError):
    pass


class UnsupportedOperation(AsmError):
    pass


class UnresolvedLabel(AsmError):
    pass


class ImmediateOutOfRange(AsmError):
    pass


class MissingHeaderLine(AsmError):
    pass


class NonNumericHeader(AsmError):
    pass


class MissingTrailingExit(AsmError):
    pass


@dataclass(frozen=True)
class AsmFunction:
    """One named function body from module-form assembly."""

    name: str
    instructions: tuple[Instruction, ...]

    def __post_init__(self):
        object.__setattr__(self, "instructions", tuple(self.instructions))
        if not self.instructions:
            raise AsmSyntaxError(f"function '{self.name}' has no instructions")

    @property
    def slot_count(self) -> int:
        return sum(i.slots for i in self.instructions)


@dataclass(frozen=True)
class AsmModule:
    """Multi-function assembly unit; the entry function comes first."""

    functions: tuple[AsmFunction, ...]
    entry_name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "functions", tuple(self.functions))
        if not self.functions:
            raise AsmSyntaxError("module has no functions")
        if not self.entry_name:
            object.__setattr__(self, "entry_name", self.functions[0].name)
        names = [f.name for f in self.functions]
        if len(set(names)) != len(names):
            raise AsmSyntaxError("duplicate function name in module")
        if self.entry_name not in names:
            raise UnresolvedLabel(f"entry function '{self.entry_name}' not defined")

    def function_index(self, name: str) -> int:
        for i, f in enumerate(self.functions):
            if f.name == name:
                return i
        raise UnresolvedLabel(f"no function named '{name}'")

    @property
    def entry(self) -> AsmFunction:
        return self.functions[self.function_index(self.entry_name)]


@dataclass(frozen=True)
class PatchedProgramFile:
    """Parsed patched-program file: headers plus a flat, exit-terminated body."""

    expected_output: int
    static_mem_size: int
    body: Program

    def __post_init__(self):
        if not 0 <= self.expected_output <= U64_MAX:
            raise NonNumericHeader("expected output must be a u64")
        if not 0 <= self.static_mem_size <= U64_MAX:
            raise NonNumericHeader("static memory size must be a u64")
        if self.body.instructions[-1].kind is not Kind.EXIT:
            raise MissingTrailingExit("program body must end with exit")


# Mnemonics that name operations this instruction set cannot express.
_UNSUPPORTED: dict[str, str] = {}
for _m in ("sdiv", "sdiv32", "sdiv64", "smod", "smod32", "smod64"):
    _UNSUPPORTED[_m] = ("signed division/modulo has no opcode here; "
                        "convert to unsigned div/mod")
for _m in ("fadd", "fsub", "fmul", "fdiv", "fneg", "fsqrt", "fmod"):
    _UNSUPPORTED[_m] = "floating point has no opcodes in this instruction set"

_ALU_IMM_OP: dict[str, int] = {}
_ALU_REG_OP: dict[str, int] = {}
_UNARY_OP: dict[str, int] = {}
_MEM_OP: dict[str, tuple[int, Kind]] = {}
_JMP_IMM_OP: dict[str, int] = {}
_JMP_REG_OP: dict[str, int] = {}
for _opcode, _spec in OPCODES.items():
    if _spec.kind is Kind.ALU_IMM:
        _ALU_IMM_OP[_spec.mnemonic] = _opcode
    elif _spec.kind is Kind.ALU_REG:
        _ALU_REG_OP[_spec.mnemonic] = _opcode
    elif _spec.kind is Kind.ALU_UNARY:
        _UNARY_OP[_spec.mnemonic] = _opcode
    elif _spec.kind in (Kind.MEM_LDX, Kind.MEM_ST, Kind.MEM_STX):
        _MEM_OP[_spec.mnemonic] = (_opcode, _spec.kind)
    elif _spec.kind is Kind.JMP_IMM:
        _JMP_IMM_OP[_spec.mnemonic] = _opcode
    elif _spec.kind is Kind.JMP_REG:
        _JMP_REG_OP[_spec.mnemonic] = _opcode

_SWAP_RE = re.compile(r"^(le|be)(16|32|64)$")
_LABEL_RE = re.compile(r"^([A-Za-z_][\w.$]*):")
_FUNC_RE = re.compile(r"^\.func\s+([A-Za-z_][\w.$]*)\s*$")
_REG_RE = re.compile(r"^r(\d+)$")
_NUM_RE = re.compile(r"^[+-]?(0[xX][0-9A-Fa-f]+|\d+)$")
_MEMREF_RE = re.compile(
    r"^\[\s*(r\d+)\s*(?:([+-])\s*(0[xX][0-9A-Fa-f]+|\d+)\s*)?\]$")
_IDENT_RE = re.compile(r"^[A-Za-z_][\w.$]*$")
_LOCAL_CALL_RE = re.compile(r"^local\s+([+-]?(?:0[xX][0-9A-Fa-f]+|\d+))$")


@dataclass
class _SourceLine:
    number: int
    labels: list[str]
    mnemonic: str = ""
    column: int = 0
    operands: list[str] = field(default_factory=list)
    slot: int = 0

    @property
    def has_instruction(self) -> bool:
        return bool(self.mnemonic)


def _split_line(raw: str, number: int) -> _SourceLine | None:
    """Strip comments, pull label definitions, split mnemonic/operands."""
    text = raw.split("#", 1)[0].rstrip()
    out = _SourceLine(number=number, labels=[])
    rest = text.lstrip()
    while True:
        m = _LABEL_RE.match(rest)
        if not m:
            break
        out.labels.append(m.group(1))
        rest = rest[m.end():].lstrip()
    if not rest:
        return out if out.labels else None
    parts = rest.split(None, 1)
    out.mnemonic = parts[0]
    out.column = raw.find(parts[0]) + 1
    if len(parts) > 1:
        out.operands = [op.strip() for op in parts[1].split(",")]
        if any(not op for op in out.operands):
            raise AsmSyntaxError("empty operand", number, out.column)
    return out


def _parse_register(tok: str, line: int, col: int) -> int:
    m = _REG_RE.match(tok)
    if not m or int(m.group(1)) > 10:
        raise AsmSyntaxError(f"expected register r0..r10, got '{tok}'", line, col)
    return int(m.group(1))


def _parse_number(tok: str, line: int, col: int, lo: int, hi: int,
                  what: str) -> int:
    if not _NUM_RE.match(tok):
        raise AsmSyntaxError(f"expected {what}, got '{tok}'", line, col)
    value = int(tok, 0)
    if not lo <= value <= hi:
        raise ImmediateOutOfRange(
            f"{what} {tok} outside [{lo}, {hi}]", line, col)
    return value


def _parse_imm32(tok: str, line: int, col: int) -> int:
    # accept the unsigned spellings 0x80000000..0xffffffff as their
    # two's-complement value
    value = _parse_number(tok, line, col, -0x8000_0000, 0xFFFF_FFFF, "immediate")
    return value - (1 << 32) if value > 0x7FFF_FFFF else value


def _parse_memref(tok: str, line: int, col: int) -> tuple[int, int]:
    m = _MEMREF_RE.match(tok)
    if not m:
        raise AsmSyntaxError(f"expected [rN + off], got '{tok}'", line, col)
    reg = _parse_register(m.group(1), line, col)
    offset = 0
    if m.group(3) is not None:
        offset = int(m.group(3), 0)
        if m.group(2) == "-":
            offset = -offset
        if not -0x8000 <= offset <= 0x7FFF:
            raise ImmediateOutOfRange(
                f"memory offset {offset} outside signed 16-bit range", line, col)
    return reg, offset


def _expect_operands(sl: _SourceLine, count: int) -> None:
    if len(sl.operands) != count:
        raise AsmSyntaxError(
            f"'{sl.mnemonic}' takes {count} operand(s), got {len(sl.operands)}",
            sl.number, sl.column)


def _instruction_slots(sl: _SourceLine) -> int:
    return 2 if sl.mnemonic == "lddw" else 1


def _jump_offset(target: str, slot: int, labels: dict[str, int],
                 line: int, col: int) -> int:
    if _NUM_RE.match(target):
        return _parse_number(target, line, col, -0x8000, 0x7FFF, "jump offset")
    if not _IDENT_RE.match(target):
        raise AsmSyntaxError(f"bad jump target '{target}'", line, col)
    if target not in labels:
        raise UnresolvedLabel(f"label '{target}' is not defined", line, col)
    offset = labels[target] - (slot + 1)
    if not -0x8000 <= offset <= 0x7FFF:
        raise ImmediateOutOfRange(
            f"jump to '{target}' spans {offset} slots, outside 16 bits", line, col)
    return offset


def _build(sl: _SourceLine, labels: dict[str, int],
           func_index: dict[str, int] | None) -> Instruction:
    mn, line, col = sl.mnemonic, sl.number, sl.column
    if mn in _UNSUPPORTED:
        raise UnsupportedOperation(_UNSUPPORTED[mn], line, col)

    swap = _SWAP_RE.match(mn)
    if swap:
        _expect_operands(sl, 1)
        dst = _parse_register(sl.operands[0], line, col)
        opcode = 0xD4 if swap.group(1) == "le" else 0xDC
        return Instruction(opcode, dst=dst, imm=int(swap.group(2)))

    if mn == "exit":
        _expect_operands(sl, 0)
        return Instruction(0x95)

    if mn == "ja":
        _expect_operands(sl, 1)
        return Instruction(0x05, offset=_jump_offset(
            sl.operands[0], sl.slot, labels, line, col))

    if mn == "call":
        _expect_operands(sl, 1)
        target = sl.operands[0]
        local = _LOCAL_CALL_RE.match(target)
        if local:
            index = _parse_number(local.group(1), line, col,
                                  -0x8000_0000, 0x7FFF_FFFF, "function index")
            return Instruction(0x85, src=LOCAL_CALL, imm=index)
        if _NUM_RE.match(target):
            index = _parse_number(target, line, col,
                                  -0x8000_0000, 0x7FFF_FFFF, "helper index")
            return Instruction(0x85, src=HELPER_CALL, imm=index)
        if not _IDENT_RE.match(target):
            raise AsmSyntaxError(f"bad call target '{target}'", line, col)
        if func_index is None or target not in func_index:
            raise UnresolvedLabel(
                f"call target '{target}' is not a function in this unit", line, col)
        return Instruction(0x85, src=LOCAL_CALL, imm=func_index[target])

    if mn == "lddw":
        _expect_operands(sl, 2)
        dst = _parse_register(sl.operands[0], line, col)
        value = _parse_number(sl.operands[1], line, col,
                              -(1 << 63), U64_MAX, "64-bit immediate")
        return Instruction(0x18, dst=dst, wide_imm=value & U64_MAX)

    if mn in _MEM_OP:
        opcode, kind = _MEM_OP[mn]
        _expect_operands(sl, 2)
        if kind is Kind.MEM_LDX:
            dst = _parse_register(sl.operands[0], line, col)
            src, offset = _parse_memref(sl.operands[1], line, col)
            return Instruction(opcode, dst=dst, src=src, offset=offset)
        dst, offset = _parse_memref(sl.operands[0], line, col)
        if kind is Kind.MEM_ST:
            return Instruction(opcode, dst=dst, offset=offset,
                               imm=_parse_imm32(sl.operands[1], line, col))
        return Instruction(opcode, dst=dst, offset=offset,
                           src=_parse_register(sl.operands[1], line, col))

    if mn in _JMP_IMM_OP:
        _expect_operands(sl, 3)
        dst = _parse_register(sl.operands[0], line, col)
        offset = _jump_offset(sl.operands[2], sl.slot, labels, line, col)
        if _REG_RE.match(sl.operands[1]):
            src = _parse_register(sl.operands[1], line, col)
            return Instruction(_JMP_REG_OP[mn], dst=dst, src=src, offset=offset)
        imm = _parse_imm32(sl.operands[1], line, col)
        return Instruction(_JMP_IMM_OP[mn], dst=dst, imm=imm, offset=offset)

    if mn in _UNARY_OP:
        _expect_operands(sl, 1)
        return Instruction(_UNARY_OP[mn],
                           dst=_parse_register(sl.operands[0], line, col))

    if mn in _ALU_IMM_OP:
        _expect_operands(sl, 2)
        dst = _parse_register(sl.operands[0], line, col)
        if _REG_RE.match(sl.operands[1]):
            src = _parse_register(sl.operands[1], line, col)
            return Instruction(_ALU_REG_OP[mn], dst=dst, src=src)
        return Instruction(_ALU_IMM_OP[mn], dst=dst,
                           imm=_parse_imm32(sl.operands[1], line, col))

    raise UnknownMnemonic(f"unknown mnemonic '{mn}'", line, col)


def _assemble_body(lines: list[_SourceLine],
                   func_index: dict[str, int] | None,
                   context: str) -> tuple[Instruction, ...]:
    labels: dict[str, int] = {}
    slot = 0
    for sl in lines:
        for name in sl.labels:
            if name in labels:
                raise AsmSyntaxError(
                    f"label '{name}' defined twice in {context}", sl.number)
            labels[name] = slot
        if sl.has_instruction:
            sl.slot = slot
            slot += _instruction_slots(sl)
    out = []
    for sl in lines:
        if not sl.has_instruction:
            continue
        try:
            out.append(_build(sl, labels, func_index))
        except AsmError:
            raise
        except OffloadError as exc:
            raise AsmSyntaxError(str(exc), sl.number, sl.column) from exc
    if not out:
        raise AsmSyntaxError(f"no instructions in {context}")
    return tuple(out)


def assemble(text: str) -> Program | AsmModule:
    """Assemble source text.

    Returns a Program for flat text and an AsmModule when the text uses
    ``.func``.  Assembling checks syntax and operand ranges only; bounds
    of jump targets and the trailing-exit rule are verifier work.
    """
    flat: list[_SourceLine] = []
    functions: list[tuple[str, list[_SourceLine]]] = []
    current: list[_SourceLine] | None = None
    for number, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].strip()
        if stripped.startswith(".func"):
            m = _FUNC_RE.match(stripped)
            if not m:
                raise AsmSyntaxError("bad .func directive", number)
            name = m.group(1)
            if any(n == name for n, _ in functions):
                raise AsmSyntaxError(f"function '{name}' defined twice", number)
            current = []
            functions.append((name, current))
            continue
        if stripped.startswith("."):
            raise AsmSyntaxError(f"unknown directive '{stripped.split()[0]}'", number)
        sl = _split_line(raw, number)
        if sl is None:
            continue
        if current is not None:
            current.append(sl)
        else:
            flat.append(sl)

    if functions:
        stray = next((sl for sl in flat if sl.has_instruction), None)
        if stray is not None:
            raise AsmSyntaxError(
                "instructions before the first .func directive", stray.number)
        index = {name: i for i, (name, _) in enumerate(functions)}
        built = tuple(
            AsmFunction(name, _assemble_body(lines, index, f"function '{name}'"))
            for name, lines in functions)
        return AsmModule(built)
    return Program(_assemble_body(flat, None, "source"))


def _format_imm(value: int) -> str:
    return f"-{-value:#x}" if value < 0 else f"{value:#x}"


def _format_memref(reg: int, offset: int) -> str:
    sign = "-" if offset < 0 else "+"
    return f"[r{reg} {sign} {abs(offset)}]"


def _format_instruction(insn: Instruction,
                        call_names: list[str] | None = None) -> str:
    spec: InsnSpec = insn.spec
    kind = spec.kind
    mn = insn.mnemonic
    if kind is Kind.EXIT:
        return "exit"
    if kind is Kind.JA:
        return f"ja {insn.offset:+d}"
    if kind is Kind.CALL:
        if insn.src == LOCAL_CALL:
            if call_names is not None and 0 <= insn.imm < len(call_names):
                return f"call {call_names[insn.imm]}"
            return f"call local {insn.imm}"
        return f"call {insn.imm}"
    if kind is Kind.LDDW:
        return f"lddw r{insn.dst}, {insn.wide_imm:#x}"
    if kind is Kind.SWAP:
        return f"{mn} r{insn.dst}"
    if kind is Kind.ALU_UNARY:
        return f"{mn} r{insn.dst}"
    if kind is Kind.ALU_REG:
        return f"{mn} r{insn.dst}, r{insn.src}"
    if kind is Kind.ALU_IMM:
        return f"{mn} r{insn.dst}, {_format_imm(insn.imm)}"
    if kind is Kind.MEM_LDX:
        return f"{mn} r{insn.dst}, {_format_memref(insn.src, insn.offset)}"
    if kind is Kind.MEM_ST:
        return f"{mn} {_format_memref(insn.dst, insn.offset)}, {_format_imm(insn.imm)}"
    if kind is Kind.MEM_STX:
        return f"{mn} {_format_memref(insn.dst, insn.offset)}, r{insn.src}"
    if kind is Kind.JMP_REG:
        return f"{mn} r{insn.dst}, r{insn.src}, {insn.offset:+d}"
    assert kind is Kind.JMP_IMM
    return f"{mn} r{insn.dst}, {_format_imm(insn.imm)}, {insn.offset:+d}"


def disassemble(program: Program) -> str:
    """Flat disassembly; assemble(disassemble(p)) structurally equals p."""
    return "\n".join(_format_instruction(i) for i in program.instructions)


def disassemble_module(module: AsmModule) -> str:
    """Module disassembly with ``.func`` headers and named call targets."""
    names = [f.name for f in module.functions]
    lines = []
    for func in module.functions:
        lines.append(f".func {func.name}")
        lines.extend(
            "    " + _format_instruction(i, call_names=names)
            for i in func.instructions)
    return "\n".join(lines)


def _parse_header(token: str, number: int, what: str) -> int:
    if not re.fullmatch(r"\d+", token):
        raise NonNumericHeader(
            f"{what} must be a decimal integer, got '{token}'", number)
    value = int(token)
    if value > U64_MAX:
        raise NonNumericHeader(f"{what} exceeds u64", number)
    return value


def parse_patched(text: str) -> PatchedProgramFile:
    """Parse the plaintext patched-program format."""
    lines = text.splitlines()
    if len(lines) < 2:
        raise MissingHeaderLine(
            "need an expected-output line and a memory-size line")
    expected = _parse_header(lines[0].strip(), 1, "expected output")
    mem_size = _parse_header(lines[1].strip(), 2, "static memory size")
    body_text = "\n".join(lines[2:])
    body = assemble(body_text)
    if isinstance(body, AsmModule):
        raise AsmSyntaxError("patched files hold a single flat function")
    if body.instructions[-1].kind is not Kind.EXIT:
        raise MissingTrailingExit("program body must end with exit")
    return PatchedProgramFile(expected, mem_size, body)


def serialize_patched(patched: PatchedProgramFile) -> str:
    """Inverse of parse_patched; ends with a newline."""
    return (f"{patched.expected_output}\n{patched.static_mem_size}\n"
            f"{disassemble(patched.body)}\n")
