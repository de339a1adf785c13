"""Turns multi-function eBPF objects into single-function patched programs.

Pipeline: ``load_object`` reads a 64-bit little-endian relocatable
object (or ``EbpfObject.from_asm_module`` takes assembled text), then
``inline_calls`` splices every callee body into its call site and
rewrites control flow, and ``make_patched`` wraps the result with its
expected-output and memory-size headers.

Inlining notes:

- A static ``ja`` cannot encode a return address, so a callee shared by
  several call sites is duplicated per site.
- Each spliced callee's ``exit`` becomes a ``ja`` to the first slot
  after the splice; a tail exit degenerates to ``ja +0``.  The entry
  function's own exits are preserved.
- Pre-existing jump offsets in the caller are re-fixed after splicing.
- Call graphs must be acyclic; inline depth is capped at 32.

Compilers emit local (BPF-to-BPF) calls in two shapes: a pseudo ``call
-1`` whose callee is named by a relocation entry, or, for same-section
static callees, an immediate holding the slot displacement with no
relocation.  Both are resolved here; a call with neither is exactly the
unresolvable case and errors loudly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

from . import OffloadError
from .asm import AsmModule, PatchedProgramFile
from .isa import (
    HELPER_CALL,
    LOCAL_CALL,
    SLOT_SIZE,
    Instruction,
    Kind,
    Program,
    decode_program,
)

__all__ = [
    "PatchError", "NotAnObjectFile", "BigEndianObjectRejected",
    "UnresolvedCall", "OverlappingSymbols", "RecursionUnsupported",
    "OffsetOverflow", "MissingEntry", "InvalidJumpTarget",
    "FunctionBlock", "EbpfObject",
    "load_object", "inline_calls", "make_patched",
    "MAX_INLINE_DEPTH",
]

MAX_INLINE_DEPTH = 32


class PatchError(OffloadError):
    pass


class NotAnObjectFile(PatchError):
    pass


class BigEndianObjectRejected(PatchError):
    pass


class UnresolvedCall(PatchError):
    def __init__(self, slot: int, message: str):
        self.slot = slot
        super().__init__(f"slot {slot}: {message}")


class OverlappingSymbols(PatchError):
    pass


class RecursionUnsupported(PatchError):
    def __init__(self, cycle: tuple[str, ...], message: str | None = None):
        self.cycle = cycle
        super().__init__(message or "call cycle: " + " -> ".join(cycle))


class OffsetOverflow(PatchError):
    pass


class MissingEntry(PatchError):
    pass


class InvalidJumpTarget(PatchError):
    pass


@dataclass(frozen=True)
class FunctionBlock:
    """One function: instructions plus its resolved local call sites.

    Local calls are in normal form — imm is the callee's index within
    the containing EbpfObject.
    """

    name: str
    instructions: tuple[Instruction, ...]
    call_sites: tuple[tuple[int, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "instructions", tuple(self.instructions))
        object.__setattr__(self, "call_sites", tuple(self.call_sites))

    @property
    def slot_count(self) -> int:
        return sum(i.slots for i in self.instructions)


@dataclass(frozen=True)
class EbpfObject:
    """A set of functions with one designated entry."""

    functions: tuple[FunctionBlock, ...]
    entry: str

    def __post_init__(self):
        object.__setattr__(self, "functions", tuple(self.functions))
        names = [f.name for f in self.functions]
        if self.entry not in names:
            raise MissingEntry(f"entry function '{self.entry}' not in object")
        if len(set(names)) != len(names):
            raise NotAnObjectFile("duplicate function names")
        for func in self.functions:
            for slot, callee in func.call_sites:
                if callee not in names:
                    raise UnresolvedCall(slot, f"call site names unknown "
                                               f"function '{callee}'")

    def function_index(self, name: str) -> int:
        for i, f in enumerate(self.functions):
            if f.name == name:
                return i
        raise MissingEntry(f"no function named '{name}'")

    @classmethod
    def from_asm_module(cls, module: AsmModule) -> "EbpfObject":
        """Adopt assembled module text; call imms are already indices."""
        names = [f.name for f in module.functions]
        blocks = []
        for func in module.functions:
            sites = []
            slot = 0
            for insn in func.instructions:
                if insn.kind is Kind.CALL and insn.src == LOCAL_CALL:
                    if not 0 <= insn.imm < len(names):
                        raise UnresolvedCall(
                            slot, f"call index {insn.imm} outside module")
                    sites.append((slot, names[insn.imm]))
                slot += insn.slots
            blocks.append(FunctionBlock(func.name, func.instructions,
                                        tuple(sites)))
        return cls(tuple(blocks), module.entry_name)


# 64-bit relocatable object layout, little-endian

_ELF_MAGIC = b"\x7fELF"
_CLASS_64 = 2
_DATA_LE = 1
_DATA_BE = 2
_ET_REL = 1
_EM_BPF = 247
_SHT_SYMTAB = 2
_SHT_REL = 9
_SHF_EXECINSTR = 0x4
_STT_FUNC = 2
_STB_GLOBAL = 1
_SHN_UNDEF = 0
_R_CALL = 10    # 32-bit pc-relative call fixup


@dataclass(frozen=True)
class _Section:
    index: int
    name: str
    type: int
    flags: int
    offset: int
    size: int
    link: int
    info: int
    entsize: int


@dataclass(frozen=True)
class _Symbol:
    index: int
    name: str
    info: int
    shndx: int
    value: int
    size: int

    @property
    def is_function(self) -> bool:
        return self.info & 0xF == _STT_FUNC

    @property
    def is_global(self) -> bool:
        return self.info >> 4 == _STB_GLOBAL


def _cstr(blob: bytes, offset: int) -> str:
    end = blob.find(b"\x00", offset)
    if end < 0:
        raise NotAnObjectFile("unterminated string table entry")
    return blob[offset:end].decode("utf-8", "replace")


def _parse_sections(data: bytes) -> list[_Section]:
    if len(data) < 64 or data[:4] != _ELF_MAGIC:
        raise NotAnObjectFile("missing object file magic")
    if data[5] == _DATA_BE:
        raise BigEndianObjectRejected(
            "big-endian objects are rejected, not reinterpreted")
    if data[5] != _DATA_LE:
        raise NotAnObjectFile(f"unknown data encoding {data[5]}")
    if data[4] != _CLASS_64:
        raise NotAnObjectFile("not a 64-bit object")
    e_type, e_machine = struct.unpack_from("<HH", data, 0x10)
    if e_type != _ET_REL:
        raise NotAnObjectFile(f"not a relocatable object (type {e_type})")
    if e_machine != _EM_BPF:
        raise NotAnObjectFile(
            f"machine {e_machine} does not hold eBPF code")
    (e_shoff,) = struct.unpack_from("<Q", data, 0x28)
    e_shentsize, e_shnum, e_shstrndx = struct.unpack_from("<HHH", data, 0x3A)
    if e_shentsize < 64 or e_shoff + e_shnum * e_shentsize > len(data):
        raise NotAnObjectFile("section header table out of range")
    raw = []
    for i in range(e_shnum):
        name_off, sh_type, flags, _addr, offset, size, link, info, _align, entsize = \
            struct.unpack_from("<IIQQQQIIQQ", data, e_shoff + i * e_shentsize)
        if sh_type != 8 and offset + size > len(data):   # 8 = NOBITS
            raise NotAnObjectFile(f"section {i} extends past end of file")
        raw.append((name_off, sh_type, flags, offset, size, link, info, entsize))
    if e_shstrndx >= len(raw):
        raise NotAnObjectFile("bad section name table index")
    str_off, str_size = raw[e_shstrndx][3], raw[e_shstrndx][4]
    shstr = data[str_off:str_off + str_size]
    return [
        _Section(i, _cstr(shstr, name_off), sh_type, flags, offset, size,
                 link, info, entsize)
        for i, (name_off, sh_type, flags, offset, size, link, info, entsize)
        in enumerate(raw)
    ]


def _parse_symbols(data: bytes, sections: list[_Section]) -> list[_Symbol]:
    symtab = next((s for s in sections if s.type == _SHT_SYMTAB), None)
    if symtab is None:
        raise NotAnObjectFile("no symbol table")
    if symtab.link >= len(sections):
        raise NotAnObjectFile("symbol table names a bad string table")
    strtab_sec = sections[symtab.link]
    strtab = data[strtab_sec.offset:strtab_sec.offset + strtab_sec.size]
    entsize = symtab.entsize or 24
    symbols = []
    for i in range(symtab.size // entsize):
        st_name, st_info, _other, st_shndx, st_value, st_size = \
            struct.unpack_from("<IBBHQQ", data, symtab.offset + i * entsize)
        symbols.append(_Symbol(i, _cstr(strtab, st_name), st_info,
                               st_shndx, st_value, st_size))
    return symbols


def _function_layout(section: _Section, symbols: list[_Symbol]) -> list[_Symbol]:
    """Sorted function symbols covering the section, sizes inferred when
    the assembler left them zero."""
    funcs = sorted(
        (s for s in symbols if s.is_function and s.shndx == section.index),
        key=lambda s: s.value)
    if not funcs:
        raise NotAnObjectFile(
            f"code section '{section.name}' has no function symbols")
    if funcs[0].value != 0:
        raise NotAnObjectFile(
            f"code before the first function symbol in '{section.name}'")
    out = []
    for i, sym in enumerate(funcs):
        limit = funcs[i + 1].value if i + 1 < len(funcs) else section.size
        size = sym.size or (limit - sym.value)
        if limit == sym.value or sym.value + size > limit:
            raise OverlappingSymbols(
                f"'{sym.name}' overlaps the next symbol in '{section.name}'")
        if sym.value % SLOT_SIZE or size % SLOT_SIZE or size == 0:
            raise NotAnObjectFile(
                f"function '{sym.name}' is not a whole number of slots")
        out.append(replace(sym, size=size) if sym.size == 0 else sym)
    return out


def load_object(data: bytes, entry: str | None = None) -> EbpfObject:
    """Read a relocatable object; resolve every local call to its callee.

    Entry selection when `entry` is not given: a function named
    ``entry``, else ``main``, else the first global function in layout
    order, else the first function.
    """
    sections = _parse_sections(data)
    symbols = _parse_symbols(data, sections)
    exec_sections = [s for s in sections
                     if s.type == 1 and s.flags & _SHF_EXECINSTR and s.size]
    if not exec_sections:
        raise NotAnObjectFile("object holds no code sections")
    exec_indices = {s.index for s in exec_sections}

    relocs: dict[int, dict[int, _Symbol]] = {}
    for sec in sections:
        # only relocations applied to code matter; metadata sections may
        # carry their own tables
        if sec.info not in exec_indices:
            continue
        if sec.type == 4:    # RELA
            raise NotAnObjectFile(
                "addend-style relocations on code are unsupported")
        if sec.type != _SHT_REL:
            continue
        entsize = sec.entsize or 16
        table: dict[int, _Symbol] = {}
        for i in range(sec.size // entsize):
            r_offset, r_info = struct.unpack_from(
                "<QQ", data, sec.offset + i * entsize)
            sym_index, r_type = r_info >> 32, r_info & 0xFFFF_FFFF
            if r_type != _R_CALL:
                raise NotAnObjectFile(
                    f"unsupported relocation type {r_type} (data or map "
                    f"relocations are out of scope)")
            if sym_index >= len(symbols):
                raise NotAnObjectFile("relocation names a bad symbol")
            table[r_offset] = symbols[sym_index]
        relocs[sec.info] = table

    # layout order: (section position, offset within section)
    layout: list[tuple[_Section, _Symbol]] = []
    for sec in exec_sections:
        for sym in _function_layout(sec, symbols):
            layout.append((sec, sym))

    names = [sym.name for _, sym in layout]
    if len(set(names)) != len(names):
        raise NotAnObjectFile("duplicate function names")
    index_of = {name: i for i, name in enumerate(names)}
    slot_of = {(sec.index, sym.value // SLOT_SIZE): sym.name
               for sec, sym in layout}

    blocks = []
    for sec, sym in layout:
        code = data[sec.offset + sym.value:sec.offset + sym.value + sym.size]
        instructions = list(decode_program(code).instructions)
        section_relocs = relocs.get(sec.index, {})
        sites = []
        slot = 0
        for pos, insn in enumerate(instructions):
            if insn.kind is Kind.CALL and insn.src == LOCAL_CALL:
                byte_off = sym.value + slot * SLOT_SIZE
                rel_sym = section_relocs.get(byte_off)
                if rel_sym is not None:
                    if rel_sym.shndx == _SHN_UNDEF:
                        raise UnresolvedCall(
                            slot, f"call target '{rel_sym.name}' is not "
                                  f"defined in this object")
                    callee = rel_sym.name
                elif insn.imm != -1:
                    section_slot = sym.value // SLOT_SIZE + slot + 1 + insn.imm
                    callee = slot_of.get((sec.index, section_slot))
                    if callee is None:
                        raise UnresolvedCall(
                            slot, f"displacement {insn.imm} lands on no "
                                  f"function boundary")
                else:
                    raise UnresolvedCall(
                        slot, "pseudo call carries no relocation; the "
                              "object was built without call fixups")
                if callee not in index_of:
                    raise UnresolvedCall(slot, f"unknown callee '{callee}'")
                instructions[pos] = replace(insn, imm=index_of[callee])
                sites.append((slot, callee))
            slot += insn.slots
        blocks.append(FunctionBlock(sym.name, tuple(instructions), tuple(sites)))

    if entry is None:
        for candidate in ("entry", "main"):
            if candidate in index_of:
                entry = candidate
                break
        else:
            entry = next(
                (sym.name for _, sym in layout if sym.is_global), names[0])
    elif entry not in index_of:
        raise MissingEntry(f"requested entry '{entry}' not in object")
    return EbpfObject(tuple(blocks), entry)


def _checked_offset(offset: int, what: str) -> int:
    if not -0x8000 <= offset <= 0x7FFF:
        raise OffsetOverflow(
            f"{what} needs displacement {offset}, outside signed 16 bits")
    return offset


def _expand(obj: EbpfObject, fi: int, active: tuple[int, ...],
            depth: int) -> list[Instruction]:
    """Inline all local calls of function `fi`; result is self-contained
    but keeps that function's own exits."""
    if fi in active:
        names = tuple(obj.functions[i].name
                      for i in active[active.index(fi):]) + (obj.functions[fi].name,)
        raise RecursionUnsupported(names)
    if depth > MAX_INLINE_DEPTH:
        raise RecursionUnsupported(
            (obj.functions[fi].name,),
            f"call chain deeper than {MAX_INLINE_DEPTH}")
    func = obj.functions[fi]

    pieces: list[tuple[int, bool, object]] = []
    slot = 0
    for insn in func.instructions:
        if insn.kind is Kind.CALL and insn.src == LOCAL_CALL:
            if not 0 <= insn.imm < len(obj.functions):
                raise UnresolvedCall(slot, f"call index {insn.imm} out of range")
            spliced = _expand(obj, insn.imm, active + (fi,), depth + 1)
            pieces.append((slot, True, spliced))
        else:
            pieces.append((slot, False, insn))
        slot += insn.slots

    new_slot = 0
    mapping: dict[int, int] = {}
    for orig, is_splice, payload in pieces:
        mapping[orig] = new_slot
        if is_splice:
            new_slot += sum(i.slots for i in payload)
        else:
            new_slot += payload.slots
    mapping[slot] = new_slot     # one-past-the-end, for degenerate jumps

    out: list[Instruction] = []
    for orig, is_splice, payload in pieces:
        base = mapping[orig]
        if is_splice:
            end = base + sum(i.slots for i in payload)
            sub = base
            for insn in payload:
                if insn.kind is Kind.EXIT:
                    # return point: jump past the spliced body
                    out.append(Instruction(
                        0x05, offset=_checked_offset(
                            end - (sub + 1), "rewritten return jump")))
                else:
                    out.append(insn)
                sub += insn.slots
        else:
            insn = payload
            if insn.is_jump:
                orig_target = orig + 1 + insn.offset
                if orig_target not in mapping:
                    raise InvalidJumpTarget(
                        f"jump at slot {orig} of '{func.name}' targets "
                        f"slot {orig_target}, not an instruction boundary")
                new_offset = _checked_offset(
                    mapping[orig_target] - (base + 1), "re-fixed jump")
                insn = insn if new_offset == insn.offset else replace(
                    insn, offset=new_offset)
            out.append(insn)

    assert sum(i.slots for i in out) == new_slot
    return out


def inline_calls(obj: EbpfObject) -> Program:
    """Flatten the whole object into the entry function."""
    body = _expand(obj, obj.function_index(obj.entry), (), 0)
    return Program(tuple(body))


def make_patched(program: Program, expected_output: int,
                 static_mem_size: int) -> PatchedProgramFile:
    """Attach the two header values, normalizing the tail first.

    Compilers rotate loops, leaving the function's exit mid-body and an
    unconditional jump in the last slot.  Control cannot fall through
    such a jump, so padding one unreachable exit satisfies the format
    without changing behavior.  Any other non-exit tail means execution
    could run off the end, and the format check still rejects it.
    """
    if program.instructions[-1].kind is Kind.JA:
        program = Program(program.instructions + (Instruction(0x95),))
    return PatchedProgramFile(expected_output, static_mem_size, program)
