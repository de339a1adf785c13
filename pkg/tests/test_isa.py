"""Codec tests: frozen wire-format expectations plus round-trip properties.

EXPECTED_OPCODES was transcribed from an independent eBPF decoder's
opcode table before the codec was written; it is the oracle the table in
``csoffload.isa`` is checked against, so a transcription slip in one
cannot hide in the other.
"""

from __future__ import annotations

import pytest
from hypothesis import given, settings

from csoffload.isa import (
    OPCODES,
    DecodeError,
    EmptyProgram,
    Instruction,
    Kind,
    MissingSecondSlot,
    Program,
    ReservedFieldNonzero,
    TruncatedInput,
    UnknownOpcode,
    decode_instruction,
    decode_program,
    encode_instruction,
    encode_program,
)

from .strategies import instructions, programs

# (mnemonic, register-source?) -> opcode byte.  Swap entries use imm for
# width, so they appear once per source form under their stem.
EXPECTED_OPCODES = {
    ("add64", False): 0x07, ("add64", True): 0x0F,
    ("sub64", False): 0x17, ("sub64", True): 0x1F,
    ("mul64", False): 0x27, ("mul64", True): 0x2F,
    ("div64", False): 0x37, ("div64", True): 0x3F,
    ("or64", False): 0x47, ("or64", True): 0x4F,
    ("and64", False): 0x57, ("and64", True): 0x5F,
    ("lsh64", False): 0x67, ("lsh64", True): 0x6F,
    ("rsh64", False): 0x77, ("rsh64", True): 0x7F,
    ("neg64", False): 0x87,
    ("mod64", False): 0x97, ("mod64", True): 0x9F,
    ("xor64", False): 0xA7, ("xor64", True): 0xAF,
    ("mov64", False): 0xB7, ("mov64", True): 0xBF,
    ("arsh64", False): 0xC7, ("arsh64", True): 0xCF,
    ("add32", False): 0x04, ("add32", True): 0x0C,
    ("sub32", False): 0x14, ("sub32", True): 0x1C,
    ("mul32", False): 0x24, ("mul32", True): 0x2C,
    ("div32", False): 0x34, ("div32", True): 0x3C,
    ("or32", False): 0x44, ("or32", True): 0x4C,
    ("and32", False): 0x54, ("and32", True): 0x5C,
    ("lsh32", False): 0x64, ("lsh32", True): 0x6C,
    ("rsh32", False): 0x74, ("rsh32", True): 0x7C,
    ("neg32", False): 0x84,
    ("mod32", False): 0x94, ("mod32", True): 0x9C,
    ("xor32", False): 0xA4, ("xor32", True): 0xAC,
    ("mov32", False): 0xB4, ("mov32", True): 0xBC,
    ("arsh32", False): 0xC4, ("arsh32", True): 0xCC,
    ("le", False): 0xD4, ("be", True): 0xDC,
    ("lddw", False): 0x18,
    ("ldxw", True): 0x61, ("ldxh", True): 0x69,
    ("ldxb", True): 0x71, ("ldxdw", True): 0x79,
    ("stw", False): 0x62, ("sth", False): 0x6A,
    ("stb", False): 0x72, ("stdw", False): 0x7A,
    ("stxw", True): 0x63, ("stxh", True): 0x6B,
    ("stxb", True): 0x73, ("stxdw", True): 0x7B,
    ("ja", False): 0x05,
    ("jeq", False): 0x15, ("jeq", True): 0x1D,
    ("jgt", False): 0x25, ("jgt", True): 0x2D,
    ("jge", False): 0x35, ("jge", True): 0x3D,
    ("jset", False): 0x45, ("jset", True): 0x4D,
    ("jne", False): 0x55, ("jne", True): 0x5D,
    ("jsgt", False): 0x65, ("jsgt", True): 0x6D,
    ("jsge", False): 0x75, ("jsge", True): 0x7D,
    ("jlt", False): 0xA5, ("jlt", True): 0xAD,
    ("jle", False): 0xB5, ("jle", True): 0xBD,
    ("jslt", False): 0xC5, ("jslt", True): 0xCD,
    ("jsle", False): 0xD5, ("jsle", True): 0xDD,
    ("call", False): 0x85,
    ("exit", False): 0x95,
}

_REG_SOURCE_KINDS = frozenset(
    {Kind.ALU_REG, Kind.JMP_REG, Kind.MEM_LDX, Kind.MEM_STX})


class TestOpcodeTable:
    def test_table_matches_reference(self):
        actual = {}
        for opcode, spec in OPCODES.items():
            reg_source = spec.kind in _REG_SOURCE_KINDS or opcode == 0xDC
            actual[(spec.mnemonic, reg_source)] = opcode
        assert actual == EXPECTED_OPCODES

    def test_no_signed_division_and_no_floats(self):
        mnemonics = {s.mnemonic for s in OPCODES.values()}
        for absent in ("sdiv64", "sdiv32", "smod64", "smod32",
                       "fadd", "fmul", "fdiv"):
            assert absent not in mnemonics

    def test_atomics_and_jmp32_undecodable(self):
        # atomic exchange-add (0xc3, 0xdb) and the 32-bit jump class
        for opcode in (0xC3, 0xDB, 0x16, 0x1E, 0x06):
            with pytest.raises(UnknownOpcode):
                decode_instruction(bytes([opcode, 0, 0, 0, 0, 0, 0, 0]))


class TestFrozenEncodings:
    def test_mov64_imm(self):
        raw = bytes.fromhex("b700000001000000")
        insn = decode_instruction(raw)
        assert (insn.mnemonic, insn.dst, insn.imm) == ("mov64", 0, 1)
        assert encode_instruction(insn) == raw

    def test_exit(self):
        raw = bytes.fromhex("9500000000000000")
        insn = decode_instruction(raw)
        assert insn.mnemonic == "exit"
        assert encode_instruction(insn) == raw

    def test_unknown_opcode_reports_byte(self):
        with pytest.raises(UnknownOpcode) as exc:
            decode_instruction(bytes.fromhex("ff00000000000000"))
        assert exc.value.opcode == 0xFF
        assert "0xff" in str(exc.value)

    def test_lddw_two_slot_layout(self):
        insn = Instruction(0x18, dst=1, wide_imm=0x1_0000_0000)
        raw = encode_instruction(insn)
        assert raw == bytes.fromhex("1801000000000000" "0000000001000000")
        assert decode_instruction(raw[:8], raw[8:]) == insn

    def test_lddw_negative_looking_halves(self):
        insn = Instruction(0x18, dst=3, wide_imm=0xFFFF_FFFF_FFFF_FFFF)
        raw = encode_instruction(insn)
        assert raw[:8] == bytes.fromhex("18030000ffffffff")
        assert raw[8:] == bytes.fromhex("00000000ffffffff")
        assert decode_instruction(raw[:8], raw[8:]).wide_imm == 0xFFFF_FFFF_FFFF_FFFF

    def test_store_negative_offset(self):
        # stxdw [r10 - 8], r0
        insn = Instruction(0x7B, dst=10, src=0, offset=-8)
        assert encode_instruction(insn) == bytes.fromhex("7b0af8ff00000000")

    def test_ja_backward(self):
        insn = Instruction(0x05, offset=-1)
        assert encode_instruction(insn) == bytes.fromhex("0500ffff00000000")


class TestDecodeErrors:
    def test_lddw_missing_second_slot(self):
        with pytest.raises(MissingSecondSlot):
            decode_instruction(bytes.fromhex("1801000000000000"))

    def test_lddw_dirty_second_slot(self):
        with pytest.raises(ReservedFieldNonzero):
            decode_instruction(bytes.fromhex("1801000000000000"),
                               bytes.fromhex("9500000000000000"))

    def test_lddw_map_pseudo_rejected(self):
        with pytest.raises(ReservedFieldNonzero):
            decode_instruction(bytes.fromhex("1811000000000000"),
                               bytes.fromhex("0000000000000000"))

    def test_reserved_src_on_alu_imm(self):
        # mov64 r0, 1 with a stray src register
        with pytest.raises(ReservedFieldNonzero):
            decode_instruction(bytes.fromhex("b720000001000000"))

    def test_reserved_imm_on_alu_reg(self):
        with pytest.raises(ReservedFieldNonzero):
            decode_instruction(bytes.fromhex("bf12000005000000"))

    def test_register_out_of_range(self):
        # dst nibble 0xb > r10
        with pytest.raises(DecodeError):
            decode_instruction(bytes.fromhex("b70b000000000000"))

    def test_swap_width_must_be_named(self):
        with pytest.raises(DecodeError):
            decode_instruction(bytes.fromhex("d401000008000000"))

    def test_short_slot(self):
        with pytest.raises(TruncatedInput):
            decode_instruction(b"\xb7\x00\x00")


class TestProgramCodec:
    def test_two_instruction_stream(self):
        raw = bytes.fromhex("b700000001000000" "9500000000000000")
        prog = decode_program(raw)
        assert len(prog.instructions) == 2
        assert prog.slot_count == 2
        assert encode_program(prog) == raw

    def test_slot_count_exceeds_instruction_count_with_lddw(self):
        prog = Program((Instruction(0x18, dst=0, wide_imm=7), Instruction(0x95)))
        assert prog.slot_count == 3
        assert len(encode_program(prog)) == 24
        assert prog.slot_index() == (0, 2)

    def test_truncated_stream(self):
        with pytest.raises(TruncatedInput):
            decode_program(b"\x95" + b"\x00" * 8)

    def test_empty_stream(self):
        with pytest.raises(EmptyProgram):
            decode_program(b"")

    def test_empty_program_type(self):
        with pytest.raises(EmptyProgram):
            Program(())

    def test_error_carries_slot_index(self):
        raw = bytes.fromhex("9500000000000000" "ff00000000000000")
        with pytest.raises(UnknownOpcode) as exc:
            decode_program(raw)
        assert exc.value.slot == 1

    def test_lddw_at_end_missing_slot(self):
        raw = bytes.fromhex("1801000000000000")
        with pytest.raises(MissingSecondSlot):
            decode_program(raw)


class TestRoundTripProperties:
    @given(instructions())
    @settings(max_examples=300)
    def test_instruction_round_trip(self, insn):
        assert decode_instruction(encode_instruction(insn)[:8],
                                  encode_instruction(insn)[8:] or None) == insn

    @given(programs())
    @settings(max_examples=200)
    def test_program_round_trip(self, prog):
        raw = encode_program(prog)
        assert len(raw) == 8 * prog.slot_count
        again = decode_program(raw)
        assert again == prog
        assert encode_program(again) == raw

    @given(programs())
    @settings(max_examples=100)
    def test_wide_load_slot_arithmetic(self, prog):
        wides = sum(1 for i in prog.instructions if i.is_wide)
        assert prog.slot_count == len(prog.instructions) + wides
