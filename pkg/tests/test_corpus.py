"""Tests for the reference oracles and the packaged corpus fixtures.

The oracle values that matter (fixture headers) are cross-checked here
against independent implementations: a recursive fibonacci, trial
division for prime counting, and a product over a range for the
multi-factorial.  The fixtures themselves must agree with the oracles
under both the eBPF VM and V8.
"""

import functools
import math
import shutil
import struct

import pytest

from csoffload.asm import parse_patched
from csoffload.bench import ProgramSpec, staged_bytes
from csoffload.corpus import (
    CorpusError,
    DomainTooLarge,
    ORACLES,
    Overflow,
    OverflowDomain,
    ZeroStep,
    default_corpus_dir,
    evaluate_oracle,
    load_program_spec,
    load_program_specs,
    oracle_dummy,
    oracle_fib,
    oracle_multifact,
    oracle_prime_count,
    oracle_sum,
    program_names,
    select_programs,
)
from csoffload.vm import VmConfig, execute, instantiate, verify, write_static_mem

requires_node = pytest.mark.skipif(shutil.which("node") is None,
                                   reason="no node binary on PATH")


@functools.lru_cache(maxsize=None)
def recursive_fib(n: int) -> int:
    if n < 2:
        return n
    return recursive_fib(n - 1) + recursive_fib(n - 2)


def trial_division_pi(n: int) -> int:
    count = 0
    for k in range(2, n + 1):
        d = 2
        while d * d <= k:
            if k % d == 0:
                break
            d += 1
        else:
            count += 1
    return count


class TestOracles:
    def test_dummy(self):
        assert oracle_dummy() == 1
        assert oracle_dummy() == oracle_dummy()

    def test_fib_base_cases(self):
        assert oracle_fib(0) == 0
        assert oracle_fib(1) == 1

    def test_fib_against_recursive_definition(self):
        for n in (2, 3, 10, 20, 50):
            assert oracle_fib(n) == recursive_fib(n)
        assert oracle_fib(10) == 55
        assert oracle_fib(50) == 12586269025

    def test_fib_domain_edge(self):
        assert oracle_fib(93) == 12200160415121876738
        assert oracle_fib(93) < (1 << 64)
        with pytest.raises(OverflowDomain, match="93"):
            oracle_fib(94)

    def test_sum(self):
        assert oracle_sum(0) == 0
        assert oracle_sum(1) == 1
        assert oracle_sum(100) == 5050
        assert oracle_sum(1_000_000) == 500000500000
        for n in (2, 7, 999):
            assert oracle_sum(n) == sum(range(1, n + 1))

    def test_sum_domain_edge(self):
        with pytest.raises(OverflowDomain):
            oracle_sum(1 << 33)

    def test_prime_count_small(self):
        assert oracle_prime_count(10) == 4
        assert oracle_prime_count(2) == 1
        assert oracle_prime_count(1) == 0
        assert oracle_prime_count(0) == 0

    def test_prime_count_against_trial_division(self):
        assert oracle_prime_count(100) == trial_division_pi(100) == 25
        assert oracle_prime_count(10_000) == trial_division_pi(10_000)

    def test_prime_count_fixture_header_value(self):
        assert oracle_prime_count(100_000) == 9592

    def test_prime_count_memory_bound(self):
        assert oracle_prime_count(99, memory_limit=100) == 25
        with pytest.raises(DomainTooLarge, match="101 bytes"):
            oracle_prime_count(100, memory_limit=100)
        with pytest.raises(DomainTooLarge):
            oracle_prime_count(200_000)

    def test_multifact_against_range_product(self):
        assert oracle_multifact(9, 2) == math.prod(range(9, 0, -2)) == 945
        assert oracle_multifact(5, 10) == 5
        assert oracle_multifact(25, 3) == math.prod(range(25, 0, -3)) == 608608000
        assert oracle_multifact(7, 1) == math.factorial(7)
        assert oracle_multifact(0, 3) == 1

    def test_multifact_errors(self):
        with pytest.raises(ZeroStep):
            oracle_multifact(9, 0)
        with pytest.raises(Overflow):
            oracle_multifact(30, 1)

    def test_registry_and_dispatch(self):
        assert set(ORACLES) == {"dummy", "fib", "sum", "prime_count", "multifact"}
        assert evaluate_oracle("fib", (10,)) == 55
        with pytest.raises(CorpusError, match="unknown oracle"):
            evaluate_oracle("cosine", (1,))


class TestStagedBytes:
    def test_zeros(self):
        assert staged_bytes("", 5) == b"\x00" * 5
        assert staged_bytes("", 0) == b""

    def test_u64_sequence(self):
        data = staged_bytes("u64-sequence", 800)
        values = struct.unpack("<100Q", data)
        assert values == tuple(range(1, 101))

    def test_u64_sequence_pads_remainder(self):
        data = staged_bytes("u64-sequence", 20)
        assert struct.unpack_from("<2Q", data) == (1, 2)
        assert data[16:] == b"\x00" * 4

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            staged_bytes("", -1)
        with pytest.raises(ValueError):
            staged_bytes("fibonacci", 8)


class TestLoading:
    def test_program_names(self):
        assert program_names() == ["dummy", "fib", "multifact", "prime_count",
                                   "sum", "summing_loop"]

    def test_missing_corpus_dir(self, tmp_path):
        with pytest.raises(CorpusError, match="not a corpus directory"):
            program_names(tmp_path / "void")

    def test_load_all(self):
        specs = load_program_specs()
        assert len(specs) == 6
        for spec in specs:
            assert spec.expected == evaluate_oracle(spec.oracle_id,
                                                    spec.oracle_args)
            assert spec.entry == f"{spec.name}_entry"
            for key in ("ebpf", "wat", "wasm"):
                assert spec.fixture(key) is not None

    def test_fixture_parameters(self):
        by_name = {s.name: s for s in load_program_specs()}
        assert by_name["fib"].args == (50, 0)
        assert by_name["fib"].expected == 12586269025
        assert by_name["sum"].stage == "u64-sequence"
        assert by_name["sum"].static_mem_size == 800
        assert by_name["summing_loop"].expected == 500000500000
        assert by_name["prime_count"].static_mem_size >= 100_001
        assert by_name["multifact"].args == (25, 3)

    def test_unknown_program(self):
        with pytest.raises(CorpusError, match="no fixture named"):
            load_program_spec("quicksort")

    def test_select_programs(self):
        specs = load_program_specs()
        chosen = select_programs(specs, ("fib", "dummy"))
        assert [s.name for s in chosen] == ["fib", "dummy"]
        assert select_programs(specs, ()) == specs
        with pytest.raises(CorpusError, match="unknown programs: quicksort"):
            select_programs(specs, ("quicksort",))

    def _write_manifest(self, tmp_path, name, text, body="mov64 r0, 1\nexit\n"):
        directory = tmp_path / name
        directory.mkdir()
        (directory / "manifest.toml").write_text(text)
        (directory / f"{name}.pbpf").write_text(f"1\n0\n{body}")
        return tmp_path

    def test_manifest_name_mismatch(self, tmp_path):
        root = self._write_manifest(
            tmp_path, "alpha",
            'name = "beta"\noracle = "dummy"\nexpected = 1\n')
        with pytest.raises(CorpusError, match="does not match directory"):
            load_program_spec("alpha", root)

    def test_manifest_oracle_disagreement(self, tmp_path):
        root = self._write_manifest(
            tmp_path, "alpha",
            'name = "alpha"\noracle = "dummy"\nexpected = 2\n')
        with pytest.raises(CorpusError, match="disagrees"):
            load_program_spec("alpha", root)

    def test_manifest_unknown_keys(self, tmp_path):
        root = self._write_manifest(
            tmp_path, "alpha",
            'name = "alpha"\noracle = "dummy"\nexpected = 1\ncolor = "red"\n')
        with pytest.raises(CorpusError, match="unknown keys: color"):
            load_program_spec("alpha", root)

    def test_manifest_missing_fixture_file(self, tmp_path):
        root = self._write_manifest(
            tmp_path, "alpha",
            'name = "alpha"\noracle = "dummy"\nexpected = 1\n'
            '[fixtures]\nebpf = "gone.pbpf"\n')
        with pytest.raises(CorpusError, match="missing fixture file"):
            load_program_spec("alpha", root)

    def test_manifest_bad_args_arity(self, tmp_path):
        root = self._write_manifest(
            tmp_path, "alpha",
            'name = "alpha"\noracle = "dummy"\nexpected = 1\nargs = [1, 2, 3]\n')
        with pytest.raises(CorpusError, match="two scalars"):
            load_program_spec("alpha", root)

    def test_manifest_bad_toml(self, tmp_path):
        root = self._write_manifest(tmp_path, "alpha", "name = [unclosed\n")
        with pytest.raises(CorpusError):
            load_program_spec("alpha", root)


def run_fixture_on_vm(spec: ProgramSpec) -> tuple[int, int]:
    """Returns (vm return value, embedded pbpf header)."""
    with open(spec.fixture("ebpf"), encoding="utf-8") as fh:
        patched = parse_patched(fh.read())
    instance = instantiate(patched, VmConfig(), (spec.args[0], spec.args[1], 0))
    staged = staged_bytes(spec.stage, spec.static_mem_size)
    if staged:
        write_static_mem(instance, 0, staged)
    outcome = execute(instance)
    return outcome.return_value, patched.expected_output


@pytest.fixture(scope="module")
def specs():
    return load_program_specs()


class TestFixtureAgreement:
    def test_headers_match_oracles(self, specs):
        for spec in specs:
            with open(spec.fixture("ebpf"), encoding="utf-8") as fh:
                patched = parse_patched(fh.read())
            assert patched.expected_output == spec.expected, spec.name
            assert patched.static_mem_size == spec.static_mem_size, spec.name

    def test_prime_sieve_fits_declared_memory(self, specs):
        spec = next(s for s in specs if s.name == "prime_count")
        assert spec.static_mem_size >= spec.args[0] + 1

    def test_vm_execution_matches_oracle(self, specs):
        for spec in specs:
            value, header = run_fixture_on_vm(spec)
            assert value == spec.expected, spec.name
            assert value == header, spec.name

    def test_verifier_accepts_every_fixture(self, specs):
        for spec in specs:
            with open(spec.fixture("ebpf"), encoding="utf-8") as fh:
                patched = parse_patched(fh.read())
            report = verify(patched.body)
            assert report.ok, (spec.name, report.diagnostics)
            assert not report.diagnostics, (spec.name, report.diagnostics)

    def test_wat_matches_checked_in_binary(self, specs):
        from csoffload.wat import wat_to_wasm
        for spec in specs:
            with open(spec.fixture("wat"), encoding="utf-8") as fh:
                converted = wat_to_wasm(fh.read())
            with open(spec.fixture("wasm"), "rb") as fh:
                assert converted == fh.read(), spec.name

    def test_dummy_is_smallest_ebpf_fixture(self, specs):
        import os
        sizes = {s.name: os.path.getsize(s.fixture("ebpf")) for s in specs}
        dummy = sizes.pop("dummy")
        assert all(dummy < size for size in sizes.values()), sizes

    @requires_node
    def test_wasm_execution_matches_oracle(self, specs):
        from csoffload.wasm import WasmBinary, invoke_entry, pass_buffer
        from csoffload.wasm_node import NodeAdapter
        with NodeAdapter() as adapter:
            for spec in specs:
                instance = adapter.instantiate(
                    WasmBinary.load(spec.fixture("wasm")))
                staged = staged_bytes(spec.stage, spec.static_mem_size)
                if staged:
                    buffer = pass_buffer(instance, staged)
                    ptr, length = buffer.guest_ptr, buffer.length
                else:
                    ptr, length = 0, 0
                value = invoke_entry(
                    instance, spec.entry,
                    (ptr, length, spec.args[0], spec.args[1]))
                assert value == spec.expected, spec.name

    def test_default_corpus_dir_is_packaged(self):
        assert default_corpus_dir().name == "corpus_fixtures"
        assert (default_corpus_dir() / "dummy" / "manifest.toml").is_file()
