"""Tests for the native shared-library engine."""

import shutil
import subprocess

import pytest

from csoffload.native import (
    LoadFailure,
    SymbolNotFound,
    load_library,
    native_engine_run,
    resolve_entry,
)

CC = shutil.which("cc")

requires_cc = pytest.mark.skipif(CC is None, reason="no C compiler on PATH")

PROBE_C = """
typedef unsigned long long u64;
typedef unsigned char u8;

u64 sum_bytes_entry(u8 *mem, u64 mem_len, u64 a, u64 b) {
    u64 total = a + b;
    for (u64 i = 0; i < mem_len; i++) total += mem[i];
    return total;
}

u64 dummy_entry(u8 *mem, u64 mem_len, u64 a, u64 b) {
    (void)mem; (void)mem_len; (void)a; (void)b;
    return 1;
}

u64 product_entry(u8 *mem, u64 mem_len, u64 a, u64 b) {
    (void)mem; (void)mem_len;
    return a * b;
}
"""


@pytest.fixture(scope="module")
def probe_lib(tmp_path_factory):
    if CC is None:
        pytest.skip("no C compiler on PATH")
    root = tmp_path_factory.mktemp("native")
    src = root / "probe.c"
    src.write_text(PROBE_C)
    out = root / "probe.so"
    subprocess.run([CC, "-shared", "-fPIC", "-O1", "-o", str(out), str(src)],
                   check=True)
    return out


class TestLoading:
    def test_missing_file(self, tmp_path):
        with pytest.raises(LoadFailure, match="no such library"):
            load_library(tmp_path / "absent.so")

    @requires_cc
    def test_not_a_library(self, probe_lib):
        with pytest.raises(LoadFailure):
            load_library(probe_lib.parent / "probe.c")

    @requires_cc
    def test_missing_symbol(self, probe_lib):
        library = load_library(probe_lib)
        with pytest.raises(SymbolNotFound, match="nonexistent_entry"):
            resolve_entry(library, "nonexistent_entry")

    @requires_cc
    def test_resolved_entry_is_callable(self, probe_lib):
        fn = resolve_entry(load_library(probe_lib), "dummy_entry")
        assert fn(None, 0, 0, 0) == 1


@requires_cc
class TestRun:
    def test_dummy(self, probe_lib):
        value, exec_ms, startup_ms = native_engine_run(probe_lib, "dummy_entry")
        assert value == 1
        assert exec_ms >= 0.0
        assert startup_ms > 0.0

    def test_scalar_args_without_memory(self, probe_lib):
        value, _, _ = native_engine_run(probe_lib, "sum_bytes_entry",
                                        args=(40, 2))
        assert value == 42

    def test_staged_memory(self, probe_lib):
        staged = bytes(range(1, 101))
        value, _, _ = native_engine_run(probe_lib, "sum_bytes_entry",
                                        static_mem=staged)
        assert value == 5050

    def test_staged_memory_plus_args(self, probe_lib):
        value, _, _ = native_engine_run(probe_lib, "sum_bytes_entry",
                                        static_mem=b"\x01\x02", args=(10, 20))
        assert value == 33

    def test_u64_wraparound(self, probe_lib):
        value, _, _ = native_engine_run(probe_lib, "product_entry",
                                        args=(1 << 63, 2))
        assert value == 0
        value, _, _ = native_engine_run(probe_lib, "product_entry",
                                        args=((1 << 64) - 1, 3))
        assert value == (1 << 64) - 3

    def test_run_errors_propagate(self, tmp_path, probe_lib):
        with pytest.raises(LoadFailure):
            native_engine_run(tmp_path / "gone.so", "dummy_entry")
        with pytest.raises(SymbolNotFound):
            native_engine_run(probe_lib, "gone_entry")
