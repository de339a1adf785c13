"""Native baseline engine: shared libraries via the OS dynamic loader.

The startup phase is dlopen plus symbol resolution (the OS may lazily
bind, so resolution is forced by looking the symbol up); the exec phase
is the entry call itself.  Entry functions follow the four-argument
convention shared by all corpus targets:

    u64 entry(u8 *mem, u64 mem_len, u64 a, u64 b)

mem may be NULL when mem_len is 0.
"""

from __future__ import annotations

import ctypes
import time
from pathlib import Path

from . import OffloadError

__all__ = [
    "NativeError", "LoadFailure", "SymbolNotFound",
    "load_library", "resolve_entry", "native_engine_run",
]


class NativeError(OffloadError):
    pass


class LoadFailure(NativeError):
    pass


class SymbolNotFound(NativeError):
    pass


def load_library(path: str | Path) -> ctypes.CDLL:
    path = Path(path)
    if not path.exists():
        raise LoadFailure(f"{path}: no such library")
    try:
        return ctypes.CDLL(str(path))
    except OSError as e:
        raise LoadFailure(f"{path}: {e}") from None


def resolve_entry(library: ctypes.CDLL, symbol: str):
    """Bind the entry symbol to the shared four-argument signature."""
    try:
        fn = getattr(library, symbol)
    except AttributeError:
        raise SymbolNotFound(
            f"'{symbol}' is not exported by {library._name}") from None
    fn.restype = ctypes.c_uint64
    fn.argtypes = (ctypes.c_void_p, ctypes.c_uint64,
                   ctypes.c_uint64, ctypes.c_uint64)
    return fn


def native_engine_run(path: str | Path, symbol: str,
                      static_mem: bytes = b"",
                      args: tuple[int, int] = (0, 0),
                      ) -> tuple[int, float, float]:
    """Load, resolve, call; returns (return value, exec_ms, startup_ms).

    The staged memory is private to this call; callers that need the
    entry's writes back should drive load_library/resolve_entry
    themselves and keep the buffer.
    """
    t0 = time.perf_counter()
    library = load_library(path)
    fn = resolve_entry(library, symbol)
    if static_mem:
        buf = ctypes.create_string_buffer(bytes(static_mem), len(static_mem))
        mem_ptr = ctypes.cast(buf, ctypes.c_void_p)
        mem_len = len(static_mem)
    else:
        mem_ptr, mem_len = None, 0
    t1 = time.perf_counter()
    value = fn(mem_ptr, mem_len, args[0], args[1])
    t2 = time.perf_counter()
    return int(value), (t2 - t1) * 1000.0, (t1 - t0) * 1000.0
