"""Computational-storage offload runtime and benchmark harness.

Subsystems:

- ``isa``      -- eBPF instruction codec (8-byte little-endian slots)
- ``asm``      -- textual assembler/disassembler and the patched-program file format
- ``vm``       -- verifier and fuel-metered, bounds-checked interpreter
- ``patcher``  -- relocatable-object loader and call-inlining patcher
- ``wasm``     -- WebAssembly engine adapter (pluggable runtime bindings)
- ``corpus``   -- reference oracles and checked-in program fixtures
- ``bench``    -- subprocess measurement harness and relative-to-native reports
- ``service``  -- FastAPI service exposing the above; the CLI is a thin client
"""

__version__ = "0.1.0"


class OffloadError(Exception):
    """Base class for every error raised by this package."""
