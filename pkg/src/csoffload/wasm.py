"""Engine adapter layer for WebAssembly offload modules.

An EngineAdapter embeds one runtime behind four operations: instantiate
a module, call an export, and read or write guest linear memory.  On
top of those, this module implements the host/guest data-passing
contract: scalars go through ``invoke_entry``, buffers through
``pass_buffer``/``read_buffer`` using the module's exported allocator.

``instantiate`` performs all compilation and setup; the first call to
an export carries no deferred setup cost beyond what the runtime itself
imposes.  Benchmark phase boundaries rely on that split.

Bindings: NodeAdapter (wasm_node.py) executes modules on the V8 engine
inside a Node subprocess; StubAdapter below is a scripted in-memory
fake for harness tests.  Neither interprets WebAssembly in Python.

Scalar convention: parameters and results are 32/64-bit integers.
Results widen to u64 by zero-extension, matching how the eBPF engine
widens 32-bit values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from . import OffloadError
from .wat import WASM_MAGIC, wat_to_wasm

__all__ = [
    "WasmError", "InvalidModule", "MissingExport", "GuestTrap",
    "TypeMismatch", "AllocatorReturnedNull", "OutOfGuestMemory",
    "OutOfBoundsGuestRead", "EngineUnavailable",
    "WasmBinary", "GuestBuffer", "GuestInstance", "EngineAdapter",
    "StubAdapter", "invoke_entry", "pass_buffer", "read_buffer",
    "export_signatures", "DEFAULT_ALLOCATOR",
]

U64_MAX = (1 << 64) - 1
DEFAULT_ALLOCATOR = "malloc"


class WasmError(OffloadError):
    pass


class InvalidModule(WasmError):
    pass


class MissingExport(WasmError):
    def __init__(self, name: str, message: str | None = None):
        self.name = name
        super().__init__(message or f"module does not export '{name}'")


class GuestTrap(WasmError):
    pass


class TypeMismatch(WasmError):
    pass


class AllocatorReturnedNull(WasmError):
    pass


class OutOfGuestMemory(WasmError):
    pass


class OutOfBoundsGuestRead(WasmError):
    pass


class EngineUnavailable(WasmError):
    """The embedded runtime cannot be started on this host."""


@dataclass(frozen=True)
class WasmBinary:
    """A module in binary format, remembering where it came from."""

    data: bytes
    source: str = "<binary>"

    def __post_init__(self):
        if self.data[:4] != WASM_MAGIC:
            raise InvalidModule(
                f"{self.source}: missing module magic "
                f"(first bytes {self.data[:4]!r})")

    @classmethod
    def load(cls, path: str | Path) -> "WasmBinary":
        """Read a module file; text-format sources convert at load."""
        path = Path(path)
        raw = path.read_bytes()
        if raw[:4] == WASM_MAGIC:
            return cls(raw, str(path))
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError:
            raise InvalidModule(
                f"{path}: neither binary nor text format") from None
        return cls(wat_to_wasm(text), str(path))

    @classmethod
    def from_wat(cls, text: str, source: str = "<text>") -> "WasmBinary":
        return cls(wat_to_wasm(text), source)


@dataclass(frozen=True)
class GuestBuffer:
    """Guest allocation produced by pass_buffer; valid until teardown."""

    guest_ptr: int
    length: int


@dataclass
class GuestInstance:
    """Handle to one instantiated module inside some adapter."""

    adapter: "EngineAdapter"


class EngineAdapter:
    """Contract an embedded runtime must satisfy.

    A GuestInstance is single-threaded; distinct instances are
    independent and may be driven from different threads.
    """

    name = "abstract"

    def instantiate(self, binary: WasmBinary) -> GuestInstance:
        raise NotImplementedError

    def call(self, instance: GuestInstance, export: str,
             args: Sequence[int]) -> int:
        raise NotImplementedError

    def memory_read(self, instance: GuestInstance, addr: int,
                    length: int) -> bytes:
        raise NotImplementedError

    def memory_write(self, instance: GuestInstance, addr: int,
                     data: bytes) -> None:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self) -> "EngineAdapter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def invoke_entry(instance: GuestInstance, name: str,
                 args: Sequence[int] = ()) -> int:
    """Call an exported entry function; result widened to u64."""
    return instance.adapter.call(instance, name, tuple(args)) & U64_MAX


def pass_buffer(instance: GuestInstance, data: bytes,
                allocator: str = DEFAULT_ALLOCATOR) -> GuestBuffer:
    """Allocate guest memory via the module's allocator and copy data in.

    The allocator is consulted even for zero-length buffers; a null
    return only counts as failure when bytes actually need a home.
    """
    ptr = instance.adapter.call(instance, allocator, (len(data),))
    if ptr == 0 and data:
        raise AllocatorReturnedNull(
            f"guest '{allocator}'({len(data)}) returned null")
    instance.adapter.memory_write(instance, ptr, data)
    return GuestBuffer(ptr, len(data))


def read_buffer(instance: GuestInstance, buf: GuestBuffer) -> bytes:
    """Snapshot guest memory behind a buffer."""
    return instance.adapter.memory_read(instance, buf.guest_ptr, buf.length)


# binary-format introspection: export signatures, needed to coerce
# call arguments to the exact scalar widths the module declares

_VALTYPE_NAMES = {0x7F: "i32", 0x7E: "i64", 0x7D: "f32", 0x7C: "f64"}


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def byte(self) -> int:
        if self.pos >= len(self.data):
            raise InvalidModule("module truncated")
        self.pos += 1
        return self.data[self.pos - 1]

    def uleb(self) -> int:
        result = shift = 0
        while True:
            b = self.byte()
            result |= (b & 0x7F) << shift
            if not b & 0x80:
                return result
            shift += 7

    def bytes_(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise InvalidModule("module truncated")
        self.pos += n
        return self.data[self.pos - n:self.pos]

    def name(self) -> str:
        return self.bytes_(self.uleb()).decode("utf-8", "replace")

    def limits(self) -> None:
        flag = self.byte()
        self.uleb()
        if flag & 1:
            self.uleb()

    def valtypes(self) -> tuple[str, ...]:
        return tuple(_VALTYPE_NAMES.get(self.byte(), "?")
                     for _ in range(self.uleb()))


def export_signatures(data: bytes) -> dict[str, tuple[tuple[str, ...],
                                                      tuple[str, ...]]]:
    """Map each exported function to its (param types, result types)."""
    if data[:4] != WASM_MAGIC:
        raise InvalidModule("missing module magic")
    r = _Reader(data)
    r.bytes_(8)
    types: list[tuple[tuple[str, ...], tuple[str, ...]]] = []
    func_types: list[int] = []     # imported functions first
    exports: list[tuple[str, int, int]] = []
    while r.pos < len(data):
        section_id = r.byte()
        size = r.uleb()
        end = r.pos + size
        if section_id == 1:
            for _ in range(r.uleb()):
                if r.byte() != 0x60:
                    raise InvalidModule("malformed function type")
                params = r.valtypes()
                results = r.valtypes()
                types.append((params, results))
        elif section_id == 2:
            for _ in range(r.uleb()):
                r.name()
                r.name()
                kind = r.byte()
                if kind == 0:
                    func_types.append(r.uleb())
                elif kind == 1:
                    r.byte()
                    r.limits()
                elif kind == 2:
                    r.limits()
                elif kind == 3:
                    r.byte()
                    r.byte()
                else:
                    raise InvalidModule(f"unknown import kind {kind}")
        elif section_id == 3:
            for _ in range(r.uleb()):
                func_types.append(r.uleb())
        elif section_id == 7:
            for _ in range(r.uleb()):
                name = r.name()
                kind = r.byte()
                index = r.uleb()
                exports.append((name, kind, index))
        r.pos = end
    out = {}
    for name, kind, index in exports:
        if kind == 0:
            if index >= len(func_types) or func_types[index] >= len(types):
                raise InvalidModule(f"export '{name}' has no type")
            out[name] = types[func_types[index]]
    return out


# scripted fake engine

@dataclass
class _StubInstance(GuestInstance):
    memory: bytearray = field(default_factory=bytearray)
    heap: int = 0
    calls: list[tuple[str, tuple[int, ...]]] = field(default_factory=list)
    binary: WasmBinary | None = None


class StubAdapter(EngineAdapter):
    """Records calls and replays scripted results; runs no guest code.

    exports maps names to plain callables.  Unless overridden, a
    bump-pointer ``malloc`` is provided so buffer plumbing works.
    """

    name = "wasm-stub"

    def __init__(self, exports: dict[str, Callable[..., int]] | None = None,
                 memory_size: int = 65536, heap_base: int = 1024):
        self.exports = dict(exports or {})
        self.memory_size = memory_size
        self.heap_base = heap_base

    def instantiate(self, binary: WasmBinary) -> _StubInstance:
        return _StubInstance(adapter=self, memory=bytearray(self.memory_size),
                             heap=self.heap_base, binary=binary)

    def call(self, instance: _StubInstance, export: str,
             args: Sequence[int]) -> int:
        args = tuple(int(a) for a in args)
        instance.calls.append((export, args))
        if export in self.exports:
            return int(self.exports[export](*args)) & U64_MAX
        if export == DEFAULT_ALLOCATOR:
            ptr = instance.heap
            instance.heap += max(8, (args[0] + 7) & ~7)
            if instance.heap > len(instance.memory):
                return 0
            return ptr
        raise MissingExport(export)

    def memory_read(self, instance: _StubInstance, addr: int,
                    length: int) -> bytes:
        if addr < 0 or addr + length > len(instance.memory):
            raise OutOfBoundsGuestRead(
                f"read of {length} bytes at {addr} exceeds guest memory")
        return bytes(instance.memory[addr:addr + length])

    def memory_write(self, instance: _StubInstance, addr: int,
                     data: bytes) -> None:
        if addr < 0 or addr + len(data) > len(instance.memory):
            raise OutOfGuestMemory(
                f"write of {len(data)} bytes at {addr} exceeds guest memory")
        instance.memory[addr:addr + len(data)] = data
