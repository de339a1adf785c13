"""V8-backed engine binding.

Modules execute inside one long-lived Node subprocess per adapter; the
host and the subprocess speak a JSON-lines request/response protocol
over stdin/stdout.  Scalars cross the boundary as decimal strings
(64-bit values do not survive JSON numbers), buffers as base64.

Argument coercion needs the exact parameter widths: the embedder maps
i64 to BigInt and i32 to Number, and mixing them up is a TypeError.
Widths come from the module's own type section via export_signatures,
so callers just pass Python ints.
"""

from __future__ import annotations

import base64
import json
import shutil
import subprocess
import threading
from dataclasses import dataclass, field

from .wasm import (
    U64_MAX,
    EngineAdapter,
    EngineUnavailable,
    GuestInstance,
    GuestTrap,
    InvalidModule,
    MissingExport,
    OutOfBoundsGuestRead,
    OutOfGuestMemory,
    TypeMismatch,
    WasmBinary,
    WasmError,
    export_signatures,
)

__all__ = ["NodeAdapter"]

_HOST_SOURCE = r"""
const readline = require("readline");
const rl = readline.createInterface({ input: process.stdin, terminal: false });
const instances = new Map();
let nextHandle = 1;
const out = (obj) => process.stdout.write(JSON.stringify(obj) + "\n");

function classify(e) {
  if (e instanceof WebAssembly.CompileError) return "invalid_module";
  if (e instanceof WebAssembly.LinkError) return "invalid_module";
  if (e instanceof WebAssembly.RuntimeError) return "trap";
  if (e instanceof TypeError) return "type_mismatch";
  if (e instanceof RangeError) return "invalid_module";
  return "error";
}

function memoryOf(inst) {
  for (const v of Object.values(inst.exports))
    if (v instanceof WebAssembly.Memory) return v;
  return null;
}

function getInstance(handle) {
  const inst = instances.get(handle);
  if (!inst) throw { kind: "protocol", message: `unknown handle ${handle}` };
  return inst;
}

rl.on("line", (line) => {
  if (!line.trim()) return;
  let req;
  try { req = JSON.parse(line); } catch (e) {
    out({ id: 0, error: { kind: "protocol", message: String(e) } });
    return;
  }
  const id = req.id;
  try {
    let result;
    switch (req.op) {
      case "ping":
        result = { ok: true };
        break;
      case "instantiate": {
        const bytes = Buffer.from(req.module_b64, "base64");
        const module = new WebAssembly.Module(bytes);
        const instance = new WebAssembly.Instance(module, {});
        const handle = nextHandle++;
        instances.set(handle, instance);
        const exports = {};
        for (const [k, v] of Object.entries(instance.exports)) {
          exports[k] = typeof v === "function" ? "function"
            : v instanceof WebAssembly.Memory ? "memory"
            : v instanceof WebAssembly.Global ? "global" : "other";
        }
        result = { handle, exports };
        break;
      }
      case "call": {
        const inst = getInstance(req.handle);
        const fn = inst.exports[req.name];
        if (typeof fn !== "function")
          throw { kind: "missing_export", message: req.name };
        const args = req.args.map((a, i) =>
          req.types[i] === "i64" ? BigInt(a) : Number(a));
        const r = fn(...args);
        result = { value: typeof r === "bigint" ? r.toString()
                        : String(r === undefined ? 0 : r) };
        break;
      }
      case "read": {
        const inst = getInstance(req.handle);
        const mem = memoryOf(inst);
        if (!mem) throw { kind: "missing_export", message: "memory" };
        const view = new Uint8Array(mem.buffer);
        if (req.addr < 0 || req.addr + req.len > view.length)
          throw { kind: "oob_read", message:
            `read [${req.addr}, +${req.len}) exceeds memory of ${view.length}` };
        result = { data_b64: Buffer.from(
          view.subarray(req.addr, req.addr + req.len)).toString("base64") };
        break;
      }
      case "write": {
        const inst = getInstance(req.handle);
        const mem = memoryOf(inst);
        if (!mem) throw { kind: "missing_export", message: "memory" };
        const bytes = Buffer.from(req.data_b64, "base64");
        const view = new Uint8Array(mem.buffer);
        if (req.addr < 0 || req.addr + bytes.length > view.length)
          throw { kind: "oob_write", message:
            `write [${req.addr}, +${bytes.length}) exceeds memory of ${view.length}` };
        view.set(bytes, req.addr);
        result = { ok: true };
        break;
      }
      case "drop":
        instances.delete(req.handle);
        result = { ok: true };
        break;
      default:
        throw { kind: "protocol", message: `unknown op ${req.op}` };
    }
    out({ id, result });
  } catch (e) {
    if (e && e.kind) out({ id, error: e });
    else out({ id, error: { kind: classify(e),
                            message: String((e && e.message) || e) } });
  }
});
"""

_ERROR_KINDS = {
    "invalid_module": InvalidModule,
    "trap": GuestTrap,
    "type_mismatch": TypeMismatch,
    "oob_read": OutOfBoundsGuestRead,
    "oob_write": OutOfGuestMemory,
}


@dataclass
class _NodeInstance(GuestInstance):
    handle: int = 0
    exports: dict[str, str] = field(default_factory=dict)
    signatures: dict[str, tuple[tuple[str, ...], tuple[str, ...]]] = \
        field(default_factory=dict)


class NodeAdapter(EngineAdapter):
    name = "wasm-v8"

    def __init__(self, node_path: str | None = None):
        path = node_path or shutil.which("node")
        if path is None:
            raise EngineUnavailable("no 'node' runtime on PATH")
        self._closed = False
        self._counter = 0
        self._lock = threading.Lock()
        try:
            self._proc = subprocess.Popen(
                [path, "-e", _HOST_SOURCE],
                stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=subprocess.PIPE, text=True, encoding="utf-8")
        except OSError as e:
            raise EngineUnavailable(f"cannot start '{path}': {e}") from None
        self._rpc("ping")

    @staticmethod
    def available() -> bool:
        return shutil.which("node") is not None

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        try:
            self._proc.stdin.close()
            self._proc.wait(timeout=5)
        except (OSError, subprocess.TimeoutExpired):
            self._proc.kill()
            self._proc.wait()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass

    def _died(self, why: str) -> EngineUnavailable:
        tail = ""
        try:
            self._proc.kill()
            self._proc.wait(timeout=5)
            tail = (self._proc.stderr.read() or "")[-500:]
        except (OSError, subprocess.TimeoutExpired, ValueError):
            pass
        self._closed = True
        detail = f"; stderr: {tail.strip()}" if tail.strip() else ""
        return EngineUnavailable(f"engine process failed: {why}{detail}")

    def _rpc(self, op: str, **fields) -> dict:
        with self._lock:
            if self._closed:
                raise EngineUnavailable("engine already closed")
            self._counter += 1
            request = {"id": self._counter, "op": op, **fields}
            try:
                self._proc.stdin.write(json.dumps(request) + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError, ValueError) as e:
                raise self._died(str(e)) from None
            line = self._proc.stdout.readline()
            if not line:
                raise self._died("no reply (process ended)")
        try:
            reply = json.loads(line)
        except ValueError as e:
            raise self._died(f"garbled reply: {e}") from None
        error = reply.get("error")
        if error is not None:
            kind = error.get("kind", "error")
            message = error.get("message", "")
            if kind == "missing_export":
                raise MissingExport(message)
            raise _ERROR_KINDS.get(kind, WasmError)(message)
        return reply["result"]

    def instantiate(self, binary: WasmBinary) -> _NodeInstance:
        signatures = export_signatures(binary.data)
        result = self._rpc(
            "instantiate",
            module_b64=base64.b64encode(binary.data).decode("ascii"))
        return _NodeInstance(adapter=self, handle=result["handle"],
                             exports=result["exports"], signatures=signatures)

    def release(self, instance: _NodeInstance) -> None:
        """Drop the guest instance; its buffers die with it."""
        if not self._closed:
            self._rpc("drop", handle=instance.handle)

    def call(self, instance: _NodeInstance, export: str, args) -> int:
        if instance.exports.get(export) != "function":
            raise MissingExport(export)
        params, results = instance.signatures.get(export, ((), ()))
        if len(args) != len(params):
            raise TypeMismatch(f"'{export}' takes {len(params)} scalar "
                               f"argument(s), got {len(args)}")
        alien = [t for t in (*params, *results) if t not in ("i32", "i64")]
        if alien:
            raise TypeMismatch(
                f"'{export}' uses {alien[0]}; only integer scalars cross "
                f"the offload boundary")
        wire = [str(int(v) & (0xFFFF_FFFF if t == "i32" else U64_MAX))
                for v, t in zip(args, params)]
        result = self._rpc("call", handle=instance.handle, name=export,
                           args=wire, types=list(params))
        value = int(result["value"])
        if not results:
            return 0
        return value & (0xFFFF_FFFF if results[0] == "i32" else U64_MAX)

    def memory_read(self, instance: _NodeInstance, addr: int,
                    length: int) -> bytes:
        result = self._rpc("read", handle=instance.handle,
                           addr=addr, len=length)
        return base64.b64decode(result["data_b64"])

    def memory_write(self, instance: _NodeInstance, addr: int,
                     data: bytes) -> None:
        self._rpc("write", handle=instance.handle, addr=addr,
                  data_b64=base64.b64encode(data).decode("ascii"))
