"""WebAssembly text-to-binary conversion for the corpus module subset.

Fixtures are authored in the standard text format and converted to the
binary format at load time.  This is a converter for the slice of the
language those modules use, not a general tool:

- integer scalars only (i32/i64); no floats, tables, or imports
- one optional memory, mutable globals with constant initializers
- plain instructions in flat or folded form; control flow (block,
  loop, if) must use the folded form
- inline exports on func/memory/global

Anything outside the subset raises WatError naming the construct.
"""

from __future__ import annotations

from . import OffloadError

__all__ = ["WatError", "wat_to_wasm"]

WASM_MAGIC = b"\x00asm"
_VERSION = b"\x01\x00\x00\x00"

_I32, _I64 = 0x7F, 0x7E
_VALTYPE = {"i32": _I32, "i64": _I64}
_EMPTY_BLOCK = 0x40

_FUNC_EXPORT, _MEMORY_EXPORT, _GLOBAL_EXPORT = 0x00, 0x02, 0x03


class WatError(OffloadError):
    """Text-format input outside the supported subset, or malformed."""


def _uleb(n: int) -> bytes:
    out = bytearray()
    while True:
        b = n & 0x7F
        n >>= 7
        if n:
            out.append(b | 0x80)
        else:
            out.append(b)
            return bytes(out)


def _sleb(n: int) -> bytes:
    out = bytearray()
    while True:
        b = n & 0x7F
        n >>= 7
        done = (n == 0 and not b & 0x40) or (n == -1 and b & 0x40)
        out.append(b if done else b | 0x80)
        if done:
            return bytes(out)


def _vec(items: list[bytes]) -> bytes:
    return _uleb(len(items)) + b"".join(items)


def _section(section_id: int, payload: bytes) -> bytes:
    return bytes([section_id]) + _uleb(len(payload)) + payload


def _name(text: str) -> bytes:
    raw = text.encode("utf-8")
    return _uleb(len(raw)) + raw


# tokenizer / s-expression reader

def _tokenize(text: str) -> list[object]:
    """Tokens are '(', ')', atom strings, or bytes (quoted strings)."""
    tokens: list[object] = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c in " \t\r\n":
            i += 1
        elif text.startswith(";;", i):
            nl = text.find("\n", i)
            i = n if nl < 0 else nl + 1
        elif text.startswith("(;", i):
            depth, i = 1, i + 2
            while i < n and depth:
                if text.startswith("(;", i):
                    depth, i = depth + 1, i + 2
                elif text.startswith(";)", i):
                    depth, i = depth - 1, i + 2
                else:
                    i += 1
            if depth:
                raise WatError("unterminated block comment")
        elif c == "(":
            tokens.append("(")
            i += 1
        elif c == ")":
            tokens.append(")")
            i += 1
        elif c == '"':
            raw, i = bytearray(), i + 1
            while i < n and text[i] != '"':
                ch = text[i]
                if ch == "\\":
                    esc = text[i + 1:i + 2]
                    if esc in ('"', "\\", "'"):
                        raw += esc.encode()
                        i += 2
                    elif esc == "n":
                        raw += b"\n"
                        i += 2
                    elif esc == "t":
                        raw += b"\t"
                        i += 2
                    elif esc == "r":
                        raw += b"\r"
                        i += 2
                    else:
                        raw.append(int(text[i + 1:i + 3], 16))
                        i += 3
                else:
                    raw += ch.encode("utf-8")
                    i += 1
            if i >= n:
                raise WatError("unterminated string literal")
            tokens.append(bytes(raw))
            i += 1
        else:
            j = i
            while j < n and text[j] not in ' \t\r\n();"':
                j += 1
            tokens.append(text[i:j])
            i = j
    return tokens


def _read_sexprs(tokens: list[object]) -> list[object]:
    stack: list[list[object]] = [[]]
    for tok in tokens:
        if tok == "(":
            stack.append([])
        elif tok == ")":
            if len(stack) == 1:
                raise WatError("unbalanced ')'")
            done = stack.pop()
            stack[-1].append(done)
        else:
            stack[-1].append(tok)
    if len(stack) != 1:
        raise WatError("unbalanced '('")
    return stack[0]


def _head(node: object) -> str:
    if isinstance(node, list) and node and isinstance(node[0], str):
        return node[0]
    return ""


def _int(tok: object, what: str) -> int:
    if not isinstance(tok, str):
        raise WatError(f"expected {what}, got {tok!r}")
    try:
        return int(tok.replace("_", ""), 0)
    except ValueError:
        raise WatError(f"expected {what}, got '{tok}'") from None


# instruction tables (integer MVP slice)

_PLAIN: dict[str, int] = {
    "unreachable": 0x00, "nop": 0x01, "return": 0x0F, "drop": 0x1A,
    "select": 0x1B,
    "i32.eqz": 0x45, "i32.eq": 0x46, "i32.ne": 0x47,
    "i32.lt_s": 0x48, "i32.lt_u": 0x49, "i32.gt_s": 0x4A, "i32.gt_u": 0x4B,
    "i32.le_s": 0x4C, "i32.le_u": 0x4D, "i32.ge_s": 0x4E, "i32.ge_u": 0x4F,
    "i64.eqz": 0x50, "i64.eq": 0x51, "i64.ne": 0x52,
    "i64.lt_s": 0x53, "i64.lt_u": 0x54, "i64.gt_s": 0x55, "i64.gt_u": 0x56,
    "i64.le_s": 0x57, "i64.le_u": 0x58, "i64.ge_s": 0x59, "i64.ge_u": 0x5A,
    "i32.clz": 0x67, "i32.ctz": 0x68, "i32.popcnt": 0x69,
    "i32.add": 0x6A, "i32.sub": 0x6B, "i32.mul": 0x6C,
    "i32.div_s": 0x6D, "i32.div_u": 0x6E, "i32.rem_s": 0x6F, "i32.rem_u": 0x70,
    "i32.and": 0x71, "i32.or": 0x72, "i32.xor": 0x73,
    "i32.shl": 0x74, "i32.shr_s": 0x75, "i32.shr_u": 0x76,
    "i32.rotl": 0x77, "i32.rotr": 0x78,
    "i64.clz": 0x79, "i64.ctz": 0x7A, "i64.popcnt": 0x7B,
    "i64.add": 0x7C, "i64.sub": 0x7D, "i64.mul": 0x7E,
    "i64.div_s": 0x7F, "i64.div_u": 0x80, "i64.rem_s": 0x81, "i64.rem_u": 0x82,
    "i64.and": 0x83, "i64.or": 0x84, "i64.xor": 0x85,
    "i64.shl": 0x86, "i64.shr_s": 0x87, "i64.shr_u": 0x88,
    "i64.rotl": 0x89, "i64.rotr": 0x8A,
    "i32.wrap_i64": 0xA7, "i64.extend_i32_s": 0xAC, "i64.extend_i32_u": 0xAD,
}

# opcode, natural alignment exponent
_MEMOPS: dict[str, tuple[int, int]] = {
    "i32.load": (0x28, 2), "i64.load": (0x29, 3),
    "i32.load8_s": (0x2C, 0), "i32.load8_u": (0x2D, 0),
    "i32.load16_s": (0x2E, 1), "i32.load16_u": (0x2F, 1),
    "i64.load8_s": (0x30, 0), "i64.load8_u": (0x31, 0),
    "i64.load16_s": (0x32, 1), "i64.load16_u": (0x33, 1),
    "i64.load32_s": (0x34, 2), "i64.load32_u": (0x35, 2),
    "i32.store": (0x36, 2), "i64.store": (0x37, 3),
    "i32.store8": (0x3A, 0), "i32.store16": (0x3B, 1),
    "i64.store8": (0x3C, 0), "i64.store16": (0x3D, 1),
    "i64.store32": (0x3E, 2),
}

_FLOAT_PREFIXES = ("f32.", "f64.")


class _Func:
    def __init__(self):
        self.name: str | None = None
        self.exports: list[bytes] = []
        self.params: list[tuple[str | None, int]] = []
        self.results: list[int] = []
        self.locals: list[tuple[str | None, int]] = []
        self.body: list[object] = []


class _Emitter:
    """Assembles one function body against the module's name spaces."""

    def __init__(self, module: "_Module", func: _Func):
        self.module = module
        self.func = func
        self.code = bytearray()
        self.locals: dict[str, int] = {}
        for i, (name, _t) in enumerate(func.params + func.locals):
            if name is not None:
                if name in self.locals:
                    raise WatError(f"duplicate local {name}")
                self.locals[name] = i
        self.n_locals = len(func.params) + len(func.locals)
        self.labels: list[str | None] = []

    def _local_index(self, tok: object) -> int:
        if isinstance(tok, str) and tok.startswith("$"):
            if tok not in self.locals:
                raise WatError(f"unknown local {tok}")
            return self.locals[tok]
        idx = _int(tok, "local index")
        if idx >= self.n_locals:
            raise WatError(f"local index {idx} out of range")
        return idx

    def _label_depth(self, tok: object) -> int:
        if isinstance(tok, str) and tok.startswith("$"):
            for depth, label in enumerate(reversed(self.labels)):
                if label == tok:
                    return depth
            raise WatError(f"unknown label {tok}")
        depth = _int(tok, "label depth")
        if depth >= len(self.labels):
            raise WatError(f"branch depth {depth} exceeds nesting")
        return depth

    def _block_intro(self, items: list[object], i: int) -> tuple[int, int]:
        """Consume optional label and (result t); returns (next i, blocktype)."""
        label = None
        if i < len(items) and isinstance(items[i], str) and items[i].startswith("$"):
            label = items[i]
            i += 1
        blocktype = _EMPTY_BLOCK
        if i < len(items) and _head(items[i]) == "result":
            node = items[i]
            if len(node) != 2 or node[1] not in _VALTYPE:
                raise WatError("block result must be a single integer type")
            blocktype = _VALTYPE[node[1]]
            i += 1
        self.labels.append(label)
        return i, blocktype

    def _memarg(self, items: list[object], i: int, natural: int) -> int:
        offset, align = 0, natural
        while i < len(items) and isinstance(items[i], str):
            tok = items[i]
            if tok.startswith("offset="):
                offset = _int(tok[7:], "offset")
            elif tok.startswith("align="):
                align = _int(tok[6:], "alignment").bit_length() - 1
            else:
                break
            i += 1
        self.code += _uleb(align) + _uleb(offset)
        return i

    def emit_sequence(self, items: list[object]) -> None:
        i = 0
        while i < len(items):
            i = self._emit_one(items, i)

    def _emit_one(self, items: list[object], i: int) -> int:
        node = items[i]
        if isinstance(node, list):
            self._emit_folded(node)
            return i + 1
        if not isinstance(node, str):
            raise WatError(f"unexpected token {node!r} in function body")
        op = node
        i += 1

        if op in _PLAIN:
            self.code.append(_PLAIN[op])
            return i
        if op in ("i32.const", "i64.const"):
            if i >= len(items):
                raise WatError(f"{op} needs a value")
            value = _int(items[i], "integer constant")
            bits = 32 if op == "i32.const" else 64
            value &= (1 << bits) - 1
            if value >= 1 << (bits - 1):
                value -= 1 << bits
            self.code.append(0x41 if op == "i32.const" else 0x42)
            self.code += _sleb(value)
            return i + 1
        if op in ("local.get", "local.set", "local.tee"):
            opcode = {"local.get": 0x20, "local.set": 0x21, "local.tee": 0x22}[op]
            self.code.append(opcode)
            self.code += _uleb(self._local_index(items[i]))
            return i + 1
        if op in ("global.get", "global.set"):
            self.code.append(0x23 if op == "global.get" else 0x24)
            self.code += _uleb(self.module.global_index(items[i]))
            return i + 1
        if op in ("br", "br_if"):
            self.code.append(0x0C if op == "br" else 0x0D)
            self.code += _uleb(self._label_depth(items[i]))
            return i + 1
        if op == "call":
            self.code.append(0x10)
            self.code += _uleb(self.module.func_index(items[i]))
            return i + 1
        if op in _MEMOPS:
            opcode, natural = _MEMOPS[op]
            self.code.append(opcode)
            return self._memarg(items, i, natural)
        if op in ("memory.size", "memory.grow"):
            self.code.append(0x3F if op == "memory.size" else 0x40)
            self.code.append(0x00)
            return i
        if op.startswith(_FLOAT_PREFIXES):
            raise WatError(f"'{op}': floating point is outside the subset")
        if op in ("block", "loop", "if", "else", "end"):
            raise WatError(f"'{op}': control flow must use the folded form")
        raise WatError(f"unsupported instruction '{op}'")

    def _emit_folded(self, node: list[object]) -> None:
        op = _head(node)
        if op in ("block", "loop"):
            i, blocktype = self._block_intro(node, 1)
            self.code.append(0x02 if op == "block" else 0x03)
            self.code.append(blocktype)
            self.emit_sequence(node[i:])
            self.code.append(0x0B)
            self.labels.pop()
            return
        if op == "if":
            i, blocktype = self._block_intro(node, 1)
            then_at = next((j for j in range(i, len(node))
                            if _head(node[j]) == "then"), None)
            if then_at is None:
                raise WatError("folded if needs a (then ...) arm")
            # condition first, outside the new label scope
            self.labels.pop()
            self.emit_sequence(node[i:then_at])
            self.labels.append(None if not isinstance(node[1], str)
                               or not node[1].startswith("$") else node[1])
            self.code.append(0x04)
            self.code.append(blocktype)
            self.emit_sequence(node[then_at][1:])
            rest = node[then_at + 1:]
            if rest:
                if len(rest) != 1 or _head(rest[0]) != "else":
                    raise WatError("folded if allows only (then) and (else) arms")
                self.code.append(0x05)
                self.emit_sequence(rest[0][1:])
            self.code.append(0x0B)
            self.labels.pop()
            return
        if op in ("then", "else"):
            raise WatError(f"({op} ...) only belongs inside a folded if")
        if not op:
            raise WatError(f"cannot assemble {node!r}")
        # generic folded form: operands after the op's own immediates
        imm_count = 0
        if op in ("local.get", "local.set", "local.tee", "global.get",
                  "global.set", "br", "br_if", "call",
                  "i32.const", "i64.const"):
            imm_count = 1
        elif op in _MEMOPS:
            imm_count = sum(1 for t in node[1:]
                            if isinstance(t, str)
                            and (t.startswith("offset=") or t.startswith("align=")))
        operands = node[1 + imm_count:]
        for operand in operands:
            if not isinstance(operand, list):
                raise WatError(
                    f"stray token {operand!r} in folded '{op}'")
            self._emit_folded(operand)
        self.emit_sequence(node[:1 + imm_count])


class _Module:
    def __init__(self):
        self.funcs: list[_Func] = []
        self.func_names: dict[str, int] = {}
        self.globals: list[tuple[str | None, int, bool, int]] = []
        self.global_names: dict[str, int] = {}
        self.memory: tuple[int, int | None] | None = None
        self.memory_exports: list[bytes] = []
        self.extra_exports: list[tuple[bytes, int, int]] = []

    def func_index(self, tok: object) -> int:
        if isinstance(tok, str) and tok.startswith("$"):
            if tok not in self.func_names:
                raise WatError(f"unknown function {tok}")
            return self.func_names[tok]
        idx = _int(tok, "function index")
        if idx >= len(self.funcs):
            raise WatError(f"function index {idx} out of range")
        return idx

    def global_index(self, tok: object) -> int:
        if isinstance(tok, str) and tok.startswith("$"):
            if tok not in self.global_names:
                raise WatError(f"unknown global {tok}")
            return self.global_names[tok]
        idx = _int(tok, "global index")
        if idx >= len(self.globals):
            raise WatError(f"global index {idx} out of range")
        return idx


def _parse_func(node: list[object], module: _Module) -> _Func:
    func = _Func()
    i = 1
    if i < len(node) and isinstance(node[i], str) and node[i].startswith("$"):
        func.name = node[i]
        i += 1
    while i < len(node) and _head(node[i]) == "export":
        exp = node[i]
        if len(exp) != 2 or not isinstance(exp[1], bytes):
            raise WatError("export clause needs a quoted name")
        func.exports.append(exp[1])
        i += 1
    while i < len(node) and _head(node[i]) in ("param", "local", "result"):
        clause = node[i]
        kind = clause[0]
        rest = clause[1:]
        if kind == "result":
            for t in rest:
                if t not in _VALTYPE:
                    raise WatError(f"result type {t!r} is outside the subset")
                func.results.append(_VALTYPE[t])
        elif rest and isinstance(rest[0], str) and rest[0].startswith("$"):
            if len(rest) != 2 or rest[1] not in _VALTYPE:
                raise WatError(f"named {kind} needs exactly one integer type")
            dest = func.params if kind == "param" else func.locals
            dest.append((rest[0], _VALTYPE[rest[1]]))
        else:
            dest = func.params if kind == "param" else func.locals
            for t in rest:
                if t not in _VALTYPE:
                    raise WatError(f"{kind} type {t!r} is outside the subset")
                dest.append((None, _VALTYPE[t]))
        i += 1
    if len(func.results) > 1:
        raise WatError("multi-value results are outside the subset")
    func.body = node[i:]
    return func


def _parse_global(node: list[object], module: _Module) -> None:
    i = 1
    name = None
    if i < len(node) and isinstance(node[i], str) and node[i].startswith("$"):
        name = node[i]
        i += 1
    exports = []
    while i < len(node) and _head(node[i]) == "export":
        exports.append(node[i][1])
        i += 1
    if i >= len(node):
        raise WatError("global needs a type")
    tnode = node[i]
    mutable = False
    if _head(tnode) == "mut":
        mutable = True
        tnode = tnode[1]
    if tnode not in _VALTYPE:
        raise WatError(f"global type {tnode!r} is outside the subset")
    vt = _VALTYPE[tnode]
    i += 1
    if i >= len(node) or _head(node[i]) not in ("i32.const", "i64.const"):
        raise WatError("global initializer must be an integer constant")
    init = _int(node[i][1], "global initializer")
    index = len(module.globals)
    module.globals.append((name, vt, mutable, init))
    if name:
        module.global_names[name] = index
    for exp in exports:
        module.extra_exports.append((exp, _GLOBAL_EXPORT, index))


def _parse_memory(node: list[object], module: _Module) -> None:
    if module.memory is not None:
        raise WatError("only one memory is supported")
    i = 1
    if i < len(node) and isinstance(node[i], str) and node[i].startswith("$"):
        i += 1
    while i < len(node) and _head(node[i]) == "export":
        module.memory_exports.append(node[i][1])
        i += 1
    if i >= len(node):
        raise WatError("memory needs a page count")
    minimum = _int(node[i], "memory pages")
    maximum = _int(node[i + 1], "memory max pages") if i + 1 < len(node) else None
    module.memory = (minimum, maximum)


def wat_to_wasm(text: str) -> bytes:
    """Convert text-format module source to a binary module."""
    top = _read_sexprs(_tokenize(text))
    if len(top) != 1 or _head(top[0]) != "module":
        raise WatError("source must hold exactly one (module ...) form")
    module = _Module()
    for field in top[0][1:]:
        kind = _head(field)
        if kind == "func":
            func = _parse_func(field, module)
            if func.name:
                if func.name in module.func_names:
                    raise WatError(f"duplicate function {func.name}")
                module.func_names[func.name] = len(module.funcs)
            module.funcs.append(func)
        elif kind == "memory":
            _parse_memory(field, module)
        elif kind == "global":
            _parse_global(field, module)
        elif kind == "export":
            if len(field) != 3 or not isinstance(field[1], bytes):
                raise WatError("standalone export needs a name and a target")
            target = field[2]
            tkind = _head(target)
            if tkind == "func":
                module.extra_exports.append(
                    (field[1], _FUNC_EXPORT, module.func_index(target[1])))
            elif tkind == "memory":
                module.extra_exports.append((field[1], _MEMORY_EXPORT, 0))
            else:
                raise WatError(f"cannot export a {tkind!r}")
        elif kind in ("import", "table", "elem", "data", "start", "type"):
            raise WatError(f"({kind} ...) is outside the supported subset")
        else:
            raise WatError(f"unknown module field {field!r}")

    if not module.funcs:
        raise WatError("module defines no functions")

    types: dict[tuple[tuple[int, ...], tuple[int, ...]], int] = {}
    type_entries: list[bytes] = []
    func_types: list[int] = []
    for func in module.funcs:
        sig = (tuple(t for _n, t in func.params), tuple(func.results))
        if sig not in types:
            types[sig] = len(type_entries)
            type_entries.append(
                b"\x60" + _vec([bytes([t]) for t in sig[0]])
                + _vec([bytes([t]) for t in sig[1]]))
        func_types.append(types[sig])

    bodies: list[bytes] = []
    for func in module.funcs:
        emitter = _Emitter(module, func)
        emitter.emit_sequence(func.body)
        groups: list[bytes] = []
        run_type, run_len = None, 0
        for _n, t in func.locals + [(None, -1)]:
            if t == run_type:
                run_len += 1
            else:
                if run_type is not None and run_type != -1:
                    groups.append(_uleb(run_len) + bytes([run_type]))
                run_type, run_len = t, 1
        body = _vec(groups) + bytes(emitter.code) + b"\x0B"
        bodies.append(_uleb(len(body)) + body)

    exports: list[bytes] = []
    seen: set[bytes] = set()

    def add_export(raw: bytes, kind: int, index: int) -> None:
        if raw in seen:
            raise WatError(f"duplicate export {raw!r}")
        seen.add(raw)
        exports.append(_name(raw.decode("utf-8"))
                       + bytes([kind]) + _uleb(index))

    for idx, func in enumerate(module.funcs):
        for raw in func.exports:
            add_export(raw, _FUNC_EXPORT, idx)
    for raw in module.memory_exports:
        if module.memory is None:
            raise WatError("memory export without a memory")
        add_export(raw, _MEMORY_EXPORT, 0)
    for raw, kind, index in module.extra_exports:
        add_export(raw, kind, index)

    out = bytearray(WASM_MAGIC + _VERSION)
    out += _section(1, _vec(type_entries))
    out += _section(3, _vec([_uleb(t) for t in func_types]))
    if module.memory is not None:
        minimum, maximum = module.memory
        limits = (b"\x01" + _uleb(minimum) + _uleb(maximum)
                  if maximum is not None else b"\x00" + _uleb(minimum))
        out += _section(5, _vec([limits]))
    if module.globals:
        entries = []
        for _name_, vt, mutable, init in module.globals:
            const_op = b"\x41" if vt == _I32 else b"\x42"
            entries.append(bytes([vt, 1 if mutable else 0])
                           + const_op + _sleb(init) + b"\x0B")
        out += _section(6, _vec(entries))
    if exports:
        out += _section(7, _vec(exports))
    out += _section(10, _vec(bodies))
    return bytes(out)
