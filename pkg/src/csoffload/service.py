"""HTTP service exposing the offload toolchain.

Every operation the CLI offers is available as a JSON endpoint, so the
toolchain can run as a shared daemon (one VM host serving several
clients) or in-process behind a test client.  Binary payloads travel as
hex (bytecode) or base64 (object files, wasm modules); 64-bit values
are plain JSON integers.

Domain failures (bad assembly, traps, malformed objects) map to HTTP
422 with the error class name in the body; the service never converts
them to 500s.
"""

from __future__ import annotations

import base64
import binascii
import json
from typing import Literal

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field, model_validator

from . import OffloadError, __version__
from .asm import (
    AsmModule,
    assemble,
    disassemble,
    parse_patched,
    serialize_patched,
)
from .bench import (
    BenchConfig,
    ENGINES,
    MetricReport,
    ReportRow,
    emit_report,
    run_bench,
)
from .corpus import load_program_specs, select_programs
from .isa import Program, decode_program, encode_program
from .native import native_engine_run
from .patcher import EbpfObject, inline_calls, load_object, make_patched
from .vm import (
    VerifierPolicy,
    VmConfig,
    execute,
    instantiate,
    verify,
    write_static_mem,
)

__all__ = ["create_app", "app"]


class ServiceError(OffloadError):
    pass


def _decode_hex(text: str, what: str) -> bytes:
    try:
        return bytes.fromhex("".join(text.split()))
    except ValueError:
        raise ServiceError(f"{what} is not valid hex") from None


def _decode_b64(text: str, what: str) -> bytes:
    try:
        return base64.b64decode(text, validate=True)
    except (binascii.Error, ValueError):
        raise ServiceError(f"{what} is not valid base64") from None


class AssembleRequest(BaseModel):
    source: str


class AssembleResponse(BaseModel):
    kind: Literal["program", "module"]
    code_hex: str
    slot_count: int
    functions: list[str] = []
    entry: str = ""


class DisassembleRequest(BaseModel):
    code_hex: str


class DisassembleResponse(BaseModel):
    source: str
    slot_count: int


class PolicyModel(BaseModel):
    allow_loops: bool = True
    lint_entry_r1_clobber: bool = True
    lint_nonterminating_ja: bool = True
    lints_as_errors: bool = False

    def to_policy(self) -> VerifierPolicy:
        return VerifierPolicy(**self.model_dump())


class VerifyRequest(BaseModel):
    source: str | None = None
    code_hex: str | None = None
    patched: str | None = None
    policy: PolicyModel = PolicyModel()
    helpers: list[int] = []

    @model_validator(mode="after")
    def _one_input(self):
        given = [v for v in (self.source, self.code_hex, self.patched)
                 if v is not None]
        if len(given) != 1:
            raise ValueError(
                "provide exactly one of source, code_hex, or patched")
        return self


class DiagnosticModel(BaseModel):
    slot: int
    code: str
    message: str
    severity: str


class VerifyResponse(BaseModel):
    ok: bool
    diagnostics: list[DiagnosticModel]


class PatchRequest(BaseModel):
    module_source: str | None = None
    object_b64: str | None = None
    entry: str | None = None
    expected_output: int = Field(default=0, ge=0, lt=1 << 64)
    static_mem_size: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _one_input(self):
        if (self.module_source is None) == (self.object_b64 is None):
            raise ValueError("provide exactly one of module_source or object_b64")
        return self


class PatchResponse(BaseModel):
    patched: str
    slot_count: int
    functions: list[str]


class RunEbpfRequest(BaseModel):
    patched: str
    args: list[int] = Field(default=[0, 0, 0], max_length=3)
    fuel_limit: int | None = None
    stack_size: int = 512
    stage: Literal["", "u64-sequence"] = ""
    static_mem_hex: str | None = None
    snapshot_static_mem: bool = False


class RunEbpfResponse(BaseModel):
    return_value: int
    instructions_executed: int
    expected_output: int
    matches_expected: bool
    static_mem_final_hex: str | None = None


class RunWasmRequest(BaseModel):
    wat: str | None = None
    wasm_b64: str | None = None
    entry: str
    args: list[int] = []
    stage: Literal["", "u64-sequence"] = ""
    static_mem_size: int = Field(default=0, ge=0)
    static_mem_hex: str | None = None

    @model_validator(mode="after")
    def _one_input(self):
        if (self.wat is None) == (self.wasm_b64 is None):
            raise ValueError("provide exactly one of wat or wasm_b64")
        return self


class RunWasmResponse(BaseModel):
    return_value: int
    engine: str = "wasm-v8"


class RunNativeRequest(BaseModel):
    library_path: str
    entry: str
    args: list[int] = Field(default=[0, 0], min_length=2, max_length=2)
    stage: Literal["", "u64-sequence"] = ""
    static_mem_size: int = Field(default=0, ge=0)
    static_mem_hex: str | None = None


class RunNativeResponse(BaseModel):
    return_value: int
    startup_ms: float
    exec_ms: float


class BenchRequest(BaseModel):
    engines: list[str] = list(ENGINES)
    programs: list[str] = []
    iterations: int = Field(default=10, ge=1)
    fuel_limit: int | None = Field(default=None, ge=1)
    corpus_dir: str | None = None
    fixtures: dict[str, dict[str, str]] = {}


class ReportRowModel(BaseModel):
    program: str
    engine: str
    status: Literal["ok", "na"]
    n: int = 0
    note: str = ""
    absolute: dict[str, float] = {}
    relative: dict[str, float] = {}


class ReportModel(BaseModel):
    iterations: int
    metrics: list[str]
    rows: list[ReportRowModel]

    @classmethod
    def from_report(cls, report: MetricReport) -> "ReportModel":
        return cls.model_validate(json.loads(emit_report(report, "json")))

    def to_report(self) -> MetricReport:
        rows = tuple(
            ReportRow(program=r.program, engine=r.engine, status=r.status,
                      n=r.n, note=r.note, absolute=dict(r.absolute),
                      relative=dict(r.relative))
            for r in self.rows)
        return MetricReport(iterations=self.iterations, rows=rows,
                            metrics=tuple(self.metrics))


class RenderReportRequest(BaseModel):
    report: ReportModel
    format: Literal["csv", "md", "markdown", "json"] = "csv"


class RenderReportResponse(BaseModel):
    text: str


class CorpusProgramModel(BaseModel):
    name: str
    oracle: str
    oracle_args: list[int]
    expected: int
    args: list[int]
    static_mem_size: int
    stage: str
    entry: str
    fixtures: dict[str, str]


def _staged_image(stage: str, size: int, explicit_hex: str | None) -> bytes:
    from .bench import staged_bytes
    if explicit_hex is not None:
        return _decode_hex(explicit_hex, "static_mem_hex")
    return staged_bytes(stage, size)


def create_app() -> FastAPI:
    app = FastAPI(title="offload service", version=__version__)

    @app.exception_handler(OffloadError)
    async def _domain_error(request: Request, exc: OffloadError):
        return JSONResponse(
            status_code=422,
            content={"error": type(exc).__name__, "detail": str(exc)})

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/v1/assemble", response_model=AssembleResponse)
    def assemble_source(req: AssembleRequest) -> AssembleResponse:
        result = assemble(req.source)
        if isinstance(result, AsmModule):
            obj = EbpfObject.from_asm_module(result)
            code = b"".join(
                encode_program(Program(f.instructions))
                for f in obj.functions)
            return AssembleResponse(
                kind="module", code_hex=code.hex(),
                slot_count=len(code) // 8,
                functions=[f.name for f in obj.functions],
                entry=obj.entry)
        code = encode_program(result)
        return AssembleResponse(kind="program", code_hex=code.hex(),
                                slot_count=len(code) // 8)

    @app.post("/v1/disassemble", response_model=DisassembleResponse)
    def disassemble_code(req: DisassembleRequest) -> DisassembleResponse:
        code = _decode_hex(req.code_hex, "code_hex")
        program = decode_program(code)
        return DisassembleResponse(source=disassemble(program),
                                   slot_count=len(code) // 8)

    @app.post("/v1/verify", response_model=VerifyResponse)
    def verify_program(req: VerifyRequest) -> VerifyResponse:
        if req.source is not None:
            result = assemble(req.source)
            if isinstance(result, AsmModule):
                result = inline_calls(EbpfObject.from_asm_module(result))
            program = result
        elif req.patched is not None:
            program = parse_patched(req.patched).body
        else:
            program = decode_program(_decode_hex(req.code_hex, "code_hex"))
        report = verify(program, req.policy.to_policy(),
                        helpers=req.helpers)
        return VerifyResponse(
            ok=report.ok,
            diagnostics=[DiagnosticModel(slot=d.slot, code=d.code,
                                         message=d.message,
                                         severity=d.severity)
                         for d in report.diagnostics])

    @app.post("/v1/patch", response_model=PatchResponse)
    def patch_object(req: PatchRequest) -> PatchResponse:
        if req.module_source is not None:
            result = assemble(req.module_source)
            if isinstance(result, AsmModule):
                obj = EbpfObject.from_asm_module(result)
                if req.entry:
                    obj = EbpfObject(obj.functions, req.entry)
                flat = inline_calls(obj)
                functions = [f.name for f in obj.functions]
            else:
                # a flat program has no local calls; patching it is just
                # attaching headers
                flat = result
                functions = []
        else:
            obj = load_object(_decode_b64(req.object_b64, "object_b64"),
                              entry=req.entry)
            flat = inline_calls(obj)
            functions = [f.name for f in obj.functions]
        patched = make_patched(flat, req.expected_output, req.static_mem_size)
        return PatchResponse(patched=serialize_patched(patched),
                             slot_count=sum(i.slots for i in flat.instructions),
                             functions=functions)

    @app.post("/v1/run/ebpf", response_model=RunEbpfResponse)
    def run_ebpf(req: RunEbpfRequest) -> RunEbpfResponse:
        patched = parse_patched(req.patched)
        args = tuple(req.args) + (0,) * (3 - len(req.args))
        config = VmConfig(stack_size=req.stack_size,
                          fuel_limit=req.fuel_limit,
                          snapshot_static_mem=req.snapshot_static_mem)
        instance = instantiate(patched, config, args)
        staged = _staged_image(req.stage, patched.static_mem_size,
                               req.static_mem_hex)
        if staged:
            write_static_mem(instance, 0, staged)
        outcome = execute(instance)
        return RunEbpfResponse(
            return_value=outcome.return_value,
            instructions_executed=outcome.instructions_executed,
            expected_output=patched.expected_output,
            matches_expected=outcome.return_value == patched.expected_output,
            static_mem_final_hex=(outcome.static_mem_final.hex()
                                  if outcome.static_mem_final is not None
                                  else None))

    @app.post("/v1/run/wasm", response_model=RunWasmResponse)
    def run_wasm(req: RunWasmRequest) -> RunWasmResponse:
        from .wasm import WasmBinary, invoke_entry, pass_buffer
        from .wasm_node import NodeAdapter
        if req.wat is not None:
            binary = WasmBinary.from_wat(req.wat)
        else:
            binary = WasmBinary(_decode_b64(req.wasm_b64, "wasm_b64"))
        staged = _staged_image(req.stage, req.static_mem_size,
                               req.static_mem_hex)
        with NodeAdapter() as adapter:
            instance = adapter.instantiate(binary)
            args = list(req.args)
            if staged:
                buffer = pass_buffer(instance, staged)
                args = [buffer.guest_ptr, buffer.length] + args
            value = invoke_entry(instance, req.entry, tuple(args))
        return RunWasmResponse(return_value=value)

    @app.post("/v1/run/native", response_model=RunNativeResponse)
    def run_native(req: RunNativeRequest) -> RunNativeResponse:
        staged = _staged_image(req.stage, req.static_mem_size,
                               req.static_mem_hex)
        value, exec_ms, startup_ms = native_engine_run(
            req.library_path, req.entry, static_mem=staged,
            args=(req.args[0], req.args[1]))
        return RunNativeResponse(return_value=value, startup_ms=startup_ms,
                                 exec_ms=exec_ms)

    @app.post("/v1/bench", response_model=ReportModel)
    def bench(req: BenchRequest) -> ReportModel:
        config = BenchConfig(
            engines=tuple(req.engines),
            programs=tuple(req.programs),
            iterations=req.iterations,
            fuel_limit=req.fuel_limit,
            fixture_overrides=req.fixtures)
        for engine in config.engines:
            if engine not in ENGINES:
                raise ServiceError(f"unknown engine {engine!r}")
        specs = load_program_specs(req.corpus_dir)
        specs = select_programs(specs, config.programs)
        report = run_bench(specs, config)
        return ReportModel.from_report(report)

    @app.post("/v1/report", response_model=RenderReportResponse)
    def render_report(req: RenderReportRequest) -> RenderReportResponse:
        return RenderReportResponse(
            text=emit_report(req.report.to_report(), req.format))

    @app.get("/v1/corpus", response_model=list[CorpusProgramModel])
    def corpus_listing() -> list[CorpusProgramModel]:
        return [
            CorpusProgramModel(
                name=spec.name, oracle=spec.oracle_id,
                oracle_args=list(spec.oracle_args), expected=spec.expected,
                args=list(spec.args), static_mem_size=spec.static_mem_size,
                stage=spec.stage, entry=spec.entry,
                fixtures=dict(spec.fixtures))
            for spec in load_program_specs()
        ]

    return app


app = create_app()
