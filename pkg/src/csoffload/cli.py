"""Command-line client for the offload toolchain.

Every verb is a thin wrapper over the HTTP service: by default the
requests run against an in-process application instance, so no daemon
is needed; pass --server (or set OFFLOAD_SERVER) to target a running
one instead.  Exit status is 0 only when the command's correctness
gate passed: verification clean, patched output matching its embedded
expected value, benchmark series complete.
"""

from __future__ import annotations

import asyncio
import json
import os
import sys
from pathlib import Path

import click
import httpx

WASM_MAGIC = b"\x00asm"
ELF_MAGIC = b"\x7fELF"

_FORMAT_EXT = {"csv": "csv", "md": "md", "markdown": "md", "json": "json"}


def _call(server: str | None, method: str, path: str,
          payload: dict | None = None) -> httpx.Response:
    if server:
        with httpx.Client(base_url=server, timeout=600.0) as client:
            return client.request(method, path, json=payload)

    from .service import app

    async def go() -> httpx.Response:
        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(transport=transport,
                                     base_url="http://offload.local",
                                     timeout=600.0) as client:
            return await client.request(method, path, json=payload)

    return asyncio.run(go())


def _fail(response: httpx.Response) -> None:
    try:
        body = response.json()
    except ValueError:
        body = {"error": f"HTTP {response.status_code}", "detail": response.text}
    if "error" in body:
        click.echo(f"{body['error']}: {body.get('detail', '')}", err=True)
    else:
        click.echo(f"HTTP {response.status_code}: {body.get('detail', body)}",
                   err=True)
    sys.exit(1)


def _post(server: str | None, path: str, payload: dict) -> dict:
    try:
        response = _call(server, "POST", path, payload)
    except httpx.HTTPError as e:
        click.echo(f"cannot reach offload service: {e}", err=True)
        sys.exit(1)
    if response.status_code != 200:
        _fail(response)
    return response.json()


def _write_or_echo(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
        click.echo(f"wrote {out}", err=True)
    else:
        click.echo(text, nl=not text.endswith("\n"))


def _looks_like_hex(data: bytes) -> bool:
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError:
        return False
    stripped = "".join(text.split())
    return bool(stripped) and all(c in "0123456789abcdefABCDEF" for c in stripped)


@click.group()
@click.option("--server", envvar="OFFLOAD_SERVER", default=None,
              help="Base URL of a running offload service; default runs "
                   "the service in-process.")
@click.pass_context
def main(ctx: click.Context, server: str | None) -> None:
    """Offload toolchain: assemble, verify, patch, run, and benchmark."""
    ctx.obj = server


@main.command("asm")
@click.argument("source", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write bytecode here instead of stdout.")
@click.option("--binary", is_flag=True,
              help="Write raw bytes (requires --out).")
@click.pass_obj
def asm_cmd(server: str | None, source: str, out: str | None,
            binary: bool) -> None:
    """Assemble SOURCE to bytecode (hex on stdout)."""
    if binary and not out:
        raise click.UsageError("--binary requires --out")
    body = _post(server, "/v1/assemble",
                 {"source": Path(source).read_text(encoding="utf-8")})
    if binary:
        Path(out).write_bytes(bytes.fromhex(body["code_hex"]))
        click.echo(f"wrote {out} ({body['slot_count']} slots)", err=True)
        return
    if body["kind"] == "module":
        click.echo(f"# module, entry {body['entry']}: "
                   f"{', '.join(body['functions'])}", err=True)
    _write_or_echo(body["code_hex"] + "\n", out)


@main.command("disasm")
@click.argument("input", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_obj
def disasm_cmd(server: str | None, input: str, out: str | None) -> None:
    """Disassemble bytecode (raw or hex) back to source."""
    data = Path(input).read_bytes()
    code_hex = data.decode("ascii").strip() if _looks_like_hex(data) \
        else data.hex()
    body = _post(server, "/v1/disassemble", {"code_hex": code_hex})
    _write_or_echo(body["source"] + "\n", out)


@main.command("verify")
@click.argument("input", type=click.Path(exists=True, dir_okay=False))
@click.option("--allow-loops/--forbid-loops", default=True,
              help="Whether backward jumps are acceptable.")
@click.option("--lints-as-errors", is_flag=True)
@click.option("--helpers", default="",
              help="Comma-separated helper indices the runtime provides.")
@click.option("--json", "as_json", is_flag=True)
@click.pass_obj
def verify_cmd(server: str | None, input: str, allow_loops: bool,
               lints_as_errors: bool, helpers: str, as_json: bool) -> None:
    """Verify a program; exit 0 only if it passes."""
    data = Path(input).read_bytes()
    payload: dict = {
        "policy": {"allow_loops": allow_loops,
                   "lints_as_errors": lints_as_errors},
        "helpers": [int(h) for h in helpers.split(",") if h.strip()],
    }
    text = None
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        pass
    lines = [l.strip() for l in text.strip().splitlines()] if text else []
    is_patched = (len(lines) >= 3 and lines[0].isdigit() and lines[1].isdigit())
    if is_patched:
        payload["patched"] = text
    elif _looks_like_hex(data) and not data.lstrip().startswith(b"#"):
        payload["code_hex"] = data.decode("ascii").strip()
    else:
        payload["source"] = data.decode("utf-8") if text is None else text
    body = _post(server, "/v1/verify", payload)
    if as_json:
        click.echo(json.dumps(body, indent=2))
    else:
        for diag in body["diagnostics"]:
            click.echo(f"{diag['severity']}: slot {diag['slot']}: "
                       f"{diag['code']}: {diag['message']}")
        click.echo("ok" if body["ok"] else "rejected")
    if not body["ok"]:
        sys.exit(1)


@main.command("patch")
@click.argument("input", type=click.Path(exists=True, dir_okay=False))
@click.option("--entry", default=None, help="Entry function override.")
@click.option("--expected", type=int, default=0,
              help="Expected output header value.")
@click.option("--static-mem-size", type=int, default=0,
              help="Static memory header value.")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_obj
def patch_cmd(server: str | None, input: str, entry: str | None,
              expected: int, static_mem_size: int, out: str | None) -> None:
    """Inline an object's local calls into a patched program file."""
    import base64
    data = Path(input).read_bytes()
    payload: dict = {"expected_output": expected,
                     "static_mem_size": static_mem_size}
    if entry:
        payload["entry"] = entry
    if data.startswith(ELF_MAGIC):
        payload["object_b64"] = base64.b64encode(data).decode("ascii")
    else:
        payload["module_source"] = data.decode("utf-8")
    body = _post(server, "/v1/patch", payload)
    if body["functions"]:
        click.echo(f"# inlined {', '.join(body['functions'])} "
                   f"into {body['slot_count']} slots", err=True)
    _write_or_echo(body["patched"], out)


@main.command("run-ebpf")
@click.argument("patched", type=click.Path(exists=True, dir_okay=False))
@click.option("--args", nargs=2, type=int, default=(0, 0), metavar="A B")
@click.option("--fuel", type=int, default=None)
@click.option("--stack", type=int, default=512)
@click.option("--stage", type=click.Choice(["u64-sequence"]), default=None)
@click.option("--json", "as_json", is_flag=True)
@click.pass_obj
def run_ebpf_cmd(server: str | None, patched: str, args: tuple[int, int],
                 fuel: int | None, stack: int, stage: str | None,
                 as_json: bool) -> None:
    """Run a patched program on the eBPF VM; exit 0 iff r0 matches."""
    body = _post(server, "/v1/run/ebpf", {
        "patched": Path(patched).read_text(encoding="utf-8"),
        "args": [args[0], args[1], 0],
        "fuel_limit": fuel,
        "stack_size": stack,
        "stage": stage or "",
    })
    if as_json:
        click.echo(json.dumps(body, indent=2))
    else:
        click.echo(f"return_value {body['return_value']}")
        click.echo(f"instructions {body['instructions_executed']}")
        click.echo(f"expected {body['expected_output']} "
                   f"({'match' if body['matches_expected'] else 'MISMATCH'})")
    if not body["matches_expected"]:
        sys.exit(1)


@main.command("run-wasm")
@click.argument("module", type=click.Path(exists=True, dir_okay=False))
@click.option("--entry", required=True)
@click.option("--args", "arg_values", multiple=True, type=int,
              help="Scalar arguments, repeatable.")
@click.option("--stage", type=click.Choice(["u64-sequence"]), default=None)
@click.option("--static-mem-size", type=int, default=0)
@click.option("--expected", type=int, default=None,
              help="Gate the exit status on this return value.")
@click.pass_obj
def run_wasm_cmd(server: str | None, module: str, entry: str,
                 arg_values: tuple[int, ...], stage: str | None,
                 static_mem_size: int, expected: int | None) -> None:
    """Run a WASM module export; staged memory is passed as (ptr, len)."""
    import base64
    data = Path(module).read_bytes()
    payload: dict = {"entry": entry, "args": list(arg_values),
                     "stage": stage or "",
                     "static_mem_size": static_mem_size}
    if data.startswith(WASM_MAGIC):
        payload["wasm_b64"] = base64.b64encode(data).decode("ascii")
    else:
        payload["wat"] = data.decode("utf-8")
    body = _post(server, "/v1/run/wasm", payload)
    click.echo(f"return_value {body['return_value']}")
    if expected is not None and body["return_value"] != expected:
        click.echo(f"expected {expected}: MISMATCH", err=True)
        sys.exit(1)


@main.command("run-native")
@click.argument("library", type=click.Path(exists=True, dir_okay=False))
@click.option("--entry", required=True)
@click.option("--args", nargs=2, type=int, default=(0, 0), metavar="A B")
@click.option("--stage", type=click.Choice(["u64-sequence"]), default=None)
@click.option("--static-mem-size", type=int, default=0)
@click.option("--expected", type=int, default=None)
@click.pass_obj
def run_native_cmd(server: str | None, library: str, entry: str,
                   args: tuple[int, int], stage: str | None,
                   static_mem_size: int, expected: int | None) -> None:
    """Run a native shared-library entry (library path is server-local)."""
    body = _post(server, "/v1/run/native", {
        "library_path": str(Path(library).resolve()),
        "entry": entry,
        "args": [args[0], args[1]],
        "stage": stage or "",
        "static_mem_size": static_mem_size,
    })
    click.echo(f"return_value {body['return_value']}")
    click.echo(f"startup_ms {body['startup_ms']:.3f}")
    click.echo(f"exec_ms {body['exec_ms']:.3f}")
    if expected is not None and body["return_value"] != expected:
        click.echo(f"expected {expected}: MISMATCH", err=True)
        sys.exit(1)


@main.command("bench")
@click.option("--config", "config_path",
              type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--iterations", type=int, default=None,
              help="Override the series length.")
@click.option("--format", "format_", default="csv",
              type=click.Choice(["csv", "md", "markdown", "json"]))
@click.option("--out", type=click.Path(file_okay=False), default=None,
              help="Report directory (default from config).")
@click.option("--engines", default=None,
              help="Comma-separated engine subset.")
@click.option("--programs", default=None,
              help="Comma-separated program subset.")
@click.pass_obj
def bench_cmd(server: str | None, config_path: str | None,
              iterations: int | None, format_: str, out: str | None,
              engines: str | None, programs: str | None) -> None:
    """Benchmark corpus programs across engines; exit 0 iff no NA rows."""
    from .bench import load_config

    config = load_config(config_path, os.environ)
    payload = {
        "engines": list(config.engines),
        "programs": list(config.programs),
        "iterations": config.iterations,
        "fuel_limit": config.fuel_limit,
        "fixtures": {name: dict(table)
                     for name, table in config.fixture_overrides.items()},
    }
    if config.corpus_dir is not None:
        payload["corpus_dir"] = str(config.corpus_dir)
    if iterations is not None:
        payload["iterations"] = iterations
    if engines is not None:
        payload["engines"] = [e.strip() for e in engines.split(",") if e.strip()]
    if programs is not None:
        payload["programs"] = [p.strip() for p in programs.split(",")
                               if p.strip()]

    report = _post(server, "/v1/bench", payload)
    rendered = _post(server, "/v1/report",
                     {"report": report, "format": format_})["text"]

    out_dir = Path(out) if out else config.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(json.dumps(report, indent=2) + "\n",
                                         encoding="utf-8")
    ext = _FORMAT_EXT[format_]
    if ext != "json":
        (out_dir / f"report.{ext}").write_text(rendered, encoding="utf-8")
    click.echo(rendered, nl=not rendered.endswith("\n"))
    click.echo(f"reports written to {out_dir}", err=True)

    na_rows = [row for row in report["rows"] if row["status"] != "ok"]
    for row in na_rows:
        click.echo(f"NA: {row['program']} on {row['engine']}: {row['note']}",
                   err=True)
    if na_rows:
        sys.exit(1)


@main.command("report")
@click.argument("report_json", type=click.Path(exists=True, dir_okay=False))
@click.option("--format", "format_", default="csv",
              type=click.Choice(["csv", "md", "markdown", "json"]))
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_obj
def report_cmd(server: str | None, report_json: str, format_: str,
               out: str | None) -> None:
    """Re-render a saved benchmark report."""
    doc = json.loads(Path(report_json).read_text(encoding="utf-8"))
    body = _post(server, "/v1/report", {"report": doc, "format": format_})
    _write_or_echo(body["text"], out)


@main.command("serve")
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8037)
def serve_cmd(host: str, port: int) -> None:
    """Run the offload service as a daemon."""
    import uvicorn

    from .service import app
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
