"""Benchmark harness: measured runs of corpus programs across engines.

Each measured run spawns a fresh runner subprocess (`csoffload.runner`)
so that startup cost and peak memory are attributable to one program on
one engine.  The runner reports its inner phase timings on stdout as

    METRIC startup_ms <float>
    METRIC exec_ms <float>
    METRIC return_value <int>

and the harness adds what only the parent can see: total process
lifetime and the peak resident set size from post-wait child accounting.
Cross-clock inequalities (total vs startup + exec) are deliberately not
asserted; the clocks have different scopes.

A sample whose return value disagrees with the program's expected value
is rejected before it reaches aggregation.  Engine/program combinations
that fail to produce a full series are reported as NA rows rather than
aborting the whole report.
"""

from __future__ import annotations

import io
import json
import os
import statistics
import struct
import subprocess
import sys
import threading
import time
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from . import OffloadError

__all__ = [
    "BenchError", "ConfigError", "SpawnFailure", "RunnerCrashed",
    "WrongResult", "ProtocolParseError", "ZeroNativeBaseline",
    "SeriesAborted", "InvalidIterationCount",
    "ENGINES", "METRIC_ORDER", "SAMPLE_METRICS",
    "ProgramSpec", "RunSample", "MeasuredProcess", "Stats",
    "ReportRow", "MetricReport", "BenchConfig",
    "staged_bytes", "measure_command", "parse_metrics",
    "run_once", "run_series", "aggregate", "relativize", "binary_size",
    "load_config", "run_bench", "emit_report",
]

ENGINES = ("native", "ebpf-vm", "wasm-v8")

# Maps an engine id to the manifest key naming its fixture.
FIXTURE_KEY = {"native": "native", "ebpf-vm": "ebpf", "wasm-v8": "wasm"}

# Per-sample metrics, in report column order: memory first, then the
# latency, execution, and lifetime columns.
SAMPLE_METRICS = ("max_rss_bytes", "startup_ms", "exec_ms", "total_ms")
METRIC_ORDER = SAMPLE_METRICS + ("binary_size",)

ENV_ITERATIONS = "OFFLOAD_ITERATIONS"
ENV_OUT_DIR = "OFFLOAD_OUT_DIR"


class BenchError(OffloadError):
    pass


class ConfigError(BenchError):
    pass


class SpawnFailure(BenchError):
    pass


class RunnerCrashed(BenchError):
    def __init__(self, exit_status: int, stderr: str):
        self.exit_status = exit_status
        self.stderr = stderr
        tail = stderr.strip().splitlines()[-1] if stderr.strip() else "(no stderr)"
        super().__init__(f"runner exited with status {exit_status}: {tail}")


class WrongResult(BenchError):
    def __init__(self, got: int, expected: int):
        self.got = got
        self.expected = expected
        super().__init__(f"runner returned {got}, expected {expected}")


class ProtocolParseError(BenchError):
    pass


class ZeroNativeBaseline(BenchError):
    pass


class InvalidIterationCount(BenchError):
    pass


class SeriesAborted(BenchError):
    """A series stopped early; the samples gathered so far are attached."""

    def __init__(self, engine: str, program: str, cause: BenchError,
                 samples: tuple["RunSample", ...]):
        self.engine = engine
        self.program = program
        self.cause = cause
        self.samples = samples
        super().__init__(
            f"{program} on {engine} aborted after {len(samples)} samples: {cause}")


@dataclass(frozen=True)
class ProgramSpec:
    """One corpus program: what to run, with what, and what it must return."""

    name: str
    oracle_id: str
    oracle_args: tuple[int, ...]
    expected: int
    args: tuple[int, int] = (0, 0)
    static_mem_size: int = 0
    stage: str = ""              # "" or "u64-sequence"
    entry: str = ""              # wasm export / native symbol; "" -> <name>_entry
    fixtures: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.stage not in ("", "u64-sequence"):
            raise ValueError(f"unknown staging mode {self.stage!r}")
        if not self.entry:
            object.__setattr__(self, "entry", f"{self.name}_entry")

    def fixture(self, key: str) -> str | None:
        return self.fixtures.get(key)


@dataclass(frozen=True)
class RunSample:
    """One measured runner execution that passed the correctness gate."""

    startup_ms: float
    exec_ms: float
    total_ms: float
    max_rss_bytes: int
    return_value: int
    spawned_at: float = 0.0      # monotonic, for the no-overlap invariant
    exited_at: float = 0.0

    def metric(self, name: str) -> float:
        return float(getattr(self, name))


@dataclass(frozen=True)
class MeasuredProcess:
    """Raw observation of one child process, before protocol parsing."""

    argv: tuple[str, ...]
    exit_status: int
    stdout: str
    stderr: str
    total_ms: float
    max_rss_bytes: int
    spawned_at: float
    exited_at: float


@dataclass(frozen=True)
class Stats:
    mean: float
    minimum: float
    maximum: float
    n: int


@dataclass(frozen=True)
class ReportRow:
    program: str
    engine: str
    status: str                      # "ok" | "na"
    n: int = 0
    note: str = ""
    absolute: Mapping[str, float] = field(default_factory=dict)
    relative: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class MetricReport:
    iterations: int
    rows: tuple[ReportRow, ...]
    metrics: tuple[str, ...] = METRIC_ORDER


@dataclass(frozen=True)
class BenchConfig:
    engines: tuple[str, ...] = ENGINES
    programs: tuple[str, ...] = ()   # empty selects the whole corpus
    iterations: int = 10
    fuel_limit: int | None = None
    out_dir: Path = Path("bench-out")
    corpus_dir: Path | None = None
    fixture_overrides: Mapping[str, Mapping[str, str]] = field(default_factory=dict)
    runner_python: str = sys.executable


def staged_bytes(stage: str, size: int) -> bytes:
    """Initial static memory image: zeros, or the u64 sequence 1..size/8."""
    if size < 0:
        raise ValueError("size must be non-negative")
    if stage == "":
        return bytes(size)
    if stage == "u64-sequence":
        count = size // 8
        packed = struct.pack(f"<{count}Q", *range(1, count + 1))
        return packed + bytes(size - len(packed))
    raise ValueError(f"unknown staging mode {stage!r}")


def _drain(stream: io.TextIOBase, sink: list[str]) -> None:
    sink.append(stream.read())
    stream.close()


def measure_command(argv: Sequence[str],
                    timeout_s: float | None = None) -> MeasuredProcess:
    """Run argv to completion, capturing output and child rusage.

    The child is reaped with wait4 so its peak resident set comes from
    the kernel's per-process accounting rather than sampling.
    """
    spawned_at = time.perf_counter()
    try:
        proc = subprocess.Popen(
            list(argv), stdout=subprocess.PIPE, stderr=subprocess.PIPE,
            text=True, encoding="utf-8", errors="replace")
    except OSError as e:
        raise SpawnFailure(f"{argv[0]}: {e}") from None

    out_sink: list[str] = []
    err_sink: list[str] = []
    readers = [threading.Thread(target=_drain, args=(proc.stdout, out_sink)),
               threading.Thread(target=_drain, args=(proc.stderr, err_sink))]
    for t in readers:
        t.start()
    timer = None
    if timeout_s is not None:
        timer = threading.Timer(timeout_s, proc.kill)
        timer.start()
    try:
        _, status, usage = os.wait4(proc.pid, 0)
    finally:
        if timer is not None:
            timer.cancel()
    exited_at = time.perf_counter()
    for t in readers:
        t.join()
    exit_status = os.waitstatus_to_exitcode(status)
    proc.returncode = exit_status  # already reaped; stop Popen from waiting again
    return MeasuredProcess(
        argv=tuple(argv),
        exit_status=exit_status,
        stdout=out_sink[0],
        stderr=err_sink[0],
        total_ms=(exited_at - spawned_at) * 1000.0,
        max_rss_bytes=usage.ru_maxrss * 1024,  # ru_maxrss is KiB on Linux
        spawned_at=spawned_at,
        exited_at=exited_at,
    )


def parse_metrics(stdout: str) -> dict[str, str]:
    """Extract METRIC lines; non-protocol lines are ignored."""
    values: dict[str, str] = {}
    for line in stdout.splitlines():
        if not line.startswith("METRIC"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ProtocolParseError(f"malformed metric line: {line!r}")
        values[parts[1]] = parts[2]
    return values


def _required_metric(values: Mapping[str, str], name: str, convert):
    if name not in values:
        raise ProtocolParseError(f"runner reported no {name}")
    try:
        value = convert(values[name])
    except ValueError:
        raise ProtocolParseError(
            f"metric {name} is not numeric: {values[name]!r}") from None
    if value < 0:
        raise ProtocolParseError(f"metric {name} is negative: {value}")
    return value


def _runner_argv(engine: str, spec: ProgramSpec, fixture: str,
                 config: BenchConfig) -> list[str]:
    argv = [config.runner_python, "-m", "csoffload.runner",
            "--engine", engine, "--fixture", fixture,
            "--args", str(spec.args[0]), str(spec.args[1])]
    if spec.static_mem_size:
        argv += ["--static-mem-size", str(spec.static_mem_size)]
    if spec.stage:
        argv += ["--stage", spec.stage]
    if engine != "ebpf-vm":
        argv += ["--entry", spec.entry]
    elif config.fuel_limit is not None:
        argv += ["--fuel", str(config.fuel_limit)]
    return argv


def _fixture_for(engine: str, spec: ProgramSpec, config: BenchConfig) -> str:
    key = FIXTURE_KEY[engine]
    override = config.fixture_overrides.get(spec.name, {}).get(key)
    path = override or spec.fixture(key)
    if path is None:
        raise SpawnFailure(f"{spec.name} has no {engine} fixture")
    return str(path)


def run_once(engine: str, spec: ProgramSpec,
             config: BenchConfig | None = None) -> RunSample:
    """One measured, correctness-gated sample of spec on engine."""
    if engine not in ENGINES:
        raise BenchError(f"unknown engine {engine!r}")
    config = config or BenchConfig()
    fixture = _fixture_for(engine, spec, config)
    measured = measure_command(_runner_argv(engine, spec, fixture, config))
    if measured.exit_status != 0:
        raise RunnerCrashed(measured.exit_status, measured.stderr)
    values = parse_metrics(measured.stdout)
    startup_ms = _required_metric(values, "startup_ms", float)
    exec_ms = _required_metric(values, "exec_ms", float)
    return_value = _required_metric(values, "return_value", int)
    if return_value != spec.expected:
        raise WrongResult(return_value, spec.expected)
    return RunSample(
        startup_ms=startup_ms,
        exec_ms=exec_ms,
        total_ms=measured.total_ms,
        max_rss_bytes=measured.max_rss_bytes,
        return_value=return_value,
        spawned_at=measured.spawned_at,
        exited_at=measured.exited_at,
    )


def run_series(engine: str, spec: ProgramSpec, n: int = 10,
               config: BenchConfig | None = None) -> tuple[RunSample, ...]:
    """n sequential samples; aborts on the first structural failure."""
    if n < 1:
        raise InvalidIterationCount(f"series length must be >= 1, got {n}")
    samples: list[RunSample] = []
    for _ in range(n):
        try:
            samples.append(run_once(engine, spec, config))
        except BenchError as e:
            raise SeriesAborted(engine, spec.name, e, tuple(samples)) from e
    return tuple(samples)


def aggregate(samples: Sequence[RunSample]) -> dict[str, Stats]:
    """Per-metric arithmetic mean plus min/max over a completed series."""
    if not samples:
        raise BenchError("cannot aggregate zero samples")
    stats: dict[str, Stats] = {}
    for name in SAMPLE_METRICS:
        values = [s.metric(name) for s in samples]
        stats[name] = Stats(mean=statistics.fmean(values),
                            minimum=min(values), maximum=max(values),
                            n=len(values))
    return stats


def relativize(engine_avg: Mapping[str, float],
               native_avg: Mapping[str, float]) -> dict[str, float]:
    """Elementwise engine/native ratios over the metrics both sides have."""
    ratios: dict[str, float] = {}
    for name, baseline in native_avg.items():
        if name not in engine_avg:
            continue
        if baseline <= 0:
            raise ZeroNativeBaseline(
                f"native average for {name} is {baseline}; cannot relativize")
        ratios[name] = engine_avg[name] / baseline
    return ratios


def binary_size(path: str | Path) -> int:
    path = Path(path)
    if path.is_dir():
        raise IsADirectoryError(f"{path} is a directory, not a fixture file")
    return path.stat().st_size


def load_config(path: str | Path | None = None,
                environ: Mapping[str, str] | None = None) -> BenchConfig:
    """Build a BenchConfig from an optional TOML file plus the environment.

    Environment overrides: OFFLOAD_ITERATIONS (iteration count) and
    OFFLOAD_OUT_DIR (report directory) take precedence over the file.
    """
    if environ is None:
        environ = os.environ
    raw: dict = {}
    if path is not None:
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}") from None

    known = {"engines", "programs", "iterations", "fuel_limit",
             "out_dir", "corpus_dir", "fixtures"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")

    engines = tuple(raw.get("engines", ENGINES))
    for engine in engines:
        if engine not in ENGINES:
            raise ConfigError(
                f"unknown engine {engine!r}; choose from {', '.join(ENGINES)}")
    programs = tuple(raw.get("programs", ()))

    iterations = raw.get("iterations", 10)
    if ENV_ITERATIONS in environ:
        try:
            iterations = int(environ[ENV_ITERATIONS])
        except ValueError:
            raise ConfigError(
                f"{ENV_ITERATIONS} must be an integer, got "
                f"{environ[ENV_ITERATIONS]!r}") from None
    if not isinstance(iterations, int) or iterations < 1:
        raise ConfigError(f"iterations must be a positive integer, got {iterations!r}")

    fuel_limit = raw.get("fuel_limit")
    if fuel_limit is not None and (not isinstance(fuel_limit, int) or fuel_limit < 1):
        raise ConfigError(f"fuel_limit must be a positive integer, got {fuel_limit!r}")

    out_dir = Path(environ.get(ENV_OUT_DIR, raw.get("out_dir", "bench-out")))
    corpus_dir = raw.get("corpus_dir")

    overrides: dict[str, dict[str, str]] = {}
    fixtures_raw = raw.get("fixtures", {})
    if not isinstance(fixtures_raw, dict):
        raise ConfigError("fixtures must be a table of per-program tables")
    for program, table in fixtures_raw.items():
        if not isinstance(table, dict):
            raise ConfigError(f"fixtures.{program} must be a table")
        bad = set(table) - set(FIXTURE_KEY.values())
        if bad:
            raise ConfigError(
                f"fixtures.{program}: unknown engine keys {', '.join(sorted(bad))}")
        overrides[program] = {k: str(v) for k, v in table.items()}

    return BenchConfig(
        engines=engines,
        programs=programs,
        iterations=iterations,
        fuel_limit=fuel_limit,
        out_dir=out_dir,
        corpus_dir=Path(corpus_dir) if corpus_dir else None,
        fixture_overrides=overrides,
    )


def _na_row(spec: ProgramSpec, engine: str, note: str, n: int = 0) -> ReportRow:
    return ReportRow(program=spec.name, engine=engine, status="na", n=n,
                     note=note)


def run_bench(specs: Sequence[ProgramSpec],
              config: BenchConfig | None = None) -> MetricReport:
    """Measure every configured program on every configured engine.

    Rows for combinations that fail keep their place as NA rows; the
    remaining rows carry absolute averages and ratios against the native
    engine's averages for the same program.
    """
    config = config or BenchConfig()
    if not specs:
        raise BenchError("no programs to bench")

    averages: dict[tuple[str, str], dict[str, float]] = {}
    counts: dict[tuple[str, str], int] = {}
    failures: dict[tuple[str, str], tuple[str, int]] = {}

    for spec in specs:
        for engine in config.engines:
            try:
                samples = run_series(engine, spec, config.iterations, config)
            except SeriesAborted as e:
                failures[(spec.name, engine)] = (
                    f"{type(e.cause).__name__}: {e.cause} "
                    f"(after {len(e.samples)} samples)", len(e.samples))
                continue
            stats = aggregate(samples)
            avg = {name: stat.mean for name, stat in stats.items()}
            try:
                avg["binary_size"] = float(
                    binary_size(_fixture_for(engine, spec, config)))
            except OSError as e:
                failures[(spec.name, engine)] = (f"binary size probe: {e}", 0)
                continue
            averages[(spec.name, engine)] = avg
            counts[(spec.name, engine)] = len(samples)

    rows: list[ReportRow] = []
    for spec in specs:
        native_avg = averages.get((spec.name, "native"))
        for engine in config.engines:
            key = (spec.name, engine)
            if key in failures:
                note, n = failures[key]
                rows.append(_na_row(spec, engine, note, n))
                continue
            avg = averages[key]
            if native_avg is None:
                relative: dict[str, float] = {}
                note = "no native baseline"
            else:
                relative = relativize(avg, native_avg)
                note = ""
            rows.append(ReportRow(
                program=spec.name, engine=engine, status="ok",
                n=counts[key], note=note, absolute=avg, relative=relative))
    return MetricReport(iterations=config.iterations, rows=tuple(rows))


def _fmt(value: float | None) -> str:
    if value is None:
        return "NA"
    if isinstance(value, float) and value.is_integer() and abs(value) < 2 ** 53:
        return str(int(value))
    return repr(value)


def _emit_csv(report: MetricReport) -> str:
    lines = ["program,engine,metric,absolute,relative"]
    for row in report.rows:
        for metric in report.metrics:
            absolute = row.absolute.get(metric) if row.status == "ok" else None
            relative = row.relative.get(metric) if row.status == "ok" else None
            lines.append(f"{row.program},{row.engine},{metric},"
                         f"{_fmt(absolute)},{_fmt(relative)}")
    return "\n".join(lines) + "\n"


def _emit_markdown(report: MetricReport) -> str:
    head = ["program", "engine", "n"]
    for metric in report.metrics:
        head += [metric, f"rel {metric}"]
    head.append("note")
    lines = ["| " + " | ".join(head) + " |",
             "|" + "|".join([" --- "] * len(head)) + "|"]
    for row in report.rows:
        cells = [row.program, row.engine, str(row.n)]
        for metric in report.metrics:
            if row.status == "ok":
                cells.append(_fmt(row.absolute.get(metric)))
                cells.append(_fmt(row.relative.get(metric)))
            else:
                cells += ["NA", "NA"]
        cells.append(row.note or ("" if row.status == "ok" else "failed"))
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def _emit_json(report: MetricReport) -> str:
    doc = {
        "iterations": report.iterations,
        "metrics": list(report.metrics),
        "rows": [
            {
                "program": row.program,
                "engine": row.engine,
                "status": row.status,
                "n": row.n,
                "note": row.note,
                "absolute": dict(row.absolute),
                "relative": dict(row.relative),
            }
            for row in report.rows
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def emit_report(report: MetricReport, format: str = "csv") -> str:
    """Render a report; column order is memory, latency, exec, total, size."""
    if format == "csv":
        return _emit_csv(report)
    if format in ("md", "markdown"):
        return _emit_markdown(report)
    if format == "json":
        return _emit_json(report)
    raise BenchError(f"unknown report format {format!r}")
