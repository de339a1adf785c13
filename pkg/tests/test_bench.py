"""Tests for the benchmark harness.

Protocol parsing and series mechanics are exercised with fake runner
executables that replay canned transcripts; a small number of tests
drive the real runner on real fixtures to keep the seams honest.
"""

import dataclasses
import json
import math
import shutil
import sys

import pytest

from csoffload.bench import (
    BenchConfig,
    BenchError,
    ConfigError,
    InvalidIterationCount,
    MetricReport,
    ProgramSpec,
    ProtocolParseError,
    ReportRow,
    RunSample,
    RunnerCrashed,
    SeriesAborted,
    SpawnFailure,
    Stats,
    WrongResult,
    ZeroNativeBaseline,
    aggregate,
    binary_size,
    emit_report,
    load_config,
    measure_command,
    parse_metrics,
    relativize,
    run_bench,
    run_once,
    run_series,
)
from csoffload.corpus import load_program_spec

from .native_fixtures import CC, build_native_fixture

requires_cc = pytest.mark.skipif(CC is None, reason="no C compiler on PATH")
requires_node = pytest.mark.skipif(shutil.which("node") is None,
                                   reason="no node binary on PATH")

GOOD_TRANSCRIPT = """\
#!/bin/sh
echo "METRIC startup_ms 1.5"
echo "METRIC exec_ms 2.25"
echo "METRIC return_value 1"
"""


def fake_runner(tmp_path, body: str, name: str = "fake-runner"):
    script = tmp_path / name
    script.write_text(body)
    script.chmod(0o755)
    return str(script)


@pytest.fixture(scope="module")
def dummy_spec():
    return load_program_spec("dummy")


class TestParseMetrics:
    def test_extracts_protocol_lines(self):
        out = "noise\nMETRIC startup_ms 1.5\nMETRIC return_value 7\nmore noise\n"
        assert parse_metrics(out) == {"startup_ms": "1.5", "return_value": "7"}

    def test_ignores_non_protocol_lines(self):
        assert parse_metrics("hello\nworld\n") == {}

    def test_malformed_line_rejected(self):
        with pytest.raises(ProtocolParseError, match="malformed"):
            parse_metrics("METRIC startup_ms\n")
        with pytest.raises(ProtocolParseError, match="malformed"):
            parse_metrics("METRIC a b c\n")

    def test_last_duplicate_wins(self):
        out = "METRIC exec_ms 1\nMETRIC exec_ms 2\n"
        assert parse_metrics(out)["exec_ms"] == "2"


class TestMeasureCommand:
    def test_captures_output_and_status(self):
        measured = measure_command(
            [sys.executable, "-c", "import sys; print('out'); "
             "print('err', file=sys.stderr)"])
        assert measured.exit_status == 0
        assert "out" in measured.stdout
        assert "err" in measured.stderr
        assert measured.total_ms > 0
        assert measured.exited_at > measured.spawned_at

    def test_nonzero_exit(self):
        measured = measure_command([sys.executable, "-c", "raise SystemExit(9)"])
        assert measured.exit_status == 9

    def test_missing_binary(self):
        with pytest.raises(SpawnFailure):
            measure_command(["/nonexistent/runner-binary"])

    def test_rss_accounting_floor(self):
        measured = measure_command([sys.executable, "-c", "print('hi')"])
        assert measured.max_rss_bytes > 1024 * 1024

    def test_rss_sees_a_64mib_allocation(self):
        code = ("d = bytearray(64 * 1024 * 1024)\n"
                "for i in range(0, len(d), 4096):\n"
                "    d[i] = 1\n"
                "print('METRIC return_value 1')\n")
        measured = measure_command([sys.executable, "-c", code])
        assert measured.exit_status == 0
        assert measured.max_rss_bytes >= 64 * 2 ** 20


class TestRunOnce:
    def test_ebpf_dummy_sample(self, dummy_spec):
        sample = run_once("ebpf-vm", dummy_spec)
        assert sample.return_value == 1
        assert sample.startup_ms >= 0
        assert sample.exec_ms >= 0
        assert sample.total_ms > 0
        assert sample.max_rss_bytes > 0

    @requires_node
    def test_wasm_dummy_sample(self, dummy_spec):
        sample = run_once("wasm-v8", dummy_spec)
        assert sample.return_value == 1

    def test_unknown_engine(self, dummy_spec):
        with pytest.raises(BenchError, match="unknown engine"):
            run_once("jit", dummy_spec)

    def test_missing_fixture(self, dummy_spec):
        with pytest.raises(SpawnFailure, match="no native fixture"):
            run_once("native", dummy_spec)

    def test_wrong_result(self, dummy_spec):
        lying = dataclasses.replace(dummy_spec, expected=2,
                                    oracle_id="dummy", oracle_args=())
        with pytest.raises(WrongResult) as info:
            run_once("ebpf-vm", lying)
        assert info.value.got == 1
        assert info.value.expected == 2

    def test_runner_crash_carries_stderr(self, dummy_spec, tmp_path):
        bad = tmp_path / "broken.pbpf"
        bad.write_text("not a header\n")
        crashing = dataclasses.replace(dummy_spec,
                                       fixtures={"ebpf": str(bad)})
        with pytest.raises(RunnerCrashed) as info:
            run_once("ebpf-vm", crashing)
        assert info.value.exit_status == 1
        assert info.value.stderr

    def test_spawn_failure(self, dummy_spec):
        config = BenchConfig(runner_python="/nonexistent/python")
        with pytest.raises(SpawnFailure):
            run_once("ebpf-vm", dummy_spec, config)

    def test_garbled_metric_value(self, dummy_spec, tmp_path):
        runner = fake_runner(tmp_path, """\
#!/bin/sh
echo "METRIC startup_ms abc"
echo "METRIC exec_ms 1.0"
echo "METRIC return_value 1"
""")
        config = BenchConfig(runner_python=runner)
        with pytest.raises(ProtocolParseError, match="not numeric"):
            run_once("ebpf-vm", dummy_spec, config)

    def test_missing_required_metric(self, dummy_spec, tmp_path):
        runner = fake_runner(tmp_path, """\
#!/bin/sh
echo "METRIC startup_ms 1.0"
echo "METRIC return_value 1"
""")
        config = BenchConfig(runner_python=runner)
        with pytest.raises(ProtocolParseError, match="no exec_ms"):
            run_once("ebpf-vm", dummy_spec, config)

    def test_canned_transcript_sample(self, dummy_spec, tmp_path):
        config = BenchConfig(runner_python=fake_runner(tmp_path, GOOD_TRANSCRIPT))
        sample = run_once("ebpf-vm", dummy_spec, config)
        assert sample.startup_ms == 1.5
        assert sample.exec_ms == 2.25
        assert sample.return_value == 1


class TestRunSeries:
    def test_rejects_zero_iterations(self, dummy_spec):
        with pytest.raises(InvalidIterationCount):
            run_series("ebpf-vm", dummy_spec, n=0)

    def test_sequential_isolation(self, dummy_spec, tmp_path):
        config = BenchConfig(runner_python=fake_runner(tmp_path, GOOD_TRANSCRIPT))
        samples = run_series("ebpf-vm", dummy_spec, n=4, config=config)
        assert len(samples) == 4
        for earlier, later in zip(samples, samples[1:]):
            assert later.spawned_at >= earlier.exited_at

    def test_abort_reports_partial_samples(self, dummy_spec, tmp_path):
        counter = tmp_path / "count"
        runner = fake_runner(tmp_path, f"""\
#!/bin/sh
N=$(cat "{counter}" 2>/dev/null || echo 0)
N=$((N+1))
echo "$N" > "{counter}"
if [ "$N" -ge 3 ]; then
  echo "third run breaks" >&2
  exit 7
fi
echo "METRIC startup_ms 1.0"
echo "METRIC exec_ms 1.0"
echo "METRIC return_value 1"
""")
        config = BenchConfig(runner_python=runner)
        with pytest.raises(SeriesAborted) as info:
            run_series("ebpf-vm", dummy_spec, n=10, config=config)
        aborted = info.value
        assert len(aborted.samples) == 2
        assert isinstance(aborted.cause, RunnerCrashed)
        assert aborted.cause.exit_status == 7
        assert "third run breaks" in aborted.cause.stderr
        assert aborted.engine == "ebpf-vm"
        assert aborted.program == "dummy"


def make_sample(startup=1.0, exec_ms=2.0, total=5.0, rss=1000,
                value=1) -> RunSample:
    return RunSample(startup_ms=startup, exec_ms=exec_ms, total_ms=total,
                     max_rss_bytes=rss, return_value=value)


class TestAggregate:
    def test_means_and_extremes(self):
        stats = aggregate([make_sample(startup=2.0, rss=100),
                           make_sample(startup=4.0, rss=300)])
        assert stats["startup_ms"] == Stats(mean=3.0, minimum=2.0,
                                            maximum=4.0, n=2)
        assert stats["max_rss_bytes"].mean == 200.0

    def test_single_sample_is_its_own_mean(self):
        stats = aggregate([make_sample()])
        for name, stat in stats.items():
            assert stat.mean == stat.minimum == stat.maximum

    def test_metrics_are_independent(self):
        stats = aggregate([make_sample(startup=1.0, exec_ms=100.0),
                           make_sample(startup=3.0, exec_ms=200.0)])
        assert stats["startup_ms"].mean == 2.0
        assert stats["exec_ms"].mean == 150.0

    def test_empty_rejected(self):
        with pytest.raises(BenchError, match="zero samples"):
            aggregate([])


class TestRelativize:
    def test_table_style_ratio(self):
        assert relativize({"max_rss_bytes": 38.5},
                          {"max_rss_bytes": 10.0}) == {"max_rss_bytes": 3.85}

    def test_native_against_itself_is_one(self):
        avg = {"startup_ms": 3.25, "exec_ms": 0.5, "max_rss_bytes": 4096.0}
        assert relativize(avg, avg) == {"startup_ms": 1.0, "exec_ms": 1.0,
                                        "max_rss_bytes": 1.0}

    def test_zero_baseline(self):
        with pytest.raises(ZeroNativeBaseline, match="exec_ms"):
            relativize({"exec_ms": 1.0}, {"exec_ms": 0.0})

    def test_metrics_missing_from_engine_are_skipped(self):
        assert relativize({"exec_ms": 2.0},
                          {"exec_ms": 1.0, "binary_size": 10.0}) == {"exec_ms": 2.0}

    def test_ratio_times_baseline_within_one_ulp(self):
        import random
        rng = random.Random(7)
        for _ in range(500):
            absolute = rng.uniform(1e-6, 1e9)
            baseline = rng.uniform(1e-6, 1e9)
            ratio = relativize({"m": absolute}, {"m": baseline})["m"]
            assert abs(ratio * baseline - absolute) <= math.ulp(absolute)


class TestBinarySize:
    def test_sizes(self, tmp_path):
        f = tmp_path / "fixture.bin"
        f.write_bytes(b"x" * 318)
        assert binary_size(f) == 318
        f.write_bytes(b"")
        assert binary_size(f) == 0

    def test_directory_rejected(self, tmp_path):
        with pytest.raises(IsADirectoryError):
            binary_size(tmp_path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            binary_size(tmp_path / "gone.bin")


class TestLoadConfig:
    def test_defaults(self):
        config = load_config(environ={})
        assert config.engines == ("native", "ebpf-vm", "wasm-v8")
        assert config.iterations == 10
        assert config.out_dir.name == "bench-out"
        assert config.fuel_limit is None

    def test_full_file(self, tmp_path):
        path = tmp_path / "bench.toml"
        path.write_text("""\
engines = ["native", "ebpf-vm"]
programs = ["dummy", "fib"]
iterations = 3
fuel_limit = 5000000
out_dir = "results"
[fixtures.dummy]
native = "dummy.so"
""")
        config = load_config(path, environ={})
        assert config.engines == ("native", "ebpf-vm")
        assert config.programs == ("dummy", "fib")
        assert config.iterations == 3
        assert config.fuel_limit == 5000000
        assert config.out_dir.name == "results"
        assert config.fixture_overrides == {"dummy": {"native": "dummy.so"}}

    def test_env_overrides_file(self, tmp_path):
        path = tmp_path / "bench.toml"
        path.write_text("iterations = 3\nout_dir = \"from-file\"\n")
        config = load_config(path, environ={"OFFLOAD_ITERATIONS": "7",
                                            "OFFLOAD_OUT_DIR": "from-env"})
        assert config.iterations == 7
        assert config.out_dir.name == "from-env"

    def test_bad_env_iterations(self):
        with pytest.raises(ConfigError, match="OFFLOAD_ITERATIONS"):
            load_config(environ={"OFFLOAD_ITERATIONS": "ten"})

    def test_unknown_keys(self, tmp_path):
        path = tmp_path / "bench.toml"
        path.write_text("speed = 11\n")
        with pytest.raises(ConfigError, match="unknown config keys: speed"):
            load_config(path, environ={})

    def test_unknown_engine(self, tmp_path):
        path = tmp_path / "bench.toml"
        path.write_text('engines = ["jit"]\n')
        with pytest.raises(ConfigError, match="unknown engine"):
            load_config(path, environ={})

    def test_bad_iterations(self, tmp_path):
        path = tmp_path / "bench.toml"
        path.write_text("iterations = 0\n")
        with pytest.raises(ConfigError, match="iterations"):
            load_config(path, environ={})

    def test_bad_fuel(self, tmp_path):
        path = tmp_path / "bench.toml"
        path.write_text("fuel_limit = -5\n")
        with pytest.raises(ConfigError, match="fuel_limit"):
            load_config(path, environ={})

    def test_bad_fixture_key(self, tmp_path):
        path = tmp_path / "bench.toml"
        path.write_text('[fixtures.dummy]\njvm = "dummy.jar"\n')
        with pytest.raises(ConfigError, match="unknown engine keys jvm"):
            load_config(path, environ={})

    def test_bad_toml(self, tmp_path):
        path = tmp_path / "bench.toml"
        path.write_text("engines = [unclosed\n")
        with pytest.raises(ConfigError):
            load_config(path, environ={})

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "void.toml", environ={})


@pytest.fixture(scope="module")
def native_so(tmp_path_factory):
    if CC is None:
        pytest.skip("no C compiler on PATH")
    root = tmp_path_factory.mktemp("bench-native")
    return {name: str(build_native_fixture(name, root))
            for name in ("dummy", "multifact")}


@requires_cc
class TestRunBench:
    def test_two_engine_report(self, native_so):
        specs = [load_program_spec("dummy"), load_program_spec("multifact")]
        config = BenchConfig(
            engines=("native", "ebpf-vm"),
            iterations=2,
            fixture_overrides={name: {"native": path}
                               for name, path in native_so.items()})
        report = run_bench(specs, config)
        assert len(report.rows) == 4
        assert all(row.status == "ok" for row in report.rows)
        for row in report.rows:
            assert row.n == 2
            assert set(row.absolute) == set(report.metrics)
            if row.engine == "native":
                assert all(v == 1.0 for v in row.relative.values()), row
            for metric, ratio in row.relative.items():
                native_row = next(r for r in report.rows
                                  if r.program == row.program
                                  and r.engine == "native")
                baseline = native_row.absolute[metric]
                absolute = row.absolute[metric]
                assert abs(ratio * baseline - absolute) <= math.ulp(absolute)

    def test_missing_native_yields_na_row(self):
        specs = [load_program_spec("dummy")]
        config = BenchConfig(engines=("native", "ebpf-vm"), iterations=1)
        report = run_bench(specs, config)
        by_engine = {row.engine: row for row in report.rows}
        assert by_engine["native"].status == "na"
        assert "SpawnFailure" in by_engine["native"].note
        assert by_engine["ebpf-vm"].status == "ok"
        assert by_engine["ebpf-vm"].relative == {}
        assert by_engine["ebpf-vm"].note == "no native baseline"

    def test_no_programs_rejected(self):
        with pytest.raises(BenchError, match="no programs"):
            run_bench([], BenchConfig())


def synthetic_report() -> MetricReport:
    metrics = {"max_rss_bytes": 100.0, "startup_ms": 2.0, "exec_ms": 4.0,
               "total_ms": 10.0, "binary_size": 23.0}
    ones = {name: 1.0 for name in metrics}
    doubled = {name: value * 2 for name, value in metrics.items()}
    ratios = {name: 2.0 for name in metrics}
    return MetricReport(iterations=2, rows=(
        ReportRow(program="dummy", engine="native", status="ok", n=2,
                  absolute=metrics, relative=ones),
        ReportRow(program="dummy", engine="ebpf-vm", status="ok", n=2,
                  absolute=doubled, relative=ratios),
        ReportRow(program="dummy", engine="wasm-v8", status="na", n=0,
                  note="SpawnFailure: no wasm fixture"),
    ))


class TestEmitReport:
    def test_csv_layout(self):
        text = emit_report(synthetic_report(), "csv")
        lines = text.strip().splitlines()
        assert lines[0] == "program,engine,metric,absolute,relative"
        assert len(lines) == 1 + 3 * 5
        assert "dummy,native,max_rss_bytes,100,1" in lines
        assert "dummy,ebpf-vm,exec_ms,8,2" in lines

    def test_csv_metric_order(self):
        lines = emit_report(synthetic_report(), "csv").strip().splitlines()
        native_metrics = [line.split(",")[2] for line in lines[1:6]]
        assert native_metrics == ["max_rss_bytes", "startup_ms", "exec_ms",
                                  "total_ms", "binary_size"]

    def test_csv_na_rows(self):
        lines = emit_report(synthetic_report(), "csv").strip().splitlines()
        wasm_lines = [line for line in lines if ",wasm-v8," in line]
        assert len(wasm_lines) == 5
        for line in wasm_lines:
            assert line.endswith(",NA,NA")

    def test_markdown_table(self):
        text = emit_report(synthetic_report(), "md")
        assert text.startswith("| program | engine | n |")
        assert "rel max_rss_bytes" in text
        assert "| dummy | native | 2 |" in text
        assert "SpawnFailure: no wasm fixture" in text
        assert emit_report(synthetic_report(), "markdown") == text

    def test_json_round_trip(self):
        doc = json.loads(emit_report(synthetic_report(), "json"))
        assert doc["iterations"] == 2
        assert doc["metrics"][0] == "max_rss_bytes"
        rows = {(r["program"], r["engine"]): r for r in doc["rows"]}
        assert rows[("dummy", "native")]["relative"]["exec_ms"] == 1.0
        assert rows[("dummy", "ebpf-vm")]["absolute"]["exec_ms"] == 8.0
        assert rows[("dummy", "wasm-v8")]["status"] == "na"

    def test_float_precision_survives_csv(self):
        value = 1.0000000000000002
        report = MetricReport(iterations=1, rows=(
            ReportRow(program="p", engine="native", status="ok", n=1,
                      absolute={"exec_ms": value}, relative={"exec_ms": 1.0}),))
        line = [l for l in emit_report(report, "csv").splitlines()
                if l.startswith("p,native,exec_ms")][0]
        assert float(line.split(",")[3]) == value

    def test_unknown_format(self):
        with pytest.raises(BenchError, match="unknown report format"):
            emit_report(synthetic_report(), "xml")
