"""Reference oracles and the checked-in program corpus.

Five programs exercise the offload path from different angles: dummy
(pure startup cost), fib (branchy arithmetic), sum over a staged array
(reads through the shared-memory window), prime counting by sieve
(write-heavy memory traffic), and multi-factorial (tight multiply
loop).  A sixth fixture, summing_loop, is the compute-heavy summing
variant that iterates instead of reading staged input.

Each fixture directory holds the program in patched-eBPF text form, in
WebAssembly text form with a pre-converted binary, and a manifest tying
them to the oracle.  The oracles are pure Python and serve as the
ground truth everywhere: fixture headers are derived from them and
tests recompute the values.
"""

from __future__ import annotations

from pathlib import Path

from . import OffloadError
from .bench import ProgramSpec

__all__ = [
    "CorpusError", "OverflowDomain", "DomainTooLarge", "Overflow", "ZeroStep",
    "U64_MAX", "ORACLES", "DEFAULT_SIEVE_BYTES",
    "oracle_dummy", "oracle_fib", "oracle_sum", "oracle_prime_count",
    "oracle_multifact", "evaluate_oracle",
    "default_corpus_dir", "program_names", "load_program_spec",
    "load_program_specs", "select_programs",
]

U64_MAX = (1 << 64) - 1

# Largest n with F(n) representable in 64 bits: F(93) = 12200160415121876738.
_FIB_MAX_N = 93

# Sieve capacity used when no fixture bounds the domain; matches the
# packaged prime fixture's static memory (one byte per candidate <= N).
DEFAULT_SIEVE_BYTES = 100_001


class CorpusError(OffloadError):
    pass


class OverflowDomain(CorpusError):
    """The requested parameter leaves the 64-bit-representable domain."""


class DomainTooLarge(CorpusError):
    """The sieve for the requested bound does not fit the fixture memory."""


class Overflow(CorpusError):
    """The running product left the 64-bit range."""


class ZeroStep(CorpusError):
    """A multi-factorial step of zero never terminates."""


def oracle_dummy() -> int:
    return 1


def oracle_fib(n: int) -> int:
    """F(n) with F(0)=0, F(1)=1, iteratively; n capped at 93 by u64 range."""
    if n > _FIB_MAX_N:
        raise OverflowDomain(f"fib({n}) exceeds 64 bits; the largest valid n is 93")
    a, b = 0, 1
    for _ in range(n):
        a, b = b, a + b
    return a


def oracle_sum(n: int) -> int:
    total = n * (n + 1) // 2
    if total > U64_MAX:
        raise OverflowDomain(f"sum(1..{n}) exceeds 64 bits")
    return total


def oracle_prime_count(n: int, memory_limit: int = DEFAULT_SIEVE_BYTES) -> int:
    """pi(n) by sieve; the sieve needs n+1 bytes of working memory."""
    if n + 1 > memory_limit:
        raise DomainTooLarge(
            f"sieve for {n} needs {n + 1} bytes; only {memory_limit} available")
    if n < 2:
        return 0
    composite = bytearray(n + 1)
    count = 0
    for i in range(2, n + 1):
        if composite[i]:
            continue
        count += 1
        for j in range(i * i, n + 1, i):
            composite[j] = 1
    return count


def oracle_multifact(n: int, k: int) -> int:
    """n (n-k) (n-2k) ... down to the smallest positive term."""
    if k == 0:
        raise ZeroStep("multi-factorial step must be nonzero")
    product = 1
    i = n
    while i > 0:
        product *= i
        if product > U64_MAX:
            raise Overflow(f"multifact({n}, {k}) exceeds 64 bits")
        i -= k
    return product


ORACLES = {
    "dummy": oracle_dummy,
    "fib": oracle_fib,
    "sum": oracle_sum,
    "prime_count": oracle_prime_count,
    "multifact": oracle_multifact,
}


def evaluate_oracle(oracle_id: str, args: tuple[int, ...]) -> int:
    if oracle_id not in ORACLES:
        raise CorpusError(f"unknown oracle {oracle_id!r}")
    return ORACLES[oracle_id](*args)


def default_corpus_dir() -> Path:
    return Path(__file__).parent / "corpus_fixtures"


def program_names(corpus_dir: str | Path | None = None) -> list[str]:
    root = Path(corpus_dir) if corpus_dir else default_corpus_dir()
    if not root.is_dir():
        raise CorpusError(f"{root} is not a corpus directory")
    return sorted(p.name for p in root.iterdir()
                  if p.is_dir() and (p / "manifest.toml").is_file())


def _load_toml(path: Path) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as e:
        raise CorpusError(f"cannot read {path}: {e}") from None
    except tomllib.TOMLDecodeError as e:
        raise CorpusError(f"{path}: {e}") from None


def load_program_spec(name: str,
                      corpus_dir: str | Path | None = None) -> ProgramSpec:
    """Read one fixture manifest, checking it against its oracle."""
    root = Path(corpus_dir) if corpus_dir else default_corpus_dir()
    directory = root / name
    manifest_path = directory / "manifest.toml"
    if not manifest_path.is_file():
        raise CorpusError(f"no fixture named {name!r} under {root}")
    raw = _load_toml(manifest_path)

    known = {"name", "oracle", "oracle_args", "expected", "args",
             "static_mem_size", "stage", "entry", "fixtures"}
    unknown = set(raw) - known
    if unknown:
        raise CorpusError(
            f"{manifest_path}: unknown keys: {', '.join(sorted(unknown))}")
    if raw.get("name") != name:
        raise CorpusError(
            f"{manifest_path}: manifest name {raw.get('name')!r} does not "
            f"match directory {name!r}")

    oracle_id = raw.get("oracle", "")
    oracle_args = tuple(int(v) for v in raw.get("oracle_args", ()))
    expected = int(raw["expected"])
    recomputed = evaluate_oracle(oracle_id, oracle_args)
    if recomputed != expected:
        raise CorpusError(
            f"{manifest_path}: expected {expected} disagrees with "
            f"{oracle_id}{oracle_args} = {recomputed}")

    args_raw = tuple(int(v) for v in raw.get("args", (0, 0)))
    if len(args_raw) != 2:
        raise CorpusError(f"{manifest_path}: args must be two scalars")

    fixtures: dict[str, str] = {}
    for key, rel in raw.get("fixtures", {}).items():
        if key not in ("ebpf", "wasm", "wat", "native"):
            raise CorpusError(f"{manifest_path}: unknown fixture key {key!r}")
        path = (directory / str(rel)).resolve()
        if not path.is_file():
            raise CorpusError(f"{manifest_path}: missing fixture file {path}")
        fixtures[key] = str(path)

    return ProgramSpec(
        name=name,
        oracle_id=oracle_id,
        oracle_args=oracle_args,
        expected=expected,
        args=args_raw,
        static_mem_size=int(raw.get("static_mem_size", 0)),
        stage=str(raw.get("stage", "")),
        entry=str(raw.get("entry", "")),
        fixtures=fixtures,
    )


def load_program_specs(corpus_dir: str | Path | None = None) -> list[ProgramSpec]:
    return [load_program_spec(name, corpus_dir)
            for name in program_names(corpus_dir)]


def select_programs(specs: list[ProgramSpec],
                    names: tuple[str, ...]) -> list[ProgramSpec]:
    """Filter specs down to the named programs, keeping the given order."""
    if not names:
        return list(specs)
    by_name = {spec.name: spec for spec in specs}
    missing = [n for n in names if n not in by_name]
    if missing:
        raise CorpusError(f"unknown programs: {', '.join(missing)}")
    return [by_name[n] for n in names]
