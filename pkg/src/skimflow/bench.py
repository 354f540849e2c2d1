"""Phase-separated benchmark harness.

Each benchmark cell fixes three axes — cached or cold input, deflated or
raw input, and the worker count — and times the full two-pass skim of one
dataset, attributing wall time to four non-overlapping phases:

    read     raw storage reads
    decode   CRC checks, decompression, deserialization to events
    compute  cut evaluation, projection, weight normalization
    write    ntuple serialization and output writes

`read_compute` (read + decode + compute) is also reported so runs can be
compared against harnesses that cannot separate decoding from reading.
Every cell runs one discarded warm-up repetition followed by the measured
repetitions (at least three) and reports per-repetition samples plus the
median per phase; medians resist interference from other load. Cached
cells persist the dataset once, warm the cache in the warm-up pass, and
then measure pure in-memory traversals, which must read zero storage
bytes. Timing never changes results: every cell of the same dataset and
analysis produces a byte-identical ntuple, and its hash is recorded.
"""

from __future__ import annotations

import hashlib
import statistics
import time
from dataclasses import dataclass, replace
from pathlib import Path

from . import canonical
from .analysis import AnalysisConfig, run_skim
from .engine import open_dataset
from .errors import IncomparableConfigs, UsageError
from .storage import convert_evt, scan_evt
from .timing import PhaseTimers

_PHASES = ("read", "decode", "compute", "write", "read_compute", "total")


@dataclass(frozen=True)
class BenchCell:
    cached: bool
    compressed: bool
    workers: int = 1

    @property
    def name(self) -> str:
        return (
            f"{'cached' if self.cached else 'uncached'}+"
            f"{'deflate' if self.compressed else 'raw'}+w{self.workers}"
        )


@dataclass(frozen=True)
class PhaseSample:
    read_s: float
    decode_s: float
    compute_s: float
    write_s: float
    total_s: float
    bytes_read: int
    bytes_decoded: int
    cache_hits: int
    rows_out: int

    @property
    def read_compute_s(self) -> float:
        return self.read_s + self.decode_s + self.compute_s

    def as_dict(self) -> dict:
        return {
            "read_s": self.read_s,
            "decode_s": self.decode_s,
            "compute_s": self.compute_s,
            "write_s": self.write_s,
            "read_compute_s": self.read_compute_s,
            "total_s": self.total_s,
            "bytes_read": self.bytes_read,
            "bytes_decoded": self.bytes_decoded,
            "cache_hits": self.cache_hits,
            "rows_out": self.rows_out,
        }


def _median_sample(samples: list[PhaseSample]) -> PhaseSample:
    med = lambda key: statistics.median(getattr(s, key) for s in samples)  # noqa: E731
    return PhaseSample(
        read_s=med("read_s"),
        decode_s=med("decode_s"),
        compute_s=med("compute_s"),
        write_s=med("write_s"),
        total_s=med("total_s"),
        bytes_read=int(med("bytes_read")),
        bytes_decoded=int(med("bytes_decoded")),
        cache_hits=int(med("cache_hits")),
        rows_out=int(med("rows_out")),
    )


@dataclass(frozen=True)
class TimingReport:
    dataset_label: str
    cell: BenchCell
    repetitions: int
    corpus_files: int
    corpus_events: int
    corpus_bytes: int
    warmup: PhaseSample
    reps: tuple[PhaseSample, ...]
    median: PhaseSample
    output_sha256: str

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset_label,
            "cell": {
                "cached": self.cell.cached,
                "compressed": self.cell.compressed,
                "workers": self.cell.workers,
            },
            "repetitions": self.repetitions,
            "corpus": {
                "files": self.corpus_files,
                "events": self.corpus_events,
                "storage_bytes": self.corpus_bytes,
            },
            "warmup": self.warmup.as_dict(),
            "reps": [s.as_dict() for s in self.reps],
            "median": self.median.as_dict(),
            "output_sha256": self.output_sha256,
        }


def prepare_input(descriptor, compressed: bool, workdir) -> str:
    """Return a glob for the dataset in the requested compression variant,
    converting files into the workdir only when the source flag differs.
    Existing converted copies are reused."""
    import glob as globmod

    paths = sorted(globmod.glob(descriptor.glob))
    variant_dir = Path(workdir) / f"{descriptor.label}-{'deflate' if compressed else 'raw'}"
    needs_convert = False
    for path in paths:
        if scan_evt(path).compressed != compressed:
            needs_convert = True
            break
    if not needs_convert:
        return descriptor.glob
    variant_dir.mkdir(parents=True, exist_ok=True)
    for path in paths:
        target = variant_dir / Path(path).name
        if not target.exists():
            convert_evt(path, target, compress=compressed)
    return str(variant_dir / "*.evt")


def _sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def run_benchmark(
    config: AnalysisConfig,
    cell: BenchCell,
    *,
    dataset_label: str | None = None,
    repetitions: int = 3,
    workdir,
) -> TimingReport:
    """Benchmark one cell: warm-up plus `repetitions` measured two-pass
    skims of a single dataset (the first configured one by default)."""
    if repetitions < 3:
        raise UsageError("benchmark repetitions must be >= 3")
    descriptor = (
        config.dataset(dataset_label) if dataset_label else config.datasets[0]
    )
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    variant_glob = prepare_input(descriptor, cell.compressed, workdir)
    descriptor = replace(descriptor, glob=variant_glob)
    out_path = workdir / f"{descriptor.label}-bench.ntu"

    shared_ds = None
    if cell.cached:
        shared_ds = open_dataset(descriptor, config.engine)
        shared_ds.persist()

    samples: list[PhaseSample] = []
    output_sha = None
    corpus = None
    for rep in range(repetitions + 1):  # rep 0 is the discarded warm-up
        if shared_ds is not None:
            ds = shared_ds
            timers = PhaseTimers()
            t0 = time.perf_counter()
        else:
            timers = PhaseTimers()
            t0 = time.perf_counter()
            ds = open_dataset(descriptor, config.engine, timers=timers)
        result = run_skim(
            config, ds, out_path, workers=cell.workers, timers=timers, persist=False
        )
        total = time.perf_counter() - t0
        if corpus is None:
            corpus = (len(ds.files), ds.n_events, ds.n_bytes)
        sample = PhaseSample(
            read_s=timers.read,
            decode_s=timers.decode,
            compute_s=timers.compute,
            write_s=timers.write,
            total_s=total,
            bytes_read=timers.bytes_read,
            bytes_decoded=timers.bytes_decoded,
            cache_hits=timers.cache_hits,
            rows_out=result.n_output,
        )
        sha = _sha256_file(out_path)
        if output_sha is None:
            output_sha = sha
        elif sha != output_sha:
            raise AssertionError("benchmark repetitions produced different outputs")
        samples.append(sample)

    return TimingReport(
        dataset_label=descriptor.label,
        cell=cell,
        repetitions=repetitions,
        corpus_files=corpus[0],
        corpus_events=corpus[1],
        corpus_bytes=corpus[2],
        warmup=samples[0],
        reps=tuple(samples[1:]),
        median=_median_sample(samples[1:]),
        output_sha256=output_sha,
    )


def benchmark_matrix(
    config: AnalysisConfig,
    cells,
    *,
    dataset_label: str | None = None,
    repetitions: int = 3,
    workdir,
) -> list[TimingReport]:
    return [
        run_benchmark(
            config, cell, dataset_label=dataset_label, repetitions=repetitions, workdir=workdir
        )
        for cell in cells
    ]


def compare_reports(a: TimingReport, b: TimingReport) -> dict:
    """Per-phase ratios a/b of the medians, plus the total-wall ratio.

    A ratio below 1 means `a` was faster. Phases where both medians are
    zero compare as 1.0; a zero denominator with a nonzero numerator gives
    None.
    """
    if (
        a.dataset_label != b.dataset_label
        or a.corpus_events != b.corpus_events
        or a.output_sha256 != b.output_sha256
    ):
        raise IncomparableConfigs(
            "reports describe different datasets or analyses and cannot be compared"
        )

    def ratio(x: float, y: float):
        if y == 0:
            return 1.0 if x == 0 else None
        return x / y

    out = {}
    for phase in _PHASES:
        key = f"{phase}_s"
        out[phase] = ratio(getattr(a.median, key), getattr(b.median, key))
    return {
        "a": a.cell.name,
        "b": b.cell.name,
        "ratios": out,
    }


def reports_to_json(reports: list[TimingReport]) -> str:
    return canonical.dumps([r.to_dict() for r in reports]) + "\n"


def reports_to_csv(reports: list[TimingReport]) -> str:
    """Flat CSV: one row per cell per phase (medians)."""
    lines = ["dataset,cached,compressed,workers,phase,seconds"]
    for r in reports:
        for phase in _PHASES:
            seconds = getattr(r.median, f"{phase}_s")
            lines.append(
                f"{r.dataset_label},{str(r.cell.cached).lower()},"
                f"{str(r.cell.compressed).lower()},{r.cell.workers},{phase},{seconds!r}"
            )
    return "\n".join(lines) + "\n"
