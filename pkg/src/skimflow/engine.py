"""Partitioned datasets and deterministic parallel traversal.

A dataset is a sorted glob of EVT files sliced into partitions, each a
contiguous block range of one file. Partitions are the unit of parallelism:
a thread pool processes them independently and the coordinator combines the
per-partition results in ascending partition order, so every result is a
pure function of the partition plan, whatever the worker count or
scheduling order.

An explicit in-memory cache ("persist") retains each partition's decoded
events after the first full traversal; later traversals then read zero
storage bytes. The cache map is populated once per partition and read-only
afterwards, which is the only state workers share. When the decoded size
estimate exceeds the configured budget the cache is dropped and the dataset
falls back to cold reads, recording a warning.
"""

from __future__ import annotations

import glob as globmod
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .errors import (
    ConfigError,
    InvalidCustomPlan,
    NoFilesMatched,
    SchemaMismatch,
    SkimflowError,
    UnreadableFile,
)
from .schema import Schema
from .storage import EventCodec, EvtIndex, iter_block_range, scan_evt
from .storage.ntu import NtuWriter
from .timing import PhaseTimers

DEFAULT_PARTITION_TARGET_BYTES = 4 * 1024 * 1024


@dataclass(frozen=True)
class DatasetDescriptor:
    """Identifies one dataset: a file glob, its kind, and for mc the
    production cross-section in picobarns."""

    glob: str
    kind: str  # "data" | "mc"
    label: str
    xsec_pb: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("data", "mc"):
            raise ConfigError(f"dataset {self.label!r}: kind must be 'data' or 'mc'")
        if self.kind == "mc":
            if self.xsec_pb is None or not self.xsec_pb > 0:
                raise ConfigError(f"dataset {self.label!r}: mc requires xsec_pb > 0")
        elif self.xsec_pb is not None:
            raise ConfigError(f"dataset {self.label!r}: data datasets carry no xsec_pb")


@dataclass(frozen=True)
class EngineConfig:
    workers: int | None = None  # None -> hardware parallelism
    cache_budget_bytes: int | None = None  # None -> unlimited
    partition_mode: str = "auto"
    partition_target_bytes: int = DEFAULT_PARTITION_TARGET_BYTES
    partition_custom: object = None  # {"per_file": N} or {path: [[lo, hi], ...]}

    def __post_init__(self) -> None:
        if self.workers is not None and self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.partition_mode not in ("auto", "custom"):
            raise ConfigError("partition.mode must be 'auto' or 'custom'")
        if self.partition_target_bytes < 1:
            raise ConfigError("partition.target_bytes must be >= 1")
        if self.cache_budget_bytes is not None and self.cache_budget_bytes < 0:
            raise ConfigError("cache_budget_bytes must be >= 0")


@dataclass(frozen=True)
class Partition:
    index: int
    path: str
    file_index: int
    block_lo: int
    block_hi: int
    n_events: int
    n_bytes: int


def plan_partitions(files: Sequence[EvtIndex], config: EngineConfig) -> list[Partition]:
    """Slice file block lists into partitions.

    auto mode accumulates whole blocks per file until the byte target is
    reached (a partition always takes at least one block and a block is
    never split). custom mode validates the supplied ranges for disjoint,
    gap-free coverage of every file.
    """
    if config.partition_mode == "auto":
        ranges = [_auto_ranges(f, config.partition_target_bytes) for f in files]
    else:
        ranges = _custom_ranges(files, config.partition_custom)
    partitions: list[Partition] = []
    for file_index, (evt_index, file_ranges) in enumerate(zip(files, ranges)):
        for lo, hi in file_ranges:
            blocks = evt_index.blocks[lo:hi]
            partitions.append(
                Partition(
                    index=len(partitions),
                    path=str(evt_index.path),
                    file_index=file_index,
                    block_lo=lo,
                    block_hi=hi,
                    n_events=sum(b.n_events for b in blocks),
                    n_bytes=sum(12 + b.payload_len for b in blocks),
                )
            )
    return partitions


def _auto_ranges(evt_index: EvtIndex, target_bytes: int) -> list[tuple[int, int]]:
    sizes = [12 + b.payload_len for b in evt_index.blocks]
    if not sizes:
        return []
    ranges = []
    lo = 0
    acc = 0
    for i, size in enumerate(sizes):
        if acc and acc + size > target_bytes:
            ranges.append((lo, i))
            lo = i
            acc = 0
        acc += size
    ranges.append((lo, len(sizes)))
    return ranges


def _custom_ranges(files: Sequence[EvtIndex], custom) -> list[list[tuple[int, int]]]:
    if isinstance(custom, dict) and set(custom) == {"per_file"}:
        per_file = custom["per_file"]
        if not isinstance(per_file, int) or per_file < 1:
            raise InvalidCustomPlan("per_file must be a positive integer")
        out = []
        for f in files:
            n = len(f.blocks)
            k = min(per_file, n) if n else 0
            ranges = []
            start = 0
            for i in range(k):
                count = n // k + (1 if i < n % k else 0)
                ranges.append((start, start + count))
                start += count
            out.append(ranges)
        return out
    if isinstance(custom, dict):
        out = []
        for f in files:
            key = str(f.path)
            if key not in custom:
                raise InvalidCustomPlan(f"custom plan is missing file {key!r}")
            ranges = [(int(lo), int(hi)) for lo, hi in custom[key]]
            _check_coverage(ranges, len(f.blocks), key)
            out.append(ranges)
        return out
    raise InvalidCustomPlan(
        "partition.custom must be {'per_file': N} or a mapping of file path to block ranges"
    )


def _check_coverage(ranges: list[tuple[int, int]], n_blocks: int, path: str) -> None:
    expect = 0
    for lo, hi in sorted(ranges):
        if lo != expect:
            kind = "overlaps" if lo < expect else "leaves a gap"
            raise InvalidCustomPlan(f"{path}: custom plan {kind} at block {min(lo, expect)}")
        if hi <= lo:
            raise InvalidCustomPlan(f"{path}: empty range [{lo}, {hi})")
        expect = hi
    if expect != n_blocks:
        raise InvalidCustomPlan(f"{path}: custom plan covers {expect} of {n_blocks} blocks")


class PartitionedDataset:
    """An opened dataset: file indexes, the partition plan, and cache state."""

    def __init__(self, descriptor: DatasetDescriptor, files: list[EvtIndex], config: EngineConfig):
        self.descriptor = descriptor
        self.files = files
        self.config = config
        self.schema: Schema = files[0].schema
        self.codec = EventCodec(self.schema)
        self.partitions = plan_partitions(files, config)
        self.warnings: list[str] = []
        self._want_cache = False
        self._cache: dict[int, list[dict]] = {}
        self._cache_bytes = 0
        self._overflowed = False
        self._lock = threading.Lock()

    # -- inventory ---------------------------------------------------------

    @property
    def n_events(self) -> int:
        return sum(f.n_events for f in self.files)

    @property
    def n_bytes(self) -> int:
        return sum(f.file_bytes for f in self.files)

    @property
    def cache_state(self) -> str:
        if len(self._cache) == len(self.partitions) and self.partitions and self._want_cache:
            return "cached"
        return "warming" if self._want_cache else "cold"

    def persist(self) -> "PartitionedDataset":
        """Retain decoded events in memory from the next full traversal on;
        no-op if already persisted."""
        self._want_cache = True
        return self

    def drop_cache(self) -> None:
        with self._lock:
            self._cache.clear()
            self._cache_bytes = 0
            self._want_cache = False
            self._overflowed = False

    # -- per-partition event access -----------------------------------------

    def _partition_events(self, part: Partition, timers: PhaseTimers) -> Iterable[dict]:
        cached = self._cache.get(part.index)
        if cached is not None:
            timers.cache_hits += 1
            return cached
        it = iter_block_range(
            self.files[part.file_index], part.block_lo, part.block_hi,
            timers=timers, codec=self.codec,
        )
        if not self._want_cache:
            return it
        before = timers.bytes_decoded
        events = list(it)
        decoded = timers.bytes_decoded - before
        budget = self.config.cache_budget_bytes
        with self._lock:
            self._cache[part.index] = events
            self._cache_bytes += decoded
            if budget is not None and self._cache_bytes > budget:
                self._overflowed = True
        return events

    def _settle_cache(self) -> None:
        if self._overflowed:
            total = self._cache_bytes
            budget = self.config.cache_budget_bytes
            self.drop_cache()
            self.warnings.append(
                f"cache budget exceeded ({total} > {budget} bytes); falling back to cold reads"
            )


def open_dataset(
    descriptor: DatasetDescriptor,
    config: EngineConfig | None = None,
    *,
    timers: PhaseTimers | None = None,
) -> PartitionedDataset:
    """Enumerate the glob's files (sorted), index their blocks, and build
    the partition plan."""
    config = config or EngineConfig()
    paths = sorted(globmod.glob(descriptor.glob))
    if not paths:
        raise NoFilesMatched(f"dataset {descriptor.label!r}: no files match {descriptor.glob!r}")
    files = []
    for path in paths:
        try:
            files.append(scan_evt(path, timers=timers))
        except OSError as exc:
            raise UnreadableFile(f"{path}: {exc}") from exc
    first = files[0].schema_json
    for f in files[1:]:
        if f.schema_json != first:
            raise SchemaMismatch(
                f"dataset {descriptor.label!r}: {f.path} carries a different schema "
                f"than {files[0].path}"
            )
    return PartitionedDataset(descriptor, files, config)


# -- deterministic traversal ------------------------------------------------------


def _resolve_workers(ds: PartitionedDataset, workers: int | None) -> int:
    if workers is None:
        workers = ds.config.workers
    if workers is None:
        workers = os.cpu_count() or 1
    return max(1, workers)


def _run_partitions(ds: PartitionedDataset, task: Callable, workers: int | None):
    """Run `task(partition)` across the pool, yielding results in ascending
    partition order regardless of completion order."""
    n = _resolve_workers(ds, workers)

    def wrapped(part: Partition):
        try:
            return task(part)
        except SkimflowError as exc:
            raise type(exc)(
                f"partition {part.index} ({part.path} blocks "
                f"[{part.block_lo},{part.block_hi})): {exc}"
            ) from exc

    with ThreadPoolExecutor(max_workers=n) as pool:
        yield from pool.map(wrapped, ds.partitions)


def _kahan_sum(values: Iterable[float]) -> float:
    total = 0.0
    comp = 0.0
    for v in values:
        y = v - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total


def _pairwise_combine(values: list, combine: Callable, empty):
    """Fixed pairwise tree over partials in ascending partition order; the
    combination order depends only on the partition count."""
    if not values:
        return empty
    while len(values) > 1:
        nxt = []
        for i in range(0, len(values) - 1, 2):
            nxt.append(combine(values[i], values[i + 1]))
        if len(values) % 2:
            nxt.append(values[-1])
        values = nxt
    return values[0]


def map_reduce(
    ds: PartitionedDataset,
    map_fn: Callable[[dict], float],
    *,
    combine: str | Callable = "sum",
    initial: float = 0.0,
    workers: int | None = None,
    timers: PhaseTimers | None = None,
) -> float:
    """Map every event to a float and combine.

    With combine="sum" each partition is accumulated with compensated
    (Kahan) summation; partials then merge pairwise in partition order, so
    the result is bit-identical for any worker count over a fixed partition
    plan.
    """
    is_sum = combine == "sum"

    def task(part: Partition):
        t = PhaseTimers()
        events = ds._partition_events(part, t)
        t0 = time.perf_counter()
        if is_sum:
            value = _kahan_sum(map(map_fn, events))
        else:
            value = initial
            first = True
            for ev in events:
                v = map_fn(ev)
                value = v if first else combine(value, v)
                first = False
            if first:
                value = None  # empty partition: no contribution
        wall = time.perf_counter() - t0
        t.compute += max(wall - t.read - t.decode, 0.0)
        return value, t

    partials = []
    for value, t in _run_partitions(ds, task, workers):
        if timers is not None:
            timers.merge(t)
        partials.append(value)
    ds._settle_cache()
    if is_sum:
        return _pairwise_combine(partials, lambda a, b: a + b, 0.0)
    partials = [p for p in partials if p is not None]
    return _pairwise_combine(partials, combine, initial)


def filter_map_write(
    ds: PartitionedDataset,
    cut,
    projection,
    row_finalize: Callable[[tuple], tuple] | None,
    *,
    sink: NtuWriter,
    workers: int | None = None,
    timers: PhaseTimers | None = None,
) -> int:
    """Select events, project them to rows, and write the sink in partition
    order (input order within each partition). Consumes the sink: it is
    closed on success and aborted (partial file removed) on failure.

    Returns the number of rows written.
    """
    cut_fn = cut.evaluate
    proj_fn = projection.evaluate

    def task(part: Partition):
        t = PhaseTimers()
        events = ds._partition_events(part, t)
        t0 = time.perf_counter()
        if row_finalize is None:
            rows = [proj_fn(ev) for ev in events if cut_fn(ev)]
        else:
            rows = [row_finalize(proj_fn(ev)) for ev in events if cut_fn(ev)]
        wall = time.perf_counter() - t0
        t.compute += max(wall - t.read - t.decode, 0.0)
        return rows, t

    count = 0
    try:
        # drain all partitions before writing: completed futures buffer their
        # rows regardless, and an exclusive write keeps the write phase free
        # of GIL contention with worker decode/compute
        results = []
        for rows, t in _run_partitions(ds, task, workers):
            if timers is not None:
                timers.merge(t)
            results.append(rows)
        t0 = time.perf_counter()
        for rows in results:
            sink.append_rows(rows)
            count += len(rows)
        sink.close()
        if timers is not None:
            timers.write += time.perf_counter() - t0
    except BaseException:
        sink.abort()
        raise
    ds._settle_cache()
    return count
