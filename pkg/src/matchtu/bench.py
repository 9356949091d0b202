"""Scaling benchmarks: per-iteration wall time and peak solver memory.

Memory is counted with :mod:`tracemalloc`, which numpy reports its data
buffers to.  The peak is taken relative to the traced size just before the
solver starts, so inputs (the factor matrices) are excluded and everything the
solver allocates, including its outputs, is included.  The same hook is used
for both modes so ratios between runs are meaningful.

Peaks are rounded up to whole 4 KiB pages.  The interpreter's small-object
freelists make a few hundred bytes of Python-level allocation depend on prior
history; page rounding absorbs that so repeated runs report the same count.
"""

from __future__ import annotations

import csv
import gc
import json
import logging
import os
import platform
import tracemalloc
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .ipfp import MAX_DENSE_ENTRIES, solve_batch, solve_minibatch
from .market import MarketShape, SolverConfig, uniform_mass
from .preferences import sample_uniform_factors

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
GIB = 1024**3
DESK_CAP = {"batch": 10**4, "minibatch": 10**5}
MEMORY_METHOD = "tracemalloc-peak-delta-4k"
PAGE = 4096
# rough single-core throughput used only for the --allow-large warning
_FLOPS_PER_SEC = 5e9


class BenchRefused(RuntimeError):
    """Configuration refused before allocation (predicted OOM or size cap)."""


@dataclass(frozen=True)
class BenchConfig:
    sizes: tuple[int, ...]
    batch_sizes: tuple[int, ...] = (100,)
    factor_dims: tuple[int, ...] = (50,)
    iters: int = 100
    beta: float = 1.0
    seed: int = 42
    mode: str = "minibatch"
    warmup: int = 3
    memory_budget: int = 8 * GIB
    allow_large: bool = False
    mass_total: float = 1.0

    def __post_init__(self):
        if not self.sizes:
            raise ValueError("sizes must be non-empty")
        if self.mode not in DESK_CAP:
            raise ValueError(f"mode must be 'batch' or 'minibatch', got {self.mode!r}")
        if self.iters < 1 or self.warmup < 0:
            raise ValueError("iters must be >= 1 and warmup >= 0")
        if any(s < 1 for s in self.sizes) or any(b < 1 for b in self.batch_sizes) or any(d < 1 for d in self.factor_dims):
            raise ValueError("sizes, batch sizes and factor dims must be positive")
        if not self.batch_sizes or not self.factor_dims:
            raise ValueError("batch_sizes and factor_dims must be non-empty")
        if not self.beta > 0:
            raise ValueError("beta must be positive")


@dataclass
class ExperimentRecord:
    mode: str
    size: int
    batch_size: int | None
    factor_dim: int
    iters: int
    warmup: int
    beta: float
    seed: int
    mean_time_per_iter: float
    peak_solver_bytes: int | None
    memory_method: str
    machine: str
    per_iter_times: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class MemoryMeasurement:
    peak_bytes: int | None
    method: str

    @property
    def measured(self) -> bool:
        return self.peak_bytes is not None


def machine_descriptor() -> str:
    model = platform.processor() or platform.machine()
    try:
        with open("/proc/cpuinfo") as fh:
            for line in fh:
                if line.startswith("model name"):
                    model = line.split(":", 1)[1].strip()
                    break
    except OSError:
        pass
    try:
        mem = os.sysconf("SC_PAGE_SIZE") * os.sysconf("SC_PHYS_PAGES") / GIB
        mem_s = f"{mem:.1f}GiB"
    except (ValueError, OSError, AttributeError):
        mem_s = "unknown"
    return f"{model}; cores={os.cpu_count()}; mem={mem_s}; numpy={np.__version__}"


def _numpy_is_traced() -> bool:
    before, _ = tracemalloc.get_traced_memory()
    probe = np.empty(1 << 17)
    after, _ = tracemalloc.get_traced_memory()
    del probe
    return after - before >= (1 << 17) * 8


def measure_memory(fn, *args, **kwargs):
    """Run ``fn`` and return ``(result, MemoryMeasurement)``.

    The measurement is the peak traced allocation size during the call minus
    the traced size at entry.  If allocations cannot be traced the measurement
    carries ``peak_bytes=None`` and method ``"unmeasured"``.
    """
    started = False
    if not tracemalloc.is_tracing():
        try:
            tracemalloc.start()
            started = True
        except RuntimeError:
            return fn(*args, **kwargs), MemoryMeasurement(None, "unmeasured")
    try:
        if not _numpy_is_traced():
            return fn(*args, **kwargs), MemoryMeasurement(None, "unmeasured")
        gc.collect()
        tracemalloc.reset_peak()
        base, _ = tracemalloc.get_traced_memory()
        result = fn(*args, **kwargs)
        _, peak = tracemalloc.get_traced_memory()
        delta = max(peak - base, 0)
        return result, MemoryMeasurement(-(-delta // PAGE) * PAGE, MEMORY_METHOD)
    finally:
        if started:
            tracemalloc.stop()


def predicted_bytes(mode: str, size: int, batch_size: int, dim: int) -> int:
    """Dominant solver buffers: the dense kernel, or factors + per-batch workspaces."""
    if mode == "batch":
        return 8 * size * size
    return 8 * (4 * size * dim + 2 * size + 2 * min(batch_size, size) * size)


def _estimated_seconds(size: int, dim: int, iters: int) -> float:
    # two sides, each rebuilding |X||Y| kernel entries from 2D-wide factors
    return 2 * size * size * (4 * dim + 20) * iters / _FLOPS_PER_SEC


def check_admissible(cfg: BenchConfig) -> None:
    cap = DESK_CAP[cfg.mode]
    for size in cfg.sizes:
        if cfg.mode == "batch" and size * size > MAX_DENSE_ENTRIES:
            raise BenchRefused(f"batch mode at size {size}: {size * size} kernel entries exceed 2^31; use --mode minibatch")
        for b in cfg.batch_sizes:
            for d in cfg.factor_dims:
                need = predicted_bytes(cfg.mode, size, b, d)
                if need > cfg.memory_budget:
                    raise BenchRefused(
                        f"{cfg.mode} mode at size {size} needs ~{need / GIB:.1f} GiB, "
                        f"over the {cfg.memory_budget / GIB:.1f} GiB budget"
                        + ("; use --mode minibatch" if cfg.mode == "batch" else "; lower --batch-size")
                    )
        if size > cap:
            if not cfg.allow_large:
                raise BenchRefused(f"size {size} exceeds the desk-scale cap {cap} for {cfg.mode} mode; pass --allow-large")
            est = max(_estimated_seconds(size, d, cfg.iters + cfg.warmup) for d in cfg.factor_dims)
            log.warning("size %d beyond desk cap; estimated run time ~%.0f s", size, est)


def _combo_seed(seed: int, size: int, dim: int) -> int:
    return int(np.random.SeedSequence([seed, size, dim]).generate_state(1, dtype=np.uint64)[0])


def run_one(mode: str, size: int, batch_size: int | None, dim: int, cfg: BenchConfig, machine: str) -> ExperimentRecord:
    shape = MarketShape(size, size, dim)
    prefs = sample_uniform_factors(shape, dim, _combo_seed(cfg.seed, size, dim))
    mass = uniform_mass(shape, cfg.mass_total)
    solver_cfg = SolverConfig(beta=cfg.beta, max_iters=cfg.warmup + cfg.iters, batch_size=batch_size or 1)
    solve = solve_batch if mode == "batch" else solve_minibatch
    (_, _, diag), mem = measure_memory(solve, prefs, mass, solver_cfg)
    times = diag.wall_time_per_iter[cfg.warmup:]
    return ExperimentRecord(
        mode=mode,
        size=size,
        batch_size=batch_size,
        factor_dim=dim,
        iters=cfg.iters,
        warmup=cfg.warmup,
        beta=cfg.beta,
        seed=cfg.seed,
        mean_time_per_iter=float(np.mean(times)),
        peak_solver_bytes=mem.peak_bytes,
        memory_method=mem.method,
        machine=machine,
        per_iter_times=[float(t) for t in times],
    )


def bench_sweep(cfg: BenchConfig) -> list[ExperimentRecord]:
    """One record per (size, B, D); batch mode ignores B."""
    check_admissible(cfg)
    machine = machine_descriptor()
    batches = [None] if cfg.mode == "batch" else list(cfg.batch_sizes)
    records = []
    for size in cfg.sizes:
        for b in batches:
            for d in cfg.factor_dims:
                rec = run_one(cfg.mode, size, b, d, cfg, machine)
                log.info("%s size=%d B=%s D=%d: %.4fs/iter, peak=%s bytes", cfg.mode, size, b, d, rec.mean_time_per_iter, rec.peak_solver_bytes)
                records.append(rec)
    return records


COLUMNS = ["schema_version"] + [f.name for f in fields(ExperimentRecord)]


def _csv_cell(name, value):
    if name == "per_iter_times":
        return ";".join(repr(float(t)) for t in value)
    if value is None:
        return "unmeasured" if name == "peak_solver_bytes" else ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _from_csv_row(row: dict) -> ExperimentRecord:
    def opt_int(s):
        return None if s in ("", "unmeasured") else int(s)

    return ExperimentRecord(
        mode=row["mode"],
        size=int(row["size"]),
        batch_size=opt_int(row["batch_size"]),
        factor_dim=int(row["factor_dim"]),
        iters=int(row["iters"]),
        warmup=int(row["warmup"]),
        beta=float(row["beta"]),
        seed=int(row["seed"]),
        mean_time_per_iter=float(row["mean_time_per_iter"]),
        peak_solver_bytes=opt_int(row["peak_solver_bytes"]),
        memory_method=row["memory_method"],
        machine=row["machine"],
        per_iter_times=[float(t) for t in row["per_iter_times"].split(";") if t],
    )


def emit_report(records, path, fmt: str = "json") -> Path:
    if not records:
        raise ValueError("refusing to write an empty benchmark report")
    path = Path(path)
    if fmt == "json":
        doc = {"schema_version": SCHEMA_VERSION, "records": [asdict(r) for r in records]}
        path.write_text(json.dumps(doc, indent=2) + "\n")
    elif fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(COLUMNS)
            for rec in records:
                d = asdict(rec)
                writer.writerow([SCHEMA_VERSION] + [_csv_cell(k, d[k]) for k in COLUMNS[1:]])
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    return path


def load_report(path) -> list[ExperimentRecord]:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        for row in rows:
            if int(row["schema_version"]) != SCHEMA_VERSION:
                raise ValueError(f"{path}: unsupported schema version {row['schema_version']}")
        return [_from_csv_row(r) for r in rows]
    doc = json.loads(path.read_text())
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"{path}: unsupported schema version {doc.get('schema_version')}")
    return [ExperimentRecord(**r) for r in doc["records"]]


def loglog_slope(sizes, values) -> float:
    """Least-squares slope of log(values) against log(sizes)."""
    return float(np.polyfit(np.log(np.asarray(sizes, float)), np.log(np.asarray(values, float)), 1)[0])
