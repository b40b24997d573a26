"""Wall-time and allocation scaling of the token mixers."""
from __future__ import annotations

import csv
import io
import statistics
import time
import tracemalloc
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .mixers import apply_mixer, init_mixer_params

DEFAULT_LENGTHS = (256, 512, 1024, 2048, 4096, 8192)


@dataclass
class BenchRow:
    mixer: str
    seq_len: int
    feat_dim: int
    median_ms: float
    peak_alloc_bytes: int


@dataclass
class BenchReport:
    rows: list = field(default_factory=list)
    slopes: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["mixer", "seq_len", "feat_dim", "median_ms", "peak_alloc_bytes"])
        for r in self.rows:
            w.writerow([r.mixer, r.seq_len, r.feat_dim, f"{r.median_ms:.4f}", r.peak_alloc_bytes])
        return buf.getvalue()


def loglog_slope(lengths, times) -> float:
    """Least-squares slope of ln(time) against ln(length)."""
    return float(np.polyfit(np.log(lengths), np.log(times), 1)[0])


def _time_once(fn) -> float:
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def bench_mixer(kind, n, dim, trials=5, landmarks=16, seed=0) -> BenchRow:
    """Median wall time over ``trials`` runs after one discarded warm-up."""
    rng = np.random.default_rng(seed)
    params = init_mixer_params(kind, dim, rng)
    x = rng.standard_normal((n, dim)).astype(np.float32)

    def run():
        apply_mixer(kind, x, params, landmarks)

    run()
    times = [_time_once(run) for _ in range(trials)]
    tracemalloc.start()
    try:
        run()
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    return BenchRow(kind, n, dim, 1e3 * statistics.median(times), int(peak))


def run_bench(mixers=("softmax", "fourier", "nystrom"), lengths=DEFAULT_LENGTHS, dim=64,
              trials=5, landmarks=16, seed=0) -> BenchReport:
    lengths = sorted(int(n) for n in lengths)
    if any(n < 1 or n & (n - 1) for n in lengths):
        raise ValueError("benchmark lengths must be powers of two")
    if trials < 5:
        raise ValueError("use at least 5 trials per cell")
    report = BenchReport()
    with threadpool_limits(limits=1):
        for kind in mixers:
            rows = [bench_mixer(kind, n, dim, trials, landmarks, seed) for n in lengths]
            report.rows.extend(rows)
            if len(rows) >= 2:
                report.slopes[kind] = loglog_slope([r.seq_len for r in rows], [r.median_ms for r in rows])
    return report
