"""Sampling policy and per-op cycle accounting.

A measurement is a batch of timed kernel invocations: a few warmup calls
whose readings are discarded, then `samples` retained readings.  Reported
numbers are TSC ticks per scalar operation; conversion to core cycles is a
separate concern (see hwinfo.core_tsc_ratio) because the TSC ticks at a
fixed rate while the core's clock moves with turbo and power management.

The cost of the timing skeleton itself (serialized rdtsc/rdtscp plus the
couple of bookkeeping instructions around them) is measured once against
an empty timed region.  When it is big enough to matter relative to the
shortest retained reading it is subtracted from every reading; otherwise
readings are used as-is and the overhead is merely recorded.  Either way
the stored raw fields allow bit-exact recomputation of the statistics.
"""

from __future__ import annotations

import ctypes
import statistics
from dataclasses import dataclass
from typing import Callable

from . import jit, x86
from .errors import FpCostError
from .kernels import KernelRun, emit_timing_end, emit_timing_start

OVERHEAD_SUBTRACT_THRESHOLD = 0.01  # subtract once overhead exceeds 1% of min


@dataclass(frozen=True)
class MeasurementStats:
    """Statistics over one batch of kernel invocations.

    samples holds TSC ticks per scalar op, derived from raw_cycles by the
    stated overhead policy; everything here is recomputable from the raw
    fields, so serialized records stay auditable.
    """

    raw_cycles: tuple[int, ...]
    scalar_ops: int
    timer_overhead: float
    overhead_policy: str
    samples: tuple[float, ...]
    minimum: float
    median: float
    mean: float
    stddev: float
    warmups_discarded: int
    attempts: int
    unstable: bool

    def __post_init__(self) -> None:
        if not self.samples:
            raise ValueError("a measurement needs at least one sample")
        if len(self.samples) != len(self.raw_cycles):
            raise ValueError("samples and raw_cycles must line up")
        if self.scalar_ops < 1:
            raise ValueError("scalar_ops must be positive")
        if any(s <= 0 for s in self.samples):
            raise ValueError("per-op cycle samples must be positive")
        if self.overhead_policy not in ("bounded", "subtracted"):
            raise ValueError(f"unknown overhead policy {self.overhead_policy!r}")
        if not (self.minimum <= self.median <= max(self.samples)):
            raise ValueError("ordering of summary statistics is broken")

    @staticmethod
    def samples_from_raw(raw_cycles, scalar_ops: int, timer_overhead: float,
                         overhead_policy: str) -> tuple[float, ...]:
        if overhead_policy == "subtracted":
            adjusted = (max(r - timer_overhead, 1.0) for r in raw_cycles)
        else:
            adjusted = (float(r) for r in raw_cycles)
        return tuple(r / scalar_ops for r in adjusted)

    @classmethod
    def from_raw(cls, raw_cycles, scalar_ops: int, timer_overhead: float,
                 *, warmups_discarded: int, attempts: int,
                 unstable: bool) -> "MeasurementStats":
        raw = tuple(int(r) for r in raw_cycles)
        policy = "bounded"
        if raw and timer_overhead > OVERHEAD_SUBTRACT_THRESHOLD * min(raw):
            policy = "subtracted"
        samples = cls.samples_from_raw(raw, scalar_ops, timer_overhead, policy)
        return cls(
            raw_cycles=raw,
            scalar_ops=scalar_ops,
            timer_overhead=timer_overhead,
            overhead_policy=policy,
            samples=samples,
            minimum=min(samples),
            median=statistics.median(samples),
            mean=statistics.fmean(samples),
            stddev=statistics.stdev(samples) if len(samples) > 1 else 0.0,
            warmups_discarded=warmups_discarded,
            attempts=attempts,
            unstable=unstable,
        )

    @property
    def relative_spread(self) -> float:
        return self.stddev / self.median if self.median else 0.0

    def to_dict(self) -> dict:
        return {
            "raw_cycles": list(self.raw_cycles),
            "scalar_ops": self.scalar_ops,
            "timer_overhead": self.timer_overhead,
            "overhead_policy": self.overhead_policy,
            "samples": list(self.samples),
            "minimum": self.minimum,
            "median": self.median,
            "mean": self.mean,
            "stddev": self.stddev,
            "warmups_discarded": self.warmups_discarded,
            "attempts": self.attempts,
            "unstable": self.unstable,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MeasurementStats":
        return cls(
            raw_cycles=tuple(data["raw_cycles"]),
            scalar_ops=data["scalar_ops"],
            timer_overhead=data["timer_overhead"],
            overhead_policy=data["overhead_policy"],
            samples=tuple(data["samples"]),
            minimum=data["minimum"],
            median=data["median"],
            mean=data["mean"],
            stddev=data["stddev"],
            warmups_discarded=data["warmups_discarded"],
            attempts=data["attempts"],
            unstable=data["unstable"],
        )


_overhead_fn: jit.JitFunction | None = None
_overhead_value: float | None = None


def timer_overhead(refresh: bool = False) -> float:
    """Median tick cost of an empty timed region (same skeleton as the
    kernels: serialized rdtsc in, rdtscp out)."""
    global _overhead_fn, _overhead_value
    if _overhead_value is not None and not refresh:
        return _overhead_value
    if _overhead_fn is None:
        jit.require_host()
        a = x86.Assembler()
        emit_timing_start(a)
        emit_timing_end(a)
        a.ret()
        _overhead_fn = jit.JitFunction(a.finish(), ctypes.c_uint64, (),
                                       a.listing())
    readings = sorted(_overhead_fn() for _ in range(101))
    _overhead_value = float(readings[len(readings) // 2])
    return _overhead_value


def measure(invoke: Callable[[], KernelRun], *, samples: int = 9,
            warmups: int = 2, max_attempts: int = 3,
            stability_threshold: float = 0.10) -> MeasurementStats:
    """Run a kernel invocation repeatedly and summarize it.

    When the retained readings spread too widely (stddev/median above the
    threshold) the whole batch is retaken, up to max_attempts; a batch
    that never settles is returned anyway but flagged unstable.
    """
    if samples < 1:
        raise ValueError("need at least one retained sample")
    if warmups < 0 or max_attempts < 1:
        raise ValueError("warmups must be >= 0 and max_attempts >= 1")
    overhead = timer_overhead()
    attempts = 0
    stats: MeasurementStats | None = None
    while attempts < max_attempts:
        attempts += 1
        scalar_ops: int | None = None
        raw: list[int] = []
        for i in range(warmups + samples):
            run = invoke()
            if scalar_ops is None:
                scalar_ops = run.scalar_ops
            elif run.scalar_ops != scalar_ops:
                raise FpCostError("scalar op count changed between samples")
            if i >= warmups:
                raw.append(run.raw_cycles)
        stats = MeasurementStats.from_raw(
            raw, scalar_ops, overhead,
            warmups_discarded=warmups, attempts=attempts,
            unstable=False)
        if stats.relative_spread <= stability_threshold:
            return stats
    return MeasurementStats.from_raw(
        stats.raw_cycles, stats.scalar_ops, overhead,
        warmups_discarded=warmups, attempts=attempts, unstable=True)
