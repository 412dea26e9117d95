"""Host inspection: ISA features, TSC calibration, and core pinning.

Feature bits come straight from CPUID (through a generated stub, so no
dependence on /proc parsing), including the OSXSAVE/XCR0 dance that decides
whether AVX state is actually usable, not merely present in silicon.

Timing note: the measurement kernels count time stamp counter (TSC) ticks.
On every CPU this package targets the TSC is invariant, i.e. it ticks at a
fixed rate regardless of the core's current frequency.  Converting TSC
ticks to *core* cycles therefore needs the ratio between the two clocks,
which core_tsc_ratio() estimates by timing a dependent integer-add chain
(one add per core cycle on all relevant microarchitectures) against the
TSC.  Under turbo the ratio exceeds 1.
"""

from __future__ import annotations

import ctypes
import os
import statistics
import time
from dataclasses import dataclass
from enum import Enum

from . import jit, x86
from .errors import AffinityUnsupported, ClockUnstable


@dataclass(frozen=True)
class FeatureSet:
    vendor: str
    brand: str
    avx: bool
    avx2: bool
    fma3: bool
    fma4: bool
    invariant_tsc: bool

    def __post_init__(self) -> None:
        if self.avx2 and not self.avx:
            raise ValueError("AVX2 without AVX is not a valid feature set")
        if (self.fma3 or self.fma4) and not self.avx:
            raise ValueError("FMA without AVX is not a valid feature set")


class CalibrationMethod(Enum):
    OS_CLOCK = "os-clock"
    ASSUMED = "assumed"


@dataclass(frozen=True)
class TscCalibration:
    tsc_hz: float
    method: CalibrationMethod
    readings: tuple[float, ...]
    spread: float

    def __post_init__(self) -> None:
        if self.tsc_hz <= 0:
            raise ValueError("tsc_hz must be positive")


_cpuid_fn: jit.JitFunction | None = None
_xgetbv_fn: jit.JitFunction | None = None
_rdtsc_fn: jit.JitFunction | None = None
_chain_fn: jit.JitFunction | None = None

_CHAIN_ADDS = 16


def _build_stubs() -> None:
    global _cpuid_fn, _xgetbv_fn, _rdtsc_fn, _chain_fn
    if _cpuid_fn is not None:
        return
    jit.require_host()

    a = x86.Assembler()
    a.push_r(x86.RBX)
    a.mov_rr(x86.R8, x86.RDX)
    a.mov_rr(x86.RAX, x86.RDI)
    a.mov_rr(x86.RCX, x86.RSI)
    a.cpuid()
    a.mov_store32(x86.R8, 0, x86.RAX)
    a.mov_store32(x86.R8, 4, x86.RBX)
    a.mov_store32(x86.R8, 8, x86.RCX)
    a.mov_store32(x86.R8, 12, x86.RDX)
    a.pop_r(x86.RBX)
    a.ret()
    _cpuid_fn = jit.JitFunction(
        a.finish(), None,
        (ctypes.c_uint64, ctypes.c_uint64, ctypes.POINTER(ctypes.c_uint32)),
        a.listing())

    a = x86.Assembler()
    a.xor_rr(x86.RCX, x86.RCX)
    a.xgetbv()
    a.shl_ri(x86.RDX, 32)
    a.or_rr(x86.RAX, x86.RDX)
    a.ret()
    _xgetbv_fn = jit.JitFunction(a.finish(), ctypes.c_uint64, (), a.listing())

    a = x86.Assembler()
    a.lfence()
    a.rdtsc()
    a.shl_ri(x86.RDX, 32)
    a.or_rr(x86.RAX, x86.RDX)
    a.ret()
    _rdtsc_fn = jit.JitFunction(a.finish(), ctypes.c_uint64, (), a.listing())

    # serial add chain: rdi iterations of _CHAIN_ADDS dependent 1-cycle adds,
    # returning the elapsed TSC ticks around the chain
    a = x86.Assembler()
    a.xor_rr(x86.RSI, x86.RSI)
    a.lfence()
    a.rdtsc()
    a.lfence()
    a.shl_ri(x86.RDX, 32)
    a.or_rr(x86.RAX, x86.RDX)
    a.mov_rr(x86.R9, x86.RAX)
    a.label("chain")
    for _ in range(_CHAIN_ADDS):
        a.add_ri(x86.RSI, 1)
    a.sub_ri(x86.RDI, 1)
    a.jne("chain")
    a.rdtscp()
    a.lfence()
    a.shl_ri(x86.RDX, 32)
    a.or_rr(x86.RAX, x86.RDX)
    a.sub_rr(x86.RAX, x86.R9)
    a.ret()
    _chain_fn = jit.JitFunction(
        a.finish(), ctypes.c_uint64, (ctypes.c_uint64,), a.listing())


def _cpuid(leaf: int, subleaf: int = 0) -> tuple[int, int, int, int]:
    _build_stubs()
    out = (ctypes.c_uint32 * 4)()
    _cpuid_fn(leaf, subleaf, out)
    return out[0], out[1], out[2], out[3]


def read_tsc() -> int:
    _build_stubs()
    return _rdtsc_fn()


def _decode_text(*regs: int) -> str:
    raw = b"".join(r.to_bytes(4, "little") for r in regs)
    return raw.split(b"\x00")[0].decode("ascii", "replace")


_features: FeatureSet | None = None


def detect_features(refresh: bool = False) -> FeatureSet:
    """Query CPUID for the feature bits the kernels depend on."""
    global _features
    if _features is not None and not refresh:
        return _features
    max_leaf, vb, vc, vd = _cpuid(0)
    vendor = _decode_text(vb, vd, vc)
    _, _, c1, _ = _cpuid(1)
    osxsave = bool(c1 & (1 << 27))
    ymm_enabled = False
    if osxsave:
        ymm_enabled = (_xgetbv_fn() & 0x6) == 0x6
    avx = bool(c1 & (1 << 28)) and ymm_enabled
    fma3 = bool(c1 & (1 << 12)) and avx
    avx2 = False
    if max_leaf >= 7:
        _, b7, _, _ = _cpuid(7)
        avx2 = bool(b7 & (1 << 5)) and avx
    max_ext = _cpuid(0x8000_0000)[0]
    fma4 = False
    invariant_tsc = False
    brand = ""
    if max_ext >= 0x8000_0001:
        _, _, ec, _ = _cpuid(0x8000_0001)
        fma4 = bool(ec & (1 << 16)) and avx
    if max_ext >= 0x8000_0004:
        parts = []
        for leaf in (0x8000_0002, 0x8000_0003, 0x8000_0004):
            parts.append(_decode_text(*_cpuid(leaf)))
        brand = "".join(parts).strip()
    if max_ext >= 0x8000_0007:
        _, _, _, ed = _cpuid(0x8000_0007)
        invariant_tsc = bool(ed & (1 << 8))
    _features = FeatureSet(
        vendor=vendor, brand=brand, avx=avx, avx2=avx2,
        fma3=fma3, fma4=fma4, invariant_tsc=invariant_tsc)
    return _features


# ---------------------------------------------------------------------------
# affinity
# ---------------------------------------------------------------------------

class AffinityHandle:
    """Remembers the affinity mask that was in place before pinning."""

    def __init__(self, previous: set[int]) -> None:
        self._previous = previous
        self._restored = False

    def restore(self) -> None:
        if not self._restored:
            os.sched_setaffinity(0, self._previous)
            self._restored = True


def pin_to_core(core: int) -> AffinityHandle:
    if not hasattr(os, "sched_setaffinity"):
        raise AffinityUnsupported("this OS exposes no thread-affinity control")
    try:
        previous = os.sched_getaffinity(0)
        os.sched_setaffinity(0, {core})
    except OSError as exc:
        raise AffinityUnsupported(f"cannot pin to core {core}: {exc}") from exc
    return AffinityHandle(previous)


# ---------------------------------------------------------------------------
# clocks
# ---------------------------------------------------------------------------

def calibrate_tsc(duration_ms: float = 100.0, rounds: int = 3,
                  max_spread: float = 0.01) -> TscCalibration:
    """Measure the TSC tick rate against the OS monotonic clock."""
    _build_stubs()
    readings: list[float] = []
    for _ in range(rounds):
        t0 = time.perf_counter_ns()
        c0 = read_tsc()
        deadline = t0 + duration_ms * 1e6
        while time.perf_counter_ns() < deadline:
            pass
        c1 = read_tsc()
        t1 = time.perf_counter_ns()
        readings.append((c1 - c0) / (t1 - t0) * 1e9)
    mid = statistics.median(readings)
    spread = (max(readings) - min(readings)) / mid
    if spread > max_spread:
        raise ClockUnstable(
            f"TSC calibration spread {spread:.2%} exceeds {max_spread:.2%}")
    return TscCalibration(
        tsc_hz=mid, method=CalibrationMethod.OS_CLOCK,
        readings=tuple(readings), spread=spread)


def core_tsc_ratio(iterations: int = 200_000, rounds: int = 7) -> float:
    """Estimate core-clock cycles per TSC tick from a serial add chain.

    Each chain iteration costs exactly _CHAIN_ADDS core cycles (dependent
    one-cycle integer adds), so core/TSC = adds_executed / tsc_ticks.
    The median over several rounds rides out interrupts and, after the
    first round has pulled the core out of idle, turbo ramp-up.
    """
    _build_stubs()
    _chain_fn(iterations)  # warm the core up to its running frequency
    ratios = []
    for _ in range(rounds):
        ticks = _chain_fn(iterations)
        if ticks == 0:
            raise ClockUnstable("TSC did not advance across the add chain")
        ratios.append(_CHAIN_ADDS * iterations / ticks)
    return statistics.median(ratios)


# Physical core/TSC ratios sit near 1: the TSC ticks at the nominal
# frequency and turbo rarely strays past +-60% of it.  Anything outside
# this window means the chain assumption broke (seen under binary
# translation, where dependent immediate adds get collapsed).
RATIO_PLAUSIBLE = (0.25, 4.0)

CHAIN_ANCHOR = "add-chain"
NOMINAL_ANCHOR = "tsc-nominal"


def core_clock_anchor(iterations: int = 200_000,
                      rounds: int = 7) -> tuple[float, str]:
    """Best-effort core-cycles-per-TSC-tick anchor.

    Returns (ratio, method).  The add-chain estimate is used when it is
    physically plausible; otherwise the TSC is assumed to tick at the
    core's nominal rate (ratio 1.0), which is how constant-TSC parts
    behave with turbo disabled.  Callers that care can inspect method.
    """
    try:
        ratio = core_tsc_ratio(iterations, rounds)
    except ClockUnstable:
        return 1.0, NOMINAL_ANCHOR
    lo, hi = RATIO_PLAUSIBLE
    if lo <= ratio <= hi:
        return ratio, CHAIN_ANCHOR
    return 1.0, NOMINAL_ANCHOR
