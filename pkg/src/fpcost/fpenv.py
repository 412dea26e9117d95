"""Control of the SSE/AVX floating-point environment via MXCSR.

Flush-to-zero (FTZ, bit 15) rewrites subnormal *results* to zero;
denormals-are-zero (DAZ, bit 6) rewrites subnormal *inputs* to zero.  Both
are measurement conditions here, so they are set and restored around each
timed kernel rather than left to whatever state the process happens to be
in.  Reads and writes go through tiny generated stmxcsr/ldmxcsr routines,
keeping Python's own floating point out of the loop.
"""

from __future__ import annotations

import ctypes
from contextlib import contextmanager
from dataclasses import dataclass

from . import jit, x86
from .errors import EnvMismatch

FTZ_BIT = 1 << 15
DAZ_BIT = 1 << 6
ROUNDING_BITS = 0x6000          # bits 13-14, rounding control
EXCEPTION_MASK_BITS = 0x1F80    # bits 7-12, one mask bit per exception
UNDERFLOW_MASK_BIT = 1 << 11
STATUS_FLAG_BITS = 0x003F       # bits 0-5, sticky exception flags

FLAG_INVALID = 1 << 0
FLAG_DENORMAL = 1 << 1
FLAG_DIV_BY_ZERO = 1 << 2
FLAG_OVERFLOW = 1 << 3
FLAG_UNDERFLOW = 1 << 4
FLAG_PRECISION = 1 << 5


@dataclass(frozen=True)
class FpEnvConfig:
    """The controllable part of MXCSR.

    Rounding mode and the sticky status flags are deliberately not part of
    the configuration: encode() carries them over from the live register
    unchanged.
    """

    ftz: bool
    daz: bool
    underflow_masked: bool = True
    mask_all_exceptions: bool = True

    def __post_init__(self) -> None:
        if self.ftz and not self.underflow_masked:
            raise ValueError("FTZ only takes effect while underflow is masked")
        if self.mask_all_exceptions and not self.underflow_masked:
            raise ValueError("mask_all_exceptions implies underflow_masked")

    @classmethod
    def decode(cls, raw: int) -> "FpEnvConfig":
        return cls(
            ftz=bool(raw & FTZ_BIT),
            daz=bool(raw & DAZ_BIT),
            underflow_masked=bool(raw & UNDERFLOW_MASK_BIT),
            mask_all_exceptions=(raw & EXCEPTION_MASK_BITS) == EXCEPTION_MASK_BITS,
        )

    def encode(self, base: int) -> int:
        """Apply this configuration on top of an existing raw MXCSR value,
        leaving rounding control and the sticky flags untouched."""
        raw = base & ~(FTZ_BIT | DAZ_BIT)
        if self.ftz:
            raw |= FTZ_BIT
        if self.daz:
            raw |= DAZ_BIT
        if self.mask_all_exceptions:
            raw |= EXCEPTION_MASK_BITS
        elif not self.underflow_masked:
            raw &= ~UNDERFLOW_MASK_BIT
        else:
            raw |= UNDERFLOW_MASK_BIT
        return raw


F_D = FpEnvConfig(ftz=True, daz=True)
NO_F_D = FpEnvConfig(ftz=False, daz=False)


def env_key(config: FpEnvConfig) -> str:
    if config.ftz and config.daz:
        return "fd"
    if not config.ftz and not config.daz:
        return "no_fd"
    return "ftz" if config.ftz else "daz"


def env_label(config: FpEnvConfig) -> str:
    return {"fd": "F+D", "no_fd": "No F+D", "ftz": "FTZ only",
            "daz": "DAZ only"}[env_key(config)]


_read_fn: jit.JitFunction | None = None
_write_fn: jit.JitFunction | None = None


def _build_accessors() -> tuple[jit.JitFunction, jit.JitFunction]:
    global _read_fn, _write_fn
    if _read_fn is None:
        jit.require_host()
        a = x86.Assembler()
        a.sub_ri(x86.RSP, 8)
        a.stmxcsr_mem(x86.RSP, 0)
        a.mov_load32(x86.RAX, x86.RSP, 0)
        a.add_ri(x86.RSP, 8)
        a.ret()
        _read_fn = jit.JitFunction(a.finish(), ctypes.c_uint32, (), a.listing())
        a = x86.Assembler()
        a.sub_ri(x86.RSP, 8)
        a.mov_store32(x86.RSP, 0, x86.RDI)
        a.ldmxcsr_mem(x86.RSP, 0)
        a.add_ri(x86.RSP, 8)
        a.ret()
        _write_fn = jit.JitFunction(
            a.finish(), None, (ctypes.c_uint32,), a.listing())
    return _read_fn, _write_fn


def supported() -> bool:
    return jit.host_executable()


def read_raw() -> int:
    read, _ = _build_accessors()
    return read()


def write_raw(value: int) -> None:
    _, write = _build_accessors()
    write(value & 0xFFFF)


def read_env() -> FpEnvConfig:
    return FpEnvConfig.decode(read_raw())


def read_status_flags() -> int:
    return read_raw() & STATUS_FLAG_BITS


def clear_status_flags() -> None:
    write_raw(read_raw() & ~STATUS_FLAG_BITS)


def apply(config: FpEnvConfig) -> int:
    """Switch the live environment; returns the previous raw MXCSR value."""
    before = read_raw()
    target = config.encode(before)
    write_raw(target)
    after = read_raw()
    if after != target:
        raise EnvMismatch(
            f"MXCSR write did not stick: wanted {target:#06x}, read {after:#06x}")
    return before


@contextmanager
def with_env(config: FpEnvConfig):
    """Apply a configuration for the duration of a block, then restore the
    complete previous register, sticky flags included."""
    saved = apply(config)
    try:
        yield read_raw()
    finally:
        write_raw(saved)
