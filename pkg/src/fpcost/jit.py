"""Executable-memory loader for the generated kernels.

Code produced by x86.Assembler is copied into an anonymous mmap and called
through ctypes.  Pages are made read+execute after the copy when mprotect
is available; if the OS forbids executable mappings entirely the host is
reported as unsupported rather than crashing later.
"""

from __future__ import annotations

import ctypes
import ctypes.util
import mmap
import platform

from .errors import UnsupportedHost

_PROT_READ = 0x1
_PROT_WRITE = 0x2
_PROT_EXEC = 0x4

_libc = None


def _get_libc():
    global _libc
    if _libc is None:
        name = ctypes.util.find_library("c")
        _libc = ctypes.CDLL(name, use_errno=True) if name else False
    return _libc or None


class JitFunction:
    """One compiled entry point; owns its executable page for its lifetime."""

    def __init__(self, code: bytes, restype, argtypes, listing: str = "") -> None:
        if not code:
            raise ValueError("empty code blob")
        self.code = code
        self.listing = listing
        size = (len(code) + mmap.PAGESIZE - 1) // mmap.PAGESIZE * mmap.PAGESIZE
        try:
            buf = mmap.mmap(-1, size, prot=_PROT_READ | _PROT_WRITE | _PROT_EXEC)
        except (OSError, PermissionError) as exc:
            raise UnsupportedHost(
                f"cannot allocate executable memory: {exc}"
            ) from exc
        buf.write(code)
        self._buf = buf
        addr = ctypes.addressof(ctypes.c_char.from_buffer(buf))
        libc = _get_libc()
        if libc is not None:
            # drop the write permission once the code is in place; failure is
            # harmless (the page simply stays writable)
            libc.mprotect(ctypes.c_void_p(addr), ctypes.c_size_t(size),
                          _PROT_READ | _PROT_EXEC)
        self._fn = ctypes.CFUNCTYPE(restype, *argtypes)(addr)

    def __call__(self, *args):
        return self._fn(*args)


_host_check: bool | None = None


def _probe() -> bool:
    if platform.machine() not in ("x86_64", "AMD64", "amd64"):
        return False
    try:
        # mov eax, 0x2A; ret
        fn = JitFunction(b"\xB8\x2A\x00\x00\x00\xC3", ctypes.c_uint32, ())
        return fn() == 0x2A
    except (UnsupportedHost, OSError):
        return False


def host_executable() -> bool:
    """True when this process can generate and run x86-64 code."""
    global _host_check
    if _host_check is None:
        _host_check = _probe()
    return _host_check


def require_host() -> None:
    if not host_executable():
        raise UnsupportedHost(
            "need an x86-64 host that allows executable anonymous mappings"
        )
