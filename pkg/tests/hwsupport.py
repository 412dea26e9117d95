"""Shared hardware gating for the test suite.

Portable tests run anywhere.  Anything that executes generated code is
skipped on hosts that cannot run it, with a "hardware-gated" marker in
the skip reason so gated skips are easy to spot in the report.
"""

import pytest

from fpcost import hwinfo, jit

JIT_OK = jit.host_executable()
FEATURES = hwinfo.detect_features() if JIT_OK else None
HAS_AVX = bool(FEATURES and FEATURES.avx)
HAS_FMA3 = bool(FEATURES and FEATURES.fma3)

needs_jit = pytest.mark.skipif(
    not JIT_OK,
    reason="hardware-gated: host cannot execute generated x86-64 code")
needs_avx = pytest.mark.skipif(
    not HAS_AVX, reason="hardware-gated: host lacks AVX")
needs_fma = pytest.mark.skipif(
    not HAS_FMA3, reason="hardware-gated: host lacks FMA3")
