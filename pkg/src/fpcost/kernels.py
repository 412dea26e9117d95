"""Generated measurement kernels and their execution harness.

Two kernel shapes are produced for each operation:

RegAsm   All operands preloaded into YMM registers before the timed loop;
         the loop body is `unroll` independent 4-lane AVX operations (one
         per register slot), so nothing but the FP units is exercised.
         FMA uses its destructive 231 form, so each slot first refreshes
         its accumulator with a register copy (eliminated in the rename
         stage on the measured hardware) to keep iterations independent.

MemC     The load/store-bound shape a compiler emits for an array loop:
         every AVX iteration loads each input vector from L1, computes,
         and stores the result, with pointer bumps and a counted inner
         loop.  Arrays are sized to stay L1-resident and a full warm pass
         runs before the timed region.

Timing sits inside the generated code itself: a serialized rdtsc before
the loop, rdtscp after, so no interpreter work is ever inside the timed
region.  The returned tick count covers repetitions x vector_length
scalar operations.

Per-lane operand values are distinct (see fpmodel.make_operands), each
slot writes its own destination register, and destinations are stored to
memory after the timed region, so the loop can neither be hoisted, merged
across slots, nor dead-code-eliminated.
"""

from __future__ import annotations

import ctypes
from dataclasses import dataclass
from enum import Enum

from . import fpenv, hwinfo, jit, x86
from .errors import (
    EnvMismatch,
    MissingFeature,
    OperandMismatch,
    UnmodeledOp,
)
from .fpmodel import OperandSet, Operation
from .x86 import R8, R9, R10, R11, RAX, RBX, RCX, RDI, RDX, RSI

L1_BUDGET_BYTES = 16384
_LANES_PER_AVX = 4


class KernelVariant(Enum):
    REG_ASM = "regasm"
    MEM_C = "memc"


@dataclass(frozen=True)
class KernelSpec:
    """Shape and repetition count of one measurement kernel."""

    op: Operation
    variant: KernelVariant
    vector_length: int
    unroll: int
    repetitions: int
    min_scalar_ops: int = 10_000_000

    def __post_init__(self) -> None:
        if self.repetitions < 1:
            raise ValueError("repetitions must be positive")
        floor = 2 if self.op is Operation.DIV else 4
        if self.unroll < floor:
            raise ValueError(
                f"unroll {self.unroll} cannot hide {self.op.value} latency "
                f"(need >= {floor})")
        if self.unroll > self._max_unroll(self.op, self.variant):
            raise ValueError("unroll exceeds the register budget")
        group = _LANES_PER_AVX * self.unroll
        if self.variant is KernelVariant.REG_ASM:
            if self.vector_length != group:
                raise ValueError(
                    f"register kernel holds exactly {group} lanes, "
                    f"not {self.vector_length}")
        else:
            if self.vector_length % group or self.vector_length < group:
                raise ValueError(
                    f"vector_length must be a positive multiple of {group}")
            arrays = 4 if self.op is Operation.FMA else 3
            if arrays * self.vector_length * 8 > L1_BUDGET_BYTES:
                raise ValueError("working set would not stay L1-resident")
        if self.scalar_ops < self.min_scalar_ops:
            raise ValueError(
                f"{self.scalar_ops} scalar ops is below the floor of "
                f"{self.min_scalar_ops}")

    @staticmethod
    def _max_unroll(op: Operation, variant: KernelVariant) -> int:
        if variant is KernelVariant.MEM_C:
            return 4
        return 4 if op is Operation.FMA else 5

    @property
    def scalar_ops(self) -> int:
        return self.repetitions * self.vector_length

    @classmethod
    def regasm(cls, op: Operation, unroll: int = 4,
               min_scalar_ops: int = 10_000_000) -> "KernelSpec":
        vl = _LANES_PER_AVX * unroll
        reps = -(-min_scalar_ops // vl)
        return cls(op, KernelVariant.REG_ASM, vl, unroll, reps, min_scalar_ops)

    @classmethod
    def memc(cls, op: Operation, vector_length: int = 256, unroll: int = 4,
             min_scalar_ops: int = 10_000_000) -> "KernelSpec":
        reps = -(-min_scalar_ops // vector_length)
        return cls(op, KernelVariant.MEM_C, vector_length, unroll, reps,
                   min_scalar_ops)


@dataclass(frozen=True)
class BodyOp:
    """One instruction of the timed loop body, for dependence auditing."""

    slot: int
    mnemonic: str
    dst: int | None
    srcs: tuple[int, ...]


@dataclass(frozen=True)
class CompiledKernel:
    op: Operation
    variant: KernelVariant
    vector_length: int
    unroll: int
    fn: jit.JitFunction
    listing: str
    body: tuple[BodyOp, ...]


def slots_independent(kernel: CompiledKernel) -> bool:
    """True when no unrolled slot reads or writes another slot's registers."""
    slots: dict[int, tuple[set[int], set[int]]] = {}
    for op in kernel.body:
        reads, writes = slots.setdefault(op.slot, (set(), set()))
        reads.update(op.srcs)
        if op.dst is not None:
            writes.add(op.dst)
    keys = sorted(slots)
    for i in keys:
        for j in keys:
            if i == j:
                continue
            reads_j, writes_j = slots[j]
            if slots[i][1] & (reads_j | writes_j):
                return False
    return True


# ---------------------------------------------------------------------------
# code generation
# ---------------------------------------------------------------------------

_ARITH = {
    Operation.ADD: "vaddpd",
    Operation.MUL: "vmulpd",
    Operation.DIV: "vdivpd",
}


def _emit_arith(a: x86.Assembler, op: Operation, dst: int, s1: int, s2: int) -> None:
    if op is Operation.ADD:
        a.vaddpd(dst, s1, s2)
    elif op is Operation.MUL:
        a.vmulpd(dst, s1, s2)
    elif op is Operation.DIV:
        a.vdivpd(dst, s1, s2)
    else:
        a.vfmadd231pd(dst, s1, s2)


def emit_timing_start(a: x86.Assembler) -> None:
    a.lfence()
    a.rdtsc()
    a.lfence()
    a.shl_ri(RDX, 32)
    a.or_rr(RAX, RDX)
    a.push_r(RAX)


def emit_timing_end(a: x86.Assembler) -> None:
    a.rdtscp()
    a.lfence()
    a.shl_ri(RDX, 32)
    a.or_rr(RAX, RDX)
    a.pop_r(RDI)
    a.sub_rr(RAX, RDI)


def _emit_regasm(op: Operation, unroll: int) -> tuple[x86.Assembler, list[BodyOp]]:
    u = unroll
    a = x86.Assembler()
    body: list[BodyOp] = []
    a.comment(f"{op.value} register kernel, {u} independent slots")
    a.mov_rr(R10, RCX)      # out pointer (rcx dies with rdtscp)
    a.mov_rr(R9, RDX)       # addend pointer (rdx dies with rdtsc)
    a.comment("preload")
    if op is Operation.FMA:
        b = [1 + k for k in range(u)]
        c = [1 + u + k for k in range(u)]
        d = [1 + 2 * u + k for k in range(u)]
        acc = [0] + [3 * u + 1 + k for k in range(u - 1)]
        for k in range(u):
            a.vmovupd_load(b[k], RDI, 32 * k)
        for k in range(u):
            a.vmovupd_load(c[k], RSI, 32 * k)
        for k in range(u):
            a.vmovupd_load(d[k], R9, 32 * k)
        out_regs = acc
    else:
        lhs = [1 + k for k in range(u)]
        rhs = [1 + u + k for k in range(u)]
        dst = [1 + 2 * u + k for k in range(u)]
        for k in range(u):
            a.vmovupd_load(lhs[k], RDI, 32 * k)
        for k in range(u):
            a.vmovupd_load(rhs[k], RSI, 32 * k)
        out_regs = dst
    emit_timing_start(a)
    a.label("loop")
    if op is Operation.FMA:
        for k in range(u):
            a.vmovapd_rr(acc[k], d[k])
            a.vfmadd231pd(acc[k], b[k], c[k])
            body.append(BodyOp(k, "vmovapd", acc[k], (d[k],)))
            body.append(BodyOp(k, "vfmadd231pd", acc[k], (acc[k], b[k], c[k])))
    else:
        for k in range(u):
            _emit_arith(a, op, dst[k], lhs[k], rhs[k])
            body.append(BodyOp(k, _ARITH[op], dst[k], (lhs[k], rhs[k])))
    a.sub_ri(R8, 1)
    a.jne("loop")
    emit_timing_end(a)
    a.comment("consume results")
    for k, reg in enumerate(out_regs):
        a.vmovupd_store(R10, 32 * k, reg)
    a.vzeroupper()
    a.ret()
    return a, body


def _emit_memc_inner(a: x86.Assembler, op: Operation, unroll: int,
                     label: str, trips: int,
                     body: list[BodyOp] | None) -> None:
    u = unroll
    step = 32 * u
    a.mov_rr(RAX, RDI)
    a.mov_rr(RDX, RSI)
    a.mov_rr(RCX, R10)
    if op is Operation.FMA:
        a.mov_rr(RBX, R9)
    a.mov_ri(R11, trips)
    a.label(label)
    for k in range(u):
        a.vmovupd_load(k, RAX, 32 * k)
        if body is not None:
            body.append(BodyOp(k, "vmovupd", k, ()))
    for k in range(u):
        a.vmovupd_load(u + k, RDX, 32 * k)
        if body is not None:
            body.append(BodyOp(k, "vmovupd", u + k, ()))
    if op is Operation.FMA:
        for k in range(u):
            a.vmovupd_load(2 * u + k, RBX, 32 * k)
            if body is not None:
                body.append(BodyOp(k, "vmovupd", 2 * u + k, ()))
    for k in range(u):
        _emit_arith(a, op, 2 * u + k, k, u + k)
        if body is not None:
            srcs = (2 * u + k, k, u + k) if op is Operation.FMA else (k, u + k)
            mnemonic = "vfmadd231pd" if op is Operation.FMA else _ARITH[op]
            body.append(BodyOp(k, mnemonic, 2 * u + k, srcs))
    for k in range(u):
        a.vmovupd_store(RCX, 32 * k, 2 * u + k)
        if body is not None:
            body.append(BodyOp(k, "vmovupd", None, (2 * u + k,)))
    a.add_ri(RAX, step)
    a.add_ri(RDX, step)
    a.add_ri(RCX, step)
    if op is Operation.FMA:
        a.add_ri(RBX, step)
    a.sub_ri(R11, 1)
    a.jne(label)


def _emit_memc(op: Operation, vector_length: int,
               unroll: int) -> tuple[x86.Assembler, list[BodyOp]]:
    trips = vector_length // (_LANES_PER_AVX * unroll)
    a = x86.Assembler()
    body: list[BodyOp] = []
    a.comment(f"{op.value} load/store kernel, {vector_length} lanes per pass")
    a.mov_rr(R10, RCX)
    a.mov_rr(R9, RDX)
    if op is Operation.FMA:
        a.push_r(RBX)
    a.comment("warm pass")
    _emit_memc_inner(a, op, unroll, "warm", trips, None)
    emit_timing_start(a)
    a.label("outer")
    _emit_memc_inner(a, op, unroll, "inner", trips, body)
    a.sub_ri(R8, 1)
    a.jne("outer")
    emit_timing_end(a)
    if op is Operation.FMA:
        a.pop_r(RBX)
    a.vzeroupper()
    a.ret()
    return a, body


_cache: dict[tuple[Operation, KernelVariant, int, int], CompiledKernel] = {}

_SIGNATURE = (
    ctypes.POINTER(ctypes.c_double),  # lhs
    ctypes.POINTER(ctypes.c_double),  # rhs
    ctypes.POINTER(ctypes.c_double),  # addend (FMA only; may be NULL)
    ctypes.POINTER(ctypes.c_double),  # out
    ctypes.c_uint64,                  # repetitions
)


def build_kernel(spec: KernelSpec) -> CompiledKernel:
    key = (spec.op, spec.variant, spec.vector_length, spec.unroll)
    cached = _cache.get(key)
    if cached is not None:
        return cached
    jit.require_host()
    if spec.variant is KernelVariant.REG_ASM:
        a, body = _emit_regasm(spec.op, spec.unroll)
    else:
        a, body = _emit_memc(spec.op, spec.vector_length, spec.unroll)
    fn = jit.JitFunction(a.finish(), ctypes.c_uint64, _SIGNATURE, a.listing())
    kernel = CompiledKernel(
        op=spec.op, variant=spec.variant, vector_length=spec.vector_length,
        unroll=spec.unroll, fn=fn, listing=a.listing(), body=tuple(body))
    _cache[key] = kernel
    return kernel


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelRun:
    """One timed kernel invocation."""

    spec: KernelSpec
    operands: OperandSet
    env: fpenv.FpEnvConfig
    raw_cycles: int
    outputs: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.raw_cycles <= 0:
            raise ValueError("kernel reported a non-positive tick count")

    @property
    def scalar_ops(self) -> int:
        return self.spec.scalar_ops


def _aligned_doubles(values, alignment: int = 32):
    n = len(values)
    backing = (ctypes.c_byte * (8 * n + alignment))()
    addr = ctypes.addressof(backing)
    offset = (-addr) % alignment
    ptr = ctypes.cast(addr + offset, ctypes.POINTER(ctypes.c_double))
    for i, v in enumerate(values):
        ptr[i] = v
    return backing, ptr


def required_feature(op: Operation) -> str:
    return "fma3" if op is Operation.FMA else "avx"


def check_features(op: Operation, features: hwinfo.FeatureSet) -> None:
    if op is Operation.FMA:
        if not features.fma3:
            raise MissingFeature("FMA kernels need the FMA3 instruction set")
    elif not features.avx:
        raise MissingFeature(f"{op.value} kernels need AVX")


def run_kernel(spec: KernelSpec, operands: OperandSet,
               env: fpenv.FpEnvConfig, *, check_env: bool = True,
               features: hwinfo.FeatureSet | None = None) -> KernelRun:
    """Execute one kernel invocation under an already-applied environment."""
    if operands.op is not spec.op:
        raise OperandMismatch(
            f"operands are for {operands.op.value}, kernel is {spec.op.value}")
    if operands.vector_length != spec.vector_length:
        raise OperandMismatch(
            f"kernel holds {spec.vector_length} lanes, operands have "
            f"{operands.vector_length}")
    check_features(spec.op, features or hwinfo.detect_features())
    if check_env and fpenv.read_env() != env:
        raise EnvMismatch("live MXCSR does not match the requested environment")
    kernel = build_kernel(spec)
    keep_lhs, lhs = _aligned_doubles(operands.lhs_floats())
    keep_rhs, rhs = _aligned_doubles(operands.rhs_floats())
    addend_floats = operands.addend_floats()
    if addend_floats is not None:
        keep_aux, aux = _aligned_doubles(addend_floats)
    else:
        keep_aux, aux = None, None
    keep_out, out = _aligned_doubles([0.0] * spec.vector_length)
    ticks = kernel.fn(lhs, rhs, aux, out, spec.repetitions)
    if check_env and fpenv.read_env() != env:
        raise EnvMismatch("MXCSR drifted while the kernel ran")
    outputs = tuple(out[i] for i in range(spec.vector_length))
    del keep_lhs, keep_rhs, keep_aux, keep_out
    return KernelRun(spec=spec, operands=operands, env=env,
                     raw_cycles=int(ticks), outputs=outputs)


# ---------------------------------------------------------------------------
# analytic throughput model for the load/store-bound shape
# ---------------------------------------------------------------------------

def predict_memc_cycles(op: Operation, *, load_cycles: float = 1.0,
                        load_ports: int = 2, store_cycles: float = 2.0,
                        arith_recip_throughput: float = 1.0) -> float:
    """Predicted cycles per scalar op for the MemC shape on a machine where
    an AVX load costs one cycle and an AVX store two.

    Each AVX iteration moves two input loads and one store and issues one
    arithmetic op; the slowest of those streams bounds the iteration, and
    one iteration covers four scalar lanes.  Division and FMA are bound by
    the arithmetic pipe instead, which this transfer model cannot predict.
    """
    if op in (Operation.DIV, Operation.FMA):
        raise UnmodeledOp(
            f"the transfer-bound model does not cover {op.value}")
    per_iteration = max(
        2 * load_cycles / load_ports,
        store_cycles,
        arith_recip_throughput,
    )
    return per_iteration / _LANES_PER_AVX


def dump_kernels(ops=None, variants=None, unroll: int = 4,
                 memc_vector_length: int = 256) -> str:
    """Disassembly-style listings of the generated kernels."""
    ops = tuple(ops) if ops else tuple(Operation)
    variants = tuple(variants) if variants else tuple(KernelVariant)
    sections = []
    for op in ops:
        for variant in variants:
            u = min(unroll, KernelSpec._max_unroll(op, variant))
            if variant is KernelVariant.REG_ASM:
                spec = KernelSpec(op, variant, _LANES_PER_AVX * u, u, 1,
                                  min_scalar_ops=1)
            else:
                spec = KernelSpec(op, variant, memc_vector_length, u, 1,
                                  min_scalar_ops=1)
            kernel = build_kernel(spec)
            header = (f"== {op.value} {variant.value} "
                      f"vl={spec.vector_length} unroll={spec.unroll} ==")
            sections.append(header + "\n" + kernel.listing)
    return "\n\n".join(sections) + "\n"
