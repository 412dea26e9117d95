"""Kernel specs, generated code audits, and execution semantics."""

import math
import struct

import pytest

from fpcost import fpenv, fpmodel, hwinfo, kernels
from fpcost.errors import (
    EnvMismatch,
    MissingFeature,
    OperandMismatch,
    UnmodeledOp,
)
from fpcost.fpmodel import Operation, OutcomeClass, make_operands
from fpcost.kernels import KernelSpec, KernelVariant

import hwsupport

OPS = tuple(Operation)


def spec_for(op, variant, min_scalar_ops=10_000):
    if variant is KernelVariant.REG_ASM:
        return KernelSpec.regasm(op, min_scalar_ops=min_scalar_ops)
    return KernelSpec.memc(op, min_scalar_ops=min_scalar_ops)


# ---------------------------------------------------------------------------
# spec validation
# ---------------------------------------------------------------------------

def test_regasm_factory_shapes():
    spec = KernelSpec.regasm(Operation.ADD)
    assert spec.vector_length == 16
    assert spec.unroll == 4
    assert spec.scalar_ops >= 10_000_000
    assert spec.scalar_ops == spec.repetitions * 16
    wide = KernelSpec.regasm(Operation.MUL, unroll=5, min_scalar_ops=100)
    assert wide.vector_length == 20
    assert wide.scalar_ops == 100


def test_memc_factory_shapes():
    spec = KernelSpec.memc(Operation.ADD)
    assert spec.vector_length == 256
    assert spec.variant is KernelVariant.MEM_C
    assert spec.scalar_ops >= 10_000_000


def test_spec_rejects_nonpositive_repetitions():
    with pytest.raises(ValueError):
        KernelSpec(Operation.ADD, KernelVariant.REG_ASM, 16, 4, 0,
                   min_scalar_ops=1)


def test_spec_unroll_floor_hides_latency():
    with pytest.raises(ValueError):
        KernelSpec(Operation.ADD, KernelVariant.REG_ASM, 12, 3, 10,
                   min_scalar_ops=1)
    # division is slow enough that two slots already cover its latency
    spec = KernelSpec(Operation.DIV, KernelVariant.REG_ASM, 8, 2, 10,
                      min_scalar_ops=1)
    assert spec.scalar_ops == 80


def test_spec_unroll_register_budget():
    with pytest.raises(ValueError):
        KernelSpec.regasm(Operation.ADD, unroll=6, min_scalar_ops=1)
    # FMA needs four register groups, capping unroll one lower
    KernelSpec.regasm(Operation.ADD, unroll=5, min_scalar_ops=1)
    with pytest.raises(ValueError):
        KernelSpec.regasm(Operation.FMA, unroll=5, min_scalar_ops=1)
    with pytest.raises(ValueError):
        KernelSpec.memc(Operation.ADD, unroll=5, min_scalar_ops=1)


def test_spec_regasm_lane_count_is_fixed():
    with pytest.raises(ValueError):
        KernelSpec(Operation.ADD, KernelVariant.REG_ASM, 20, 4, 10,
                   min_scalar_ops=1)


def test_spec_memc_lane_count_granularity():
    with pytest.raises(ValueError):
        KernelSpec.memc(Operation.ADD, vector_length=100, min_scalar_ops=1)
    with pytest.raises(ValueError):
        KernelSpec.memc(Operation.ADD, vector_length=8, min_scalar_ops=1)


def test_spec_memc_l1_budget():
    # three 512-lane double arrays fit in 12 KiB, four exactly fill 16 KiB
    KernelSpec.memc(Operation.ADD, vector_length=512, min_scalar_ops=1)
    KernelSpec.memc(Operation.FMA, vector_length=512, min_scalar_ops=1)
    with pytest.raises(ValueError):
        KernelSpec.memc(Operation.ADD, vector_length=688, min_scalar_ops=1)
    with pytest.raises(ValueError):
        KernelSpec.memc(Operation.FMA, vector_length=528, min_scalar_ops=1)


def test_spec_enforces_scalar_op_floor():
    with pytest.raises(ValueError):
        KernelSpec(Operation.ADD, KernelVariant.REG_ASM, 16, 4, 10)


def test_kernel_run_rejects_nonpositive_ticks():
    spec = KernelSpec.regasm(Operation.ADD, min_scalar_ops=16)
    operands = make_operands(Operation.ADD, OutcomeClass.NORMALIZED, 16)
    with pytest.raises(ValueError):
        kernels.KernelRun(spec=spec, operands=operands, env=fpenv.NO_F_D,
                          raw_cycles=0, outputs=(0.0,) * 16)


# ---------------------------------------------------------------------------
# feature gating (pure logic, no execution)
# ---------------------------------------------------------------------------

def _features(avx=False, fma3=False):
    return hwinfo.FeatureSet(vendor="t", brand="t", avx=avx, avx2=False,
                             fma3=fma3, fma4=False, invariant_tsc=False)


def test_required_feature():
    assert kernels.required_feature(Operation.FMA) == "fma3"
    for op in (Operation.ADD, Operation.MUL, Operation.DIV):
        assert kernels.required_feature(op) == "avx"


def test_check_features():
    kernels.check_features(Operation.ADD, _features(avx=True))
    kernels.check_features(Operation.FMA, _features(avx=True, fma3=True))
    with pytest.raises(MissingFeature):
        kernels.check_features(Operation.ADD, _features())
    with pytest.raises(MissingFeature):
        kernels.check_features(Operation.FMA, _features(avx=True))


def test_run_kernel_refuses_missing_features_before_any_jit():
    spec = KernelSpec.regasm(Operation.ADD, min_scalar_ops=16)
    operands = make_operands(Operation.ADD, OutcomeClass.NORMALIZED, 16)
    with pytest.raises(MissingFeature):
        kernels.run_kernel(spec, operands, fpenv.NO_F_D,
                           features=_features())


def test_run_kernel_refuses_mismatched_operands():
    spec = KernelSpec.regasm(Operation.ADD, min_scalar_ops=16)
    wrong_op = make_operands(Operation.MUL, OutcomeClass.NORMALIZED, 16)
    with pytest.raises(OperandMismatch):
        kernels.run_kernel(spec, wrong_op, fpenv.NO_F_D,
                           features=_features(avx=True))
    wrong_width = make_operands(Operation.ADD, OutcomeClass.NORMALIZED, 8)
    with pytest.raises(OperandMismatch):
        kernels.run_kernel(spec, wrong_width, fpenv.NO_F_D,
                           features=_features(avx=True))


# ---------------------------------------------------------------------------
# throughput model for the load/store shape
# ---------------------------------------------------------------------------

def test_predict_memc_cycles_store_bound_default():
    for op in (Operation.ADD, Operation.MUL):
        assert kernels.predict_memc_cycles(op) == 0.5


def test_predict_memc_cycles_other_bounds():
    assert kernels.predict_memc_cycles(
        Operation.ADD, load_cycles=4.0, load_ports=1) == 2.0
    assert kernels.predict_memc_cycles(
        Operation.ADD, arith_recip_throughput=8.0) == 2.0


def test_predict_memc_cycles_unmodeled_ops():
    for op in (Operation.DIV, Operation.FMA):
        with pytest.raises(UnmodeledOp):
            kernels.predict_memc_cycles(op)


# ---------------------------------------------------------------------------
# slot independence (audits the recorded loop body, no execution)
# ---------------------------------------------------------------------------

def _fake_kernel(body):
    return kernels.CompiledKernel(
        op=Operation.ADD, variant=KernelVariant.REG_ASM, vector_length=16,
        unroll=4, fn=None, listing="", body=tuple(body))


def test_slots_independent_detects_cross_slot_reads():
    good = _fake_kernel([
        kernels.BodyOp(0, "vaddpd", 8, (0, 4)),
        kernels.BodyOp(1, "vaddpd", 9, (1, 5)),
    ])
    assert kernels.slots_independent(good)
    bad = _fake_kernel([
        kernels.BodyOp(0, "vaddpd", 8, (0, 4)),
        kernels.BodyOp(1, "vaddpd", 9, (8, 5)),  # reads slot 0's result
    ])
    assert not kernels.slots_independent(bad)
    shared_dst = _fake_kernel([
        kernels.BodyOp(0, "vaddpd", 8, (0, 4)),
        kernels.BodyOp(1, "vaddpd", 8, (1, 5)),
    ])
    assert not kernels.slots_independent(shared_dst)


@hwsupport.needs_jit
@pytest.mark.parametrize("variant", tuple(KernelVariant), ids=lambda v: v.value)
@pytest.mark.parametrize("op", OPS, ids=lambda o: o.value)
def test_generated_kernels_have_independent_slots(op, variant):
    kernel = kernels.build_kernel(spec_for(op, variant))
    assert kernels.slots_independent(kernel)
    assert kernel.body


@hwsupport.needs_jit
def test_build_kernel_caches_by_shape():
    a = kernels.build_kernel(KernelSpec.regasm(Operation.ADD,
                                               min_scalar_ops=10_000))
    b = kernels.build_kernel(KernelSpec.regasm(Operation.ADD,
                                               min_scalar_ops=64))
    assert a is b  # repetition count is a call argument, not kernel shape
    c = kernels.build_kernel(KernelSpec.regasm(Operation.ADD, unroll=5,
                                               min_scalar_ops=64))
    assert c is not a


@hwsupport.needs_jit
def test_timing_is_inside_the_generated_code():
    for variant in KernelVariant:
        listing = kernels.build_kernel(spec_for(Operation.ADD, variant)).listing
        assert "rdtsc" in listing
        assert "rdtscp" in listing
        assert listing.index("rdtsc") < listing.index("rdtscp")


@hwsupport.needs_jit
def test_dump_kernels_covers_every_shape():
    text = kernels.dump_kernels()
    for op in OPS:
        for variant in KernelVariant:
            assert f"== {op.value} {variant.value} " in text
    assert "vdivpd" in text
    assert "vfmadd231pd" in text
    assert text.endswith("\n")


# ---------------------------------------------------------------------------
# execution semantics
# ---------------------------------------------------------------------------

def _bits(v: float) -> bytes:
    return struct.pack("<d", v)


def _subnormal(v: float) -> bool:
    return 0.0 < abs(v) < fpmodel.MIN_NORMAL


def _daz(v: float) -> float:
    return math.copysign(0.0, v) if _subnormal(v) else v


def expected_lane(op, env, lhs, rhs, addend):
    """What the hardware must produce for one lane under an environment."""
    if env.daz:
        lhs, rhs = _daz(lhs), _daz(rhs)
        if addend is not None:
            addend = _daz(addend)
    result = fpmodel.eval_lane(op, lhs, rhs, addend)
    if env.ftz and _subnormal(result):
        return math.copysign(0.0, result)
    return result


def assert_lanes_match(run, env):
    operands = run.operands
    addends = operands.addend_floats()
    for i, (got, lhs, rhs) in enumerate(zip(run.outputs,
                                            operands.lhs_floats(),
                                            operands.rhs_floats())):
        addend = addends[i] if addends is not None else None
        want = expected_lane(run.spec.op, env, lhs, rhs, addend)
        if math.isnan(want):
            assert math.isnan(got), f"lane {i}: expected NaN, got {got!r}"
        else:
            assert _bits(got) == _bits(want), (
                f"lane {i}: {got!r} != {want!r} "
                f"({lhs!r}, {rhs!r}, {addend!r})")


ALL_PAIRS = [(op, outcome)
             for op in OPS
             for outcome in fpmodel.applicable_outcomes(op, extended=True)]


@pytest.mark.parametrize("env", [fpenv.NO_F_D, fpenv.F_D],
                         ids=fpenv.env_key)
@pytest.mark.parametrize("op,outcome", ALL_PAIRS,
                         ids=lambda p: getattr(p, "value", p))
def test_register_kernel_outputs_bit_exact(op, outcome, env, features):
    if op is Operation.FMA and not hwsupport.HAS_FMA3:
        pytest.skip("hardware-gated: no FMA3")
    if not hwsupport.HAS_AVX:
        pytest.skip("hardware-gated: no usable AVX")
    spec = KernelSpec.regasm(op, min_scalar_ops=10_000)
    operands = make_operands(op, outcome, spec.vector_length, seed=3)
    with fpenv.with_env(env):
        run = kernels.run_kernel(spec, operands, env)
    assert run.raw_cycles > 0
    assert run.scalar_ops == spec.scalar_ops
    assert_lanes_match(run, env)


@pytest.mark.parametrize("op", OPS, ids=lambda o: o.value)
def test_memory_kernel_outputs_bit_exact(op, features):
    if op is Operation.FMA and not hwsupport.HAS_FMA3:
        pytest.skip("hardware-gated: no FMA3")
    if not hwsupport.HAS_AVX:
        pytest.skip("hardware-gated: no usable AVX")
    spec = KernelSpec.memc(op, min_scalar_ops=10_000)
    operands = make_operands(op, OutcomeClass.NORMALIZED, spec.vector_length)
    env = fpenv.NO_F_D
    with fpenv.with_env(env):
        run = kernels.run_kernel(spec, operands, env)
    assert_lanes_match(run, env)


@hwsupport.needs_avx
def test_wider_unroll_still_bit_exact(features):
    spec = KernelSpec.regasm(Operation.ADD, unroll=5, min_scalar_ops=10_000)
    operands = make_operands(Operation.ADD, OutcomeClass.NORMALIZED, 20)
    with fpenv.with_env(fpenv.NO_F_D):
        run = kernels.run_kernel(spec, operands, fpenv.NO_F_D)
    assert_lanes_match(run, fpenv.NO_F_D)


@hwsupport.needs_avx
def test_env_mismatch_detected(features):
    spec = KernelSpec.regasm(Operation.ADD, min_scalar_ops=10_000)
    operands = make_operands(Operation.ADD, OutcomeClass.NORMALIZED, 16)
    with fpenv.with_env(fpenv.NO_F_D):
        with pytest.raises(EnvMismatch):
            kernels.run_kernel(spec, operands, fpenv.F_D)


@hwsupport.needs_avx
def test_work_conservation(features):
    def median_ticks(min_ops):
        spec = KernelSpec.regasm(Operation.ADD, min_scalar_ops=min_ops)
        operands = make_operands(Operation.ADD, OutcomeClass.NORMALIZED, 16)
        with fpenv.with_env(fpenv.NO_F_D):
            runs = [kernels.run_kernel(spec, operands, fpenv.NO_F_D)
                    for _ in range(5)]
        return sorted(r.raw_cycles for r in runs)[2]

    single = median_ticks(400_000)
    double = median_ticks(800_000)
    assert 1.5 < double / single < 2.6
