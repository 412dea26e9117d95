"""Cycle costs of AVX/FMA double-precision operations by operand class.

The package measures, with generated in-register and load/store-bound
kernels timed by the TSC from inside the code itself, how many cycles one
double-precision Add/Mul/Div/FMA costs when its operands or result are
normalized, overflowing, underflowing, denormal, NaN, or divided by zero,
with flush-to-zero and denormals-are-zero switchable per measurement, and
compares the outcome against a bundled reference dataset from four server
microarchitectures.
"""

from . import errors
from .cycleclock import MeasurementStats, measure, timer_overhead
from .fpenv import (
    F_D,
    NO_F_D,
    FpEnvConfig,
    env_key,
    env_label,
    read_env,
    read_raw,
    with_env,
)
from .fpmodel import (
    EXTENDED_ROWS,
    TABLE_ROWS,
    Bits64,
    OperandClass,
    OperandSet,
    Operation,
    OutcomeClass,
    applicable_outcomes,
    classify,
    eval_lane,
    fma_exact,
    make_operands,
    row_label,
    verify_outcome,
)
from .harness import (
    ENVS,
    CellResult,
    ComparisonReport,
    ExperimentMatrix,
    MatrixCell,
    RunParams,
    compare_to_reference,
    default_matrix,
    measured_penalty,
    read_records,
    run_matrix,
    write_records,
)
from .hwinfo import (
    FeatureSet,
    TscCalibration,
    calibrate_tsc,
    core_clock_anchor,
    core_tsc_ratio,
    detect_features,
    pin_to_core,
)
from .kernels import (
    CompiledKernel,
    KernelRun,
    KernelSpec,
    KernelVariant,
    build_kernel,
    dump_kernels,
    predict_memc_cycles,
    run_kernel,
    slots_independent,
)
from .reference import MachineInfo, ReferenceTable, bundled_table
from .report import RenderSpec, parse_json, render, render_comparison, summarize

__version__ = "0.1.0"

__all__ = [
    "Bits64",
    "CellResult",
    "CompiledKernel",
    "ComparisonReport",
    "ENVS",
    "EXTENDED_ROWS",
    "ExperimentMatrix",
    "F_D",
    "FeatureSet",
    "FpEnvConfig",
    "KernelRun",
    "KernelSpec",
    "KernelVariant",
    "MachineInfo",
    "MatrixCell",
    "MeasurementStats",
    "NO_F_D",
    "OperandClass",
    "OperandSet",
    "Operation",
    "OutcomeClass",
    "ReferenceTable",
    "RenderSpec",
    "RunParams",
    "TABLE_ROWS",
    "TscCalibration",
    "applicable_outcomes",
    "bundled_table",
    "build_kernel",
    "calibrate_tsc",
    "core_clock_anchor",
    "classify",
    "compare_to_reference",
    "core_tsc_ratio",
    "default_matrix",
    "detect_features",
    "dump_kernels",
    "env_key",
    "env_label",
    "errors",
    "eval_lane",
    "fma_exact",
    "make_operands",
    "measure",
    "measured_penalty",
    "parse_json",
    "pin_to_core",
    "predict_memc_cycles",
    "read_env",
    "read_raw",
    "read_records",
    "render",
    "render_comparison",
    "row_label",
    "run_kernel",
    "run_matrix",
    "slots_independent",
    "summarize",
    "timer_overhead",
    "verify_outcome",
    "with_env",
    "write_records",
]
