"""Experiment matrix construction, execution, and reference comparison.

A matrix is the cross product of (operation, outcome class, kernel shape)
cells with the two floating-point environments: FTZ+DAZ enabled ("fd") and
disabled ("no_fd").  run_matrix pins the thread, calibrates the clocks
once, then walks the cells, generating operands and applying the cell's
environment around each measurement.  Per-cell failures are captured in
the result record instead of aborting the run; only a host that cannot
run kernels at all aborts.

Results carry everything needed to re-derive the numbers: operand bit
patterns, kernel shape, raw tick counts, the applied MXCSR value, the TSC
rate, and the measured core-clock/TSC ratio.
"""

from __future__ import annotations

import datetime as _dt
import json
import random
from dataclasses import dataclass, field

from . import fpenv, hwinfo, jit
from .cycleclock import MeasurementStats, measure
from .errors import EnvMismatch, FpCostError, MissingFeature, UnsupportedHost
from .fpmodel import (
    EXTENDED_ROWS,
    OperandSet,
    Operation,
    OutcomeClass,
    TABLE_ROWS,
    make_operands,
)
from .kernels import KernelSpec, KernelVariant, run_kernel
from .reference import ReferenceTable, bundled_table

RECORD_SCHEMA = 1

ENVS: dict[str, fpenv.FpEnvConfig] = {
    "fd": fpenv.F_D,
    "no_fd": fpenv.NO_F_D,
    "ftz": fpenv.FpEnvConfig(ftz=True, daz=False),
    "daz": fpenv.FpEnvConfig(ftz=False, daz=True),
}

REFERENCE_ENV_KEYS = ("fd", "no_fd")

OP_ORDER = (Operation.ADD, Operation.MUL, Operation.DIV, Operation.FMA)


@dataclass(frozen=True)
class MatrixCell:
    op: Operation
    outcome: OutcomeClass
    variant: KernelVariant
    env_key: str

    def __post_init__(self) -> None:
        if self.env_key not in ENVS:
            raise ValueError(f"unknown environment key {self.env_key!r}")

    @property
    def env(self) -> fpenv.FpEnvConfig:
        return ENVS[self.env_key]

    def key(self) -> tuple[str, str, str, str]:
        return (self.op.value, self.outcome.value, self.variant.value,
                self.env_key)


@dataclass(frozen=True)
class RunParams:
    samples: int = 9
    warmups: int = 2
    max_attempts: int = 3
    min_scalar_ops: int = 10_000_000
    regasm_unroll: int = 4
    memc_vector_length: int = 256
    memc_unroll: int = 4
    core: int | None = 0
    shuffle: bool = False

    def __post_init__(self) -> None:
        if self.samples < 1 or self.warmups < 0:
            raise ValueError("samples must be >= 1 and warmups >= 0")
        if self.min_scalar_ops < 1:
            raise ValueError("min_scalar_ops must be positive")


@dataclass(frozen=True)
class ExperimentMatrix:
    cells: tuple[MatrixCell, ...]
    run_params: RunParams = field(default_factory=RunParams)
    seed: int = 0

    def __post_init__(self) -> None:
        seen = set()
        for cell in self.cells:
            if cell in seen:
                raise ValueError(f"duplicate cell {cell.key()}")
            seen.add(cell)


def default_matrix(features: hwinfo.FeatureSet, *,
                   run_params: RunParams | None = None,
                   seed: int = 0,
                   ops: tuple[Operation, ...] | None = None,
                   outcomes: tuple[OutcomeClass, ...] | None = None,
                   variants: tuple[KernelVariant, ...] | None = None,
                   env_keys: tuple[str, ...] = ("fd", "no_fd"),
                   extended: bool = False) -> ExperimentMatrix:
    """The full measurement plan for this host.

    Per operation: one load/store-bound cell for the normalized case (the
    compiled-loop baseline; FMA has none) and one register-resident cell
    per outcome class, each under every requested environment.  FMA cells
    appear only when the host has FMA3, unless explicitly requested.
    """
    if ops is None:
        ops = tuple(op for op in OP_ORDER
                    if op is not Operation.FMA or features.fma3)
    elif Operation.FMA in ops and not features.fma3:
        raise MissingFeature("FMA cells requested but the host lacks FMA3")
    for env_key in env_keys:
        if env_key not in ENVS:
            raise ValueError(f"unknown environment key {env_key!r}")
    cells: list[MatrixCell] = []
    for op in OP_ORDER:
        if op not in ops:
            continue
        rows = TABLE_ROWS[op] + (EXTENDED_ROWS[op] if extended else ())
        for outcome in rows:
            if outcomes is not None and outcome not in outcomes:
                continue
            row_variants = []
            if op is not Operation.FMA and outcome is OutcomeClass.NORMALIZED:
                row_variants.append(KernelVariant.MEM_C)
            row_variants.append(KernelVariant.REG_ASM)
            for variant in row_variants:
                if variants is not None and variant not in variants:
                    continue
                for env_key in env_keys:
                    cells.append(MatrixCell(op, outcome, variant, env_key))
    return ExperimentMatrix(
        cells=tuple(cells),
        run_params=run_params or RunParams(),
        seed=seed,
    )


@dataclass(frozen=True)
class CellResult:
    """One measured (or failed) matrix cell, fully self-describing."""

    cell: MatrixCell
    vector_length: int
    unroll: int
    repetitions: int
    operands: dict
    mxcsr: int | None
    stats: MeasurementStats | None
    result_sample: float | None
    tsc_hz: float
    core_tsc_ratio: float
    error: dict | None = None
    timestamp: str = ""
    schema: int = RECORD_SCHEMA

    @property
    def ok(self) -> bool:
        return self.error is None and self.stats is not None

    @property
    def median_tsc_cycles(self) -> float | None:
        return self.stats.median if self.stats is not None else None

    @property
    def median_core_cycles(self) -> float | None:
        """Median converted from TSC ticks to core-clock cycles."""
        if self.stats is None:
            return None
        return self.stats.median * self.core_tsc_ratio

    def to_dict(self) -> dict:
        return {
            "schema": self.schema,
            "op": self.cell.op.value,
            "outcome": self.cell.outcome.value,
            "variant": self.cell.variant.value,
            "env": self.cell.env_key,
            "vector_length": self.vector_length,
            "unroll": self.unroll,
            "repetitions": self.repetitions,
            "operands": self.operands,
            "mxcsr": self.mxcsr,
            "stats": self.stats.to_dict() if self.stats else None,
            "result_sample": self.result_sample,
            "tsc_hz": self.tsc_hz,
            "core_tsc_ratio": self.core_tsc_ratio,
            "error": self.error,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CellResult":
        stats = data.get("stats")
        return cls(
            cell=MatrixCell(
                op=Operation(data["op"]),
                outcome=OutcomeClass(data["outcome"]),
                variant=KernelVariant(data["variant"]),
                env_key=data["env"],
            ),
            vector_length=data["vector_length"],
            unroll=data["unroll"],
            repetitions=data["repetitions"],
            operands=data["operands"],
            mxcsr=data["mxcsr"],
            stats=MeasurementStats.from_dict(stats) if stats else None,
            result_sample=data["result_sample"],
            tsc_hz=data["tsc_hz"],
            core_tsc_ratio=data["core_tsc_ratio"],
            error=data["error"],
            timestamp=data["timestamp"],
            schema=data["schema"],
        )


def _cell_spec(cell: MatrixCell, params: RunParams) -> KernelSpec:
    if cell.variant is KernelVariant.REG_ASM:
        return KernelSpec.regasm(cell.op, unroll=params.regasm_unroll,
                                 min_scalar_ops=params.min_scalar_ops)
    return KernelSpec.memc(cell.op, vector_length=params.memc_vector_length,
                           unroll=params.memc_unroll,
                           min_scalar_ops=params.min_scalar_ops)


def run_matrix(matrix: ExperimentMatrix, *,
               features: hwinfo.FeatureSet | None = None,
               calibration: hwinfo.TscCalibration | None = None,
               core_ratio: float | None = None,
               progress=None) -> list[CellResult]:
    """Measure every cell of a matrix; per-cell errors become records."""
    jit.require_host()
    features = features or hwinfo.detect_features()
    if not features.avx:
        raise UnsupportedHost("the measurement kernels require AVX")
    params = matrix.run_params

    def note(message: str) -> None:
        if progress is not None:
            progress(message)

    pin = None
    if params.core is not None:
        try:
            pin = hwinfo.pin_to_core(params.core)
            note(f"pinned to core {params.core}")
        except FpCostError as exc:
            note(f"running unpinned: {exc}")
    try:
        calibration = calibration or hwinfo.calibrate_tsc()
        anchor = "caller"
        if core_ratio is None:
            core_ratio, anchor = hwinfo.core_clock_anchor()
            if anchor == hwinfo.NOMINAL_ANCHOR:
                note("add-chain clock anchor implausible on this host; "
                     "treating the TSC rate as the core clock")
        note(f"tsc {calibration.tsc_hz / 1e9:.3f} GHz, "
             f"core/tsc ratio {core_ratio:.3f} ({anchor})")
        cells = list(matrix.cells)
        if params.shuffle:
            random.Random(matrix.seed).shuffle(cells)
        mxcsr_before = fpenv.read_raw()
        results: list[CellResult] = []
        for cell in cells:
            results.append(_run_cell(cell, matrix, features, calibration,
                                     core_ratio, note))
        mxcsr_after = fpenv.read_raw()
        # the interpreter's own arithmetic (operand generation, statistics)
        # legitimately raises sticky flags; control bits must be untouched
        control = ~fpenv.STATUS_FLAG_BITS
        if (mxcsr_after & control) != (mxcsr_before & control):
            fpenv.write_raw(mxcsr_before)
            raise EnvMismatch(
                f"MXCSR control bits left dirty after the run: "
                f"{mxcsr_before:#06x} -> {mxcsr_after:#06x}")
        fpenv.write_raw(mxcsr_before)
        return results
    finally:
        if pin is not None:
            pin.restore()


def _run_cell(cell: MatrixCell, matrix: ExperimentMatrix,
              features: hwinfo.FeatureSet,
              calibration: hwinfo.TscCalibration, core_ratio: float,
              note) -> CellResult:
    params = matrix.run_params
    timestamp = _dt.datetime.now(_dt.timezone.utc).isoformat()
    spec: KernelSpec | None = None
    operands: OperandSet | None = None
    try:
        spec = _cell_spec(cell, params)
        operands = make_operands(cell.op, cell.outcome, spec.vector_length,
                                 seed=matrix.seed)
        last_run: dict = {}

        def invoke():
            run = run_kernel(spec, operands, cell.env, features=features)
            last_run["run"] = run
            return run

        with fpenv.with_env(cell.env) as applied:
            stats = measure(invoke, samples=params.samples,
                            warmups=params.warmups,
                            max_attempts=params.max_attempts)
        run = last_run["run"]
        result = CellResult(
            cell=cell,
            vector_length=spec.vector_length,
            unroll=spec.unroll,
            repetitions=spec.repetitions,
            operands=operands.to_hex(),
            mxcsr=applied,
            stats=stats,
            result_sample=run.outputs[0],
            tsc_hz=calibration.tsc_hz,
            core_tsc_ratio=core_ratio,
            timestamp=timestamp,
        )
        note(f"{'/'.join(result.cell.key())}: median "
             f"{stats.median:.4f} tsc-cycles/op")
        return result
    except UnsupportedHost:
        raise
    except FpCostError as exc:
        note(f"{'/'.join(cell.key())}: {type(exc).__name__}: {exc}")
        return CellResult(
            cell=cell,
            vector_length=spec.vector_length if spec else 0,
            unroll=spec.unroll if spec else 0,
            repetitions=spec.repetitions if spec else 0,
            operands=operands.to_hex() if operands else {},
            mxcsr=None,
            stats=None,
            result_sample=None,
            tsc_hz=calibration.tsc_hz,
            core_tsc_ratio=core_ratio,
            error={"type": type(exc).__name__, "message": str(exc)},
            timestamp=timestamp,
        )


# ---------------------------------------------------------------------------
# records on disk
# ---------------------------------------------------------------------------

def write_records(path, results: list[CellResult]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for result in results:
            fh.write(json.dumps(result.to_dict(), sort_keys=True) + "\n")


def read_records(path) -> list[CellResult]:
    results = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                results.append(CellResult.from_dict(json.loads(line)))
    return results


# ---------------------------------------------------------------------------
# comparison against the reference dataset
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CellComparison:
    cell: MatrixCell
    measured_median: float | None
    measured_penalty: float | None
    reference_value: float | None
    reference_penalty: float | None
    verdict: str  # "match" | "deviation" | "not-comparable" | "error"


@dataclass(frozen=True)
class ComparisonReport:
    machine: str
    tolerance: float
    entries: tuple[CellComparison, ...]

    def count(self, verdict: str) -> int:
        return sum(1 for e in self.entries if e.verdict == verdict)


def measured_penalty(results: list[CellResult],
                     result: CellResult) -> float | None:
    """Slowdown relative to the normalized cell measured under the same
    operation, shape, and environment in the same result set."""
    if result.stats is None:
        return None
    if result.cell.outcome is OutcomeClass.NORMALIZED:
        return 1.0
    for other in results:
        if (other.cell.op is result.cell.op
                and other.cell.outcome is OutcomeClass.NORMALIZED
                and other.cell.variant is result.cell.variant
                and other.cell.env_key == result.cell.env_key
                and other.stats is not None):
            return result.stats.median / other.stats.median
    return None


def compare_to_reference(results: list[CellResult], machine: str, *,
                         table: ReferenceTable | None = None,
                         tolerance: float = 2.0) -> ComparisonReport:
    """Judge measurements against a reference machine in penalty terms.

    Absolute cycle counts do not transfer between microarchitectures, but
    the *structure* does: which outcome classes are penalized and roughly
    how hard.  A cell matches when its measured penalty and the reference
    machine's penalty agree within the given factor; cells without a
    reference row (or without a usable baseline) are not comparable.
    """
    table = table or bundled_table()
    table.machine(machine)
    entries = []
    for result in results:
        cell = result.cell
        if result.stats is None:
            entries.append(CellComparison(cell, None, None, None, None,
                                          "error"))
            continue
        m_penalty = measured_penalty(results, result)
        if cell.env_key in REFERENCE_ENV_KEYS:
            r_value = table.lookup(machine, cell.op, cell.outcome,
                                   cell.variant, cell.env_key)
            r_penalty = table.penalty(machine, cell.op, cell.outcome,
                                      cell.variant, cell.env_key)
        else:
            r_value = r_penalty = None
        if m_penalty is None or r_penalty is None:
            verdict = "not-comparable"
        else:
            hi = max(m_penalty, r_penalty)
            lo = min(m_penalty, r_penalty)
            verdict = "match" if hi <= lo * tolerance else "deviation"
        entries.append(CellComparison(
            cell=cell,
            measured_median=result.stats.median,
            measured_penalty=m_penalty,
            reference_value=r_value,
            reference_penalty=r_penalty,
            verdict=verdict,
        ))
    return ComparisonReport(machine=machine, tolerance=tolerance,
                            entries=tuple(entries))
