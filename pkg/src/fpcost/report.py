"""Rendering of measurement records and comparison summaries.

All renderers are deterministic: the same result set produces the same
bytes, with rows in a fixed canonical order (operation, then table row,
then kernel shape), so rendered output can be diffed across runs.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

from .errors import EmptyResults
from .fpmodel import EXTENDED_ROWS, Operation, OutcomeClass, TABLE_ROWS, row_label
from .harness import (
    OP_ORDER,
    CellResult,
    ComparisonReport,
)
from .kernels import KernelVariant

FORMATS = ("markdown", "csv", "json")

_VARIANT_LABEL = {KernelVariant.MEM_C: "MemC", KernelVariant.REG_ASM: "RegAsm"}
_ENV_LABEL = {"fd": "F+D", "no_fd": "No F+D", "ftz": "FTZ only",
              "daz": "DAZ only"}
_ENV_ORDER = ("fd", "no_fd", "ftz", "daz")


def _envs_present(results: list[CellResult]) -> tuple[str, ...]:
    seen = {r.cell.env_key for r in results}
    return tuple(k for k in _ENV_ORDER if k in seen)


@dataclass(frozen=True)
class RenderSpec:
    format: str = "markdown"
    precision: int = 2
    value_basis: str = "tsc"  # "tsc" ticks/op or "core" cycles/op

    def __post_init__(self) -> None:
        if self.format not in FORMATS:
            raise ValueError(f"unknown format {self.format!r}; "
                             f"pick one of {', '.join(FORMATS)}")
        if self.precision < 0:
            raise ValueError("precision must be >= 0")
        if self.value_basis not in ("tsc", "core"):
            raise ValueError("value_basis must be 'tsc' or 'core'")


def _row_rank(result: CellResult) -> tuple:
    op = result.cell.op
    rows = TABLE_ROWS[op] + EXTENDED_ROWS[op]
    outcome = result.cell.outcome
    row_idx = rows.index(outcome) if outcome in rows else len(rows)
    variant_idx = 0 if result.cell.variant is KernelVariant.MEM_C else 1
    env_idx = _ENV_ORDER.index(result.cell.env_key)
    return (OP_ORDER.index(op), row_idx, variant_idx, env_idx)


def ordered_results(results: list[CellResult]) -> list[CellResult]:
    return sorted(results, key=_row_rank)


def _cell_value(result: CellResult, spec: RenderSpec) -> str:
    if result.error is not None:
        return f"error:{result.error['type']}"
    value = (result.median_core_cycles if spec.value_basis == "core"
             else result.median_tsc_cycles)
    return f"{value:.{spec.precision}f}"


def _pivot(results: list[CellResult]):
    """Group by (op, outcome, variant), with one column per environment."""
    groups: dict[tuple, dict[str, CellResult]] = {}
    for result in ordered_results(results):
        key = (result.cell.op, result.cell.outcome, result.cell.variant)
        groups.setdefault(key, {})[result.cell.env_key] = result
    return groups


def render(results: list[CellResult], spec: RenderSpec = RenderSpec()) -> str:
    """Render measurement records; the unit is cycles per scalar operation
    (TSC ticks by default, core cycles with value_basis='core')."""
    if not results:
        raise EmptyResults("no measurement records to render")
    if spec.format == "json":
        payload = [r.to_dict() for r in ordered_results(results)]
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"
    groups = _pivot(results)
    env_keys = _envs_present(results)
    if spec.format == "markdown":
        header = ["op", "case", "kernel"] + [_ENV_LABEL[k] for k in env_keys]
        lines = ["| " + " | ".join(header) + " |",
                 "|----|------|--------|" + "----:|" * len(env_keys)]
        for (op, outcome, variant), envs in groups.items():
            row = [op.value, row_label(op, outcome), _VARIANT_LABEL[variant]]
            for env_key in env_keys:
                result = envs.get(env_key)
                row.append(_cell_value(result, spec) if result else "-")
            lines.append("| " + " | ".join(row) + " |")
        return "\n".join(lines) + "\n"
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["op", "case", "kernel", "env", "cycles_per_op",
                     "min", "mean", "stddev", "samples", "unstable"])
    for (op, outcome, variant), envs in groups.items():
        for env_key in env_keys:
            result = envs.get(env_key)
            if result is None:
                continue
            if result.error is not None:
                writer.writerow([op.value, row_label(op, outcome),
                                 _VARIANT_LABEL[variant], _ENV_LABEL[env_key],
                                 f"error:{result.error['type']}",
                                 "", "", "", "", ""])
                continue
            stats = result.stats
            value = (result.median_core_cycles
                     if spec.value_basis == "core" else stats.median)
            writer.writerow([
                op.value, row_label(op, outcome), _VARIANT_LABEL[variant],
                _ENV_LABEL[env_key], f"{value:.{spec.precision}f}",
                f"{stats.minimum:.{spec.precision}f}",
                f"{stats.mean:.{spec.precision}f}",
                f"{stats.stddev:.{spec.precision}f}",
                len(stats.samples), stats.unstable,
            ])
    return out.getvalue()


def parse_json(text: str) -> list[CellResult]:
    """Inverse of render(..., format='json')."""
    return [CellResult.from_dict(entry) for entry in json.loads(text)]


# ---------------------------------------------------------------------------
# comparison rendering
# ---------------------------------------------------------------------------

_PENALTY_ROWS: tuple[tuple[Operation, OutcomeClass], ...] = (
    (Operation.ADD, OutcomeClass.UNDERFLOW),
    (Operation.MUL, OutcomeClass.UNDERFLOW),
    (Operation.DIV, OutcomeClass.UNDERFLOW),
    (Operation.MUL, OutcomeClass.DENORMAL_LHS),
    (Operation.MUL, OutcomeClass.DENORMAL_RHS),
    (Operation.DIV, OutcomeClass.DENORMAL_LHS),
    (Operation.DIV, OutcomeClass.DENORMAL_RHS),
    (Operation.DIV, OutcomeClass.DENORMAL_BOTH),
    (Operation.FMA, OutcomeClass.FMA_ADD_UNDERFLOW),
)


def _reproduction_verdict(penalty: float, reference: float | None) -> str:
    # judged against the reference machine's own penalty when there is
    # one: division starts from a ~5 cycle baseline, so even a faithful
    # reproduction of its slowdown is under 10x while add/mul reach 100x+
    if reference is not None and reference > 1.0:
        if penalty >= 100.0 or penalty >= 0.5 * reference:
            return "fully reproduced"
        if penalty >= 1.0 + 0.1 * (reference - 1.0):
            return "reproduced with a weaker penalty"
        return "not reproduced"
    if penalty >= 100.0:
        return "fully reproduced"
    if penalty >= 20.0:
        return "reproduced with a weaker penalty"
    return "not reproduced"


def summarize(report: ComparisonReport) -> str:
    """Human-readable verdict: reference agreement plus whether the
    gradual-underflow slowdowns show up on this machine."""
    lines = [
        f"reference machine: {report.machine} "
        f"(penalty tolerance factor {report.tolerance:g})",
        f"cells: {len(report.entries)} total, {report.count('match')} match, "
        f"{report.count('deviation')} deviate, "
        f"{report.count('not-comparable')} not comparable, "
        f"{report.count('error')} errors",
    ]
    by_key = {
        (e.cell.op, e.cell.outcome, e.cell.variant, e.cell.env_key): e
        for e in report.entries
    }
    for op, outcome in _PENALTY_ROWS:
        entry = by_key.get((op, outcome, KernelVariant.REG_ASM, "no_fd"))
        if entry is None or entry.measured_penalty is None:
            continue
        penalty = entry.measured_penalty
        label = f"{op.value} {row_label(op, outcome)} (No F+D)"
        lines.append(f"{label}: {penalty:.1f}x slowdown - "
                     f"{_reproduction_verdict(penalty, entry.reference_penalty)}")
    fma_mul = by_key.get((Operation.FMA, OutcomeClass.FMA_MUL_UNDERFLOW,
                          KernelVariant.REG_ASM, "no_fd"))
    if fma_mul is not None and fma_mul.measured_penalty is not None:
        penalty = fma_mul.measured_penalty
        if penalty <= 1.5:
            verdict = "no penalty, as expected for an unconsumed intermediate"
        else:
            verdict = "unexpected penalty"
        lines.append(
            f"fma {row_label(Operation.FMA, OutcomeClass.FMA_MUL_UNDERFLOW)} "
            f"(No F+D): {penalty:.2f}x - {verdict}")
    return "\n".join(lines) + "\n"


def render_comparison(report: ComparisonReport) -> str:
    lines = [
        "| op | case | kernel | env | measured | penalty | ref | ref penalty | verdict |",
        "|----|------|--------|-----|---------:|--------:|----:|------------:|---------|",
    ]

    def fmt(value, pattern) -> str:
        return pattern.format(value) if value is not None else "-"

    for entry in report.entries:
        cell = entry.cell
        lines.append("| " + " | ".join([
            cell.op.value,
            row_label(cell.op, cell.outcome),
            _VARIANT_LABEL[cell.variant],
            _ENV_LABEL[cell.env_key],
            fmt(entry.measured_median, "{:.2f}"),
            fmt(entry.measured_penalty, "{:.2f}x"),
            fmt(entry.reference_value, "{:.2f}"),
            fmt(entry.reference_penalty, "{:.2f}x"),
            entry.verdict,
        ]) + " |")
    return "\n".join(lines) + "\n"
