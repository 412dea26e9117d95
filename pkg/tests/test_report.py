"""Deterministic rendering of records and comparison summaries."""

import csv
import io
import json
import random

import pytest

from fpcost import report
from fpcost.errors import EmptyResults
from fpcost.fpmodel import Operation, OutcomeClass
from fpcost.harness import compare_to_reference
from fpcost.kernels import KernelVariant
from fpcost.report import RenderSpec, ordered_results, parse_json, render

import synth


@pytest.fixture()
def results():
    return synth.haswell_like_results()


@pytest.mark.parametrize("overrides", [
    dict(format="yaml"),
    dict(precision=-1),
    dict(value_basis="wallclock"),
])
def test_render_spec_validation(overrides):
    with pytest.raises(ValueError):
        RenderSpec(**overrides)


def test_render_rejects_empty_input():
    for fmt in report.FORMATS:
        with pytest.raises(EmptyResults):
            render([], RenderSpec(format=fmt))


def test_ordering_is_canonical_and_input_independent(results):
    ordering = [r.cell.key() for r in ordered_results(results)]
    shuffled = results[:]
    random.Random(5).shuffle(shuffled)
    assert [r.cell.key() for r in ordered_results(shuffled)] == ordering
    ops = [r.cell.op for r in ordered_results(results)]
    assert ops == sorted(ops, key=(Operation.ADD, Operation.MUL,
                                   Operation.DIV, Operation.FMA).index)
    # the load/store shape leads its operation block, fd leads no_fd
    assert ordering[0] == ("add", "normalized", "memc", "fd")
    assert ordering[1] == ("add", "normalized", "memc", "no_fd")
    assert ordering[2] == ("add", "normalized", "regasm", "fd")


def test_extended_outcomes_rank_after_table_rows():
    rows = [
        synth.fake_result(Operation.DIV, OutcomeClass.NAN_INPUT,
                          KernelVariant.REG_ASM, "no_fd", 4.0),
        synth.fake_result(Operation.DIV, OutcomeClass.DENORMAL_BOTH,
                          KernelVariant.REG_ASM, "no_fd", 54.0),
    ]
    ordering = [r.cell.outcome for r in ordered_results(rows)]
    assert ordering == [OutcomeClass.DENORMAL_BOTH, OutcomeClass.NAN_INPUT]


def test_markdown_rendering_is_deterministic(results):
    text = render(results)
    shuffled = results[:]
    random.Random(9).shuffle(shuffled)
    assert render(shuffled) == text
    assert render(results) == text


def test_markdown_shape_and_labels(results):
    lines = render(results).splitlines()
    assert lines[0] == "| op | case | kernel | F+D | No F+D |"
    assert len(lines) == 2 + 14  # header, separator, one line per group
    body = "\n".join(lines)
    assert "| add | normalized | MemC | 0.51 | 0.51 |" in body
    assert "| mul | underflow | RegAsm | 0.13 | 33.00 |" in body
    assert "| fma | addition underflows | RegAsm | 0.22 | 33.50 |" in body


def test_markdown_division_specific_labels():
    rows = [synth.fake_result(Operation.DIV, OutcomeClass.DENORMAL_LHS,
                              KernelVariant.REG_ASM, "no_fd", 54.0),
            synth.fake_result(Operation.DIV, OutcomeClass.DENORMAL_RHS,
                              KernelVariant.REG_ASM, "no_fd", 54.0)]
    text = render(rows)
    assert "denormal dividend" in text
    assert "denormal divisor" in text


def test_markdown_env_columns_follow_the_data():
    rows = [synth.fake_result(Operation.ADD, OutcomeClass.NORMALIZED,
                              KernelVariant.REG_ASM, "no_fd", 0.25)]
    lines = render(rows).splitlines()
    assert lines[0] == "| op | case | kernel | No F+D |"
    rows.append(synth.fake_result(Operation.ADD, OutcomeClass.NORMALIZED,
                                  KernelVariant.REG_ASM, "ftz", 0.25))
    lines = render(rows).splitlines()
    assert lines[0] == "| op | case | kernel | No F+D | FTZ only |"


def test_markdown_missing_cells_render_as_dash():
    rows = [
        synth.fake_result(Operation.ADD, OutcomeClass.NORMALIZED,
                          KernelVariant.REG_ASM, "fd", 0.25),
        synth.fake_result(Operation.ADD, OutcomeClass.NORMALIZED,
                          KernelVariant.REG_ASM, "no_fd", 0.25),
        synth.fake_result(Operation.ADD, OutcomeClass.OVERFLOW,
                          KernelVariant.REG_ASM, "fd", 0.25),
    ]
    text = render(rows)
    assert "| add | overflow | RegAsm | 0.25 | - |" in text


def test_markdown_error_cells_are_visible():
    rows = [synth.fake_result(
        Operation.ADD, OutcomeClass.NORMALIZED, KernelVariant.REG_ASM,
        "fd", 0.0, error={"type": "EnvMismatch", "message": "drift"})]
    assert "error:EnvMismatch" in render(rows)


def test_precision_control(results):
    text = render(results, RenderSpec(precision=4))
    assert "| 33.5000 |" in text
    text = render(results, RenderSpec(precision=0))
    assert "| add | underflow | RegAsm | 0 | 32 |" in text


def test_core_cycle_basis():
    rows = [synth.fake_result(Operation.ADD, OutcomeClass.NORMALIZED,
                              KernelVariant.REG_ASM, "no_fd", 0.5,
                              core_tsc_ratio=2.0)]
    assert "| 0.50 |" in render(rows)
    assert "| 1.00 |" in render(rows, RenderSpec(value_basis="core"))


def test_csv_rendering(results):
    text = render(results, RenderSpec(format="csv"))
    parsed = list(csv.reader(io.StringIO(text)))
    assert parsed[0] == ["op", "case", "kernel", "env", "cycles_per_op",
                         "min", "mean", "stddev", "samples", "unstable"]
    assert len(parsed) == 1 + 28
    underflow = next(row for row in parsed
                     if row[:4] == ["add", "underflow", "RegAsm", "No F+D"])
    assert underflow[4:] == ["32.00", "32.00", "32.00", "0.00", "5", "False"]


def test_csv_error_rows_leave_stats_blank():
    rows = [synth.fake_result(
        Operation.ADD, OutcomeClass.NORMALIZED, KernelVariant.REG_ASM,
        "fd", 0.0, error={"type": "MissingFeature", "message": "no AVX"})]
    parsed = list(csv.reader(io.StringIO(render(rows,
                                                RenderSpec(format="csv")))))
    assert parsed[1][4] == "error:MissingFeature"
    assert parsed[1][5:] == [""] * 5


def test_json_round_trip(results):
    results.append(synth.fake_result(
        Operation.ADD, OutcomeClass.OVERFLOW, KernelVariant.REG_ASM, "no_fd",
        0.0, error={"type": "EnvMismatch", "message": "drift"}))
    text = render(results, RenderSpec(format="json"))
    assert json.loads(text)  # valid JSON
    assert parse_json(text) == ordered_results(results)


# ---------------------------------------------------------------------------
# comparison rendering
# ---------------------------------------------------------------------------

@pytest.fixture()
def comparison(results):
    return compare_to_reference(results, "haswell")


def test_summarize_header_counts(comparison):
    text = report.summarize(comparison)
    lines = text.splitlines()
    assert "reference machine: haswell" in lines[0]
    assert "tolerance factor 2" in lines[0]
    assert "28 total, 28 match, 0 deviate" in lines[1]


def test_summarize_grades_each_penalty_against_the_reference(comparison):
    text = report.summarize(comparison)
    assert ("add underflow (No F+D): 123.1x slowdown - fully reproduced"
            in text)
    assert ("mul underflow (No F+D): 253.8x slowdown - fully reproduced"
            in text)
    # division's faithful slowdown is small in relative terms, and must
    # still be graded as reproduced because the reference's own is too
    assert ("div underflow (No F+D): 8.6x slowdown - fully reproduced"
            in text)


def test_summarize_flags_weak_and_missing_penalties():
    rows = [
        synth.fake_result(Operation.ADD, OutcomeClass.NORMALIZED,
                          KernelVariant.REG_ASM, "no_fd", 0.25),
        synth.fake_result(Operation.ADD, OutcomeClass.UNDERFLOW,
                          KernelVariant.REG_ASM, "no_fd", 7.5),  # 30x
    ]
    text = report.summarize(compare_to_reference(rows, "haswell",
                                                 tolerance=10.0))
    assert "30.0x slowdown - reproduced with a weaker penalty" in text
    rows[1] = synth.fake_result(Operation.ADD, OutcomeClass.UNDERFLOW,
                                KernelVariant.REG_ASM, "no_fd", 0.26)
    text = report.summarize(compare_to_reference(rows, "haswell",
                                                 tolerance=10.0))
    assert "not reproduced" in text


def test_summarize_fma_intermediate_line(comparison):
    text = report.summarize(comparison)
    assert ("fma multiplication underflows (No F+D): 1.00x - no penalty, "
            "as expected for an unconsumed intermediate") in text


def test_summarize_fma_unexpected_penalty():
    rows = [
        synth.fake_result(Operation.FMA, OutcomeClass.NORMALIZED,
                          KernelVariant.REG_ASM, "no_fd", 0.22),
        synth.fake_result(Operation.FMA, OutcomeClass.FMA_MUL_UNDERFLOW,
                          KernelVariant.REG_ASM, "no_fd", 2.2),
    ]
    text = report.summarize(compare_to_reference(rows, "haswell",
                                                 tolerance=100.0))
    assert "10.00x - unexpected penalty" in text


def test_render_comparison_table(comparison):
    lines = report.render_comparison(comparison).splitlines()
    assert len(lines) == 2 + 28
    assert lines[0].startswith("| op | case | kernel | env | measured |")
    assert any("| match |" in line for line in lines[2:])
    assert report.render_comparison(comparison) == \
        report.render_comparison(comparison)


def test_render_comparison_dashes_for_missing_values(results):
    results.append(synth.fake_result(
        Operation.ADD, OutcomeClass.OVERFLOW, KernelVariant.REG_ASM, "no_fd",
        0.0, error={"type": "EnvMismatch", "message": "drift"}))
    text = report.render_comparison(compare_to_reference(results, "haswell"))
    error_line = next(line for line in text.splitlines()
                      if "| error |" in line)
    assert "| - | - | - | - |" in error_line
