"""Bit-level model of IEEE-754 binary64 values and operand generation.

This module is pure Python and performs no measured floating-point work on
behalf of the caller: value classification is integer bit manipulation, and
outcome verification evaluates operations exactly over rationals before
rounding, so the result is independent of the live MXCSR state (FTZ/DAZ
cannot leak into the oracle).

The vocabulary: an OperandClass describes one 64-bit pattern (normal,
subnormal, NaN, ...), an OutcomeClass names a measured table row (what the
operation does: overflow, underflow, a denormal operand, division by zero),
and make_operands builds vector operand sets that provably land in a
requested outcome class, with distinct per-lane values so superscalar
hardware cannot collapse the work.
"""

from __future__ import annotations

import math
import random
import struct
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

from .errors import (
    ImpossibleOutcome,
    InapplicableOutcome,
    MixedLanes,
    OperandMismatch,
)

EXPONENT_BITS = 11
MANTISSA_BITS = 52
EXPONENT_BIAS = 1023
EXPONENT_MASK = (1 << EXPONENT_BITS) - 1
MANTISSA_MASK = (1 << MANTISSA_BITS) - 1
QUIET_BIT = 1 << (MANTISSA_BITS - 1)

MIN_NORMAL = 2.0 ** -1022
MIN_SUBNORMAL = 2.0 ** -1074


@dataclass(frozen=True)
class Bits64:
    """A binary64 value held as its raw 64-bit pattern."""

    raw: int

    def __post_init__(self) -> None:
        if not (0 <= self.raw < (1 << 64)):
            raise ValueError(f"not a 64-bit pattern: {self.raw:#x}")

    @classmethod
    def from_float(cls, value: float) -> "Bits64":
        return cls(struct.unpack("<Q", struct.pack("<d", value))[0])

    @classmethod
    def from_parts(cls, sign: int, exponent: int, mantissa: int) -> "Bits64":
        if sign not in (0, 1):
            raise ValueError("sign must be 0 or 1")
        if not (0 <= exponent <= EXPONENT_MASK):
            raise ValueError("exponent field out of range")
        if not (0 <= mantissa <= MANTISSA_MASK):
            raise ValueError("mantissa field out of range")
        return cls((sign << 63) | (exponent << MANTISSA_BITS) | mantissa)

    @property
    def sign(self) -> int:
        return self.raw >> 63

    @property
    def exponent(self) -> int:
        return (self.raw >> MANTISSA_BITS) & EXPONENT_MASK

    @property
    def mantissa(self) -> int:
        return self.raw & MANTISSA_MASK

    def to_float(self) -> float:
        return struct.unpack("<d", struct.pack("<Q", self.raw))[0]

    def hex(self) -> str:
        return f"0x{self.raw:016x}"

    @classmethod
    def from_hex(cls, text: str) -> "Bits64":
        return cls(int(text, 16))


class OperandClass(Enum):
    POS_ZERO = "pos-zero"
    NEG_ZERO = "neg-zero"
    SUBNORMAL = "subnormal"
    NORMAL = "normal"
    POS_INF = "pos-inf"
    NEG_INF = "neg-inf"
    QUIET_NAN = "quiet-nan"
    SIGNALING_NAN = "signaling-nan"


def classify(bits: "Bits64 | int") -> OperandClass:
    """Map a 64-bit pattern to its operand class using only integer logic."""
    raw = bits.raw if isinstance(bits, Bits64) else bits
    if not (0 <= raw < (1 << 64)):
        raise ValueError(f"not a 64-bit pattern: {raw:#x}")
    exponent = (raw >> MANTISSA_BITS) & EXPONENT_MASK
    mantissa = raw & MANTISSA_MASK
    sign = raw >> 63
    if exponent == 0:
        if mantissa == 0:
            return OperandClass.NEG_ZERO if sign else OperandClass.POS_ZERO
        return OperandClass.SUBNORMAL
    if exponent == EXPONENT_MASK:
        if mantissa == 0:
            return OperandClass.NEG_INF if sign else OperandClass.POS_INF
        if mantissa & QUIET_BIT:
            return OperandClass.QUIET_NAN
        return OperandClass.SIGNALING_NAN
    return OperandClass.NORMAL


class Operation(Enum):
    ADD = "add"
    MUL = "mul"
    DIV = "div"
    FMA = "fma"


class OutcomeClass(Enum):
    """A measured table row: what the operation's operands/result do."""

    NORMALIZED = "normalized"
    OVERFLOW = "overflow"
    UNDERFLOW = "underflow"
    DENORMAL_LHS = "denormal-lhs"
    DENORMAL_RHS = "denormal-rhs"
    DENORMAL_BOTH = "denormal-both"
    NAN_INPUT = "nan-input"
    DIV_BY_ZERO = "div-by-zero"
    FMA_MUL_OVERFLOW = "fma-mul-overflow"
    FMA_ADD_OVERFLOW = "fma-add-overflow"
    FMA_MUL_UNDERFLOW = "fma-mul-underflow"
    FMA_ADD_UNDERFLOW = "fma-add-underflow"


# canonical row order per operation, matching the bundled reference table
TABLE_ROWS: dict[Operation, tuple[OutcomeClass, ...]] = {
    Operation.ADD: (
        OutcomeClass.NORMALIZED,
        OutcomeClass.OVERFLOW,
        OutcomeClass.UNDERFLOW,
        OutcomeClass.DENORMAL_LHS,
        OutcomeClass.DENORMAL_RHS,
        OutcomeClass.DENORMAL_BOTH,
        OutcomeClass.NAN_INPUT,
    ),
    Operation.MUL: (
        OutcomeClass.NORMALIZED,
        OutcomeClass.OVERFLOW,
        OutcomeClass.UNDERFLOW,
        OutcomeClass.DENORMAL_LHS,
        OutcomeClass.DENORMAL_RHS,
        OutcomeClass.DENORMAL_BOTH,
        OutcomeClass.NAN_INPUT,
    ),
    Operation.DIV: (
        OutcomeClass.NORMALIZED,
        OutcomeClass.OVERFLOW,
        OutcomeClass.UNDERFLOW,
        OutcomeClass.DIV_BY_ZERO,
        OutcomeClass.DENORMAL_LHS,
        OutcomeClass.DENORMAL_RHS,
        OutcomeClass.DENORMAL_BOTH,
    ),
    Operation.FMA: (
        OutcomeClass.NORMALIZED,
        OutcomeClass.FMA_MUL_OVERFLOW,
        OutcomeClass.FMA_ADD_OVERFLOW,
        OutcomeClass.FMA_MUL_UNDERFLOW,
        OutcomeClass.FMA_ADD_UNDERFLOW,
    ),
}

# additional combinations that are measurable but have no reference row
EXTENDED_ROWS: dict[Operation, tuple[OutcomeClass, ...]] = {
    Operation.ADD: (),
    Operation.MUL: (),
    Operation.DIV: (OutcomeClass.NAN_INPUT,),
    Operation.FMA: (
        OutcomeClass.DENORMAL_LHS,
        OutcomeClass.DENORMAL_RHS,
        OutcomeClass.DENORMAL_BOTH,
        OutcomeClass.NAN_INPUT,
    ),
}

_ROW_LABELS: dict[OutcomeClass, str] = {
    OutcomeClass.NORMALIZED: "normalized",
    OutcomeClass.OVERFLOW: "overflow",
    OutcomeClass.UNDERFLOW: "underflow",
    OutcomeClass.DENORMAL_LHS: "denormal l operand",
    OutcomeClass.DENORMAL_RHS: "denormal r operand",
    OutcomeClass.DENORMAL_BOTH: "both denormals",
    OutcomeClass.NAN_INPUT: "NaN operand",
    OutcomeClass.DIV_BY_ZERO: "division by zero",
    OutcomeClass.FMA_MUL_OVERFLOW: "multiplication overflows",
    OutcomeClass.FMA_ADD_OVERFLOW: "addition overflows",
    OutcomeClass.FMA_MUL_UNDERFLOW: "multiplication underflows",
    OutcomeClass.FMA_ADD_UNDERFLOW: "addition underflows",
}


def applicable_outcomes(op: Operation, extended: bool = False) -> tuple[OutcomeClass, ...]:
    rows = TABLE_ROWS[op]
    if extended:
        rows = rows + EXTENDED_ROWS[op]
    return rows


def outcome_applies(op: Operation, outcome: OutcomeClass) -> bool:
    return outcome in TABLE_ROWS[op] or outcome in EXTENDED_ROWS[op]


def row_label(op: Operation, outcome: OutcomeClass) -> str:
    if op is Operation.DIV:
        if outcome is OutcomeClass.DENORMAL_LHS:
            return "denormal dividend"
        if outcome is OutcomeClass.DENORMAL_RHS:
            return "denormal divisor"
    return _ROW_LABELS[outcome]


@dataclass(frozen=True)
class OperandSet:
    """Per-lane operand bit patterns for one measured cell.

    lhs and rhs are the two operation inputs (dividend/divisor for DIV, the
    two product terms for FMA); addend is the third FMA input and must be
    absent for every other operation.
    """

    op: Operation
    expected_outcome: OutcomeClass
    lhs: tuple[Bits64, ...]
    rhs: tuple[Bits64, ...]
    addend: tuple[Bits64, ...] | None = None

    def __post_init__(self) -> None:
        if not self.lhs:
            raise OperandMismatch("operand set has no lanes")
        if len(self.rhs) != len(self.lhs):
            raise OperandMismatch("lhs and rhs lane counts differ")
        if self.op is Operation.FMA:
            if self.addend is None or len(self.addend) != len(self.lhs):
                raise OperandMismatch("FMA needs an addend with matching lanes")
        elif self.addend is not None:
            raise OperandMismatch(f"{self.op.value} takes no addend")

    @property
    def vector_length(self) -> int:
        return len(self.lhs)

    def lhs_floats(self) -> list[float]:
        return [b.to_float() for b in self.lhs]

    def rhs_floats(self) -> list[float]:
        return [b.to_float() for b in self.rhs]

    def addend_floats(self) -> list[float] | None:
        if self.addend is None:
            return None
        return [b.to_float() for b in self.addend]

    def to_hex(self) -> dict:
        out = {
            "op": self.op.value,
            "expected_outcome": self.expected_outcome.value,
            "lhs": [b.hex() for b in self.lhs],
            "rhs": [b.hex() for b in self.rhs],
        }
        if self.addend is not None:
            out["addend"] = [b.hex() for b in self.addend]
        return out

    @classmethod
    def from_hex(cls, data: dict) -> "OperandSet":
        addend = data.get("addend")
        return cls(
            op=Operation(data["op"]),
            expected_outcome=OutcomeClass(data["expected_outcome"]),
            lhs=tuple(Bits64.from_hex(h) for h in data["lhs"]),
            rhs=tuple(Bits64.from_hex(h) for h in data["rhs"]),
            addend=tuple(Bits64.from_hex(h) for h in addend) if addend else None,
        )


# ---------------------------------------------------------------------------
# operand recipes
# ---------------------------------------------------------------------------

def _raw(value: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", value))[0]


_ONE = _raw(1.0)
_ONE_5 = _raw(1.5)
_ONE_25 = _raw(1.25)
_HALF = _raw(0.5)
_P600 = _raw(2.0 ** 600)
_P540 = _raw(2.0 ** 540)
_M600 = _raw(2.0 ** -600)
_M512 = _raw(2.0 ** -512)
_M540 = _raw(2.0 ** -540)
_P1023 = _raw(2.0 ** 1023)
_P512 = _raw(2.0 ** 512)
_N15_P511 = _raw(1.5 * 2.0 ** 511)
_N15_M511 = _raw(1.5 * 2.0 ** -511)
_M511 = _raw(2.0 ** -511)
_N15_MIN = _raw(1.5 * 2.0 ** -1022)
_NEG_MIN_NORMAL = _raw(-(2.0 ** -1022))
_SUB_A = 0x0000_0000_0000_0100  # 256 * 2^-1074
_SUB_B = 0x0000_0000_0000_0200  # 512 * 2^-1074
_QNAN = 0x7FF8_0000_0000_0000
_POS_ZERO = 0x0000_0000_0000_0000


@dataclass(frozen=True)
class _Slot:
    base: int
    perturb: bool = True

    def __post_init__(self) -> None:
        # perturbation ORs an 8-bit lane index into the mantissa, so the
        # base pattern must keep those bits clear
        if self.perturb and (self.base & 0xFF):
            raise ValueError("perturbable base uses the low mantissa byte")


_RECIPES: dict[tuple[Operation, OutcomeClass], tuple[_Slot, ...]] = {
    (Operation.ADD, OutcomeClass.NORMALIZED): (_Slot(_ONE_5), _Slot(_ONE_25)),
    (Operation.ADD, OutcomeClass.OVERFLOW): (_Slot(_P1023), _Slot(_P1023)),
    (Operation.ADD, OutcomeClass.UNDERFLOW): (
        _Slot(_N15_MIN), _Slot(_NEG_MIN_NORMAL, perturb=False)),
    (Operation.ADD, OutcomeClass.DENORMAL_LHS): (_Slot(_SUB_A), _Slot(_ONE_5)),
    (Operation.ADD, OutcomeClass.DENORMAL_RHS): (_Slot(_ONE_5), _Slot(_SUB_A)),
    (Operation.ADD, OutcomeClass.DENORMAL_BOTH): (_Slot(_SUB_A), _Slot(_SUB_B)),
    (Operation.ADD, OutcomeClass.NAN_INPUT): (_Slot(_QNAN), _Slot(_ONE_5)),

    (Operation.MUL, OutcomeClass.NORMALIZED): (_Slot(_ONE_5), _Slot(_ONE_25)),
    (Operation.MUL, OutcomeClass.OVERFLOW): (_Slot(_P600), _Slot(_P600)),
    (Operation.MUL, OutcomeClass.UNDERFLOW): (_Slot(_M512), _Slot(_M540)),
    (Operation.MUL, OutcomeClass.DENORMAL_LHS): (_Slot(_SUB_A), _Slot(_ONE_5)),
    (Operation.MUL, OutcomeClass.DENORMAL_RHS): (_Slot(_ONE_5), _Slot(_SUB_A)),
    (Operation.MUL, OutcomeClass.DENORMAL_BOTH): (_Slot(_SUB_A), _Slot(_SUB_B)),
    (Operation.MUL, OutcomeClass.NAN_INPUT): (_Slot(_QNAN), _Slot(_ONE_5)),

    (Operation.DIV, OutcomeClass.NORMALIZED): (_Slot(_ONE_5), _Slot(_ONE_25)),
    (Operation.DIV, OutcomeClass.OVERFLOW): (_Slot(_P600), _Slot(_M600)),
    (Operation.DIV, OutcomeClass.UNDERFLOW): (_Slot(_M512), _Slot(_P540)),
    (Operation.DIV, OutcomeClass.DIV_BY_ZERO): (
        _Slot(_ONE_5), _Slot(_POS_ZERO, perturb=False)),
    (Operation.DIV, OutcomeClass.DENORMAL_LHS): (_Slot(_SUB_A), _Slot(_ONE_5)),
    (Operation.DIV, OutcomeClass.DENORMAL_RHS): (_Slot(_M600), _Slot(_SUB_A)),
    (Operation.DIV, OutcomeClass.DENORMAL_BOTH): (_Slot(_SUB_B), _Slot(_SUB_A)),
    (Operation.DIV, OutcomeClass.NAN_INPUT): (_Slot(_QNAN), _Slot(_ONE_5)),

    (Operation.FMA, OutcomeClass.NORMALIZED): (
        _Slot(_ONE_5), _Slot(_ONE_25), _Slot(_HALF)),
    (Operation.FMA, OutcomeClass.FMA_MUL_OVERFLOW): (
        _Slot(_P600), _Slot(_P600), _Slot(_ONE)),
    (Operation.FMA, OutcomeClass.FMA_ADD_OVERFLOW): (
        _Slot(_P512), _Slot(_N15_P511), _Slot(_P1023)),
    # the addend keeps the final result normal: only the never-materialized
    # intermediate product underflows, which a fused unit handles for free
    (Operation.FMA, OutcomeClass.FMA_MUL_UNDERFLOW): (
        _Slot(_M512), _Slot(_M540), _Slot(_ONE)),
    (Operation.FMA, OutcomeClass.FMA_ADD_UNDERFLOW): (
        _Slot(_N15_M511), _Slot(_M511, perturb=False),
        _Slot(_NEG_MIN_NORMAL, perturb=False)),
    (Operation.FMA, OutcomeClass.DENORMAL_LHS): (
        _Slot(_SUB_A), _Slot(_ONE_5), _Slot(_ONE)),
    (Operation.FMA, OutcomeClass.DENORMAL_RHS): (
        _Slot(_ONE_5), _Slot(_SUB_A), _Slot(_ONE)),
    (Operation.FMA, OutcomeClass.DENORMAL_BOTH): (
        _Slot(_SUB_A), _Slot(_SUB_B), _Slot(_ONE)),
    (Operation.FMA, OutcomeClass.NAN_INPUT): (
        _Slot(_QNAN), _Slot(_ONE_5), _Slot(_ONE)),
}


def make_operands(op: Operation, outcome: OutcomeClass, vector_length: int,
                  seed: int = 0) -> OperandSet:
    """Build a vector operand set that lands in the requested outcome class.

    Lane values within an operand are made distinct by ORing a per-lane
    byte (a seed-dependent permutation of 0..255) into the low mantissa
    bits; with more than 256 lanes the byte sequence repeats.  Operands
    whose class would change under perturbation (exact zeros, values used
    for exact cancellation) are left fixed.  The returned set is re-checked
    with verify_outcome before being handed out.
    """
    if vector_length < 1:
        raise ValueError("vector_length must be positive")
    if not outcome_applies(op, outcome):
        raise InapplicableOutcome(
            f"outcome {outcome.value} does not exist for {op.value}")
    recipe = _RECIPES.get((op, outcome))
    if recipe is None:
        raise ImpossibleOutcome(
            f"no operand recipe produces {outcome.value} for {op.value}")
    rng = random.Random(seed)
    columns: list[tuple[Bits64, ...]] = []
    for slot in recipe:
        if slot.perturb:
            perm = rng.sample(range(256), 256)
            lanes = tuple(
                Bits64(slot.base | perm[lane % 256])
                for lane in range(vector_length)
            )
        else:
            lanes = tuple(Bits64(slot.base) for _ in range(vector_length))
        columns.append(lanes)
    operands = OperandSet(
        op=op,
        expected_outcome=outcome,
        lhs=columns[0],
        rhs=columns[1],
        addend=columns[2] if op is Operation.FMA else None,
    )
    checked = verify_outcome(op, operands)
    if checked is not outcome:
        raise ImpossibleOutcome(
            f"recipe for {op.value}/{outcome.value} classified as {checked.value}")
    return operands


# ---------------------------------------------------------------------------
# outcome verification (exact rational evaluation, round to binary64)
# ---------------------------------------------------------------------------

def _round_to_binary64(value: Fraction) -> float:
    """Round an exact rational to binary64 with round-to-nearest-even,
    honoring gradual underflow and overflowing to infinity."""
    if value == 0:
        return 0.0
    negative = value < 0
    a = -value if negative else value
    num, den = a.numerator, a.denominator
    e = num.bit_length() - den.bit_length()
    ge = num >= (den << e) if e >= 0 else (num << -e) >= den
    if not ge:
        e -= 1
    quantum = max(e - MANTISSA_BITS, -1074)
    if quantum >= 0:
        n_num, n_den = num, den << quantum
    else:
        n_num, n_den = num << -quantum, den
    q, r = divmod(n_num, n_den)
    if 2 * r > n_den or (2 * r == n_den and (q & 1)):
        q += 1
    if q == 0:
        return -0.0 if negative else 0.0
    try:
        result = math.ldexp(q, quantum)
    except OverflowError:
        result = math.inf
    return -result if negative else result


def fma_exact(b: float, c: float, d: float) -> float:
    """Fused multiply-add b*c + d with a single rounding."""
    if any(math.isnan(v) for v in (b, c, d)):
        return math.nan
    if math.isinf(b) or math.isinf(c):
        # infinite (or invalid inf*0) product; native arithmetic propagates it
        return (b * c) + d
    if math.isinf(d):
        # the exact product of finite factors is finite no matter how large,
        # so an infinite addend always dominates
        return d
    if b == 0.0 or c == 0.0:
        # the product is an exact zero, so the single native add rounds once
        return (b * c) + d
    exact = Fraction(b) * Fraction(c) + Fraction(d)
    if exact == 0:
        # exact cancellation: round-to-nearest gives +0
        return 0.0
    return _round_to_binary64(exact)


def _eval_binary(op: Operation, x: float, y: float) -> float:
    if math.isnan(x) or math.isnan(y):
        return math.nan
    if op is Operation.DIV and y == 0.0:
        if x == 0.0:
            return math.nan
        sign = math.copysign(1.0, x) * math.copysign(1.0, y)
        return math.copysign(math.inf, sign)
    if math.isinf(x) or math.isinf(y) or x == 0.0 or y == 0.0:
        # exact or special-value cases: native arithmetic is already correct
        if op is Operation.ADD:
            return x + y
        if op is Operation.MUL:
            return x * y
        return x / y
    if op is Operation.ADD:
        exact = Fraction(x) + Fraction(y)
    elif op is Operation.MUL:
        exact = Fraction(x) * Fraction(y)
    elif op is Operation.DIV:
        exact = Fraction(x) / Fraction(y)
    else:
        raise OperandMismatch(f"{op.value} is not a two-operand operation")
    if exact == 0:
        return 0.0
    return _round_to_binary64(exact)


def eval_lane(op: Operation, lhs: float, rhs: float,
              addend: float | None = None) -> float:
    """Reference evaluation of one lane (always gradual underflow)."""
    if op is Operation.FMA:
        if addend is None:
            raise OperandMismatch("FMA lane needs an addend")
        return fma_exact(lhs, rhs, addend)
    if addend is not None:
        raise OperandMismatch(f"{op.value} lane takes no addend")
    return _eval_binary(op, lhs, rhs)


_DENORMAL_MAP = {
    (True, True): OutcomeClass.DENORMAL_BOTH,
    (True, False): OutcomeClass.DENORMAL_LHS,
    (False, True): OutcomeClass.DENORMAL_RHS,
}


def _is_subnormal(value: float) -> bool:
    return classify(Bits64.from_float(value)) is OperandClass.SUBNORMAL


def _classify_lane(op: Operation, lx: Bits64, rx: Bits64,
                   ax: Bits64 | None) -> OutcomeClass:
    classes = [classify(lx), classify(rx)]
    if ax is not None:
        classes.append(classify(ax))
    if any(c in (OperandClass.QUIET_NAN, OperandClass.SIGNALING_NAN)
           for c in classes):
        return OutcomeClass.NAN_INPUT
    if any(c in (OperandClass.POS_INF, OperandClass.NEG_INF) for c in classes):
        raise ImpossibleOutcome(
            "infinite operands are outside the outcome taxonomy")
    x, y = lx.to_float(), rx.to_float()
    if op is Operation.DIV and y == 0.0:
        if x != 0.0:
            return OutcomeClass.DIV_BY_ZERO
        raise ImpossibleOutcome("0/0 is outside the outcome taxonomy")
    # a denormal *input* takes priority over whatever the result does; the
    # FMA addend is deliberately excluded (no recipe makes it denormal)
    lhs_sub = classes[0] is OperandClass.SUBNORMAL
    rhs_sub = classes[1] is OperandClass.SUBNORMAL
    if lhs_sub or rhs_sub:
        return _DENORMAL_MAP[(lhs_sub, rhs_sub)]
    if op is Operation.FMA:
        a = ax.to_float()
        product = _eval_binary(Operation.MUL, x, y)
        if math.isinf(product):
            return OutcomeClass.FMA_MUL_OVERFLOW
        if _is_subnormal(product) or (product == 0.0 and x != 0.0 and y != 0.0):
            return OutcomeClass.FMA_MUL_UNDERFLOW
        result = fma_exact(x, y, a)
        if math.isinf(result):
            return OutcomeClass.FMA_ADD_OVERFLOW
        if _is_subnormal(result):
            return OutcomeClass.FMA_ADD_UNDERFLOW
        if result == 0.0 and Fraction(x) * Fraction(y) + Fraction(a) != 0:
            return OutcomeClass.FMA_ADD_UNDERFLOW
        return OutcomeClass.NORMALIZED
    result = _eval_binary(op, x, y)
    if math.isinf(result):
        return OutcomeClass.OVERFLOW
    if _is_subnormal(result):
        return OutcomeClass.UNDERFLOW
    if result == 0.0:
        if op is Operation.ADD:
            exact_zero = rx.raw == (lx.raw ^ (1 << 63))
        elif op is Operation.MUL:
            exact_zero = x == 0.0 or y == 0.0
        else:
            exact_zero = x == 0.0
        if not exact_zero:
            return OutcomeClass.UNDERFLOW
    return OutcomeClass.NORMALIZED


def verify_outcome(op: Operation, operands: OperandSet) -> OutcomeClass:
    """Independently classify an operand set; every lane must agree.

    Evaluation is exact (rational arithmetic, one rounding), so the answer
    does not depend on the host's FTZ/DAZ state.
    """
    if op is not operands.op:
        raise OperandMismatch(
            f"operand set is for {operands.op.value}, not {op.value}")
    lanes: list[OutcomeClass] = []
    for i in range(operands.vector_length):
        ax = operands.addend[i] if operands.addend is not None else None
        lanes.append(_classify_lane(op, operands.lhs[i], operands.rhs[i], ax))
    first = lanes[0]
    if any(lane is not first for lane in lanes):
        counts = sorted({lane.value for lane in lanes})
        raise MixedLanes(f"lanes disagree on outcome: {', '.join(counts)}")
    return first
