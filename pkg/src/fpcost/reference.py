"""Bundled reference dataset: per-op cycle costs on four 2011-2014 servers.

The dataset records, for each of four x86-64 machines (two pre-AVX2 Xeons,
one Haswell Xeon with FMA3, one Bulldozer-generation Opteron with FMA4),
the measured cycles per scalar double-precision operation for every
(operation, outcome class, kernel shape) cell, once with FTZ+DAZ on and
once off, plus the machines' documented per-instruction throughput and
latency.  Values are cycles of the respective machine's core clock.

compare_to_reference in the harness evaluates fresh measurements against
these numbers in penalty terms (slowdown relative to the same machine's
normalized case), which transfers across microarchitectures far better
than absolute cycle counts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

from .errors import UnknownMachine
from .fpmodel import Operation, OutcomeClass, TABLE_ROWS
from .kernels import KernelVariant

SCHEMA_VERSION = 1

ENV_KEYS = ("fd", "no_fd")

_OP_ORDER = {op: i for i, op in enumerate(Operation)}
_VARIANT_ORDER = {KernelVariant.MEM_C: 0, KernelVariant.REG_ASM: 1}


@dataclass(frozen=True)
class MachineInfo:
    key: str
    label: str
    cpu: str
    vendor: str
    nominal_ghz: float
    cores: int
    isa: tuple[str, ...]
    instruction_table: dict
    combined_add_mul: str

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "cpu": self.cpu,
            "vendor": self.vendor,
            "nominal_ghz": self.nominal_ghz,
            "cores": self.cores,
            "isa": list(self.isa),
            "instruction_table": self.instruction_table,
            "combined_add_mul": self.combined_add_mul,
        }

    @classmethod
    def from_dict(cls, key: str, data: dict) -> "MachineInfo":
        return cls(
            key=key,
            label=data["label"],
            cpu=data["cpu"],
            vendor=data["vendor"],
            nominal_ghz=float(data["nominal_ghz"]),
            cores=int(data["cores"]),
            isa=tuple(data["isa"]),
            instruction_table=data["instruction_table"],
            combined_add_mul=data["combined_add_mul"],
        )


class ReferenceTable:
    """Lookup over the bundled (or a caller-supplied) measurement dataset."""

    def __init__(self, machines: dict[str, MachineInfo],
                 cycles: dict[tuple[str, Operation, OutcomeClass, KernelVariant],
                              dict[str, float]]) -> None:
        self.machines = machines
        self._cycles = cycles

    def __eq__(self, other) -> bool:
        if not isinstance(other, ReferenceTable):
            return NotImplemented
        return self.machines == other.machines and self._cycles == other._cycles

    def machine(self, key: str) -> MachineInfo:
        info = self.machines.get(key)
        if info is None:
            known = ", ".join(sorted(self.machines))
            raise UnknownMachine(f"no reference machine {key!r} (have: {known})")
        return info

    def rows(self, machine: str):
        self.machine(machine)
        for (m, op, outcome, variant), envs in self._cycles.items():
            if m == machine:
                yield op, outcome, variant, dict(envs)

    def lookup(self, machine: str, op: Operation, outcome: OutcomeClass,
               variant: KernelVariant, env: str) -> float | None:
        self.machine(machine)
        if env not in ENV_KEYS:
            raise ValueError(f"unknown environment key {env!r}")
        envs = self._cycles.get((machine, op, outcome, variant))
        return None if envs is None else envs[env]

    def value(self, machine: str, op: Operation, outcome: OutcomeClass,
              variant: KernelVariant, env: str) -> float:
        found = self.lookup(machine, op, outcome, variant, env)
        if found is None:
            raise LookupError(
                f"{machine} has no row for {op.value}/{outcome.value}"
                f"/{variant.value}")
        return found

    def penalty(self, machine: str, op: Operation, outcome: OutcomeClass,
                variant: KernelVariant, env: str) -> float | None:
        """Slowdown of a cell relative to the machine's normalized case for
        the same operation, shape, and environment."""
        cell = self.lookup(machine, op, outcome, variant, env)
        base = self.lookup(machine, op, OutcomeClass.NORMALIZED, variant, env)
        if cell is None or base is None or base == 0:
            return None
        return cell / base

    # ---- serialization ----------------------------------------------

    @classmethod
    def from_dict(cls, data: dict) -> "ReferenceTable":
        if data.get("version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported reference table version "
                             f"{data.get('version')!r}")
        machines = {
            key: MachineInfo.from_dict(key, m)
            for key, m in data["machines"].items()
        }
        cycles: dict = {}
        for row in data["cycles"]:
            machine = row["machine"]
            if machine not in machines:
                raise ValueError(f"cycle row references unknown machine "
                                 f"{machine!r}")
            key = (machine, Operation(row["op"]), OutcomeClass(row["outcome"]),
                   KernelVariant(row["variant"]))
            if key in cycles:
                raise ValueError(f"duplicate cycle row {key}")
            envs = {}
            for env in ENV_KEYS:
                value = float(row[env])
                if value <= 0:
                    raise ValueError(f"non-positive cycle count in {key}")
                envs[env] = value
            cycles[key] = envs
        return cls(machines, cycles)

    def to_dict(self) -> dict:
        def row_order(key):
            machine, op, outcome, variant = key
            rows = TABLE_ROWS[op]
            row_idx = rows.index(outcome) if outcome in rows else len(rows)
            return (machine, _OP_ORDER[op], row_idx, _VARIANT_ORDER[variant])

        rows = []
        for key in sorted(self._cycles, key=row_order):
            machine, op, outcome, variant = key
            row = {"machine": machine, "op": op.value,
                   "outcome": outcome.value, "variant": variant.value}
            row.update(self._cycles[key])
            rows.append(row)
        return {
            "version": SCHEMA_VERSION,
            "machines": {k: m.to_dict() for k, m in sorted(self.machines.items())},
            "cycles": rows,
        }


_bundled: ReferenceTable | None = None


def bundled_table() -> ReferenceTable:
    global _bundled
    if _bundled is None:
        text = (resources.files("fpcost") / "data" / "reference_table.json"
                ).read_text(encoding="utf-8")
        _bundled = ReferenceTable.from_dict(json.loads(text))
    return _bundled
