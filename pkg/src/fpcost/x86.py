"""Minimal x86-64 assembler covering exactly the forms the kernels use.

Emits machine code and an Intel-syntax listing side by side.  The listing
follows objdump's ``-M intel`` spelling (lower case, no space after commas,
hex immediates) so tests can cross-check the encoder against a real
disassembler line by line.

Only what the measurement kernels need is implemented: 64-bit integer moves
and ALU ops, a conditional branch, the serializing/timing instructions
(cpuid, lfence, rdtsc, rdtscp, xgetbv, stmxcsr/ldmxcsr), and VEX-encoded
256-bit AVX/FMA arithmetic with register or [base+disp] memory operands.
All VEX instructions use the three-byte C4 prefix; the fields with inverted
storage (vvvv and the R/X/B extension bits) are handled here so callers pass
logical register numbers only.
"""

from __future__ import annotations

import struct

RAX, RCX, RDX, RBX, RSP, RBP, RSI, RDI = range(8)
R8, R9, R10, R11, R12, R13, R14, R15 = range(8, 16)

_R64 = (
    "rax", "rcx", "rdx", "rbx", "rsp", "rbp", "rsi", "rdi",
    "r8", "r9", "r10", "r11", "r12", "r13", "r14", "r15",
)
_R32 = (
    "eax", "ecx", "edx", "ebx", "esp", "ebp", "esi", "edi",
    "r8d", "r9d", "r10d", "r11d", "r12d", "r13d", "r14d", "r15d",
)


def reg_name(reg: int) -> str:
    return _R64[reg]


def ymm_name(reg: int) -> str:
    return f"ymm{reg}"


def _mem_text(base: int, disp: int) -> str:
    if disp == 0:
        return f"[{_R64[base]}]"
    if disp > 0:
        return f"[{_R64[base]}+{hex(disp)}]"
    return f"[{_R64[base]}-{hex(-disp)}]"


class Assembler:
    """Builds one code blob; emit instructions, then call finish()."""

    def __init__(self) -> None:
        self._code = bytearray()
        self._lines: list[str] = []
        self._labels: dict[str, int] = {}
        self._fixups: list[tuple[int, str]] = []
        self._finished = False

    # ---- plumbing ----------------------------------------------------

    def _emit(self, code: bytes, text: str | None) -> None:
        if self._finished:
            raise RuntimeError("assembler already finished")
        self._code += code
        if text is not None:
            self._lines.append(text)

    def label(self, name: str) -> None:
        if name in self._labels:
            raise ValueError(f"duplicate label {name!r}")
        self._labels[name] = len(self._code)
        self._emit(b"", f"{name}:")

    def comment(self, text: str) -> None:
        self._emit(b"", f"; {text}")

    def finish(self) -> bytes:
        for pos, name in self._fixups:
            target = self._labels[name]
            rel = target - (pos + 4)
            self._code[pos:pos + 4] = struct.pack("<i", rel)
        self._finished = True
        return bytes(self._code)

    def listing(self) -> str:
        return "\n".join(self._lines)

    # ---- REX-prefixed integer instructions ---------------------------

    def _rex(self, w: int, reg: int, rm: int) -> bytes:
        rex = 0x40 | (w << 3) | (((reg >> 3) & 1) << 2) | ((rm >> 3) & 1)
        if rex == 0x40:
            return b""
        return bytes([rex])

    def _modrm_reg(self, reg: int, rm: int) -> bytes:
        return bytes([0xC0 | ((reg & 7) << 3) | (rm & 7)])

    def _modrm_mem(self, reg: int, base: int, disp: int) -> bytes:
        # [base + disp]; rsp/r12 need a SIB byte, rbp/r13 cannot use mod=00
        out = bytearray()
        base7 = base & 7
        sib = bytes([0x24]) if base7 == 4 else b""
        if disp == 0 and base7 != 5:
            out += bytes([((reg & 7) << 3) | base7]) + sib
        elif -128 <= disp <= 127:
            out += bytes([0x40 | ((reg & 7) << 3) | base7]) + sib
            out += struct.pack("<b", disp)
        else:
            out += bytes([0x80 | ((reg & 7) << 3) | base7]) + sib
            out += struct.pack("<i", disp)
        return bytes(out)

    def mov_rr(self, dst: int, src: int) -> None:
        self._emit(
            self._rex(1, src, dst) + b"\x89" + self._modrm_reg(src, dst),
            f"mov {_R64[dst]},{_R64[src]}",
        )

    def mov_ri(self, dst: int, imm: int) -> None:
        if not (0 <= imm <= 0x7FFF_FFFF):
            raise ValueError("immediate out of the supported range")
        self._emit(
            self._rex(1, 0, dst) + b"\xC7" + self._modrm_reg(0, dst)
            + struct.pack("<i", imm),
            f"mov {_R64[dst]},{hex(imm)}",
        )

    def _alu_ri(self, opext: int, mnemonic: str, dst: int, imm: int) -> None:
        if -128 <= imm <= 127:
            body = b"\x83" + self._modrm_reg(opext, dst) + struct.pack("<b", imm)
        elif -(1 << 31) <= imm < (1 << 31):
            body = b"\x81" + self._modrm_reg(opext, dst) + struct.pack("<i", imm)
        else:
            raise ValueError("immediate out of the supported range")
        self._emit(self._rex(1, 0, dst) + body, f"{mnemonic} {_R64[dst]},{hex(imm)}")

    def add_ri(self, dst: int, imm: int) -> None:
        self._alu_ri(0, "add", dst, imm)

    def sub_ri(self, dst: int, imm: int) -> None:
        self._alu_ri(5, "sub", dst, imm)

    def _alu_rr(self, opcode: int, mnemonic: str, dst: int, src: int) -> None:
        self._emit(
            self._rex(1, src, dst) + bytes([opcode]) + self._modrm_reg(src, dst),
            f"{mnemonic} {_R64[dst]},{_R64[src]}",
        )

    def add_rr(self, dst: int, src: int) -> None:
        self._alu_rr(0x01, "add", dst, src)

    def sub_rr(self, dst: int, src: int) -> None:
        self._alu_rr(0x29, "sub", dst, src)

    def or_rr(self, dst: int, src: int) -> None:
        self._alu_rr(0x09, "or", dst, src)

    def xor_rr(self, dst: int, src: int) -> None:
        self._alu_rr(0x31, "xor", dst, src)

    def shl_ri(self, dst: int, imm: int) -> None:
        self._emit(
            self._rex(1, 0, dst) + b"\xC1" + self._modrm_reg(4, dst)
            + bytes([imm & 0x3F]),
            f"shl {_R64[dst]},{hex(imm)}",
        )

    def push_r(self, reg: int) -> None:
        prefix = b"\x41" if reg >= 8 else b""
        self._emit(prefix + bytes([0x50 | (reg & 7)]), f"push {_R64[reg]}")

    def pop_r(self, reg: int) -> None:
        prefix = b"\x41" if reg >= 8 else b""
        self._emit(prefix + bytes([0x58 | (reg & 7)]), f"pop {_R64[reg]}")

    def mov_store32(self, base: int, disp: int, src: int) -> None:
        self._emit(
            self._rex(0, src, base) + b"\x89" + self._modrm_mem(src, base, disp),
            f"mov {_mem_text(base, disp)},{_R32[src]}",
        )

    def mov_load32(self, dst: int, base: int, disp: int) -> None:
        self._emit(
            self._rex(0, dst, base) + b"\x8B" + self._modrm_mem(dst, base, disp),
            f"mov {_R32[dst]},{_mem_text(base, disp)}",
        )

    def jne(self, label: str) -> None:
        self._emit(b"\x0F\x85", None)
        self._fixups.append((len(self._code), label))
        self._emit(b"\x00\x00\x00\x00", f"jne {label}")

    def ret(self) -> None:
        self._emit(b"\xC3", "ret")

    # ---- serialization, timing, and FP-environment access ------------

    def cpuid(self) -> None:
        self._emit(b"\x0F\xA2", "cpuid")

    def lfence(self) -> None:
        self._emit(b"\x0F\xAE\xE8", "lfence")

    def rdtsc(self) -> None:
        self._emit(b"\x0F\x31", "rdtsc")

    def rdtscp(self) -> None:
        self._emit(b"\x0F\x01\xF9", "rdtscp")

    def xgetbv(self) -> None:
        self._emit(b"\x0F\x01\xD0", "xgetbv")

    def stmxcsr_mem(self, base: int, disp: int) -> None:
        self._emit(
            b"\x0F\xAE" + self._modrm_mem(3, base, disp),
            f"stmxcsr {_mem_text(base, disp)}",
        )

    def ldmxcsr_mem(self, base: int, disp: int) -> None:
        self._emit(
            b"\x0F\xAE" + self._modrm_mem(2, base, disp),
            f"ldmxcsr {_mem_text(base, disp)}",
        )

    # ---- VEX-encoded AVX ----------------------------------------------

    def _vex3(self, mmap: int, w: int, vvvv: int | None, l: int, pp: int,
              reg: int, rm: int) -> bytes:
        for operand in (vvvv, reg, rm):
            if operand is not None and not 0 <= operand <= 15:
                raise ValueError(f"register number {operand} out of range")
        # vvvv and R/X/B are stored inverted; "no vvvv operand" encodes as 0b1111
        enc_vvvv = 0xF if vvvv is None else ((~vvvv) & 0xF)
        b1 = ((((reg >> 3) & 1) ^ 1) << 7) | (1 << 6) | ((((rm >> 3) & 1) ^ 1) << 5) | mmap
        b2 = (w << 7) | (enc_vvvv << 3) | (l << 2) | pp
        return bytes([0xC4, b1, b2])

    def _vex_rr(self, mmap: int, w: int, pp: int, opcode: int, mnemonic: str,
                dst: int, vvvv: int | None, src: int) -> None:
        code = self._vex3(mmap, w, vvvv, 1, pp, dst, src) + bytes([opcode])
        code += self._modrm_reg(dst, src)
        if vvvv is None:
            text = f"{mnemonic} ymm{dst},ymm{src}"
        else:
            text = f"{mnemonic} ymm{dst},ymm{vvvv},ymm{src}"
        self._emit(code, text)

    def _vex_rm(self, mmap: int, w: int, pp: int, opcode: int,
                reg: int, base: int, disp: int) -> bytes:
        return (self._vex3(mmap, w, None, 1, pp, reg, base) + bytes([opcode])
                + self._modrm_mem(reg, base, disp))

    def vaddpd(self, dst: int, src1: int, src2: int) -> None:
        self._vex_rr(1, 0, 1, 0x58, "vaddpd", dst, src1, src2)

    def vmulpd(self, dst: int, src1: int, src2: int) -> None:
        self._vex_rr(1, 0, 1, 0x59, "vmulpd", dst, src1, src2)

    def vdivpd(self, dst: int, src1: int, src2: int) -> None:
        self._vex_rr(1, 0, 1, 0x5E, "vdivpd", dst, src1, src2)

    def vfmadd231pd(self, dst: int, src1: int, src2: int) -> None:
        # dst = src1 * src2 + dst (FMA3, 0F38 map, W=1 for packed double)
        self._vex_rr(2, 1, 1, 0xB8, "vfmadd231pd", dst, src1, src2)

    def vmovapd_rr(self, dst: int, src: int) -> None:
        self._vex_rr(1, 0, 1, 0x28, "vmovapd", dst, None, src)

    def vmovupd_load(self, dst: int, base: int, disp: int) -> None:
        self._emit(
            self._vex_rm(1, 0, 1, 0x10, dst, base, disp),
            f"vmovupd ymm{dst},{_mem_text(base, disp)}",
        )

    def vmovupd_store(self, base: int, disp: int, src: int) -> None:
        self._emit(
            self._vex_rm(1, 0, 1, 0x11, src, base, disp),
            f"vmovupd {_mem_text(base, disp)},ymm{src}",
        )

    def vzeroupper(self) -> None:
        self._emit(b"\xC5\xF8\x77", "vzeroupper")
