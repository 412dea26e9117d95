"""Encoder checks: frozen byte sequences and objdump cross-validation."""

import re
import shutil
import subprocess
import tempfile

import pytest

from fpcost import x86
from fpcost.fpmodel import Operation
from fpcost.kernels import KernelSpec, KernelVariant, build_kernel

import hwsupport

# (builder, expected bytes, expected listing lines), verified once against
# binutils objdump -M intel and frozen here
ENCODINGS = [
    (lambda a: a.vaddpd(0, 1, 2), "c4e17558c2", ["vaddpd ymm0,ymm1,ymm2"]),
    (lambda a: a.vmulpd(9, 1, 5), "c4617559cd", ["vmulpd ymm9,ymm1,ymm5"]),
    (lambda a: a.vdivpd(3, 15, 8), "c4c1055ed8", ["vdivpd ymm3,ymm15,ymm8"]),
    (lambda a: a.vfmadd231pd(0, 1, 5), "c4e2f5b8c5",
     ["vfmadd231pd ymm0,ymm1,ymm5"]),
    (lambda a: a.vfmadd231pd(13, 4, 14), "c442ddb8ee",
     ["vfmadd231pd ymm13,ymm4,ymm14"]),
    (lambda a: a.vmovapd_rr(13, 14), "c4417d28ee", ["vmovapd ymm13,ymm14"]),
    (lambda a: a.vmovupd_load(1, x86.RDI, 0x20), "c4e17d104f20",
     ["vmovupd ymm1,[rdi+0x20]"]),
    (lambda a: a.vmovupd_store(x86.R8, 0, 0), "c4c17d1100",
     ["vmovupd [r8],ymm0"]),
    # rsp/r12 force a SIB byte, rbp/r13 cannot take the no-displacement form
    (lambda a: a.vmovupd_load(2, x86.RSP, 8), "c4e17d10542408",
     ["vmovupd ymm2,[rsp+0x8]"]),
    (lambda a: a.vmovupd_load(2, x86.RBP, 0), "c4e17d105500",
     ["vmovupd ymm2,[rbp]"]),
    (lambda a: a.vmovupd_load(2, x86.R12, 4), "c4c17d10542404",
     ["vmovupd ymm2,[r12+0x4]"]),
    (lambda a: a.vmovupd_load(2, x86.R13, 0), "c4c17d105500",
     ["vmovupd ymm2,[r13]"]),
    (lambda a: a.vmovupd_load(0, x86.RAX, 0x1000), "c4e17d108000100000",
     ["vmovupd ymm0,[rax+0x1000]"]),
    (lambda a: a.mov_rr(x86.R10, x86.RCX), "4989ca", ["mov r10,rcx"]),
    (lambda a: a.mov_ri(x86.R11, 625), "49c7c371020000", ["mov r11,0x271"]),
    (lambda a: a.add_ri(x86.RAX, 128), "4881c080000000", ["add rax,0x80"]),
    (lambda a: a.add_ri(x86.RSI, 1), "4883c601", ["add rsi,0x1"]),
    (lambda a: a.sub_ri(x86.RSP, 8), "4883ec08", ["sub rsp,0x8"]),
    (lambda a: a.add_rr(x86.RSI, x86.RDI), "4801fe", ["add rsi,rdi"]),
    (lambda a: a.sub_rr(x86.RAX, x86.RDI), "4829f8", ["sub rax,rdi"]),
    (lambda a: a.or_rr(x86.RAX, x86.RDX), "4809d0", ["or rax,rdx"]),
    (lambda a: a.xor_rr(x86.RSI, x86.RSI), "4831f6", ["xor rsi,rsi"]),
    (lambda a: a.shl_ri(x86.RDX, 32), "48c1e220", ["shl rdx,0x20"]),
    (lambda a: a.push_r(x86.RAX), "50", ["push rax"]),
    (lambda a: a.push_r(x86.R10), "4152", ["push r10"]),
    (lambda a: a.pop_r(x86.RDI), "5f", ["pop rdi"]),
    (lambda a: a.mov_store32(x86.RSP, 0, x86.RDI), "893c24",
     ["mov [rsp],edi"]),
    (lambda a: a.mov_load32(x86.RAX, x86.RSP, 0), "8b0424",
     ["mov eax,[rsp]"]),
    (lambda a: a.lfence(), "0faee8", ["lfence"]),
    (lambda a: a.rdtsc(), "0f31", ["rdtsc"]),
    (lambda a: a.rdtscp(), "0f01f9", ["rdtscp"]),
    (lambda a: a.cpuid(), "0fa2", ["cpuid"]),
    (lambda a: a.xgetbv(), "0f01d0", ["xgetbv"]),
    (lambda a: a.stmxcsr_mem(x86.RSP, 0), "0fae1c24", ["stmxcsr [rsp]"]),
    (lambda a: a.ldmxcsr_mem(x86.RSP, 0), "0fae1424", ["ldmxcsr [rsp]"]),
    (lambda a: a.vzeroupper(), "c5f877", ["vzeroupper"]),
    (lambda a: a.ret(), "c3", ["ret"]),
]


@pytest.mark.parametrize("build,expected_hex,expected_lines",
                         ENCODINGS, ids=[e[1] for e in ENCODINGS])
def test_frozen_encoding(build, expected_hex, expected_lines):
    a = x86.Assembler()
    build(a)
    assert a.finish().hex() == expected_hex
    assert a.listing().splitlines() == expected_lines


def test_backward_branch_fixup():
    a = x86.Assembler()
    a.label("top")
    a.add_ri(x86.RSI, 1)   # 4 bytes
    a.sub_ri(x86.RDI, 1)   # 4 bytes
    a.jne("top")           # 6 bytes, rel32 = -(4 + 4 + 6)
    code = a.finish()
    assert code.hex() == "4883c6014883ef010f85f2ffffff"
    assert a.listing().splitlines() == [
        "top:", "add rsi,0x1", "sub rdi,0x1", "jne top"]


def test_duplicate_label_rejected():
    a = x86.Assembler()
    a.label("x")
    with pytest.raises(ValueError):
        a.label("x")


def test_finish_is_final():
    a = x86.Assembler()
    a.ret()
    a.finish()
    with pytest.raises(RuntimeError):
        a.ret()


def test_register_numbering():
    assert x86.RAX == 0
    assert x86.RCX == 1
    assert x86.RDX == 2
    assert x86.RSP == 4
    assert x86.RBP == 5
    assert x86.R8 == 8
    assert x86.R15 == 15


def test_ymm_operand_range_checked():
    a = x86.Assembler()
    with pytest.raises(ValueError):
        a.vaddpd(16, 0, 0)
    with pytest.raises(ValueError):
        a.vaddpd(0, -1, 0)


# ---------------------------------------------------------------------------
# objdump cross-check of the full generated kernels
# ---------------------------------------------------------------------------

_STRIP = re.compile(r"\b(?:YMMWORD|DWORD) PTR ")


def _objdump(code: bytes) -> list[str]:
    with tempfile.NamedTemporaryFile(suffix=".bin") as f:
        f.write(code)
        f.flush()
        out = subprocess.run(
            ["objdump", "-D", "-b", "binary", "-m", "i386:x86-64",
             "-M", "intel", f.name],
            capture_output=True, text=True, check=True).stdout
    lines = []
    for line in out.splitlines():
        parts = line.split("\t")
        if len(parts) == 3:
            text = _STRIP.sub("", parts[2].strip())
            text = re.sub(r"\s+", " ", text)
            lines.append(text)
    return lines


def _normalize(listing: str) -> list[str]:
    lines = []
    for line in listing.splitlines():
        line = line.strip()
        if not line or line.startswith(";") or line.endswith(":"):
            continue
        lines.append(re.sub(r"\s+", " ", line))
    return lines


@pytest.mark.skipif(shutil.which("objdump") is None,
                    reason="objdump not available")
@hwsupport.needs_jit
@pytest.mark.parametrize("op", list(Operation), ids=lambda o: o.value)
@pytest.mark.parametrize("variant", list(KernelVariant), ids=lambda v: v.value)
def test_kernel_listing_matches_objdump(op, variant):
    unroll = 4
    if variant is KernelVariant.REG_ASM:
        spec = KernelSpec(op, variant, 16, unroll, 1, min_scalar_ops=1)
    else:
        spec = KernelSpec(op, variant, 256, unroll, 1, min_scalar_ops=1)
    kernel = build_kernel(spec)
    ours = _normalize(kernel.listing)
    theirs = _objdump(kernel.fn.code)
    assert len(ours) == len(theirs)
    for mine, ref in zip(ours, theirs):
        if mine.startswith("jne"):
            # the listing names a label, objdump prints the raw offset
            assert ref.startswith("jne"), (mine, ref)
        else:
            assert mine == ref
