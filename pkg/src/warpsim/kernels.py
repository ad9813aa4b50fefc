"""Built-in benchmark kernels and their per-lane loop-bound patterns.

Three kernels exercise the divergence machinery:

* ``single``: one counted loop whose upper bound is a per-lane launch
  value.  Lanes with smaller bounds drop out early, one DIV token per
  dropout, and the warp re-converges at the trailing pop-bit NOP.
* ``double``: the same loop nested inside an outer counted loop, both
  bounds fed from the same per-lane value.  The inner re-convergence
  point is re-armed by a fresh SSY on every outer iteration.
* ``single-instrumented``: the single loop with a cycle-counter read and
  a per-iteration timestamp store inside the body plus one trailing
  timestamp after the re-convergence point, so cost can be attributed
  before/after the stack unwinding.

Register conventions (all kernels): R0 accumulator, R4/R6/R7 loop
counters, bounds arrive in the registers listed in ``BOUND_REGISTERS``.
Programs are built programmatically so label targets stay correct under
edits; render them with :func:`warpsim.isa.format_program`.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Sequence, Union

from .core import FULL_MASK, LaunchConfig, WARP_SIZE
from .cost import ArchProfile
from .errors import ProgramError
from .isa import Opcode, Program, ProgramBuilder

# float32-exact accumulator steps (printed in full decimal digits).
BODY_STEP = 1.3332999944686889648
OUTER_STEP = 2.3333001136779785156

# Slot index of the post-unwind timestamp; in-loop slots are 1..32.
FINAL_TIMESTAMP_SLOT = 33


class KernelId(str, Enum):
    SINGLE_LOOP = "single"
    DOUBLE_LOOP = "double"
    SINGLE_LOOP_INSTRUMENTED = "single-instrumented"


# Launch registers that receive the per-lane loop bounds.
BOUND_REGISTERS = {
    KernelId.SINGLE_LOOP: ("R5",),
    KernelId.DOUBLE_LOOP: ("R8", "R9"),
    KernelId.SINGLE_LOOP_INSTRUMENTED: ("R5",),
}


@dataclass(frozen=True)
class BoundPattern:
    """Per-lane loop limits with ``n`` lanes divergent from the rest.

    Lane ``t`` gets 32 for ``t <= 31 - n`` and ``63 - n - t`` otherwise,
    so the last ``n`` lanes count 31, 30, ... down to ``32 - n``.
    """

    n: int
    bounds: tuple[int, ...]


def bound_pattern(n: int) -> BoundPattern:
    if not 0 <= n <= 31:
        raise ProgramError(f"divergent-thread count must be in 0..31, got {n}")
    bounds = tuple(32 if t <= 31 - n else 63 - n - t for t in range(WARP_SIZE))
    return BoundPattern(n=n, bounds=bounds)


@lru_cache(maxsize=None)
def single_loop_program() -> Program:
    """Counted loop with per-lane bound in R5; counter R4, accumulator R0."""
    b = ProgramBuilder()
    b.emit(Opcode.MOV, dst=4, imm=0)                       # i = 0
    b.emit(Opcode.MOV, dst=0, imm=0)                       # accumulator
    b.emit(Opcode.ISETP_LT, pdst=0, src_a=5, imm=1)        # guard: bound < 1
    b.emit(Opcode.CLOCK, dst=6)                            # opening clock read
    b.emit(Opcode.SSY, target="join")
    b.emit(Opcode.BRA, target="unwind", pred=0)
    b.emit(Opcode.NOP)
    b.emit(Opcode.NOP)
    b.label("body")
    b.emit(Opcode.IADD, dst=4, src_a=4, imm=1)
    b.emit(Opcode.FADD_IMM, dst=0, src_a=0, imm=BODY_STEP)
    b.emit(Opcode.ISETP_LT, pdst=0, src_a=4, src_b=5)      # i < bound
    b.emit(Opcode.BRA, target="body", pred=0)
    b.label("unwind")
    b.emit(Opcode.NOP, pop_bit=True)
    b.label("join")
    b.emit(Opcode.CLOCK, dst=7)                            # closing clock read
    b.emit(Opcode.EXIT)
    return b.build()


@lru_cache(maxsize=None)
def double_loop_program() -> Program:
    """Nested counted loops; outer bound R8, inner bound R9.

    Outer counter R6, inner counter R7, accumulator R0.  The inner
    guard predicate is recomputed before the inner SSY on every outer
    iteration, and the inner SSY points past the inner unwind at the
    outer increment, matching how such loops compile.
    """
    b = ProgramBuilder()
    b.emit(Opcode.MOV, dst=0, imm=0)                       # accumulator
    b.emit(Opcode.ISETP_LT, pdst=0, src_a=8, imm=1)        # outer guard: bound < 1
    b.emit(Opcode.CLOCK, dst=10)                           # opening clock read
    b.emit(Opcode.SSY, target="join")
    b.emit(Opcode.BRA, target="outer_unwind", pred=0)
    b.emit(Opcode.MOV, dst=6, imm=0)                       # j = 0
    b.label("outer_body")
    b.emit(Opcode.ISETP_LT, pdst=0, src_a=9, imm=1)        # inner guard: bound < 1
    b.emit(Opcode.MOV, dst=7, imm=0)                       # i = 0
    b.emit(Opcode.SSY, target="outer_step")
    b.emit(Opcode.BRA, target="inner_unwind", pred=0)
    b.label("inner_body")
    b.emit(Opcode.IADD, dst=7, src_a=7, imm=1)
    b.emit(Opcode.FADD_IMM, dst=0, src_a=0, imm=BODY_STEP)
    b.emit(Opcode.ISETP_LT, pdst=0, src_a=7, src_b=9)      # i < inner bound
    b.emit(Opcode.BRA, target="inner_body", pred=0)
    b.label("inner_unwind")
    b.emit(Opcode.NOP, pop_bit=True)
    b.label("outer_step")
    b.emit(Opcode.IADD, dst=6, src_a=6, imm=1)
    b.emit(Opcode.FADD_IMM, dst=0, src_a=0, imm=OUTER_STEP)
    b.emit(Opcode.ISETP_LT, pdst=0, src_a=6, src_b=8)      # j < outer bound
    b.emit(Opcode.BRA, target="outer_body", pred=0)
    b.label("outer_unwind")
    b.emit(Opcode.NOP, pop_bit=True)
    b.label("join")
    b.emit(Opcode.CLOCK, dst=11)                           # closing clock read
    b.emit(Opcode.EXIT)
    return b.build()


@lru_cache(maxsize=None)
def instrumented_single_loop_program() -> Program:
    """Single loop with per-iteration timestamps and a post-unwind one.

    Each iteration stores the cycle counter to slot ``i`` (1..32); after
    the re-convergence point one more timestamp goes to slot 33.  Lane
    timelines land in ``RunResult.slots``.
    """
    b = ProgramBuilder()
    b.emit(Opcode.MOV, dst=4, imm=0)                       # i = 0
    b.emit(Opcode.MOV, dst=0, imm=0)                       # accumulator
    b.emit(Opcode.ISETP_LT, pdst=0, src_a=5, imm=1)        # guard: bound < 1
    b.emit(Opcode.CLOCK, dst=7)                            # opening clock read
    b.emit(Opcode.SSY, target="join")
    b.emit(Opcode.BRA, target="unwind", pred=0)
    b.label("body")
    b.emit(Opcode.IADD, dst=4, src_a=4, imm=1)
    b.emit(Opcode.FADD_IMM, dst=0, src_a=0, imm=BODY_STEP)
    b.emit(Opcode.CLOCK, dst=6)
    b.emit(Opcode.STORE_SLOT, slot_reg=4, src_a=6)         # timestamp slot i
    b.emit(Opcode.ISETP_LT, pdst=0, src_a=4, src_b=5)      # i < bound
    b.emit(Opcode.BRA, target="body", pred=0)
    b.label("unwind")
    b.emit(Opcode.NOP, pop_bit=True)
    b.label("join")
    b.emit(Opcode.CLOCK, dst=6)
    b.emit(Opcode.STORE_SLOT, slot=FINAL_TIMESTAMP_SLOT, src_a=6)
    b.emit(Opcode.EXIT)
    return b.build()


_BUILDERS = {
    KernelId.SINGLE_LOOP: single_loop_program,
    KernelId.DOUBLE_LOOP: double_loop_program,
    KernelId.SINGLE_LOOP_INSTRUMENTED: instrumented_single_loop_program,
}


def kernel_program(kernel: Union[KernelId, str]) -> Program:
    return _BUILDERS[KernelId(kernel)]()


def kernel_launch(kernel: Union[KernelId, str], bounds: Sequence[int],
                  profile: Union[ArchProfile, None] = None,
                  active_mask: int = FULL_MASK) -> LaunchConfig:
    """Launch configuration feeding per-lane bounds to a built-in kernel."""
    kernel = KernelId(kernel)
    if len(bounds) != WARP_SIZE:
        raise ProgramError(f"need {WARP_SIZE} bounds, got {len(bounds)}")
    registers = {name: tuple(bounds) for name in BOUND_REGISTERS[kernel]}
    if profile is None:
        return LaunchConfig(registers=registers, active_mask=active_mask)
    return LaunchConfig(registers=registers, active_mask=active_mask, profile=profile)
