"""Shared fixtures and independent oracles for the test suite.

The oracles here deliberately avoid the package's own machinery:
per-lane loop results come from plain numpy float32 scalar loops, and
stack spill behavior comes from a counter-only occupancy tracker driven
by an abstract push/pop sequence derived from loop structure alone.
"""

import numpy as np
import pytest

import warpsim as ws

BODY = np.float32(ws.BODY_STEP)
OUTER = np.float32(ws.OUTER_STEP)


def checked_run(program, launch=None, **kwargs):
    """run() plus the full invariant audit."""
    return ws.verify_result(ws.run(program, launch, **kwargs))


def single_oracle(bound):
    """(body count, accumulator) for one lane of the single loop."""
    acc = np.float32(0.0)
    count = 0
    if bound >= 1:
        i = 0
        while True:
            i += 1
            acc = np.float32(acc + BODY)
            count += 1
            if not i < bound:
                break
    return count, float(acc)


def double_oracle(bound):
    """(outer count, inner count, accumulator) for one lane, bounds equal."""
    acc = np.float32(0.0)
    outer = inner = 0
    if bound >= 1:
        j = 0
        while True:
            j += 1
            if bound >= 1:
                i = 0
                while True:
                    i += 1
                    acc = np.float32(acc + BODY)
                    inner += 1
                    if not i < bound:
                        break
            acc = np.float32(acc + OUTER)
            outer += 1
            if not j < bound:
                break
    return outer, inner, float(acc)


class RefOverlay:
    """Counter-only model of the capacity/chunk spill overlay."""

    def __init__(self, capacity=16, chunk=4):
        self.capacity = capacity
        self.chunk = chunk
        self.onchip = 0
        self.spilled = 0
        self.stores = 0
        self.loads = 0
        self.max_depth = 0
        self.pushes = 0
        self.pops = 0

    @property
    def depth(self):
        return self.onchip + self.spilled

    def push(self):
        spill = self.capacity is not None and self.onchip == self.capacity
        if spill:
            self.onchip -= self.chunk
            self.spilled += self.chunk
            self.stores += 1
        self.onchip += 1
        self.pushes += 1
        self.max_depth = max(self.max_depth, self.depth)
        return spill

    def pop(self):
        fill = self.onchip == 0
        if fill:
            assert self.spilled >= self.chunk
            self.onchip += self.chunk
            self.spilled -= self.chunk
            self.loads += 1
        self.onchip -= 1
        self.pops += 1
        return fill


def loop_stack_sequence(kernel, bounds):
    """Abstract push(+1)/pop(-1) sequence for a loop kernel.

    Derived from loop structure only: lanes with bound < 1 split off at
    the guard (one DIV, popped immediately when they reach the unwind
    point), lanes leave a loop at their bound value (one DIV per
    proper-subset departure), and each re-convergence point pops
    everything pushed above it.
    """
    live = [b for b in bounds if b >= 1]
    zeros = len(live) != len(bounds)
    seq = [+1]  # outer/only SYNC
    if not live:
        return seq + [-1]  # guard taken by everyone: straight to the pop
    guard = [+1, -1] if zeros else []  # guard DIV parks the loop lanes
    if kernel == "single":
        drops = len(set(live)) - 1
        return seq + guard + [+1] * drops + [-1] * drops + [-1]
    assert kernel == "double"
    seq += guard
    outer_divs = 0
    for j in range(1, max(live) + 1):
        active = [b for b in live if b >= j]
        seq.append(+1)  # inner SSY re-arms every outer iteration
        drops = len(set(active)) - 1
        seq += [+1] * drops + [-1] * drops
        seq.append(-1)  # inner SYNC pop
        survivors = [b for b in active if b >= j + 1]
        if survivors and len(survivors) != len(active):
            seq.append(+1)  # outer DIV
            outer_divs += 1
    seq += [-1] * outer_divs + [-1]  # outer unwind and SYNC pop
    return seq


def replay_overlay(seq, capacity=16, chunk=4):
    ref = RefOverlay(capacity, chunk)
    for move in seq:
        if move > 0:
            ref.push()
        else:
            ref.pop()
    assert ref.depth == 0
    return ref


def template_program(filler_nops, extra_adds):
    """Single-loop shape with a padded body, for randomized structure."""
    b = ws.ProgramBuilder()
    b.emit(ws.Opcode.MOV, dst=4, imm=0)
    b.emit(ws.Opcode.ISETP_LT, pdst=0, src_a=5, imm=1)
    b.emit(ws.Opcode.SSY, target="join")
    b.emit(ws.Opcode.BRA, target="unwind", pred=0)
    for _ in range(filler_nops):
        b.emit(ws.Opcode.NOP)
    b.label("body")
    b.emit(ws.Opcode.IADD, dst=4, src_a=4, imm=1)
    for k in range(extra_adds):
        b.emit(ws.Opcode.IADD, dst=6 + (k % 2), src_a=6 + (k % 2), imm=k)
    b.emit(ws.Opcode.FADD_IMM, dst=0, src_a=0, imm=ws.BODY_STEP)
    b.emit(ws.Opcode.ISETP_LT, pdst=0, src_a=4, src_b=5)
    b.emit(ws.Opcode.BRA, target="body", pred=0)
    b.label("unwind")
    b.emit(ws.Opcode.NOP, pop_bit=True)
    b.label("join")
    b.emit(ws.Opcode.EXIT)
    return b.build()


@pytest.fixture(scope="session")
def kepler_sweeps():
    """Full Kepler sweeps for both plain kernels, computed once."""
    return {kernel: ws.sweep(kernel, ws.KEPLER) for kernel in ("single", "double")}


@pytest.fixture(scope="session")
def kepler_results():
    """Full Kepler run results per kernel and n, computed once."""
    out = {}
    for kernel in ("single", "double", "single-instrumented"):
        out[kernel] = {n: checked_run(
            ws.kernel_program(kernel),
            ws.kernel_launch(kernel, ws.bound_pattern(n).bounds, ws.KEPLER),
        ) for n in range(32)}
    return out
