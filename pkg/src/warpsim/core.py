"""32-lane warp interpreter with synchronization-stack re-convergence.

Execution follows the classic branch-synchronization-stack discipline:

* ``SSY target`` pushes a SYNC token carrying the current active mask
  and the re-convergence address, then falls through.
* A predicated branch taken by *no* active lane falls through; taken by
  *all* active lanes it just jumps; taken by a proper subset it pushes a
  DIV token holding the not-taken lanes and the fall-through address,
  masks execution down to the taken lanes, and jumps.
* An instruction with the pop-bit set first pops a token, restoring
  active mask and pc from it, and then executes as the carrier under the
  restored mask, without advancing pc afterwards.  A DIV token whose pc
  points back at the carrier therefore re-executes it, once per parked
  lane group, until the final SYNC pop re-converges the warp.
* Everything else executes lane-wise on active lanes and falls through.

Lane state is 32-bit: integer results wrap, float results round to
float32.  Inactive lanes never observe register, predicate, or slot
writes.  A run is a pure function of (program, launch, profile); equal
inputs give bit-identical results.

The live cycle counter implements the pop-attributed cost policy: each
instruction advances it by the profile's issue cost, except that a
DIV-pop carrier advances it by ``div_cost`` total (the penalty includes
the carrier's execution), and spill traffic adds its store/load legs
where it occurs.  ``CLOCK`` reads the counter at issue, before the
instruction's own charge.

Programs are decoded once into a flat micro-op form and executed from
that; the decoded form is cached on the program object.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

from . import isa
from .cost import KEPLER, ArchProfile, CostEvents
from .errors import ModelViolation, ProgramError, RunawayLoopError
from .isa import Instruction, Opcode, PRED_PT, Program, REG_RZ
from .stack import StackEvent, Token, TokenKind

WARP_SIZE = 32
FULL_MASK = 0xFFFFFFFF
DEFAULT_BUDGET = 10_000_000

_MASK32 = 0xFFFFFFFF
_BIAS = 0x80000000
_ZEROS = (0,) * WARP_SIZE
_NO_EVENTS: tuple = ()
_PACK32 = struct.Struct(f"<{WARP_SIZE}f")
_SPILL_EVENTS = frozenset((StackEvent.SPILL_STORE, StackEvent.SPILL_LOAD))


def _with_tokens(events, token):
    """Pair stack events with the token they moved; spills carry none."""
    return tuple((event, None if event in _SPILL_EVENTS else token)
                 for event in events)

_lanes_cache: dict[int, tuple[int, ...]] = {}


def lanes(mask: int) -> tuple[int, ...]:
    """Lane indices of the set bits of a 32-bit mask (bit t = lane t)."""
    cached = _lanes_cache.get(mask)
    if cached is None:
        cached = tuple(t for t in range(WARP_SIZE) if mask >> t & 1)
        _lanes_cache[mask] = cached
    return cached


def _wrap32(value: int) -> int:
    return ((value + _BIAS) & _MASK32) - _BIAS


@dataclass
class LaunchConfig:
    """Initial per-lane register values, active mask, and cost profile.

    ``registers`` maps register names ("R5") to 32 per-lane values; all
    unnamed registers start at 0.  This stands in for the kernel-
    parameter loads a real launch would perform.
    """

    registers: Mapping[str, Sequence[Union[int, float]]] = field(default_factory=dict)
    active_mask: int = FULL_MASK
    profile: ArchProfile = field(default_factory=lambda: KEPLER)


class WarpState:
    """Mutable execution state of one simulated warp."""

    __slots__ = ("pc", "active_mask", "launch_mask", "regs", "preds", "stack",
                 "cycle", "halted", "slots", "profile",
                 "_issue_cost", "_div_cost", "_store_cost", "_load_cost")

    def __init__(self, program: Program, launch: LaunchConfig):
        if not 0 < launch.active_mask <= FULL_MASK:
            raise ProgramError(f"launch active mask {launch.active_mask:#x} invalid")
        self.pc = 0
        self.active_mask = launch.active_mask
        self.launch_mask = launch.active_mask
        self.regs: list[list] = [[0] * WARP_SIZE for _ in range(program.register_file_size)]
        for name, values in launch.registers.items():
            index = isa.register_index(name, program.register_file_size)
            if index == REG_RZ:
                raise ProgramError("cannot assign launch values to RZ")
            if len(values) != WARP_SIZE:
                raise ProgramError(
                    f"launch register {name} needs {WARP_SIZE} values, got {len(values)}"
                )
            self.regs[index] = [isa.f32(v) if isinstance(v, float) else _wrap32(int(v))
                                for v in values]
        self.preds = [0] * program.predicate_file_size
        self.stack = launch.profile.new_stack()
        self.cycle = 0
        self.halted = False
        self.slots: list[dict[int, Union[int, float]]] = [{} for _ in range(WARP_SIZE)]
        self.profile = launch.profile
        self._issue_cost = launch.profile.issue_cost
        self._div_cost = launch.profile.div_cost
        self._store_cost = launch.profile.spill_store_cost
        self._load_cost = launch.profile.spill_load_cost


@dataclass(frozen=True)
class EventRecord:
    """One stack event with enough context to audit the mask discipline.

    ``depth`` is the logical stack depth after the instruction that
    produced the event; ``active_before``/``active_after`` bracket that
    instruction.  Spill events carry no token.
    """

    ordinal: int
    kind: StackEvent
    token_mask: Union[int, None]
    token_pc: Union[int, None]
    depth: int
    active_before: int
    active_after: int


@dataclass(frozen=True)
class TraceRecord:
    """Post-instruction snapshot for trace emission."""

    ordinal: int
    pc: int
    opcode: str
    active_mask: int
    depth: int
    events: tuple[str, ...]
    cycle: int


@dataclass(frozen=True)
class RunResult:
    """Counters, histories, and final state of one completed run."""

    events: CostEvents
    executed_instructions: int
    executed_branches: int
    cycles: int
    max_depth: int
    depth_history: tuple[tuple[int, int], ...]
    registers: tuple[tuple, ...]
    slots: tuple[dict, ...]
    event_log: tuple[EventRecord, ...]
    final_active_mask: int
    launch_mask: int
    trace: Union[tuple[TraceRecord, ...], None] = None

    @property
    def sync_pushes(self) -> int:
        return self.events.sync_pushes

    @property
    def div_pushes(self) -> int:
        return self.events.div_pushes

    @property
    def pops(self) -> int:
        return self.events.pops

    @property
    def spill_stores(self) -> int:
        return self.events.spill_stores

    @property
    def spill_loads(self) -> int:
        return self.events.spill_loads

    def register(self, name: str) -> tuple:
        """Final per-lane values of a register by name."""
        index = isa.register_index(name, len(self.registers))
        return _ZEROS if index == REG_RZ else self.registers[index]


# Micro-op kinds the decoder lowers instructions to.  Control kinds come
# first so the executor can split on a single integer compare.
(_K_SSY, _K_BRA, _K_EXIT, _K_NOP, _K_IADD_RR, _K_IADD_RI, _K_FADD, _K_ISETP_RR,
 _K_ISETP_RI, _K_MOV_R, _K_MOV_I, _K_CLOCK, _K_STSLOT_R, _K_STSLOT_I) = range(14)

_CODE_ATTR = "_warpsim_code"


def _decode(ins: Instruction) -> tuple:
    """Lower one instruction to (kind, pop_bit, a, b) for fast dispatch."""
    op = ins.opcode
    if op is Opcode.SSY:
        return (_K_SSY, False, ins.target, None)
    if op is Opcode.BRA:
        pred = None if ins.pred == PRED_PT else ins.pred
        return (_K_BRA, False, ins.target, pred)
    if op is Opcode.EXIT:
        return (_K_EXIT, False, None, None)
    if op is Opcode.NOP:
        return (_K_NOP, ins.pop_bit, None, None)
    pop = ins.pop_bit
    if op is Opcode.IADD:
        if ins.src_b is not None:
            return (_K_IADD_RR, pop, ins.dst, (ins.src_a, ins.src_b))
        # Bias folded into the immediate so the lane loop wraps in one
        # add/mask/subtract sequence.
        return (_K_IADD_RI, pop, ins.dst, (ins.src_a, ins.imm + _BIAS))
    if op is Opcode.FADD_IMM:
        return (_K_FADD, pop, ins.dst, (ins.src_a, ins.imm))
    if op is Opcode.ISETP_LT:
        if ins.src_b is not None:
            return (_K_ISETP_RR, pop, ins.pdst, (ins.src_a, ins.src_b))
        return (_K_ISETP_RI, pop, ins.pdst, (ins.src_a, ins.imm))
    if op is Opcode.MOV:
        if ins.src_a is not None:
            return (_K_MOV_R, pop, ins.dst, ins.src_a)
        return (_K_MOV_I, pop, ins.dst, ins.imm)
    if op is Opcode.CLOCK:
        return (_K_CLOCK, pop, ins.dst, None)
    if op is Opcode.STORE_SLOT:
        if ins.slot_reg is not None:
            return (_K_STSLOT_R, pop, ins.slot_reg, ins.src_a)
        return (_K_STSLOT_I, pop, ins.slot, ins.src_a)
    raise ProgramError(f"cannot decode opcode {op}")  # pragma: no cover


def _code_for(program: Program) -> tuple[tuple, ...]:
    """Decoded micro-ops for a program, cached on the (frozen) instance."""
    code = getattr(program, _CODE_ATTR, None)
    if code is None:
        isa.validate_program(program)
        code = tuple(_decode(ins) for ins in program.instructions)
        object.__setattr__(program, _CODE_ATTR, code)
    return code


def exec_predicated_branch(state: WarpState, target: int, predicate: int):
    """Branch the active lanes whose predicate bit is set.

    Returns the stack events as ((event, token), ...); only the partial
    case pushes a DIV token parking the not-taken lanes at pc+1.
    """
    active = state.active_mask
    taken = predicate & active
    if taken == 0:
        state.pc += 1
        return _NO_EVENTS
    if taken == active:
        state.pc = target
        return _NO_EVENTS
    token = Token(active & ~taken & _MASK32, TokenKind.DIV, state.pc + 1)
    events = state.stack.push(token)
    state.active_mask = taken
    state.pc = target
    return _with_tokens(events, token)


def step(state: WarpState, program: Program):
    """Execute one instruction; returns ((StackEvent, Token|None), ...).

    Dispatch order mirrors the hardware model: SSY, then predicated
    branches, then the pop-bit, then plain lane-wise execution.
    """
    code = _code_for(program)
    pc = state.pc
    if not 0 <= pc < len(code):
        raise ModelViolation(f"program counter {pc} out of range")
    return _exec_one(state, code[pc])


def _exec_one(state: WarpState, item: tuple):
    kind, pop, a, b = item

    if kind == _K_SSY:
        token = Token(state.active_mask, TokenKind.SYNC, a)
        events = state.stack.push(token)
        state.pc += 1
        state.cycle += state._issue_cost
        if len(events) == 2:  # the push evicted a chunk first
            state.cycle += state._store_cost
        return _with_tokens(events, token)

    if kind == _K_BRA:
        predicate = _MASK32 if b is None else state.preds[b]
        events = exec_predicated_branch(state, a, predicate)
        state.cycle += state._issue_cost
        if events and len(events) == 2:
            state.cycle += state._store_cost
        return events

    if pop:
        token, raw_events = state.stack.pop()
        state.active_mask = token.mask
        state.pc = token.pc
        _exec_plain(state, kind, a, b)
        charge = state._div_cost if token.kind is TokenKind.DIV else state._issue_cost
        if len(raw_events) == 2:  # the pop reloaded a chunk first
            charge += state._load_cost
        state.cycle += charge
        return _with_tokens(raw_events, token)

    _exec_plain(state, kind, a, b)
    if kind != _K_EXIT:
        state.pc += 1
    state.cycle += state._issue_cost
    return _NO_EVENTS


def _exec_plain(state: WarpState, kind: int, a, b) -> None:
    """Lane-wise execution of non-control micro-ops under the active mask."""
    if kind == _K_NOP:
        return
    regs = state.regs
    active = state.active_mask

    if kind == _K_IADD_RI:
        src, biased = b
        values = [((x + biased) & 0xFFFFFFFF) - 0x80000000
                  for x in (_ZEROS if src == REG_RZ else regs[src])]
    elif kind == _K_IADD_RR:
        src_a, src_b = b
        values = [((x + y + 0x80000000) & 0xFFFFFFFF) - 0x80000000
                  for x, y in zip(_ZEROS if src_a == REG_RZ else regs[src_a],
                                  _ZEROS if src_b == REG_RZ else regs[src_b])]
    elif kind == _K_FADD:
        src, imm = b
        source = _ZEROS if src == REG_RZ else regs[src]
        # Sums are exact in double precision, then rounded once to
        # float32, which equals a correctly rounded float32 addition.
        values = list(_PACK32.unpack(_PACK32.pack(*[x + imm for x in source])))
    elif kind == _K_ISETP_RR or kind == _K_ISETP_RI:
        if kind == _K_ISETP_RR:
            src_a, src_b = b
            va = _ZEROS if src_a == REG_RZ else regs[src_a]
            vb = _ZEROS if src_b == REG_RZ else regs[src_b]
            mask = 0
            for t in lanes(active):
                if va[t] < vb[t]:
                    mask |= 1 << t
        else:
            src, imm = b
            va = _ZEROS if src == REG_RZ else regs[src]
            mask = 0
            for t in lanes(active):
                if va[t] < imm:
                    mask |= 1 << t
        if a != PRED_PT:
            state.preds[a] = (state.preds[a] & ~active & _MASK32) | mask
        return
    elif kind == _K_MOV_I:
        values = [b] * WARP_SIZE
    elif kind == _K_MOV_R:
        values = list(_ZEROS if b == REG_RZ else regs[b])
    elif kind == _K_CLOCK:
        values = [_wrap32(state.cycle)] * WARP_SIZE
    elif kind == _K_STSLOT_R or kind == _K_STSLOT_I:
        source = _ZEROS if b == REG_RZ else regs[b]
        slots = state.slots
        if kind == _K_STSLOT_R:
            indices = _ZEROS if a == REG_RZ else regs[a]
            for t in lanes(active):
                slots[t][int(indices[t])] = source[t]
        else:
            for t in lanes(active):
                slots[t][a] = source[t]
        return
    elif kind == _K_EXIT:
        if state.stack.depth != 0:
            raise ModelViolation(
                f"EXIT with {state.stack.depth} tokens still on the stack"
            )
        if state.active_mask != state.launch_mask:
            raise ModelViolation(
                f"EXIT with active mask {state.active_mask:#010x}, "
                f"expected launch mask {state.launch_mask:#010x}"
            )
        state.halted = True
        return
    else:  # pragma: no cover - exhaustive over micro-op kinds
        raise ModelViolation(f"cannot execute micro-op kind {kind}")

    # Masked register write; RZ destinations are discarded.
    if a == REG_RZ:
        return
    if active == FULL_MASK:
        regs[a] = values
    else:
        reg = regs[a]
        for t in lanes(active):
            reg[t] = values[t]


def run(program: Program, launch: Union[LaunchConfig, None] = None, *,
        budget: int = DEFAULT_BUDGET, record_trace: bool = False) -> RunResult:
    """Run a program to EXIT and collect counters and histories.

    Raises :class:`RunawayLoopError` once ``budget`` instructions have
    executed without reaching EXIT, and :class:`ModelViolation` for pops
    from an empty stack, out-of-range program counters, or an EXIT that
    leaves tokens on the stack.
    """
    code = _code_for(program)
    if launch is None:
        launch = LaunchConfig()
    state = WarpState(program, launch)

    counts = [0] * len(StackEvent)
    event_log: list[EventRecord] = []
    depth_history: list[tuple[int, int]] = [(0, 0)]
    trace: Union[list[TraceRecord], None] = [] if record_trace else None
    executed = 0
    branches = 0
    depth = 0
    max_depth = 0
    length = len(code)
    stack = state.stack

    while not state.halted:
        if executed >= budget:
            raise RunawayLoopError(
                f"no EXIT after {budget} instructions; raise the budget or fix the loop"
            )
        pc = state.pc
        if not 0 <= pc < length:
            raise ModelViolation(f"program counter {pc} out of range")
        item = code[pc]
        active_before = state.active_mask
        events = _exec_one(state, item)
        executed += 1
        if item[0] == _K_BRA:
            branches += 1

        if events:
            depth = stack.depth
            active_after = state.active_mask
            for event, token in events:
                counts[event] += 1
                mask = token.mask if token is not None else None
                pc_of = token.pc if token is not None else None
                event_log.append(EventRecord(executed, event, mask, pc_of,
                                             depth, active_before, active_after))
            last = depth_history[-1][1]
            if depth != last:
                depth_history.append((executed, depth))
                if depth > max_depth:
                    max_depth = depth
        if trace is not None:
            ins = program.instructions[pc]
            trace.append(TraceRecord(
                ordinal=executed,
                pc=pc,
                opcode=ins.opcode.value + (".S" if ins.pop_bit else ""),
                active_mask=state.active_mask,
                depth=depth,
                events=tuple(event.name for event, _ in events),
                cycle=state.cycle,
            ))

    return RunResult(
        events=CostEvents.from_counts(counts),
        executed_instructions=executed,
        executed_branches=branches,
        cycles=state.cycle,
        max_depth=max_depth,
        depth_history=tuple(depth_history),
        registers=tuple(tuple(reg) for reg in state.regs),
        slots=tuple(dict(s) for s in state.slots),
        event_log=tuple(event_log),
        final_active_mask=state.active_mask,
        launch_mask=state.launch_mask,
        trace=tuple(trace) if trace is not None else None,
    )


def verify_result(result: RunResult) -> RunResult:
    """Audit the stack and mask discipline of a completed run.

    Checks push/pop and spill balance, a clean final state, the mask
    partition at every divergence, and full-mask restoration at every
    SYNC pop.  Raises :class:`ModelViolation` on the first failure;
    returns the result for chaining.
    """
    events = result.events
    if events.pushes != events.pops:
        raise ModelViolation(f"push/pop imbalance: {events.pushes} != {events.pops}")
    if events.spill_stores != events.spill_loads:
        raise ModelViolation(
            f"spill imbalance: {events.spill_stores} stores, {events.spill_loads} loads"
        )
    if result.final_active_mask != result.launch_mask:
        raise ModelViolation("run ended without full re-convergence")

    history = result.depth_history
    if not history or history[0] != (0, 0) or history[-1][1] != 0:
        raise ModelViolation("depth history must start and end at depth 0")
    ups = downs = 0
    for (_, prev), (_, cur) in zip(history, history[1:]):
        if cur == prev + 1:
            ups += 1
        elif cur == prev - 1:
            downs += 1
        else:
            raise ModelViolation(f"depth history jumps from {prev} to {cur}")
    if ups != events.pushes or downs != events.pops:
        raise ModelViolation("depth history inconsistent with push/pop counters")
    if max((d for _, d in history), default=0) != result.max_depth:
        raise ModelViolation("max_depth inconsistent with depth history")

    for record in result.event_log:
        if record.kind is StackEvent.DIV_PUSH:
            if record.token_mask == 0:
                raise ModelViolation("DIV token with empty mask")
            if record.token_mask & record.active_after:
                raise ModelViolation("DIV token overlaps the surviving active mask")
            if (record.token_mask | record.active_after) != record.active_before:
                raise ModelViolation("divergence does not partition the active mask")
        elif record.kind in (StackEvent.SYNC_POP, StackEvent.DIV_POP):
            if record.active_after != record.token_mask:
                raise ModelViolation("pop did not restore the token mask")
    return result
