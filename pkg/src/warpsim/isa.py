"""Miniature SASS-like instruction set: labels, predicated branches, pop-bit.

The set is just large enough to express warp-divergent loop kernels:
stack management (SSY, the ``.S`` pop-bit suffix), predicated branches,
integer/float register arithmetic, a cycle-counter read, and a timestamp
store.  Addresses are instruction indices (0, 1, 2, ...), not byte
offsets; only ordering and identity of branch targets matter here.

Text format (UTF-8), one statement per line::

    [label:] [@Pk] MNEMONIC[.S] [operand {, operand}]

* ``#`` or ``;`` starts a comment running to end of line.
* Statements:

  ========================  =============================================
  ``SSY target``            push SYNC token for re-convergence at target
  ``[@Pk] BRA target``      predicated branch (bare BRA branches always)
  ``NOP``                   no operation
  ``IADD Rd, Ra, Rb|int``   32-bit wrapping integer add
  ``FADD32I Rd, Ra, float`` float32 add-immediate
  ``ISETP.LT Pd, Ra, Rb|int``  per-lane signed compare, writes predicate
  ``MOV Rd, Ra|int``        register copy / load immediate
  ``CLOCK Rd``              read the warp cycle counter into Rd
  ``STSLOT [Ra|int], Rs``   store Rs to a per-lane timestamp slot
  ``EXIT``                  end of kernel
  ========================  =============================================

* A ``.S`` suffix on a non-control mnemonic sets the pop-bit (the
  instruction first pops the stack, restoring mask and pc, then executes
  as the carrier).  ``SSY``, ``BRA``, and ``EXIT`` never carry it.
* ``@Pk`` predication is supported on BRA only.
* Registers ``R0..R{N-1}`` plus ``RZ`` (reads 0, writes dropped);
  predicates ``P0..P{K-1}`` plus ``PT`` (reads all-true, writes dropped).
* Optional directives before the first instruction:
  ``.registers N`` and ``.predicates K`` (defaults 16 and 7).

``parse_program`` and ``format_program`` round-trip: formatting a valid
program and re-parsing it yields a structurally equal program (label
*names* are not part of structural equality).
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Union

from .errors import AsmError, ProgramError

DEFAULT_REGISTER_FILE = 16
DEFAULT_PREDICATE_FILE = 7

REG_RZ = -1   # zero register: reads 0, writes discarded
PRED_PT = -1  # true predicate: reads all-ones, writes discarded

INT32_MIN = -(1 << 31)
INT32_MAX = (1 << 31) - 1

_F32 = struct.Struct("<f")


def f32(value: float) -> float:
    """Round a Python float to the nearest float32 value."""
    return _F32.unpack(_F32.pack(value))[0]


class Opcode(Enum):
    SSY = "SSY"
    BRA = "BRA"
    NOP = "NOP"
    IADD = "IADD"
    FADD_IMM = "FADD32I"
    ISETP_LT = "ISETP.LT"
    MOV = "MOV"
    CLOCK = "CLOCK"
    STORE_SLOT = "STSLOT"
    EXIT = "EXIT"


_MNEMONICS = {op.value: op for op in Opcode}

# Opcodes that may carry the pop-bit (any plain carrier instruction).
_POP_CARRIERS = frozenset(
    {Opcode.NOP, Opcode.IADD, Opcode.FADD_IMM, Opcode.ISETP_LT, Opcode.MOV,
     Opcode.CLOCK, Opcode.STORE_SLOT}
)


@dataclass(frozen=True)
class Instruction:
    """One decoded instruction.

    Field usage by opcode (unused fields stay None):

    * SSY:        target
    * BRA:        target, pred (None = unconditional)
    * IADD:       dst, src_a, src_b or imm
    * FADD_IMM:   dst, src_a, imm (float, always float32-exact)
    * ISETP_LT:   pdst, src_a, src_b or imm
    * MOV:        dst, src_a or imm
    * CLOCK:      dst
    * STORE_SLOT: slot or slot_reg, src_a (value to store)
    * NOP, EXIT:  nothing

    ``pop_bit`` marks the instruction as a stack-unwinding carrier.
    """

    opcode: Opcode
    pop_bit: bool = False
    pred: Union[int, None] = None
    dst: Union[int, None] = None
    pdst: Union[int, None] = None
    src_a: Union[int, None] = None
    src_b: Union[int, None] = None
    imm: Union[int, float, None] = None
    slot: Union[int, None] = None
    slot_reg: Union[int, None] = None
    target: Union[int, None] = None


@dataclass(frozen=True)
class Program:
    """An immutable instruction sequence with resolved branch targets.

    Structural equality compares instructions and file sizes; label names
    are presentation only and excluded from comparison.
    """

    instructions: tuple[Instruction, ...]
    register_file_size: int = DEFAULT_REGISTER_FILE
    predicate_file_size: int = DEFAULT_PREDICATE_FILE
    labels: Mapping[str, int] = field(default_factory=dict, compare=False)

    def __len__(self) -> int:
        return len(self.instructions)


def register_name(index: int) -> str:
    return "RZ" if index == REG_RZ else f"R{index}"


def predicate_name(index: int) -> str:
    return "PT" if index == PRED_PT else f"P{index}"


def register_index(name: str, file_size: int = DEFAULT_REGISTER_FILE) -> int:
    """Parse a register name ("R4" or "RZ") into an index."""
    text = name.strip().upper()
    if text == "RZ":
        return REG_RZ
    match = re.fullmatch(r"R(\d+)", text)
    if not match:
        raise ProgramError(f"not a register name: {name!r}")
    index = int(match.group(1))
    if index >= file_size:
        raise ProgramError(f"register {text} outside file of {file_size}")
    return index


def predicate_index(name: str, file_size: int = DEFAULT_PREDICATE_FILE) -> int:
    """Parse a predicate name ("P0" or "PT") into an index."""
    text = name.strip().upper()
    if text == "PT":
        return PRED_PT
    match = re.fullmatch(r"P(\d+)", text)
    if not match:
        raise ProgramError(f"not a predicate name: {name!r}")
    index = int(match.group(1))
    if index >= file_size:
        raise ProgramError(f"predicate {text} outside file of {file_size}")
    return index


def validate_program(program: Program) -> Program:
    """Check all structural invariants; returns the program for chaining."""
    ins_list = program.instructions
    if not ins_list:
        raise ProgramError("program has no instructions")
    exits = [i for i, ins in enumerate(ins_list) if ins.opcode is Opcode.EXIT]
    if len(exits) != 1 or exits[0] != len(ins_list) - 1:
        raise ProgramError("program must contain exactly one EXIT, as the final instruction")
    if program.register_file_size < 1 or program.predicate_file_size < 1:
        raise ProgramError("register and predicate file sizes must be >= 1")
    for i, ins in enumerate(ins_list):
        _validate_instruction(program, i, ins)
    return program


def _err(i: int, ins: Instruction, message: str) -> ProgramError:
    return ProgramError(f"instruction {i} ({ins.opcode.value}): {message}")


def _check_reg(program: Program, i: int, ins: Instruction, name: str, allow_rz: bool = True):
    value = getattr(ins, name)
    if value is None:
        raise _err(i, ins, f"missing {name}")
    lo = REG_RZ if allow_rz else 0
    if not lo <= value < program.register_file_size:
        raise _err(i, ins, f"{name}={value} outside register file of {program.register_file_size}")


def _check_none(i: int, ins: Instruction, names: Iterable[str]):
    for name in names:
        if getattr(ins, name) is not None:
            raise _err(i, ins, f"unexpected operand {name}")


_ALL_OPERANDS = ("pred", "dst", "pdst", "src_a", "src_b", "imm", "slot", "slot_reg", "target")


def _validate_instruction(program: Program, i: int, ins: Instruction) -> None:
    op = ins.opcode
    if ins.pop_bit and op not in _POP_CARRIERS:
        raise _err(i, ins, "pop-bit not allowed on this opcode")
    if ins.pred is not None and op is not Opcode.BRA:
        raise _err(i, ins, "predication only supported on BRA")

    if op is Opcode.SSY or op is Opcode.BRA:
        if ins.target is None or not 0 <= ins.target < len(program.instructions):
            raise _err(i, ins, f"target {ins.target} out of range")
        if op is Opcode.BRA and ins.pred is not None:
            if not PRED_PT <= ins.pred < program.predicate_file_size:
                raise _err(i, ins, f"predicate {ins.pred} outside file")
        _check_none(i, ins, ("dst", "pdst", "src_a", "src_b", "imm", "slot", "slot_reg"))
        return
    _check_none(i, ins, ("target",))

    if op is Opcode.NOP or op is Opcode.EXIT:
        _check_none(i, ins, ("dst", "pdst", "src_a", "src_b", "imm", "slot", "slot_reg"))
    elif op is Opcode.IADD or op is Opcode.ISETP_LT:
        _check_reg(program, i, ins, "src_a")
        if (ins.src_b is None) == (ins.imm is None):
            raise _err(i, ins, "needs exactly one of src_b or imm")
        if ins.src_b is not None:
            _check_reg(program, i, ins, "src_b")
        else:
            _check_int_imm(i, ins)
        if op is Opcode.IADD:
            _check_reg(program, i, ins, "dst")
            _check_none(i, ins, ("pdst", "slot", "slot_reg"))
        else:
            if ins.pdst is None or not PRED_PT <= ins.pdst < program.predicate_file_size:
                raise _err(i, ins, f"pdst={ins.pdst} outside predicate file")
            _check_none(i, ins, ("dst", "slot", "slot_reg"))
    elif op is Opcode.FADD_IMM:
        _check_reg(program, i, ins, "dst")
        _check_reg(program, i, ins, "src_a")
        if not isinstance(ins.imm, float):
            raise _err(i, ins, "needs a float immediate")
        if f32(ins.imm) != ins.imm:
            raise _err(i, ins, f"immediate {ins.imm!r} is not float32-exact")
        _check_none(i, ins, ("pdst", "src_b", "slot", "slot_reg"))
    elif op is Opcode.MOV:
        _check_reg(program, i, ins, "dst")
        if (ins.src_a is None) == (ins.imm is None):
            raise _err(i, ins, "needs exactly one of src_a or imm")
        if ins.src_a is not None:
            _check_reg(program, i, ins, "src_a")
        else:
            _check_int_imm(i, ins)
        _check_none(i, ins, ("pdst", "src_b", "slot", "slot_reg"))
    elif op is Opcode.CLOCK:
        _check_reg(program, i, ins, "dst")
        _check_none(i, ins, ("pdst", "src_a", "src_b", "imm", "slot", "slot_reg"))
    elif op is Opcode.STORE_SLOT:
        _check_reg(program, i, ins, "src_a")
        if (ins.slot is None) == (ins.slot_reg is None):
            raise _err(i, ins, "needs exactly one of slot or slot_reg")
        if ins.slot_reg is not None:
            _check_reg(program, i, ins, "slot_reg")
        elif ins.slot < 0:
            raise _err(i, ins, f"slot index {ins.slot} must be >= 0")
        _check_none(i, ins, ("dst", "pdst", "src_b", "imm"))
    else:  # pragma: no cover - exhaustive over Opcode
        raise _err(i, ins, "unhandled opcode")


def _check_int_imm(i: int, ins: Instruction) -> None:
    if not isinstance(ins.imm, int):
        raise _err(i, ins, f"immediate {ins.imm!r} must be an integer")
    if not INT32_MIN <= ins.imm <= INT32_MAX:
        raise _err(i, ins, f"immediate {ins.imm} outside 32-bit signed range")


class ProgramBuilder:
    """Incremental program construction with symbolic branch targets.

    Targets given as strings are resolved to instruction indices when
    ``build()`` runs, so programs stay correct under edits.
    """

    def __init__(self, register_file_size: int = DEFAULT_REGISTER_FILE,
                 predicate_file_size: int = DEFAULT_PREDICATE_FILE):
        self.register_file_size = register_file_size
        self.predicate_file_size = predicate_file_size
        self._entries: list[tuple[Opcode, dict]] = []
        self._labels: dict[str, int] = {}

    def label(self, name: str) -> "ProgramBuilder":
        if name in self._labels:
            raise ProgramError(f"duplicate label {name!r}")
        self._labels[name] = len(self._entries)
        return self

    def emit(self, opcode: Opcode, **fields) -> "ProgramBuilder":
        self._entries.append((opcode, fields))
        return self

    def build(self) -> Program:
        instructions = []
        for opcode, fields in self._entries:
            target = fields.get("target")
            if isinstance(target, str):
                if target not in self._labels:
                    raise ProgramError(f"unresolved label {target!r}")
                fields = dict(fields, target=self._labels[target])
            instructions.append(Instruction(opcode, **fields))
        program = Program(
            instructions=tuple(instructions),
            register_file_size=self.register_file_size,
            predicate_file_size=self.predicate_file_size,
            labels=dict(self._labels),
        )
        return validate_program(program)


_LABEL_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*:\s*(.*)$")
_INT_RE = re.compile(r"^[+-]?(0[xXoObB][0-9a-fA-F]+|\d+)$")


def _parse_int_literal(token: str) -> Union[int, None]:
    if _INT_RE.match(token):
        return int(token, 0)
    return None


def parse_program(text: str,
                  register_file_size: int = DEFAULT_REGISTER_FILE,
                  predicate_file_size: int = DEFAULT_PREDICATE_FILE) -> Program:
    """Assemble source text into a validated :class:`Program`.

    Raises :class:`AsmError` naming the offending line on any syntax,
    register-range, or label-resolution problem.
    """
    statements: list[tuple[int, Union[str, None], str, bool, list[str]]] = []
    labels: dict[str, int] = {}
    pending_labels: list[tuple[int, str]] = []
    directives_done = False

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw
        for marker in "#;":
            pos = line.find(marker)
            if pos >= 0:
                line = line[:pos]
        line = line.strip()
        if not line:
            continue

        if line.startswith("."):
            if directives_done or statements or pending_labels:
                raise AsmError(line_no, "directives must precede all instructions")
            parts = line.split()
            if len(parts) != 2 or (value := _parse_int_literal(parts[1])) is None:
                raise AsmError(line_no, f"malformed directive {line!r}")
            if parts[0] == ".registers":
                register_file_size = value
            elif parts[0] == ".predicates":
                predicate_file_size = value
            else:
                raise AsmError(line_no, f"unknown directive {parts[0]!r}")
            continue

        while (match := _LABEL_RE.match(line)) is not None:
            name = match.group(1)
            if name in labels or any(n == name for _, n in pending_labels):
                raise AsmError(line_no, f"duplicate label {name!r}")
            pending_labels.append((line_no, name))
            line = match.group(2)
        if not line:
            continue

        pred_token = None
        if line.startswith("@"):
            parts = line[1:].split(None, 1)
            if len(parts) != 2:
                raise AsmError(line_no, "predicate prefix without instruction")
            pred_token, line = parts

        head, _, rest = line.partition(" ")
        mnemonic = head.upper()
        pop_bit = False
        if mnemonic.endswith(".S"):
            pop_bit = True
            mnemonic = mnemonic[:-2]
        operands = [tok.strip() for tok in rest.split(",")] if rest.strip() else []
        if any(not tok for tok in operands):
            raise AsmError(line_no, "empty operand")

        for _, name in pending_labels:
            labels[name] = len(statements)
        pending_labels.clear()
        statements.append((line_no, pred_token, mnemonic, pop_bit, operands))
        directives_done = True

    for line_no, name in pending_labels:
        raise AsmError(line_no, f"label {name!r} attached to no instruction")
    if not statements:
        raise AsmError(1, "empty program")

    instructions = []
    for index, (line_no, pred_token, mnemonic, pop_bit, operands) in enumerate(statements):
        opcode = _MNEMONICS.get(mnemonic)
        if opcode is None:
            raise AsmError(line_no, f"unknown mnemonic {mnemonic!r}")
        try:
            fields = _parse_operands(opcode, operands, labels, len(statements),
                                     register_file_size, predicate_file_size)
            if pred_token is not None:
                if opcode is not Opcode.BRA:
                    raise ProgramError("predication only supported on BRA")
                fields["pred"] = predicate_index(pred_token, predicate_file_size)
        except ProgramError as exc:
            raise AsmError(line_no, str(exc)) from None
        if pop_bit and opcode not in _POP_CARRIERS:
            raise AsmError(line_no, f"pop-bit suffix not allowed on {mnemonic}")
        instructions.append(Instruction(opcode, pop_bit=pop_bit, **fields))

    program = Program(
        instructions=tuple(instructions),
        register_file_size=register_file_size,
        predicate_file_size=predicate_file_size,
        labels=labels,
    )
    try:
        return validate_program(program)
    except ProgramError as exc:
        raise AsmError(statements[-1][0], str(exc)) from None


def _expect(operands: list[str], count: int, shape: str) -> None:
    if len(operands) != count:
        raise ProgramError(f"expected operands: {shape}")


def _reg_or_imm(token: str, regs: int) -> tuple[Union[int, None], Union[int, None]]:
    value = _parse_int_literal(token)
    if value is not None:
        return None, value
    return register_index(token, regs), None


def _parse_operands(opcode: Opcode, operands: list[str], labels: Mapping[str, int],
                    length: int, regs: int, preds: int) -> dict:
    if opcode in (Opcode.SSY, Opcode.BRA):
        _expect(operands, 1, f"{opcode.value} target")
        token = operands[0]
        target = _parse_int_literal(token)
        if target is None:
            if token not in labels:
                raise ProgramError(f"unresolved label {token!r}")
            target = labels[token]
        if not 0 <= target < length:
            raise ProgramError(f"target {target} out of range")
        return {"target": target}
    if opcode in (Opcode.NOP, Opcode.EXIT):
        _expect(operands, 0, opcode.value)
        return {}
    if opcode is Opcode.IADD:
        _expect(operands, 3, "IADD Rd, Ra, Rb|imm")
        src_b, imm = _reg_or_imm(operands[2], regs)
        return {"dst": register_index(operands[0], regs),
                "src_a": register_index(operands[1], regs), "src_b": src_b, "imm": imm}
    if opcode is Opcode.FADD_IMM:
        _expect(operands, 3, "FADD32I Rd, Ra, float")
        try:
            imm = float(operands[2])
        except ValueError:
            raise ProgramError(f"not a float immediate: {operands[2]!r}") from None
        return {"dst": register_index(operands[0], regs),
                "src_a": register_index(operands[1], regs), "imm": f32(imm)}
    if opcode is Opcode.ISETP_LT:
        _expect(operands, 3, "ISETP.LT Pd, Ra, Rb|imm")
        src_b, imm = _reg_or_imm(operands[2], regs)
        return {"pdst": predicate_index(operands[0], preds),
                "src_a": register_index(operands[1], regs), "src_b": src_b, "imm": imm}
    if opcode is Opcode.MOV:
        _expect(operands, 2, "MOV Rd, Ra|imm")
        src_a, imm = _reg_or_imm(operands[1], regs)
        return {"dst": register_index(operands[0], regs), "src_a": src_a, "imm": imm}
    if opcode is Opcode.CLOCK:
        _expect(operands, 1, "CLOCK Rd")
        return {"dst": register_index(operands[0], regs)}
    if opcode is Opcode.STORE_SLOT:
        _expect(operands, 2, "STSLOT [Ra|imm], Rs")
        token = operands[0]
        if not (token.startswith("[") and token.endswith("]")):
            raise ProgramError(f"slot operand must be bracketed: {token!r}")
        inner = token[1:-1].strip()
        slot = _parse_int_literal(inner)
        if slot is not None:
            if slot < 0:
                raise ProgramError(f"slot index {slot} must be >= 0")
            return {"slot": slot, "src_a": register_index(operands[1], regs)}
        return {"slot_reg": register_index(inner, regs),
                "src_a": register_index(operands[1], regs)}
    raise ProgramError(f"unhandled opcode {opcode}")  # pragma: no cover


def format_instruction(ins: Instruction, label_of=None) -> str:
    """Render one instruction body (no label prefix)."""
    op = ins.opcode
    name = op.value + (".S" if ins.pop_bit else "")
    if label_of is None:
        label_of = str

    def imm_text(value):
        return repr(value) if isinstance(value, float) else str(value)

    if op in (Opcode.SSY, Opcode.BRA):
        text = f"{name} {label_of(ins.target)}"
        if ins.pred is not None:
            text = f"@{predicate_name(ins.pred)} {text}"
        return text
    if op in (Opcode.NOP, Opcode.EXIT):
        return name
    if op is Opcode.IADD:
        second = register_name(ins.src_b) if ins.src_b is not None else imm_text(ins.imm)
        return f"{name} {register_name(ins.dst)}, {register_name(ins.src_a)}, {second}"
    if op is Opcode.FADD_IMM:
        return f"{name} {register_name(ins.dst)}, {register_name(ins.src_a)}, {imm_text(ins.imm)}"
    if op is Opcode.ISETP_LT:
        second = register_name(ins.src_b) if ins.src_b is not None else imm_text(ins.imm)
        return f"{name} {predicate_name(ins.pdst)}, {register_name(ins.src_a)}, {second}"
    if op is Opcode.MOV:
        source = register_name(ins.src_a) if ins.src_a is not None else imm_text(ins.imm)
        return f"{name} {register_name(ins.dst)}, {source}"
    if op is Opcode.CLOCK:
        return f"{name} {register_name(ins.dst)}"
    if op is Opcode.STORE_SLOT:
        slot = f"[{register_name(ins.slot_reg)}]" if ins.slot_reg is not None else f"[{ins.slot}]"
        return f"{name} {slot}, {register_name(ins.src_a)}"
    raise ProgramError(f"unhandled opcode {op}")  # pragma: no cover


def format_program(program: Program) -> str:
    """Render a program as assembly text that re-parses to an equal program."""
    validate_program(program)
    names: dict[int, str] = {}
    for name in sorted(program.labels, key=lambda n: (program.labels[n], n)):
        names.setdefault(program.labels[name], name)
    for ins in program.instructions:
        if ins.target is not None:
            names.setdefault(ins.target, f"L{ins.target}")

    lines = []
    if program.register_file_size != DEFAULT_REGISTER_FILE:
        lines.append(f".registers {program.register_file_size}")
    if program.predicate_file_size != DEFAULT_PREDICATE_FILE:
        lines.append(f".predicates {program.predicate_file_size}")
    width = max([len(name) + 1 for name in names.values()] + [7]) + 1
    targeted = {ins.target for ins in program.instructions if ins.target is not None}
    for index, ins in enumerate(program.instructions):
        prefix = f"{names[index]}:" if index in targeted else ""
        body = format_instruction(ins, label_of=lambda t: names[t])
        lines.append(f"{prefix:<{width}}{body}")
    return "\n".join(lines) + "\n"
