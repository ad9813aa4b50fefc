"""Parser, formatter, and program-validation behavior."""

import pytest

import warpsim as ws
from warpsim import isa
from warpsim.errors import AsmError, ProgramError


def test_label_resolution():
    prog = ws.parse_program("""
        SSY done
        NOP
    done:
        NOP
        EXIT
    """)
    assert prog.instructions[0].opcode is ws.Opcode.SSY
    assert prog.instructions[0].target == 2
    assert prog.labels == {"done": 2}


def test_predicated_branch_parse():
    prog = ws.parse_program("""
    loop: IADD R4, R4, 1
        @P0 BRA loop
        EXIT
    """)
    bra = prog.instructions[1]
    assert bra.opcode is ws.Opcode.BRA
    assert bra.pred == 0
    assert bra.pop_bit is False
    assert bra.target == 0


def test_pop_bit_suffix():
    prog = ws.parse_program("NOP.S\nEXIT")
    assert prog.instructions[0].opcode is ws.Opcode.NOP
    assert prog.instructions[0].pop_bit is True


def test_pop_bit_on_non_nop_carrier():
    prog = ws.parse_program("IADD.S R0, R0, 0x420\nEXIT")
    ins = prog.instructions[0]
    assert ins.pop_bit and ins.opcode is ws.Opcode.IADD and ins.imm == 0x420


def test_comments_hex_and_case():
    prog = ws.parse_program("""
        mov R1, 0x10   ; set up
        iadd R1, R1, -2  # negative immediate
        EXIT
    """)
    assert prog.instructions[0].imm == 16
    assert prog.instructions[1].imm == -2


def test_unconditional_and_numeric_target():
    prog = ws.parse_program("BRA 1\nEXIT")
    assert prog.instructions[0].pred is None and prog.instructions[0].target == 1


@pytest.mark.parametrize("source,line,fragment", [
    ("FROB R1\nEXIT", 1, "unknown mnemonic"),
    ("BRA nowhere\nEXIT", 1, "unresolved label"),
    ("MOV R99, 1\nEXIT", 1, "register"),
    ("NOP\nISETP.LT P9, R0, 1\nEXIT", 2, "predicate"),
    ("@P0 NOP\nEXIT", 1, "predication"),
    ("SSY.S 1\nEXIT", 1, "pop-bit"),
    ("BRA.S 1\nEXIT", 1, "pop-bit"),
    ("dup: NOP\ndup: NOP\nEXIT", 2, "duplicate label"),
    ("IADD R1, R2\nEXIT", 1, "expected operands"),
    ("MOV R1,, 2\nEXIT", 1, "empty operand"),
    ("NOP\n.registers 8\nEXIT", 2, "directives must precede"),
    ("STSLOT R4, R5\nEXIT", 1, "bracketed"),
    ("STSLOT [-1], R5\nEXIT", 1, "slot index"),
    ("FADD32I R0, R0, nope\nEXIT", 1, "float"),
])
def test_parse_errors_name_the_line(source, line, fragment):
    with pytest.raises(AsmError) as err:
        ws.parse_program(source)
    assert err.value.line_no == line
    assert fragment in str(err.value)


def test_structural_errors():
    with pytest.raises(AsmError, match="EXIT"):
        ws.parse_program("NOP")
    with pytest.raises(AsmError, match="EXIT"):
        ws.parse_program("EXIT\nNOP")
    with pytest.raises(AsmError, match="EXIT"):
        ws.parse_program("EXIT\nEXIT")
    with pytest.raises(AsmError, match="empty"):
        ws.parse_program("; nothing here\n")
    with pytest.raises(AsmError, match="no instruction"):
        ws.parse_program("EXIT\norphan:")


def test_directives_resize_files():
    prog = ws.parse_program(".registers 4\n.predicates 2\nMOV R3, 1\nEXIT")
    assert prog.register_file_size == 4
    assert prog.predicate_file_size == 2
    with pytest.raises(AsmError, match="register"):
        ws.parse_program(".registers 4\nMOV R4, 1\nEXIT")


def test_float_immediate_rounded_to_float32():
    prog = ws.parse_program("FADD32I R0, R0, 0.1\nEXIT")
    assert prog.instructions[0].imm == ws.f32(0.1)


@pytest.mark.parametrize("builder", [
    ws.single_loop_program, ws.double_loop_program, ws.instrumented_single_loop_program,
])
def test_round_trip_on_kernels(builder):
    prog = builder()
    text = ws.format_program(prog)
    reparsed = ws.parse_program(text)
    assert reparsed == prog
    assert ws.format_program(reparsed) == text


def test_format_renders_suffix_prefix_and_directives():
    prog = ws.parse_program(".registers 8\nstart: NOP.S\n@P1 BRA start\nEXIT")
    text = ws.format_program(prog)
    assert "NOP.S" in text
    assert "@P1 BRA start" in text
    assert ".registers 8" in text
    assert ws.parse_program(text) == prog


def test_program_equality_ignores_label_names():
    a = ws.parse_program("top: NOP\nBRA top\nEXIT")
    b = ws.parse_program("loop: NOP\nBRA loop\nEXIT")
    assert a == b
    assert a != ws.parse_program("top: NOP\nBRA 0\nNOP\nEXIT")


def test_builder_symbolic_targets():
    b = ws.ProgramBuilder()
    b.emit(ws.Opcode.SSY, target="end")
    b.label("end")
    b.emit(ws.Opcode.NOP, pop_bit=True)
    b.emit(ws.Opcode.EXIT)
    prog = b.build()
    assert prog.instructions[0].target == 1

    bad = ws.ProgramBuilder()
    bad.emit(ws.Opcode.BRA, target="missing")
    bad.emit(ws.Opcode.EXIT)
    with pytest.raises(ProgramError, match="unresolved label"):
        bad.build()
    dup = ws.ProgramBuilder()
    dup.label("x")
    with pytest.raises(ProgramError, match="duplicate label"):
        dup.label("x")


def test_validate_rejects_malformed_instructions():
    exit_ins = isa.Instruction(ws.Opcode.EXIT)

    def program_of(*instructions):
        return isa.Program(instructions=tuple(instructions) + (exit_ins,))

    cases = [
        isa.Instruction(ws.Opcode.BRA, target=99),
        isa.Instruction(ws.Opcode.SSY, target=None),
        isa.Instruction(ws.Opcode.BRA, target=0, pop_bit=True),
        isa.Instruction(ws.Opcode.IADD, dst=0, src_a=0, src_b=1, imm=2),
        isa.Instruction(ws.Opcode.IADD, dst=0, src_a=0),
        isa.Instruction(ws.Opcode.MOV, dst=0, imm=1 << 40),
        isa.Instruction(ws.Opcode.FADD_IMM, dst=0, src_a=0, imm=0.1),
        isa.Instruction(ws.Opcode.NOP, dst=3),
        isa.Instruction(ws.Opcode.ISETP_LT, pdst=0, src_a=0, imm=1, pred=1),
        isa.Instruction(ws.Opcode.STORE_SLOT, slot=0, slot_reg=1, src_a=0),
    ]
    for ins in cases:
        with pytest.raises(ProgramError):
            isa.validate_program(program_of(ins))


def test_register_and_predicate_names():
    assert isa.register_index("RZ") == isa.REG_RZ
    assert isa.register_index("r7") == 7
    assert isa.predicate_index("PT") == isa.PRED_PT
    assert isa.register_name(isa.REG_RZ) == "RZ"
    assert isa.predicate_name(3) == "P3"
    with pytest.raises(ProgramError):
        isa.register_index("Q1")
