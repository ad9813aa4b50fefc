"""Shared exception types."""


class ProgramError(ValueError):
    """A program, profile, or launch configuration is structurally invalid."""


class AsmError(ProgramError):
    """Assembly text could not be parsed; carries the offending line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class ModelViolation(RuntimeError):
    """Execution reached a state the divergence model forbids."""


class RunawayLoopError(ModelViolation):
    """Instruction budget exhausted before the program reached EXIT."""
