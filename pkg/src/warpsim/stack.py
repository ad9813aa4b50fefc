"""Synchronization-stack tokens and the capacity/spill overlay.

The stack serializes divergent control flow inside a warp: a SYNC token
records the mask to restore at a re-convergence point, a DIV token parks
the lanes that did not take a partially taken branch.  The logical stack
is unbounded, but only ``phys_capacity`` entries live in fast on-chip
storage.  Pushing into a full on-chip segment first evicts the oldest
``spill_chunk`` entries to backing memory (one SPILL_STORE event);
popping past the on-chip segment reloads the most recently spilled chunk
(one SPILL_LOAD event).
"""

from __future__ import annotations

from enum import Enum, IntEnum
from typing import NamedTuple

from .errors import ModelViolation, ProgramError


class TokenKind(Enum):
    SYNC = "SYNC"  # pushed by SSY; restores the mask captured there
    DIV = "DIV"    # pushed by a partially taken branch; holds the not-taken lanes


class Token(NamedTuple):
    """One stack entry: lane mask, kind tag, resume address.

    Fits in 64 bits on hardware, 32 of them taken by the mask.
    """

    mask: int
    kind: TokenKind
    pc: int


class StackEvent(IntEnum):
    SYNC_PUSH = 0
    DIV_PUSH = 1
    SYNC_POP = 2
    DIV_POP = 3
    SPILL_STORE = 4
    SPILL_LOAD = 5


# Prebuilt event tuples so the hot path never allocates for the common cases.
_PUSH_EVENTS = {
    TokenKind.SYNC: (StackEvent.SYNC_PUSH,),
    TokenKind.DIV: (StackEvent.DIV_PUSH,),
}
_PUSH_EVENTS_SPILL = {k: (StackEvent.SPILL_STORE,) + v for k, v in _PUSH_EVENTS.items()}
_POP_EVENTS = {
    TokenKind.SYNC: (StackEvent.SYNC_POP,),
    TokenKind.DIV: (StackEvent.DIV_POP,),
}
_POP_EVENTS_FILL = {k: (StackEvent.SPILL_LOAD,) + v for k, v in _POP_EVENTS.items()}


class SyncStack:
    """Token stack with a physical capacity and chunked spill to memory.

    ``phys_capacity=None`` disables spilling (unbounded on-chip segment).
    """

    __slots__ = ("phys_capacity", "spill_chunk", "_onchip", "_spilled")

    def __init__(self, phys_capacity: int | None = 16, spill_chunk: int = 4):
        if phys_capacity is not None:
            if phys_capacity < 1:
                raise ProgramError(f"physical stack capacity must be >= 1, got {phys_capacity}")
            if not 1 <= spill_chunk <= phys_capacity:
                raise ProgramError(
                    f"spill chunk must be in 1..{phys_capacity}, got {spill_chunk}"
                )
        elif spill_chunk < 1:
            raise ProgramError(f"spill chunk must be >= 1, got {spill_chunk}")
        self.phys_capacity = phys_capacity
        self.spill_chunk = spill_chunk
        self._onchip: list[Token] = []
        self._spilled: list[list[Token]] = []

    @property
    def depth(self) -> int:
        """Logical depth: on-chip entries plus spilled entries."""
        return len(self._onchip) + len(self._spilled) * self.spill_chunk

    @property
    def onchip_count(self) -> int:
        return len(self._onchip)

    @property
    def spilled_count(self) -> int:
        return len(self._spilled) * self.spill_chunk

    def push(self, token: Token) -> tuple[StackEvent, ...]:
        """Push a token, spilling the oldest chunk first if on-chip is full."""
        if token.kind is TokenKind.DIV and token.mask == 0:
            raise ModelViolation("DIV token with empty mask")
        onchip = self._onchip
        spilled = False
        cap = self.phys_capacity
        if cap is not None and len(onchip) == cap:
            self._spilled.append(onchip[: self.spill_chunk])
            del onchip[: self.spill_chunk]
            spilled = True
        onchip.append(token)
        return _PUSH_EVENTS_SPILL[token.kind] if spilled else _PUSH_EVENTS[token.kind]

    def pop(self) -> tuple[Token, tuple[StackEvent, ...]]:
        """Pop the top token, reloading the newest spilled chunk if needed."""
        onchip = self._onchip
        filled = False
        if not onchip:
            if not self._spilled:
                raise ModelViolation("pop from empty synchronization stack")
            onchip.extend(self._spilled.pop())
            filled = True
        token = onchip.pop()
        return token, (_POP_EVENTS_FILL if filled else _POP_EVENTS)[token.kind]
