"""Architecture profiles and event-driven cycle accounting.

The accounting policy puts the divergence penalty entirely on DIV-token
pops (the unwinding side): pushing a token can be overlapped with
subsequent work, but a popped token is consumed immediately to restore
the active mask and program counter, and the carrier instruction still
has to issue.  ``div_cost`` is therefore charged once per DIV pop and
covers the carrier execution; SYNC pushes/pops and DIV pushes charge
nothing (their fixed cost is folded into the per-kernel base constants).
Stack spills charge per chunk event, split into a store leg (during the
push that overflowed) and a load leg (during the pop that reloaded).

Profiles are immutable.  ``phys_capacity=None`` disables spilling, which
is useful for isolating the spill cost by differencing two sweeps.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from typing import Mapping, Union

from .errors import ProgramError
from .stack import StackEvent, SyncStack


@dataclass(frozen=True)
class ArchProfile:
    """Cost and capacity parameters for one simulated architecture.

    ``base_cycles`` maps kernel ids to the calibrated constant part of
    the predicted total (everything that does not scale with divergence).
    ``issue_cost`` is the per-instruction advance of the live cycle
    counter; it cancels out of every n-to-n comparison and exists so
    instrumented timelines move forward.
    """

    name: str
    div_cost: int
    spill_store_cost: int
    spill_load_cost: int
    phys_capacity: Union[int, None] = 16
    spill_chunk: int = 4
    issue_cost: int = 1
    base_cycles: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        for attr in ("div_cost", "spill_store_cost", "spill_load_cost", "issue_cost"):
            if getattr(self, attr) < 0:
                raise ProgramError(f"{attr} must be >= 0")
        # Constructing a stack validates the capacity/chunk relationship.
        SyncStack(self.phys_capacity, self.spill_chunk)

    def new_stack(self) -> SyncStack:
        return SyncStack(self.phys_capacity, self.spill_chunk)

    def without_spilling(self) -> "ArchProfile":
        """Same costs, unbounded on-chip stack (no spill events ever)."""
        return replace(self, phys_capacity=None)


KEPLER = ArchProfile(
    name="kepler",
    div_cost=32,
    spill_store_cost=40,
    spill_load_cost=44,
    base_cycles={"single": 1732, "double": 57024},
)

# No published base constants for this architecture; predictions are
# overhead-only until the user calibrates them.
MAXWELL = ArchProfile(
    name="maxwell",
    div_cost=26,
    spill_store_cost=88,
    spill_load_cost=88,
)

BUILTIN_PROFILES: Mapping[str, ArchProfile] = {"kepler": KEPLER, "maxwell": MAXWELL}


def get_profile(name: str) -> ArchProfile:
    try:
        return BUILTIN_PROFILES[name]
    except KeyError:
        known = ", ".join(sorted(BUILTIN_PROFILES))
        raise ProgramError(f"unknown architecture profile {name!r} (built-in: {known})") from None


@dataclass(frozen=True)
class CostEvents:
    """Counts of the chargeable stack events over (part of) a run."""

    sync_pushes: int = 0
    div_pushes: int = 0
    sync_pops: int = 0
    div_pops: int = 0
    spill_stores: int = 0
    spill_loads: int = 0

    _FIELDS_BY_EVENT = {
        StackEvent.SYNC_PUSH: "sync_pushes",
        StackEvent.DIV_PUSH: "div_pushes",
        StackEvent.SYNC_POP: "sync_pops",
        StackEvent.DIV_POP: "div_pops",
        StackEvent.SPILL_STORE: "spill_stores",
        StackEvent.SPILL_LOAD: "spill_loads",
    }

    @classmethod
    def from_counts(cls, counts) -> "CostEvents":
        """Build from a sequence indexed by :class:`StackEvent` values."""
        return cls(**{name: counts[event] for event, name in cls._FIELDS_BY_EVENT.items()})

    @property
    def pushes(self) -> int:
        return self.sync_pushes + self.div_pushes

    @property
    def pops(self) -> int:
        return self.sync_pops + self.div_pops


def charge(events: CostEvents, profile: ArchProfile) -> int:
    """Cycle overhead attributable to divergence for the given events."""
    return (profile.div_cost * events.div_pops
            + profile.spill_store_cost * events.spill_stores
            + profile.spill_load_cost * events.spill_loads)


def predict_total(kernel_id, profile: ArchProfile, result) -> int:
    """Calibrated base constant plus divergence overhead.

    ``kernel_id`` may be a :class:`~warpsim.kernels.KernelId` or its
    string value.  Raises if the profile has no base constant for it;
    arbitrary programs get overhead-only predictions via :func:`charge`.
    """
    key = getattr(kernel_id, "value", kernel_id)
    if key not in profile.base_cycles:
        raise ProgramError(
            f"profile {profile.name!r} has no base cycle constant for kernel {key!r}"
        )
    return profile.base_cycles[key] + charge(result.events, profile)


_PROFILE_INT_KEYS = {
    "div_cost", "spill_store_cost", "spill_load_cost", "spill_chunk", "issue_cost",
}
_UNBOUNDED = {"none", "inf", "unbounded"}


def parse_profile(text: str, default_name: str = "custom") -> ArchProfile:
    """Parse a key=value profile description.

    Recognized keys: ``name``, ``div_cost``, ``phys_capacity`` (an integer
    or ``none``/``inf`` for unbounded), ``spill_chunk``,
    ``spill_store_cost``, ``spill_load_cost``, ``issue_cost``, and
    ``base.<kernel>`` entries.  ``#`` and ``;`` start comments.  Costs
    default to 0, capacity to 16, chunk to 4, issue cost to 1.
    """
    values = {
        "name": default_name,
        "div_cost": 0,
        "spill_store_cost": 0,
        "spill_load_cost": 0,
        "phys_capacity": 16,
        "spill_chunk": 4,
        "issue_cost": 1,
    }
    base: dict[str, int] = {}
    seen: set[str] = set()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw
        for marker in "#;":
            pos = line.find(marker)
            if pos >= 0:
                line = line[:pos]
        line = line.strip()
        if not line:
            continue
        key, sep, value = (part.strip() for part in line.partition("="))
        if not sep or not key or not value:
            raise ProgramError(f"profile line {line_no}: expected key = value, got {raw!r}")
        if key in seen:
            raise ProgramError(f"profile line {line_no}: duplicate key {key!r}")
        seen.add(key)
        if key == "name":
            values["name"] = value
        elif key == "phys_capacity":
            if value.lower() in _UNBOUNDED:
                values["phys_capacity"] = None
            else:
                values["phys_capacity"] = _profile_int(key, value, line_no)
        elif key in _PROFILE_INT_KEYS:
            values[key] = _profile_int(key, value, line_no)
        elif key.startswith("base."):
            kernel = key[len("base."):]
            if not kernel:
                raise ProgramError(f"profile line {line_no}: empty kernel id in {key!r}")
            base[kernel] = _profile_int(key, value, line_no)
        else:
            raise ProgramError(f"profile line {line_no}: unknown key {key!r}")
    return ArchProfile(base_cycles=base, **values)


def _profile_int(key: str, value: str, line_no: int) -> int:
    try:
        return int(value, 0)
    except ValueError:
        raise ProgramError(f"profile line {line_no}: {key} needs an integer, got {value!r}") from None


def load_profile(path) -> ArchProfile:
    """Load a profile from a key=value text file; name defaults to the stem."""
    with open(path, "r", encoding="utf-8") as handle:
        text = handle.read()
    stem = os.path.splitext(os.path.basename(str(path)))[0]
    return parse_profile(text, default_name=stem or "custom")
