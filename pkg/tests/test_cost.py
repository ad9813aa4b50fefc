"""Profiles, event charging, totals, and profile-file parsing."""

import pytest

import warpsim as ws
from warpsim.cost import CostEvents, charge, parse_profile, predict_total
from warpsim.errors import ProgramError

from conftest import checked_run


def test_builtin_profile_constants():
    kep = ws.KEPLER
    assert (kep.div_cost, kep.phys_capacity, kep.spill_chunk) == (32, 16, 4)
    assert kep.spill_store_cost + kep.spill_load_cost == 84
    assert kep.base_cycles == {"single": 1732, "double": 57024}
    max_ = ws.MAXWELL
    assert max_.div_cost == 26
    assert max_.spill_store_cost + max_.spill_load_cost == 176
    assert max_.base_cycles == {}
    assert ws.get_profile("kepler") is kep
    with pytest.raises(ProgramError, match="unknown architecture"):
        ws.get_profile("fermi")


def test_charge_examples():
    kep = ws.KEPLER
    assert charge(CostEvents(div_pops=5), kep) == 160
    assert charge(CostEvents(), kep) == 0
    assert charge(CostEvents(spill_stores=1, spill_loads=1), kep) == 84
    assert charge(CostEvents(spill_stores=1, spill_loads=1), ws.MAXWELL) == 176
    # pushes and SYNC pops are free; their cost sits in the base constants
    assert charge(CostEvents(sync_pushes=9, div_pushes=9, sync_pops=9), kep) == 0


def test_predict_total_examples():
    kep = ws.KEPLER
    r10 = checked_run(ws.single_loop_program(),
                      ws.kernel_launch("single", ws.bound_pattern(10).bounds, kep))
    assert predict_total("single", kep, r10) == 1732 + 320 == 2052
    r0 = checked_run(ws.single_loop_program(),
                     ws.kernel_launch("single", ws.bound_pattern(0).bounds, kep))
    assert predict_total(ws.KernelId.SINGLE_LOOP, kep, r0) == 1732
    d5 = checked_run(ws.double_loop_program(),
                     ws.kernel_launch("double", ws.bound_pattern(5).bounds, kep))
    assert predict_total("double", kep, d5) == 57024 + 16 * 5 * 60 == 61824


def test_predict_total_requires_a_base_constant():
    r = checked_run(ws.single_loop_program(),
                    ws.kernel_launch("single", ws.bound_pattern(0).bounds))
    with pytest.raises(ProgramError, match="no base cycle constant"):
        predict_total("single", ws.MAXWELL, r)
    with pytest.raises(ProgramError, match="no base cycle constant"):
        predict_total("mystery-kernel", ws.KEPLER, r)


def test_without_spilling_disables_spills():
    quiet = ws.KEPLER.without_spilling()
    assert quiet.phys_capacity is None
    assert quiet.div_cost == ws.KEPLER.div_cost
    r = checked_run(ws.single_loop_program(),
                    ws.kernel_launch("single", ws.bound_pattern(31).bounds, quiet))
    assert r.spill_stores == 0 == r.spill_loads


def test_profile_validation():
    with pytest.raises(ProgramError):
        ws.ArchProfile(name="bad", div_cost=-1, spill_store_cost=0, spill_load_cost=0)
    with pytest.raises(ProgramError):
        ws.ArchProfile(name="bad", div_cost=0, spill_store_cost=0, spill_load_cost=0,
                       phys_capacity=4, spill_chunk=5)


def test_parse_profile_round_trip():
    profile = parse_profile("""
        # a hand-calibrated variant
        name = testarch
        div_cost = 30
        phys_capacity = 8
        spill_chunk = 2
        spill_store_cost = 10
        spill_load_cost = 12   ; trailing comment
        issue_cost = 0
        base.single = 1000
        base.double = 2000
    """)
    assert profile.name == "testarch"
    assert profile.div_cost == 30
    assert profile.phys_capacity == 8 and profile.spill_chunk == 2
    assert (profile.spill_store_cost, profile.spill_load_cost) == (10, 12)
    assert profile.issue_cost == 0
    assert profile.base_cycles == {"single": 1000, "double": 2000}


def test_parse_profile_defaults_and_unbounded():
    profile = parse_profile("phys_capacity = none")
    assert profile.phys_capacity is None
    assert profile.div_cost == 0 and profile.issue_cost == 1
    assert parse_profile("phys_capacity = inf").phys_capacity is None


@pytest.mark.parametrize("text,fragment", [
    ("bogus_key = 1", "unknown key"),
    ("div_cost = fast", "integer"),
    ("div_cost = 1\ndiv_cost = 2", "duplicate"),
    ("div_cost", "key = value"),
    ("base. = 3", "empty kernel id"),
])
def test_parse_profile_errors(text, fragment):
    with pytest.raises(ProgramError, match=fragment):
        parse_profile(text)


def test_load_profile_names_after_file(tmp_path):
    path = tmp_path / "slowarch.profile"
    path.write_text("div_cost = 7\n", encoding="utf-8")
    profile = ws.load_profile(path)
    assert profile.name == "slowarch"
    assert profile.div_cost == 7


def test_cost_events_from_counts_and_totals():
    counts = [0] * len(ws.StackEvent)
    counts[ws.StackEvent.SYNC_PUSH] = 2
    counts[ws.StackEvent.DIV_POP] = 3
    events = CostEvents.from_counts(counts)
    assert events.sync_pushes == 2 and events.div_pops == 3
    assert events.pushes == 2 and events.pops == 3
