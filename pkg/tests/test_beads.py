"""Bead configurations: round trips, interlacing, accessible intervals."""

import io

import pytest

from dimerflow.beads import (
    accessible_interval,
    beads_of,
    heights_of_beads,
    matching_of_beads,
    validate_interlacing,
)
from dimerflow.errors import FrozenBead, InterlacingViolation
from dimerflow.matching import height_of

from conftest import KINDS, enumerate_states, small_domain, state_matching


def all_beads(B):
    return [(i, r) for i in B.threads for r in range(len(B.mobile[i]))]


def oracle_interval(B, bead):
    """Valid slots for one bead with every other bead frozen."""
    i, r = bead
    jold = B.mobile[i][r]
    slo, shi = B.slot_range[i]
    ok = []
    for j in range(slo, shi + 1):
        trial = B.copy()
        pos = trial.mobile[i]
        if j != jold and j in pos:
            continue
        pos[r] = j
        pos.sort()
        try:
            validate_interlacing(trial)
        except InterlacingViolation:
            continue
        # moving one bead must also keep it bead r (no leapfrogging)
        if trial.mobile[i].index(j) == r:
            ok.append(j)
    return ok


@pytest.mark.parametrize("kind", KINDS)
def test_bead_matching_roundtrip(kind):
    dom = small_domain(kind)
    for key in enumerate_states(dom):
        M = state_matching(dom, key)
        B = beads_of(M, dom)
        M2 = matching_of_beads(B)
        assert M2.edges == M.edges


@pytest.mark.parametrize("kind", KINDS)
def test_bead_heights_match_height_of(kind):
    dom = small_domain(kind)
    for key in list(enumerate_states(dom))[:50]:
        M = state_matching(dom, key)
        B = beads_of(M, dom)
        h1 = heights_of_beads(B)
        h2 = height_of(M, dom)
        assert all(h1[f] == h2[f] for f in dom.faces)


@pytest.mark.parametrize("kind", KINDS)
def test_accessible_interval_is_reachable_set(kind):
    dom = small_domain(kind)
    states = sorted(enumerate_states(dom))[:40]
    for key in states:
        B = beads_of(state_matching(dom, key), dom)
        for bead in all_beads(B):
            iv = accessible_interval(B, bead)
            want = oracle_interval(B, bead)
            assert list(iv) == want
            # contiguous and contains the current position
            assert B.mobile[bead[0]][bead[1]] in iv


@pytest.mark.parametrize("kind", KINDS)
def test_intervals_disjoint_per_thread(kind):
    dom = small_domain(kind)
    for key in sorted(enumerate_states(dom))[:40]:
        B = beads_of(state_matching(dom, key), dom)
        for i in B.threads:
            taken = set()
            for r in range(len(B.mobile[i])):
                iv = set(accessible_interval(B, (i, r)))
                assert not iv & taken
                taken |= iv


@pytest.mark.parametrize("kind", KINDS)
def test_interval_respects_floor_and_ceiling(kind):
    dom = small_domain(kind)
    states = sorted(enumerate_states(dom))
    mid = states[len(states) // 2]
    B = beads_of(state_matching(dom, mid), dom)
    lo_h = heights_of_beads(B)
    for bead in all_beads(B):
        iv = accessible_interval(B, bead, floor=B, ceiling=B)
        assert list(iv) == [B.mobile[bead[0]][bead[1]]]
        full = accessible_interval(B, bead)
        only_floor = accessible_interval(B, bead, floor=B)
        only_ceil = accessible_interval(B, bead, ceiling=B)
        assert set(only_floor) <= set(full)
        assert set(only_ceil) <= set(full)


def test_frozen_bead_interval_raises():
    dom = small_domain("square")
    B = beads_of(state_matching(dom, sorted(enumerate_states(dom))[0]), dom)
    with pytest.raises(FrozenBead):
        accessible_interval(B, (min(B.threads), -10))


def test_invalid_config_detected():
    dom = small_domain("square")
    key = sorted(enumerate_states(dom))[0]
    B = beads_of(state_matching(dom, key), dom)
    # push a bead far outside its slot range
    i = next(i for i in B.threads if B.mobile[i])
    B.mobile[i][0] = B.slot_range[i][0] - 50
    with pytest.raises(InterlacingViolation) as ei:
        matching_of_beads(B)
    assert ei.value.thread == i


def test_bead_csv_format():
    dom = small_domain("square")
    key = sorted(enumerate_states(dom))[0]
    B = beads_of(state_matching(dom, key), dom)
    buf = io.StringIO()
    B.write_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "thread,position_index"
    assert len(lines) == 1 + sum(len(B.mobile[i]) for i in B.threads)
    for ln in lines[1:]:
        i, j = ln.split(",")
        int(i), int(j)
