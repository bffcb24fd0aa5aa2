"""Single-chain dynamics and the monotone coupling."""

from collections import Counter

import numpy as np
import pytest

from dimerflow.beads import beads_of
from dimerflow.dynamics import (
    ChainState,
    CoupledState,
    DynamicsKind,
    async_fast_run,
    async_fast_step,
    constrain,
    coupled_step,
    glauber_run,
    sync_fast_step,
)
from dimerflow.errors import FrozenBead, InvalidConstraint, StateOutsideBand
from dimerflow.matching import extremal_heights, matching_of

from conftest import KINDS, enumerate_states, small_domain, state_matching

KINDS_DYN = ["glauber", "sync", "async"]


def extremal_states(dom):
    lo, hi = extremal_heights(dom)
    return matching_of(lo, dom), matching_of(hi, dom)


def run_one(state, kind, rng):
    if kind == "glauber":
        glauber_run(state, state.clock + 1.0)
    elif kind == "sync":
        sync_fast_step(state, int(rng.integers(2)))
    else:
        async_fast_run(state, state.clock + 1.0)
    return state


def state_key(state):
    return tuple((i, tuple(state.beads.mobile[i]))
                 for i in state.beads.threads)


@pytest.mark.parametrize("dyn", KINDS_DYN)
def test_stationarity_roughly_uniform(dyn):
    dom = small_domain("square")
    n_states = len(enumerate_states(dom))
    Mlo, _ = extremal_states(dom)
    st = ChainState.from_matching(Mlo, dom, rng=7)
    rng = np.random.default_rng(11)
    # burn in, then sample along the trajectory
    for _ in range(50):
        run_one(st, dyn, rng)
    counts = Counter()
    samples = 400 * n_states // 10
    for _ in range(samples):
        for _ in range(2):
            run_one(st, dyn, rng)
        counts[state_key(st)] += 1
    # every state visited, none dominating
    assert len(counts) == n_states
    top = max(counts.values()) / samples
    assert top < 4.0 / n_states


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("dyn", KINDS_DYN)
def test_coupling_preserves_order_and_absorbs(kind, dyn):
    dom = small_domain(kind)
    Mlo, Mhi = extremal_states(dom)
    top = ChainState(beads_of(Mhi, dom))
    bot = ChainState(beads_of(Mlo, dom))
    cs = CoupledState([top, bot], rng=3)
    met = None
    for step in range(4000):
        coupled_step(cs, dyn)
        for i in top.beads.threads:
            pt, pb = top.beads.mobile[i], bot.beads.mobile[i]
            assert all(a <= b for a, b in zip(pt, pb)), \
                f"order violated on thread {i} at step {step}"
        if cs.coalesced():
            met = step
            break
    assert met is not None, "chains failed to coalesce"
    # coalescence is absorbing
    for _ in range(50):
        coupled_step(cs, dyn)
        assert cs.coalesced()


def test_constrain_band_errors():
    dom = small_domain("square")
    Mlo, Mhi = extremal_states(dom)
    st = ChainState(beads_of(Mlo, dom))
    with pytest.raises(StateOutsideBand):
        constrain(st, beads_of(Mhi, dom), None)
    st2 = ChainState(beads_of(Mhi, dom))
    with pytest.raises(StateOutsideBand):
        constrain(st2, None, beads_of(Mlo, dom))
    with pytest.raises(InvalidConstraint):
        constrain(ChainState(beads_of(Mhi, dom)),
                  beads_of(Mhi, dom), beads_of(Mlo, dom))


def test_constrained_run_stays_in_band():
    dom = small_domain("square")
    Mlo, Mhi = extremal_states(dom)
    floor = beads_of(Mlo, dom)
    st = ChainState(beads_of(Mlo, dom), rng=5)
    glauber_run(st, 20.0, floor=floor)
    for i in st.beads.threads:
        assert all(j <= fj for j, fj in
                   zip(st.beads.mobile[i], floor.mobile[i]))


def test_async_step_rejects_frozen():
    dom = small_domain("square")
    st = ChainState(beads_of(extremal_states(dom)[0], dom), rng=1)
    with pytest.raises(FrozenBead):
        async_fast_step(st, (min(st.beads.threads) - 5, 0))


def test_sync_step_advances_clock():
    dom = small_domain("square")
    st = ChainState(beads_of(extremal_states(dom)[0], dom), rng=1)
    t0 = st.clock
    sync_fast_step(st, "even")
    sync_fast_step(st, "odd")
    assert st.clock == t0 + 2.0
    with pytest.raises(ValueError):
        sync_fast_step(st, "sideways")


def test_glauber_run_reaches_horizon():
    dom = small_domain("square")
    st = ChainState(beads_of(extremal_states(dom)[0], dom), rng=2)
    glauber_run(st, 5.0)
    assert st.clock == 5.0
    glauber_run(st, 7.5)
    assert st.clock == 7.5


def test_identical_seeds_identical_trajectories():
    dom = small_domain("square")
    M = extremal_states(dom)[0]
    a = ChainState.from_matching(M, dom, rng=123)
    b = ChainState.from_matching(M, dom, rng=123)
    glauber_run(a, 30.0)
    glauber_run(b, 30.0)
    assert a.beads == b.beads and a.clock == b.clock
