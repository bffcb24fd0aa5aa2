"""Markov dynamics on bead configurations.

Three dynamics share the state representation: local Glauber rotations
(rate-1 clock per interior face, fair coin), the synchronous fast
dynamics (resample all beads of one thread-parity class at once), and
the asynchronous fast dynamics (rate-1 clock per bead, heat-bath move on
its accessible interval).  A monotone coupling drives several chains
with one randomness source: Glauber shares clocks and coins, the fast
dynamics give each bead the accessible edge carrying the lowest shared
uniform mark.
"""

from __future__ import annotations

from bisect import bisect_left

import numpy as np

from .beads import accessible_interval, beads_of, heights_of_beads, _rank_bounds
from .errors import (
    FrozenBead,
    InvalidConstraint,
    StateOutsideBand,
)


class ChainState:
    """One chain: bead configuration, continuous clock, rng stream.

    The height field is derived from the beads on demand and cached;
    optional floor/ceiling constraints (attached via constrain) clip all
    subsequent updates.
    """

    def __init__(self, beads, rng=None, clock=0.0):
        self.beads = beads
        self.rng = np.random.default_rng(rng) if not isinstance(
            rng, np.random.Generator) else rng
        self.clock = float(clock)
        self.floor = None
        self.ceiling = None
        self._height = None

    @classmethod
    def from_matching(cls, M, domain, rng=None):
        return cls(beads_of(M, domain), rng=rng)

    @property
    def height(self):
        if self._height is None:
            self._height = heights_of_beads(self.beads)
        return self._height

    def copy(self, rng=None):
        st = ChainState(self.beads.copy(),
                        rng=self.rng if rng is None else rng,
                        clock=self.clock)
        st.floor = self.floor
        st.ceiling = self.ceiling
        return st

    def move(self, i, r, j):
        self.beads.move(i, r, j)
        self._height = None

    def interval(self, bead):
        return accessible_interval(self.beads, bead,
                                   floor=self.floor, ceiling=self.ceiling)

    def mobile_beads(self):
        """All (thread, rank) pairs, in thread order."""
        out = []
        for i in self.beads.threads:
            out.extend((i, r) for r in range(len(self.beads.mobile[i])))
        return out


def constrain(state, floor, ceiling):
    """Attach floor/ceiling height constraints to the chain.

    Moving a bead up lowers heights, so the floor caps upward moves and
    the ceiling downward ones.  Returns the state (mutated).
    """
    dom = state.beads.domain
    fpos = _rank_bounds(floor, dom)
    cpos = _rank_bounds(ceiling, dom)
    for i in state.beads.threads:
        pos = state.beads.mobile[i]
        fp = fpos[i] if fpos is not None else None
        cp = cpos[i] if cpos is not None else None
        if fp is not None and cp is not None:
            if any(c > f for f, c in zip(fp, cp)):
                raise InvalidConstraint(
                    f"floor lies above ceiling on thread {i}")
        for r, j in enumerate(pos):
            if fp is not None and j > fp[r]:
                raise StateOutsideBand(
                    f"bead {r} of thread {i} above the floor position")
            if cp is not None and j < cp[r]:
                raise StateOutsideBand(
                    f"bead {r} of thread {i} below the ceiling position")
    state.floor = floor
    state.ceiling = ceiling
    return state


# ---------------------------------------------------------------------------
# single-chain dynamics


def _glauber_move(state, f, coin):
    """Attempt the rotation at face f; coin '+' tries to raise h(f),
    which moves the bead from slot j to j-1.  No-op when impossible."""
    beads = state.beads
    lat = beads.domain.lattice
    i, j = lat.thread_of_face(f)
    pos = beads.mobile[i]
    if coin == "+":
        jold, jnew = j, j - 1
    else:
        jold, jnew = j - 1, j
    k = bisect_left(pos, jold)
    if k == len(pos) or pos[k] != jold:
        return False
    iv = state.interval((i, k))
    if jnew not in iv:
        return False
    state.move(i, k, jnew)
    return True


def glauber_run(state, horizon, domain=None, floor=None, ceiling=None):
    """Run the local rotation dynamics up to the given clock time."""
    dom = state.beads.domain
    if floor is not None or ceiling is not None:
        constrain(state, floor, ceiling)
    faces = sorted(dom.interior_faces)
    n = len(faces)
    rng = state.rng
    while True:
        dt = rng.exponential(1.0 / n)
        if state.clock + dt > horizon:
            state.clock = horizon
            return state
        state.clock += dt
        f = faces[rng.integers(n)]
        coin = "+" if rng.random() < 0.5 else "-"
        _glauber_move(state, f, coin)


def _thread_parity(parity):
    if parity in ("even", 0):
        return 0
    if parity in ("odd", 1):
        return 1
    raise ValueError(f"parity must be 'even' or 'odd', got {parity!r}")


def sync_fast_step(state, parity, domain=None, floor=None, ceiling=None):
    """Resample every mobile bead on threads of the given index parity
    uniformly on its accessible interval (intervals are conditionally
    disjoint given the opposite-parity threads, so the beads are
    resampled independently)."""
    if floor is not None or ceiling is not None:
        constrain(state, floor, ceiling)
    par = _thread_parity(parity)
    rng = state.rng
    moves = []
    for i in state.beads.threads:
        if i % 2 != par:
            continue
        for r in range(len(state.beads.mobile[i])):
            iv = state.interval((i, r))
            moves.append((i, r, iv[rng.integers(len(iv))]))
    for i, r, j in moves:
        state.move(i, r, j)
    state.clock += 1.0
    return state


def async_fast_step(state, bead, domain=None, floor=None, ceiling=None):
    """Heat-bath move of one bead: uniform on its accessible interval."""
    if floor is not None or ceiling is not None:
        constrain(state, floor, ceiling)
    i, r = bead
    if i not in state.beads.mobile or not \
            0 <= r < len(state.beads.mobile[i]):
        raise FrozenBead(f"no mobile bead {r} on thread {i}")
    iv = state.interval(bead)
    state.move(i, r, iv[state.rng.integers(len(iv))])
    return state


def async_fast_run(state, horizon):
    """Run the asynchronous fast dynamics (rate-1 clock per bead) up to
    the given clock time."""
    beads = state.mobile_beads()
    n = len(beads)
    rng = state.rng
    while True:
        dt = rng.exponential(1.0 / n)
        if state.clock + dt > horizon:
            state.clock = horizon
            return state
        state.clock += dt
        async_fast_step(state, beads[rng.integers(n)])


# ---------------------------------------------------------------------------
# monotone coupling


class DynamicsKind:
    GLAUBER = "glauber"
    SYNC = "sync"
    ASYNC = "async"


class CoupledState:
    """Several chains over one domain driven by shared randomness.

    If the chains start ordered (heights pointwise increasing along the
    list, i.e. bead positions decreasing), every coupled update preserves
    the order.  The sync coupling alternates parities across steps.
    """

    def __init__(self, chains, rng, floor=None, ceiling=None):
        self.chains = list(chains)
        self.rng = np.random.default_rng(rng) if not isinstance(
            rng, np.random.Generator) else rng
        self.clock = 0.0
        self.parity = 0
        for st in self.chains:
            if floor is not None or ceiling is not None:
                constrain(st, floor, ceiling)

    def coalesced(self):
        first = self.chains[0].beads
        return all(st.beads == first for st in self.chains[1:])


def _shared_argmin(cs, marks, i, r, iv):
    """Slot of the interval carrying the lowest shared uniform mark."""
    best, bj = None, None
    for j in iv:
        u = marks.get((i, r, j))
        if u is None:
            u = marks[(i, r, j)] = cs.rng.random()
        if best is None or u < best:
            best, bj = u, j
    return bj


def _coupled_fast_update(cs, beads_to_move):
    """Move the given beads in every chain using one table of shared
    uniform marks keyed by (thread, rank, slot)."""
    marks = {}
    moves = [[] for _ in cs.chains]
    for k, st in enumerate(cs.chains):
        for i, r in beads_to_move:
            iv = st.interval((i, r))
            moves[k].append((i, r, _shared_argmin(cs, marks, i, r, iv)))
    for st, mv in zip(cs.chains, moves):
        for i, r, j in mv:
            st.move(i, r, j)


def coupled_step(cs, kind):
    """One shared-randomness event applied to every chain."""
    if kind == DynamicsKind.GLAUBER:
        dom = cs.chains[0].beads.domain
        faces = sorted(dom.interior_faces)
        n = len(faces)
        cs.clock += cs.rng.exponential(1.0 / n)
        f = faces[cs.rng.integers(n)]
        coin = "+" if cs.rng.random() < 0.5 else "-"
        for st in cs.chains:
            st.clock = cs.clock
            _glauber_move(st, f, coin)
    elif kind == DynamicsKind.SYNC:
        par = cs.parity
        cs.parity = 1 - cs.parity
        cs.clock += 1.0
        sel = [(i, r) for i, r in cs.chains[0].mobile_beads()
               if i % 2 == par]
        _coupled_fast_update(cs, sel)
        for st in cs.chains:
            st.clock = cs.clock
    elif kind == DynamicsKind.ASYNC:
        beads = cs.chains[0].mobile_beads()
        n = len(beads)
        cs.clock += cs.rng.exponential(1.0 / n)
        b = beads[cs.rng.integers(n)]
        _coupled_fast_update(cs, [b])
        for st in cs.chains:
            st.clock = cs.clock
    else:
        raise ValueError(f"unknown dynamics kind {kind!r}")
    return cs
