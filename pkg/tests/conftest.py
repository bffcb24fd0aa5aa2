"""Shared helpers: small domains and brute-force state space walks."""

import pytest

from dimerflow.lattice import (
    DiskRegion,
    SquareRegion,
    build_lattice,
    carve_domain,
)
from dimerflow.matching import (
    apply_rotation,
    block_domain,
    domain_state,
    lozenge_domain,
    periodic_matching,
    pyramid,
    rotatable,
    rotation_direction,
)

KINDS = ["square", "hexagon", "squarehexagon"]


def frontier_edges(M, domain):
    """Interior edge set of M (canonical frozenset), the BFS state key."""
    return frozenset(e for e in domain.interior_edges if M.is_occupied(e))


def state_matching(domain, key):
    return domain_state(domain, sorted(key))


def boundary_state(domain):
    """The boundary condition as an explicit-edge state."""
    return domain_state(domain, [e for e in domain.interior_edges
                                 if domain.m.is_occupied(e)])


def enumerate_states(domain, cap=100000):
    """All states reachable from the boundary condition by rotations."""
    lat = domain.lattice
    m0 = domain_state(domain, [e for e in domain.interior_edges
                               if domain.m.is_occupied(e)])
    start = frontier_edges(m0, domain)
    seen = {start}
    stack = [start]
    while stack:
        key = stack.pop()
        M = state_matching(domain, key)
        for f in domain.interior_faces:
            if not rotatable(M, f, lat):
                continue
            dh = rotation_direction(M, f, lat)
            M2 = apply_rotation(M, f, "+" if dh == 1 else "-", domain)
            k2 = frontier_edges(M2, domain)
            if k2 not in seen:
                seen.add(k2)
                stack.append(k2)
        if len(seen) > cap:
            raise AssertionError("state space larger than cap")
    return seen


def small_domain(kind, L=3):
    """A small carved domain with a non-trivial state space."""
    lat = build_lattice(kind)
    if kind == "hexagon":
        # square carves freeze on the hexagon lattice; use a pyramid
        return pyramid(kind, 2)[1]
    if kind == "squarehexagon":
        # the flat slope lies on the Newton polygon boundary, so periodic
        # boundary conditions freeze square carves here as well
        return pyramid(kind, 1)[1]
    m = periodic_matching(lat)
    return carve_domain(lat, SquareRegion(), L, m)


@pytest.fixture(scope="session")
def domains():
    return {k: small_domain(k) for k in KINDS}
