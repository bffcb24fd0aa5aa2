"""Exact counting, sampling, and torus spectral machinery."""

from fractions import Fraction

import numpy as np
import pytest

from dimerflow.errors import CapExceeded, DegenerateZero
from dimerflow.exact import (
    TorusKasteleyn,
    asymptotic_kinv,
    build_torus_kasteleyn,
    characteristic_zeros,
    edge_probabilities,
    enumerate_matchings,
    exact_sample,
    first_edge_probability,
    kasteleyn_count,
    kinv_integral,
    slope_of_weights,
    validate_signs,
    weights_for_slope,
)
from dimerflow.lattice import build_lattice
from dimerflow.matching import block_domain, lozenge_domain, pyramid

from conftest import KINDS, enumerate_states, frontier_edges, small_domain


@pytest.mark.parametrize("kind", KINDS)
def test_kasteleyn_signs(kind):
    lat = build_lattice(kind)
    validate_signs(lat, lat.faces_in_box(-5, 5, -5, 5))


@pytest.mark.parametrize("kind", KINDS)
def test_count_matches_enumeration_and_rotation_bfs(kind):
    dom = small_domain(kind)
    n_bfs = len(enumerate_states(dom))
    n_enum = enumerate_matchings(dom)
    n_kast = kasteleyn_count(dom)
    assert n_enum == n_bfs == n_kast


def test_block_counts():
    # domino tilings of the n x n square
    for n, count in [(2, 2), (4, 36), (6, 6728)]:
        dom = block_domain(n)
        assert enumerate_matchings(dom) == count
        assert kasteleyn_count(dom) == count


def test_lozenge_counts():
    # stackings in the L^3 box
    for L, count in [(1, 2), (2, 20), (3, 980)]:
        dom = lozenge_domain(L)
        assert enumerate_matchings(dom) == count
        assert kasteleyn_count(dom) == count


def test_enumerate_cap():
    with pytest.raises(CapExceeded):
        enumerate_matchings(block_domain(6), cap=100)


def test_enumerate_states_are_valid_and_distinct():
    dom = block_domain(4)
    n, states = enumerate_matchings(dom, states=True)
    assert n == 36 and len(states) == 36
    assert len(set(states)) == 36


def test_exact_sample_uniform():
    dom = block_domain(4)
    _n, states = enumerate_matchings(dom, states=True)
    keys = {frontier_edges(M, dom) for M in states}
    rng = np.random.default_rng(42)
    counts = {}
    for _ in range(1800):
        M = exact_sample(dom, rng)
        k = frontier_edges(M, dom)
        assert k in keys
        counts[k] = counts.get(k, 0) + 1
    assert len(counts) == 36
    # each state has expectation 50; allow wide slack
    assert max(counts.values()) < 100
    assert min(counts.values()) > 15


def test_first_edge_probability_rational():
    dom = block_domain(4)
    _n, states = enumerate_matchings(dom, states=True)
    # pick an interior edge and compare with the exact ratio
    e = sorted(dom.interior_edges)[0]
    w, b = e if (e[0][0] + e[0][1]) % 2 == 0 else (e[1], e[0])
    p = first_edge_probability(dom, w, b)
    hits = sum(1 for st in states if st.is_occupied(e))
    assert p == Fraction(hits, len(states))


@pytest.mark.parametrize("kind", KINDS)
def test_torus_adjugate_identity(kind):
    tk = build_torus_kasteleyn(kind, (1.0, 1.0))
    tk.check_adjugate()
    tk2 = build_torus_kasteleyn(kind, (1.3, 0.8))
    tk2.check_adjugate()


def test_hexagon_zero_is_third_root_of_unity():
    tk = build_torus_kasteleyn("hexagon", (1.0, 1.0))
    sd = characteristic_zeros(tk)
    assert abs(abs(sd.z0) - 1) < 1e-9
    assert abs(abs(sd.w0) - 1) < 1e-9
    w = np.exp(2j * np.pi / 3)
    assert min(abs(sd.z0 - w), abs(sd.z0 - w.conjugate())) < 1e-9


def test_square_symmetric_weights_degenerate():
    tk = build_torus_kasteleyn("square", (1.0, 1.0))
    with pytest.raises(DegenerateZero):
        characteristic_zeros(tk)


def test_square_generic_weights_zero():
    tk = build_torus_kasteleyn("square", (1.0, 0.7))
    sd = characteristic_zeros(tk)
    from dimerflow.exact import lp_eval
    assert abs(lp_eval(tk.P, sd.z0, sd.w0)) < 1e-8


def test_hexagon_edge_probabilities_third():
    tk = build_torus_kasteleyn("hexagon", (1.0, 1.0))
    lat = tk.lattice
    w = (0, 0)
    probs = [edge_probabilities(tk, [(w, b)]) for b in lat.neighbors(w)]
    assert len(probs) == 3
    for p in probs:
        assert abs(p - 1.0 / 3.0) < 1e-8
    assert abs(sum(probs) - 1.0) < 1e-8
    # two edges sharing the white vertex can never both be occupied
    b1, b2 = lat.neighbors(w)[:2]
    assert abs(edge_probabilities(tk, [(w, b1), (w, b2)])) < 1e-8


def test_kinv_matches_asymptotics_far_out():
    tk = build_torus_kasteleyn("hexagon", (1.0, 1.0))
    sd = characteristic_zeros(tk)
    for x, y in [(12, 0), (0, 12), (9, 9), (12, -6)]:
        val, err = kinv_integral(tk, 0, 0, x, y)
        asy = asymptotic_kinv(sd, 0, 0, x, y)
        assert err < 1e-8
        assert abs(val.real - asy) * (x * x + y * y) < 2.0


def test_slope_of_symmetric_hexagon_weights():
    tk = build_torus_kasteleyn("hexagon", (1.0, 1.0))
    s, t = slope_of_weights(tk)
    assert abs(s - 1.0 / 3.0) < 1e-7
    assert abs(t + 1.0 / 3.0) < 1e-7


def test_weights_for_slope_roundtrip():
    target = (0.3, -0.25)
    weights = weights_for_slope("hexagon", target)
    tk = build_torus_kasteleyn("hexagon", weights)
    s, t = slope_of_weights(tk)
    assert abs(s - target[0]) < 1e-5
    assert abs(t - target[1]) < 1e-5
