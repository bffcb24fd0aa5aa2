"""Volume drift, coalescence, exact TV curves, moments, F_k sums."""

import math
from fractions import Fraction

import numpy as np
import pytest

from dimerflow.analysis import (
    VolumeTrace,
    _bead_volume,
    _event_kernel,
    _PathSampler,
    _state_spaces,
    coalescence_time,
    exact_update_drift,
    fk_sums,
    fluctuation_moments,
    gaussian_moment,
    mixing_scaling,
    pyramid_erosion,
    single_rotation_drift,
    tv_curve_exact,
    volume,
)
from dimerflow.beads import beads_of, heights_of_beads
from dimerflow.errors import (
    ComputeBudgetExceeded,
    DomainMismatch,
    HorizonExceeded,
)
from dimerflow.matching import (
    apply_rotation,
    block_domain,
    extremal_heights,
    height_of,
    matching_of,
    pyramid,
)

from conftest import KINDS, enumerate_states, small_domain, state_matching

DYN = ["glauber", "sync", "async"]


def ordered_pair(dom, k1, k2):
    """Pointwise min/max heights of two enumerated states."""
    h1 = height_of(state_matching(dom, k1), dom)
    h2 = height_of(state_matching(dom, k2), dom)
    lo, hi = h1.copy(), h2.copy()
    lo.h = {f: min(h1[f], h2[f]) for f in h1.h}
    hi.h = {f: max(h1[f], h2[f]) for f in h1.h}
    return matching_of(lo, dom), matching_of(hi, dom)


# ---------------------------------------------------------------------------
# volume


def test_volume_zero_on_equal_and_mismatch():
    dom = small_domain("square")
    lo, hi = extremal_heights(dom)
    assert volume(lo, lo) == 0
    assert volume(lo, hi) > 0
    assert volume(hi, lo) == -volume(lo, hi)
    dom2 = small_domain("hexagon")
    with pytest.raises(DomainMismatch):
        volume(lo, extremal_heights(dom2)[0])


@pytest.mark.parametrize("kind", KINDS)
def test_bead_volume_matches_height_volume(kind):
    dom = small_domain(kind)
    keys = sorted(enumerate_states(dom))
    pick = keys[:: max(1, len(keys) // 6)]
    for ka in pick:
        for kb in pick:
            Ma, Mb = state_matching(dom, ka), state_matching(dom, kb)
            v = volume(height_of(Ma, dom), height_of(Mb, dom))
            assert v == _bead_volume(beads_of(Ma, dom), beads_of(Mb, dom))


# ---------------------------------------------------------------------------
# drift


def kernel_drift_oracle(dom, M1, M2, kind):
    """Drift recomputed from the exact one-event transition kernels."""
    beadcfgs, key_of = _state_spaces(dom, cap=100000)
    sums = [sum(heights_of_beads(B)[f] for f in dom.faces)
            for B in beadcfgs]
    sums = np.array(sums)

    def key(M):
        B = beads_of(M, dom)
        return key_of[tuple(tuple(B.mobile[i]) for i in B.threads)]

    s1, s2 = key(M1), key(M2)
    if kind == "sync":
        vals = []
        for s in (s1, s2):
            tot = 0.0
            for par in (0, 1):
                P = _event_kernel(dom, beadcfgs, key_of, kind, parity=par)
                tot += float(P[s] @ sums - sums[s])
            vals.append(tot)
    else:
        if kind == "glauber":
            lam = len(dom.interior_faces)
        else:
            B0 = beadcfgs[0]
            lam = sum(len(B0.mobile[i]) for i in B0.threads)
        P = _event_kernel(dom, beadcfgs, key_of, kind)
        vals = [lam * float(P[s] @ sums - sums[s]) for s in (s1, s2)]
    return vals[1] - vals[0]


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("dyn", ["sync", "async"])
def test_drift_matches_kernel_oracle(kind, dyn):
    dom = small_domain(kind)
    keys = sorted(enumerate_states(dom))
    rng = np.random.default_rng(9)
    for _ in range(6):
        ka, kb = (keys[rng.integers(len(keys))] for _ in range(2))
        M1, M2 = ordered_pair(dom, ka, kb)
        d = exact_update_drift(M1, M2, dom, dyn)
        oracle = kernel_drift_oracle(dom, M1, M2, dyn)
        assert abs(float(d) - oracle) < 1e-9


def test_drift_same_for_all_kinds():
    dom = small_domain("hexagon")
    keys = sorted(enumerate_states(dom))
    M1, M2 = ordered_pair(dom, keys[1], keys[-2])
    vals = {dyn: exact_update_drift(M1, M2, dom, dyn) for dyn in DYN}
    assert vals["glauber"] == vals["sync"] == vals["async"]


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("dyn", DYN)
def test_drift_nonpositive_for_ordered_pairs(kind, dyn):
    dom = small_domain(kind)
    keys = sorted(enumerate_states(dom))
    rng = np.random.default_rng(17)
    for _ in range(15):
        ka, kb = (keys[rng.integers(len(keys))] for _ in range(2))
        M1, M2 = ordered_pair(dom, ka, kb)
        d = exact_update_drift(M1, M2, dom, dyn)
        assert isinstance(d, Fraction)
        assert d <= 0


@pytest.mark.parametrize("dyn", DYN)
def test_pyramid_rotation_drift(dyn):
    p, dom = pyramid("hexagon", 3)
    drifts = {}
    for f in sorted(dom.interior_faces):
        try:
            M1 = apply_rotation(p, f, "-", dom)
        except Exception:
            continue
        drifts[f] = single_rotation_drift(M1, f, dom, dyn)
    assert drifts
    # every rotatable face sits deep inside the window: no drift at all
    assert all(d == 0 for d in drifts.values())


@pytest.mark.parametrize("kind", KINDS)
def test_boundary_rotation_drift_negative_somewhere(kind):
    # in a tightly carved domain, discrepancies adjacent to the frozen
    # boundary lose accessible positions and drift strictly down
    dom = small_domain(kind)
    drifts = []
    for key in sorted(enumerate_states(dom))[:40]:
        M2 = state_matching(dom, key)
        for f in sorted(dom.interior_faces):
            try:
                M1 = apply_rotation(M2, f, "-", dom)
            except Exception:
                continue
            drifts.append(single_rotation_drift(M1, f, dom, "async"))
    assert drifts
    assert all(-1 <= d <= 0 for d in drifts)
    assert any(d < 0 for d in drifts)


def test_drift_with_band_constraints_still_nonpositive():
    dom = small_domain("square")
    lo, hi = extremal_heights(dom)
    Mlo, Mhi = matching_of(lo, dom), matching_of(hi, dom)
    fb, cb = beads_of(Mlo, dom), beads_of(Mhi, dom)
    for dyn in DYN:
        d = exact_update_drift(Mlo, Mhi, dom, dyn, floor=fb, ceiling=cb)
        assert d <= 0


# ---------------------------------------------------------------------------
# coalescence


@pytest.mark.parametrize("dyn", DYN)
def test_coalescence_deterministic_and_traced(dyn):
    dom = small_domain("square")
    tr = VolumeTrace()
    t1 = coalescence_time(dom, dyn, seed=5, trace=tr)
    t2 = coalescence_time(dom, dyn, seed=5)
    assert t1 == t2 > 0
    assert tr.volumes[0] > 0
    assert tr.volumes[-1] == 0
    assert coalescence_time(dom, dyn, seed=6) != t1 or dyn == "sync"


def test_coalescence_horizon():
    dom = small_domain("square")
    tr = VolumeTrace()
    with pytest.raises(HorizonExceeded) as ei:
        coalescence_time(dom, "glauber", seed=1, max_events=3, trace=tr)
    assert ei.value.trace is tr
    assert len(tr.volumes) == 4


# ---------------------------------------------------------------------------
# exact TV curves


@pytest.mark.parametrize("dyn", DYN)
def test_event_kernels_are_stochastic_and_uniform_stationary(dyn):
    dom = small_domain("square")
    beadcfgs, key_of = _state_spaces(dom, cap=100000)
    n = len(beadcfgs)
    kernels = []
    if dyn == "sync":
        kernels = [_event_kernel(dom, beadcfgs, key_of, dyn, parity=p)
                   for p in (0, 1)]
    else:
        kernels = [_event_kernel(dom, beadcfgs, key_of, dyn)]
    u = np.full(n, 1.0 / n)
    for P in kernels:
        assert np.allclose(P.sum(axis=1), 1.0)
        assert np.allclose(u @ P, u)


@pytest.mark.parametrize("dyn", DYN)
def test_tv_curve_shape(dyn):
    dom = small_domain("square")
    n = len(enumerate_states(dom))
    times = [0, 1, 2, 4, 8, 16, 32] if dyn == "sync" else \
        [0.0, 0.5, 1.0, 2.0, 4.0, 8.0]
    tvs, t_q = tv_curve_exact(dom, dyn, times)
    assert abs(tvs[0] - (1.0 - 1.0 / n)) < 1e-12
    for a, b in zip(tvs, tvs[1:]):
        assert b <= a + 1e-12
    assert t_q is not None
    assert tvs[-1] < 1.0 / (2.0 * math.e)


# ---------------------------------------------------------------------------
# scaling, erosion (smoke level; heavier runs live in acceptance tests)


def test_mixing_scaling_smoke():
    out = mixing_scaling("sync", "square", [4, 6], H=2, replicas=6, seed=1)
    assert len(out["rows"]) == 2
    for L, med, lo, hi in out["rows"]:
        assert lo <= med <= hi
    assert np.isfinite(out["slope"])


def test_pyramid_erosion_runs_and_erodes():
    tr, rate = pyramid_erosion("square", 4, horizon=3.0, seed=2)
    assert tr.volumes[0] == 0
    assert tr.volumes[-1] > 0
    assert rate > 0
    tr2, rate2 = pyramid_erosion("square", 4, horizon=3.0, seed=2)
    assert tr.volumes == tr2.volumes and rate == rate2


# ---------------------------------------------------------------------------
# fluctuation sampling


def test_gaussian_moments():
    assert [gaussian_moment(k) for k in range(1, 7)] == \
        [0.0, 1.0, 0.0, 3.0, 0.0, 15.0]


def test_path_sampler_matches_enumeration():
    dom = block_domain(4)
    faces = sorted(dom.interior_faces)
    f, g = faces[0], faces[-1]
    sampler = _PathSampler(dom, f, g)
    # exact law of h(g) - h(f) from the full state list
    from dimerflow.exact import enumerate_matchings

    n, states = enumerate_matchings(dom, states=True)
    vals = []
    for M in states:
        h = height_of(M, dom)
        vals.append(h[g] - h[f])
    exact_mean = sum(vals) / n
    exact_var = sum(v * v for v in vals) / n - exact_mean ** 2
    # the sampler's one-edge marginals are exact, so the mean of the
    # signed indicator sum must match up to the reference offset
    rng = np.random.default_rng(3)
    xs = np.array([sampler.sample(rng) for _ in range(4000)])
    ref_h = height_of(dom.m, dom)
    shift = ref_h[g] - ref_h[f]
    assert abs((xs.mean() + shift) - exact_mean) < 0.1
    assert abs(xs.var() - exact_var) < 0.15
    # sampled values must all be attainable height differences
    attained = {v - shift for v in vals}
    assert set(np.round(xs).astype(int)) <= attained


def test_fluctuation_moments_report():
    rep = fluctuation_moments("hexagon", (1.0, 1.0), 8,
                              (0, 0), (-3, -3), 400, seed=4, kmax=2)
    assert rep.orders == [2, 3, 4]
    assert abs(rep.moments[0] - 1.0) < 1e-9
    assert rep.gaussian == [1.0, 0.0, 3.0]
    assert rep.variance > 0
    assert rep.distance > 0
    import io

    buf = io.StringIO()
    rep.write_csv(buf)
    assert buf.getvalue().splitlines()[0] == "order,moment,se,gaussian_ref"


# ---------------------------------------------------------------------------
# F_k sums


def brute_F(k, L):
    from itertools import product

    tot = Fraction(0)
    for ds in product(range(1, L + 1), repeat=k):
        term = Fraction(1)
        for a in range(k):
            term /= ds[a] + ds[(a + 1) % k]
        tot += term
    return tot


def brute_Ft(k, L):
    from itertools import product

    tot = Fraction(0)
    for ds in product(range(1, L + 1), repeat=k):
        term = Fraction(1)
        for a in range(k - 1):
            term /= ds[a] + ds[a + 1]
        tot += term
    return tot


def test_fk_sums_match_brute_force():
    rows = fk_sums(4, [5])
    row = rows[0]
    for k in range(1, 5):
        assert row["F"][k] == brute_F(k, 5)
        assert row["Ft"][k] == brute_Ft(k, 5)


def test_fk_sums_order_six_small():
    row = fk_sums(6, [3])[0]
    assert row["F"][6] == brute_F(6, 3)
    assert row["Ft"][6] == brute_Ft(6, 3)


def test_fk_first_sum_is_half_harmonic():
    row = fk_sums(1, [10])[0]
    assert row["F"][1] == sum(Fraction(1, 2 * d) for d in range(1, 11))


def test_fk_open_bound():
    for row in fk_sums(5, [8, 20]):
        L = row["L"]
        for k in range(2, 6):
            assert row["Ft"][k] <= L * row["F"][k - 1]


def test_fk_budget_errors():
    with pytest.raises(ComputeBudgetExceeded):
        fk_sums(7, [10])
    with pytest.raises(ComputeBudgetExceeded):
        fk_sums(2, [300])
