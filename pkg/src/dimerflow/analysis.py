"""Experiment layer: volume diagnostics, exact update drift, coalescence
and mixing estimation, exact TV curves, fluctuation moments, F_k sums."""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .beads import accessible_interval, beads_of
from .dynamics import (
    ChainState,
    CoupledState,
    DynamicsKind,
    coupled_step,
)
from .errors import (
    ComputeBudgetExceeded,
    DomainMismatch,
    HorizonExceeded,
    InsufficientSamples,
    NumericalError,
)
from .matching import extremal_heights, height_of, matching_of, pyramid


# ---------------------------------------------------------------------------
# volume


def volume(h1, h2):
    """Sum of height differences h2 - h1 over the domain's faces."""
    if h1.domain is not h2.domain:
        raise DomainMismatch("height fields live on different domains")
    return sum(h2[f] - h1[f] for f in h1.domain.faces)


@dataclass
class VolumeTrace:
    """Sampled (time, volume) pairs of a coupled pair of chains."""

    times: list = field(default_factory=list)
    volumes: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, t, v):
        self.times.append(t)
        self.volumes.append(v)

    def write_csv(self, fileobj):
        fileobj.write("time,volume\n")
        for t, v in zip(self.times, self.volumes):
            fileobj.write(f"{t},{v}\n")


def _bead_volume(B1, B2):
    """Volume between the matchings of two bead configurations: higher
    heights go with lower bead slots, so V = sum of (pos1 - pos2)."""
    v = 0
    for i in B1.threads:
        v += sum(a - b for a, b in zip(B1.mobile[i], B2.mobile[i]))
    return v


# ---------------------------------------------------------------------------
# exact update drift


@dataclass
class DriftReport:
    """Per-case exact drift values with a tag for each case."""

    rows: list = field(default_factory=list)  # (tag, Fraction)

    def append(self, tag, value):
        self.rows.append((tag, value))

    def values(self):
        return [v for _t, v in self.rows]


def _interval_mean(B, bead, floor, ceiling):
    iv = accessible_interval(B, bead, floor=floor, ceiling=ceiling)
    return Fraction(iv[0] + iv[-1], 2)


def exact_update_drift(M1, M2, domain, kind, floor=None, ceiling=None):
    """Exact expected change of V = sum_f [h2(f) - h1(f)] per unit time.

    Every bead is resampled at rate one, uniformly on its accessible
    interval; the expected post-update position is the interval
    midpoint, so the drift is a finite sum of half-integers.  The
    synchronous and asynchronous fast dynamics share this expectation
    (linearity makes it independent of the update schedule), and the
    rotation dynamics is compared against the same functional, so the
    kind does not change the value.
    """
    if kind not in (DynamicsKind.GLAUBER, DynamicsKind.SYNC,
                    DynamicsKind.ASYNC):
        raise ValueError(f"unknown dynamics kind {kind!r}")
    B1 = M1 if not hasattr(M1, "partner") else beads_of(M1, domain)
    B2 = M2 if not hasattr(M2, "partner") else beads_of(M2, domain)
    # beads on threads away from every discrepancy have equal positions
    # and equal intervals (intervals only see adjacent threads), so they
    # cancel; restrict the sum to the discrepancy neighborhood
    diff = {i for i in B1.threads if B1.mobile[i] != B2.mobile[i]}
    near = {j for i in diff for j in (i - 1, i, i + 1)} & set(B1.threads)
    drift = Fraction(0)
    for i in sorted(near):
        p1, p2 = B1.mobile[i], B2.mobile[i]
        for r in range(len(p1)):
            m1 = _interval_mean(B1, (i, r), floor, ceiling)
            m2 = _interval_mean(B2, (i, r), floor, ceiling)
            drift += (m1 - m2) - (p1[r] - p2[r])
    return drift


def single_rotation_drift(M, f, domain, kind, floor=None, ceiling=None):
    """Drift of the ordered pair (M, M rotated up at face f)."""
    from .matching import apply_rotation

    M2 = apply_rotation(M, f, "+", domain)
    return exact_update_drift(M, M2, domain, kind,
                              floor=floor, ceiling=ceiling)


# ---------------------------------------------------------------------------
# coalescence


def _band_states(domain, floor=None, ceiling=None):
    """Extremal starting states clipped into the constraint band."""
    lo, hi = extremal_heights(domain)
    hlo, hhi = lo, hi
    if floor is not None:
        hf = height_of(floor, domain) if hasattr(floor, "partner") else floor
        hlo = lo.copy()
        hlo.h = {f: max(lo[f], hf[f]) for f in lo.h}
        hhi2 = hi.copy()
        hhi2.h = {f: max(hi[f], hf[f]) for f in hi.h}
        hhi = hhi2
    if ceiling is not None:
        hc = height_of(ceiling, domain) if hasattr(ceiling, "partner") \
            else ceiling
        hhi2 = hhi.copy()
        hhi2.h = {f: min(hhi[f], hc[f]) for f in hhi.h}
        hhi = hhi2
        hlo2 = hlo.copy()
        hlo2.h = {f: min(hlo[f], hc[f]) for f in hlo.h}
        hlo = hlo2
    return matching_of(hlo, domain), matching_of(hhi, domain)


def coalescence_time(domain, kind, floor=None, ceiling=None, seed=0,
                     max_events=10_000_000, trace=None):
    """First time the coupled extremal pair meets, for the given seed."""
    Mlo, Mhi = _band_states(domain, floor, ceiling)
    top = ChainState(beads_of(Mhi, domain))
    bot = ChainState(beads_of(Mlo, domain))
    fb = beads_of(floor, domain) if floor is not None and \
        hasattr(floor, "partner") else floor
    cb = beads_of(ceiling, domain) if ceiling is not None and \
        hasattr(ceiling, "partner") else ceiling
    cs = CoupledState([top, bot], rng=seed, floor=fb, ceiling=cb)
    if trace is not None:
        trace.append(cs.clock, _bead_volume(bot.beads, top.beads))
    for _ev in range(max_events):
        if cs.coalesced():
            return cs.clock
        coupled_step(cs, kind)
        if trace is not None:
            trace.append(cs.clock, _bead_volume(bot.beads, top.beads))
    if cs.coalesced():
        return cs.clock
    raise HorizonExceeded(
        f"no coalescence within {max_events} events", trace=trace)


# ---------------------------------------------------------------------------
# exact TV curves on enumerable domains


def _state_spaces(domain, cap):
    from .exact import enumerate_matchings

    n, states = enumerate_matchings(domain, cap=cap, states=True)
    beadcfgs = [beads_of(M, domain) for M in states]
    key_of = {}
    for idx, B in enumerate(beadcfgs):
        key_of[_bead_key(B)] = idx
    return beadcfgs, key_of


def _bead_key(B):
    return tuple(tuple(B.mobile[i]) for i in B.threads)


def _event_kernel(domain, beadcfgs, key_of, kind, parity=None):
    """One-event stochastic matrix: a uniformly chosen clock (face or
    bead) fires, or for sync the full parity class updates."""
    n = len(beadcfgs)
    P = np.zeros((n, n))
    lat = domain.lattice
    faces = sorted(domain.interior_faces)
    for s, B in enumerate(beadcfgs):
        if kind == DynamicsKind.GLAUBER:
            w = 1.0 / (2 * len(faces))
            for f in faces:
                i, j = lat.thread_of_face(f)
                for j_from, j_to in ((j, j - 1), (j - 1, j)):
                    t = _moved_index(B, key_of, i, j_from, j_to)
                    P[s, s if t is None else t] += w
        elif kind == DynamicsKind.ASYNC:
            beads = [(i, r) for i in B.threads
                     for r in range(len(B.mobile[i]))]
            for i, r in beads:
                iv = accessible_interval(B, (i, r))
                w = 1.0 / (len(beads) * len(iv))
                for j in iv:
                    B2 = B.copy()
                    B2.mobile[i][r] = j
                    P[s, key_of[_bead_key(B2)]] += w
        else:  # sync: product update of one parity class
            sel = [(i, r) for i in B.threads if i % 2 == parity
                   for r in range(len(B.mobile[i]))]
            ivs = [accessible_interval(B, b) for b in sel]
            _fill_product(P, s, B, key_of, sel, ivs)
    return P


def _moved_index(B, key_of, i, j_from, j_to):
    pos = B.mobile.get(i)
    if pos is None:
        return None
    k = bisect_left(pos, j_from)
    if k == len(pos) or pos[k] != j_from:
        return None
    if j_to not in accessible_interval(B, (i, k)):
        return None
    B2 = B.copy()
    B2.mobile[i][k] = j_to
    B2.mobile[i].sort()
    return key_of[_bead_key(B2)]


def _fill_product(P, s, B, key_of, sel, ivs):
    weight = 1.0
    for iv in ivs:
        weight /= len(iv)

    def rec(k, B2):
        if k == len(sel):
            P[s, key_of[_bead_key(B2)]] += weight
            return
        i, r = sel[k]
        for j in ivs[k]:
            B3 = B2.copy()
            B3.mobile[i][r] = j
            rec(k + 1, B3)

    rec(0, B)


def tv_curve_exact(domain, kind, times, cap=4000):
    """Exact TV distance to uniform at the given times, starting from
    the maximal state.  Continuous-time kinds use uniformization with a
    truncation bound below 1e-9; sync applies alternating parity steps.
    Returns (tv_values, t_quarter) with t_quarter the first listed time
    at which TV < 1/(2e)."""
    beadcfgs, key_of = _state_spaces(domain, cap)
    n = len(beadcfgs)
    _lo, hi = extremal_heights(domain)
    start = key_of[_bead_key(beads_of(matching_of(hi, domain), domain))]

    if kind == DynamicsKind.SYNC:
        P0 = _event_kernel(domain, beadcfgs, key_of, kind, parity=0)
        P1 = _event_kernel(domain, beadcfgs, key_of, kind, parity=1)
        mus = {}
        mu = np.zeros(n)
        mu[start] = 1.0
        kmax = int(max(times))
        mus[0] = mu.copy()
        for k in range(1, kmax + 1):
            mu = mu @ (P0 if k % 2 == 1 else P1)
            mus[k] = mu.copy()
        out = [float(0.5 * np.abs(mus[int(t)] - 1.0 / n).sum())
               for t in times]
    else:
        # rate per clock is one; total event rate lam
        if kind == DynamicsKind.GLAUBER:
            lam = float(len(domain.interior_faces))
        else:
            lam = float(sum(len(beadcfgs[0].mobile[i])
                            for i in beadcfgs[0].threads))
        P = _event_kernel(domain, beadcfgs, key_of, kind)
        out = []
        for t in times:
            mu = _uniformized_law(P, start, lam * float(t), n)
            out.append(float(0.5 * np.abs(mu - 1.0 / n).sum()))
    t_quarter = None
    for t, tv in zip(times, out):
        if tv < 1.0 / (2.0 * math.e):
            t_quarter = t
            break
    return out, t_quarter


def _uniformized_law(P, start, a, n, tol=1e-10):
    """delta_start exp(a (P - I)) via the Poisson series, truncated when
    the remaining tail weight is below tol."""
    mu = np.zeros(n)
    mu[start] = 1.0
    if a <= 0:
        return mu
    out = np.zeros(n)
    logw = -a  # log of Poisson(a) weight at k = 0
    acc = 0.0
    k = 0
    while True:
        w = math.exp(logw)
        out += w * mu
        acc += w
        if 1.0 - acc < tol and k > a:
            break
        k += 1
        if k > 100 + 10 * a:
            raise NumericalError("uniformization series did not converge")
        logw += math.log(a) - math.log(k)
        mu = mu @ P
    return out / acc


# ---------------------------------------------------------------------------
# mixing scaling


def _flat_band_domain(kind, L, H):
    """Square carve with flat boundary and a height band of width H."""
    from .lattice import SquareRegion, build_lattice, carve_domain
    from .matching import flatten_to_plane

    slopes = {"square": (0, 0),
              "hexagon": (Fraction(1, 3), Fraction(-1, 3)),
              "squarehexagon": (Fraction(-1, 2), 0)}
    lat = build_lattice(kind)
    m = flatten_to_plane(kind, slopes[kind], L)
    dom = carve_domain(lat, SquareRegion(), L, m)
    lo, hi = extremal_heights(dom)
    band_hi = lo.copy()
    band_hi.h = {f: min(hi[f], lo[f] + H) for f in lo.h}
    floor = matching_of(lo, dom)
    ceiling = matching_of(band_hi, dom)
    return dom, floor, ceiling


_WORKER_DOMAINS = {}


def _scaling_domain(lattice_kind, L, H):
    key = (lattice_kind, L, H)
    out = _WORKER_DOMAINS.get(key)
    if out is None:
        if H is not None:
            out = _flat_band_domain(lattice_kind, L, H)
        else:
            from .lattice import SquareRegion, build_lattice, carve_domain
            from .matching import periodic_matching
            lat = build_lattice(lattice_kind)
            dom = carve_domain(lat, SquareRegion(), L,
                               periodic_matching(lat))
            out = (dom, None, None)
        _WORKER_DOMAINS[key] = out
    return out


def _coalescence_task(task):
    dyn_kind, lattice_kind, L, H, seed, max_events = task
    dom, floor, ceiling = _scaling_domain(lattice_kind, L, H)
    t = coalescence_time(dom, dyn_kind, floor=floor, ceiling=ceiling,
                         seed=seed, max_events=max_events)
    return L, seed, t


def mixing_scaling(dyn_kind, lattice_kind, Ls, H=None, replicas=50,
                   seed=0, max_events=10_000_000, jobs=1):
    """Median coalescence time per size with a log-log slope fit.

    With H set, the dynamics is constrained to a band of width H above
    the minimal state of a flat carved domain.  Replicas run in parallel
    with `jobs` workers; the reduction sorts by seed so the result does
    not depend on scheduling.
    """
    tasks = [(dyn_kind, lattice_kind, L, H,
              seed * 1_000_003 + 7919 * L + r, max_events)
             for L in Ls for r in range(replicas)]
    if jobs > 1:
        import multiprocessing as mp

        with mp.get_context("fork").Pool(jobs) as pool:
            results = pool.map(_coalescence_task, tasks)
    else:
        results = [_coalescence_task(t) for t in tasks]
    results.sort(key=lambda x: (x[0], x[1]))
    rows = []
    times_per_L = {}
    for L in Ls:
        ts = sorted(t for Lr, _s, t in results if Lr == L)
        med = float(np.median(ts))
        # nonparametric CI on the median from binomial order statistics
        k = len(ts)
        dlt = int(math.ceil(0.98 * math.sqrt(k)))
        lo_i = max(0, k // 2 - dlt)
        hi_i = min(k - 1, k // 2 + dlt)
        rows.append((L, med, ts[lo_i], ts[hi_i]))
        times_per_L[L] = ts
    xs = np.log([r[0] for r in rows])
    ys = np.log([r[1] for r in rows])
    slope, intercept = np.polyfit(xs, ys, 1)
    # bootstrap CI over replica resampling
    rng = np.random.default_rng(12345)
    slopes = []
    for _ in range(400):
        yb = []
        for L in Ls:
            ts = times_per_L[L]
            yb.append(np.median(rng.choice(ts, size=len(ts))))
        slopes.append(np.polyfit(xs, np.log(yb), 1)[0])
    ci = (float(np.percentile(slopes, 2.5)),
          float(np.percentile(slopes, 97.5)))
    return {"rows": rows, "slope": float(slope), "slope_ci": ci}


def write_scaling_csv(rows, fileobj):
    fileobj.write("L,median_coalescence,ci_lo,ci_hi\n")
    for L, med, lo, hi in rows:
        fileobj.write(f"{L},{med},{lo},{hi}\n")


# ---------------------------------------------------------------------------
# pyramid erosion


def pyramid_erosion(kind, L, horizon, seed=0, samples=64):
    """Asynchronous fast dynamics started from the pyramid state;
    records the eroded volume over time and fits a linear rate."""
    from .dynamics import async_fast_step

    p, dom = pyramid(kind, L)
    B0 = beads_of(p, dom)
    st = ChainState(B0.copy(), rng=seed)
    beads = st.mobile_beads()
    nb = len(beads)
    trace = VolumeTrace(meta={"kind": kind, "L": L, "seed": seed})
    trace.append(0.0, 0)
    checkpoints = [horizon * (k + 1) / samples for k in range(samples)]
    ci = 0
    rng = st.rng
    while ci < samples:
        dt = rng.exponential(1.0 / nb)
        if st.clock + dt > checkpoints[ci]:
            st.clock = checkpoints[ci]
            trace.append(st.clock, _bead_volume(st.beads, B0))
            ci += 1
            continue
        st.clock += dt
        async_fast_step(st, beads[rng.integers(nb)])
    ts = np.array(trace.times)
    vs = np.array(trace.volumes)
    rate = float(np.polyfit(ts, vs, 1)[0])
    return trace, rate


# ---------------------------------------------------------------------------
# fluctuation moments


@dataclass
class MomentReport:
    orders: list
    moments: list
    ses: list
    gaussian: list
    distance: float
    variance: float
    n: int

    def write_csv(self, fileobj):
        fileobj.write("order,moment,se,gaussian_ref\n")
        for o, m, s, g in zip(self.orders, self.moments, self.ses,
                              self.gaussian):
            fileobj.write(f"{o},{m},{s},{g}\n")


def gaussian_moment(k):
    """k-th moment of a standard Gaussian (0 for odd k)."""
    if k % 2:
        return 0.0
    m = 1.0
    for j in range(1, k, 2):
        m *= j
    return m


def _dual_path_edges(domain, f, g):
    """Interior edges crossed by a face path f -> g, with signs."""
    from collections import deque

    lat = domain.lattice
    fset = domain.face_index
    prev = {f: None}
    q = deque([f])
    while g not in prev:
        if not q:
            raise DomainMismatch("faces not connected inside the domain")
        cur = q.popleft()
        for e, s in lat.face_edges(cur):
            for g2 in lat.edge_faces(e):
                if g2 not in prev and g2 in fset:
                    prev[g2] = (cur, e, s)
                    q.append(g2)
    out = []
    cur = g
    while prev[cur] is not None:
        _c, e, s = prev[cur]
        out.append((e, s))
        cur = _c
    return out


class _PathSampler:
    """Exact sampler of the occupation indicators of the edges crossed
    by a dual path, via the determinantal edge kernel restricted to the
    path (conditioned sequentially)."""

    def __init__(self, domain, f, g):
        import scipy.sparse as sp
        import scipy.sparse.linalg as spla

        from .exact import edge_sign
        from .lattice import canon_edge, color

        lat = domain.lattice
        active = sorted(domain.active_vertices())
        whites = [v for v in active if color(v) == "w"]
        blacks = [v for v in active if color(v) == "b"]
        wi = {v: k for k, v in enumerate(whites)}
        bi = {v: k for k, v in enumerate(blacks)}
        rows, cols, vals = [], [], []
        for w in whites:
            for u in lat.neighbors(w):
                if u in bi:
                    e = canon_edge(w, u)
                    if e in domain.interior_edges:
                        rows.append(wi[w])
                        cols.append(bi[u])
                        vals.append(float(edge_sign(lat, e)))
        K = sp.csc_matrix((vals, (rows, cols)),
                          shape=(len(whites), len(blacks)))
        lu = spla.splu(K)

        crossing = _dual_path_edges(domain, f, g)
        # frozen crossings match the reference in every state, so only
        # interior edges contribute to the height difference
        self.edges = []
        self.signs = []
        m0 = domain.m
        for e, s in crossing:
            if e not in domain.interior_edges:
                continue
            u, v = e
            w, b = (u, v) if color(u) == "w" else (v, u)
            self.edges.append((w, b))
            self.signs.append(s)
        d = len(self.edges)
        # edge kernel J[a][c] = K(w_a, b_a) Kinv(b_a, w_c); the columns
        # Kinv[:, w] solve K x = e_w and are indexed by black vertices
        cols_needed = sorted({wi[w] for w, _b in self.edges})
        kinv_cols = {}
        for c in cols_needed:
            rhs = np.zeros(len(whites))
            rhs[c] = 1.0
            kinv_cols[c] = lu.solve(rhs)
        J = np.zeros((d, d))
        for a, (w_a, b_a) in enumerate(self.edges):
            e = canon_edge(w_a, b_a)
            kwb = edge_sign(lat, e)
            for c, (w_c, _b_c) in enumerate(self.edges):
                J[a, c] = kwb * kinv_cols[wi[w_c]][bi[b_a]]
        self.J = J
        self.ref = np.array(
            [1.0 if m0.is_occupied(canon_edge(w, b)) else 0.0
             for w, b in self.edges])
        self.sgn = np.array(self.signs, dtype=float)

    def sample(self, rng):
        """Height difference h(g) - h(f) for one exact sample."""
        d = len(self.edges)
        A = self.J.copy()
        occ = np.zeros(d)
        for k in range(d):
            pk = min(1.0, max(0.0, A[k, k]))
            take = rng.random() < pk
            occ[k] = 1.0 if take else 0.0
            piv = A[k, k] - (0.0 if take else 1.0)
            if abs(piv) < 1e-12:
                piv = math.copysign(1e-12, piv if piv != 0 else 1.0)
            A[k + 1:, k + 1:] -= np.outer(A[k + 1:, k], A[k, k + 1:]) / piv
        return float(self.sgn @ (occ - self.ref))


def fluctuation_moments(kind, weights, L, f, g, n, source="exact",
                        seed=0, kmax=3, max_se=None):
    """Centered moments of h(f) - h(g), normalized by the empirical
    standard deviation, with Gaussian reference values."""
    from .exact import build_torus_kasteleyn, characteristic_zeros, \
        slope_of_weights
    from .lattice import SquareRegion, build_lattice, carve_domain
    from .matching import flatten_to_plane

    lat = build_lattice(kind)
    tk = build_torus_kasteleyn(kind, weights)
    sd = characteristic_zeros(tk)
    slope = slope_of_weights(tk)
    sl = (Fraction(slope[0]).limit_denominator(64),
          Fraction(slope[1]).limit_denominator(64))
    m = flatten_to_plane(kind, sl, L)
    dom = carve_domain(lat, SquareRegion(), L, m)
    if f not in dom.interior_faces or g not in dom.interior_faces:
        raise DomainMismatch("faces outside the carved window")

    rng = np.random.default_rng(seed)
    if source == "exact":
        sampler = _PathSampler(dom, f, g)
        xs = np.array([sampler.sample(rng) for _ in range(n)])
    else:
        xs = _mcmc_samples(dom, f, g, n, rng)

    xc = xs - xs.mean()
    var = float(xc.var())
    if var == 0:
        raise InsufficientSamples("no fluctuation observed")
    sig = math.sqrt(var)
    orders, moments, ses, refs = [], [], [], []
    for k in range(2, 2 * kmax + 1):
        zk = (xc / sig) ** k
        mk = float(zk.mean())
        se = float(zk.std() / math.sqrt(n))
        orders.append(k)
        moments.append(mk)
        ses.append(se)
        refs.append(gaussian_moment(k))
        if max_se is not None and k % 2 == 0 and se > max_se:
            raise InsufficientSamples(
                f"standard error {se:.3g} at order {k} exceeds {max_se}")
    # distance in the phi coordinates of the spectral data
    fx, fy = _face_point(lat, f)
    gx, gy = _face_point(lat, g)
    dist = abs(sd.phi(fx, fy) - sd.phi(gx, gy))
    return MomentReport(orders, moments, ses, refs, float(dist), var, n)


def _face_point(lat, f):
    _i, (k1, k2) = lat.face_torus_coords(f)
    # paper-style coordinates: x along the second translation, y along
    # the first (matching the integrand convention of kinv_integral)
    return (k2, k1)


def _mcmc_samples(dom, f, g, n, rng):
    from .dynamics import sync_fast_step

    _lo, hi = extremal_heights(dom)
    st = ChainState(beads_of(matching_of(hi, dom), dom),
                    rng=np.random.default_rng(rng.integers(2 ** 63)))
    burn = 4 * max(1, dom.L)
    for k in range(burn):
        sync_fast_step(st, k % 2)
    out = []
    for s in range(n):
        for k in range(4):
            sync_fast_step(st, (s * 4 + k) % 2)
        h = st.height
        out.append(h[g] - h[f])
    return np.array(out, dtype=float)


# ---------------------------------------------------------------------------
# F_k sums


@lru_cache(maxsize=None)
def _lcm_to(n):
    out = 1
    for k in range(2, n + 1):
        out = math.lcm(out, k)
    return out


def fk_sums(k, Ls, budget=3 * 10 ** 7):
    """Exact values of the cyclic sums F_k(L) and open sums F~k(L).

    F_k multiplies k factors 1/(d_i + d_{i+1}) around a cycle of k
    summation variables d_i <= L; F~k drops the closing factor.  Values
    are exact rationals over the common denominator lcm(2..2L)^k.
    """
    if k < 1 or k > 6:
        raise ComputeBudgetExceeded(f"k = {k} outside supported range")
    rows = []
    for L in Ls:
        if L > 200:
            raise ComputeBudgetExceeded(f"L = {L} above 200")
        if k >= 5 and k * L ** 3 > budget:
            raise ComputeBudgetExceeded(
                f"trace of order {k} at L = {L} over budget")
        C = _lcm_to(2 * L)
        A = [[C // (a + b) for b in range(1, L + 1)]
             for a in range(1, L + 1)]
        F = {1: Fraction(sum(C // (2 * d) for d in range(1, L + 1)), C)}
        Ft = {1: Fraction(L)}
        # open sums via vector iterates
        v = [1] * L
        denom = 1
        for kk in range(2, k + 1):
            v = [sum(v[e] * A[e][d] for e in range(L)) for d in range(L)]
            denom *= C
            Ft[kk] = Fraction(sum(v), denom)
        # cyclic sums via traces of powers of A
        if k >= 2:
            F[2] = Fraction(sum(A[a][b] * A[b][a]
                                for a in range(L) for b in range(L)), C ** 2)
        if k >= 3 or k >= 5:
            A2 = [[sum(A[a][e] * A[e][b] for e in range(L))
                   for b in range(L)] for a in range(L)]
        if k >= 3:
            F[3] = Fraction(sum(A2[a][b] * A[b][a]
                                for a in range(L) for b in range(L)), C ** 3)
        if k >= 4:
            F[4] = Fraction(sum(A2[a][b] * A2[b][a]
                                for a in range(L) for b in range(L)), C ** 4)
        if k >= 5:
            A3 = [[sum(A2[a][e] * A[e][b] for e in range(L))
                   for b in range(L)] for a in range(L)]
            F[5] = Fraction(sum(A2[a][b] * A3[b][a]
                                for a in range(L) for b in range(L)), C ** 5)
        if k >= 6:
            F[6] = Fraction(sum(A3[a][b] * A3[b][a]
                                for a in range(L) for b in range(L)), C ** 6)
        rows.append({"L": L, "F": {j: F[j] for j in F if j <= k},
                     "Ft": {j: Ft[j] for j in Ft if j <= k}})
    return rows
