"""Exact oracles: enumeration, Kasteleyn counting and sampling on finite
domains, and the torus Kasteleyn machinery (characteristic polynomial,
inverse-matrix integrals, asymptotics, slope of weighted measures).

The finite-domain sign gauge is real (+-1 per edge, product around every
face -1 for 0 mod 4 sides, +1 for 2 mod 4); the torus matrix carries
magnetic weights: each edge reaching into the neighboring fundamental
domain picks up a factor (B_x z)^k1 (B_y w)^k2 per crossing.
"""

from __future__ import annotations

import cmath
import math

import numpy as np
from scipy import integrate

from .errors import (
    CapExceeded,
    DegenerateZero,
    NoMatching,
    NonSquareMatrix,
    NoTorusZero,
    NumericalError,
    SingularGrid,
)
from .lattice import build_lattice, canon_edge, color
from .matching import domain_state

ENUM_CAP = 10 ** 7


# ---------------------------------------------------------------------------
# finite-domain sign gauge


def edge_sign(lattice, e):
    """Kasteleyn sign of an edge (+-1), constant on translation orbits."""
    (ux, uy), (vx, vy) = e
    kind = lattice.kind.value
    if kind == "hexagon":
        return 1
    if kind == "square":
        return -1 if (ux == vx and ux % 2) else 1
    # square-hexagon: the two long diagonals of each cell carry the sign
    return -1 if abs(ux - vx) == 2 else 1


def validate_signs(lattice, faces):
    """Check the face-product rule of the gauge over the given faces."""
    for f in faces:
        prod = 1
        for e, _s in lattice.face_edges(f):
            prod *= edge_sign(lattice, e)
        k = lattice.face_sides(f)
        want = -1 if k % 4 == 0 else 1
        if prod != want:
            raise NumericalError(f"sign gauge violated at face {f}")


# ---------------------------------------------------------------------------
# enumeration


def enumerate_matchings(domain, cap=ENUM_CAP, states=False):
    """Count (and optionally list) the matchings of the domain.

    Depth-first over active white vertices with forced-vertex
    propagation: whenever a black vertex has a single remaining
    candidate, that edge is fixed first.
    """
    lat = domain.lattice
    act = domain.active_vertices()
    whites = [v for v in act if color(v) == "w"]
    blacks = [v for v in act if color(v) == "b"]
    if len(whites) != len(blacks):
        return (0, []) if states else 0
    bset = set(blacks)

    adj = {w: [u for u in lat.neighbors(w)
               if u in bset and canon_edge(w, u) in domain.interior_edges]
           for w in whites}
    radj = {b: [] for b in blacks}
    for w, bs in adj.items():
        for b in bs:
            radj[b].append(w)

    out = []
    count = 0
    used_b = set()
    used_w = set()
    acc = []

    def pick_white():
        # most-constrained white first keeps the tree small
        best, bn = None, None
        for w in whites:
            if w in used_w:
                continue
            n = sum(1 for b in adj[w] if b not in used_b)
            if n == 0:
                return w, 0
            if bn is None or n < bn:
                best, bn = w, n
                if n == 1:
                    break
        return best, bn

    def rec():
        nonlocal count
        if len(acc) == len(whites):
            count += 1
            if count > cap:
                raise CapExceeded(f"more than {cap} matchings")
            if states:
                out.append(domain_state(domain, list(acc)))
            return
        w, n = pick_white()
        if n == 0:
            return
        for b in adj[w]:
            if b in used_b:
                continue
            used_b.add(b)
            used_w.add(w)
            acc.append(canon_edge(w, b))
            rec()
            acc.pop()
            used_w.discard(w)
            used_b.discard(b)

    rec()
    return (count, out) if states else count


# ---------------------------------------------------------------------------
# Kasteleyn counting (exact integers)


def _kasteleyn_matrix(domain):
    lat = domain.lattice
    act = domain.active_vertices()
    whites = [v for v in act if color(v) == "w"]
    blacks = [v for v in act if color(v) == "b"]
    if len(whites) != len(blacks):
        raise NonSquareMatrix(
            f"{len(whites)} active whites vs {len(blacks)} blacks")
    bi = {b: k for k, b in enumerate(blacks)}
    n = len(whites)
    K = [[0] * n for _ in range(n)]
    for r, w in enumerate(whites):
        for u in lat.neighbors(w):
            e = canon_edge(w, u)
            if u in bi and e in domain.interior_edges:
                K[r][bi[u]] = edge_sign(lat, e)
    return K, whites, blacks


def _bareiss_det(M):
    """Fraction-free determinant of an integer matrix."""
    a = [row[:] for row in M]
    n = len(a)
    sign = 1
    prev = 1
    for k in range(n - 1):
        if a[k][k] == 0:
            for r in range(k + 1, n):
                if a[r][k] != 0:
                    a[k], a[r] = a[r], a[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
        prev = a[k][k]
    return sign * a[n - 1][n - 1]


def kasteleyn_count(domain):
    """Number of matchings of the domain, via the signed determinant."""
    try:
        K, _w, _b = _kasteleyn_matrix(domain)
    except NonSquareMatrix:
        raise
    if not K:
        return 1
    return abs(_bareiss_det(K))


# ---------------------------------------------------------------------------
# exact sampling


def exact_sample(domain, rng):
    """One exactly uniform matching of the domain.

    Sequentially fixes the partner of each active white vertex with the
    conditional probabilities K(w,b) K^-1(b,w), updating the inverse by
    a rank-1 step after each choice.
    """
    rng = np.random.default_rng(rng) if not isinstance(
        rng, np.random.Generator) else rng
    K, whites, blacks = _kasteleyn_matrix(domain)
    n = len(whites)
    if n == 0:
        return domain_state(domain, [])
    Ka = np.array(K, dtype=float)
    try:
        Kinv = np.linalg.inv(Ka)
    except np.linalg.LinAlgError:
        raise NoMatching("domain admits no matching")
    alive_b = np.ones(n, dtype=bool)
    edges = []
    for r in range(n):
        cand = [c for c in range(n) if alive_b[c] and K[r][c] != 0]
        probs = np.array([K[r][c] * Kinv[c, r] for c in cand])
        probs = np.clip(probs, 0.0, None)
        tot = probs.sum()
        if tot <= 0:
            raise NoMatching("conditional probabilities vanished")
        c = cand[rng.choice(len(cand), p=probs / tot)]
        edges.append(canon_edge(whites[r], blacks[c]))
        alive_b[c] = False
        piv = Kinv[c, r]
        if abs(piv) < 1e-12:
            raise NumericalError("pivot collapsed during sampling")
        # condition the inverse on the chosen edge
        col = Kinv[:, r].copy()
        row = Kinv[c, :].copy()
        Kinv -= np.outer(col, row) / piv
        Kinv[c, :] = 0.0
        Kinv[:, r] = 0.0
    return domain_state(domain, edges)


def first_edge_probability(domain, w, b):
    """P(w matched to b) as an exact rational, by ratio of counts."""
    from fractions import Fraction

    total = kasteleyn_count(domain)
    if total == 0:
        raise NoMatching("domain admits no matching")
    e = canon_edge(w, b)
    forced = _count_with_edge(domain, e)
    return Fraction(forced, total)


def _count_with_edge(domain, e):
    K, whites, blacks = _kasteleyn_matrix(domain)
    wi = {v: k for k, v in enumerate(whites)}
    bi = {v: k for k, v in enumerate(blacks)}
    u, v = e
    w, b = (u, v) if color(u) == "w" else (v, u)
    if w not in wi or b not in bi:
        return 0  # a frozen endpoint keeps its boundary edge
    r, c = wi[w], bi[b]
    if K[r][c] == 0:
        return 0
    keep_r = [i for i in range(len(K)) if i != r]
    keep_c = [j for j in range(len(K)) if j != c]
    minor = [[K[i][j] for j in keep_c] for i in keep_r]
    return abs(_bareiss_det(minor)) if minor else 1


# ---------------------------------------------------------------------------
# Laurent polynomials in (z, w): dict (a, b) -> coefficient


def lp_add(p, q):
    out = dict(p)
    for k, v in q.items():
        out[k] = out.get(k, 0.0) + v
    return {k: v for k, v in out.items() if v != 0}


def lp_mul(p, q):
    out = {}
    for (a1, b1), v1 in p.items():
        for (a2, b2), v2 in q.items():
            k = (a1 + a2, b1 + b2)
            out[k] = out.get(k, 0.0) + v1 * v2
    return {k: v for k, v in out.items() if v != 0}


def lp_neg(p):
    return {k: -v for k, v in p.items()}


def lp_eval(p, z, w):
    return sum(v * z ** a * w ** b for (a, b), v in p.items())


def lp_det(M):
    """Determinant of a small matrix of Laurent polynomials (Laplace
    expansion along the first row)."""
    n = len(M)
    if n == 1:
        return dict(M[0][0])
    out = {}
    for c in range(n):
        if not M[0][c]:
            continue
        minor = [[row[j] for j in range(n) if j != c] for row in M[1:]]
        term = lp_mul(M[0][c], lp_det(minor))
        out = lp_add(out, term if c % 2 == 0 else lp_neg(term))
    return out


def lp_eval_grid(p, Z, W):
    """Evaluate on numpy arrays of z and w values (broadcasting)."""
    out = np.zeros(np.broadcast(Z, W).shape, dtype=complex)
    for (a, b), v in p.items():
        out += v * Z ** a * W ** b
    return out


class TorusKasteleyn:
    """Magnetically weighted Kasteleyn matrix of the torus fundamental
    domain, its determinant P and adjugate Q (Laurent polynomials)."""

    def __init__(self, lattice, weights):
        self.lattice = lattice
        self.weights = (float(weights[0]), float(weights[1]))
        Bx, By = self.weights
        nw = len(lattice.torus_whites)
        self.K = [[{} for _ in range(nw)] for _ in range(nw)]
        for wi, bi, (k1, k2), s in lattice.torus_edges:
            term = {(k1, k2): s * Bx ** k1 * By ** k2}
            self.K[wi][bi] = lp_add(self.K[wi][bi], term)
        if nw == 1:
            self.P = dict(self.K[0][0])
            self.Q = [[{(0, 0): 1.0}]]
        else:
            self.P = lp_det(self.K)
            # adjugate, indexed [black][white], so that Q K = P Id
            self.Q = [[None] * nw for _ in range(nw)]
            for r in range(nw):
                for c in range(nw):
                    minor = [[self.K[i][j] for j in range(nw) if j != c]
                             for i in range(nw) if i != r]
                    cof = lp_det(minor)
                    self.Q[c][r] = cof if (r + c) % 2 == 0 else lp_neg(cof)

    def edge_weight(self, wi, bi, off):
        """Scalar weight of one specific edge (no z, w factors)."""
        Bx, By = self.weights
        for wj, bj, o, s in self.lattice.torus_edges:
            if (wj, bj, o) == (wi, bi, off):
                return s * Bx ** o[0] * By ** o[1]
        return 0.0

    def check_adjugate(self):
        n = len(self.K)
        for i in range(n):
            for j in range(n):
                acc = {}
                for k in range(n):
                    acc = lp_add(acc, lp_mul(self.Q[i][k], self.K[k][j]))
                want = self.P if i == j else {}
                diff = lp_add(acc, lp_neg(want))
                if any(abs(v) > 1e-9 for v in diff.values()):
                    raise NumericalError("Q K != P Id")


def build_torus_kasteleyn(kind, weights=(1.0, 1.0)):
    lat = build_lattice(kind)
    if weights[0] <= 0 or weights[1] <= 0:
        raise ValueError("magnetic weights must be positive")
    tk = TorusKasteleyn(lat, weights)
    tk.check_adjugate()
    return tk


# ---------------------------------------------------------------------------
# zeros of P on the unit torus


class SpectralData:
    def __init__(self, tk, z0, w0):
        self.tk = tk
        self.z0 = z0
        self.w0 = w0
        self.alpha = lp_eval(_lp_dz(tk.P), z0, w0)
        self.beta = lp_eval(_lp_dw(tk.P), z0, w0)
        Q0 = np.array([[lp_eval(q, z0, w0) for q in row] for row in tk.Q])
        sv = np.linalg.svd(Q0, compute_uv=False)
        if len(sv) > 1 and sv[1] > 1e-8 * sv[0]:
            raise DegenerateZero(
                f"adjugate at the zero has rank > 1 (sv ratio "
                f"{sv[1] / sv[0]:.2e})")
        # rank-1 factors Q0[b][w] = U(b) V(w)
        c = int(np.argmax(np.abs(Q0).sum(axis=0)))
        self.U = Q0[:, c]
        r = int(np.argmax(np.abs(self.U)))
        self.V = Q0[r, :] / Q0[r, c]
        if abs((self.alpha * z0 * np.conj(self.beta * w0)).imag) < 1e-10:
            raise DegenerateZero("phi is not invertible at the zero")

    def phi(self, x, y):
        return x * self.alpha * self.z0 - y * self.beta * self.w0


def _lp_dz(p):
    return {(a - 1, b): a * v for (a, b), v in p.items() if a != 0}


def _lp_dw(p):
    return {(a, b - 1): b * v for (a, b), v in p.items() if b != 0}


def characteristic_zeros(tk, grid_n=256):
    """The torus zero of P with positive imaginary part of w (the other
    zero is its conjugate)."""
    th = 2 * np.pi * (np.arange(grid_n) + 0.5) / grid_n
    Z = np.exp(1j * th)[:, None]
    W = np.exp(1j * th)[None, :]
    A = np.abs(lp_eval_grid(tk.P, Z, W))
    scale = np.median(A)
    if scale == 0:
        raise NumericalError("characteristic polynomial vanished")

    # local minima of |P| as Newton starting points
    cand = []
    for i in range(grid_n):
        for j in range(grid_n):
            v = A[i, j]
            if v > 0.2 * scale:
                continue
            neigh = [A[(i + di) % grid_n, (j + dj) % grid_n]
                     for di in (-1, 0, 1) for dj in (-1, 0, 1)
                     if (di, dj) != (0, 0)]
            if v <= min(neigh):
                cand.append((th[i], th[j]))
    zeros = []
    for t0, p0 in cand:
        zt = _newton_zero(tk.P, t0, p0)
        if zt is None:
            continue
        z0, w0 = zt
        if not any(abs(z0 - z) < 1e-6 and abs(w0 - w) < 1e-6
                   for z, w in zeros):
            zeros.append((z0, w0))
    if not zeros:
        if A.min() < 1e-3 * scale:
            # |P| dips to zero but Newton cannot pin a simple root: the
            # conjugate pair has merged into a real double zero
            raise DegenerateZero(
                "zero of P on the unit torus is not simple")
        raise NoTorusZero("P has no zero on the unit torus")
    pos = [(z, w) for z, w in zeros
           if w.imag > 1e-8 or (abs(w.imag) <= 1e-8 and z.imag > 1e-8)]
    if not pos:
        # all zeros are (numerically) real points: merged conjugate pair
        raise DegenerateZero("zero of P on the unit torus is real (double)")
    if len(pos) > 1 or len(zeros) > 2:
        raise DegenerateZero(f"found {len(zeros)} zeros on the torus")
    return SpectralData(tk, *pos[0])


def _newton_zero(P, t0, p0, iters=60):
    Pz, Pw = _lp_dz(P), _lp_dw(P)
    t, p = t0, p0
    for _ in range(iters):
        z, w = cmath.exp(1j * t), cmath.exp(1j * p)
        f = lp_eval(P, z, w)
        ft = lp_eval(Pz, z, w) * 1j * z
        fp = lp_eval(Pw, z, w) * 1j * w
        # solve [Re; Im] 2x2 system for (dt, dp)
        J = np.array([[ft.real, fp.real], [ft.imag, fp.imag]])
        try:
            dt, dp = np.linalg.solve(J, [-f.real, -f.imag])
        except np.linalg.LinAlgError:
            return None
        step = math.hypot(dt, dp)
        if step > 1.0:
            dt, dp = dt / step, dp / step
        t, p = t + dt, p + dp
        if abs(f) < 1e-13 and step < 1e-12:
            return cmath.exp(1j * t), cmath.exp(1j * p)
    z, w = cmath.exp(1j * t), cmath.exp(1j * p)
    return (z, w) if abs(lp_eval(P, z, w)) < 1e-10 else None


# ---------------------------------------------------------------------------
# K^-1 entries: inner contour integral in w by residues, outer in z by
# adaptive quadrature with the critical phases flagged


def _laurent_in_w(p, z):
    """Coefficients of p(z, .) as {b: coeff}."""
    out = {}
    for (a, b), v in p.items():
        out[b] = out.get(b, 0.0) + v * z ** a
    return out


def _poly_from_laurent(lw):
    """(coeff array low->high, min exponent) for a Laurent poly in w."""
    bmin = min(lw)
    bmax = max(lw)
    arr = np.zeros(bmax - bmin + 1, dtype=complex)
    for b, v in lw.items():
        arr[b - bmin] = v
    return arr, bmin


def _residue_sum(num_arr, nmin, den_arr, dmin):
    """(1/2 pi i) contour integral over |w|=1 of N(w)/D(w) dw for
    Laurent N = w^nmin num(w), D = w^dmin den(w)."""
    # strip denominator powers of w into the numerator offset
    off = nmin - dmin
    den = np.trim_zeros(den_arr, "f")
    off -= len(den_arr) - len(den)  # low-order zeros of D shift the pole
    den = np.trim_zeros(den, "b")
    if len(den) == 0:
        raise SingularGrid("denominator vanished identically")
    roots = np.roots(den[::-1])
    total = 0.0 + 0.0j
    lead = den[-1]

    def numval(w):
        return np.polyval(num_arr[::-1], w)

    for k, r in enumerate(roots):
        if abs(r) >= 1.0:
            continue
        dprime = np.prod([r - r2 for j, r2 in enumerate(roots) if j != k])
        total += r ** off * numval(r) / (lead * dprime)
    if off < 0:
        # pole at w = 0 of order -off: Taylor coefficient of order -off-1
        m = -off
        inv = np.zeros(m, dtype=complex)
        c0 = den[0]
        for i in range(m):
            s = 1.0 + 0.0j if i == 0 else 0.0 + 0.0j
            for j in range(1, min(i, len(den) - 1) + 1):
                s -= den[j] * inv[i - j]
            inv[i] = s / c0
        coef = 0.0 + 0.0j
        for i in range(m):
            if i < len(num_arr):
                coef += num_arr[i] * inv[m - 1 - i]
        total += coef
    return total


def _inner_integral(tk, b, w, x, theta):
    """(1/2 pi i) contour integral in w of Q^{b,w}/P w^{x-1} dw at
    z = exp(i theta)."""
    z = cmath.exp(1j * theta)
    num, nmin = _poly_from_laurent(_laurent_in_w(tk.Q[b][w], z))
    den, dmin = _poly_from_laurent(_laurent_in_w(tk.P, z))
    return _residue_sum(num, nmin + x - 1, den, dmin)


def kinv_integral(tk, b, w, x, y, grid_n=256):
    """Entry K^-1(b, w + (x, y)) of the inverse Kasteleyn operator.

    The w contour integral is evaluated exactly by residues for each
    phase of z; the remaining z integral runs over a uniform phase grid
    refined adaptively, with the critical phases (where P has its torus
    zeros) treated as interior singular points.  Returns (value, error
    estimate).
    """
    if grid_n < 64:
        raise ValueError("grid_n must be at least 64")
    try:
        sd = characteristic_zeros(tk)
        crit = sorted({(cmath.phase(sd.z0)) % (2 * np.pi),
                       (-cmath.phase(sd.z0)) % (2 * np.pi)})
    except (NoTorusZero, DegenerateZero):
        crit = []

    def f(theta, part):
        val = _inner_integral(tk, b, w, x, theta) * cmath.exp(1j * y * theta)
        return val.real if part == 0 else val.imag

    pts = [p for p in crit if 1e-9 < p < 2 * np.pi - 1e-9]
    lim = max(80, grid_n // 2)
    vals, errs = [], []
    for part in (0, 1):
        v, e = integrate.quad(f, 0.0, 2 * np.pi, args=(part,),
                              points=pts or None, limit=lim,
                              epsabs=1e-11, epsrel=1e-11)
        vals.append(v / (2 * np.pi))
        errs.append(e / (2 * np.pi))
    return complex(vals[0], vals[1]), errs[0] + errs[1]


def asymptotic_kinv(sd, b, w, x, y):
    """Leading asymptotic term of K^-1(b, w + (x, y))."""
    if (x, y) == (0, 0):
        raise ValueError("asymptotics need (x, y) != (0, 0)")
    val = (sd.w0 ** x * sd.z0 ** y * sd.U[b] * sd.V[w]
           / (math.pi * sd.phi(x, y)))
    return -val.imag


# ---------------------------------------------------------------------------
# edge probabilities and the slope map


def _vertex_fd(lattice, v):
    col, i, k = lattice.torus_coords(v)
    return col, i, k


def edge_probabilities(tk, edges, grid_n=256):
    """Probability that all listed edges are occupied under the weighted
    torus measure; edges are (u, v) vertex pairs, at most 12 of them."""
    if len(edges) > 12:
        raise ValueError("at most 12 edges")
    lat = tk.lattice
    ws, bs, kw = [], [], []
    weight = 1.0
    for e in edges:
        u, v = e
        wv, bv = (u, v) if color(u) == "w" else (v, u)
        _c, wi, cw = _vertex_fd(lat, wv)
        _c, bi, cb = _vertex_fd(lat, bv)
        off = (cb[0] - cw[0], cb[1] - cw[1])
        kwgt = tk.edge_weight(wi, bi, off)
        if kwgt == 0.0:
            return 0.0
        weight *= kwgt
        ws.append((wi, cw))
        bs.append((bi, cb))
    n = len(edges)
    Minv = np.zeros((n, n), dtype=complex)
    err = 0.0
    for a in range(n):
        bi, cb = bs[a]
        for c in range(n):
            wi, cw = ws[c]
            # K^-1(b, w + j) carries integrand powers w^(-j2) z^(-j1)
            x, y = cb[1] - cw[1], cb[0] - cw[0]
            val, e = kinv_integral(tk, bi, wi, x, y, grid_n=grid_n)
            Minv[a, c] = val
            err += abs(e)
    det = np.linalg.det(Minv)
    p = weight * det
    if abs(p.imag) > 1e-6 + 10 * err:
        raise NumericalError(f"edge probability not real: {p}")
    return float(p.real)


def slope_of_weights(tk, grid_n=256):
    """Expected height change per torus translation under the weighted
    measure, from the single-edge occupation probabilities."""
    from .lattice import slope_coeffs, reference_fd_matching, \
        fd_matching_chooses

    lat = tk.lattice
    c1, c2 = slope_coeffs(lat)
    ref = reference_fd_matching(lat)
    probs = {}
    for c in (c1, c2):
        for key in c:
            if key in probs:
                continue
            wi, bi, off = key
            kwgt = tk.edge_weight(wi, bi, off)
            if kwgt == 0.0:
                probs[key] = 0.0
                continue
            val, _e = kinv_integral(tk, bi, wi, off[1], off[0],
                                    grid_n=grid_n)
            probs[key] = (kwgt * val).real
    out = []
    for c in (c1, c2):
        s = 0.0
        for key, wgt in c.items():
            s += wgt * (probs[key] - float(
                fd_matching_chooses(lat, ref, key)))
        out.append(s)
    return tuple(out)


def weights_for_slope(kind, slope, tol=1e-6, grid_n=256):
    """Magnetic weights whose measure has the requested slope (2-D
    secant-type inversion in log weights)."""
    from scipy.optimize import root

    target = np.array([float(slope[0]), float(slope[1])])

    def fun(u):
        tk = build_torus_kasteleyn(kind, (math.exp(u[0]), math.exp(u[1])))
        try:
            s = slope_of_weights(tk, grid_n=grid_n)
        except (NoTorusZero, DegenerateZero):
            return np.array([10.0, 10.0])
        return np.array(s) - target

    sol = root(fun, x0=np.array([0.1, -0.1]), method="hybr",
               options={"xtol": tol})
    if not sol.success and np.linalg.norm(fun(sol.x)) > 10 * tol:
        raise NumericalError(f"slope inversion failed: {sol.message}")
    return (math.exp(sol.x[0]), math.exp(sol.x[1]))
