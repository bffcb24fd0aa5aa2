"""Matchings, height functions, capacities, rotations, free paths, and
the pyramid / almost-planar boundary constructions."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction

from .errors import (
    InvalidHeight,
    NoMatching,
    NotAMatching,
    NotRotatable,
    OutsideDomain,
    SlopeOutsidePolygon,
)
from .lattice import (
    FiniteDomain,
    build_lattice,
    canon_edge,
    color,
    enumerate_fd_matchings,
    fd_matching_chooses,
    newton_polygon,
    periodic_partner,
    periodic_slope,
    point_in_polygon,
    reference_fd_matching,
)


class Matching:
    """A perfect matching given by explicit occupied edges on a window,
    with an optional rule covering the unbounded exterior."""

    __slots__ = ("lattice", "edges", "_partner", "partner_fn")

    def __init__(self, lattice, edges, partner_fn=None):
        self.lattice = lattice
        self.edges = frozenset(canon_edge(*e) for e in edges)
        part = {}
        for u, v in self.edges:
            if u in part or v in part:
                raise NotAMatching(f"vertex covered twice near {u}")
            part[u] = v
            part[v] = u
        self._partner = part
        self.partner_fn = partner_fn

    def partner(self, v):
        p = self._partner.get(v)
        if p is None and self.partner_fn is not None:
            p = self.partner_fn(v)
        return p

    def covering_edge(self, v):
        p = self.partner(v)
        return None if p is None else canon_edge(v, p)

    def is_occupied(self, e):
        u, v = e
        return self.partner(u) == v

    def with_edges(self, remove, add):
        """Copy with some occupied edges replaced."""
        edges = (self.edges - frozenset(remove)) | frozenset(
            canon_edge(*e) for e in add)
        return Matching(self.lattice, edges, self.partner_fn)

    def __eq__(self, other):
        return (isinstance(other, Matching)
                and self.lattice is other.lattice
                and self.edges == other.edges)

    def __hash__(self):
        return hash(self.edges)


def periodic_matching(lattice, box=None, fdm=None):
    """The periodic matching of the whole plane given by a fundamental
    domain matching (canonical reference if fdm is None), with explicit
    edges materialized over the given vertex box."""
    if fdm is None:
        fdm = reference_fd_matching(lattice)

    def rule(v):
        return periodic_partner(lattice, fdm, v)

    edges = []
    if box is not None:
        xmin, xmax, ymin, ymax = box
        for x in range(xmin, xmax + 1):
            for y in range(ymin, ymax + 1):
                if (x + y) % 2 == 0:
                    edges.append(canon_edge((x, y), rule((x, y))))
    return Matching(lattice, edges, rule)


# ---------------------------------------------------------------------------
# heights


class HeightField:
    """Integer height function on the faces of a domain (interior plus
    the exterior ring), pinned to 0 at the reference face."""

    def __init__(self, domain, h):
        self.domain = domain
        self.h = dict(h)

    def __getitem__(self, f):
        return self.h[f]

    def get(self, f, default=None):
        return self.h.get(f, default)

    def items(self):
        return self.h.items()

    def copy(self):
        return HeightField(self.domain, self.h)

    def write_csv(self, fileobj):
        fileobj.write("face_x,face_y,face_i,h\n")
        for f in self.domain.faces:
            tx, ty, i = self.domain.lattice.face_id(f)
            fileobj.write(f"{tx},{ty},{i},{self.h[f]}\n")


def height_of(M, domain, M0=None):
    """Height of M relative to M0 (the boundary matching by default),
    pinned to 0 at the domain's exterior reference face."""
    if M0 is None:
        M0 = domain.m
    lat = domain.lattice
    for v in domain.interior_vertices:
        if M.partner(v) is None:
            raise NotAMatching(f"vertex {v} not covered")

    h = {domain.f0: 0}
    q = deque([domain.f0])
    fset = domain.face_index
    while q:
        g = q.popleft()
        for e, s in lat.face_edges(g):
            delta = s * (int(M.is_occupied(e)) - int(M0.is_occupied(e)))
            for g2 in lat.edge_faces(e):
                if g2 == g or g2 not in fset:
                    continue
                if g2 in h:
                    if h[g2] != h[g] + delta:
                        raise NotAMatching(
                            f"flux not closed between {g} and {g2}")
                else:
                    h[g2] = h[g] + delta
                    q.append(g2)
    return HeightField(domain, h)


# ---------------------------------------------------------------------------
# capacities


def capacity_d(domain, f, e, s_out, occupied_m=None):
    """Capacity for crossing edge e out of face f (orientation s_out)."""
    if e not in domain.interior_edges:
        return 0
    occ = (domain.m.is_occupied(e) if occupied_m is None else occupied_m)
    if s_out > 0:
        return 0 if occ else 1
    return 1 if occ else 0


def capacity_D(domain, sources, reverse=False):
    """Min-capacity distances from a source set over the domain's faces.

    sources is a face or a dict face -> initial value.  With reverse=True
    computes distances *to* the sources (capacities traversed backward).
    """
    lat = domain.lattice
    if not isinstance(sources, dict):
        sources = {sources: 0}
    dist = dict(sources)
    q = deque(sources)
    INF = None
    while q:
        g = q.popleft()
        dg = dist[g]
        for e, s in lat.face_edges(g):
            for g2 in lat.edge_faces(e):
                if g2 == g or g2 not in domain.face_index:
                    continue
                if reverse:
                    # cost of the step g2 -> g
                    c = capacity_d(domain, g2, e, -s)
                else:
                    c = capacity_d(domain, g, e, s)
                nd = dg + c
                old = dist.get(g2, INF)
                if old is None or nd < old:
                    dist[g2] = nd
                    if c == 0:
                        q.appendleft(g2)
                    else:
                        q.append(g2)
    return dist


def extremal_heights(domain):
    """(h_min, h_max): the pointwise extremal heights of the domain."""
    hmax = capacity_D(domain, domain.f0)
    dmin = capacity_D(domain, domain.f0, reverse=True)
    hmin = {f: -d for f, d in dmin.items()}
    lo = HeightField(domain, hmin)
    hi = HeightField(domain, hmax)
    # existence check: the maximal height must be realizable
    try:
        matching_of(hi, domain)
    except InvalidHeight as exc:
        raise NoMatching("domain admits no matching") from exc
    return lo, hi


# ---------------------------------------------------------------------------
# height -> matching


def matching_of(h, domain):
    """The unique matching of the domain whose height (relative to the
    boundary matching) is h."""
    lat = domain.lattice
    get = h.get if isinstance(h, HeightField) else h.get

    for f in domain.ring_faces:
        if get(f, 0) != 0:
            raise InvalidHeight("height nonzero on exterior ring",
                                pair=(domain.f0, f))

    marked = set()
    for e in domain.interior_edges:
        fa, fb = lat.edge_faces(e)
        # orient so the crossing fa -> fb is positive
        s = dict(lat.face_edges(fa))[e]
        if s < 0:
            fa, fb = fb, fa
        ha, hb = get(fa), get(fb)
        if ha is None or hb is None:
            raise InvalidHeight(f"height missing at a face of edge {e}",
                                pair=(fa, fb))
        occ = domain.m.is_occupied(e)
        d_ab = 0 if occ else 1
        d_ba = 1 if occ else 0
        if hb - ha > d_ab or ha - hb > d_ba:
            raise InvalidHeight(
                f"height jump {hb - ha} across {e} exceeds capacity",
                pair=(fa, fb))
        if hb - ha == d_ab:
            marked.add(e)

    edges = set(e for e in domain.m.edges
                if e not in domain.interior_edges)
    edges |= marked
    try:
        M = Matching(lat, edges, domain.m.partner_fn)
    except NotAMatching:
        raise InvalidHeight("marking produced overlapping edges",
                            pair=_violating_pair(h, domain))
    for v in domain.interior_vertices:
        if M.partner(v) is None:
            raise InvalidHeight(f"vertex {v} left uncovered",
                                pair=_violating_pair(h, domain))
    return M


def _violating_pair(h, domain):
    """A pair (f, f') with D(f,f') < h(f') - h(f), if any (slow path)."""
    get = h.get
    for f in domain.faces:
        dist = capacity_D(domain, f)
        for g in domain.faces:
            if dist[g] < get(g, 0) - get(f, 0):
                return (f, g)
    return None


# ---------------------------------------------------------------------------
# rotations


def rotatable(M, f, lattice=None):
    """Whether the vertices of face f are matched among themselves."""
    lat = lattice or M.lattice
    fe = lat.face_edges(f)
    occ = [e for e, _s in fe if M.is_occupied(e)]
    return len(occ) == len(fe) // 2


def rotation_direction(M, f, lattice=None):
    """Height change at f caused by rotating, or None if not rotatable."""
    lat = lattice or M.lattice
    fe = lat.face_edges(f)
    occ = [e for e, _s in fe if M.is_occupied(e)]
    if len(occ) != len(fe) // 2:
        return None
    e0, s0 = fe[0]
    return -s0 * (1 - 2 * int(M.is_occupied(e0)))


def apply_rotation(M, f, direction, domain=None):
    """Rotate the matching at face f; direction '+' raises h(f) by one."""
    lat = M.lattice
    if domain is not None and f not in domain.interior_faces:
        raise OutsideDomain(f"face {f} is not interior")
    fe = lat.face_edges(f)
    occ = [e for e, _s in fe if M.is_occupied(e)]
    if len(occ) != len(fe) // 2:
        raise NotRotatable(f"face {f} vertices not matched among themselves")
    dh = rotation_direction(M, f, lat)
    want = 1 if direction == "+" else -1
    if dh != want:
        raise NotRotatable(
            f"rotation at {f} changes height by {dh}, not {want}")
    comp = [e for e, _s in fe if not M.is_occupied(e)]
    return M.with_edges(occ, comp)


# ---------------------------------------------------------------------------
# free paths


@dataclass
class FreePath:
    faces: list
    sign: str
    terminal_rotatable: bool


def grow_free_path(M, f, sign, domain):
    """Grow a free path of the given sign from face f until reaching a
    face whose vertices are matched among themselves."""
    lat = domain.lattice
    s_req = 1 if sign == "+" else -1
    faces = [f]
    seen = {f}
    while True:
        g = faces[-1]
        if rotatable(M, g, lat):
            return FreePath(faces, sign, True)
        cands = []
        for e, s in lat.face_edges(g):
            if s != s_req or M.is_occupied(e):
                continue
            if e not in domain.interior_edges:
                continue
            for g2 in lat.edge_faces(e):
                if g2 != g and g2 in domain.interior_faces:
                    cands.append((lat.thread_of_face(g2), g2))
        if not cands:
            return FreePath(faces, sign, False)
        _key, g2 = min(cands)
        assert g2 not in seen, "free path revisited a face"
        seen.add(g2)
        faces.append(g2)


# ---------------------------------------------------------------------------
# periodic planes, pyramid, almost-planar boundary


def extremal_planes(lattice):
    """One (slope, heights-at-torus-face-reps) pair per Newton polygon
    vertex; heights are relative to the canonical periodic reference
    matching, pinned to 0 at the base face."""
    ref = reference_fd_matching(lattice)
    fdms = enumerate_fd_matchings(lattice)
    hull = newton_polygon(lattice)
    out = []
    for vtx in hull:
        fdm = next(m for m in fdms
                   if periodic_slope(lattice, m, ref) == vtx)
        reph = _rep_heights(lattice, fdm, ref)
        out.append((vtx, reph))
    return out


def _rep_heights(lattice, fdm, ref):
    """Heights of the periodic matching fdm (relative to ref) at each
    torus face representative, pinned to 0 at representative 0."""
    from .lattice import _dual_path_crossings
    base = lattice.torus_face_reps[0]
    reph = [0]
    for rep in lattice.torus_face_reps[1:]:
        s = 0
        for key, sg in _dual_path_crossings(lattice, base, rep):
            s += sg * (int(fd_matching_chooses(lattice, fdm, key))
                       - int(fd_matching_chooses(lattice, ref, key)))
        reph.append(s)
    return reph


def plane_height(lattice, slope, reph, f):
    """Height of the extremal periodic matching of the given slope at f."""
    i, (k1, k2) = lattice.face_torus_coords(f)
    return reph[i] + slope[0] * k1 + slope[1] * k2


def pyramid_height(lattice):
    """The pyramid height function as a callable face -> int."""
    planes = extremal_planes(lattice)

    def h(f):
        return min(plane_height(lattice, v, reph, f) for v, reph in planes)

    return h


def domain_state(domain, interior_edges):
    """Full matching agreeing with the boundary outside the interior."""
    ext = [e for e in domain.m.edges if e not in domain.interior_edges]
    return Matching(domain.lattice, list(interior_edges) + ext,
                    domain.m.partner_fn)


def pyramid(kind, L):
    """The pyramid matching p and its finite sub-graph W_L.

    W_L is built so that 2L+1 threads cross it and thread i carries
    L+1-|i| beads of p, movable upward only; p is maximal in the
    resulting state space.
    """
    lat = build_lattice(kind)
    hp = pyramid_height(lat)
    B = 4 * L + 24
    p = matching_from_height(lat, hp, (-B, B, -B, B))

    beads = {}
    for e in p.edges:
        slot = lat.transverse_slot(e)
        if slot is not None:
            beads.setdefault(slot[0], []).append(slot[1])

    faces = []
    for i in range(-L, L + 1):
        n = L + 1 - abs(i)
        js = sorted(beads[i], reverse=True)
        # guard against window truncation below
        assert len(js) > n + 2, "pyramid window too small"
        c, a = js[0], js[n - 1]
        b = c + (c - a + 1)
        faces.extend(lat.face_at(i, j) for j in range(a + 1, b + 1))

    from .lattice import ExplicitRegion
    dom = FiniteDomain(lat, ExplicitRegion(faces), L, p, faces)
    return p, dom


def corner_height(lattice):
    """Minimal height function: max-plus envelope of the extremal planes.

    Its graph is the corner of an octant; every other height function
    over the same boundary lies above it.
    """
    planes = extremal_planes(lattice)

    def h(f):
        return max(plane_height(lattice, v, reph, f) for v, reph in planes)

    return h


def lozenge_domain(L):
    """Hexagonal region with side L on the hexagon lattice.

    The boundary matching is the frozen corner configuration, so the
    states are exactly the monotone stackings in an L*L*L box: 2 for
    L=1, 20 for L=2, 980 for L=3.
    """
    lat = build_lattice("hexagon")
    B = 2 * L + 10
    m = matching_from_height(lat, corner_height(lat), (-B, B, -B, B))
    faces = sorted((x, y)
                   for x in range(-2 * L, 2 * L + 1)
                   for y in range(-L + 1, L)
                   if (x + y) % 2 == 0
                   and abs(x + y) <= 2 * (L - 1)
                   and abs(x - y) <= 2 * (L - 1))
    from .lattice import ExplicitRegion
    return FiniteDomain(lat, ExplicitRegion(faces), L, m, faces)


def block_domain(n):
    """Free-boundary n x n vertex block on the square lattice.

    The all-horizontal boundary matching pairs the block's own vertices
    among themselves, so every state stays inside the block: the counts
    are the n x n domino tiling numbers (2, 36, 6728 for n = 2, 4, 6).
    """
    if n % 2:
        raise ValueError("block size must be even")
    lat = build_lattice("square")
    m = periodic_matching(lat, fdm=(0, 5))
    faces = [(x, y) for x in range(n - 1) for y in range(n - 1)]
    from .lattice import ExplicitRegion
    return FiniteDomain(lat, ExplicitRegion(faces), n, m, faces)


def flatten_to_plane(kind, slope, L):
    """An almost-planar boundary matching: height within a bounded
    constant of the plane s*k1 + t*k2 (torus translate coordinates) over
    a window comfortably containing the scale-L domain."""
    lat = build_lattice(kind)
    s, t = Fraction(slope[0]), Fraction(slope[1])
    hull = newton_polygon(lat)
    if not point_in_polygon((s, t), hull, strict=True):
        raise SlopeOutsidePolygon(
            f"slope {slope} not strictly inside {hull}")

    B = L + 14
    ref = reference_fd_matching(lat)
    faces = list(lat.faces_in_box(-B, B, -B, B))
    fset = set(faces)

    def tau(f):
        _i, (k1, k2) = lat.face_torus_coords(f)
        return s * k1 + t * k2

    # maximal valid height below the ceiling ceil(tau): min-plus envelope
    # with the infinite-lattice capacities of the periodic reference
    dist = {f: math.ceil(tau(f)) for f in faces}
    q = deque(sorted(dist, key=dist.get))
    while q:
        g = q.popleft()
        dg = dist[g]
        for e, sg in lat.face_edges(g):
            key = lat.fd_edge_key(e)
            occ = fd_matching_chooses(lat, ref, key)
            c = (0 if occ else 1) if sg > 0 else (1 if occ else 0)
            for g2 in lat.edge_faces(e):
                if g2 == g or g2 not in fset:
                    continue
                if dg + c < dist[g2]:
                    dist[g2] = dg + c
                    if c == 0:
                        q.appendleft(g2)
                    else:
                        q.append(g2)

    Bm = B - 4
    return matching_from_height(lat, dist.__getitem__, (-Bm, Bm, -Bm, Bm))


# ---------------------------------------------------------------------------
# serialization


def write_matching(M, fileobj, window=None, f0=None):
    """Line-based text format: header, then one occupied edge per line."""
    lat = M.lattice
    fileobj.write(f"lattice={lat.kind.value}\n")
    if window is not None:
        fileobj.write("window=%d,%d,%d,%d\n" % tuple(window))
    if f0 is not None:
        fileobj.write("f0=%d,%d,%d\n" % tuple(lat.face_id(f0)))
    for e in sorted(M.edges):
        ida = lat.vertex_id(e[0])
        idb = lat.vertex_id(e[1])
        fileobj.write("(%d,%d,%d)-(%d,%d,%d)\n" % (ida + idb))


def read_matching(fileobj):
    """Parse the text format written by write_matching."""
    lat = None
    edges = []
    meta = {}
    for line in fileobj:
        line = line.strip()
        if not line:
            continue
        if "=" in line and not line.startswith("("):
            k, v = line.split("=", 1)
            meta[k] = v
            if k == "lattice":
                lat = build_lattice(v)
            continue
        a, b = line.split(")-(")
        ida = tuple(int(c) for c in a.lstrip("(").split(","))
        idb = tuple(int(c) for c in b.rstrip(")").split(","))
        edges.append(canon_edge(lat.vertex_at(ida), lat.vertex_at(idb)))
    return Matching(lat, edges), meta


def matching_from_height(lattice, h_fn, box):
    """Matching whose height relative to the canonical periodic reference
    is h_fn, with edges materialized for whites inside the vertex box.

    h_fn must be a valid height and defined on every face touching the
    box (plus one extra ring).
    """
    ref = reference_fd_matching(lattice)

    def occupied(e):
        fa, fb = lattice.edge_faces(e)
        s = dict(lattice.face_edges(fa))[e]
        if s < 0:
            fa, fb = fb, fa
        key = lattice.fd_edge_key(e)
        d_ab = 0 if fd_matching_chooses(lattice, ref, key) else 1
        return h_fn(fb) - h_fn(fa) == d_ab

    def rule(v):
        for u in lattice.neighbors(v):
            if occupied(canon_edge(u, v)):
                return u
        raise NotAMatching(f"no occupied edge at {v}")

    xmin, xmax, ymin, ymax = box
    edges = []
    for x in range(xmin, xmax + 1):
        for y in range(ymin, ymax + 1):
            if (x + y) % 2 == 0:
                edges.append(canon_edge((x, y), rule((x, y))))
    return Matching(lattice, edges, rule)
