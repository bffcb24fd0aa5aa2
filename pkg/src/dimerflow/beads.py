"""Bead encoding of matchings on threads.

A matching of a finite domain is encoded, thread by thread, by the set of
occupied transverse edges (beads).  Beads of adjacent threads interlace:
between two consecutive beads of thread i there is exactly one bead of
thread i-1 and one of thread i+1 in the order along the shared zigzag
path.  Conversely an interlaced bead configuration determines the
matching uniquely.

Moving a bead up by one transverse edge decreases by exactly 1 the
height of the face it moves through; heights are therefore recovered
from cumulative bead counts along each thread.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right, insort

from .errors import DomainMismatch, FrozenBead, InterlacingViolation

# how far outside the mobile slot range frozen beads are materialized;
# neighbor-thread lookups stay well inside this collar
PAD = 12


def _edge_verts(lattice, i, j):
    w, b = lattice.transverse_edge(i, j)
    return (w, b)


def slots_conflict(lattice, i, j1, j2):
    """Whether transverse edges e^i_{j1} and e^i_{j2} share a vertex."""
    if j1 == j2:
        return True
    a = _edge_verts(lattice, i, j1)
    b = _edge_verts(lattice, i, j2)
    return bool(set(a) & set(b))


class BeadConfig:
    """Bead positions of a matching over a finite domain.

    mobile[i] is the ascending list of occupied interior transverse-edge
    slots of thread i; fixed_below / fixed_above hold the boundary beads
    inside a collar around the mobile slot range (these never move, but
    interlacing checks and accessible intervals need them).  Thread ids
    one beyond the domain's thread range appear with empty mobile lists.
    """

    def __init__(self, domain, mobile, fixed_below, fixed_above, slot_range):
        self.domain = domain
        self.mobile = mobile
        self.fixed_below = fixed_below
        self.fixed_above = fixed_above
        self.slot_range = slot_range
        self.threads = sorted(domain.thread_range)

    def copy(self):
        return BeadConfig(
            self.domain,
            {i: list(p) for i, p in self.mobile.items()},
            self.fixed_below, self.fixed_above, self.slot_range)

    def positions(self, i):
        """All known bead slots of thread i, ascending (frozen + mobile)."""
        return (self.fixed_below.get(i, [])
                + self.mobile.get(i, [])
                + self.fixed_above.get(i, []))

    def bead_count(self, i):
        return len(self.mobile.get(i, []))

    def neighbors_on_thread(self, i, r):
        """(pred, succ) slots around mobile bead r of thread i (None when
        no bead is known on that side)."""
        pos = self.mobile[i]
        pred = pos[r - 1] if r > 0 else (
            self.fixed_below[i][-1] if self.fixed_below.get(i) else None)
        succ = pos[r + 1] if r + 1 < len(pos) else (
            self.fixed_above[i][0] if self.fixed_above.get(i) else None)
        return pred, succ

    def move(self, i, r, j):
        """Move mobile bead r of thread i to slot j (caller checks
        accessibility)."""
        pos = self.mobile[i]
        assert (r == 0 or pos[r - 1] < j) and \
            (r + 1 == len(pos) or j < pos[r + 1])
        pos[r] = j

    def write_csv(self, fileobj):
        fileobj.write("thread,position_index\n")
        for i in self.threads:
            for j in self.mobile.get(i, []):
                fileobj.write(f"{i},{j}\n")

    def __eq__(self, other):
        return (isinstance(other, BeadConfig)
                and self.domain is other.domain
                and self.mobile == other.mobile)


def _collar_window(domain, t):
    """Slot window over which boundary beads of thread t are collected."""
    los, his = [], []
    for tt in (t - 1, t, t + 1):
        rng = domain.thread_range.get(tt)
        if rng is not None:
            los.append(rng[0] - 1)
            his.append(rng[1])
    return (min(los) - PAD, max(his) + PAD)


def beads_of(M, domain):
    """Bead configuration of a matching over the domain."""
    lat = domain.lattice
    mobile = {}
    slot_range = {}
    for i, (lo, hi) in domain.thread_range.items():
        slo, shi = lo - 1, hi
        slot_range[i] = (slo, shi)
        pos = []
        for j in range(slo, shi + 1):
            e = _edge_verts(lat, i, j)
            if M.is_occupied(e):
                pos.append(j)
        mobile[i] = pos

    imin, imax = min(slot_range), max(slot_range)
    fixed_below, fixed_above = {}, {}
    for t in range(imin - 1, imax + 2):
        wlo, whi = _collar_window(domain, t)
        rng = slot_range.get(t)
        below, above = [], []
        for j in range(wlo, whi + 1):
            if rng is not None and rng[0] <= j <= rng[1]:
                continue
            e = _edge_verts(lat, t, j)
            if domain.m.is_occupied(e):
                (below if rng is None or j < rng[0] else above).append(j)
        fixed_below[t] = below
        fixed_above[t] = above
    return BeadConfig(domain, mobile, fixed_below, fixed_above, slot_range)


# ---------------------------------------------------------------------------
# interlacement order bookkeeping
#
# Beads of threads i and i+1 are compared along their shared zigzag path,
# which carries the white endpoints of thread-i transverse edges and the
# black endpoints of thread-(i+1) ones; the lattice's monotone gamma key
# orders them with no ties.


def _count_upper_between(lattice, pos, i, ja, jb):
    """Beads of thread i+1 (slots in pos) strictly between slots ja and
    jb of thread i."""
    ka, kb = lattice.wkey(i, ja), lattice.wkey(i, jb)
    if ka > kb:
        ka, kb = kb, ka
    key = lambda d: lattice.bkey(i + 1, d)
    return bisect_left(pos, kb, key=key) - bisect_right(pos, ka, key=key)


def _count_lower_between(lattice, pos, i, ja, jb):
    """Beads of thread i-1 strictly between slots ja and jb of thread i."""
    ka, kb = lattice.bkey(i, ja), lattice.bkey(i, jb)
    if ka > kb:
        ka, kb = kb, ka
    key = lambda c: lattice.wkey(i - 1, c)
    return bisect_left(pos, kb, key=key) - bisect_right(pos, ka, key=key)


def _crossings(B, i, jold, jnew):
    """Neighbor-thread beads the move jold -> jnew of a thread-i bead
    would pass, as a list of (neighbor thread, count)."""
    lat = B.domain.lattice
    out = []
    up = B.positions(i + 1)
    if up:
        c = _count_upper_between(lat, up, i, jold, jnew)
        if c:
            out.append((i + 1, c))
    dn = B.positions(i - 1)
    if dn:
        c = _count_lower_between(lat, dn, i, jold, jnew)
        if c:
            out.append((i - 1, c))
    return out


def _step_allowed(B, i, r, jold, jnew, pred, succ):
    """Whether moving mobile bead r of thread i from jold to jnew (one
    slot) keeps the configuration a valid interlaced matching."""
    lat = B.domain.lattice
    if pred is not None and (jnew <= pred
                             or slots_conflict(lat, i, jnew, pred)):
        return False
    if succ is not None and (jnew >= succ
                             or slots_conflict(lat, i, jnew, succ)):
        return False
    for t, c in _crossings(B, i, jold, jnew):
        # passing a neighbor bead either abandons or enters a bracketed
        # interval, both of which break the exactly-one rule unless the
        # crossed bead is alone on its thread
        if c > 1 or len(B.positions(t)) > 1:
            return False
    return True


# ---------------------------------------------------------------------------
# validation and the bead -> matching direction


def validate_interlacing(B):
    """Raise InterlacingViolation if the configuration is inconsistent.

    Checks strict ordering and vertex-disjointness along each thread and
    the exactly-one interlacement rule for every consecutive pair with at
    least one mobile bead.
    """
    lat = B.domain.lattice
    for i in B.threads:
        pos = B.mobile[i]
        slo, shi = B.slot_range[i]
        nb = len(B.fixed_below.get(i, []))
        merged = B.positions(i)
        up = B.positions(i + 1)
        dn = B.positions(i - 1)
        for r, j in enumerate(pos):
            if not slo <= j <= shi:
                raise InterlacingViolation(
                    f"bead {r} of thread {i} at slot {j} outside "
                    f"[{slo},{shi}]", thread=i, index=r)
            if r + 1 < len(pos) and pos[r + 1] <= j:
                raise InterlacingViolation(
                    f"beads {r},{r + 1} of thread {i} out of order",
                    thread=i, index=r)
        for k in range(len(merged) - 1):
            if not (nb <= k + 1 and k < nb + len(pos)):
                continue  # pair of boundary beads: valid by construction
            ja, jb = merged[k], merged[k + 1]
            r = min(max(k, nb), nb + len(pos) - 1) - nb
            if slots_conflict(lat, i, ja, jb):
                raise InterlacingViolation(
                    f"beads at slots {ja},{jb} of thread {i} share a "
                    "vertex", thread=i, index=r)
            if up and _count_upper_between(lat, up, i, ja, jb) != 1:
                raise InterlacingViolation(
                    f"thread {i + 1} does not place exactly one bead "
                    f"between slots {ja},{jb} of thread {i}",
                    thread=i, index=r)
            if dn and _count_lower_between(lat, dn, i, ja, jb) != 1:
                raise InterlacingViolation(
                    f"thread {i - 1} does not place exactly one bead "
                    f"between slots {ja},{jb} of thread {i}",
                    thread=i, index=r)


def heights_of_beads(B):
    """Height field of the configuration relative to the boundary
    matching: h(f^i_j) counts boundary beads below slot j minus current
    beads below slot j."""
    from .matching import HeightField

    dom = B.domain
    h = {f: 0 for f in dom.ring_faces}
    for i, (lo, hi) in dom.thread_range.items():
        pos = B.mobile[i]
        ref = B._ref_positions(i)
        for j in range(lo, hi + 1):
            h[dom.lattice.face_at(i, j)] = (
                bisect_left(pos, j) - bisect_left(ref, j))
    return HeightField(dom, h)


def matching_of_beads(B):
    """The unique matching whose transverse occupation is B."""
    from .matching import matching_of

    validate_interlacing(B)
    for i in B.threads:
        if len(B.mobile[i]) != len(B._ref_positions(i)):
            raise InterlacingViolation(
                f"thread {i} carries {len(B.mobile[i])} beads, boundary "
                f"requires {len(B._ref_positions(i))}", thread=i, index=0)
    try:
        return matching_of(heights_of_beads(B), B.domain)
    except Exception as exc:  # pragma: no cover - validation should catch
        raise InterlacingViolation(
            f"bead configuration admits no matching: {exc}") from exc


def _ref_positions(self, i):
    """Mobile-range bead slots of the boundary matching on thread i."""
    cache = getattr(self.domain, "_ref_bead_pos", None)
    if cache is None:
        cache = self.domain._ref_bead_pos = {}
    pos = cache.get(i)
    if pos is None:
        lat = self.domain.lattice
        slo, shi = self.slot_range[i]
        pos = [j for j in range(slo, shi + 1)
               if self.domain.m.is_occupied(_edge_verts(lat, i, j))]
        cache[i] = pos
    return pos


BeadConfig._ref_positions = _ref_positions


# ---------------------------------------------------------------------------
# accessible intervals


def _rank_bounds(obj, domain):
    """Per-thread bead positions of a height constraint (HeightField,
    BeadConfig, or Matching)."""
    if obj is None:
        return None
    if isinstance(obj, BeadConfig):
        if obj.domain is not domain:
            raise DomainMismatch("constraint built over a different domain")
        return obj.mobile
    cached = getattr(obj, "_bead_positions", None)
    if cached is not None:
        return cached
    from .matching import HeightField, Matching, matching_of

    if isinstance(obj, HeightField):
        M = matching_of(obj, domain)
    elif isinstance(obj, Matching):
        M = obj
    else:
        raise TypeError(f"cannot use {type(obj).__name__} as a constraint")
    pos = beads_of(M, domain).mobile
    try:
        obj._bead_positions = pos
    except AttributeError:
        pass
    return pos


def accessible_interval(B, bead, floor=None, ceiling=None):
    """Slots reachable by the given mobile bead holding all others fixed.

    bead is (thread, index into the thread's mobile beads).  Returns a
    range object over transverse-edge slots; the current position always
    belongs to it.  A floor constraint keeps heights above the floor,
    which caps how far up the bead may go (moving up lowers heights);
    a ceiling caps movement downward.
    """
    i, r = bead
    if i not in B.mobile or not 0 <= r < len(B.mobile[i]):
        raise FrozenBead(f"no mobile bead {r} on thread {i}")
    j0 = B.mobile[i][r]
    slo, shi = B.slot_range[i]
    pred, succ = B.neighbors_on_thread(i, r)

    jmin, jmax = slo, shi
    fpos = _rank_bounds(floor, B.domain)
    if fpos is not None:
        jmax = min(jmax, fpos[i][r])
    cpos = _rank_bounds(ceiling, B.domain)
    if cpos is not None:
        jmin = max(jmin, cpos[i][r])

    hi = j0
    while hi + 1 <= jmax and _step_allowed(B, i, r, hi, hi + 1, pred, succ):
        hi += 1
    lo = j0
    while lo - 1 >= jmin and _step_allowed(B, i, r, lo, lo - 1, pred, succ):
        lo -= 1
    return range(lo, hi + 1)
