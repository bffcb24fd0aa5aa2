"""Periodic bipartite lattices, threads, and finite domain carving.

The three lattices (square, hexagon, square-hexagon) are all realized on
vertex set Z^2 with a vertex (x,y) colored white when x + y is even.  The
hexagon lattice uses the brick-wall embedding (all horizontal edges, every
other vertical), and the square-hexagon lattice repeats a six-vertex cell
(translations (2,0) and (1,3)) in which rows of hexagons are separated by
rows of squares, consecutive squares along a thread sharing alternately a
white and a black corner.  Faces are labelled by a corner coordinate.

Threads are the periodic face paths transverse to the bead dynamics; each
face f^i_j of thread i carries a transverse edge e^i_j above it, and the
rotation at f^i_j exchanges a bead between e^i_{j-1} and e^i_j.
"""

from __future__ import annotations

import itertools
from enum import Enum

from .errors import EmptyDomain, UnsupportedLattice

# large multiplier for lexicographic (y, -x) keys packed into one integer
KM = 1 << 40


class LatticeKind(str, Enum):
    SQUARE = "square"
    HEXAGON = "hexagon"
    SQUAREHEXAGON = "squarehexagon"


def canon_edge(u, v):
    """Canonical (sorted) form of an edge between two vertices."""
    return (u, v) if u <= v else (v, u)


def color(v):
    """'w' for white vertices, 'b' for black."""
    return "w" if (v[0] + v[1]) % 2 == 0 else "b"


class LatticeSpec:
    """Geometry of one of the three periodic lattices.

    Immutable; obtain instances through build_lattice.  Subclasses provide
    vertex adjacency, face boundaries, the thread indexing, and the
    fundamental-domain data used for torus (Kasteleyn) computations.
    """

    kind: LatticeKind

    # ---- vertices and edges -------------------------------------------

    def neighbors(self, v):
        raise NotImplementedError

    def has_edge(self, u, v):
        du, dv = abs(u[0] - v[0]), abs(u[1] - v[1])
        if du + dv != 1:
            return False
        return v in self.neighbors(u)

    # ---- faces --------------------------------------------------------

    def is_face(self, f):
        raise NotImplementedError

    def face_vertices(self, f):
        """Boundary vertices of f in counterclockwise order."""
        raise NotImplementedError

    def face_sides(self, f):
        return len(self.face_vertices(f))

    def face_edges(self, f):
        """List of (edge, s_out) around f.

        s_out is +1 when crossing out of f through the edge is positively
        oriented (white endpoint on the right of the crossing direction),
        which happens exactly when the ccw boundary traverses the edge
        from its white endpoint to its black one.
        """
        vs = self.face_vertices(f)
        out = []
        for a, b in zip(vs, vs[1:] + vs[:1]):
            s = 1 if color(a) == "w" else -1
            out.append((canon_edge(a, b), s))
        return out

    def edge_faces(self, e):
        """The two faces sharing edge e."""
        raise NotImplementedError

    def region_vertices(self, f):
        """Corner points used for region containment tests.

        Defaults to the face boundary; lattices whose labelled embedding
        wobbles around the drawn picture can override with a straightened
        polygon so that convex regions cut every thread in one run.
        """
        return self.face_vertices(f)

    def faces_in_box(self, xmin, xmax, ymin, ymax):
        """All faces whose corner label lies in the closed box."""
        raise NotImplementedError

    # ---- threads ------------------------------------------------------

    def thread_of_face(self, f):
        """(i, j) with f = f^i_j."""
        raise NotImplementedError

    def face_at(self, i, j):
        raise NotImplementedError

    def transverse_edge(self, i, j):
        """(white, black) endpoints of e^i_j."""
        raise NotImplementedError

    def transverse_slot(self, e):
        """(i, j) if the canonical edge e is transverse, else None."""
        raise NotImplementedError

    def _gamma_key(self, v):
        """Position of a vertex along its Gamma path (monotone integer)."""
        raise NotImplementedError

    def wkey(self, i, j):
        return self._gamma_key(self.transverse_edge(i, j)[0])

    def bkey(self, i, j):
        return self._gamma_key(self.transverse_edge(i, j)[1])

    def precedes(self, i, j, jp):
        """e^i_j < e^{i+1}_{jp} in the interlacement order."""
        return self.wkey(i, j) < self.bkey(i + 1, jp)

    # ---- fundamental domain / serialization ids -----------------------

    # subclasses set: fd_translations (t1, t2), fd_vertex_reps,
    # fd_face_reps, torus data (torus_whites, torus_blacks, torus_edges).

    def vertex_id(self, v):
        raise NotImplementedError

    def vertex_at(self, vid):
        tx, ty, i = vid
        bx, by = self.fd_vertex_reps[i]
        t1, t2 = self.fd_translations
        return (bx + tx * t1[0] + ty * t2[0], by + tx * t1[1] + ty * t2[1])

    def face_id(self, f):
        raise NotImplementedError

    def face_at_id(self, fid):
        tx, ty, i = fid
        bx, by = self.fd_face_reps[i]
        t1, t2 = self.fd_translations
        return (bx + tx * t1[0] + ty * t2[0], by + tx * t1[1] + ty * t2[1])

    # ---- torus fundamental domain -------------------------------------

    def torus_coords(self, v):
        """(color, fd index, (k1,k2)) with v = rep + k1*T1 + k2*T2 for the
        torus translations."""
        raise NotImplementedError

    def torus_vertex(self, col, i, k):
        rep = (self.torus_whites if col == "w" else self.torus_blacks)[i]
        T1, T2 = self.torus_translations
        return (rep[0] + k[0] * T1[0] + k[1] * T2[0],
                rep[1] + k[0] * T1[1] + k[1] * T2[1])

    def fd_edge_key(self, e):
        """(white fd index, black fd index, translation offset) of edge e."""
        u, v = e
        w, b = (u, v) if color(u) == "w" else (v, u)
        _, wi, (k1, k2) = self.torus_coords(w)
        _, bi, (l1, l2) = self.torus_coords(b)
        return (wi, bi, (l1 - k1, l2 - k2))

    def face_at_torus(self, i, k):
        rep = self.torus_face_reps[i]
        T1, T2 = self.torus_translations
        return (rep[0] + k[0] * T1[0] + k[1] * T2[0],
                rep[1] + k[0] * T1[1] + k[1] * T2[1])


class SquareLattice(LatticeSpec):
    kind = LatticeKind.SQUARE

    fd_translations = ((2, 0), (1, 1))
    fd_vertex_reps = [(0, 0), (1, 0)]
    fd_face_reps = [(0, 0), (1, 0)]

    # torus fundamental domain (2x2 block, translations (2,0),(0,2)) so
    # that the (-1)^x column sign gauge is translation invariant
    torus_translations = ((2, 0), (0, 2))
    torus_whites = [(0, 0), (1, 1)]
    torus_blacks = [(1, 0), (0, 1)]
    torus_edges = [
        (0, 0, (0, 0), 1),   # (0,0)-(1,0) east
        (0, 0, (-1, 0), 1),  # (0,0)-(-1,0) west
        (0, 1, (0, 0), 1),   # (0,0)-(0,1) north, column 0
        (0, 1, (0, -1), 1),  # (0,0)-(0,-1) south, column 0
        (1, 1, (1, 0), 1),   # (1,1)-(2,1) east
        (1, 1, (0, 0), 1),   # (1,1)-(0,1) west
        (1, 0, (0, 1), -1),  # (1,1)-(1,2) north, column 1
        (1, 0, (0, 0), -1),  # (1,1)-(1,0) south, column 1
    ]

    def neighbors(self, v):
        x, y = v
        return [(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)]

    def is_face(self, f):
        return True

    def face_vertices(self, f):
        x, y = f
        return [(x, y), (x + 1, y), (x + 1, y + 1), (x, y + 1)]

    def edge_faces(self, e):
        (ux, uy), (vx, vy) = e
        if uy == vy:  # horizontal
            x = min(ux, vx)
            return ((x, uy), (x, uy - 1))
        x, y = ux, min(uy, vy)
        return ((x, y), (x - 1, y))

    def faces_in_box(self, xmin, xmax, ymin, ymax):
        return itertools.product(range(xmin, xmax + 1), range(ymin, ymax + 1))

    def thread_of_face(self, f):
        x, y = f
        if (x + y) % 2 == 0:
            return ((x - y) // 2, 2 * y)
        return ((x - y + 1) // 2, 2 * y - 1)

    def face_at(self, i, j):
        m = j // 2
        if j % 2 == 0:
            return (2 * i + m, m)
        return (2 * i + m, m + 1)

    def transverse_edge(self, i, j):
        m = j // 2
        if j % 2 == 0:
            return ((2 * i + m + 1, m + 1), (2 * i + m, m + 1))
        return ((2 * i + m + 1, m + 1), (2 * i + m + 1, m + 2))

    def transverse_slot(self, e):
        u, v = e
        if color(u) == "w":
            w, b = u, v
        else:
            w, b = v, u
        if b[1] == w[1]:  # horizontal: transverse iff white east of black
            if b[0] != w[0] - 1:
                return None
            return ((w[0] - w[1]) // 2, 2 * (w[1] - 1))
        if b != (w[0], w[1] + 1):  # vertical: transverse iff black above
            return None
        return ((w[0] - w[1]) // 2, 2 * w[1] - 1)

    def _gamma_key(self, v):
        return v[0] + v[1]

    def vertex_id(self, v):
        x, y = v
        i = (x - y) % 2
        return ((x - y - i) // 2, y, i)

    face_id = vertex_id

    def face_at_id(self, fid):
        return self.vertex_at(fid)

    def torus_coords(self, v):
        x, y = v
        col, i = _RECT_PARITY[(x % 2, y % 2)]
        return (col, i, (x // 2, y // 2))

    torus_face_reps = [(0, 0), (1, 0), (0, 1), (1, 1)]

    def face_torus_coords(self, f):
        x, y = f
        return ((x % 2) + 2 * (y % 2), (x // 2, y // 2))


class HexagonLattice(LatticeSpec):
    kind = LatticeKind.HEXAGON

    fd_translations = ((2, 0), (1, 1))
    fd_vertex_reps = [(0, 0), (1, 0)]
    fd_face_reps = [(0, 0)]

    torus_translations = ((2, 0), (1, 1))
    torus_whites = [(0, 0)]
    torus_blacks = [(1, 0)]
    torus_edges = [
        (0, 0, (0, 0), 1),   # east
        (0, 0, (-1, 0), 1),  # west
        (0, 0, (-1, 1), 1),  # north
    ]

    def neighbors(self, v):
        x, y = v
        out = [(x + 1, y), (x - 1, y)]
        if (x + y) % 2 == 0:
            out.append((x, y + 1))
        else:
            out.append((x, y - 1))
        return out

    def is_face(self, f):
        return (f[0] + f[1]) % 2 == 0

    def face_vertices(self, f):
        x, y = f
        return [(x, y), (x + 1, y), (x + 2, y),
                (x + 2, y + 1), (x + 1, y + 1), (x, y + 1)]

    def edge_faces(self, e):
        (ux, uy), (vx, vy) = e
        if uy == vy:  # horizontal
            a, y = min(ux, vx), uy
            fa = (a, y) if (a + y) % 2 == 0 else (a - 1, y)
            fb = (a, y - 1) if (a + y - 1) % 2 == 0 else (a - 1, y - 1)
            return (fa, fb)
        x, y = ux, min(uy, vy)
        return ((x, y), (x - 2, y))

    def faces_in_box(self, xmin, xmax, ymin, ymax):
        for y in range(ymin, ymax + 1):
            x0 = xmin if (xmin + y) % 2 == 0 else xmin + 1
            for x in range(x0, xmax + 1, 2):
                yield (x, y)

    def thread_of_face(self, f):
        x, y = f
        return ((x + y) // 2, y)

    def face_at(self, i, j):
        return (2 * i - j, j)

    def transverse_edge(self, i, j):
        return ((2 * i - j + 1, j + 1), (2 * i - j, j + 1))

    def transverse_slot(self, e):
        u, v = e
        if u[1] != v[1]:
            return None  # vertical edges are never transverse
        if color(u) == "w":
            w, b = u, v
        else:
            w, b = v, u
        if b[0] != w[0] - 1:
            return None
        a, c = w
        return ((a + c - 2) // 2, c - 1)

    def _gamma_key(self, v):
        return KM * v[1] - v[0]

    def vertex_id(self, v):
        x, y = v
        i = (x - y) % 2
        return ((x - y - i) // 2, y, i)

    def face_id(self, f):
        x, y = f
        return ((x - y) // 2, y, 0)

    def torus_coords(self, v):
        x, y = v
        i = (x - y) % 2
        return ("w" if i == 0 else "b", 0, ((x - y - i) // 2, y))

    torus_face_reps = [(0, 0)]

    def face_torus_coords(self, f):
        x, y = f
        return (0, ((x - y) // 2, y))


class SquareHexagonLattice(LatticeSpec):
    """Square-hexagon lattice on Z^2.

    The six-vertex cell (translations (2,0) and (1,3)) contains the vertex
    classes, with ty = y // 3 and x' = (x - ty) % 2:

        y % 3 == 0:  x' == 0 -> A (white, degree 4),  x' == 1 -> B (black)
        y % 3 == 1:  x' == 0 -> D (black, degree 4),  x' == 1 -> C (white)
        y % 3 == 2:  x' == 0 -> E (white),            x' == 1 -> F (black)

    Besides the eight short edges there are two long diagonals, A-(-2,-1)
    and E+(2,-1); a face ring around a thread repeats hexagon, square with
    shared white corner, hexagon, square with shared black corner.
    """

    kind = LatticeKind.SQUAREHEXAGON

    fd_translations = ((2, 0), (1, 3))
    fd_vertex_reps = [(0, 0), (1, 0), (0, 1), (1, 1), (0, 2), (1, 2)]
    # faces per cell: two hexagons, the black-shared and white-shared square
    fd_face_reps = [(0, 0), (0, 1), (1, 1), (1, 2)]

    torus_translations = ((2, 0), (1, 3))
    torus_whites = [(0, 0), (1, 1), (0, 2)]   # A, C, E
    torus_blacks = [(1, 0), (0, 1), (1, 2)]   # B, D, F
    torus_edges = [
        (0, 0, (0, 0), 1),     # A-B east
        (0, 0, (-1, 0), 1),    # A-B west
        (0, 2, (0, -1), 1),    # A-F south
        (0, 2, (-1, -1), -1),  # A-F long diagonal
        (1, 0, (0, 0), 1),     # C-B south
        (1, 1, (0, 0), 1),     # C-D west
        (1, 1, (1, 0), 1),     # C-D east
        (2, 1, (0, 0), 1),     # E-D south
        (2, 1, (1, 0), -1),    # E-D long diagonal
        (2, 2, (0, 0), 1),     # E-F east
    ]

    # (y % 3, x') -> class letter and position along the vertical period
    _VCLASS = {(0, 0): "A", (0, 1): "B", (1, 1): "C",
               (1, 0): "D", (2, 0): "E", (2, 1): "F"}
    _VOFF = {"A": 0, "B": 1, "C": 3, "D": 4, "E": 5, "F": 7}

    _NBRS = {
        "A": ((1, 0), (-1, 0), (0, -1), (-2, -1)),
        "B": ((-1, 0), (1, 0), (0, 1)),
        "C": ((0, -1), (-1, 0), (1, 0)),
        "D": ((1, 0), (-1, 0), (0, 1), (-2, 1)),
        "E": ((0, -1), (2, -1), (1, 0)),
        "F": ((-1, 0), (0, 1), (2, 1)),
    }

    @classmethod
    def _vclass(cls, v):
        x, y = v
        return cls._VCLASS[(y % 3, (x - y // 3) % 2)]

    def neighbors(self, v):
        x, y = v
        return [(x + dx, y + dy) for dx, dy in self._NBRS[self._vclass(v)]]

    def has_edge(self, u, v):
        return v in self.neighbors(u)

    def is_face(self, f):
        # faces are labelled by their A, D, C, F corner
        return self._vclass(f) in ("A", "D", "C", "F")

    _FACE_OFFSETS = {
        # hexagon rows: anchored at the A (bottom) and D (bottom-left) corner
        "A": ((0, 0), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0)),
        "D": ((0, 0), (0, 1), (1, 1), (1, 2), (-1, 1), (-2, 1)),
        # squares: black-shared anchored at C, white-shared anchored at F
        "C": ((0, 0), (1, 0), (-1, 1), (-1, 0)),
        "F": ((0, 0), (2, 1), (1, 1), (0, 1)),
    }

    def face_vertices(self, f):
        x, y = f
        return [(x + dx, y + dy)
                for dx, dy in self._FACE_OFFSETS[self._vclass(f)]]

    # (white class, black - white) -> offsets from the white vertex of the
    # two faces sharing the edge
    _EDGE_FACES = {
        ("A", (1, 0)): ((0, -1), (0, 0)),
        ("A", (-1, 0)): ((-2, -1), (0, 0)),
        ("A", (0, -1)): ((-1, -2), (0, -1)),
        ("A", (-2, -1)): ((-2, -1), (-1, -2)),
        ("C", (0, -1)): ((-1, -1), (1, -1)),
        ("C", (-1, 0)): ((-1, -1), (0, 0)),
        ("C", (1, 0)): ((0, 0), (1, -1)),
        ("E", (0, -1)): ((1, -1), (0, -1)),
        ("E", (2, -1)): ((1, -1), (2, -1)),
        ("E", (1, 0)): ((0, -1), (2, -1)),
    }

    def edge_faces(self, e):
        u, v = e
        w, b = (u, v) if color(u) == "w" else (v, u)
        d = (b[0] - w[0], b[1] - w[1])
        fa, fb = self._EDGE_FACES[(self._vclass(w), d)]
        return ((w[0] + fa[0], w[1] + fa[1]), (w[0] + fb[0], w[1] + fb[1]))

    def faces_in_box(self, xmin, xmax, ymin, ymax):
        for y in range(ymin, ymax + 1):
            r = y % 3
            if r == 1:
                for x in range(xmin, xmax + 1):
                    yield (x, y)
            else:
                # rows y%3==0 keep the A corners, rows y%3==2 the F corners
                par = (y // 3 + (0 if r == 0 else 1)) % 2
                x0 = xmin if xmin % 2 == par else xmin + 1
                for x in range(x0, xmax + 1, 2):
                    yield (x, y)

    def region_vertices(self, f):
        # straightened drawing: the squares sit between the hexagon rows
        # instead of poking east/west, so threads cross convex regions in
        # one contiguous run
        i, j = self.thread_of_face(f)
        q = j // 4
        ys = [v[1] for v in self.face_vertices(f)]
        xlo, xhi = 2 * i + q - 1, 2 * i + q + 1
        ylo, yhi = min(ys), max(ys)
        return [(xlo, ylo), (xhi, ylo), (xhi, yhi), (xlo, yhi)]

    # Thread i climbs the ring  white-shared square f^i_{4q}, hexagon,
    # black-shared square f^i_{4q+2}, hexagon;  the squares weave between
    # the west and east columns of the hexagons.

    def thread_of_face(self, f):
        x, y = f
        c = self._vclass(f)
        if c == "A":
            q = y // 3
            return ((x - q) // 2, 4 * q + 1)
        if c == "D":
            q = (y - 1) // 3
            return ((x - q) // 2, 4 * q + 3)
        if c == "C":
            q = (y - 1) // 3
            return ((x - 1 - q) // 2, 4 * q + 2)
        q = (y + 1) // 3
        return ((x + 2 - q) // 2, 4 * q)

    def face_at(self, i, j):
        q, r = divmod(j, 4)
        if r == 0:
            return (2 * i + q - 2, 3 * q - 1)
        if r == 1:
            return (2 * i + q, 3 * q)
        if r == 2:
            return (2 * i + q + 1, 3 * q + 1)
        return (2 * i + q, 3 * q + 1)

    def transverse_edge(self, i, j):
        q, r = divmod(j, 4)
        if r == 0:
            return ((2 * i + q, 3 * q), (2 * i + q - 1, 3 * q))
        if r == 1:
            return ((2 * i + q + 1, 3 * q + 1), (2 * i + q, 3 * q + 1))
        if r == 2:
            return ((2 * i + q, 3 * q + 2), (2 * i + q, 3 * q + 1))
        return ((2 * i + q + 1, 3 * q + 3), (2 * i + q - 1, 3 * q + 2))

    def transverse_slot(self, e):
        u, v = e
        w, b = (u, v) if color(u) == "w" else (v, u)
        x, y = w
        d = (b[0] - x, b[1] - y)
        c = self._vclass(w)
        if d == (-1, 0) and c == "A":
            q = y // 3
            return ((x - q) // 2, 4 * q)
        if d == (-1, 0) and c == "C":
            q = (y - 1) // 3
            return ((x - 1 - q) // 2, 4 * q + 1)
        if d == (0, -1) and c == "E":
            q = (y - 2) // 3
            return ((x - q) // 2, 4 * q + 2)
        if d == (-2, -1):
            q = y // 3 - 1
            return ((x - 1 - q) // 2, 4 * q + 3)
        return None

    def _gamma_key(self, v):
        # position of v along its Gamma zigzag: eight vertices per period
        return 8 * (v[1] // 3) + self._VOFF[self._vclass(v)]

    def _cell_coords(self, v):
        x, y = v
        ty = y // 3
        xp = (x - ty) % 2
        return ((x - ty - xp) // 2, ty, y % 3, xp)

    def vertex_id(self, v):
        tx, ty, r, xp = self._cell_coords(v)
        return (tx, ty, 2 * r + xp)

    _FACE_INDEX = {(0, 0): 0, (1, 0): 1, (1, 1): 2, (2, 1): 3}

    def face_id(self, f):
        tx, ty, r, xp = self._cell_coords(f)
        return (tx, ty, self._FACE_INDEX[(r, xp)])

    _WINDEX = {"A": 0, "C": 1, "E": 2}
    _BINDEX = {"B": 0, "D": 1, "F": 2}

    def torus_coords(self, v):
        tx, ty, _r, _xp = self._cell_coords(v)
        c = self._vclass(v)
        if c in self._WINDEX:
            return ("w", self._WINDEX[c], (tx, ty))
        return ("b", self._BINDEX[c], (tx, ty))

    torus_face_reps = [(0, 0), (0, 1), (1, 1), (1, 2)]

    def face_torus_coords(self, f):
        tx, ty, r, xp = self._cell_coords(f)
        return (self._FACE_INDEX[(r, xp)], (tx, ty))


# parity -> (color, torus fd index) for the 2x2 fundamental domains
_RECT_PARITY = {(0, 0): ("w", 0), (1, 1): ("w", 1),
                (1, 0): ("b", 0), (0, 1): ("b", 1)}


_INSTANCES = {
    LatticeKind.SQUARE: SquareLattice(),
    LatticeKind.HEXAGON: HexagonLattice(),
    LatticeKind.SQUAREHEXAGON: SquareHexagonLattice(),
}


def build_lattice(kind):
    """Return the (singleton) LatticeSpec for the given kind."""
    if isinstance(kind, str):
        try:
            kind = LatticeKind(kind.lower())
        except ValueError:
            raise UnsupportedLattice(f"unknown lattice kind {kind!r}")
    if kind not in _INSTANCES:
        raise UnsupportedLattice(f"unsupported lattice kind {kind!r}")
    return _INSTANCES[kind]


class ThreadIndexing:
    """Thin view over the thread structure of a lattice."""

    def __init__(self, lattice):
        self.lattice = lattice

    def thread_of_face(self, f):
        return self.lattice.thread_of_face(f)

    def face_at(self, i, j):
        return self.lattice.face_at(i, j)

    def transverse_edge(self, i, j):
        return self.lattice.transverse_edge(i, j)

    def transverse_slot(self, e):
        return self.lattice.transverse_slot(e)

    def precedes(self, i, j, jp):
        return self.lattice.precedes(i, j, jp)


# ---------------------------------------------------------------------------
# periodic matchings of the fundamental domain and the Newton polygon


def enumerate_fd_matchings(lattice):
    """All perfect matchings of the torus fundamental domain, each as a
    tuple of indices into lattice.torus_edges (one per white vertex)."""
    nw = len(lattice.torus_whites)
    nb = len(lattice.torus_blacks)
    by_white = [[] for _ in range(nw)]
    for k, (wi, bi, _off, _s) in enumerate(lattice.torus_edges):
        by_white[wi].append((k, bi))
    out = []

    def rec(wi, used, acc):
        if wi == nw:
            out.append(tuple(acc))
            return
        for k, bi in by_white[wi]:
            if not used[bi]:
                used[bi] = True
                acc.append(k)
                rec(wi + 1, used, acc)
                acc.pop()
                used[bi] = False

    rec(0, [False] * nb, [])
    if not out:
        from .errors import NoMatching
        raise NoMatching("fundamental domain admits no matching")
    return sorted(out)


def reference_fd_matching(lattice):
    """Canonical periodic reference matching.

    Chosen as the periodic matching whose slope is closest (L1, ties by
    enumeration order) to the centroid of the slope hull, so that the
    Newton polygon comes out centered: the slope of the uniform measure
    lies strictly inside it.
    """
    if getattr(lattice, "_ref_fdm", None) is None:
        from fractions import Fraction
        fdms = enumerate_fd_matchings(lattice)
        ref0 = fdms[0]
        raw = [periodic_slope(lattice, m, ref0) for m in fdms]
        hull = _convex_hull(raw)
        cx = Fraction(sum(p[0] for p in hull), len(hull))
        cy = Fraction(sum(p[1] for p in hull), len(hull))
        best = min(range(len(fdms)),
                   key=lambda k: (abs(raw[k][0] - cx) + abs(raw[k][1] - cy),
                                  k))
        lattice._ref_fdm = fdms[best]
    return lattice._ref_fdm


def fd_matching_chooses(lattice, fdm, key):
    """Whether the periodic matching fdm occupies edges with fd key."""
    wi, bi, off = key
    k = fdm[wi]
    _, bi2, off2, _s = lattice.torus_edges[k]
    return bi2 == bi and off2 == off


def periodic_partner(lattice, fdm, v):
    """Matched partner of vertex v under the periodic matching fdm."""
    col, i, k = lattice.torus_coords(v)
    if col == "w":
        _, bi, off, _s = lattice.torus_edges[fdm[i]]
        return lattice.torus_vertex("b", bi, (k[0] + off[0], k[1] + off[1]))
    for wi in range(len(lattice.torus_whites)):
        _, bi, off, _s = lattice.torus_edges[fdm[wi]]
        if bi == i:
            return lattice.torus_vertex(
                "w", wi, (k[0] - off[0], k[1] - off[1]))
    raise AssertionError("black vertex not covered")


def _dual_path_crossings(lattice, f, target):
    """Crossed edges (fd key, s_out) along a face path f -> target."""
    from collections import deque
    prev = {f: None}
    q = deque([f])
    while target not in prev:
        g = q.popleft()
        for e, s in lattice.face_edges(g):
            for g2 in lattice.edge_faces(e):
                if g2 not in prev:
                    prev[g2] = (g, e, s)
                    q.append(g2)
    out = []
    g = target
    while prev[g] is not None:
        _g0, e, s = prev[g]
        out.append((lattice.fd_edge_key(e), s))
        g = _g0
    return out


def slope_coeffs(lattice):
    """Linear functionals giving height change per torus translation.

    Returns (c1, c2): dicts mapping fd edge keys to integer weights such
    that for occupancy rho of a matching,
        h(f + T_a) - h(f) = sum_key c_a[key] * rho(key)   (a = 1, 2).
    """
    if getattr(lattice, "_slope_coeffs", None) is None:
        f = lattice.fd_face_reps[0]
        T1, T2 = lattice.torus_translations
        cs = []
        for T in (T1, T2):
            target = (f[0] + T[0], f[1] + T[1])
            c = {}
            for key, s in _dual_path_crossings(lattice, f, target):
                c[key] = c.get(key, 0) + s
            cs.append({k: v for k, v in c.items() if v})
        lattice._slope_coeffs = tuple(cs)
    return lattice._slope_coeffs


def periodic_slope(lattice, fdm, ref=None):
    """Height change per torus translation of fdm relative to ref."""
    if ref is None:
        ref = reference_fd_matching(lattice)
    c1, c2 = slope_coeffs(lattice)
    out = []
    for c in (c1, c2):
        s = 0
        for key, w in c.items():
            if fd_matching_chooses(lattice, fdm, key):
                s += w
            if fd_matching_chooses(lattice, ref, key):
                s -= w
        out.append(s)
    return tuple(out)


def _convex_hull(points):
    """Counterclockwise convex hull of integer points (monotone chain)."""
    pts = sorted(set(points))
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return ((a[0] - o[0]) * (b[1] - o[1])
                - (a[1] - o[1]) * (b[0] - o[0]))

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def newton_polygon(lattice):
    """Convex hull of the slopes of all periodic matchings, ccw order."""
    ref = reference_fd_matching(lattice)
    slopes = [periodic_slope(lattice, fdm, ref)
              for fdm in enumerate_fd_matchings(lattice)]
    return _convex_hull(slopes)


def point_in_polygon(p, hull, strict=True):
    """Whether p lies inside the ccw hull (strictly, by default).

    Works with exact integer/rational coordinates.
    """
    n = len(hull)
    if n < 3:
        return False
    for k in range(n):
        a, b = hull[k], hull[(k + 1) % n]
        cr = ((b[0] - a[0]) * (p[1] - a[1])
              - (b[1] - a[1]) * (p[0] - a[0]))
        if cr < 0 or (strict and cr == 0):
            return False
    return True


def thread_decomposition(lattice):
    if lattice.kind not in _INSTANCES:
        raise UnsupportedLattice(f"no thread structure for {lattice.kind!r}")
    return ThreadIndexing(lattice)


# ---------------------------------------------------------------------------
# regions and finite domains


class Region:
    """Scaled simply connected region; faces are tested with exact
    integer arithmetic (a face is inside L*U iff all its vertices are)."""

    name = "?"

    def contains_vertex(self, v, L):
        raise NotImplementedError

    def contains_face(self, lattice, f, L):
        return all(self.contains_vertex(v, L)
                   for v in lattice.region_vertices(f))


class SquareRegion(Region):
    """Open axis-aligned square (-L/2, L/2)^2."""

    name = "square"

    def contains_vertex(self, v, L):
        return abs(2 * v[0]) < L and abs(2 * v[1]) < L


class DiskRegion(Region):
    """Open disk of diameter L centered at the origin."""

    name = "disk"

    def contains_vertex(self, v, L):
        return 4 * (v[0] * v[0] + v[1] * v[1]) < L * L


class ExplicitRegion(Region):
    """Region given by an explicit face set (used for W_L)."""

    name = "explicit"

    def __init__(self, faces):
        self.faces = frozenset(faces)

    def contains_face(self, lattice, f, L):
        return f in self.faces


REGIONS = {"square": SquareRegion(), "disk": DiskRegion()}


class FiniteDomain:
    """A carved finite domain G' with its boundary condition.

    interior faces/edges/vertices follow the faces-entirely-inside rule;
    every admissible state coincides with the boundary matching m outside
    the interior edge set.
    """

    def __init__(self, lattice, region, L, m, interior_faces):
        self.lattice = lattice
        self.region = region
        self.L = L
        self.m = m

        self.interior_faces = frozenset(interior_faces)
        if not self.interior_faces:
            raise EmptyDomain(f"no {lattice.kind.value} face fits at L={L}")

        edges = set()
        verts = set()
        for f in self.interior_faces:
            for e, _s in lattice.face_edges(f):
                edges.add(e)
                verts.add(e[0])
                verts.add(e[1])
        self.interior_edges = frozenset(edges)
        self.interior_vertices = frozenset(verts)

        # ring of exterior faces sharing a vertex with the interior (the
        # vertex condition keeps the ring 0-capacity connected around
        # corners); height fields live on interior + ring and vanish on
        # the ring
        ring = set()
        cand = set()
        for f in self.interior_faces:
            for e, _s in lattice.face_edges(f):
                for g in lattice.edge_faces(e):
                    if g not in self.interior_faces:
                        cand.add(g)
        # grow by exterior-exterior adjacency while still touching interior
        frontier = list(cand)
        ring |= cand
        while frontier:
            g = frontier.pop()
            for e, _s in lattice.face_edges(g):
                for g2 in lattice.edge_faces(e):
                    if (g2 in ring or g2 in self.interior_faces):
                        continue
                    if any(v in verts for v in lattice.face_vertices(g2)):
                        ring.add(g2)
                        frontier.append(g2)
        self.ring_faces = frozenset(ring)
        self.f0 = min(ring)

        self.faces = sorted(self.interior_faces) + sorted(ring)
        self.face_index = {f: k for k, f in enumerate(self.faces)}

        # per-thread contiguous position ranges of interior faces
        tr = {}
        for f in self.interior_faces:
            i, j = lattice.thread_of_face(f)
            lo, hi = tr.get(i, (j, j))
            tr[i] = (min(lo, j), max(hi, j))
        for i, (lo, hi) in tr.items():
            for j in range(lo, hi + 1):
                assert lattice.face_at(i, j) in self.interior_faces, \
                    "thread range not contiguous"
        self.thread_range = tr

        xs = [v[0] for v in verts]
        ys = [v[1] for v in verts]
        self.box = (min(xs), max(xs), min(ys), max(ys))

    def is_interior_face(self, f):
        return f in self.interior_faces

    def is_interior_edge(self, e):
        return e in self.interior_edges

    def active_vertices(self):
        """Interior vertices whose m-partner edge is interior; only these
        can be rematched, all others keep their exterior m-edge."""
        out = []
        for v in sorted(self.interior_vertices):
            e = self.m.covering_edge(v)
            if e in self.interior_edges:
                out.append(v)
        return out


def _longest_thread_runs(lattice, faces):
    """Keep, per thread, the longest contiguous run of slots.

    A region boundary grazing a thread can clip single faces out of its
    middle; the bead machinery needs each thread to meet the domain in
    one segment, so stray fragments are dropped.
    """
    by_thread = {}
    for f in faces:
        i, j = lattice.thread_of_face(f)
        by_thread.setdefault(i, []).append(j)
    out = []
    for i, js in by_thread.items():
        js.sort()
        best = run = [js[0]]
        for j in js[1:]:
            run = run + [j] if j == run[-1] + 1 else [j]
            if len(run) > len(best):
                best = run
        out.extend(lattice.face_at(i, j) for j in best)
    return out


def carve_domain(lattice, region, L, m):
    """Carve the finite domain of all faces entirely inside L*U."""
    if isinstance(region, str):
        region = REGIONS[region]
    if L < 1:
        raise EmptyDomain("L must be positive")
    B = L // 2 + 2
    faces = [f for f in lattice.faces_in_box(-B - 2, B + 2, -B - 2, B + 2)
             if region.contains_face(lattice, f, L)]
    faces = _longest_thread_runs(lattice, faces)
    dom = FiniteDomain(lattice, region, L, m, faces)

    from .errors import OddParity
    nw = nb = 0
    for v in dom.active_vertices():
        if color(v) == "w":
            nw += 1
        else:
            nb += 1
    if nw != nb:
        raise OddParity(f"active white/black mismatch {nw} vs {nb}")
    return dom
