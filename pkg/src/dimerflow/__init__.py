"""Random perfect matchings of periodic bipartite lattices: simulation
and exact computation."""

__version__ = "0.1.0"

from .lattice import (  # noqa: F401
    LatticeKind,
    build_lattice,
    carve_domain,
    newton_polygon,
    thread_decomposition,
)
