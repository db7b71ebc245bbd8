"""
Finite stand-ins for the infinite graphs of the lab: tori (Z^d), balls in the
d-regular tree, lamplighter segments (Z2 wr Z), cycles and custom edge lists.

Vertex ids are dense and 0-based:
  torus / cycle      row-major coordinates, id = sum x_j * prod(dims[j+1:])
  tree_ball          breadth-first numbering, root 0, children of a vertex contiguous
  lamplighter        id = lamps * L + position, lamp i is bit i of `lamps`
"""
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sps
from scipy.sparse.csgraph import connected_components

from config import (LAMPLIGHTER_MAX_LENGTH, TORUS_MAX_DIMS, PreconditionError, SpecError,
                    ValidityError, max_vertices)

FAMILIES = ('torus', 'tree_ball', 'lamplighter_segment', 'cycle', 'custom')
TRANSITIVE_FAMILIES = ('torus', 'cycle')


@dataclass(frozen=True, eq=False)
class Graph:
    vertex_count: int
    indptr: np.ndarray
    indices: np.ndarray
    edges: np.ndarray
    slot_edges: np.ndarray
    family_tag: str = 'custom'
    family_params: dict = field(default_factory=dict)

    @property
    def edge_count(self):
        return len(self.edges)

    @cached_property
    def degrees(self):
        return np.diff(self.indptr)

    @cached_property
    def pi(self):
        """Degree measure pi(v) = deg(v)."""
        return self.degrees.astype(np.float64)

    @cached_property
    def adjacency(self):
        data = np.ones(len(self.indices), dtype=np.float64)
        return sps.csr_matrix((data, self.indices, self.indptr),
                              shape=(self.vertex_count, self.vertex_count))

    @cached_property
    def transition(self):
        """P(u, v) = 1/deg(u) for neighbours."""
        return sps.diags(1.0 / self.pi) @ self.adjacency

    def neighbors(self, v):
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def describe(self):
        return {'family': self.family_tag, 'params': dict(self.family_params)}


@dataclass(frozen=True, eq=False)
class Domain:
    """A finite vertex set A hosting killed walks."""
    members: np.ndarray
    mask: np.ndarray

    def __len__(self):
        return len(self.members)

    def __contains__(self, v):
        return 0 <= v < len(self.mask) and bool(self.mask[v])

    def __iter__(self):
        return iter(self.members.tolist())


def make_domain(g, vertices):
    if isinstance(vertices, Domain):
        return vertices
    raw = vertices if isinstance(vertices, np.ndarray) else np.asarray(list(vertices))
    members = np.unique(raw.astype(np.int64))
    if len(members) and (members[0] < 0 or members[-1] >= g.vertex_count):
        raise PreconditionError(f"domain members must lie in [0, {g.vertex_count})")
    mask = np.zeros(g.vertex_count, dtype=bool)
    mask[members] = True
    members.flags.writeable = False
    mask.flags.writeable = False
    return Domain(members=members, mask=mask)


def _check_cap(n, what):
    cap = max_vertices()
    if n > cap:
        raise PreconditionError(f"{what} would have {n} vertices, above the cap of {cap} "
                                f"(PERCLAB_MAX_VERTICES)")


def _from_edges(n, edges, tag, params):
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if len(edges) and (edges.min() < 0 or edges.max() >= n):
        raise PreconditionError("edge endpoint out of range")
    if np.any(edges[:, 0] == edges[:, 1]):
        raise PreconditionError("self-loops are not allowed")
    edges = np.sort(edges, axis=1)
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    edges = edges[order]
    if len(edges) > 1 and np.any(np.all(edges[1:] == edges[:-1], axis=1)):
        raise PreconditionError("multi-edges are not allowed")

    m = len(edges)
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    eid = np.concatenate([np.arange(m), np.arange(m)])
    slot_order = np.lexsort((dst, src))
    src, dst, eid = src[slot_order], dst[slot_order], eid[slot_order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])

    if n > 1 and np.any(indptr[1:] == indptr[:-1]):
        raise PreconditionError("graph must be connected (isolated vertex found)")
    g = Graph(vertex_count=n, indptr=indptr, indices=dst, edges=edges,
              slot_edges=eid, family_tag=tag, family_params=params)
    n_comp, _ = connected_components(g.adjacency, directed=False)
    if n_comp != 1:
        raise PreconditionError(f"graph must be connected, found {n_comp} components")
    for arr in (indptr, dst, edges, eid):
        arr.flags.writeable = False
    return g


def build_torus(dims, tag='torus'):
    dims = [int(d) for d in (dims if isinstance(dims, (list, tuple)) else [dims])]
    if not 1 <= len(dims) <= TORUS_MAX_DIMS:
        raise PreconditionError(f"torus needs 1..{TORUS_MAX_DIMS} dimensions, got {len(dims)}")
    if min(dims) < 3:
        raise PreconditionError("torus sides must be >= 3 (smaller sides create multi-edges)")
    n = math.prod(dims)
    _check_cap(n, f"torus{dims}")

    ids = np.arange(n, dtype=np.int64)
    coords = np.array(np.unravel_index(ids, dims))
    blocks = []
    for j, side in enumerate(dims):
        shifted = coords.copy()
        shifted[j] = (shifted[j] + 1) % side
        blocks.append(np.stack([ids, np.ravel_multi_index(shifted, dims)], axis=1))
    return _from_edges(n, np.concatenate(blocks), tag, {'dims': dims})


def build_cycle(n):
    return build_torus([n], tag='cycle')


def tree_ball_size(d, r):
    return 1 + sum(d * (d - 1) ** (j - 1) for j in range(1, r + 1))


def build_tree_ball(d, r):
    d, r = int(d), int(r)
    if d < 3 or r < 1:
        raise PreconditionError("tree ball needs degree >= 3 and radius >= 1")
    # check before allocating anything
    n = tree_ball_size(d, r)
    _check_cap(n, f"tree_ball(d={d}, r={r})")

    level = np.array([0], dtype=np.int64)
    next_id = 1
    edges = []
    for depth in range(1, r + 1):
        parent = np.repeat(level, d if depth == 1 else d - 1)
        child = np.arange(next_id, next_id + len(parent), dtype=np.int64)
        next_id += len(parent)
        edges.append(np.stack([parent, child], axis=1))
        level = child
    return _from_edges(n, np.concatenate(edges), 'tree_ball', {'degree': d, 'radius': r})


def build_lamplighter_segment(length):
    L = int(length)
    if not 1 <= L <= LAMPLIGHTER_MAX_LENGTH:
        raise PreconditionError(f"lamplighter segment length must be in 1..{LAMPLIGHTER_MAX_LENGTH}")
    n = (1 << L) * L
    _check_cap(n, f"lamplighter_segment(L={L})")

    ids = np.arange(n, dtype=np.int64)
    lamps, pos = ids // L, ids % L
    lit = (lamps >> pos) & 1
    toggle_from = ids[lit == 0]
    toggle_to = (lamps[lit == 0] ^ (1 << pos[lit == 0])) * L + pos[lit == 0]
    move_from = ids[pos < L - 1]
    edges = np.concatenate([
        np.stack([toggle_from, toggle_to], axis=1),
        np.stack([move_from, move_from + 1], axis=1),
    ])
    return _from_edges(n, edges, 'lamplighter_segment', {'length': L})


def build_custom(n, edges):
    n = int(n)
    if n < 1:
        raise PreconditionError("custom graph needs at least one vertex")
    _check_cap(n, "custom graph")
    return _from_edges(n, edges, 'custom', {'vertices': n})


def build_graph(family, **params):
    """Dispatch on family tag; used by the experiment runner."""
    if family == 'torus':
        return build_torus(params['dims'])
    if family == 'cycle':
        return build_cycle(int(params['n']))
    if family == 'tree_ball':
        return build_tree_ball(params['degree'], params['radius'])
    if family == 'lamplighter_segment':
        return build_lamplighter_segment(params['length'])
    if family == 'custom':
        return read_edge_list(params['path'])
    raise PreconditionError(f"unknown graph family {family!r}; expected one of {FAMILIES}")


# --- distances and balls ---

def gather_slots(indptr, vertices):
    """CSR slot indices of all neighbours of `vertices`, grouped by vertex."""
    starts = indptr[vertices]
    counts = indptr[vertices + 1] - starts
    if counts.sum() == 0:
        return np.zeros(0, dtype=np.int64)
    exclusive = np.cumsum(counts) - counts
    return np.arange(counts.sum(), dtype=np.int64) + np.repeat(starts - exclusive, counts)


def _check_vertex(g, v):
    if not 0 <= int(v) < g.vertex_count:
        raise PreconditionError(f"vertex {v} out of range for {g.vertex_count} vertices")


def distances_from(g, sources, radius=None):
    """BFS distances from a set of sources; -1 marks vertices beyond `radius`."""
    sources = np.atleast_1d(np.asarray(sources, dtype=np.int64))
    for s in sources:
        _check_vertex(g, s)
    dist = np.full(g.vertex_count, -1, dtype=np.int64)
    dist[sources] = 0
    frontier = np.unique(sources)
    depth = 0
    while len(frontier) and (radius is None or depth < radius):
        nbrs = np.unique(g.indices[gather_slots(g.indptr, frontier)])
        frontier = nbrs[dist[nbrs] < 0]
        depth += 1
        dist[frontier] = depth
    return dist


def graph_distance(g, u, v):
    _check_vertex(g, v)
    return int(distances_from(g, [u])[v])


def ball(g, v, r):
    dist = distances_from(g, [v], radius=int(r))
    return make_domain(g, np.flatnonzero(dist >= 0))


def set_ball(g, vertices, r):
    dist = distances_from(g, vertices, radius=int(r))
    return make_domain(g, np.flatnonzero(dist >= 0))


def neighbors(g, v):
    _check_vertex(g, v)
    return g.neighbors(v).tolist()


def eccentricity(g, v):
    return int(distances_from(g, [v]).max())


def diameter(g):
    return max(eccentricity(g, v) for v in range(g.vertex_count))


# --- interior validity ---

def tree_depth(g, v):
    d = g.family_params['degree']
    v = int(v)
    if v == 0:
        return 0
    depth, first = 1, 1
    size = d
    while v >= first + size:
        first += size
        size *= d - 1
        depth += 1
    return depth


def interior_radius(g, v):
    """
    Largest R such that walks confined to ball(v, R) behave as on the infinite
    target graph. Custom graphs are their own target (infinite radius).
    """
    _check_vertex(g, v)
    tag = g.family_tag
    if tag in ('torus', 'cycle'):
        return (min(g.family_params['dims']) - 1) // 2
    if tag == 'tree_ball':
        return g.family_params['radius'] - 1 - tree_depth(g, v)
    if tag == 'lamplighter_segment':
        L = g.family_params['length']
        pos = int(v) % L
        return min(pos - 1, L - 2 - pos)
    return math.inf


def check_interior(g, vertices, steps):
    """Raise ValidityError unless `steps`-step walks from and back to `vertices` stay interior."""
    need = math.ceil(steps / 2)
    vertices = np.atleast_1d(np.asarray(vertices, dtype=np.int64))
    worst = min(interior_radius(g, v) for v in vertices)
    if worst < need:
        raise ValidityError(f"{g.family_tag}: interior radius {worst} < {need} needed for "
                            f"{steps} steps")
    if g.family_tag in ('torus', 'cycle'):
        dims = g.family_params['dims']
        coords = np.array(np.unravel_index(vertices, dims))
        for j, side in enumerate(dims):
            span = int(coords[j].max() - coords[j].min())
            if span + 2 * need >= side:
                raise ValidityError(f"torus side {side} too small for a set of span {span} "
                                    f"and {steps} steps")


def transitive_degree(g):
    """Common degree of the infinite transitive target, or None."""
    if g.family_tag in TRANSITIVE_FAMILIES:
        return 2 * len(g.family_params['dims'])
    if g.family_tag == 'tree_ball':
        return g.family_params['degree']
    return None


def representative_edge(g):
    """One edge per orbit: all edges of the torus / interior tree are equivalent."""
    if g.family_tag == 'tree_ball':
        return 0, 1
    u, v = g.edges[0]
    return int(u), int(v)


def edge_id(g, u, v):
    u, v = (u, v) if u < v else (v, u)
    lo, hi = g.indptr[u], g.indptr[u + 1]
    pos = lo + np.searchsorted(g.indices[lo:hi], v)
    if pos >= hi or g.indices[pos] != v:
        raise PreconditionError(f"({u}, {v}) is not an edge")
    return int(g.slot_edges[pos])


# --- edge-list format ---

def format_edge_list(g):
    lines = [f"vertices {g.vertex_count}"]
    lines.extend(f"{u} {v}" for u, v in g.edges.tolist())
    return "\n".join(lines) + "\n"


def write_edge_list(g, path):
    with open(path, 'w') as f:
        f.write(format_edge_list(g))


def parse_edge_list(text):
    lines = [line.split() for line in text.splitlines() if line.strip()]
    if not lines or len(lines[0]) != 2 or lines[0][0] != 'vertices':
        raise SpecError("edge list must start with 'vertices <n>'")
    try:
        n = int(lines[0][1])
        edges = [tuple(int(x) for x in line) for line in lines[1:]]
    except ValueError as e:
        raise SpecError(f"edge list ids must be integers: {e}") from e
    if any(len(e) != 2 for e in edges):
        raise SpecError("every edge line must hold exactly two ids")
    return build_custom(n, edges)


def read_edge_list(path):
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise SpecError(f"cannot read edge list {path}: {e}") from e
    return parse_edge_list(text)
