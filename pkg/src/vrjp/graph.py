"""Weighted graphs, exhaustions V_1 subset V_2 subset ..., and wired subgraphs.

Vertices are dense integer ids 0..n-1 with a designated root.  Wiring a
finite vertex set V_n produces the graph on V_n plus one extra boundary
vertex (index ``len(V_n)``, exposed as ``WiredGraph.delta``) that absorbs
every edge leaving V_n with summed conductances.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import GraphError


@dataclass(frozen=True)
class WeightedGraph:
    """Finite weighted graph; immutable after construction."""

    num_vertices: int
    root: int
    adjacency: tuple  # adjacency[x] = ((neighbor, conductance), ...)
    family: str = "explicit"
    coords: tuple = ()  # per-vertex labels for generated families

    def neighbors(self, x: int):
        return self.adjacency[x]

    def conductance(self, x: int, y: int) -> float:
        for z, c in self.adjacency[x]:
            if z == y:
                return c
        return 0.0

    def weighted_degree(self, x: int) -> float:
        return sum(c for _, c in self.adjacency[x])

    def edges(self):
        """Yield (x, y, c) with x < y, each undirected edge once."""
        for x in range(self.num_vertices):
            for y, c in self.adjacency[x]:
                if y > x:
                    yield x, y, c

    def num_edges(self) -> int:
        return sum(1 for _ in self.edges())

    def conductance_matrix(self, subset=None) -> np.ndarray:
        """Dense symmetric conductance matrix, restricted to ``subset`` if given."""
        if subset is None:
            subset = range(self.num_vertices)
        idx = {v: i for i, v in enumerate(subset)}
        C = np.zeros((len(idx), len(idx)))
        for v, i in idx.items():
            for w, c in self.adjacency[v]:
                j = idx.get(w)
                if j is not None:
                    C[i, j] = c
        return C

    def is_connected_subset(self, vertices) -> bool:
        vs = set(vertices)
        if not vs:
            return False
        start = next(iter(vs))
        seen = {start}
        stack = [start]
        while stack:
            v = stack.pop()
            for w, _ in self.adjacency[v]:
                if w in vs and w not in seen:
                    seen.add(w)
                    stack.append(w)
        return seen == vs

    def bfs_distances(self, start: int) -> np.ndarray:
        dist = np.full(self.num_vertices, -1, dtype=int)
        dist[start] = 0
        q = deque([start])
        while q:
            v = q.popleft()
            for w, _ in self.adjacency[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    q.append(w)
        return dist


@dataclass(frozen=True)
class Exhaustion:
    """Nested connected vertex sets around the root, levels[0] = V_1."""

    levels: tuple  # tuple of sorted tuples of vertex ids

    def __len__(self):
        return len(self.levels)

    def level(self, n: int):
        """1-based access: level(n) = V_n."""
        if not 1 <= n <= len(self.levels):
            raise GraphError(f"exhaustion level {n} not available (have {len(self.levels)})")
        return self.levels[n - 1]


@dataclass(frozen=True)
class WiredGraph:
    """V_n plus the aggregated boundary vertex at index ``delta`` = len(V_n)."""

    base: WeightedGraph
    vn: tuple  # sorted base ids
    conduct: np.ndarray  # (m+1, m+1) symmetric, last index = delta
    index: dict = field(repr=False)  # base id -> wired index

    @property
    def delta(self) -> int:
        return len(self.vn)

    @property
    def num_states(self) -> int:
        return len(self.vn) + 1

    @property
    def root(self) -> int:
        """Wired index of the base root; raises if the root is outside V_n."""
        if self.base.root not in self.index:
            raise GraphError("base root not contained in the wired vertex set")
        return self.index[self.base.root]

    def to_base(self, wired_index: int):
        return None if wired_index == self.delta else self.vn[wired_index]


def _validated(num_vertices, root, half_edges, family, coords) -> WeightedGraph:
    adjacency = tuple(tuple(sorted(nbrs)) for nbrs in half_edges)
    g = WeightedGraph(num_vertices, root, adjacency, family, coords)
    for x in range(num_vertices):
        for y, c in g.adjacency[x]:
            if x == y:
                raise GraphError(f"self-loop at vertex {x}")
            if not c > 0:
                raise GraphError(f"non-positive conductance {c} on edge ({x},{y})")
            if g.conductance(y, x) != c:
                raise GraphError(f"asymmetric conductance on edge ({x},{y})")
    if num_vertices > 1 and not g.is_connected_subset(range(num_vertices)):
        raise GraphError("graph is not connected")
    if not 0 <= root < num_vertices:
        raise GraphError(f"root {root} out of range")
    return g


def _grid(dim: int, side: int, c: float) -> WeightedGraph:
    if dim < 1 or side < 1:
        raise GraphError("grid needs dim >= 1 and side >= 1")
    shape = (side,) * dim
    n = side**dim
    coords = [np.unravel_index(i, shape) for i in range(n)]
    half = [[] for _ in range(n)]
    for i, pt in enumerate(coords):
        for axis in range(dim):
            if pt[axis] + 1 < side:
                j = np.ravel_multi_index(
                    tuple(p + (1 if a == axis else 0) for a, p in enumerate(pt)), shape
                )
                half[i].append((int(j), c))
                half[int(j)].append((i, c))
    root = int(np.ravel_multi_index((side // 2,) * dim, shape))
    return _validated(n, root, half, "grid", tuple(tuple(int(q) for q in p) for p in coords))


def _tree(branching: int, depth: int, c: float, root_degree=None) -> WeightedGraph:
    if branching < 1 or depth < 0:
        raise GraphError("tree needs branching >= 1 and depth >= 0")
    root_degree = branching if root_degree is None else root_degree
    half = [[]]
    depths = [0]
    frontier = [0]
    for d in range(depth):
        nxt = []
        for parent in frontier:
            kids = root_degree if d == 0 else branching
            for _ in range(kids):
                child = len(half)
                half.append([(parent, c)])
                half[parent].append((child, c))
                depths.append(d + 1)
                nxt.append(child)
        frontier = nxt
    return _validated(len(half), 0, half, "tree", tuple(depths))


def build_graph(spec: dict) -> WeightedGraph:
    """Build a graph from a JSON-style descriptor.

    Families: ``grid`` (dim, side, conductance), ``tree`` (branching, depth,
    conductance, optional root_degree), ``explicit`` (vertices, edges, root).
    """
    family = spec.get("family")
    if family == "grid":
        return _grid(int(spec["dim"]), int(spec["side"]), float(spec.get("conductance", 1.0)))
    if family == "tree":
        return _tree(
            int(spec["branching"]),
            int(spec["depth"]),
            float(spec.get("conductance", 1.0)),
            spec.get("root_degree"),
        )
    if family == "explicit":
        nv = int(spec["vertices"]) if isinstance(spec["vertices"], int) else len(spec["vertices"])
        half = [[] for _ in range(nv)]
        for u, v, c in spec["edges"]:
            u, v, c = int(u), int(v), float(c)
            if not (0 <= u < nv and 0 <= v < nv):
                raise GraphError(f"edge ({u},{v}) references unknown vertex")
            half[u].append((v, c))
            half[v].append((u, c))
        return _validated(nv, int(spec.get("root", 0)), half, "explicit", ())
    raise GraphError(f"unknown graph family {family!r}")


def _grid_ball(graph: WeightedGraph, radius: int):
    """Sup-norm ball around the root (grid family)."""
    center = np.asarray(graph.coords[graph.root])
    out = [
        v
        for v in range(graph.num_vertices)
        if np.max(np.abs(np.asarray(graph.coords[v]) - center)) <= radius
    ]
    return tuple(out)


def exhaustion(graph: WeightedGraph, n_max: int, family: str = "ball") -> Exhaustion:
    """Nested connected vertex sets centered at the root.

    ``ball``: metric balls of radius n (sup-norm on grids, graph distance
    otherwise).  ``slow``: graph-distance balls with half-shell intermediate
    levels, so the volume grows roughly half a shell per level.
    """
    if n_max < 1:
        raise GraphError("n_max must be >= 1")
    dist = graph.bfs_distances(graph.root)
    levels = []
    if family == "ball":
        for r in range(1, n_max + 1):
            if graph.family == "grid":
                lvl = _grid_ball(graph, r)
            else:
                lvl = tuple(int(v) for v in np.nonzero((0 <= dist) & (dist <= r))[0])
            if levels and set(lvl) == set(levels[-1]):
                raise GraphError(f"n_max={n_max} exceeds the available finite graph (stalls at level {r - 1})")
            levels.append(lvl)
    elif family == "slow":
        order = sorted(range(graph.num_vertices), key=lambda v: (dist[v], v))
        ball_size = [int(np.sum((0 <= dist) & (dist <= r))) for r in range(0, int(dist.max()) + 1)]
        for n in range(1, n_max + 1):
            k = n // 2
            if n % 2 == 0:
                if k >= len(ball_size):
                    raise GraphError(f"n_max={n_max} exceeds the available finite graph")
                size = ball_size[k]
            else:
                if k + 1 >= len(ball_size):
                    raise GraphError(f"n_max={n_max} exceeds the available finite graph")
                size = ball_size[k] + -(-(ball_size[k + 1] - ball_size[k]) // 2)
            lvl = tuple(sorted(order[:size]))
            if levels and len(lvl) <= len(levels[-1]):
                raise GraphError(f"exhaustion not strictly increasing at level {n}")
            levels.append(lvl)
    else:
        raise GraphError(f"unknown exhaustion family {family!r}")
    for lvl in levels:
        if graph.root not in lvl:
            raise GraphError("exhaustion level does not contain the root")
        if not graph.is_connected_subset(lvl):
            raise GraphError("exhaustion level induces a disconnected subgraph")
    return Exhaustion(tuple(levels))


def wire(graph: WeightedGraph, vn) -> WiredGraph:
    """Aggregate all edges leaving ``vn`` into the single boundary vertex.

    Rejects empty/disconnected vn and vn with empty boundary (the boundary
    vertex would be isolated and the wired chain not irreducible).
    """
    vn = tuple(sorted(set(int(v) for v in vn)))
    if not vn:
        raise GraphError("V_n is empty")
    for v in vn:
        if not 0 <= v < graph.num_vertices:
            raise GraphError(f"V_n vertex {v} not in the graph")
    if not graph.is_connected_subset(vn):
        raise GraphError("V_n induces a disconnected subgraph")
    m = len(vn)
    index = {v: i for i, v in enumerate(vn)}
    conduct = np.zeros((m + 1, m + 1))
    for v in vn:
        i = index[v]
        for w, c in graph.adjacency[v]:
            j = index.get(w)
            if j is None:
                conduct[i, m] += c
                conduct[m, i] += c
            elif j > i:
                conduct[i, j] = c
                conduct[j, i] = c
    if conduct[m].sum() == 0.0:
        raise GraphError("V_n has empty boundary; wiring would isolate the boundary vertex")
    return WiredGraph(graph, vn, conduct, index)


def wired_subset(wired: WiredGraph, base_ids) -> tuple:
    """Map base vertex ids into wired indices, rejecting ids outside V_n."""
    out = []
    for v in base_ids:
        if v not in wired.index:
            raise GraphError(f"vertex {v} is not contained in the wired vertex set")
        out.append(wired.index[v])
    return tuple(sorted(out))
