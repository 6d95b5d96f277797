"""Contour trees of piecewise-linear fields on the sphere, with their area measure.

On a genus-0 surface the Reeb graph of a field is a tree and coincides with
the contour tree, which is computed here by the join/split sweep and leaf
pruning merge of Carr, Snoeyink and Axen. Ties in field values are broken
by vertex index, so every discrete field is treated as generic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numba
import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import MalformedTreeError, NonFiniteFieldError
from .mesh import ScalarField

MASS_TOL = 1e-9


@numba.njit(cache=True, nogil=True)
def _find(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        nxt = parent[i]
        parent[i] = root
        i = nxt
    return root


@numba.njit(cache=True, nogil=True)
def _sweep(order, rank, indptr, indices, ascending):
    """Augmented merge tree of sublevel (ascending) or superlevel sets.

    Returns, per vertex, the tree neighbour on the far side of the sweep,
    the number of components merging into it, and the XOR of those
    components' representatives (the child itself when there is only one).
    """
    n = order.shape[0]
    uf = np.arange(n)
    lowest = np.arange(n)
    tparent = np.full(n, -1, np.int64)
    nchild = np.zeros(n, np.int64)
    childxor = np.zeros(n, np.int64)
    for k in range(n):
        v = order[k] if ascending else order[n - 1 - k]
        for j in range(indptr[v], indptr[v + 1]):
            u = indices[j]
            if (rank[u] < rank[v]) == ascending:
                ru = _find(uf, u)
                rv = _find(uf, v)
                if ru != rv:
                    c = lowest[ru]
                    tparent[c] = v
                    nchild[v] += 1
                    childxor[v] ^= c
                    uf[ru] = rv
        lowest[_find(uf, v)] = v
    return tparent, nchild, childxor


@numba.njit(cache=True, nogil=True)
def _is_leaf(v, up_count, down_count):
    return (up_count[v] == 0 and down_count[v] == 1) or (down_count[v] == 0 and up_count[v] == 1)


@numba.njit(cache=True, nogil=True)
def _merge(order, up_d, down_count, xor_d, down_u, up_count, xor_u):
    """Prune leaves of the two merge trees into the augmented contour tree.

    Returns edge endpoint arrays (lower vertex, upper vertex).
    """
    n = order.shape[0]
    lo = np.empty(max(n - 1, 0), np.int64)
    hi = np.empty(max(n - 1, 0), np.int64)
    removed = np.zeros(n, np.bool_)
    queue = np.empty(3 * n + 1, np.int64)
    head = 0
    tail = 0
    for k in range(n):
        v = order[k]
        if _is_leaf(v, up_count, down_count):
            queue[tail] = v
            tail += 1
    ne = 0
    while head < tail and ne < n - 1:
        v = queue[head]
        head += 1
        if removed[v]:
            continue
        if up_count[v] == 0 and down_count[v] == 1:
            w = down_u[v]
            if w < 0:
                continue
            lo[ne] = w
            hi[ne] = v
            ne += 1
            up_count[w] -= 1
            xor_u[w] ^= v
            c = xor_d[v]
            p = up_d[v]
            up_d[c] = p
            if p >= 0:
                xor_d[p] ^= v ^ c
        elif down_count[v] == 0 and up_count[v] == 1:
            w = up_d[v]
            if w < 0:
                continue
            lo[ne] = v
            hi[ne] = w
            ne += 1
            down_count[w] -= 1
            xor_d[w] ^= v
            c = xor_u[v]
            p = down_u[v]
            down_u[c] = p
            if p >= 0:
                xor_u[p] ^= v ^ c
        else:
            continue
        removed[v] = True
        if _is_leaf(w, up_count, down_count):
            queue[tail] = w
            tail += 1
        if _is_leaf(c, up_count, down_count):
            queue[tail] = c
            tail += 1
    return lo[:ne], hi[:ne]


@numba.njit(cache=True, nogil=True)
def _prune(order, lo, hi, mass):
    """Absorb unresolved leaves into their saddle.

    A leaf joined to its saddle by a single mesh-free tree edge (no regular
    vertex in between) is below mesh resolution. It is removed when the
    saddle keeps another branch on the leaf's side; its mass moves to the
    saddle. Returns (edge keep mask, vertex alive mask).
    """
    n = order.shape[0]
    ne = lo.shape[0]
    up_deg = np.zeros(n, np.int64)
    down_deg = np.zeros(n, np.int64)
    nbr_edge = np.full(n, -1, np.int64)
    for e in range(ne):
        up_deg[lo[e]] += 1
        down_deg[hi[e]] += 1
        nbr_edge[lo[e]] = e
        nbr_edge[hi[e]] = e
    keep = np.ones(ne, np.bool_)
    alive = np.ones(n, np.bool_)
    for i in range(n):
        v = order[i]
        if up_deg[v] + down_deg[v] != 1:
            continue
        e = nbr_edge[v]
        if up_deg[v] == 1:
            s = hi[e]
            if down_deg[s] < 2 or up_deg[s] + down_deg[s] < 3:
                continue
            down_deg[s] -= 1
            up_deg[v] = 0
        else:
            s = lo[e]
            if up_deg[s] < 2 or up_deg[s] + down_deg[s] < 3:
                continue
            up_deg[s] -= 1
            down_deg[v] = 0
        keep[e] = False
        alive[v] = False
        mass[s] += mass[v]
        mass[v] = 0.0
    return keep, alive


@numba.njit(cache=True, nogil=True)
def _reduce(order, lo, hi, alive):
    """Collapse regular (one up, one down) vertices of the augmented tree into arcs."""
    n = order.shape[0]
    up_deg = np.zeros(n, np.int64)
    down_deg = np.zeros(n, np.int64)
    for e in range(lo.shape[0]):
        up_deg[lo[e]] += 1
        down_deg[hi[e]] += 1
    up_ptr = np.zeros(n + 1, np.int64)
    for v in range(n):
        up_ptr[v + 1] = up_ptr[v] + up_deg[v]
    fill = up_ptr[:-1].copy()
    up_nbr = np.empty(lo.shape[0], np.int64)
    for e in range(lo.shape[0]):
        up_nbr[fill[lo[e]]] = hi[e]
        fill[lo[e]] += 1
    critical = np.empty(n, np.bool_)
    n_crit = 0
    for v in range(n):
        critical[v] = alive[v] and not (up_deg[v] == 1 and down_deg[v] == 1)
        if critical[v]:
            n_crit += 1
    crit = np.empty(n_crit, np.int64)
    k = 0
    for i in range(n):
        v = order[i]
        if critical[v]:
            crit[k] = v
            k += 1
    n_arcs = max(n_crit - 1, 0)
    arc_lo = np.empty(n_arcs, np.int64)
    arc_hi = np.empty(n_arcs, np.int64)
    arc_ptr = np.zeros(n_arcs + 1, np.int64)
    n_alive = 0
    for v in range(n):
        if alive[v]:
            n_alive += 1
    flat = np.empty(n_alive - n_crit, np.int64)
    a = 0
    f = 0
    for i in range(n_crit):
        c = crit[i]
        for j in range(up_ptr[c], up_ptr[c + 1]):
            u = up_nbr[j]
            while not critical[u]:
                flat[f] = u
                f += 1
                u = up_nbr[up_ptr[u]]
            arc_lo[a] = c
            arc_hi[a] = u
            a += 1
            arc_ptr[a] = f
    return crit, up_deg, down_deg, arc_lo, arc_hi, arc_ptr, flat


@dataclass(frozen=True)
class TreePoint:
    """A point of the tree: a node, or a level inside an arc."""

    level: float
    node: int | None = None
    arc: int | None = None
    breakpoint: int | None = None

    def to_dict(self) -> dict:
        if self.node is not None:
            return {"node": self.node, "level": self.level}
        return {"arc": self.arc, "level": self.level}


@dataclass(frozen=True, eq=False)
class ReebTree:
    """Contour tree with the pushed-forward area measure.

    Mass lives on arc breakpoints (one per regular mesh vertex, at its
    level) and as atoms on nodes (the dual area of the critical vertex).
    Node ids are sorted by (level, vertex index); arcs by (lower, upper).
    """

    node_level: np.ndarray
    node_kind: tuple
    node_atom: np.ndarray
    node_vertex: np.ndarray
    arc_lower: np.ndarray
    arc_upper: np.ndarray
    arc_levels: tuple  # per arc, ascending breakpoint levels
    arc_atoms: tuple  # per arc, mass at each breakpoint
    arc_vertices: tuple | None = None

    @property
    def n_nodes(self) -> int:
        return len(self.node_level)

    @property
    def n_arcs(self) -> int:
        return len(self.arc_lower)

    @cached_property
    def arc_mass(self) -> np.ndarray:
        return np.array([float(a.sum()) for a in self.arc_atoms])

    def arc_profile(self, a: int) -> tuple[np.ndarray, np.ndarray]:
        """Breakpoint levels and cumulative mass from the lower end of arc ``a``."""
        return self.arc_levels[a], np.cumsum(self.arc_atoms[a])

    @property
    def total_mass(self) -> float:
        return float(self.arc_mass.sum() + self.node_atom.sum())

    @cached_property
    def incident(self) -> tuple:
        """For every node, the list of (arc, neighbour node)."""
        adj = [[] for _ in range(self.n_nodes)]
        for a, (lo, hi) in enumerate(zip(self.arc_lower, self.arc_upper)):
            adj[lo].append((a, int(hi)))
            adj[hi].append((a, int(lo)))
        return tuple(tuple(x) for x in adj)

    @property
    def degrees(self) -> np.ndarray:
        return np.array([len(x) for x in self.incident])

    def arcs_crossing(self, t: float) -> int:
        lo = self.node_level[self.arc_lower]
        hi = self.node_level[self.arc_upper]
        return int(np.count_nonzero((lo < t) & (t < hi)))

    def validate(self, mass_tol: float = MASS_TOL) -> None:
        if self.n_nodes - self.n_arcs != 1:
            raise MalformedTreeError(f"{self.n_nodes} nodes but {self.n_arcs} arcs")
        seen = {0}
        stack = [0]
        while stack:
            n = stack.pop()
            for _, m in self.incident[n]:
                if m not in seen:
                    seen.add(m)
                    stack.append(m)
        if len(seen) != self.n_nodes:
            raise MalformedTreeError("tree is not connected")
        if abs(self.total_mass - 1.0) > mass_tol:
            raise MalformedTreeError(f"total mass {self.total_mass} != 1")
        for a in range(self.n_arcs):
            lo = self.node_level[self.arc_lower[a]]
            hi = self.node_level[self.arc_upper[a]]
            lv = self.arc_levels[a]
            if lo > hi:
                raise MalformedTreeError(f"arc {a} runs downwards")
            if len(lv) and (np.any(np.diff(lv) < 0) or lv[0] < lo or lv[-1] > hi):
                raise MalformedTreeError(f"arc {a} breakpoints out of order or range")
            if np.any(self.arc_atoms[a] < 0):
                raise MalformedTreeError(f"arc {a} has negative mass")

    @classmethod
    def from_arcs(cls, node_levels, arcs, node_atoms=None, node_kinds=None) -> "ReebTree":
        """Build a tree from explicit data; ``arcs`` holds (lower, upper, levels, atoms)."""
        node_levels = np.asarray(node_levels, dtype=float)
        k = len(node_levels)
        node_atoms = np.zeros(k) if node_atoms is None else np.asarray(node_atoms, dtype=float)
        deg = np.zeros(k, dtype=int)
        for lo, hi, *_ in arcs:
            deg[lo] += 1
            deg[hi] += 1
        if node_kinds is None:
            up = np.zeros(k, dtype=int)
            for lo, hi, *_ in arcs:
                up[lo] += 1
            node_kinds = tuple(
                "min" if d == 1 and u == 1 else "max" if d == 1 else "saddle" for d, u in zip(deg, up)
            )
        levels, atoms = [], []
        for _, _, lv, at in arcs:
            lv = np.asarray(lv, dtype=float)
            at = np.asarray(at, dtype=float)
            order = np.argsort(lv, kind="stable")
            levels.append(lv[order])
            atoms.append(at[order])
        return cls(
            node_level=node_levels,
            node_kind=tuple(node_kinds),
            node_atom=node_atoms,
            node_vertex=np.full(k, -1),
            arc_lower=np.array([a[0] for a in arcs], dtype=int),
            arc_upper=np.array([a[1] for a in arcs], dtype=int),
            arc_levels=tuple(levels),
            arc_atoms=tuple(atoms),
        )

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {
                    "id": i,
                    "level": float(self.node_level[i]),
                    "kind": self.node_kind[i],
                    "vertex": int(self.node_vertex[i]),
                    "mass": float(self.node_atom[i]),
                }
                for i in range(self.n_nodes)
            ],
            "arcs": [
                {
                    "id": a,
                    "lower": int(self.arc_lower[a]),
                    "upper": int(self.arc_upper[a]),
                    "mass": float(self.arc_mass[a]),
                    "profile": [
                        [float(t), float(c)] for t, c in zip(*self.arc_profile(a))
                    ],
                }
                for a in range(self.n_arcs)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def vertex_order(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Simulation of simplicity: order by (value, vertex index)."""
    order = np.lexsort((np.arange(len(values)), values))
    rank = np.empty_like(order)
    rank[order] = np.arange(len(values))
    return order, rank


def contour_tree_edges(values: np.ndarray, indptr: np.ndarray, indices: np.ndarray):
    """Augmented contour tree edges (lower, upper) over all mesh vertices."""
    order, rank = vertex_order(values)
    up_d, down_count, xor_d = _sweep(order, rank, indptr, indices, True)
    down_u, up_count, xor_u = _sweep(order, rank, indptr, indices, False)
    lo, hi = _merge(order, up_d, down_count, xor_d, down_u, up_count, xor_u)
    if len(lo) != len(values) - 1:
        raise MalformedTreeError(f"merge produced {len(lo)} edges for {len(values)} vertices")
    return order, lo, hi


def build_reeb(f: ScalarField, prune_unresolved: bool = True) -> ReebTree:
    """Contour tree of ``f`` with each vertex's dual area deposited at its level.

    With ``prune_unresolved`` the leaves that no regular mesh vertex
    separates from their saddle are merged into it (see :func:`_prune`);
    the tree then has no zero-width spurious branches. Set it to False to
    get the exact tree of the piecewise-linear field.
    """
    values = np.asarray(f.values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise NonFiniteFieldError("field has non-finite values")
    indptr, indices = f.mesh.adjacency
    order, lo, hi = contour_tree_edges(values, indptr, indices)
    area = f.mesh.dual_areas.copy()
    if prune_unresolved:
        keep, alive = _prune(order, lo, hi, area)
        lo, hi = lo[keep], hi[keep]
    else:
        alive = np.ones(len(values), dtype=np.bool_)
    crit, up_deg, down_deg, arc_lo, arc_hi, arc_ptr, flat = _reduce(order, lo, hi, alive)
    node_of = np.full(len(values), -1, dtype=np.int64)
    node_of[crit] = np.arange(len(crit))
    kinds = tuple(
        "min" if down_deg[v] == 0 else "max" if up_deg[v] == 0 else "saddle" for v in crit
    )
    a_lo = node_of[arc_lo]
    a_hi = node_of[arc_hi]
    arc_order = np.lexsort((a_hi, a_lo))
    chunks = np.split(flat, arc_ptr[1:-1]) if len(arc_ptr) > 1 else []
    verts = tuple(chunks[i] for i in arc_order)
    return ReebTree(
        node_level=values[crit],
        node_kind=kinds,
        node_atom=area[crit],
        node_vertex=crit,
        arc_lower=a_lo[arc_order],
        arc_upper=a_hi[arc_order],
        arc_levels=tuple(values[v] for v in verts),
        arc_atoms=tuple(area[v] for v in verts),
        arc_vertices=verts,
    )


def _components(n: int, rows: np.ndarray, cols: np.ndarray, members: np.ndarray) -> list[np.ndarray]:
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    ncomp, labels = connected_components(graph, directed=False)
    labels = labels[members]
    return [members[labels == c] for c in np.unique(labels)]


def components_at_level(f: ScalarField, t: float, delta: float | None = None) -> list[np.ndarray]:
    """Connected components of the thickened level set {|f - t| <= delta}.

    ``delta`` defaults to the largest field jump across a mesh edge, which
    makes every level-set crossing visible in the vertex graph.
    """
    values = f.values
    e = f.mesh.edges
    if delta is None:
        delta = float(np.abs(values[e[:, 0]] - values[e[:, 1]]).max())
    band = np.abs(values - t) <= delta
    members = np.flatnonzero(band)
    if len(members) == 0:
        return []
    keep = band[e[:, 0]] & band[e[:, 1]]
    comps = _components(len(values), e[keep, 0], e[keep, 1], members)
    return sorted((np.sort(c) for c in comps), key=lambda c: c[0])


def contour_components(f: ScalarField, t: float) -> list[np.ndarray]:
    """Exact components of the piecewise-linear contour {f = t}.

    Crossing edges are linked when they bound a common triangle. Each
    component is reported as the set of endpoints of its crossing edges.
    """
    m = f.mesh
    below = f.values < t
    e = m.edges
    crossing = below[e[:, 0]] != below[e[:, 1]]
    if not crossing.any():
        return []
    edge_id = {(int(a), int(b)): i for i, (a, b) in enumerate(e[crossing])}
    tri = m.triangles
    rows, cols = [], []
    for a, b, c in tri[np.any(below[tri], axis=1) & ~np.all(below[tri], axis=1)]:
        ids = [edge_id.get((min(p, q), max(p, q))) for p, q in ((a, b), (b, c), (c, a))]
        ids = [i for i in ids if i is not None]
        rows.append(ids[0])
        cols.append(ids[1])
    ce = e[crossing]
    comps = _components(len(ce), np.array(rows), np.array(cols), np.arange(len(ce)))
    return sorted((np.unique(ce[c]) for c in comps), key=lambda c: c[0])


def export_dot(tree: ReebTree) -> str:
    lines = ["graph reeb {"]
    for i in range(tree.n_nodes):
        lines.append(
            f'  n{i} [label="{tree.node_kind[i]} {tree.node_level[i]:.6g}\\nmass {tree.node_atom[i]:.3g}"];'
        )
    for a in range(tree.n_arcs):
        lines.append(f'  n{tree.arc_lower[a]} -- n{tree.arc_upper[a]} [label="{tree.arc_mass[a]:.12g}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
