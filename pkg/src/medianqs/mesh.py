"""Icosphere discretisation of the unit sphere with a normalised area form."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

from .errors import DomainError, MeshMismatchError
from .expr import Expression, as_expression, evaluate

_PHI = (1.0 + 5.0**0.5) / 2.0

_ICOSA_VERTICES = np.array(
    [
        [-1.0, _PHI, 0.0],
        [1.0, _PHI, 0.0],
        [-1.0, -_PHI, 0.0],
        [1.0, -_PHI, 0.0],
        [0.0, -1.0, _PHI],
        [0.0, 1.0, _PHI],
        [0.0, -1.0, -_PHI],
        [0.0, 1.0, -_PHI],
        [_PHI, 0.0, -1.0],
        [_PHI, 0.0, 1.0],
        [-_PHI, 0.0, -1.0],
        [-_PHI, 0.0, 1.0],
    ]
)

_ICOSA_FACES = np.array(
    [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]
)  # fmt: skip


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def spherical_triangle_areas(v: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Solid angles of spherical triangles (Van Oosterom-Strackee)."""
    a, b, c = v[tri[:, 0]], v[tri[:, 1]], v[tri[:, 2]]
    num = np.abs(np.einsum("ij,ij->i", a, np.cross(b, c)))
    den = 1.0 + np.einsum("ij,ij->i", a, b) + np.einsum("ij,ij->i", b, c) + np.einsum("ij,ij->i", c, a)
    return 2.0 * np.arctan2(num, den)


@dataclass(frozen=True, eq=False)
class SphereMesh:
    vertices: np.ndarray  # (V, 3) unit vectors
    triangles: np.ndarray  # (F, 3) outward oriented
    dual_areas: np.ndarray  # (V,), sums to 1
    subdiv: int

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges as (E, 2) with ``i < j``, sorted."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return _readonly(np.unique(e, axis=0))

    @cached_property
    def adjacency(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR vertex adjacency ``(indptr, indices)``; neighbours sorted."""
        e = self.edges
        src = np.concatenate([e[:, 0], e[:, 1]])
        dst = np.concatenate([e[:, 1], e[:, 0]])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        indptr = np.zeros(self.n_vertices + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=self.n_vertices), out=indptr[1:])
        return _readonly(indptr), _readonly(dst.astype(np.int64))

    @property
    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges) + len(self.triangles)

    @property
    def max_dual_area(self) -> float:
        return float(self.dual_areas.max())

    def to_json(self) -> str:
        return json.dumps(
            {
                "subdiv": self.subdiv,
                "vertices": self.vertices.tolist(),
                "triangles": self.triangles.tolist(),
                "dualAreas": self.dual_areas.tolist(),
            }
        )


def _subdivide(v: np.ndarray, tri: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    e = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    e.sort(axis=1)
    uniq, inv = np.unique(e, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    mid = v[uniq[:, 0]] + v[uniq[:, 1]]
    mid /= np.linalg.norm(mid, axis=1, keepdims=True)
    nf = len(tri)
    m01, m12, m20 = (len(v) + inv[k * nf:(k + 1) * nf] for k in range(3))
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    new = np.concatenate(
        [
            np.stack([a, m01, m20], axis=1),
            np.stack([m01, b, m12], axis=1),
            np.stack([m20, m12, c], axis=1),
            np.stack([m01, m12, m20], axis=1),
        ]
    )
    return np.concatenate([v, mid]), new


@lru_cache(maxsize=16)
def build_icosphere(subdiv: int) -> SphereMesh:
    """Icosahedron subdivided ``subdiv`` times and projected onto the unit sphere.

    Each vertex receives a third of the spherical area of its incident
    triangles; the areas are then rescaled to sum to exactly one.
    """
    if not (0 <= int(subdiv) <= 9):
        raise ValueError(f"subdiv must be in [0, 9], got {subdiv}")
    v = _ICOSA_VERTICES / np.linalg.norm(_ICOSA_VERTICES, axis=1, keepdims=True)
    tri = _ICOSA_FACES.copy()
    # outward orientation: (b-a)x(c-a) points away from the origin
    a, b, c = v[tri[:, 0]], v[tri[:, 1]], v[tri[:, 2]]
    flip = np.einsum("ij,ij->i", np.cross(b - a, c - a), a) < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    for _ in range(int(subdiv)):
        v, tri = _subdivide(v, tri)
    v = v / np.linalg.norm(v, axis=1, keepdims=True)
    area = spherical_triangle_areas(v, tri)
    dual = np.zeros(len(v))
    for k in range(3):
        np.add.at(dual, tri[:, k], area / 3.0)
    dual /= dual.sum()
    return SphereMesh(_readonly(v), _readonly(tri.astype(np.int64)), _readonly(dual), int(subdiv))


@dataclass(frozen=True, eq=False)
class ScalarField:
    mesh: SphereMesh
    values: np.ndarray
    expression: Expression | None = field(default=None)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.mesh.n_vertices,):
            raise ValueError("field length does not match the mesh vertex count")
        object.__setattr__(self, "values", _readonly(values.copy()))

    def _check(self, other: "ScalarField"):
        if other.mesh is not self.mesh:
            raise MeshMismatchError("fields live on different meshes")

    def __add__(self, other):
        if isinstance(other, ScalarField):
            self._check(other)
            return ScalarField(self.mesh, self.values + other.values)
        return ScalarField(self.mesh, self.values + other)

    def __sub__(self, other):
        if isinstance(other, ScalarField):
            self._check(other)
            return ScalarField(self.mesh, self.values - other.values)
        return ScalarField(self.mesh, self.values - other)

    def __mul__(self, other):
        return ScalarField(self.mesh, self.values * other)

    __rmul__ = __mul__


def sample(e, m: SphereMesh) -> ScalarField:
    e = as_expression(e)
    values = evaluate(e, m.vertices)
    if not np.all(np.isfinite(values)):
        raise DomainError(f"{e} is not finite on the sphere")
    return ScalarField(m, values, e)


def _pairwise_sum(a: np.ndarray) -> float:
    # fixed-order pairwise reduction, independent of any threading
    a = np.asarray(a, dtype=float)
    while len(a) > 1:
        if len(a) % 2:
            a = np.append(a, 0.0)
        a = a[0::2] + a[1::2]
    return float(a[0]) if len(a) else 0.0


def mean(f: ScalarField) -> float:
    return _pairwise_sum(f.values * f.mesh.dual_areas)


def uniform_norm(f: ScalarField) -> float:
    return float(np.abs(f.values).max())


def oscillation(f1: ScalarField, f2: ScalarField) -> float:
    if f1.mesh is not f2.mesh:
        raise MeshMismatchError("fields live on different meshes")
    return min(uniform_norm(f1 - mean(f1)), uniform_norm(f2 - mean(f2)))
