"""Mesh and field containers plus the two surface builders.

Torus nodes are stored in C order of an ``(n, n)`` array indexed ``[ix, iy]``;
node ``i`` sits at ``(i // n, i % n) / n`` in the unit periodic square.
"""
from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from ..errors import InvalidArgumentError, MeshMismatchError

PhiSpec = Union[None, float, np.ndarray, Callable[[np.ndarray, np.ndarray], np.ndarray]]


class Backend(str, enum.Enum):
    SPECTRAL_TORUS = "SpectralTorus"
    TRIANGLE_MESH = "TriangleMesh"


def _readonly(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    """A discretized closed surface.

    Use :func:`build_torus` or :func:`build_icosphere` rather than calling the
    constructor directly. Instances are immutable; derived operators (FFT
    symbols, sparse factorizations) are cached lazily in ``_cache``.
    """

    backend: Backend
    nodes: np.ndarray
    area_weights: np.ndarray
    total_area: float
    resolution: int
    mesh_id: str
    conformal_factor: Optional[np.ndarray] = None
    triangles: Optional[np.ndarray] = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def num_nodes(self) -> int:
        return int(self.area_weights.shape[0])

    @property
    def is_torus(self) -> bool:
        return self.backend is Backend.SPECTRAL_TORUS

    @property
    def h(self) -> float:
        """Nominal mesh spacing: grid step (flat units) or mean edge length."""
        if self.is_torus:
            return 1.0 / self.resolution
        if "mean_edge" not in self._cache:
            t = self.triangles
            e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
            d = self.nodes[e[:, 0]] - self.nodes[e[:, 1]]
            self._cache["mean_edge"] = float(np.mean(np.linalg.norm(d, axis=1)))
        return self._cache["mean_edge"]

    def spacing_at(self, node: int) -> float:
        """Metric length of one mesh cell at ``node``."""
        if self.is_torus:
            return float(np.exp(self.conformal_factor[node])) / self.resolution
        return self.h

    def field(self, values) -> "ScalarField":
        return ScalarField(values, self.mesh_id)

    def sample(self, func) -> "ScalarField":
        """Evaluate ``func(x, y)`` (torus) or ``func(X, Y, Z)`` (triangle mesh) at the nodes."""
        vals = func(*self.nodes.T)
        return self.field(np.broadcast_to(np.asarray(vals, dtype=float), (self.num_nodes,)))

    def constant(self, c: float) -> "ScalarField":
        return self.field(np.full(self.num_nodes, float(c)))

    def check(self, f: "ScalarField") -> np.ndarray:
        """Return ``f.values`` after verifying that ``f`` lives on this mesh."""
        if not isinstance(f, ScalarField):
            raise InvalidArgumentError(f"expected ScalarField, got {type(f).__name__}")
        if f.mesh_id != self.mesh_id:
            raise MeshMismatchError(f"field bound to mesh {f.mesh_id}, not {self.mesh_id}")
        return f.values

    def grid(self, f: "ScalarField") -> np.ndarray:
        """Torus only: field values as an ``(n, n)`` view."""
        n = self.resolution
        return self.check(f).reshape(n, n)


@dataclass(frozen=True, eq=False)
class ScalarField:
    values: np.ndarray
    mesh_id: str

    def __post_init__(self):
        v = _readonly(self.values)
        if v.ndim != 1:
            raise InvalidArgumentError("field values must be one-dimensional")
        if not np.all(np.isfinite(v)):
            raise InvalidArgumentError("field values must be finite")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.shape[0]

    def _other(self, other):
        if isinstance(other, ScalarField):
            if other.mesh_id != self.mesh_id:
                raise MeshMismatchError("fields live on different meshes")
            return other.values
        return other

    def with_values(self, values) -> "ScalarField":
        return ScalarField(values, self.mesh_id)

    def __add__(self, other):
        return self.with_values(self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self.with_values(self.values - self._other(other))

    def __rsub__(self, other):
        return self.with_values(self._other(other) - self.values)

    def __mul__(self, other):
        return self.with_values(self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self.with_values(self.values / self._other(other))

    def __neg__(self):
        return self.with_values(-self.values)


def _mesh_hash(*parts) -> str:
    hsh = hashlib.sha256()
    for p in parts:
        hsh.update(p if isinstance(p, bytes) else str(p).encode())
        hsh.update(b"|")
    return hsh.hexdigest()[:16]


def _is_power_of_two(n) -> bool:
    return isinstance(n, (int, np.integer)) and n > 0 and (n & (n - 1)) == 0


def torus_coordinates(n: int):
    x = np.arange(n) / n
    X, Y = np.meshgrid(x, x, indexing="ij")
    return X, Y


def build_torus(n: int, phi_c: PhiSpec = None) -> SurfaceMesh:
    """Periodic unit square with metric ``exp(2 phi_c) (dx^2 + dy^2)``.

    Parameters
    ----------
    n : int
        Grid size, a power of two, at least 16.
    phi_c : callable, array or float, optional
        Conformal factor; a callable is sampled as ``phi_c(x, y)`` on the grid,
        an array must hold ``n * n`` nodal values.
    """
    if not _is_power_of_two(n) or n < 16:
        raise InvalidArgumentError(f"grid size must be a power of two >= 16, got {n!r}")
    n = int(n)
    X, Y = torus_coordinates(n)
    if phi_c is None:
        phi = np.zeros((n, n))
    elif callable(phi_c):
        phi = np.broadcast_to(np.asarray(phi_c(X, Y), dtype=float), (n, n))
    else:
        phi = np.asarray(phi_c, dtype=float)
        phi = np.broadcast_to(phi, (n, n)) if phi.ndim == 0 else phi.reshape(n, n)
    phi = np.ascontiguousarray(phi, dtype=float).ravel()
    if not np.all(np.isfinite(phi)):
        raise InvalidArgumentError("conformal factor must be finite")
    w = np.exp(2.0 * phi) / n**2
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    return SurfaceMesh(
        backend=Backend.SPECTRAL_TORUS,
        nodes=_readonly(nodes),
        area_weights=_readonly(w),
        total_area=float(np.sum(w)),
        resolution=n,
        mesh_id=_mesh_hash("torus", n, phi.tobytes()),
        conformal_factor=_readonly(phi),
    )


_GOLD = (1.0 + 5.0**0.5) / 2.0
_ICO_VERTS = np.array(
    [
        [-1, _GOLD, 0], [1, _GOLD, 0], [-1, -_GOLD, 0], [1, -_GOLD, 0],
        [0, -1, _GOLD], [0, 1, _GOLD], [0, -1, -_GOLD], [0, 1, -_GOLD],
        [_GOLD, 0, -1], [_GOLD, 0, 1], [-_GOLD, 0, -1], [-_GOLD, 0, 1],
    ],
    dtype=float,
)
_ICO_FACES = np.array(
    [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ],
    dtype=np.int64,
)


def _subdivide(verts, faces):
    nv = verts.shape[0]
    edges = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    edges = np.sort(edges, axis=1)
    uniq, inv = np.unique(edges, axis=0, return_inverse=True)
    inv = inv.ravel()
    mids = verts[uniq[:, 0]] + verts[uniq[:, 1]]
    mids /= np.linalg.norm(mids, axis=1, keepdims=True)
    m = faces.shape[0]
    ab, bc, ca = nv + inv[:m], nv + inv[m : 2 * m], nv + inv[2 * m :]
    a, b, c = faces.T
    new_faces = np.concatenate(
        [
            np.column_stack([a, ab, ca]),
            np.column_stack([b, bc, ab]),
            np.column_stack([c, ca, bc]),
            np.column_stack([ab, bc, ca]),
        ]
    )
    return np.vstack([verts, mids]), new_faces


def icosphere_geometry(level: int):
    """Vertices and outward-oriented triangles of a unit icosphere."""
    v = _ICO_VERTS / np.linalg.norm(_ICO_VERTS, axis=1, keepdims=True)
    f = _ICO_FACES.copy()
    # orient outward
    p0, p1, p2 = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    flip = np.einsum("ij,ij->i", np.cross(p1 - p0, p2 - p0), p0) < 0
    f[flip] = f[flip][:, [0, 2, 1]]
    for _ in range(level):
        v, f = _subdivide(v, f)
    return v, f


def lumped_areas(verts, tris):
    p0, p1, p2 = verts[tris[:, 0]], verts[tris[:, 1]], verts[tris[:, 2]]
    area = 0.5 * np.linalg.norm(np.cross(p1 - p0, p2 - p0), axis=1)
    w = np.zeros(verts.shape[0])
    for k in range(3):
        np.add.at(w, tris[:, k], area / 3.0)
    return w, area


def build_icosphere(level: int) -> SurfaceMesh:
    """Unit-sphere triangulation by ``level`` midpoint subdivisions of the icosahedron."""
    if not isinstance(level, (int, np.integer)) or not 2 <= level <= 7:
        raise InvalidArgumentError(f"icosphere level must be an integer in [2, 7], got {level!r}")
    level = int(level)
    v, f = icosphere_geometry(level)
    w, _ = lumped_areas(v, f)
    return SurfaceMesh(
        backend=Backend.TRIANGLE_MESH,
        nodes=_readonly(v),
        area_weights=_readonly(w),
        total_area=float(np.sum(w)),
        resolution=level,
        mesh_id=_mesh_hash("icosphere", level),
        triangles=_readonly(f, dtype=np.int64),
    )


def euler_characteristic(mesh: SurfaceMesh) -> int:
    if mesh.is_torus:
        return 0
    t = mesh.triangles
    e = np.unique(np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1), axis=0)
    return mesh.num_nodes - e.shape[0] + t.shape[0]


def is_closed_manifold(mesh: SurfaceMesh) -> bool:
    """Every undirected edge is shared by exactly two triangles."""
    if mesh.is_torus:
        return True
    t = mesh.triangles
    e = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
    _, counts = np.unique(e, axis=0, return_counts=True)
    return bool(np.all(counts == 2))
