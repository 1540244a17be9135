"""Rigid-body poses and closest-point queries on triangle meshes.

Conventions
-----------
A pose is the 6-vector ``(x, y, z, phi, theta, psi)``: translation in meters
followed by intrinsic Z-Y-X Euler angles in radians (``psi`` yaw about z,
``theta`` pitch about y, ``phi`` roll about x).  The body rotation is::

    R = Rz(psi) @ Ry(theta) @ Rx(phi)

This is the single rotation convention of the whole package; every module
goes through :func:`rotation_matrices`.  Canonical angle ranges are
``theta in [-pi/2, pi/2]`` and ``phi, psi in (-pi, pi]``; canonicalization is
applied only when poses are reported, never inside estimation loops.

Meshes are indexed triangle soups in object-frame meters.  `TriMesh` builds
an axis-aligned bounding-box tree at construction and is immutable
afterwards, so instances can be shared freely across threads and processes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyMeshError

__all__ = [
    "EULER_CONVENTION",
    "Pose",
    "ClosestPointResult",
    "TriMesh",
    "Bvh",
    "build_bvh",
    "rotation_matrices",
    "euler_from_matrix",
    "pose_to_transform",
    "transform_point_into_object_frame",
    "points_into_object_frame",
    "points_to_world_frame",
    "closest_point_on_mesh",
    "closest_point_on_triangles",
    "load_obj",
    "save_obj",
    "box_mesh",
    "tetrahedron_mesh",
]

logger = logging.getLogger(__name__)

EULER_CONVENTION = "intrinsic z-y-x (yaw psi, pitch theta, roll phi)"

# Pairwise point-triangle evaluations per chunk in batched brute-force
# queries; bounds peak memory, does not change results.
_PAIR_BUDGET = 4_000_000

# Meshes at or below this face count answer batched queries by vectorized
# brute force; larger meshes fall back to per-query BVH traversal.
_BRUTE_FACE_LIMIT = 4096


def rotation_matrices(poses: np.ndarray) -> np.ndarray:
    """Rotation matrices for one pose or a batch of poses.

    Parameters
    ----------
    poses : array, shape (..., 6)

    Returns
    -------
    array, shape (..., 3, 3) with R = Rz(psi) @ Ry(theta) @ Rx(phi).
    """
    poses = np.asarray(poses, dtype=float)
    phi = poses[..., 3]
    theta = poses[..., 4]
    psi = poses[..., 5]
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(psi), np.sin(psi)
    R = np.empty(poses.shape[:-1] + (3, 3), dtype=float)
    R[..., 0, 0] = cp * ct
    R[..., 0, 1] = cp * st * sf - sp * cf
    R[..., 0, 2] = cp * st * cf + sp * sf
    R[..., 1, 0] = sp * ct
    R[..., 1, 1] = sp * st * sf + cp * cf
    R[..., 1, 2] = sp * st * cf - cp * sf
    R[..., 2, 0] = -st
    R[..., 2, 1] = ct * sf
    R[..., 2, 2] = ct * cf
    return R


def euler_from_matrix(R: np.ndarray) -> tuple[float, float, float]:
    """Recover ``(phi, theta, psi)`` from a rotation matrix.

    Returns canonical angles: theta in [-pi/2, pi/2], phi and psi in
    (-pi, pi].  At the gimbal singularity (|cos theta| ~ 0) phi is set to 0
    and the remaining freedom is absorbed by psi.
    """
    R = np.asarray(R, dtype=float)
    st = float(np.clip(-R[2, 0], -1.0, 1.0))
    theta = float(np.arcsin(st))
    if abs(st) > 1.0 - 1e-12:
        phi = 0.0
        psi = float(np.arctan2(-R[0, 1], R[1, 1]))
    else:
        phi = float(np.arctan2(R[2, 1], R[2, 2]))
        psi = float(np.arctan2(R[1, 0], R[0, 0]))
    return _halfopen(phi), theta, _halfopen(psi)


def _halfopen(angle: float) -> float:
    # atan2 yields [-pi, pi]; fold -pi onto +pi for the (-pi, pi] range.
    if angle <= -np.pi:
        return angle + 2.0 * np.pi
    return angle


@dataclass(frozen=True)
class Pose:
    """Position plus intrinsic Z-Y-X Euler angles (see module docstring)."""

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    phi: float = 0.0
    theta: float = 0.0
    psi: float = 0.0

    @classmethod
    def from_array(cls, v) -> "Pose":
        v = np.asarray(v, dtype=float).reshape(6)
        return cls(*(float(c) for c in v))

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.phi, self.theta, self.psi])

    def translation(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def rotation(self) -> np.ndarray:
        return rotation_matrices(self.to_array())

    def transform(self) -> np.ndarray:
        return pose_to_transform(self)

    def canonical(self) -> "Pose":
        """Same rigid placement with angles in their canonical ranges."""
        phi, theta, psi = euler_from_matrix(self.rotation())
        return Pose(self.x, self.y, self.z, phi, theta, psi)


def pose_to_transform(pose) -> np.ndarray:
    """Homogeneous 4x4 object-to-world transform for a pose."""
    v = pose.to_array() if isinstance(pose, Pose) else np.asarray(pose, dtype=float)
    T = np.eye(4)
    T[:3, :3] = rotation_matrices(v)
    T[:3, 3] = v[:3]
    return T


def transform_point_into_object_frame(point: np.ndarray, pose) -> np.ndarray:
    """Map a world-frame point into the object frame of ``pose``."""
    v = pose.to_array() if isinstance(pose, Pose) else np.asarray(pose, dtype=float)
    R = rotation_matrices(v)
    return R.T @ (np.asarray(point, dtype=float) - v[:3])


def points_into_object_frame(points: np.ndarray, poses: np.ndarray) -> np.ndarray:
    """World points into the object frames of a pose batch.

    ``points`` has shape (K, 3), ``poses`` shape (B, 6); result is (B, K, 3).
    """
    points = np.asarray(points, dtype=float)
    poses = np.asarray(poses, dtype=float)
    R = rotation_matrices(poses)
    diff = points[None, :, :] - poses[:, None, :3]
    return np.einsum("bji,bkj->bki", R, diff)


def points_to_world_frame(points: np.ndarray, poses: np.ndarray) -> np.ndarray:
    """Object-frame points (B, K, 3) into world frame under poses (B, 6)."""
    points = np.asarray(points, dtype=float)
    poses = np.asarray(poses, dtype=float)
    R = rotation_matrices(poses)
    return np.einsum("bij,bkj->bki", R, points) + poses[:, None, :3]


def closest_point_on_triangles(q, a, b, c):
    """Closest points on triangles ``(a, b, c)`` to query points ``q``.

    All inputs broadcast against each other with a trailing axis of 3.
    Returns ``(points, d2)`` where ``d2`` is the squared distance computed
    from the returned point, so ``sqrt(d2) == |q - point|`` exactly.

    Uses the classic closest-feature classification (vertex, edge, or face
    region of the barycentric plane) and is exact for non-degenerate
    triangles in floating point.
    """
    q = np.asarray(q, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)

    ab = b - a
    ac = c - a
    ap = q - a
    d1 = np.einsum("...i,...i->...", ab, ap)
    d2_ = np.einsum("...i,...i->...", ac, ap)
    bp = q - b
    d3 = np.einsum("...i,...i->...", ab, bp)
    d4 = np.einsum("...i,...i->...", ac, bp)
    cp = q - c
    d5 = np.einsum("...i,...i->...", ab, cp)
    d6 = np.einsum("...i,...i->...", ac, cp)

    vc = d1 * d4 - d3 * d2_
    vb = d5 * d2_ - d1 * d6
    va = d3 * d6 - d5 * d4

    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        denom = np.where(denom != 0.0, denom, 1.0)
        v_in = vb / denom
        w_in = vc / denom
        p = a + ab * v_in[..., None] + ac * w_in[..., None]

        den_ab = d1 - d3
        t_ab = d1 / np.where(den_ab != 0.0, den_ab, 1.0)
        den_ac = d2_ - d6
        t_ac = d2_ / np.where(den_ac != 0.0, den_ac, 1.0)
        den_bc = (d4 - d3) + (d5 - d6)
        t_bc = (d4 - d3) / np.where(den_bc != 0.0, den_bc, 1.0)

    # Overlay regions in reverse priority so the first matching region in
    # the scalar algorithm (A, B, AB, C, AC, BC, interior) wins.
    p = np.where(((va <= 0.0) & (d4 - d3 >= 0.0) & (d5 - d6 >= 0.0))[..., None],
                 b + t_bc[..., None] * (c - b), p)
    p = np.where(((vb <= 0.0) & (d2_ >= 0.0) & (d6 <= 0.0))[..., None],
                 a + t_ac[..., None] * ac, p)
    p = np.where(((d6 >= 0.0) & (d5 <= d6))[..., None], np.broadcast_to(c, p.shape), p)
    p = np.where(((vc <= 0.0) & (d1 >= 0.0) & (d3 <= 0.0))[..., None],
                 a + t_ab[..., None] * ab, p)
    p = np.where(((d3 >= 0.0) & (d4 <= d3))[..., None], np.broadcast_to(b, p.shape), p)
    p = np.where(((d1 <= 0.0) & (d2_ <= 0.0))[..., None], np.broadcast_to(a, p.shape), p)

    diff = q - p
    d2_out = np.einsum("...i,...i->...", diff, diff)
    return p, d2_out


@dataclass(frozen=True)
class ClosestPointResult:
    """Nearest surface point to a query, with its face index."""

    point: np.ndarray
    distance: float
    face_index: int


class Bvh:
    """Flat axis-aligned bounding-box tree over mesh faces.

    Built by median split of face centroids along the longest box axis,
    leaves hold at most ``leaf_size`` faces.  Queries resolve distance ties
    to the lowest face index, matching brute-force ``argmin`` order.
    """

    __slots__ = ("bbox_min", "bbox_max", "left", "right", "start", "count",
                 "order", "leaf_size")

    def __init__(self, bbox_min, bbox_max, left, right, start, count, order,
                 leaf_size):
        self.bbox_min = bbox_min
        self.bbox_max = bbox_max
        self.left = left
        self.right = right
        self.start = start
        self.count = count
        self.order = order
        self.leaf_size = leaf_size

    @property
    def n_nodes(self) -> int:
        return len(self.left)

    def _box_dist2(self, node: int, q: np.ndarray) -> float:
        clamped = np.minimum(np.maximum(q, self.bbox_min[node]), self.bbox_max[node])
        diff = q - clamped
        return float(diff @ diff)

    def query(self, q: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray):
        """Closest point among faces with corner arrays ``a, b, c``.

        Returns ``(point, distance, face_index)``.
        """
        q = np.asarray(q, dtype=float)
        best_d2 = np.inf
        best_face = -1
        best_point = None
        stack = [0]
        while stack:
            node = stack.pop()
            # Prune with a few ulps of slack: a subtree whose box ties the
            # incumbent distance may still hold a lower face index, and the
            # box distance is computed with different roundoff than the face
            # distance.
            if self._box_dist2(node, q) > best_d2 * (1.0 + 1e-12):
                continue
            child = self.left[node]
            if child < 0:
                s = self.start[node]
                ids = self.order[s:s + self.count[node]]
                pts, d2 = closest_point_on_triangles(q[None, :], a[ids], b[ids], c[ids])
                j = int(np.argmin(d2))
                if d2[j] < best_d2 or (d2[j] == best_d2 and ids[j] < best_face):
                    best_d2 = float(d2[j])
                    best_face = int(ids[j])
                    best_point = pts[j]
            else:
                right = self.right[node]
                if self._box_dist2(child, q) <= self._box_dist2(right, q):
                    stack.append(right)
                    stack.append(child)
                else:
                    stack.append(child)
                    stack.append(right)
        return best_point, float(np.sqrt(best_d2)), best_face


def build_bvh(vertices: np.ndarray, faces: np.ndarray, leaf_size: int = 4) -> Bvh:
    """Build a bounding-box tree over ``faces`` (at least one required)."""
    vertices = np.asarray(vertices, dtype=float)
    faces = np.asarray(faces, dtype=np.int64)
    if len(faces) == 0:
        raise EmptyMeshError("cannot build a BVH over zero faces")
    tri = vertices[faces]
    face_min = tri.min(axis=1)
    face_max = tri.max(axis=1)
    centroid = tri.mean(axis=1)

    bbox_min: list[np.ndarray] = []
    bbox_max: list[np.ndarray] = []
    left: list[int] = []
    right: list[int] = []
    start: list[int] = []
    count: list[int] = []
    order: list[int] = []

    def rec(idx: np.ndarray) -> int:
        node = len(left)
        bbox_min.append(face_min[idx].min(axis=0))
        bbox_max.append(face_max[idx].max(axis=0))
        left.append(-1)
        right.append(-1)
        start.append(-1)
        count.append(0)
        if len(idx) <= leaf_size:
            # Leaf faces kept ascending so within-leaf argmin ties pick the
            # lowest face index.
            ordered = np.sort(idx)
            start[node] = len(order)
            count[node] = len(ordered)
            order.extend(int(i) for i in ordered)
        else:
            extent = bbox_max[node] - bbox_min[node]
            axis = int(np.argmax(extent))
            ordered = idx[np.argsort(centroid[idx, axis], kind="stable")]
            mid = len(ordered) // 2
            left[node] = rec(ordered[:mid])
            right[node] = rec(ordered[mid:])
        return node

    rec(np.arange(len(faces)))
    return Bvh(
        np.asarray(bbox_min), np.asarray(bbox_max),
        np.asarray(left, dtype=np.int64), np.asarray(right, dtype=np.int64),
        np.asarray(start, dtype=np.int64), np.asarray(count, dtype=np.int64),
        np.asarray(order, dtype=np.int64), leaf_size,
    )


class TriMesh:
    """Indexed triangle mesh with a BVH for closest-point queries.

    Zero-area faces (repeated vertex indices or collinear corners) are
    dropped at construction with a warning; at least one usable face must
    remain.  All arrays are read-only after construction.
    """

    __slots__ = ("vertices", "faces", "bvh", "_a", "_b", "_c")

    def __init__(self, vertices, faces, leaf_size: int = 4):
        vertices = np.ascontiguousarray(np.asarray(vertices, dtype=float))
        faces = np.ascontiguousarray(np.asarray(faces, dtype=np.int64))
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise ValueError("vertices must have shape (V, 3)")
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise ValueError("faces must have shape (F, 3)")
        if faces.size and (faces.min() < 0 or faces.max() >= len(vertices)):
            raise ValueError("face indices out of range")

        keep = self._usable(vertices, faces)
        dropped = int(len(faces) - keep.sum())
        if dropped:
            logger.warning("dropping %d degenerate face(s) at mesh load", dropped)
            faces = faces[keep]
        if len(faces) == 0:
            raise EmptyMeshError("mesh has no non-degenerate faces")

        self.vertices = vertices
        self.faces = faces
        self.vertices.setflags(write=False)
        self.faces.setflags(write=False)
        self._a = np.ascontiguousarray(vertices[faces[:, 0]])
        self._b = np.ascontiguousarray(vertices[faces[:, 1]])
        self._c = np.ascontiguousarray(vertices[faces[:, 2]])
        self.bvh = build_bvh(vertices, faces, leaf_size=leaf_size)

    @staticmethod
    def _usable(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
        if len(faces) == 0:
            return np.zeros(0, dtype=bool)
        distinct = (
            (faces[:, 0] != faces[:, 1])
            & (faces[:, 1] != faces[:, 2])
            & (faces[:, 0] != faces[:, 2])
        )
        a = vertices[faces[:, 0]]
        ab = vertices[faces[:, 1]] - a
        ac = vertices[faces[:, 2]] - a
        cross = np.cross(ab, ac)
        area2 = np.linalg.norm(cross, axis=1)
        scale = np.linalg.norm(ab, axis=1) * np.linalg.norm(ac, axis=1)
        return distinct & (area2 > 1e-14 * np.maximum(scale, 1e-300))

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def closest_point(self, q: np.ndarray) -> ClosestPointResult:
        """Nearest surface point to a single object-frame query point."""
        point, dist, face = self.bvh.query(np.asarray(q, dtype=float),
                                           self._a, self._b, self._c)
        return ClosestPointResult(point=point, distance=dist, face_index=face)

    def closest_points(self, Q: np.ndarray):
        """Batched nearest-point query.

        Parameters
        ----------
        Q : array, shape (M, 3)

        Returns
        -------
        (distances (M,), points (M, 3), face_indices (M,))
        """
        Q = np.asarray(Q, dtype=float)
        if Q.ndim != 2 or Q.shape[1] != 3:
            raise ValueError("queries must have shape (M, 3)")
        if self.n_faces <= _BRUTE_FACE_LIMIT:
            return self._closest_points_brute(Q)
        dists = np.empty(len(Q))
        points = np.empty((len(Q), 3))
        faces = np.empty(len(Q), dtype=np.int64)
        for i, q in enumerate(Q):
            res = self.closest_point(q)
            dists[i] = res.distance
            points[i] = res.point
            faces[i] = res.face_index
        return dists, points, faces

    def _closest_points_brute(self, Q: np.ndarray):
        M = len(Q)
        F = self.n_faces
        chunk = max(1, _PAIR_BUDGET // F)
        dists = np.empty(M)
        points = np.empty((M, 3))
        faces = np.empty(M, dtype=np.int64)
        for s in range(0, M, chunk):
            e = min(M, s + chunk)
            q = Q[s:e, None, :]
            pts, d2 = closest_point_on_triangles(
                q, self._a[None, :, :], self._b[None, :, :], self._c[None, :, :])
            j = np.argmin(d2, axis=1)  # first occurrence: lowest face index
            rows = np.arange(e - s)
            dists[s:e] = np.sqrt(d2[rows, j])
            points[s:e] = pts[rows, j]
            faces[s:e] = j
        return dists, points, faces


def closest_point_on_mesh(mesh: TriMesh, q: np.ndarray) -> ClosestPointResult:
    """Nearest point on ``mesh`` to object-frame query ``q``."""
    return mesh.closest_point(q)


def load_obj(path) -> TriMesh:
    """Load a Wavefront OBJ file (``v``/``f`` records, meters).

    Polygon faces are fan-triangulated; texture and normal indices are
    ignored; negative vertex references resolve relative to the vertices
    seen so far.
    """
    vertices: list[list[float]] = []
    faces: list[tuple[int, int, int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] == "v" and len(parts) >= 4:
                vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif parts[0] == "f" and len(parts) >= 4:
                ids = []
                for token in parts[1:]:
                    idx = int(token.split("/")[0])
                    ids.append(len(vertices) + idx if idx < 0 else idx - 1)
                for t in range(1, len(ids) - 1):
                    faces.append((ids[0], ids[t], ids[t + 1]))
    if not faces:
        raise EmptyMeshError(f"no faces found in {path}")
    return TriMesh(np.asarray(vertices), np.asarray(faces))


def save_obj(mesh: TriMesh, path) -> None:
    """Write a mesh as a minimal OBJ file (9 significant digits)."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


def box_mesh(size_x: float, size_y: float, size_z: float) -> TriMesh:
    """Axis-aligned box centered at the origin, 12 triangles."""
    hx, hy, hz = size_x / 2.0, size_y / 2.0, size_z / 2.0
    v = np.array([
        [-hx, -hy, -hz], [hx, -hy, -hz], [hx, hy, -hz], [-hx, hy, -hz],
        [-hx, -hy, hz], [hx, -hy, hz], [hx, hy, hz], [-hx, hy, hz],
    ])
    f = np.array([
        [0, 3, 2], [0, 2, 1],  # z-
        [4, 5, 6], [4, 6, 7],  # z+
        [0, 1, 5], [0, 5, 4],  # y-
        [2, 3, 7], [2, 7, 6],  # y+
        [0, 4, 7], [0, 7, 3],  # x-
        [1, 2, 6], [1, 6, 5],  # x+
    ])
    return TriMesh(v, f)


def tetrahedron_mesh(base_side: float, height: float) -> TriMesh:
    """Tetrahedron: equilateral base (side ``base_side``) in z=0, apex on +z."""
    r = base_side / np.sqrt(3.0)
    angles = np.deg2rad([90.0, 210.0, 330.0])
    base = np.stack([r * np.cos(angles), r * np.sin(angles), np.zeros(3)], axis=1)
    v = np.vstack([base, [0.0, 0.0, height]])
    f = np.array([[0, 2, 1], [0, 1, 3], [1, 2, 3], [2, 0, 3]])
    return TriMesh(v, f)
