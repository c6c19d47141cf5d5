"""Pinhole-camera homographies: construction, estimation, composition.

Conventions used everywhere in this package:
  - Camera frame: X right, Y down, Z forward (optical axis).
  - Rotations compose as R = Rz(rz) @ Ry(ry) @ Rx(rx).
  - A RigidMotion (R, t) maps coordinates of the first view into the
    second view: X2 = R @ X1 + t.
  - For a scene plane {X : n . X = d} in the first view, the induced
    pixel map is H = K (R + t n^T / d) K^-1.
  - Homographies are stored normalized so that m[2, 2] == 1; the eight
    remaining entries (row-major) are the canonical parameter vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateConfiguration, NonPositiveDepth, PointAtInfinity

_DEGENERACY_EPS = 1e-12


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def inverse_matrix(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )


# Working-resolution defaults. The outward-facing camera runs at 192x144
# (~77 deg horizontal FOV); the eye camera at 192x192.
WORLD_INTRINSICS = CameraIntrinsics(fx=120.0, fy=120.0, cx=96.0, cy=72.0, width=192, height=144)
EYE_INTRINSICS = CameraIntrinsics(fx=160.0, fy=160.0, cx=96.0, cy=96.0, width=192, height=192)


def rotation_matrix(rx: float, ry: float, rz: float) -> np.ndarray:
    """Rotation about camera axes, composed Rz @ Ry @ Rx."""
    cx, sx = np.cos(rx), np.sin(rx)
    cy, sy = np.cos(ry), np.sin(ry)
    cz, sz = np.cos(rz), np.sin(rz)
    r_x = np.array([[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]])
    r_y = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    r_z = np.array([[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]])
    return r_z @ r_y @ r_x


@dataclass(frozen=True)
class RigidMotion:
    rx: float = 0.0
    ry: float = 0.0
    rz: float = 0.0
    tx: float = 0.0
    ty: float = 0.0
    tz: float = 0.0

    def rotation(self) -> np.ndarray:
        return rotation_matrix(self.rx, self.ry, self.rz)

    def translation(self) -> np.ndarray:
        return np.array([self.tx, self.ty, self.tz])


@dataclass(frozen=True)
class Correspondence:
    src: tuple[float, float]
    dst: tuple[float, float]

    def __post_init__(self):
        vals = (*self.src, *self.dst)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("correspondence points must be finite")


class Homography:
    """3x3 projective transform, kept normalized with m[2,2] == 1."""

    __slots__ = ("m",)

    def __init__(self, m):
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValueError("homography matrix must be 3x3")
        if not np.all(np.isfinite(m)):
            raise DegenerateConfiguration("non-finite homography entries")
        if abs(m[2, 2]) < _DEGENERACY_EPS:
            raise DegenerateConfiguration("vanishing m22, cannot normalize")
        m = m / m[2, 2]
        if abs(np.linalg.det(m)) < _DEGENERACY_EPS:
            raise DegenerateConfiguration("singular homography")
        self.m = m

    @staticmethod
    def identity() -> "Homography":
        return Homography(np.eye(3))

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.m))

    def __repr__(self):
        return f"Homography({self.m.tolist()!r})"


def homography_from_motion(
    intrinsics: CameraIntrinsics,
    motion: RigidMotion,
    plane_normal=(0.0, 0.0, 1.0),
    plane_depth: float = 1.0,
) -> Homography:
    """Pixel map induced by a camera motion over the plane n . X = d."""
    if plane_depth <= 0:
        raise NonPositiveDepth(f"plane_depth must be > 0, got {plane_depth}")
    n = np.asarray(plane_normal, dtype=np.float64)
    if abs(np.linalg.norm(n) - 1.0) > 1e-9:
        raise ValueError("plane_normal must be unit length")
    k = intrinsics.matrix()
    k_inv = intrinsics.inverse_matrix()
    core = motion.rotation() + np.outer(motion.translation(), n) / plane_depth
    return Homography(k @ core @ k_inv)


def estimate_homography_dlt(correspondences) -> Homography:
    """Least-squares homography from >= 4 point pairs.

    Uses Hartley normalization (centroid to origin, mean distance sqrt(2))
    before solving the stacked linear system by SVD. Exact inputs are
    recovered to machine precision.
    """
    if len(correspondences) < 4:
        raise DegenerateConfiguration("need at least 4 correspondences")
    src = np.array([c.src for c in correspondences], dtype=np.float64)
    dst = np.array([c.dst for c in correspondences], dtype=np.float64)

    t_src, src_n = _hartley_normalize(src)
    t_dst, dst_n = _hartley_normalize(dst)

    n = len(correspondences)
    a = np.zeros((2 * n, 9))
    x, y = src_n[:, 0], src_n[:, 1]
    u, v = dst_n[:, 0], dst_n[:, 1]
    a[0::2, 0] = x
    a[0::2, 1] = y
    a[0::2, 2] = 1.0
    a[0::2, 6] = -u * x
    a[0::2, 7] = -u * y
    a[0::2, 8] = -u
    a[1::2, 3] = x
    a[1::2, 4] = y
    a[1::2, 5] = 1.0
    a[1::2, 6] = -v * x
    a[1::2, 7] = -v * y
    a[1::2, 8] = -v
    _, s, vt = np.linalg.svd(a)
    # An 8-dof solution needs rank 8; collinear sources collapse it.
    if s[7] < 1e-9 * s[0]:
        raise DegenerateConfiguration("design matrix rank-deficient (collinear points?)")
    h_n = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_dst) @ h_n @ t_src
    return Homography(h)


def _hartley_normalize(pts: np.ndarray):
    centroid = pts.mean(axis=0)
    dist = np.sqrt(((pts - centroid) ** 2).sum(axis=1)).mean()
    if dist < _DEGENERACY_EPS:
        raise DegenerateConfiguration("coincident points")
    s = np.sqrt(2.0) / dist
    t = np.array(
        [[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]]
    )
    ones = np.ones((len(pts), 1))
    mapped = (t @ np.hstack([pts, ones]).T).T
    return t, mapped[:, :2]


def to_param8(h: Homography) -> np.ndarray:
    """Row-major read of the 8 non-unit entries of a normalized homography."""
    m = h.m
    return np.array([m[0, 0], m[0, 1], m[0, 2], m[1, 0], m[1, 1], m[1, 2], m[2, 0], m[2, 1]])


def from_param8(p) -> Homography:
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (8,):
        raise ValueError("param8 vector must have length 8")
    m = np.array(
        [[p[0], p[1], p[2]], [p[3], p[4], p[5]], [p[6], p[7], 1.0]]
    )
    return Homography(m)


IDENTITY_PARAM8 = to_param8(Homography.identity())


def compose(h1: Homography, h2: Homography) -> Homography:
    """compose(h1, h2) maps points as h1 after h2 (matrix product h1 @ h2)."""
    return Homography(h1.m @ h2.m)


def apply(h: Homography, point) -> np.ndarray:
    """Apply a homography to a 2D pixel, with projective division."""
    x, y = float(point[0]), float(point[1])
    v = h.m @ np.array([x, y, 1.0])
    if abs(v[2]) < _DEGENERACY_EPS:
        raise PointAtInfinity(f"point {point} maps to infinity")
    return v[:2] / v[2]


def apply_many(h: Homography, points: np.ndarray) -> np.ndarray:
    """Vectorized apply for an (n, 2) array of pixels."""
    pts = np.asarray(points, dtype=np.float64)
    ones = np.ones((len(pts), 1))
    v = (h.m @ np.hstack([pts, ones]).T).T
    w = v[:, 2]
    if np.any(np.abs(w) < _DEGENERACY_EPS):
        raise PointAtInfinity("some points map to infinity")
    return v[:, :2] / w[:, None]


def rotation_angle_of(h: Homography, intrinsics: CameraIntrinsics) -> float:
    """Total rotation angle encoded by a (near) pure-rotation homography."""
    m = intrinsics.inverse_matrix() @ h.m @ intrinsics.matrix()
    det = np.linalg.det(m)
    if det <= 0:
        raise DegenerateConfiguration("homography does not embed a rotation")
    r = m / np.cbrt(det)
    c = (np.trace(r) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))
