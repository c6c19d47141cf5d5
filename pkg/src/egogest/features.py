"""Per-frame motion features derived from frame-pair homographies.

Two representations are supported:
  raw8          the 8 canonical homography parameters, identity-centered
                by default so that no motion maps to the zero vector
  descriptor16  a geometric decomposition (rotation angles about the
                three camera axes, image-center translation, log scale,
                two perspective terms) concatenated with its first
                temporal difference

World and eye channels can be fused by weighted concatenation with the
eye block first: [alpha_e * eye, alpha_w * world].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DecompositionFailure, LayoutMismatch
from .geometry import (
    EYE_INTRINSICS,
    IDENTITY_PARAM8,
    WORLD_INTRINSICS,
    CameraIntrinsics,
    Homography,
    to_param8,
)

LAYOUT_RAW8 = "raw8"
LAYOUT_DESCRIPTOR16 = "descriptor16"
BASE_LAYOUTS = {LAYOUT_RAW8: 8, LAYOUT_DESCRIPTOR16: 16}

ROTATION_RESIDUAL_TOL = 0.25


@dataclass(frozen=True)
class MotionFeature:
    values: np.ndarray
    layout: str

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("motion feature has non-finite entries")


def raw_features(h: Homography, centered: bool = True) -> MotionFeature:
    """Canonical 8 parameters; identity baseline subtracted when centered."""
    p = to_param8(h)
    if centered:
        p = p - IDENTITY_PARAM8
    return MotionFeature(values=p, layout=LAYOUT_RAW8)


def decompose_param8(params: np.ndarray, intrinsics: CameraIntrinsics,
                     strict: bool = False) -> np.ndarray:
    """Vectorized geometric decomposition of (n, 8) homography parameters.

    Returns (n, 8): [rot_x, rot_y, rot_z, t_u, t_v, log_scale, persp_u,
    persp_v]. Rotation angles come from the polar factor of the
    conjugated matrix K^-1 H K, so they are exact for pure-rotation
    homographies. In strict mode a matrix whose rotation residual
    exceeds ROTATION_RESIDUAL_TOL raises DecompositionFailure; otherwise
    the nearest rotation is used as-is.
    """
    params = np.atleast_2d(np.asarray(params, dtype=np.float64))
    n = len(params)
    m = np.empty((n, 3, 3))
    m[:, 0, 0] = params[:, 0]
    m[:, 0, 1] = params[:, 1]
    m[:, 0, 2] = params[:, 2]
    m[:, 1, 0] = params[:, 3]
    m[:, 1, 1] = params[:, 4]
    m[:, 1, 2] = params[:, 5]
    m[:, 2, 0] = params[:, 6]
    m[:, 2, 1] = params[:, 7]
    m[:, 2, 2] = 1.0

    k = intrinsics.matrix()
    k_inv = intrinsics.inverse_matrix()
    conj = k_inv[None] @ m @ k[None]
    det = np.linalg.det(conj)
    if strict and np.any(det <= 0):
        raise DecompositionFailure("orientation-reversing homography")
    scale3 = np.cbrt(np.maximum(det, 1e-12))
    q = conj / scale3[:, None, None]
    u, _s, vt = np.linalg.svd(q)
    flip = np.sign(np.linalg.det(u @ vt))
    u[:, :, 2] *= flip[:, None]
    rot = u @ vt
    residual = np.sqrt(((q - rot) ** 2).sum(axis=(1, 2)))
    if strict and np.any(residual > ROTATION_RESIDUAL_TOL):
        raise DecompositionFailure(
            f"rotation residual {residual.max():.3g} exceeds {ROTATION_RESIDUAL_TOL}"
        )

    rot_y = -np.arcsin(np.clip(rot[:, 2, 0], -1.0, 1.0))
    rot_x = np.arctan2(rot[:, 2, 1], rot[:, 2, 2])
    rot_z = np.arctan2(rot[:, 1, 0], rot[:, 0, 0])

    # image-center displacement, normalized by the image size
    cx, cy = intrinsics.cx, intrinsics.cy
    w_c = m[:, 2, 0] * cx + m[:, 2, 1] * cy + 1.0
    u_c = (m[:, 0, 0] * cx + m[:, 0, 1] * cy + m[:, 0, 2]) / w_c
    v_c = (m[:, 1, 0] * cx + m[:, 1, 1] * cy + m[:, 1, 2]) / w_c
    t_u = (u_c - cx) / intrinsics.width
    t_v = (v_c - cy) / intrinsics.height

    # log of the local area scale at the image center (Jacobian of the map)
    jac = m[:, :2, :2] / w_c[:, None, None]
    num = np.stack([u_c * w_c, v_c * w_c], axis=1)
    grad_w = m[:, 2, :2]
    jac = jac - num[:, :, None] * grad_w[:, None, :] / (w_c**2)[:, None, None]
    det_j = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    if strict and np.any(det_j <= 0):
        raise DecompositionFailure("orientation-reversing local map")
    log_scale = 0.5 * np.log(np.maximum(det_j, 1e-12))

    persp_u = m[:, 2, 0] * intrinsics.fx
    persp_v = m[:, 2, 1] * intrinsics.fy
    return np.stack(
        [rot_x, rot_y, rot_z, t_u, t_v, log_scale, persp_u, persp_v], axis=1
    )


def descriptor_features(h: Homography, prev: Homography | None,
                        intrinsics: CameraIntrinsics = WORLD_INTRINSICS,
                        strict: bool = False) -> MotionFeature:
    """16-dim decomposition + first temporal difference (zeros without prev)."""
    cur = decompose_param8(to_param8(h)[None, :], intrinsics, strict=strict)[0]
    if prev is None:
        diff = np.zeros(8)
    else:
        prev_d = decompose_param8(to_param8(prev)[None, :], intrinsics, strict=strict)[0]
        diff = cur - prev_d
    return MotionFeature(values=np.concatenate([cur, diff]), layout=LAYOUT_DESCRIPTOR16)


def fuse(world: MotionFeature, eye: MotionFeature,
         alpha_w: float = 1.0, alpha_e: float = 1.0) -> MotionFeature:
    """Weighted concatenation, eye block first: [alpha_e*eye, alpha_w*world]."""
    if world.layout != eye.layout:
        raise LayoutMismatch(
            f"cannot fuse layouts {eye.layout!r} and {world.layout!r}"
        )
    if world.layout not in BASE_LAYOUTS:
        raise LayoutMismatch(f"cannot fuse non-base layout {world.layout!r}")
    values = np.concatenate([alpha_e * eye.values, alpha_w * world.values])
    return MotionFeature(
        values=values,
        layout=f"fused({eye.layout},{world.layout},{alpha_w:g},{alpha_e:g})",
    )


@dataclass(frozen=True)
class FeatureStats:
    mean: np.ndarray
    std: np.ndarray  # floored at 1e-8

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std


def fit_stats(x: np.ndarray) -> FeatureStats:
    """Per-dimension mean/std over rows of a (n, D) training matrix."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or len(x) < 2:
        raise ValueError("need a 2D matrix with at least 2 rows")
    return FeatureStats(mean=x.mean(axis=0), std=np.maximum(x.std(axis=0), 1e-8))


def normalize(feature: MotionFeature, stats: FeatureStats) -> MotionFeature:
    return MotionFeature(values=stats.normalize(feature.values), layout=feature.layout)


def layout_dim(layout: str, channels: str) -> int:
    base = BASE_LAYOUTS[layout]
    return 2 * base if channels == "both" else base


def feature_layout_tag(layout: str, channels: str, alpha_w: float, alpha_e: float) -> str:
    if channels == "both":
        return f"fused({layout},{layout},{alpha_w:g},{alpha_e:g})"
    return layout


def sequence_features(
    seq,
    layout: str = LAYOUT_DESCRIPTOR16,
    channels: str = "both",
    alpha_w: float = 1.0,
    alpha_e: float = 1.0,
    centered: bool = True,
    world_intrinsics: CameraIntrinsics = WORLD_INTRINSICS,
    eye_intrinsics: CameraIntrinsics = EYE_INTRINSICS,
) -> np.ndarray:
    """(L, D) feature matrix for one LabeledSequence."""
    if layout not in BASE_LAYOUTS:
        raise LayoutMismatch(f"unknown feature layout {layout!r}")
    if channels not in ("world", "eye", "both"):
        raise ValueError("channels must be world, eye or both")

    def channel_matrix(p8: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
        if layout == LAYOUT_RAW8:
            return p8 - IDENTITY_PARAM8 if centered else p8.copy()
        desc = decompose_param8(p8, intr)
        diff = np.zeros_like(desc)
        diff[1:] = desc[1:] - desc[:-1]
        return np.hstack([desc, diff])

    if channels == "world":
        return channel_matrix(seq.world_p8, world_intrinsics)
    if channels == "eye":
        return channel_matrix(seq.eye_p8, eye_intrinsics)
    eye = channel_matrix(seq.eye_p8, eye_intrinsics)
    world = channel_matrix(seq.world_p8, world_intrinsics)
    return np.hstack([alpha_e * eye, alpha_w * world])
