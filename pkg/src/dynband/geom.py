"""Pinhole camera, SE(3) poses and closed-form rigid alignment."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateConfiguration, InvalidParams, NonPositiveDepth, TooFewPoints

QUAT_NORM_TOL = 1e-9


@dataclass(frozen=True)
class PinholeIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    depth_scale: float = 5000.0

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0 and self.depth_scale > 0):
            raise InvalidParams("fx, fy and depth_scale must be positive")
        if not (math.isfinite(self.cx) and math.isfinite(self.cy)):
            raise InvalidParams("principal point must be finite")

    @classmethod
    def tum_default(cls):
        """Nominal ROS default intrinsics shipped with the TUM RGB-D sequences."""
        return cls(525.0, 525.0, 319.5, 239.5, 5000.0)

    def to_dict(self):
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "depth_scale": self.depth_scale}


def backproject(u, v, z, k):
    """Lift pixel ``(u, v)`` at metric depth ``z`` into the camera frame."""
    if not z > 0:
        raise NonPositiveDepth(f"depth must be positive, got {z}")
    return np.array([(u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z])


def backproject_many(uv, z, k):
    uv = np.asarray(uv, dtype=float).reshape(-1, 2)
    z = np.asarray(z, dtype=float).reshape(-1)
    if np.any(~(z > 0)):
        raise NonPositiveDepth("all depths must be positive")
    x = (uv[:, 0] - k.cx) * z / k.fx
    y = (uv[:, 1] - k.cy) * z / k.fy
    return np.stack([x, y, z], axis=1)


def project(p, k):
    """Perspective projection of a camera-frame point; returns ``(u, v, z)``."""
    x, y, z = float(p[0]), float(p[1]), float(p[2])
    if not z > 0:
        raise NonPositiveDepth(f"point behind camera (z={z})")
    return (k.fx * x / z + k.cx, k.fy * y / z + k.cy, z)


def project_many(points, k):
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    z = points[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = k.fx * points[:, 0] / z + k.cx
        v = k.fy * points[:, 1] / z + k.cy
    return u, v, z


# --- quaternions (x, y, z, w) ------------------------------------------------

def _quat_mul(a, b):
    ax, ay, az, aw = a
    bx, by, bz, bw = b
    return np.array([
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
        aw * bw - ax * bx - ay * by - az * bz,
    ])


def quat_to_matrix(q):
    x, y, z, w = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(R):
    """Shepperd's method: branch on the largest diagonal term for stability."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = [(R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s,
             (R[1, 0] - R[0, 1]) / s, 0.25 * s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s,
             (R[2, 1] - R[1, 2]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s,
             (R[0, 2] - R[2, 0]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s,
             (R[1, 0] - R[0, 1]) / s]
    return np.array(q)


def rotation_angle(R):
    """Angle of a rotation matrix, accurate near zero (atan2 form)."""
    R = np.asarray(R, dtype=float)
    s = 0.5 * math.sqrt((R[2, 1] - R[1, 2]) ** 2 + (R[0, 2] - R[2, 0]) ** 2
                        + (R[1, 0] - R[0, 1]) ** 2)
    c = 0.5 * (R[0, 0] + R[1, 1] + R[2, 2] - 1.0)
    return math.atan2(s, c)


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Pose:
    """Rigid transform ``p -> R p + t``; rotation stored as a unit quaternion (x, y, z, w).

    The quaternion is renormalized only when its norm is off by more than
    ``QUAT_NORM_TOL``, so values read back from text files stay bit-exact.
    """

    quat: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.0, 1.0]))
    trans: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        q = np.asarray(self.quat, dtype=float).reshape(4)
        t = np.asarray(self.trans, dtype=float).reshape(3)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(t))):
            raise InvalidParams("pose components must be finite")
        n = math.sqrt(float(q @ q))
        if n == 0.0:
            raise InvalidParams("zero quaternion")
        if abs(n - 1.0) > QUAT_NORM_TOL:
            q = q / n
        object.__setattr__(self, "quat", _frozen(q))
        object.__setattr__(self, "trans", _frozen(t))

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_rt(cls, R, t):
        return cls(matrix_to_quat(R), t)

    @classmethod
    def from_matrix(cls, T):
        T = np.asarray(T, dtype=float)
        return cls(matrix_to_quat(T[:3, :3]), T[:3, 3])

    @property
    def rotation(self):
        return quat_to_matrix(self.quat)

    def matrix(self):
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.trans
        return T

    def __matmul__(self, other):
        if isinstance(other, Pose):
            return pose_compose(self, other)
        return pose_apply(self, other)

    def inverse(self):
        return pose_inverse(self)

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return bool(np.array_equal(self.quat, other.quat) and np.array_equal(self.trans, other.trans))

    def __hash__(self):
        return hash((tuple(self.quat), tuple(self.trans)))

    def __repr__(self):
        return f"Pose(quat={self.quat.tolist()}, trans={self.trans.tolist()})"


def pose_compose(a, b):
    """``a ∘ b``: apply ``b`` first, then ``a``."""
    return Pose(_quat_mul(a.quat, b.quat), a.rotation @ b.trans + a.trans)


def pose_inverse(a):
    q = a.quat
    return Pose(np.array([-q[0], -q[1], -q[2], q[3]]), -(a.rotation.T @ a.trans))


def pose_apply(a, p):
    """Transform one point (shape ``(3,)``) or a stack of points (``(n, 3)``)."""
    p = np.asarray(p, dtype=float)
    if p.ndim == 1:
        return a.rotation @ p + a.trans
    return p @ a.rotation.T + a.trans


# --- rigid alignment ----------------------------------------------------------

def umeyama_align(src, dst, with_scale=False, allow_degenerate=False):
    """Least-squares transform mapping ``src`` onto ``dst``.

    Minimizes ``sum ||dst_i - (s R src_i + t)||^2``. Returns a :class:`Pose`,
    or ``(Pose, s)`` when ``with_scale`` is set.

    With ``allow_degenerate`` a rank-deficient configuration returns one of the
    (equally optimal) minimizers instead of raising; trajectory metrics use
    this for straight-line paths.

    Raises:
        TooFewPoints: fewer than three correspondences.
        DegenerateConfiguration: cross-covariance has rank < 2 (collinear points).
    """
    src = np.asarray(src, dtype=float).reshape(-1, 3)
    dst = np.asarray(dst, dtype=float).reshape(-1, 3)
    if src.shape != dst.shape:
        raise InvalidParams("src and dst must have the same length")
    n = src.shape[0]
    if n < 3:
        raise TooFewPoints(f"need at least 3 points, got {n}")

    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    src_c = src - mu_s
    dst_c = dst - mu_d
    cov = dst_c.T @ src_c / n
    U, D, Vt = np.linalg.svd(cov)
    if not allow_degenerate and (D[0] <= 0.0 or D[1] <= 1e-12 * D[0]):
        raise DegenerateConfiguration("point configuration is collinear or coincident")
    if np.array_equal(src, dst):
        # exact minimizer; the SVD route would leave roundoff in R and t
        return (Pose.identity(), 1.0) if with_scale else Pose.identity()

    S = np.ones(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2] = -1.0
    R = (U * S) @ Vt
    scale = 1.0
    if with_scale:
        var_src = float((src_c ** 2).sum()) / n
        scale = float(D @ S) / var_src if var_src > 0 else 1.0
    t = mu_d - scale * (R @ mu_s)
    pose = Pose.from_rt(R, t)
    return (pose, scale) if with_scale else pose


def rigid_fit_batch(src, dst, eps=1e-12):
    """Rigid (no-scale) Umeyama fit over a batch of point sets.

    ``src``/``dst`` have shape ``(B, n, 3)``. Returns ``(R, t, ok)`` where
    ``ok`` flags fits whose cross-covariance has rank >= 2.
    """
    mu_s = src.mean(axis=1, keepdims=True)
    mu_d = dst.mean(axis=1, keepdims=True)
    cov = np.einsum("bni,bnj->bij", dst - mu_d, src - mu_s) / src.shape[1]
    U, D, Vt = np.linalg.svd(cov)
    ok = (D[:, 0] > 0) & (D[:, 1] > eps * D[:, 0])
    sign = np.sign(np.linalg.det(U) * np.linalg.det(Vt))
    sign[sign == 0] = 1.0
    U = U.copy()
    U[:, :, 2] *= sign[:, None]
    R = U @ Vt
    t = mu_d[:, 0, :] - np.einsum("bij,bj->bi", R, mu_s[:, 0, :])
    return R, t, ok
