"""SE(3)/se(3) primitives: hat/vee, exponential and logarithm maps, adjoints,
and group distance metrics.

Conventions
-----------
Screw 6-vectors are ordered ``[angular; linear]``: the first three entries are
the rotational part (twist/bending, rad/m for strains, rad/s for velocities),
the last three the translational part (stretch/shear or m/s).  Poses are
rotation-matrix based; the homogeneous form is::

    g = [[R, r],
         [0, 1]]

The big adjoint acts on screws as ``Ad_g = [[R, 0], [skew(r) R, R]]`` and the
small adjoint as ``ad_v = [[skew(w), 0], [skew(u), skew(w)]]`` for
``v = [w; u]``; coadjoints are the corresponding dual blocks.

All operations are pure functions on immutable values; they are safe to call
from any number of threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NotLieAlgebraElement, SingularRotation, ValidationError

# Below this rotation angle the exp/log coefficients switch to a 4th-order
# Taylor series (avoids catastrophic cancellation of the closed forms).
SMALL_ANGLE = 1e-6

# The SE(3) log is undefined at theta = pi; angles inside this band raise.
PI_SINGULARITY_BAND = 1e-9

# Tolerance for the se(3) pattern check in vee() and for Pose validation.
SE3_PATTERN_TOL = 1e-9
POSE_ORTHOGONALITY_TOL = 1e-9


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def _unskew(m: np.ndarray) -> np.ndarray:
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


@dataclass(frozen=True)
class ScrewVector:
    """6-vector with an angular and a linear part.

    Houses strains, velocity fields and wrenches alike; only finiteness is
    required of the entries.
    """

    angular: np.ndarray
    linear: np.ndarray

    def __post_init__(self):
        angular = np.asarray(self.angular, dtype=float).reshape(3)
        linear = np.asarray(self.linear, dtype=float).reshape(3)
        if not (np.all(np.isfinite(angular)) and np.all(np.isfinite(linear))):
            raise ValidationError("ScrewVector entries must be finite")
        object.__setattr__(self, "angular", angular)
        object.__setattr__(self, "linear", linear)

    @classmethod
    def from_vector(cls, v) -> "ScrewVector":
        v = np.asarray(v, dtype=float).reshape(6)
        return cls(v[:3], v[3:])

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.angular, self.linear])


def as_screw_array(v) -> np.ndarray:
    """Coerce a ScrewVector or array-like to a float (6,) array."""
    if isinstance(v, ScrewVector):
        return v.vector
    arr = np.asarray(v, dtype=float).reshape(6)
    return arr


@dataclass(frozen=True)
class Pose:
    """Element of SE(3): one cross-section's frame (rotation + position)."""

    rotation: np.ndarray
    position: np.ndarray

    def __post_init__(self):
        rotation = np.array(self.rotation, dtype=float).reshape(3, 3)
        position = np.array(self.position, dtype=float).reshape(3)
        err = np.abs(rotation.T @ rotation - np.eye(3)).max()
        if err > POSE_ORTHOGONALITY_TOL:
            raise ValidationError(
                f"rotation is not orthogonal (max deviation {err:.3e})"
            )
        det = np.linalg.det(rotation)
        if abs(det - 1.0) > POSE_ORTHOGONALITY_TOL:
            raise ValidationError(f"rotation determinant {det!r} != 1")
        if not np.all(np.isfinite(position)):
            raise ValidationError("position must be finite")
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "position", position)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> "Pose":
        m = np.asarray(m, dtype=float)
        if m.shape != (4, 4):
            raise ValidationError(f"expected 4x4 homogeneous matrix, got {m.shape}")
        if np.abs(m[3] - np.array([0.0, 0.0, 0.0, 1.0])).max() > SE3_PATTERN_TOL:
            raise ValidationError("bottom row must be [0, 0, 0, 1]")
        return cls(m[:3, :3], m[:3, 3])

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.position
        return m

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.position)

    def compose(self, other: "Pose") -> "Pose":
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.position + self.position,
        )

    def __matmul__(self, other: "Pose") -> "Pose":
        return self.compose(other)


def hat(v) -> np.ndarray:
    """se(3) hat: 6-vector to 4x4 matrix (inverse of :func:`vee`)."""
    v = as_screw_array(v)
    m = np.zeros((4, 4))
    m[:3, :3] = _skew(v[:3])
    m[:3, 3] = v[3:]
    return m


def vee(m) -> np.ndarray:
    """se(3) vee: 4x4 matrix to 6-vector.

    Raises NotLieAlgebraElement if the matrix deviates from the se(3)
    pattern (skew-symmetric top-left block, zero bottom row) by more than
    ``SE3_PATTERN_TOL``.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (4, 4):
        raise NotLieAlgebraElement(f"expected 4x4 matrix, got {m.shape}")
    if np.abs(m[3]).max() > SE3_PATTERN_TOL:
        raise NotLieAlgebraElement("bottom row must be zero")
    sym = m[:3, :3] + m[:3, :3].T
    if np.abs(sym).max() > SE3_PATTERN_TOL:
        raise NotLieAlgebraElement("top-left block must be skew-symmetric")
    return np.concatenate([_unskew(m[:3, :3]), m[:3, 3]])


def _rodrigues_coefficients(theta: float) -> tuple[float, float, float]:
    """Coefficients (A, B, C) with R = I + A*S + B*S^2 and V = I + B*S + C*S^2."""
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        t4 = t2 * t2
        a = 1.0 - t2 / 6.0 + t4 / 120.0
        b = 0.5 - t2 / 24.0 + t4 / 720.0
        c = 1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0
    else:
        a = math.sin(theta) / theta
        b = (1.0 - math.cos(theta)) / (theta * theta)
        c = (theta - math.sin(theta)) / (theta * theta * theta)
    return a, b, c


def exp_se3(xi, s: float = 1.0) -> Pose:
    """Exponential map: Pose reached by flowing along the screw ``xi`` for
    an arc length ``s``.

    Closed-form Rodrigues expression with a series switch below
    ``SMALL_ANGLE``; exact for constant screws, so composing two half-steps
    equals one full step.
    """
    if not math.isfinite(s):
        raise ValidationError("arc length s must be finite")
    xi = as_screw_array(xi)
    phi = xi[:3] * s
    u = xi[3:] * s
    theta = math.sqrt(float(phi @ phi))
    a, b, c = _rodrigues_coefficients(theta)
    sk = _skew(phi)
    sk2 = sk @ sk
    rotation = np.eye(3) + a * sk + b * sk2
    v_mat = np.eye(3) + b * sk + c * sk2
    return Pose(rotation, v_mat @ u)


def _log_rotation(rotation: np.ndarray) -> tuple[np.ndarray, float]:
    """Rotation vector and angle from a rotation matrix.

    The angle is theta = arccos((tr(R) - 1) / 2), clamped before arccos.
    Equivalent to the homogeneous-trace form arccos(tr(g)/2 - 1) since
    tr(g) = tr(R) + 1.
    """
    tr = float(np.trace(rotation))
    theta = math.acos(min(1.0, max(-1.0, 0.5 * (tr - 1.0))))
    if theta > math.pi - PI_SINGULARITY_BAND:
        raise SingularRotation(
            f"rotation angle {theta!r} within {PI_SINGULARITY_BAND} of pi"
        )
    w = _unskew(rotation - rotation.T)
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        scale = 0.5 * (1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0)
    else:
        scale = 0.5 * theta / math.sin(theta)
    return scale * w, theta


def log_se3(g: Pose) -> np.ndarray:
    """Logarithm map: screw 6-vector with ``exp_se3(log_se3(g), 1) = g``.

    Raises SingularRotation when the rotation angle is within
    ``PI_SINGULARITY_BAND`` of pi, where the closed form blows up.
    """
    phi, theta = _log_rotation(g.rotation)
    sk = _skew(phi)
    sk2 = sk @ sk
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        c2 = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    else:
        a, b, _ = _rodrigues_coefficients(theta)
        c2 = (1.0 - a / (2.0 * b)) / (theta * theta)
    v_inv = np.eye(3) - 0.5 * sk + c2 * sk2
    return np.concatenate([phi, v_inv @ g.position])


def adjoint_big(g: Pose) -> np.ndarray:
    """Big adjoint Ad_g = [[R, 0], [skew(r) R, R]] acting on screws."""
    ad = np.zeros((6, 6))
    ad[:3, :3] = g.rotation
    ad[3:, 3:] = g.rotation
    ad[3:, :3] = _skew(g.position) @ g.rotation
    return ad


def coadjoint_big(g: Pose) -> np.ndarray:
    """Big coadjoint Ad*_g = [[R, skew(r) R], [0, R]] acting on wrenches."""
    ad = np.zeros((6, 6))
    ad[:3, :3] = g.rotation
    ad[3:, 3:] = g.rotation
    ad[:3, 3:] = _skew(g.position) @ g.rotation
    return ad


def adjoint_small(v) -> np.ndarray:
    """Small adjoint ad_v = [[skew(w), 0], [skew(u), skew(w)]] (Lie bracket)."""
    v = as_screw_array(v)
    ad = np.zeros((6, 6))
    sw = _skew(v[:3])
    ad[:3, :3] = sw
    ad[3:, 3:] = sw
    ad[3:, :3] = _skew(v[3:])
    return ad


def coadjoint_small(v) -> np.ndarray:
    """Small coadjoint ad*_v = [[skew(w), skew(u)], [0, skew(w)]] = -ad_v^T."""
    v = as_screw_array(v)
    ad = np.zeros((6, 6))
    sw = _skew(v[:3])
    ad[:3, :3] = sw
    ad[3:, 3:] = sw
    ad[:3, 3:] = _skew(v[3:])
    return ad


def dist_so3(r1, r2) -> float:
    """Geodesic angle |arccos((tr(R1^T R2) - 1) / 2)| in [0, pi].

    The arccos argument is clamped to [-1, 1] so rotations from measured
    data with 1e-9-level orthogonality violations remain valid inputs.
    """
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    tr = float(np.trace(r1.T @ r2))
    return abs(math.acos(min(1.0, max(-1.0, 0.5 * (tr - 1.0)))))


def dist_se3(g1: Pose, g2: Pose) -> float:
    """2-norm of the relative log, ||log(g1^-1 g2)^vee||_2.

    Propagates SingularRotation when the relative rotation angle is pi.
    """
    return float(np.linalg.norm(log_se3(g1.inverse() @ g2)))


def dexp_inv_factor(x, order: int | None = None) -> np.ndarray:
    """Left-trivialized differential of exp at ``x``: sum_j (-ad_x)^j / (j+1)!.

    This is the 6x6 map T with d/dt exp(X(t)) = exp(X) (T Xdot)^hat.  With
    ``order=None`` the series is summed to machine precision; a finite
    ``order`` truncates after that many powers of ad_x.
    """
    x = as_screw_array(x)
    n = -adjoint_small(x)
    total = np.eye(6)
    term = np.eye(6)
    max_terms = 40 if order is None else order
    for j in range(1, max_terms + 1):
        term = term @ n / (j + 1.0)
        total = total + term
        if order is None and np.abs(term).max() < 1e-17:
            break
    return total
