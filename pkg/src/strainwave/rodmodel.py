"""Physical description of the rod: cross-section properties, stiffness /
damping / inertia matrices, gravity wrench, and the cable/chamber actuation
matrix.

All quantities are SI.  The radius profile is the affine taper
``R(s) = base_radius * (1 + taper * s / L)`` with ``taper in (-1, 0]``, which
covers both a cylinder (taper 0) and a cone.  For a circular section::

    A  = pi R^2         Jy = Jz = pi R^4 / 4        Jx = Jy + Jz

Matrix diagonals (angular block first):

    stiffness  Sigma = diag(G Jx, E Jy, E Jz, E A, G A, G A)
    damping    Psi   = beta * diag(Jx, 3 Jy, 3 Jz, 3 A, A, A)
    inertia    M     = rho  * diag(Jx, Jy, Jz, A, A, A)

with the shear modulus G = E / (2 (1 + nu)).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateTangent, OutOfDomain, ValidationError
from .liealg import Pose, ScrewVector, adjoint_big, as_screw_array

# Tangent norms below this are treated as degenerate actuator paths.
TANGENT_EPS = 1e-12

STRAIGHT_STRESS_FREE = (0.0, 0.0, 0.0, 1.0, 0.0, 0.0)


@dataclass(frozen=True)
class RodProperties:
    """Geometry and material of the rod.

    ``stress_free_strain`` is either a constant 6-tuple or a callable
    ``s -> 6-vector``; the default is the straight, unit-stretch rod.
    """

    length: float
    base_radius: float
    density: float
    young_modulus: float
    poisson_ratio: float
    damping_coeff: float
    taper: float = 0.0
    stress_free_strain: tuple | Callable = STRAIGHT_STRESS_FREE

    def __post_init__(self):
        if not self.length > 0:
            raise ValidationError("rod length must be positive")
        if not self.density > 0:
            raise ValidationError("density must be positive")
        if not self.young_modulus > 0:
            raise ValidationError("Young modulus must be positive")
        if self.damping_coeff < 0:
            raise ValidationError("damping coefficient must be >= 0")
        if not 0.0 <= self.poisson_ratio <= 0.5:
            raise ValidationError("Poisson ratio must be in [0, 0.5]")
        if not -1.0 < self.taper <= 0.0:
            raise ValidationError("taper must be in (-1, 0]")
        if not self.base_radius > 0:
            raise ValidationError("base radius must be positive")
        if isinstance(self.stress_free_strain, (list, np.ndarray)):
            object.__setattr__(
                self, "stress_free_strain", tuple(float(x) for x in self.stress_free_strain)
            )

    @property
    def shear_modulus(self) -> float:
        return self.young_modulus / (2.0 * (1.0 + self.poisson_ratio))

    def radius(self, s) -> np.ndarray | float:
        """Cross-section radius R(s) = base_radius (1 + taper s / L)."""
        return self.base_radius * (1.0 + self.taper * np.asarray(s) / self.length)

    def stress_free(self, s) -> np.ndarray:
        """Stress-free strain at abscissa s as a (6,) array."""
        if callable(self.stress_free_strain):
            return as_screw_array(self.stress_free_strain(s))
        return np.array(self.stress_free_strain, dtype=float)

    def stress_free_on(self, s_grid: np.ndarray) -> np.ndarray:
        """Stress-free strain sampled on a grid, shape (len(s_grid), 6)."""
        s_grid = np.asarray(s_grid, dtype=float)
        if callable(self.stress_free_strain):
            return np.stack([self.stress_free(s) for s in s_grid])
        return np.tile(np.array(self.stress_free_strain), (len(s_grid), 1))


@dataclass(frozen=True)
class ActuatorRouting:
    """Routing of one actuator in the body frame.

    The routing point at abscissa s is
    ``d(s) = offset_radius * [0, cos(phi), sin(phi)]`` with
    ``phi(s) = phase + 2 pi turns s / L``.  ``turns`` is the number of full
    helix revolutions over the rod (0 for longitudinal runs).
    """

    kind: str
    offset_radius: float
    phase: float = 0.0
    turns: float = 0.0

    def __post_init__(self):
        if self.kind not in ("longitudinal", "helicoidal"):
            raise ValidationError(f"unknown actuator kind {self.kind!r}")
        if self.offset_radius < 0:
            raise ValidationError("offset radius must be >= 0")
        if self.kind == "longitudinal" and self.turns != 0.0:
            raise ValidationError("longitudinal actuators have turns = 0")
        if self.kind == "helicoidal" and self.turns == 0.0:
            raise ValidationError("helicoidal actuators need a nonzero turn count")


def check_routing(rod: RodProperties, routing: Sequence[ActuatorRouting]) -> None:
    """Validate that every routing stays inside the rod (offset <= R(s))."""
    # Affine taper <= 0: the minimum radius sits at the tip.
    min_radius = float(rod.radius(rod.length))
    for i, act in enumerate(routing):
        if act.offset_radius > min_radius:
            raise ValidationError(
                f"actuator {i}: offset {act.offset_radius} exceeds the minimum "
                f"cross-section radius {min_radius}"
            )


def _check_domain(rod: RodProperties, s: float) -> float:
    s = float(s)
    slack = 1e-12 * max(1.0, rod.length)
    if s < -slack or s > rod.length + slack:
        raise OutOfDomain(f"s = {s} outside [0, {rod.length}]")
    return min(max(s, 0.0), rod.length)


def cross_section_props(rod: RodProperties, s: float) -> tuple[float, float, float, float]:
    """(A, Jx, Jy, Jz) of the circular section at abscissa s."""
    s = _check_domain(rod, s)
    r = float(rod.radius(s))
    area = np.pi * r * r
    jy = np.pi * r**4 / 4.0
    return area, 2.0 * jy, jy, jy


def section_arrays(rod: RodProperties, s_grid: np.ndarray) -> tuple[np.ndarray, ...]:
    """Vectorized (A, Jx, Jy, Jz) over a grid (no domain check)."""
    r = np.asarray(rod.radius(s_grid), dtype=float)
    area = np.pi * r * r
    jy = np.pi * r**4 / 4.0
    return area, 2.0 * jy, jy, jy


def stiffness_diagonal(rod: RodProperties, s_grid: np.ndarray) -> np.ndarray:
    """Diagonal of Sigma(s) over a grid, shape (n, 6)."""
    area, jx, jy, jz = section_arrays(rod, s_grid)
    e, g = rod.young_modulus, rod.shear_modulus
    return np.stack([g * jx, e * jy, e * jz, e * area, g * area, g * area], axis=-1)


def damping_diagonal(rod: RodProperties, s_grid: np.ndarray) -> np.ndarray:
    """Diagonal of Psi(s) over a grid, shape (n, 6)."""
    area, jx, jy, jz = section_arrays(rod, s_grid)
    b = rod.damping_coeff
    return np.stack(
        [b * jx, 3.0 * b * jy, 3.0 * b * jz, 3.0 * b * area, b * area, b * area], axis=-1
    )


def inertia_diagonal(rod: RodProperties, s_grid: np.ndarray) -> np.ndarray:
    """Diagonal of the inertia matrix over a grid, shape (n, 6)."""
    area, jx, jy, jz = section_arrays(rod, s_grid)
    rho = rod.density
    return np.stack(
        [rho * jx, rho * jy, rho * jz, rho * area, rho * area, rho * area], axis=-1
    )


def stiffness_matrix(rod: RodProperties, s: float) -> np.ndarray:
    """Stiffness Sigma(s) = diag(G Jx, E Jy, E Jz, E A, G A, G A)."""
    s = _check_domain(rod, s)
    return np.diag(stiffness_diagonal(rod, np.array([s]))[0])


def damping_matrix(rod: RodProperties, s: float) -> np.ndarray:
    """Damping Psi(s) = beta diag(Jx, 3 Jy, 3 Jz, 3 A, A, A)."""
    s = _check_domain(rod, s)
    return np.diag(damping_diagonal(rod, np.array([s]))[0])


def inertia_matrix(rod: RodProperties, s: float) -> np.ndarray:
    """Inertia rho diag(Jx, Jy, Jz, A, A, A)."""
    s = _check_domain(rod, s)
    return np.diag(inertia_diagonal(rod, np.array([s]))[0])


def gravity_wrench(rod: RodProperties, g: Pose, s: float, gravity_twist) -> ScrewVector:
    """Distributed gravity wrench M(s) Ad_g^-1 G in the body frame."""
    s = _check_domain(rod, s)
    gravity_twist = as_screw_array(gravity_twist)
    ad_inv = adjoint_big(g.inverse())
    diag = inertia_diagonal(rod, np.array([s]))[0]
    return ScrewVector.from_vector(diag * (ad_inv @ gravity_twist))


def routing_points(
    routing: Sequence[ActuatorRouting], s_grid: np.ndarray, length: float
) -> tuple[np.ndarray, np.ndarray]:
    """Routing points d and derivatives d' on a grid.

    Returns arrays of shape (len(s_grid), n_a, 3).
    """
    s_grid = np.atleast_1d(np.asarray(s_grid, dtype=float))
    n, n_a = len(s_grid), len(routing)
    d = np.zeros((n, n_a, 3))
    dp = np.zeros((n, n_a, 3))
    for a, act in enumerate(routing):
        rate = 2.0 * np.pi * act.turns / length
        phi = act.phase + rate * s_grid
        d[:, a, 1] = act.offset_radius * np.cos(phi)
        d[:, a, 2] = act.offset_radius * np.sin(phi)
        dp[:, a, 1] = -act.offset_radius * rate * np.sin(phi)
        dp[:, a, 2] = act.offset_radius * rate * np.cos(phi)
    return d, dp


def actuation_columns(xi: np.ndarray, d: np.ndarray, dp: np.ndarray) -> np.ndarray:
    """Actuation matrix columns [d x t; t] from strain and routing geometry.

    ``xi`` is the (6,) strain, ``d``/``dp`` the (n_a, 3) routing points and
    their arc-length derivatives.  The cable tangent in the body frame is
    t = (sigma + kappa x d + d') normalized to unit length.
    """
    kappa, sigma = xi[:3], xi[3:]
    path = sigma[None, :] + np.cross(np.broadcast_to(kappa, d.shape), d) + dp
    norms = np.linalg.norm(path, axis=1)
    if np.any(norms < TANGENT_EPS):
        bad = int(np.argmin(norms))
        raise DegenerateTangent(
            f"actuator {bad}: cable tangent norm {norms[bad]:.3e} below {TANGENT_EPS}"
        )
    t = path / norms[:, None]
    moment = np.cross(d, t)
    return np.concatenate([moment, t], axis=1).T  # (6, n_a)


def actuation_matrix(
    rod: RodProperties,
    routing_set: Sequence[ActuatorRouting],
    xi,
    s: float,
) -> np.ndarray:
    """6 x n_a actuation matrix at abscissa s for the given strain.

    Column a is the unit wrench of cable tension a: moment ``d_a x t_a``
    on top of the unit tangent ``t_a``.  Raises DegenerateTangent when the
    cable path direction vanishes.
    """
    s = _check_domain(rod, s)
    xi = as_screw_array(xi)
    d, dp = routing_points(routing_set, np.array([s]), rod.length)
    return actuation_columns(xi, d[0], dp[0])
