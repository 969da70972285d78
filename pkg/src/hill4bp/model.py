"""Hill four-body model and the full equilateral four-body reference model.

The model describes a massless particle near the smallest of three primaries
that sit at the vertices of a rotating equilateral triangle.  Two frames are
supported:

* ``UNROTATED`` -- synodic coordinates centered on the small primary, with the
  quadratic part of the effective potential carrying an ``xy`` cross term,

      Omega = (3/8) x^2 + (3*sqrt(3)/4)(1 - 2 mu) x y + (9/8) y^2 - z^2/2 + 1/r,

* ``ROTATED`` -- the eigenframe of that quadratic form,

      Omega = (lambda2 x^2 + lambda1 y^2 - z^2)/2 + 1/r,

  with lambda1 = (3/2)(1 - d), lambda2 = (3/2)(1 + d), d = sqrt(1 - 3 mu + 3 mu^2).

In both frames the equations of motion are

    xddot - 2 ydot = Omega_x,   yddot + 2 xdot = Omega_y,   zddot = Omega_z,

and the Jacobi constant C = -|v|^2 + 2 Omega is conserved.  At ``mu = 0`` the
rotated model reduces exactly to the classical lunar Hill problem.

The full equilateral restricted four-body field (:class:`R4BPField`) and its
translated/scaled version (:func:`scaled_r4bp_field`) serve as the reference
model: the scaled field converges to the unrotated Hill field at rate
O(m3^(1/3)) as the small mass m3 goes to zero, which is what the convergence
oracle in the test-suite measures.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .errors import DomainError, SingularityError

SQRT3 = math.sqrt(3.0)

__all__ = [
    "Frame",
    "ModelParams",
    "EigenStructure",
    "eigen_structure",
    "PhaseState",
    "GridSpec",
    "HillField",
    "effective_potential",
    "vector_field",
    "jacobi_constant",
    "hill_region_mask",
    "hill_region_to_csv",
    "hill_region_descriptor",
    "rotate_state",
    "R4BPConfig",
    "r4bp_primaries",
    "R4BPField",
    "r4bp_vector_field",
    "r4bp_jacobi_constant",
    "ScaledR4BPField",
    "scaled_r4bp_field",
]


class Frame(Enum):
    UNROTATED = "unrotated"
    ROTATED = "rotated"


@dataclass(frozen=True)
class ModelParams:
    """Mass ratio mu = m2/(m1+m2) in [0, 1/2] plus the working frame."""

    mu: float
    frame: Frame = Frame.ROTATED

    def __post_init__(self):
        if not (0.0 <= self.mu <= 0.5):
            raise DomainError(f"mass ratio mu={self.mu} outside [0, 1/2]")
        if not isinstance(self.frame, Frame):
            object.__setattr__(self, "frame", Frame(self.frame))


@dataclass(frozen=True)
class EigenStructure:
    """Eigen-decomposition of the quadratic form of the unrotated potential.

    ``rotation`` has columns (v2, v1) and maps rotated coordinates to
    unrotated ones.  At ``mu = 1/2`` the printed eigenvector expressions are
    singular and the quadratic form is already diagonal; by convention
    ``rotation`` is then the identity and ``v1``/``v2`` are omitted (``None``).
    """

    mu: float
    d: float
    lambda1: float
    lambda2: float
    v1: Optional[np.ndarray]
    v2: Optional[np.ndarray]
    rotation: np.ndarray
    a_coef: float
    b_coef: float
    c_coef: float


def eigen_structure(mu: float) -> EigenStructure:
    """Closed-form eigenvalues/eigenvectors of the quadratic potential matrix.

    The sign convention keeps the second component of both eigenvectors
    positive for mu in [0, 1/2), which makes the frame change symplectic
    (coefficient a = -v22/v11 = 1).
    """
    if not (0.0 <= mu <= 0.5):
        raise DomainError(f"mass ratio mu={mu} outside [0, 1/2]")
    d = math.sqrt(1.0 - 3.0 * mu + 3.0 * mu * mu)
    lam1 = 1.5 * (1.0 - d)
    lam2 = 1.5 * (1.0 + d)
    a = (1.0 - lam2) / 2.0
    b = (1.0 - lam1) / 2.0
    if mu == 0.5:
        return EigenStructure(mu, d, lam1, lam2, None, None, np.eye(2), a, b, 0.5)
    t1 = (1.0 + 2.0 * d) / (1.0 - 2.0 * mu)
    t2 = (1.0 - 2.0 * d) / (1.0 - 2.0 * mu)
    n1 = math.sqrt(3.0 + t1 * t1)
    n2 = math.sqrt(3.0 + t2 * t2)
    v1 = np.array([(1.0 + 2.0 * d) / ((2.0 * mu - 1.0) * n1), SQRT3 / n1])
    v2 = np.array([(1.0 - 2.0 * d) / ((2.0 * mu - 1.0) * n2), SQRT3 / n2])
    rotation = np.column_stack([v2, v1])
    return EigenStructure(mu, d, lam1, lam2, v1, v2, rotation, a, b, 0.5)


@dataclass(frozen=True)
class PhaseState:
    """Position + velocity in a tagged frame.  The origin is the collision."""

    position: np.ndarray
    velocity: np.ndarray
    frame: Frame = Frame.ROTATED

    def __post_init__(self):
        pos = np.atleast_1d(np.asarray(self.position, dtype=float))
        vel = np.atleast_1d(np.asarray(self.velocity, dtype=float))
        if pos.shape not in ((2,), (3,)) or vel.shape != pos.shape:
            raise DomainError("position/velocity must be matching 2- or 3-vectors")
        if float(np.dot(pos, pos)) == 0.0:
            raise SingularityError("state at the collision singularity (origin)")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "velocity", vel)
        if not isinstance(self.frame, Frame):
            object.__setattr__(self, "frame", Frame(self.frame))

    @property
    def planar(self) -> bool:
        return self.position.shape == (2,)

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.position, self.velocity])

    @classmethod
    def from_array(cls, arr, frame: Frame = Frame.ROTATED) -> "PhaseState":
        arr = np.asarray(arr, dtype=float)
        n = arr.size // 2
        return cls(arr[:n], arr[n:], frame)

    def jacobi(self, params: ModelParams) -> float:
        return jacobi_constant(self.as_array(), params)


@dataclass(frozen=True)
class GridSpec:
    """Rectangular sampling grid for Hill-region masks and section scans."""

    x_range: tuple
    y_range: tuple
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise DomainError("grid needs nx, ny >= 2")
        if not (self.x_range[1] > self.x_range[0] and self.y_range[1] > self.y_range[0]):
            raise DomainError("grid ranges must be nondegenerate")

    def x_values(self) -> np.ndarray:
        return np.linspace(self.x_range[0], self.x_range[1], self.nx)

    def y_values(self) -> np.ndarray:
        return np.linspace(self.y_range[0], self.y_range[1], self.ny)


def _as_state_array(state) -> np.ndarray:
    if isinstance(state, PhaseState):
        return state.as_array()
    return np.asarray(state, dtype=float)


class HillField:
    """Planar/spatial Hill four-body vector field in either frame.

    Instances are callables with the ``(t, state)`` signature expected by the
    propagation layer; ``jacobian`` provides the closed-form variational
    matrix used for state-transition-matrix integration.
    """

    def __init__(self, params: ModelParams):
        self.params = params
        es = eigen_structure(params.mu)
        self.eigen = es
        self.lam1 = es.lambda1
        self.lam2 = es.lambda2
        # quadratic form of the unrotated potential
        self._k = 0.75 * SQRT3 * (1.0 - 2.0 * params.mu)
        self.name = f"hill(mu={params.mu}, frame={params.frame.value})"

    # -- effective potential -------------------------------------------------

    def omega(self, pos) -> float:
        pos = np.asarray(pos, dtype=float)
        x, y = pos[0], pos[1]
        z = pos[2] if pos.size == 3 else 0.0
        r = math.sqrt(x * x + y * y + z * z)
        if r == 0.0:
            raise SingularityError("effective potential is singular at the origin")
        if self.params.frame is Frame.ROTATED:
            quad = 0.5 * (self.lam2 * x * x + self.lam1 * y * y)
        else:
            quad = 0.375 * x * x + self._k * x * y + 1.125 * y * y
        return quad - 0.5 * z * z + 1.0 / r

    def omega_grad(self, pos) -> np.ndarray:
        pos = np.asarray(pos, dtype=float)
        x, y = pos[0], pos[1]
        z = pos[2] if pos.size == 3 else 0.0
        r2 = x * x + y * y + z * z
        if r2 == 0.0:
            raise SingularityError("effective potential is singular at the origin")
        r3 = r2 * math.sqrt(r2)
        if self.params.frame is Frame.ROTATED:
            gx = self.lam2 * x - x / r3
            gy = self.lam1 * y - y / r3
        else:
            gx = 0.75 * x + self._k * y - x / r3
            gy = self._k * x + 2.25 * y - y / r3
        if pos.size == 3:
            return np.array([gx, gy, -z * (1.0 + 1.0 / r3)])
        return np.array([gx, gy])

    def omega_hessian(self, pos) -> np.ndarray:
        pos = np.asarray(pos, dtype=float)
        x, y = pos[0], pos[1]
        z = pos[2] if pos.size == 3 else 0.0
        r2 = x * x + y * y + z * z
        r = math.sqrt(r2)
        r3 = r2 * r
        r5 = r3 * r2
        if self.params.frame is Frame.ROTATED:
            qxx, qyy, qxy = self.lam2, self.lam1, 0.0
        else:
            qxx, qyy, qxy = 0.75, 2.25, self._k
        hxx = qxx + 3.0 * x * x / r5 - 1.0 / r3
        hyy = qyy + 3.0 * y * y / r5 - 1.0 / r3
        hxy = qxy + 3.0 * x * y / r5
        if pos.size == 2:
            return np.array([[hxx, hxy], [hxy, hyy]])
        hzz = -1.0 + 3.0 * z * z / r5 - 1.0 / r3
        hxz = 3.0 * x * z / r5
        hyz = 3.0 * y * z / r5
        return np.array([[hxx, hxy, hxz], [hxy, hyy, hyz], [hxz, hyz, hzz]])

    # -- vector field ----------------------------------------------------------

    def __call__(self, t, s):
        if len(s) == 4:
            x, y, vx, vy = s[0], s[1], s[2], s[3]
            r2 = x * x + y * y
            if r2 == 0.0:
                raise SingularityError("vector field is singular at the origin")
            r3 = r2 * math.sqrt(r2)
            if self.params.frame is Frame.ROTATED:
                gx = self.lam2 * x - x / r3
                gy = self.lam1 * y - y / r3
            else:
                gx = 0.75 * x + self._k * y - x / r3
                gy = self._k * x + 2.25 * y - y / r3
            return [vx, vy, gx + 2.0 * vy, gy - 2.0 * vx]
        x, y, z, vx, vy, vz = s[0], s[1], s[2], s[3], s[4], s[5]
        r2 = x * x + y * y + z * z
        if r2 == 0.0:
            raise SingularityError("vector field is singular at the origin")
        r3 = r2 * math.sqrt(r2)
        if self.params.frame is Frame.ROTATED:
            gx = self.lam2 * x - x / r3
            gy = self.lam1 * y - y / r3
        else:
            gx = 0.75 * x + self._k * y - x / r3
            gy = self._k * x + 2.25 * y - y / r3
        gz = -z * (1.0 + 1.0 / r3)
        return [vx, vy, vz, gx + 2.0 * vy, gy - 2.0 * vx, gz]

    def jacobian(self, t, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if s.size == 4:
            H = self.omega_hessian(s[:2])
            A = np.zeros((4, 4))
            A[0, 2] = A[1, 3] = 1.0
            A[2:, :2] = H
            A[2, 3] = 2.0
            A[3, 2] = -2.0
            return A
        H = self.omega_hessian(s[:3])
        A = np.zeros((6, 6))
        A[:3, 3:] = np.eye(3)
        A[3:, :3] = H
        A[3, 4] = 2.0
        A[4, 3] = -2.0
        return A

    def jacobi(self, state) -> float:
        s = _as_state_array(state)
        n = s.size // 2
        v2 = float(np.dot(s[n:], s[n:]))
        return -v2 + 2.0 * self.omega(s[:n])


def effective_potential(pos, params: ModelParams) -> float:
    """Omega(pos) in the frame carried by ``params``."""
    return HillField(params).omega(pos)


def vector_field(state, params: ModelParams):
    """Time derivative (velocity, acceleration) of a planar or spatial state."""
    s = _as_state_array(state)
    return np.asarray(HillField(params)(0.0, s))


def jacobi_constant(state, params: ModelParams) -> float:
    """C = -|v|^2 + 2 Omega; the Hamiltonian value is h = -C/2."""
    return HillField(params).jacobi(state)


def rotate_state(state, es: EigenStructure, to_frame: Frame) -> np.ndarray:
    """Convert a planar/spatial state array between the two frames.

    ``rotation`` maps rotated coordinates to unrotated ones; its transpose
    goes the other way.  The z components (if present) are untouched.
    """
    s = np.asarray(state, dtype=float).copy()
    R = es.rotation if to_frame is Frame.UNROTATED else es.rotation.T
    n = s.size // 2
    s[:2] = R @ s[:2]
    s[n:n + 2] = R @ s[n:n + 2]
    return s


# ---------------------------------------------------------------------------
# Hill regions
# ---------------------------------------------------------------------------

def hill_region_mask(grid: GridSpec, C: float, params: ModelParams) -> np.ndarray:
    """Boolean mask of shape (ny, nx): True where planar motion is allowed.

    Allowed means 2 Omega(x, y) >= C; grid cells that fall exactly on the
    singularity count as allowed (the potential diverges to +infinity there).
    """
    xs = grid.x_values()
    ys = grid.y_values()
    X, Y = np.meshgrid(xs, ys)
    R = np.hypot(X, Y)
    es = eigen_structure(params.mu)
    if params.frame is Frame.ROTATED:
        quad = 0.5 * (es.lambda2 * X**2 + es.lambda1 * Y**2)
    else:
        k = 0.75 * SQRT3 * (1.0 - 2.0 * params.mu)
        quad = 0.375 * X**2 + k * X * Y + 1.125 * Y**2
    with np.errstate(divide="ignore"):
        omega = quad + np.where(R > 0.0, 1.0 / np.where(R > 0.0, R, 1.0), np.inf)
    return 2.0 * omega >= C


def hill_region_to_csv(grid: GridSpec, mask: np.ndarray, path) -> None:
    """Write the mask as ``x,y,allowed`` rows (x varies fastest)."""
    xs = grid.x_values()
    ys = grid.y_values()
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("x,y,allowed\n")
        for iy, y in enumerate(ys):
            for ix, x in enumerate(xs):
                f.write(f"{x:.17g},{y:.17g},{int(mask[iy, ix])}\n")


def hill_region_descriptor(grid: GridSpec, C: float, params: ModelParams,
                           csv_name: str) -> dict:
    return {
        "kind": "hill-region-mask",
        "csv": csv_name,
        "mu": params.mu,
        "frame": params.frame.value,
        "jacobi": C,
        "x_range": list(grid.x_range),
        "y_range": list(grid.y_range),
        "nx": grid.nx,
        "ny": grid.ny,
        "convention": "allowed iff 2*Omega >= C; boundary and singular cells allowed",
    }


# ---------------------------------------------------------------------------
# Full equilateral four-body reference model
# ---------------------------------------------------------------------------

def r4bp_primaries(m1: float, m2: float, m3: float) -> np.ndarray:
    """Synodic positions (3 x 3 array) of three masses in equilateral configuration.

    Masses must be nonnegative with m2 > 0, sum to 1, and keep
    K = m2 (m3 - m2) + m1 (m2 + 2 m3) nonzero.  The configuration has unit
    side length and its mass-weighted centroid at the origin; with m3 = 0 the
    positions reduce to the classical three-body values
    (-m2, 0), (1 - m2, 0), (1/2 - m2, sqrt(3)/2).
    """
    if m1 < 0 or m2 <= 0 or m3 < 0:
        raise DomainError("masses must be positive (m3 may be zero)")
    if abs(m1 + m2 + m3 - 1.0) > 1e-12:
        raise DomainError("masses must sum to 1")
    K = m2 * (m3 - m2) + m1 * (m2 + 2.0 * m3)
    if K == 0.0:
        raise DomainError("degenerate configuration: K = 0")
    q = math.sqrt(m2 * m2 + m2 * m3 + m3 * m3)
    sK = math.copysign(1.0, K)
    x1 = -sK * q
    x2 = sK * ((m2 - m3) * m3 + m1 * (2.0 * m2 + m3)) / (2.0 * q)
    y2 = -SQRT3 * m3 / (2.0 * m2 ** 1.5) * math.sqrt(m2 ** 3 / (q * q))
    x3 = abs(K) / (2.0 * q)
    y3 = SQRT3 / (2.0 * math.sqrt(m2)) * math.sqrt(m2 ** 3 / (q * q))
    return np.array([[x1, 0.0, 0.0], [x2, y2, 0.0], [x3, y3, 0.0]])


@dataclass(frozen=True)
class R4BPConfig:
    """Masses and equilateral primary positions of the full four-body problem."""

    m1: float
    m2: float
    m3: float
    primaries: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.primaries is None:
            object.__setattr__(self, "primaries", r4bp_primaries(self.m1, self.m2, self.m3))
        P = self.primaries
        for i, j in ((0, 1), (0, 2), (1, 2)):
            dij = float(np.linalg.norm(P[i] - P[j]))
            if abs(dij - 1.0) > 1e-12:
                raise DomainError(f"primaries {i},{j} are {dij}, not unit distance apart")
        com = self.m1 * P[0] + self.m2 * P[1] + self.m3 * P[2]
        if float(np.linalg.norm(com)) > 1e-12:
            raise DomainError("primaries' center of mass is not at the origin")

    @property
    def masses(self):
        return (self.m1, self.m2, self.m3)


class R4BPField:
    """Synodic-frame equations of motion of the equilateral four-body problem."""

    _BODY = ("primary", "secondary", "tertiary")

    def __init__(self, config: R4BPConfig):
        self.config = config
        self.name = f"r4bp(m1={config.m1}, m2={config.m2}, m3={config.m3})"

    def omega(self, pos) -> float:
        pos = np.asarray(pos, dtype=float)
        x, y = pos[0], pos[1]
        z = pos[2] if pos.size == 3 else 0.0
        out = 0.5 * (x * x + y * y)
        for m, p, label in zip(self.config.masses, self.config.primaries, self._BODY):
            if m == 0.0:
                continue
            ri = math.sqrt((x - p[0]) ** 2 + (y - p[1]) ** 2 + z * z)
            if ri == 0.0:
                raise SingularityError(f"collision with the {label}")
            out += m / ri
        return out

    def omega_grad(self, pos) -> np.ndarray:
        pos = np.asarray(pos, dtype=float)
        x, y = pos[0], pos[1]
        z = pos[2] if pos.size == 3 else 0.0
        gx, gy, gz = x, y, 0.0
        for m, p, label in zip(self.config.masses, self.config.primaries, self._BODY):
            if m == 0.0:
                continue
            dx, dy = x - p[0], y - p[1]
            r2 = dx * dx + dy * dy + z * z
            if r2 == 0.0:
                raise SingularityError(f"collision with the {label}")
            r3 = r2 * math.sqrt(r2)
            gx -= m * dx / r3
            gy -= m * dy / r3
            gz -= m * z / r3
        if pos.size == 3:
            return np.array([gx, gy, gz])
        return np.array([gx, gy])

    def __call__(self, t, s):
        if len(s) == 4:
            g = self.omega_grad(s[:2])
            return [s[2], s[3], g[0] + 2.0 * s[3], g[1] - 2.0 * s[2]]
        g = self.omega_grad(s[:3])
        return [s[3], s[4], s[5], g[0] + 2.0 * s[4], g[1] - 2.0 * s[3], g[2]]

    def jacobian(self, t, s, eps: float = 1e-7) -> np.ndarray:
        # differencing fallback; accuracy is adequate for this field's role
        s = np.asarray(s, dtype=float)
        n = s.size
        A = np.zeros((n, n))
        f0 = np.asarray(self(t, s))
        for j in range(n):
            sp = s.copy()
            sp[j] += eps
            A[:, j] = (np.asarray(self(t, sp)) - f0) / eps
        return A

    def jacobi(self, state) -> float:
        s = _as_state_array(state)
        n = s.size // 2
        return -float(np.dot(s[n:], s[n:])) + 2.0 * self.omega(s[:n])


def r4bp_vector_field(state, config: R4BPConfig):
    return np.asarray(R4BPField(config)(0.0, _as_state_array(state)))


def r4bp_jacobi_constant(state, config: R4BPConfig) -> float:
    return R4BPField(config).jacobi(state)


class ScaledR4BPField:
    """Four-body field translated to the small primary and scaled by m3^(1/3).

    Positions map as X = p3 + m3^(1/3) xi and velocities as V = m3^(1/3) v,
    with time unchanged; the resulting field on (xi, v) tends to the unrotated
    Hill field as m3 -> 0.  Masses are split as m1 = (1-mu)(1-m3),
    m2 = mu (1-m3) so that mu = m2/(m1+m2) holds exactly for every m3.
    Used as the convergence oracle only.
    """

    def __init__(self, mu: float, m3: float):
        if m3 <= 0.0:
            raise DomainError("m3 must be positive")
        if not (0.0 <= mu <= 0.5):
            raise DomainError(f"mass ratio mu={mu} outside [0, 1/2]")
        self.mu = mu
        self.m3 = m3
        self.eps = m3 ** (1.0 / 3.0)
        self.config = R4BPConfig((1.0 - mu) * (1.0 - m3), mu * (1.0 - m3), m3)
        self._field = R4BPField(self.config)
        self._p3 = self.config.primaries[2]
        self.name = f"scaled-r4bp(mu={mu}, m3={m3})"

    def __call__(self, t, s):
        e = self.eps
        if len(s) == 4:
            big = [self._p3[0] + e * s[0], self._p3[1] + e * s[1], e * s[2], e * s[3]]
        else:
            big = [self._p3[0] + e * s[0], self._p3[1] + e * s[1], e * s[2],
                   e * s[3], e * s[4], e * s[5]]
        f = self._field(t, big)
        n = len(s) // 2
        return [s[n + i] for i in range(n)] + [f[n + i] / e for i in range(n)]


def scaled_r4bp_field(state, mu: float, m3: float):
    """One evaluation of :class:`ScaledR4BPField` (oracle convenience)."""
    s = _as_state_array(state)
    return np.asarray(ScaledR4BPField(mu, m3)(0.0, s))
