"""Levi-Civita regularization of the planar problem.

Pipeline (planar, rotated frame): subtract the energy h from the Hamiltonian,
multiply by r/4, substitute the quadratic map

    (x, y) = (X^2 - Y^2, 2 X Y),
    (px, py) = 2 (X PX - Y PY, Y PX + X PY) / (X^2 + Y^2),

then remove the energy dependence with the canonical scaling
x -> alpha X, p -> beta P, Hhat = gamma Hcheck where

    alpha = 2 kappa^(1/4),  beta = 2 kappa^(3/4),  gamma = 4 kappa^(3/2),
    kappa = |h|/2 = |C|/4.

Carrying this out symbolically yields the polynomial Hamiltonian

    Hcheck = (X^2 + Y^2 + PX^2 + PY^2)/2 + 2 (X^2 + Y^2)(Y PX - X PY)
             + 2 (a X^6 + (4b - a) X^4 Y^2 + (4b - a) X^2 Y^4 + a Y^6)

with sextic coefficients

    a = 1 - lambda2,   b = 1 - lambda1,

i.e. twice the quadratic coefficients of the rotated Hamiltonian (those are
(1 - lambda2)/2 and (1 - lambda1)/2; the factor 2 is absorbed by the r/4
multiplication).  At mu = 0 this gives a = -2, b = 1 and the sextic collapses
to -4 (X^6 - 3 X^4 Y^2 - 3 X^2 Y^4 + Y^6), the classical lunar Hill form,
which together with the trajectory-correspondence check below pins the
resolution down.

An orbit at Jacobi constant C lives on the level set

    Hcheck = h_reg = |C|^(-3/2) / 2

(the constant -1/(16 kappa^(3/2)) dropped from Hcheck accounts for the
nonzero level), and both signs of h map to the same h_reg.  Physical time
relates to the regularized time tau by

    dt = 4 (X^2 + Y^2) dtau

in the scaled variables; at the unscaled Levi-Civita stage the momentum
convention above implies dt = (X^2 + Y^2) dtau-hat.  Both relations were
verified by pushing the physical flow through the coordinate maps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SingularityError
from .model import eigen_structure

__all__ = [
    "EnergyContext",
    "RegState",
    "reg_coefficients",
    "lc_map",
    "lc_momentum_map",
    "lc_inverse",
    "regularized_energy",
    "regularized_hamiltonian",
    "RegularizedField",
    "regularized_field",
    "momentum_on_section",
    "reg_from_physical",
    "reg_to_physical",
    "time_dilation",
]


@dataclass(frozen=True)
class EnergyContext:
    """Jacobi constant, Hamiltonian value, and the energy-removal scaling."""

    C: float
    h: float
    kappa: float
    alpha: float
    beta: float
    gamma: float
    h_reg: float

    @classmethod
    def from_jacobi(cls, C: float) -> "EnergyContext":
        if C == 0.0:
            raise DomainError("regularized energy diverges as C -> 0")
        h = -C / 2.0
        kappa = abs(h) / 2.0
        return cls(
            C=C,
            h=h,
            kappa=kappa,
            alpha=2.0 * kappa ** 0.25,
            beta=2.0 * kappa ** 0.75,
            gamma=4.0 * kappa ** 1.5,
            h_reg=regularized_energy(C),
        )


@dataclass(frozen=True)
class RegState:
    """Levi-Civita coordinates/momenta with the energy level they live on."""

    X: float
    Y: float
    P_X: float
    P_Y: float
    h_reg: float

    def as_array(self) -> np.ndarray:
        return np.array([self.X, self.Y, self.P_X, self.P_Y])

    @classmethod
    def from_array(cls, arr, h_reg: float) -> "RegState":
        return cls(float(arr[0]), float(arr[1]), float(arr[2]), float(arr[3]), h_reg)


def reg_coefficients(mu: float) -> tuple:
    """Sextic coefficients (a, b) = (1 - lambda2, 1 - lambda1) of Hcheck."""
    es = eigen_structure(mu)
    return 1.0 - es.lambda2, 1.0 - es.lambda1


def regularized_energy(C: float) -> float:
    """Level set |C|^(-3/2)/2 of the regularized Hamiltonian; even in C."""
    if C == 0.0:
        raise DomainError("regularized energy diverges as C -> 0")
    return abs(C) ** -1.5 / 2.0


def lc_map(X: float, Y: float) -> tuple:
    """Quadratic position map (x, y) = (X^2 - Y^2, 2XY); a double cover."""
    return X * X - Y * Y, 2.0 * X * Y


def lc_momentum_map(X: float, Y: float, P_X: float, P_Y: float) -> tuple:
    """Physical momenta (px, py) of a Levi-Civita state (unscaled stage)."""
    r2 = X * X + Y * Y
    if r2 == 0.0:
        raise SingularityError("momentum map undefined at the Levi-Civita origin")
    return 2.0 * (X * P_X - Y * P_Y) / r2, 2.0 * (Y * P_X + X * P_Y) / r2


def lc_inverse(x: float, y: float, px: float, py: float) -> tuple:
    """Inverse of the Levi-Civita maps on the X >= 0 half-plane cover.

    Returns (X, Y, P_X, P_Y); when X = 0 the representative with Y >= 0 is
    chosen, so outputs are deterministic on the cover seam.
    """
    r = math.hypot(x, y)
    if r == 0.0:
        raise SingularityError("collision state has no Levi-Civita momenta")
    X = math.sqrt(0.5 * (r + x))
    if X > 0.0:
        Y = y / (2.0 * X)
    else:
        Y = math.sqrt(0.5 * (r - x))
    P_X = 0.5 * (X * px + Y * py)
    P_Y = 0.5 * (-Y * px + X * py)
    return X, Y, P_X, P_Y


def regularized_hamiltonian(state, mu: float) -> float:
    """Hcheck evaluated at (X, Y, P_X, P_Y); polynomial, no singularity."""
    if isinstance(state, RegState):
        X, Y, PX, PY = state.X, state.Y, state.P_X, state.P_Y
    else:
        X, Y, PX, PY = state[0], state[1], state[2], state[3]
    a, b = reg_coefficients(mu)
    c = 4.0 * b - a
    r2 = X * X + Y * Y
    return (0.5 * (r2 + PX * PX + PY * PY)
            + 2.0 * r2 * (Y * PX - X * PY)
            + 2.0 * (a * X**6 + c * X**4 * Y**2 + c * X**2 * Y**4 + a * Y**6))


class RegularizedField:
    """Hamilton equations of Hcheck; optionally tracks physical time.

    With ``track_time=True`` the state carries a fifth component t with
    dt/dtau = 4 (X^2 + Y^2), which reparametrizes the regularized flow back
    onto the physical clock.
    """

    def __init__(self, mu: float, track_time: bool = False):
        self.mu = mu
        self.a, self.b = reg_coefficients(mu)
        self.c = 4.0 * self.b - self.a
        self.track_time = track_time
        self.name = f"levi-civita(mu={mu})"

    def __call__(self, t, s):
        X, Y, PX, PY = s[0], s[1], s[2], s[3]
        a, c = self.a, self.c
        r2 = X * X + Y * Y
        W = Y * PX - X * PY
        out = [
            PX + 2.0 * r2 * Y,
            PY - 2.0 * r2 * X,
            -X + 2.0 * r2 * PY - 4.0 * X * W
            - (12.0 * a * X**5 + 8.0 * c * X**3 * Y * Y + 4.0 * c * X * Y**4),
            -Y - 2.0 * r2 * PX - 4.0 * Y * W
            - (4.0 * c * X**4 * Y + 8.0 * c * X * X * Y**3 + 12.0 * a * Y**5),
        ]
        if self.track_time:
            out.append(4.0 * r2)
        return out

    def jacobian(self, t, s) -> np.ndarray:
        X, Y, PX, PY = s[0], s[1], s[2], s[3]
        a, c = self.a, self.c
        r2 = X * X + Y * Y
        W = Y * PX - X * PY
        J = np.array([
            [4.0 * X * Y, 2.0 * r2 + 4.0 * Y * Y, 1.0, 0.0],
            [-2.0 * r2 - 4.0 * X * X, -4.0 * X * Y, 0.0, 1.0],
            [-1.0 + 8.0 * X * PY - 4.0 * W
             - (60.0 * a * X**4 + 24.0 * c * X * X * Y * Y + 4.0 * c * Y**4),
             4.0 * Y * PY - 4.0 * X * PX - (16.0 * c * X**3 * Y + 16.0 * c * X * Y**3),
             -4.0 * X * Y, 2.0 * r2 + 4.0 * X * X],
            [-4.0 * X * PX + 4.0 * Y * PY - (16.0 * c * X**3 * Y + 16.0 * c * X * Y**3),
             -1.0 - 8.0 * Y * PX - 4.0 * W
             - (4.0 * c * X**4 + 24.0 * c * X * X * Y * Y + 60.0 * a * Y**4),
             -2.0 * r2 - 4.0 * Y * Y, 4.0 * X * Y],
        ])
        if self.track_time:
            Jt = np.zeros((5, 5))
            Jt[:4, :4] = J
            Jt[4, 0] = 8.0 * X
            Jt[4, 1] = 8.0 * Y
            return Jt
        return J

    def hamiltonian(self, s) -> float:
        return regularized_hamiltonian(s, self.mu)


def regularized_field(state, mu: float):
    """Time derivative of a regularized state (Hamilton equations of Hcheck)."""
    if isinstance(state, RegState):
        state = state.as_array()
    return np.asarray(RegularizedField(mu)(0.0, state))


def momentum_on_section(X: float, P_X: float, h_reg: float, mu: float) -> float:
    """P_Y > 0 on the section Y = 0 from the energy condition Hcheck = h_reg.

    On Y = 0 the energy condition is the quadratic
    P_Y^2/2 - 2 X^3 P_Y + (X^2 + P_X^2)/2 + 2 a X^6 - h_reg = 0; the larger
    root 2 X^3 + sqrt(disc) is returned when positive (it is continuous in X
    near 0 and matches sqrt(2 h_reg) there).
    """
    a, _ = reg_coefficients(mu)
    const = 0.5 * (X * X + P_X * P_X) + 2.0 * a * X**6 - h_reg
    disc = 4.0 * X**6 - 2.0 * const
    if disc < 0.0:
        raise DomainError("no real momentum on the section: outside admissible region")
    P_Y = 2.0 * X**3 + math.sqrt(disc)
    if P_Y <= 0.0:
        raise DomainError("no positive momentum root on the section")
    return P_Y


def time_dilation(state) -> float:
    """dt/dtau = 4 (X^2 + Y^2) of the scaled regularized flow."""
    if isinstance(state, RegState):
        return 4.0 * (state.X ** 2 + state.Y ** 2)
    return 4.0 * (state[0] ** 2 + state[1] ** 2)


def reg_from_physical(state, C: float) -> RegState:
    """Map a planar physical state (x, y, xdot, ydot) at Jacobi C to RegState."""
    x, y, vx, vy = state[0], state[1], state[2], state[3]
    px, py = vx - y, vy + x
    u, v, pu, pv = lc_inverse(x, y, px, py)
    ctx = EnergyContext.from_jacobi(C)
    return RegState(u / ctx.alpha, v / ctx.alpha, pu / ctx.beta, pv / ctx.beta,
                    ctx.h_reg)


def reg_to_physical(state, C: float) -> np.ndarray:
    """Inverse of :func:`reg_from_physical` (velocities, not momenta)."""
    if isinstance(state, RegState):
        arr = state.as_array()
    else:
        arr = np.asarray(state, dtype=float)
    ctx = EnergyContext.from_jacobi(C)
    u, v = ctx.alpha * arr[0], ctx.alpha * arr[1]
    pu, pv = ctx.beta * arr[2], ctx.beta * arr[3]
    x, y = lc_map(u, v)
    px, py = lc_momentum_map(u, v, pu, pv)
    return np.array([x, y, px + y, py - x])
