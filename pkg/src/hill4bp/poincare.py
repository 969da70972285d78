"""Poincaré sections, first-return maps, seeding scans, and tangency curves.

The regularized return map uses the section Y = 0, P_Y > 0 of the
Levi-Civita flow; a point there is specified by (X, P_X) with P_Y recovered
from the energy condition.  Physical sections are the plane x = 0 (split
into the half-planes y > 0 and y < 0) in the rotated frame and the parallel
plane x = -x_L1 in the unrotated frame; their natural coordinates are
(y, ydot).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .errors import DomainError
from .model import Frame, GridSpec, HillField, ModelParams, eigen_structure
from .integrate import Trajectory, find_crossings, propagate
from .regularization import (RegState, RegularizedField, momentum_on_section,
                             regularized_hamiltonian)

__all__ = [
    "SectionId",
    "SectionDef",
    "make_section",
    "SectionPoint",
    "ReturnMapResult",
    "return_map",
    "return_map_jacobian",
    "return_map_fixed_point",
    "ScanResult",
    "scan",
    "physical_cuts",
    "TangencyCurve",
    "tangency_curve",
]

ESCAPE_RADIUS = 10.0          # regularized plane
TANGENT_TOL = 1e-10           # |xdot| below this flags a tangential cut


class SectionId(Enum):
    REG_Y0 = "RegY0"
    SIGMA_PLUS = "SigmaPlus"
    SIGMA_MINUS = "SigmaMinus"
    SIGMA_PRIME = "SigmaPrime"


@dataclass(frozen=True)
class SectionDef:
    """Section identity plus the frame and clock its crossings live in."""

    id: SectionId
    frame: Frame
    time_variable: str
    offset: float = 0.0       # plane is {x = offset} for physical sections

    def event(self, t, s) -> float:
        if self.id is SectionId.REG_Y0:
            return s[1]
        return s[0] - self.offset

    @property
    def direction(self) -> int:
        # crossings are collected in both directions and filtered afterwards
        return 0

    def coords(self, state) -> np.ndarray:
        if self.id is SectionId.REG_Y0:
            return np.array([state[0], state[2]])   # (X, P_X)
        return np.array([state[1], state[3]])       # (y, ydot)


def make_section(section_id: SectionId, mu: float) -> SectionDef:
    if section_id is SectionId.REG_Y0:
        return SectionDef(section_id, Frame.ROTATED, "regularized")
    if section_id in (SectionId.SIGMA_PLUS, SectionId.SIGMA_MINUS):
        return SectionDef(section_id, Frame.ROTATED, "physical", 0.0)
    es = eigen_structure(mu)
    if es.v2 is None:
        raise DomainError("SigmaPrime is undefined at mu = 1/2 (no rotation)")
    x_l1_unrot = es.lambda2 ** (-1.0 / 3.0) * float(es.v2[0])
    return SectionDef(section_id, Frame.UNROTATED, "physical", -x_l1_unrot)


@dataclass(frozen=True)
class SectionPoint:
    coords: np.ndarray
    cut_index: int
    section: SectionId
    time: float
    state: np.ndarray
    trajectory_id: int = 0
    tangential: bool = False


# ---------------------------------------------------------------------------
# regularized first-return map
# ---------------------------------------------------------------------------

def _seed_state(seed, h_reg: Optional[float], mu: float) -> tuple:
    if isinstance(seed, RegState):
        if abs(seed.Y) > 1e-12 or seed.P_Y <= 0.0:
            raise DomainError("seed must lie on the section Y = 0, P_Y > 0")
        return seed.as_array(), seed.h_reg
    X, PX = float(seed[0]), float(seed[1])
    if h_reg is None:
        raise DomainError("h_reg required when seeding from (X, P_X)")
    PY = momentum_on_section(X, PX, h_reg, mu)
    return np.array([X, 0.0, PX, PY]), h_reg


@dataclass
class ReturnMapResult:
    points: list                 # SectionPoint per return
    escaped: bool
    seed: np.ndarray
    h_reg: float


def return_map(seed, n: int, mu: float, *, h_reg: Optional[float] = None,
               r_esc: float = ESCAPE_RADIUS, rtol: float = 1e-12,
               atol: float = 1e-12, tau_chunk: float = 400.0,
               max_chunks: int = 8) -> ReturnMapResult:
    """Next ``n`` crossings of Y = 0 with P_Y > 0 under the regularized flow.

    Crossings of the plane Y = 0 with P_Y < 0 are passed over (they are the
    double-cover partners); leaving the disk of radius ``r_esc`` in the
    (X, Y)-plane terminates the orbit with the escape flag set.
    """
    state, h_reg = _seed_state(seed, h_reg, mu)
    fieldfn = RegularizedField(mu)
    sect = make_section(SectionId.REG_Y0, mu)

    def y_event(t, s):
        return s[1]
    y_event.terminal = 2 * n + 6
    y_event.direction = 0

    def escape(t, s):
        return s[0] * s[0] + s[1] * s[1] - r_esc * r_esc
    escape.terminal = True
    escape.direction = 1

    seed_arr = state.copy()
    pts: list = []
    escaped = False
    tau0 = 0.0
    for _ in range(max_chunks):
        traj = propagate(fieldfn, state, tau0 + tau_chunk, t0=tau0,
                         rtol=rtol, atol=atol, events=[y_event, escape],
                         dense=False)
        for te, se in zip(traj.t_events[0], traj.y_events[0]):
            if te <= tau0 + 1e-12 or se[3] <= 0.0:
                continue
            on_section = se.copy()
            on_section[1] = 0.0
            h_err = regularized_hamiltonian(on_section, mu) - h_reg
            if abs(h_err) > 1e-8:
                raise DomainError(f"return map lost the energy level: {h_err}")
            pts.append(SectionPoint(sect.coords(on_section), len(pts) + 1,
                                    SectionId.REG_Y0, float(te), on_section))
            if len(pts) >= n:
                return ReturnMapResult(pts, False, seed_arr, h_reg)
        if len(traj.t_events[1]) > 0:
            escaped = True
            break
        tau0 = traj.t_end
        state = traj.final_state
    return ReturnMapResult(pts, escaped, seed_arr, h_reg)


def return_map_jacobian(z, h_reg: float, mu: float, *, delta: float = 1e-7,
                        **kw) -> Optional[np.ndarray]:
    """Forward-difference 2x2 Jacobian of the first-return map at (X, P_X)."""
    base = return_map(z, 1, mu, h_reg=h_reg, **kw)
    if not base.points:
        return None
    f0 = base.points[0].coords
    J = np.zeros((2, 2))
    for j in range(2):
        zp = np.array(z, dtype=float)
        zp[j] += delta
        r = return_map(zp, 1, mu, h_reg=h_reg, **kw)
        if not r.points:
            return None
        J[:, j] = (r.points[0].coords - f0) / delta
    return J


def return_map_fixed_point(guess, h_reg: float, mu: float, *, tol: float = 1e-10,
                           max_iter: int = 60, max_step: float = 0.2, **kw):
    """Newton solve for a fixed point of the first-return map.

    Returns (point, jacobian) or (None, None) when the iteration leaves the
    admissible region.  |trace(jacobian)| < 2 means the fixed point is
    linearly stable (elliptic).
    """
    z = np.array(guess, dtype=float)
    for _ in range(max_iter):
        r = return_map(z, 1, mu, h_reg=h_reg, **kw)
        if not r.points:
            return None, None
        F = r.points[0].coords - z
        J = np.zeros((2, 2))
        delta = 1e-7
        ok = True
        for j in range(2):
            zp = z.copy()
            zp[j] += delta
            rp = return_map(zp, 1, mu, h_reg=h_reg, **kw)
            if not rp.points:
                ok = False
                break
            J[:, j] = (rp.points[0].coords - r.points[0].coords) / delta
        if not ok:
            return None, None
        if np.abs(F).max() < tol:
            return z, J
        step = np.linalg.solve(J - np.eye(2), -F)
        nrm = np.abs(step).max()
        if nrm > max_step:
            step *= max_step / nrm
        z = z + step
    return None, None


# ---------------------------------------------------------------------------
# seeding scans
# ---------------------------------------------------------------------------

@dataclass
class ScanResult:
    h_reg: float
    mu: float
    grid: GridSpec
    iterates: int
    orbits: list          # (seed_id, X0, PX0, ndarray of shape (k, 2))
    skipped: int
    escaped: int

    def rows(self):
        """Flat (seed_id, iter, X, PX) rows for CSV export."""
        for seed_id, X0, PX0, pts in self.orbits:
            yield seed_id, 0, X0, PX0
            for k, (X, PX) in enumerate(pts, start=1):
                yield seed_id, k, X, PX


def scan(h_reg: float, mu: float, grid: GridSpec, iterates: int, *,
         r_esc: float = ESCAPE_RADIUS, rtol: float = 1e-12, atol: float = 1e-12) -> ScanResult:
    """Return-map orbits of every admissible grid seed (deterministic order)."""
    orbits = []
    skipped = 0
    escaped = 0
    seed_id = 0
    for X0 in grid.x_values():
        for PX0 in grid.y_values():
            try:
                momentum_on_section(X0, PX0, h_reg, mu)
            except DomainError:
                skipped += 1
                seed_id += 1
                continue
            res = return_map((X0, PX0), iterates, mu, h_reg=h_reg, r_esc=r_esc,
                             rtol=rtol, atol=atol)
            if res.escaped:
                escaped += 1
            pts = np.array([p.coords for p in res.points]).reshape(-1, 2)
            orbits.append((seed_id, X0, PX0, pts))
            seed_id += 1
    return ScanResult(h_reg, mu, grid, iterates, orbits, skipped, escaped)


# ---------------------------------------------------------------------------
# physical sections
# ---------------------------------------------------------------------------

def physical_cuts(traj: Trajectory, section: SectionDef, max_cuts: int) -> list:
    """Ordered transversal crossings of the full section plane.

    The cut index counts every transversal crossing regardless of the sign
    of y, so it advances through both half-plane subsections; each returned
    point carries the subsection it actually lies in.  Crossings with
    |xdot| <= 1e-10 are flagged tangential and do not advance the index.
    """
    if section.id is SectionId.REG_Y0:
        raise DomainError("physical_cuts expects a physical section")
    hits = find_crossings(traj, section.event, 0)
    out = []
    idx = 0
    for c in hits:
        tangential = abs(c.state[2]) <= TANGENT_TOL
        if not tangential:
            idx += 1
            if idx > max_cuts:
                break
        if section.id is SectionId.SIGMA_PRIME:
            tag = SectionId.SIGMA_PRIME
        else:
            tag = SectionId.SIGMA_PLUS if c.state[1] > 0 else SectionId.SIGMA_MINUS
        out.append(SectionPoint(section.coords(c.state), idx if not tangential else 0,
                                tag, c.time, c.state, tangential=tangential))
    return out


# ---------------------------------------------------------------------------
# tangency curve
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TangencyCurve:
    """Locus ydot^2 = 2 Omega(0, y) - C bounding the admissible part of Sigma."""

    C: float
    mu: float
    y: np.ndarray
    ydot_max: np.ndarray      # NaN where the section is inaccessible

    def contains(self, y: float, ydot: float) -> bool:
        field = HillField(ModelParams(self.mu, Frame.ROTATED))
        rhs = 2.0 * field.omega((0.0, y)) - self.C
        return rhs >= 0.0 and ydot * ydot <= rhs

    def polyline(self) -> np.ndarray:
        """Closed polyline in the (ydot, y) plane (upper branch then lower)."""
        ok = ~np.isnan(self.ydot_max)
        ys = self.y[ok]
        vs = self.ydot_max[ok]
        upper = np.column_stack([vs, ys])
        lower = np.column_stack([-vs[::-1], ys[::-1]])
        return np.vstack([upper, lower])


def tangency_curve(C: float, mu: float, y_range: tuple, n: int) -> TangencyCurve:
    """Sample the tangency curve over ``y_range`` (empty set gives all-NaN)."""
    field = HillField(ModelParams(mu, Frame.ROTATED))
    ys = np.linspace(y_range[0], y_range[1], n)
    vmax = np.full(n, np.nan)
    for i, y in enumerate(ys):
        if y == 0.0:
            continue
        rhs = 2.0 * field.omega((0.0, y)) - C
        if rhs >= 0.0:
            vmax[i] = math.sqrt(rhs)
    return TangencyCurve(C, mu, ys, vmax)
