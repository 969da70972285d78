"""Symmetric periodic orbits: differential correction, families, bifurcations.

Orbits symmetric about the x-axis are corrected by single shooting on the
half-period perpendicularity condition: starting from (x0, 0, 0, ydot0), the
next crossing of y = 0 must have xdot = 0.  Doubly-symmetric orbits (the
direct family around the origin and its retrograde counterpart) support a
quarter-period variant - first crossing of x = 0 with ydot = 0 - which is
what family continuation uses for them: near the symmetry-breaking pitchfork
the half-period condition is satisfied by the asymmetric branches as well,
and a corrector that enforces the second symmetry cannot slide onto them.

The stability index is half the monodromy trace minus one; a pitchfork of
the direct family is located by bisecting the index through +1 and verified
by correcting both asymmetric branches just past the critical energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

import numpy as np

from .errors import ConvergenceError, DomainError
from .equilibria import EquilibriumInfo, StabilityKind
from .integrate import (DEFAULT_ATOL, DEFAULT_RTOL, VariationalField, propagate)
from .model import Frame, HillField, ModelParams

__all__ = [
    "FamilyTag",
    "FixedQuantity",
    "PeriodicOrbit",
    "correct_symmetric",
    "correct_doubly_symmetric",
    "monodromy",
    "continue_family",
    "FamilyResult",
    "lyapunov_guess",
    "lyapunov_orbit_at_jacobi",
    "g_family_seed",
    "retrograde_seed",
    "PitchforkRecord",
    "detect_pitchfork",
]

RESIDUAL_TOL = 1e-12          # Newton target; convergence accepted at 1e-11
MAX_NEWTON = 25


class FamilyTag(Enum):
    G_FAMILY = "gFamily"
    G_PRIME = "gPrime"
    LYAPUNOV_L1 = "LyapunovL1"
    LYAPUNOV_L2 = "LyapunovL2"
    RETROGRADE = "Retrograde"


class FixedQuantity(Enum):
    FIX_X0 = "FixX0"
    FIX_JACOBI = "FixJacobi"


@dataclass(frozen=True)
class PeriodicOrbit:
    """Symmetric periodic orbit record; initial state is (x0, 0, 0, ydot0)."""

    x0: float
    ydot0: float
    period: float
    jacobi: float
    stability_index: float
    family: FamilyTag
    mu: float
    symmetric: bool = True
    residual: float = 0.0

    def initial_state(self) -> np.ndarray:
        return np.array([self.x0, 0.0, 0.0, self.ydot0])

    @property
    def direct(self) -> bool:
        # sign of the angular momentum x ydot - y xdot at the crossing
        return self.x0 * self.ydot0 > 0.0


def _field(mu: float) -> HillField:
    return HillField(ModelParams(mu, Frame.ROTATED))


def _half_crossing(field, x0, ydot0, *, rtol, atol, t_min=1e-10, t_max=60.0):
    """First y = 0 crossing (with the return direction) plus the STM there."""
    def ev(t, s):
        return s[1]
    ev.terminal = True
    ev.direction = -math.copysign(1.0, ydot0)
    var = VariationalField(field)
    aug0 = VariationalField.augment([x0, 0.0, 0.0, ydot0])
    traj = propagate(var, aug0, t_max, t0=t_min, rtol=rtol, atol=atol,
                     events=[ev], dense=False)
    if not traj.t_events or len(traj.t_events[0]) == 0:
        return None
    te = float(traj.t_events[0][0])
    se, Phi = VariationalField.split(traj.y_events[0][0])
    return te, se, Phi


def _quarter_crossing(field, x0, ydot0, *, rtol, atol, t_min=1e-10, t_max=60.0):
    """First x = 0 crossing plus the STM there (doubly-symmetric targeting)."""
    def ev(t, s):
        return s[0]
    ev.terminal = True
    ev.direction = 0
    var = VariationalField(field)
    aug0 = VariationalField.augment([x0, 0.0, 0.0, ydot0])
    traj = propagate(var, aug0, t_max, t0=t_min, rtol=rtol, atol=atol,
                     events=[ev], dense=False)
    if not traj.t_events or len(traj.t_events[0]) == 0:
        return None
    te = float(traj.t_events[0][0])
    se, Phi = VariationalField.split(traj.y_events[0][0])
    return te, se, Phi


def monodromy(orbit: PeriodicOrbit, mu: Optional[float] = None, *,
              rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL):
    """Full-period state-transition matrix and the stability index.

    The index is (trace - 2)/2; values above +1 correspond to a real
    eigenvalue pair (lambda, 1/lambda) with lambda > 1.
    """
    mu = orbit.mu if mu is None else mu
    field = _field(mu)
    var = VariationalField(field)
    traj = propagate(var, VariationalField.augment(orbit.initial_state()),
                     orbit.period, rtol=rtol, atol=atol, dense=False)
    _, Phi = VariationalField.split(traj.final_state)
    return Phi, 0.5 * (float(np.trace(Phi)) - 2.0)


def _newton_ydot(field, x0, ydot0, *, rtol, atol, crossing, residual_index,
                 max_step=0.1):
    """Newton on ydot0 driving the crossing residual to zero; returns orbit data."""
    history = []
    yd = ydot0
    best = None
    for _ in range(MAX_NEWTON):
        out = crossing(field, x0, yd, rtol=rtol, atol=atol)
        if out is None:
            raise ConvergenceError("no section crossing found", history)
        te, se, Phi = out
        res = se[residual_index]
        history.append(abs(res))
        if best is None or abs(res) < best[2]:
            best = (yd, te, abs(res))
        if abs(res) < RESIDUAL_TOL:
            return yd, te, res
        f = np.asarray(field(te, se))
        # residual sensitivity on the moving section: d res/d ydot0
        drive = 1 if residual_index == 2 else 0   # section coordinate index
        denom = Phi[residual_index, 3] - f[residual_index] * Phi[drive, 3] / f[drive]
        step = -res / denom
        if abs(step) > max_step:
            step = math.copysign(max_step, step)
        yd += step
    if best is not None and best[2] < 1e-11:
        return best[0], best[1], best[2]
    raise ConvergenceError(f"Newton stalled, residual {history[-1]:.3e}", history)


def correct_symmetric(guess, mu: float, fixed: FixedQuantity = FixedQuantity.FIX_X0,
                      *, jacobi_target: Optional[float] = None,
                      family: FamilyTag = FamilyTag.G_FAMILY,
                      rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
                      compute_stability: bool = True) -> PeriodicOrbit:
    """Differential correction of an x-axis-symmetric orbit.

    ``guess`` is (x0, ydot0).  With FIX_X0 the crossing speed ydot0 is the
    Newton unknown; with FIX_JACOBI the energy pins |ydot0| through
    ydot0 = sign * sqrt(2 Omega(x0, 0) - C) and x0 becomes the unknown
    (secant iteration), so the returned orbit carries the requested Jacobi
    constant exactly.
    """
    x0, ydot0 = float(guess[0]), float(guess[1])
    field = _field(mu)
    if fixed is FixedQuantity.FIX_X0:
        yd, t_half, res = _newton_ydot(field, x0, ydot0, rtol=rtol, atol=atol,
                                       crossing=_half_crossing, residual_index=2)
    else:
        if jacobi_target is None:
            raise DomainError("FIX_JACOBI needs jacobi_target")
        sign = math.copysign(1.0, ydot0)

        def resid(x):
            v2 = 2.0 * field.omega((x, 0.0)) - jacobi_target
            if v2 <= 0.0:
                raise ConvergenceError(f"x0={x} outside the energy level")
            out = _half_crossing(field, x, sign * math.sqrt(v2), rtol=rtol, atol=atol)
            if out is None:
                raise ConvergenceError("no section crossing found")
            return out[1][2], out

        history = []
        ra, out = resid(x0)
        history.append(abs(ra))
        h = 1e-8
        for _ in range(MAX_NEWTON):
            if abs(ra) < RESIDUAL_TOL:
                break
            rb, _ = resid(x0 + h)
            slope = (rb - ra) / h
            x0 = x0 - ra / slope
            ra, out = resid(x0)
            history.append(abs(ra))
        else:
            if abs(ra) >= 1e-11:
                raise ConvergenceError(f"secant stalled, residual {abs(ra):.3e}", history)
        yd = math.copysign(math.sqrt(2.0 * field.omega((x0, 0.0)) - jacobi_target), ydot0)
        t_half, res = out[0], ra
    T = 2.0 * t_half
    C = field.jacobi([x0, 0.0, 0.0, yd])
    orbit = PeriodicOrbit(x0, yd, T, C, math.nan, family, mu, residual=abs(res))
    if compute_stability:
        _, k = monodromy(orbit, rtol=rtol, atol=atol)
        orbit = replace(orbit, stability_index=k)
    return orbit


def correct_doubly_symmetric(guess, mu: float, *,
                             family: FamilyTag = FamilyTag.G_FAMILY,
                             rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
                             compute_stability: bool = True) -> PeriodicOrbit:
    """Correction that also enforces the y-axis symmetry (quarter period).

    The residual is ydot at the first x = 0 crossing; the full period is four
    quarter times.  Used for the direct/retrograde families around the origin.
    """
    x0, ydot0 = float(guess[0]), float(guess[1])
    field = _field(mu)
    yd, t_quarter, res = _newton_ydot(field, x0, ydot0, rtol=rtol, atol=atol,
                                      crossing=_quarter_crossing, residual_index=3)
    T = 4.0 * t_quarter
    C = field.jacobi([x0, 0.0, 0.0, yd])
    orbit = PeriodicOrbit(x0, yd, T, C, math.nan, family, mu, residual=abs(res))
    if compute_stability:
        _, k = monodromy(orbit, rtol=rtol, atol=atol)
        orbit = replace(orbit, stability_index=k)
    return orbit


# ---------------------------------------------------------------------------
# family seeds
# ---------------------------------------------------------------------------

def g_family_seed(mu: float, x0: float = 0.15, **kw) -> PeriodicOrbit:
    """Small direct orbit around the origin from a Kepler-circle guess."""
    ydot0 = math.sqrt(1.0 / x0) - x0
    return correct_doubly_symmetric((x0, ydot0), mu, family=FamilyTag.G_FAMILY, **kw)


def retrograde_seed(mu: float, x0: float = 0.15, **kw) -> PeriodicOrbit:
    """Small retrograde orbit around the origin (Kepler-circle guess)."""
    ydot0 = -math.sqrt(1.0 / x0) - x0
    return correct_doubly_symmetric((x0, ydot0), mu, family=FamilyTag.RETROGRADE, **kw)


def lyapunov_guess(point: EquilibriumInfo, amplitude: float, mu: float):
    """Linear-center initial guess for a Lyapunov orbit at a collinear point.

    Returns ((x0, 0, 0, ydot0), period_guess).  The in-plane center frequency
    omega comes from the imaginary eigenvalue pair; the crossing speed follows
    from the linearized ellipse, ydot0 = -amplitude (omega^2 + Omega_xx)/2.
    """
    if point.kind is not StabilityKind.SADDLE_CENTER:
        raise DomainError(f"{point.label.value} is not a saddle-center")
    omegas = [abs(ev.imag) for ev in point.eigenvalues if abs(ev.real) < 1e-9]
    omega = max(omegas)
    oxx = point.second_partials[0]
    sgn = math.copysign(1.0, point.position[0])
    x0 = point.position[0] + sgn * amplitude
    ydot0 = -sgn * amplitude * (omega * omega + oxx) / 2.0
    return np.array([x0, 0.0, 0.0, ydot0]), 2.0 * math.pi / omega


# ---------------------------------------------------------------------------
# continuation
# ---------------------------------------------------------------------------

@dataclass
class FamilyResult:
    orbits: list
    terminated: str           # "steps" | "target" | "step-underflow"

    def characteristic(self) -> np.ndarray:
        """(C, x0) curve of the family."""
        return np.array([[o.jacobi, o.x0] for o in self.orbits])


def continue_family(seed: PeriodicOrbit, *, steps: int = 200,
                    direction: float = +1.0, dx0: float = 1e-3,
                    dx0_min: float = 1e-6, dx0_max: float = 1e-2,
                    target_jacobi: Optional[float] = None,
                    corrector: str = "auto", slope0: float = 0.0,
                    rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
                    compute_stability: bool = True) -> FamilyResult:
    """Natural-parameter continuation of a symmetric family in x0.

    The predictor is the secant slope of ydot0 along the family; steps adapt
    to corrector behaviour (halve on failure or on a period jump, grow
    gently on success).  With ``target_jacobi`` set, continuation stops once
    the family crosses that energy and the last orbit is refined to it.
    """
    if corrector == "auto":
        corrector = "quarter" if seed.family in (FamilyTag.G_FAMILY,
                                                 FamilyTag.RETROGRADE) else "half"
    correct = (correct_doubly_symmetric if corrector == "quarter"
               else lambda g, m, **kw: correct_symmetric(g, m, FixedQuantity.FIX_X0, **kw))

    orbits = [seed]
    slope = slope0
    step = direction * dx0
    terminated = "steps"
    while len(orbits) < steps:
        prev = orbits[-1]
        ok = False
        while abs(step) >= dx0_min:
            x_try = prev.x0 + step
            guess = (x_try, prev.ydot0 + slope * step)
            try:
                orb = correct(guess, seed.mu, family=seed.family, rtol=rtol,
                              atol=atol, compute_stability=compute_stability)
            except ConvergenceError:
                step *= 0.5
                continue
            if abs(orb.period - prev.period) > 0.3 * prev.period:
                step *= 0.5
                continue
            ok = True
            break
        if not ok:
            terminated = "step-underflow"
            break
        slope = (orb.ydot0 - prev.ydot0) / step
        orbits.append(orb)
        if abs(step) < dx0_max:
            step *= 1.4
            if abs(step) > dx0_max:
                step = math.copysign(dx0_max, step)
        if target_jacobi is not None and (
                (orbits[-2].jacobi - target_jacobi) * (orb.jacobi - target_jacobi) <= 0.0):
            refined = _refine_to_jacobi(orbits[-2], orb, target_jacobi, correct,
                                        rtol=rtol, atol=atol,
                                        compute_stability=compute_stability)
            orbits.append(refined)
            terminated = "target"
            break
    return FamilyResult(orbits, terminated)


def _refine_to_jacobi(o_a: PeriodicOrbit, o_b: PeriodicOrbit, C_target: float,
                      correct, *, rtol, atol, compute_stability) -> PeriodicOrbit:
    """Secant refinement along the family parameter to hit C_target exactly."""
    xa, Ca, ya = o_a.x0, o_a.jacobi, o_a.ydot0
    xb, Cb, yb = o_b.x0, o_b.jacobi, o_b.ydot0
    orb = o_b
    for _ in range(60):
        if Ca == Cb:
            break
        xm = xb + (C_target - Cb) * (xa - xb) / (Ca - Cb)
        orb = correct((xm, yb), o_b.mu, family=o_b.family, rtol=rtol, atol=atol,
                      compute_stability=compute_stability)
        if abs(orb.jacobi - C_target) < 1e-12:
            return orb
        xa, Ca, ya = xb, Cb, yb
        xb, Cb, yb = orb.x0, orb.jacobi, orb.ydot0
    return orb


def lyapunov_orbit_at_jacobi(mu: float, C_target: float, *,
                             label=None, amplitude0: float = 1e-3,
                             rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
                             compute_stability: bool = True) -> PeriodicOrbit:
    """Continue the L1 (or L2) Lyapunov family down to the requested energy."""
    from .equilibria import EquilibriumLabel, equilibrium_point

    label = label or EquilibriumLabel.L1
    point = equilibrium_point(label, mu)
    if C_target >= point.jacobi:
        raise DomainError("Lyapunov orbits exist only below the equilibrium energy")
    state, _ = lyapunov_guess(point, amplitude0, mu)
    family = (FamilyTag.LYAPUNOV_L1 if label is EquilibriumLabel.L1
              else FamilyTag.LYAPUNOV_L2)
    seed = correct_symmetric((state[0], state[3]), mu, FixedQuantity.FIX_X0,
                             family=family, rtol=rtol, atol=atol,
                             compute_stability=False)
    sgn = math.copysign(1.0, point.position[0])
    # tangent of the family at zero amplitude, from the linear-center ellipse
    omegas = [abs(ev.imag) for ev in point.eigenvalues if abs(ev.real) < 1e-9]
    slope0 = -(max(omegas) ** 2 + point.second_partials[0]) / 2.0
    res = continue_family(seed, direction=sgn, dx0=5e-4, dx0_max=3e-3,
                          target_jacobi=C_target, steps=4000, slope0=slope0,
                          rtol=rtol, atol=atol, compute_stability=False)
    if res.terminated != "target":
        raise ConvergenceError(f"Lyapunov continuation stopped: {res.terminated}")
    orbit = res.orbits[-1]
    if compute_stability:
        _, k = monodromy(orbit, rtol=rtol, atol=atol)
        orbit = replace(orbit, stability_index=k)
    return orbit


# ---------------------------------------------------------------------------
# pitchfork detection
# ---------------------------------------------------------------------------

@dataclass
class PitchforkRecord:
    C_star: float
    x0_star: float
    orbit: PeriodicOrbit
    branches: list            # two asymmetric-branch orbits just past C_star
    branch_check_jacobi: float


def _index_of(orbit: PeriodicOrbit, *, rtol, atol) -> float:
    if math.isnan(orbit.stability_index):
        _, k = monodromy(orbit, rtol=rtol, atol=atol)
        return k
    return orbit.stability_index


def detect_pitchfork(family, mu: Optional[float] = None, *,
                     bisection_tol: float = 1e-10,
                     branch_offset: float = 1e-4,
                     rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL) -> Optional[PitchforkRecord]:
    """Locate the stability-index crossing of +1 along a corrected family.

    ``family`` is an ordered list of PeriodicOrbit (monotone x0) from the
    doubly-symmetric corrector.  Returns None when the index never crosses
    +1.  Branch creation is verified by correcting asymmetric guesses
    displaced off the symmetric branch on both sides at a slightly lower
    energy; the two corrected branches must be distinct from the symmetric
    orbit and from each other.
    """
    orbits = list(family.orbits if isinstance(family, FamilyResult) else family)
    if len(orbits) < 2:
        return None
    mu = orbits[0].mu if mu is None else mu
    bracket = None
    for a, b in zip(orbits[:-1], orbits[1:]):
        ka, kb = a.stability_index, b.stability_index
        if not (math.isnan(ka) or math.isnan(kb)) and (ka - 1.0) * (kb - 1.0) < 0.0:
            bracket = (a, b)
            break
    if bracket is None:
        return None
    lo, hi = bracket
    klo = lo.stability_index
    yd_guess, slope = lo.ydot0, (hi.ydot0 - lo.ydot0) / (hi.x0 - lo.x0)
    xlo, xhi = lo.x0, hi.x0
    star = hi
    while abs(xhi - xlo) > bisection_tol:
        xm = 0.5 * (xlo + xhi)
        star = correct_doubly_symmetric((xm, yd_guess + slope * (xm - xlo)), mu,
                                        family=orbits[0].family, rtol=rtol, atol=atol)
        if (star.stability_index - 1.0) * (klo - 1.0) > 0.0:
            xlo, yd_guess = xm, star.ydot0
        else:
            xhi = xm
    C_star, x0_star = star.jacobi, star.x0

    # branch verification just below the critical energy
    C_check = C_star - 2e-3
    g_at = _g_at_jacobi(star, mu, C_check, rtol=rtol, atol=atol)
    branches = []
    for side in (+1.0, -1.0):
        found = None
        offset = branch_offset
        while offset < 0.2:
            try:
                cand = correct_symmetric((g_at.x0 + side * offset, g_at.ydot0), mu,
                                         FixedQuantity.FIX_JACOBI,
                                         jacobi_target=C_check,
                                         family=FamilyTag.G_PRIME,
                                         rtol=rtol, atol=atol)
            except ConvergenceError:
                offset *= 2.0
                continue
            if abs(cand.x0 - g_at.x0) > 1e-6 and orbit_asymmetry(cand, mu) > 1e-6:
                found = cand
                break
            offset *= 2.0
        if found is not None:
            branches.append(found)
    return PitchforkRecord(C_star, x0_star, star, branches, C_check)


def _g_at_jacobi(near: PeriodicOrbit, mu: float, C_target: float, *, rtol, atol) -> PeriodicOrbit:
    """Doubly-symmetric family member at an exact energy, seeded from ``near``.

    Along the direct family the energy decreases with growing x0, which fixes
    the continuation direction.
    """
    direction = +1.0 if C_target < near.jacobi else -1.0
    fam = continue_family(near, direction=direction, dx0=2e-4,
                          target_jacobi=C_target, steps=400,
                          corrector="quarter", rtol=rtol, atol=atol,
                          compute_stability=False)
    if fam.terminated != "target":
        raise ConvergenceError("could not reach the branch-check energy")
    return fam.orbits[-1]


def orbit_asymmetry(orbit: PeriodicOrbit, mu: float, *, rtol: float = DEFAULT_RTOL,
                    atol: float = DEFAULT_ATOL) -> float:
    """|x| mismatch of the two perpendicular crossings (0 for doubly symmetric)."""
    field = _field(mu)
    out = _half_crossing(field, orbit.x0, orbit.ydot0, rtol=rtol, atol=atol)
    if out is None:
        raise ConvergenceError("no half-period crossing")
    return abs(abs(out[1][0]) - orbit.x0)
