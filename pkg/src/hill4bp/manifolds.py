"""Invariant manifolds of Lyapunov orbits and their homoclinic intersections.

Branches are seeded by transporting the monodromy eigenvectors along the
orbit with the state-transition matrix, normalizing in position components,
and displacing by +-epsilon toward (inner) or away from (outer) the origin.
Unstable branches are propagated forward, stable ones backward, recording
every transversal crossing of the chosen section; the n-th crossings of all
seeds assemble into the cut curve W_n.  Cut indices count crossings of the
full section plane -- both half-plane subsections advance the same counter.

First homoclinic intersections are located by scanning index pairs in
increasing total order and intersecting the cut polylines; a candidate
intersection is accepted only if it survives local refinement (bisection on
the seed parameter of both branches), which also rejects spurious crossings
of coarse polylines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .errors import ConvergenceError, DomainError
from .integrate import GUARD_RADIUS, VariationalField, propagate
from .model import Frame, HillField, ModelParams, eigen_structure, rotate_state
from .orbits import PeriodicOrbit
from .poincare import SectionDef, SectionId

__all__ = [
    "ManifoldSense",
    "RegionSide",
    "ManifoldBranch",
    "seed_manifold",
    "CutCurve",
    "GlobalizedManifold",
    "globalize",
    "HomoclinicRecord",
    "first_intersection",
    "polyline_intersections",
]


class ManifoldSense(Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"


class RegionSide(Enum):
    INNER = "inner"
    OUTER = "outer"


@dataclass
class ManifoldBranch:
    """Seeded manifold branch; keeps the transport data for refinement."""

    orbit: PeriodicOrbit
    mu: float
    sense: ManifoldSense
    side: RegionSide
    epsilon: float
    seed_params: list                 # orbit phases in [0, 1)
    seeds: list                       # rotated-frame states
    _transport: object = field(default=None, repr=False)
    _eigvec: np.ndarray = field(default=None, repr=False)
    _sign: float = 1.0

    def seed_at(self, param: float) -> np.ndarray:
        """Seed state at an arbitrary orbit phase (used by adaptive insertion)."""
        t = (param % 1.0) * self.orbit.period
        aug = self._transport(t)
        state, Phi = VariationalField.split(aug)
        w = Phi @ self._eigvec
        w = w / math.hypot(w[0], w[1])
        return state + self._sign * self.epsilon * w


def _monodromy_eigvectors(M: np.ndarray):
    ev, V = np.linalg.eig(M)
    iu = int(np.argmax(np.abs(ev)))
    isv = int(np.argmin(np.abs(ev)))
    lam = ev[iu]
    if abs(lam.imag) > 1e-9 * abs(lam) or lam.real <= 1.0:
        raise DomainError("orbit has no real unstable eigenvalue (stable orbit?)")
    wu = np.real(V[:, iu])
    ws = np.real(V[:, isv])
    return wu / np.linalg.norm(wu), ws / np.linalg.norm(ws), lam.real


def _branch_side(orbit: PeriodicOrbit, mu: float, seed: np.ndarray, forward: bool,
                 *, rtol: float, atol: float) -> RegionSide:
    """Classify a displaced seed by where its trajectory leaves the orbit zone."""
    fieldfn = HillField(ModelParams(mu, Frame.ROTATED))
    xs = abs(orbit.x0)
    r_in, r_out = 0.75 * xs, 1.25 * xs

    def leave(t, s):
        r = math.hypot(s[0], s[1])
        return (r - r_in) * (r - r_out)
    leave.terminal = True
    leave.direction = 1
    span = 40.0 * orbit.period * (1.0 if forward else -1.0)
    traj = propagate(fieldfn, seed, span, events=[leave], rtol=rtol, atol=atol,
                     dense=False)
    if traj.status != "event":
        raise ConvergenceError("seed did not leave the orbit neighborhood")
    r_end = math.hypot(traj.final_state[0], traj.final_state[1])
    return RegionSide.INNER if r_end <= r_in * 1.01 else RegionSide.OUTER


def seed_manifold(orbit: PeriodicOrbit, mu: float, sense: ManifoldSense,
                  side: RegionSide, epsilon: float = 1e-6, n: int = 200, *,
                  rtol: float = 1e-12, atol: float = 1e-12) -> ManifoldBranch:
    """Seeds along the orbit, displaced into the requested region.

    The displacement direction at phase t is the STM-transported monodromy
    eigenvector (unstable or stable per ``sense``), normalized so its
    position part has unit length; the sign is fixed once (the transported
    frame cannot flip over one period since the eigenvalue is positive) by
    propagating a probe seed and checking which region it enters.
    """
    if not (orbit.stability_index > 1.0):
        raise DomainError("manifolds require an unstable orbit (index > 1)")
    fieldfn = HillField(ModelParams(mu, Frame.ROTATED))
    var = VariationalField(fieldfn)
    ref = propagate(var, VariationalField.augment(orbit.initial_state()),
                    orbit.period, rtol=rtol, atol=atol, dense=True)
    _, M = VariationalField.split(ref.final_state)
    wu, ws, _ = _monodromy_eigvectors(M)
    w0 = wu if sense is ManifoldSense.UNSTABLE else ws
    forward = sense is ManifoldSense.UNSTABLE

    branch = ManifoldBranch(orbit, mu, sense, side, epsilon, [], [],
                            _transport=ref, _eigvec=w0, _sign=1.0)
    probe = branch.seed_at(0.0)
    got = _branch_side(orbit, mu, probe, forward, rtol=rtol, atol=atol)
    if got is not side:
        branch._sign = -1.0
    branch.seed_params = [i / n for i in range(n)]
    branch.seeds = [branch.seed_at(p) for p in branch.seed_params]
    return branch


# ---------------------------------------------------------------------------
# globalization
# ---------------------------------------------------------------------------

@dataclass
class CutCurve:
    """Ordered n-th section cuts of one manifold branch."""

    sense: ManifoldSense
    cut_index: int
    section: SectionId
    points: np.ndarray            # (m, 2) columns (y, ydot)
    params: np.ndarray            # seed phases, ascending
    closed: bool
    tangential: int = 0

    def self_intersections(self) -> int:
        return len(polyline_intersections(self.points, self.points,
                                          closed_a=self.closed, closed_b=self.closed,
                                          self_pair=True))

    def is_simple(self) -> bool:
        return self.self_intersections() == 0


@dataclass
class GlobalizedManifold:
    branch: ManifoldBranch
    section: SectionDef
    max_cuts: int
    curves: dict                   # cut_index -> CutCurve
    dropped: int                   # seeds stopped by the collision guard
    cut_records: dict              # phase -> list of (coords, tangential)
    max_radius: float

    def curve(self, n: int) -> CutCurve:
        return self.curves[n]


def _seed_cuts(branch: ManifoldBranch, seed: np.ndarray, section: SectionDef,
               max_cuts: int, *, rtol: float, atol: float, tmax: float):
    """Crossings of the section plane for one seed; returns (cuts, guarded, rmax)."""
    mu = branch.mu
    if section.frame is Frame.UNROTATED:
        fieldfn = HillField(ModelParams(mu, Frame.UNROTATED))
        state = rotate_state(seed, eigen_structure(mu), Frame.UNROTATED)
    else:
        fieldfn = HillField(ModelParams(mu, Frame.ROTATED))
        state = np.asarray(seed, dtype=float)

    def ev(t, s):
        return s[0] - section.offset
    ev.terminal = max_cuts
    ev.direction = 0
    forward = branch.sense is ManifoldSense.UNSTABLE
    span = tmax if forward else -tmax
    traj = propagate(fieldfn, state, span, events=[ev], guard_radius=GUARD_RADIUS,
                     rtol=rtol, atol=atol, dense=False)
    guarded = traj.status == "guard"
    rmax = float(np.max(np.hypot(traj.y[0], traj.y[1])))
    cuts = []
    for te, se in zip(traj.t_events[0], traj.y_events[0]):
        tangential = abs(se[2]) <= 1e-10
        cuts.append((np.array([se[1], se[3]]), bool(tangential)))
    return cuts, guarded, rmax


def globalize(branch: ManifoldBranch, section: SectionDef, max_cuts: int, *,
              adaptive_threshold: float = 1e-3, max_seeds: int = 1200,
              max_passes: int = 6, rtol: float = 5e-11, atol: float = 5e-11,
              tmax: float = 2000.0) -> GlobalizedManifold:
    """Propagate every seed to ``max_cuts`` section crossings and assemble cuts.

    Adjacent section images separated by more than ``adaptive_threshold``
    trigger midpoint seed insertion (up to ``max_seeds`` trajectories).
    Seeds stopped by the collision guard are dropped and counted.
    """
    records: dict = {}
    guard_drops = 0
    max_radius = 0.0

    def run(param: float):
        nonlocal guard_drops, max_radius
        seed = branch.seed_at(param)
        cuts, guarded, rmax = _seed_cuts(branch, seed, section, max_cuts,
                                         rtol=rtol, atol=atol, tmax=tmax)
        max_radius = max(max_radius, rmax)
        if guarded:
            guard_drops += 1
            records[param] = None
        else:
            records[param] = cuts

    for p in branch.seed_params:
        run(p)

    for _ in range(max_passes):
        params = sorted(p for p, c in records.items() if c is not None)
        if len(records) >= max_seeds or len(params) < 2:
            break
        to_insert = []
        m = len(params)
        for i in range(m):
            a, b = params[i], params[(i + 1) % m]
            gap_param = (b - a) % 1.0
            if gap_param <= 1.0 / (8 * max_seeds):
                continue
            ca, cb = records[a], records[b]
            need = False
            for k in range(min(len(ca), len(cb))):
                if np.linalg.norm(ca[k][0] - cb[k][0]) > adaptive_threshold:
                    need = True
                    break
            if need:
                to_insert.append((a + gap_param / 2.0) % 1.0)
        if not to_insert:
            break
        for p in to_insert:
            if len(records) >= max_seeds:
                break
            if p not in records:
                run(p)

    params = sorted(p for p, c in records.items() if c is not None)
    curves = {}
    for ncut in range(1, max_cuts + 1):
        pts, prs, ntang = [], [], 0
        for p in params:
            cuts = records[p]
            if len(cuts) >= ncut:
                coords, tang = cuts[ncut - 1]
                pts.append(coords)
                prs.append(p)
                ntang += int(tang)
        closed = len(pts) == len(params) and guard_drops == 0 and len(pts) > 2
        curves[ncut] = CutCurve(branch.sense, ncut, section.id,
                                np.array(pts).reshape(-1, 2), np.array(prs),
                                closed, ntang)
    return GlobalizedManifold(branch, section, max_cuts, curves, guard_drops,
                              records, max_radius)


# ---------------------------------------------------------------------------
# polyline intersections and homoclinic records
# ---------------------------------------------------------------------------

def _segments(points: np.ndarray, closed: bool):
    n = len(points)
    if n < 2:
        return np.zeros((0, 2)), np.zeros((0, 2))
    a = points
    b = np.roll(points, -1, axis=0)
    if not closed:
        a, b = a[:-1], b[:-1]
    return a, b


def polyline_intersections(A: np.ndarray, B: np.ndarray, *, closed_a: bool = True,
                           closed_b: bool = True, self_pair: bool = False) -> list:
    """Intersection points of two polylines (vectorized segment sweep).

    With ``self_pair`` the polylines are identical and adjacent/identical
    segment pairs are excluded, so the result counts self-intersections.
    """
    a0, a1 = _segments(np.asarray(A, dtype=float), closed_a)
    b0, b1 = _segments(np.asarray(B, dtype=float), closed_b)
    na, nb = len(a0), len(b0)
    if na == 0 or nb == 0:
        return []
    d1 = a1 - a0
    d2 = b1 - b0
    out = []
    for i in range(na):
        den = d1[i, 0] * d2[:, 1] - d1[i, 1] * d2[:, 0]
        dx = b0[:, 0] - a0[i, 0]
        dy = b0[:, 1] - a0[i, 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (dx * d2[:, 1] - dy * d2[:, 0]) / den
            u = (dx * d1[i, 1] - dy * d1[i, 0]) / den
        hit = (den != 0.0) & (t >= 0.0) & (t <= 1.0) & (u >= 0.0) & (u <= 1.0)
        if self_pair:
            idx = np.arange(nb)
            sep = np.minimum((idx - i) % nb, (i - idx) % nb)
            hit &= sep > 1
        for j in np.flatnonzero(hit):
            out.append((a0[i] + t[j] * d1[i], i, int(j), float(t[j]), float(u[j])))
    return out


@dataclass(frozen=True)
class HomoclinicRecord:
    n_u: int
    n_s: int
    section: SectionId
    points: np.ndarray            # (k, 2) intersection points in (y, ydot)
    jacobi: float


def _refine_candidate(glob_u: GlobalizedManifold, glob_s: GlobalizedManifold,
                      nu: int, ns: int, hit, *, tol: float = 1e-8,
                      max_levels: int = 40, rtol: float = 5e-11,
                      atol: float = 5e-11, tmax: float = 2000.0) -> Optional[np.ndarray]:
    """Bisect the seed parameters around a candidate until it converges.

    Each level inserts the parameter midpoint of the bracketing segment on
    the coarser branch and re-intersects locally; candidates that disappear
    under refinement are spurious artifacts of coarse polylines.
    """
    point, iu, js, _, _ = hit
    cu, cs = glob_u.curve(nu), glob_s.curve(ns)
    pu = [cu.params[iu], cu.params[(iu + 1) % len(cu.params)]]
    ps = [cs.params[js], cs.params[(js + 1) % len(cs.params)]]
    au = [cu.points[iu], cu.points[(iu + 1) % len(cu.points)]]
    as_ = [cs.points[js], cs.points[(js + 1) % len(cs.points)]]

    def midpoint(glob, pa, pb, ncut):
        pm = (pa + ((pb - pa) % 1.0) / 2.0) % 1.0
        seed = glob.branch.seed_at(pm)
        cuts, guarded, _ = _seed_cuts(glob.branch, seed, glob.section,
                                      max(nu, ns), rtol=rtol, atol=atol, tmax=tmax)
        if guarded or len(cuts) < ncut:
            return pm, None
        return pm, cuts[ncut - 1][0]

    prev = point
    for _ in range(max_levels):
        len_u = np.linalg.norm(au[1] - au[0])
        len_s = np.linalg.norm(as_[1] - as_[0])
        if max(len_u, len_s) < tol:
            return prev
        if len_u >= len_s:
            pm, qm = midpoint(glob_u, pu[0], pu[1], nu)
            if qm is None:
                return None
            halves = [((pu[0], pm), (au[0], qm)), ((pm, pu[1]), (qm, au[1]))]
            found = None
            for (pa, pb), (qa, qb) in halves:
                hits = polyline_intersections(np.array([qa, qb]), np.array(as_),
                                              closed_a=False, closed_b=False)
                if hits:
                    found = ((pa, pb), (qa, qb), hits[0][0])
                    break
            if found is None:
                return None
            (pu, au, prev) = (list(found[0]), list(found[1]), found[2])
        else:
            pm, qm = midpoint(glob_s, ps[0], ps[1], ns)
            if qm is None:
                return None
            halves = [((ps[0], pm), (as_[0], qm)), ((pm, ps[1]), (qm, as_[1]))]
            found = None
            for (pa, pb), (qa, qb) in halves:
                hits = polyline_intersections(np.array(au), np.array([qa, qb]),
                                              closed_a=False, closed_b=False)
                if hits:
                    found = ((pa, pb), (qa, qb), hits[0][0])
                    break
            if found is None:
                return None
            (ps, as_, prev) = (list(found[0]), list(found[1]), found[2])
    return prev


def first_intersection(cuts_u, cuts_s, *, max_sum: Optional[int] = None,
                       refine: bool = True, jacobi: Optional[float] = None) -> list:
    """Earliest homoclinic intersections between unstable and stable cuts.

    Index pairs are scanned in increasing n_u + n_s; the minimal total with a
    (refinement-surviving) intersection yields one record per intersecting
    pair at that total, which captures the symmetric partner (n_s, n_u)
    alongside (n_u, n_s).  Returns an empty list when nothing intersects.
    """
    glob_u = cuts_u if isinstance(cuts_u, GlobalizedManifold) else None
    glob_s = cuts_s if isinstance(cuts_s, GlobalizedManifold) else None
    curves_u = glob_u.curves if glob_u else {c.cut_index: c for c in cuts_u}
    curves_s = glob_s.curves if glob_s else {c.cut_index: c for c in cuts_s}
    nu_max = max(curves_u)
    ns_max = max(curves_s)
    if max_sum is None:
        max_sum = nu_max + ns_max
    C = jacobi if jacobi is not None else (glob_u.branch.orbit.jacobi if glob_u else math.nan)
    for total in range(2, max_sum + 1):
        records = []
        for nu in range(1, min(nu_max, total - 1) + 1):
            ns = total - nu
            if ns < 1 or ns > ns_max:
                continue
            cu, cs = curves_u[nu], curves_s[ns]
            if len(cu.points) < 2 or len(cs.points) < 2:
                continue
            hits = polyline_intersections(cu.points, cs.points,
                                          closed_a=cu.closed, closed_b=cs.closed)
            pts = []
            for hit in hits:
                if refine and glob_u is not None and glob_s is not None:
                    refined = _refine_candidate(glob_u, glob_s, nu, ns, hit)
                    if refined is None:
                        continue
                    pts.append(refined)
                else:
                    pts.append(hit[0])
            if pts:
                records.append(HomoclinicRecord(nu, ns, cu.section,
                                                np.array(pts).reshape(-1, 2), C))
        if records:
            return records
    return []
