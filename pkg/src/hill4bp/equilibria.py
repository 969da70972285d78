"""Equilibrium points, linear stability, and the critical mass ratio.

All four equilibria have closed forms in the rotated frame:

    L1 = (lambda2^(-1/3), 0),  L2 = -L1,  L3 = (0, lambda1^(-1/3)),  L4 = -L3.

Linearizing the planar equations at an equilibrium gives a 4x4 matrix whose
characteristic polynomial is lambda^4 + A lambda^2 + B with

    A = 4 - Omega_xx - Omega_yy,   B = Omega_xx Omega_yy - Omega_xy^2,

and discriminant D = A^2 - 4B.  L1/L2 always have B < 0 (saddle-center).
L3/L4 have A, B >= 0 and switch from two imaginary pairs (D > 0) to a complex
quadruple (D < 0) at a critical mass ratio mu0.

A closed-form value mu0 = (112 - sqrt(2(1979 + 37 sqrt(12097))))/224 ~ 0.00898964
is in circulation for this threshold, but it does not satisfy D(mu) = 0 with
the coefficients above (D is still positive there); the actual root of
D(mu) = 0 on (0, 1/2) is ~ 0.0119420.  :func:`critical_mass_ratio` computes the
root, cross-validates it against a direct eigenvalue sweep, reports the quoted
value alongside, and raises a discrepancy flag instead of silently preferring
either number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DomainError, InternalInconsistencyError
from .model import Frame, ModelParams, HillField, eigen_structure

__all__ = [
    "EquilibriumLabel",
    "StabilityKind",
    "EquilibriumInfo",
    "equilibrium_points",
    "equilibrium_point",
    "linearize",
    "charpoly_coefficients",
    "classify",
    "classify_from_eigenvalues",
    "CriticalMassResult",
    "critical_mass_ratio",
    "QUOTED_MU0",
]

# quoted closed-form threshold that fails D(mu)=0; kept for comparison output
QUOTED_MU0 = 0.00898964
QUOTED_MU0_CLOSED_FORM = (112.0 - math.sqrt(2.0 * (1979.0 + 37.0 * math.sqrt(12097.0)))) / 224.0

DEGENERACY_TOL = 1e-12


class EquilibriumLabel(Enum):
    L1 = "L1"
    L2 = "L2"
    L3 = "L3"
    L4 = "L4"


class StabilityKind(Enum):
    SADDLE_CENTER = "SaddleCenter"
    CENTER_CENTER = "CenterCenter"
    COMPLEX_SADDLE = "ComplexSaddle"
    DEGENERATE = "Degenerate"


@dataclass(frozen=True)
class EquilibriumInfo:
    label: EquilibriumLabel
    position: np.ndarray          # rotated frame, z = 0
    jacobi: float                 # C at zero velocity
    second_partials: tuple        # (Omega_xx, Omega_yy, Omega_xy)
    charpoly: tuple               # (A, B, D)
    eigenvalues: np.ndarray       # roots of lambda^4 + A lambda^2 + B, sorted
    kind: StabilityKind


def _sorted_eigs(eigs) -> np.ndarray:
    # descending real part, then descending imaginary part
    return np.array(sorted(eigs, key=lambda z: (-z.real, -z.imag)))


def _quartic_roots(A: float, B: float) -> np.ndarray:
    lam2 = np.roots([1.0, A, B])  # roots in lambda^2
    out = []
    for r in lam2:
        s = np.sqrt(complex(r))
        out.extend([s, -s])
    return _sorted_eigs(out)


def charpoly_coefficients(label: EquilibriumLabel, mu: float) -> tuple:
    """Closed-form (A, B, D) of the linearization at the given point."""
    es = eigen_structure(mu)
    lam1, lam2 = es.lambda1, es.lambda2
    d = es.d
    if label in (EquilibriumLabel.L1, EquilibriumLabel.L2):
        oxx, oyy, oxy = 3.0 * lam2, lam1 - lam2, 0.0
        B = -13.5 * (1.0 + d) * d
    else:
        oxx, oyy, oxy = lam2 - lam1, 3.0 * lam1, 0.0
        B = 13.5 * (1.0 - d) * d
    A = 4.0 - oxx - oyy
    D = A * A - 4.0 * B
    return (A, B, D), (oxx, oyy, oxy)


def linearize(label: EquilibriumLabel, mu: float):
    """4x4 variational matrix at an equilibrium plus its (A, B, D)."""
    (A, B, D), (oxx, oyy, oxy) = charpoly_coefficients(label, mu)
    mat = np.array([
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [oxx, oxy, 0.0, 2.0],
        [oxy, oyy, -2.0, 0.0],
    ])
    return mat, (A, B, D)


def classify(A: float, B: float, D: float) -> StabilityKind:
    if B < 0.0:
        return StabilityKind.SADDLE_CENTER
    if abs(D) <= DEGENERACY_TOL:
        return StabilityKind.DEGENERATE
    if D < 0.0:
        return StabilityKind.COMPLEX_SADDLE
    if A > 0.0 and B > 0.0:
        return StabilityKind.CENTER_CENTER
    raise InternalInconsistencyError(f"unclassifiable coefficients A={A}, B={B}, D={D}")


def classify_from_eigenvalues(eigs, tol: float = 1e-9) -> StabilityKind:
    """Independent classification from the numerically computed spectrum."""
    eigs = np.asarray(eigs, dtype=complex)
    re = np.abs(eigs.real) > tol
    im = np.abs(eigs.imag) > tol
    n_real = int(np.sum(re & ~im))
    n_imag = int(np.sum(~re & im))
    n_cplx = int(np.sum(re & im))
    if n_real == 2 and n_imag == 2:
        return StabilityKind.SADDLE_CENTER
    if n_imag == 4:
        return StabilityKind.CENTER_CENTER
    if n_cplx == 4:
        return StabilityKind.COMPLEX_SADDLE
    return StabilityKind.DEGENERATE


def equilibrium_point(label: EquilibriumLabel, mu: float) -> EquilibriumInfo:
    es = eigen_structure(mu)
    if mu == 0.0 and label in (EquilibriumLabel.L3, EquilibriumLabel.L4):
        raise DomainError("L3/L4 recede to infinity as mu -> 0")
    if label is EquilibriumLabel.L1:
        pos = np.array([es.lambda2 ** (-1.0 / 3.0), 0.0])
    elif label is EquilibriumLabel.L2:
        pos = np.array([-es.lambda2 ** (-1.0 / 3.0), 0.0])
    elif label is EquilibriumLabel.L3:
        pos = np.array([0.0, es.lambda1 ** (-1.0 / 3.0)])
    else:
        pos = np.array([0.0, -es.lambda1 ** (-1.0 / 3.0)])
    field = HillField(ModelParams(mu, Frame.ROTATED))
    C = 2.0 * field.omega(pos)
    (A, B, D), partials = charpoly_coefficients(label, mu)
    eigs = _quartic_roots(A, B)
    return EquilibriumInfo(label, pos, C, partials, (A, B, D), eigs, classify(A, B, D))


def equilibrium_points(mu: float) -> list:
    """All equilibria at the given mass ratio (only L1, L2 exist at mu = 0)."""
    labels = [EquilibriumLabel.L1, EquilibriumLabel.L2]
    if mu > 0.0:
        labels += [EquilibriumLabel.L3, EquilibriumLabel.L4]
    return [equilibrium_point(lb, mu) for lb in labels]


# ---------------------------------------------------------------------------
# critical mass ratio
# ---------------------------------------------------------------------------

def _discriminant_L3(mu: float) -> float:
    d = math.sqrt(1.0 - 3.0 * mu + 3.0 * mu * mu)
    return (225.0 * d * d - 222.0 * d + 1.0) / 4.0


def _spectrum_off_axis(mu: float, threshold: float = 1e-7) -> bool:
    """True once the L3 eigenvalues have left the imaginary axis."""
    mat, _ = linearize(EquilibriumLabel.L3, mu)
    eigs = np.linalg.eigvals(mat)
    return bool(np.max(np.abs(eigs.real)) > threshold)


@dataclass(frozen=True)
class CriticalMassResult:
    computed_root: float          # root of D(mu) = 0 located by bisection
    eigenvalue_root: float        # transition point of the direct eigenvalue oracle
    paper_value: float            # quoted value, reported verbatim
    paper_closed_form: float
    discrepancy_flag: bool        # |computed - quoted| > 1e-4
    tol: float

    def as_dict(self) -> dict:
        return {
            "computed_root": self.computed_root,
            "eigenvalue_root": self.eigenvalue_root,
            "paper_value": self.paper_value,
            "paper_closed_form": self.paper_closed_form,
            "discrepancy_flag": self.discrepancy_flag,
            "tol": self.tol,
        }


def critical_mass_ratio(tol: float = 1e-12) -> CriticalMassResult:
    """Locate mu0 where the L3/L4 discriminant D(mu) changes sign.

    Two independent routes must agree: bisection on the closed-form D, and
    bisection on "the direct 4x4 spectrum leaves the imaginary axis".  The
    quoted closed-form value is reported alongside with a discrepancy flag.
    """
    if tol <= 0.0:
        raise DomainError("tol must be positive")
    lo, hi = 1e-6, 0.5
    flo, fhi = _discriminant_L3(lo), _discriminant_L3(hi)
    if flo * fhi > 0.0:
        raise InternalInconsistencyError("no sign change of D(mu) on (0, 1/2)")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _discriminant_L3(mid) * flo > 0.0:
            lo = mid
        else:
            hi = mid
    root = 0.5 * (lo + hi)

    elo, ehi = 1e-6, 0.5
    if _spectrum_off_axis(elo) or not _spectrum_off_axis(ehi):
        raise InternalInconsistencyError("eigenvalue oracle shows no stability transition")
    while ehi - elo > tol:
        mid = 0.5 * (elo + ehi)
        if _spectrum_off_axis(mid):
            ehi = mid
        else:
            elo = mid
    eroot = 0.5 * (elo + ehi)

    return CriticalMassResult(
        computed_root=root,
        eigenvalue_root=eroot,
        paper_value=QUOTED_MU0,
        paper_closed_form=QUOTED_MU0_CLOSED_FORM,
        discrepancy_flag=abs(root - QUOTED_MU0) > 1e-4,
        tol=tol,
    )
