"""Linear stability analysis on the partitioned oscillatory test problem

    y' = i k1 y + i k2 y,

with i k1 assigned to the integrator's linear (exponential/implicit) slot and
i k2 y treated as the nonlinearity.  Repartitioning by angle rho moves the
real shift eps*|k1| (eps = tan rho) between the two slots:

    R^(k1, k2) = R(i k1 - eps |k1|,  i k2 + eps |k1|).

One-step methods are probed by executing one literal step of the production
stepper; the block method gets a 5x5 transfer matrix whose spectral radius
(plus a power-boundedness check near 1) decides stability.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .integrators import (DiagonalProblem, MethodSpec, StepperState,
                          step_erk4, step_esdc6, step_epbm5, step_exp_euler,
                          step_imrk4, step_rk4)
from .phicore import PhiCache

__all__ = [
    "DahlquistPoint", "RepartitionAngle", "StabilityGrid",
    "stability_scalar", "epbm_transfer_matrix", "power_bounded_classification",
    "region_grid", "grid_to_csv", "column_split_exists", "asymptotic_decay",
    "STABLE_TOL", "MARGINAL_LIMIT",
]

STABLE_TOL = 1e-10      # |R| <= 1 + STABLE_TOL classifies stable
MARGINAL_LIMIT = 1.01   # .. <= MARGINAL_LIMIT classifies marginal

_ONE_STEP = ("erk4", "esdc6", "imrk4", "rk4", "exp_euler")


@dataclass(frozen=True)
class DahlquistPoint:
    k1: float
    k2: float


@dataclass(frozen=True)
class RepartitionAngle:
    """Rotation angle of the linear eigenvalue into the left half-plane."""
    rho: float

    def __post_init__(self):
        if not 0.0 <= self.rho < math.pi / 2:
            raise ValueError("rho must lie in [0, pi/2)")

    @property
    def epsilon(self) -> float:
        return math.tan(self.rho)


def _split_args(k1, k2, angle: Optional[RepartitionAngle]):
    """Exponential-slot and explicit-slot arguments for the executed step."""
    eps = angle.epsilon if angle is not None else 0.0
    shift = eps * np.abs(k1)
    return 1j * k1 - shift, 1j * k2 + shift


def _one_step_R(method: MethodSpec, z1: np.ndarray, z2: np.ndarray) -> np.ndarray:
    """Execute one literal h=1 step from y=1 on the diagonal problem."""
    problem = DiagonalProblem(L_diag=z1, nonlinear=lambda t, y: z2 * y)
    state = StepperState(t=0.0, y=np.ones(z1.shape, dtype=np.complex128))
    fam = method.family
    if fam == "erk4":
        out = step_erk4(problem, state, 1.0, PhiCache(z1))
    elif fam == "esdc6":
        out = step_esdc6(problem, state, 1.0, PhiCache(z1), method.esdc)
    elif fam == "exp_euler":
        out = step_exp_euler(problem, state, 1.0, PhiCache(z1))
    elif fam == "imrk4":
        out = step_imrk4(problem, state, 1.0, method.butcher)
    elif fam == "rk4":
        out = step_rk4(problem, state, 1.0)
    else:
        raise ValueError("not a one-step method: %r" % (fam,))
    return out.y


def stability_scalar(method: MethodSpec, point: DahlquistPoint,
                     angle: Optional[RepartitionAngle] = None) -> complex:
    """Amplification factor R^(k1, k2) of a one-step method."""
    if method.family not in _ONE_STEP:
        raise ValueError("stability_scalar needs a one-step method; "
                         "use epbm_transfer_matrix for epbm5")
    z1, z2 = _split_args(np.array([point.k1]), np.array([point.k2]), angle)
    return complex(_one_step_R(method, z1, z2)[0])


def _epbm_transfer_batch(method: MethodSpec, z1: np.ndarray,
                         z2: np.ndarray) -> np.ndarray:
    """(n, 5, 5) transfer matrices: column j is the composite step applied
    to the j-th basis block."""
    problem = DiagonalProblem(L_diag=z1, nonlinear=lambda t, y: z2 * y)
    phis = PhiCache(z1)
    n = z1.size
    M = np.empty((n, 5, 5), dtype=np.complex128)
    for col in range(5):
        block = np.zeros((5, n), dtype=np.complex128)
        block[col] = 1.0
        state = StepperState(t=0.0, block=block, r=1.0)
        out = step_epbm5(problem, state, phis, method.epbm)
        M[:, :, col] = out.block.T
    return M


def epbm_transfer_matrix(method: MethodSpec, point: DahlquistPoint,
                         angle: Optional[RepartitionAngle] = None) -> np.ndarray:
    """5x5 one-composite-step transfer matrix at a single (k1, k2)."""
    if method.family != "epbm5":
        raise ValueError("transfer matrix is defined for epbm5")
    z1, z2 = _split_args(np.array([point.k1]), np.array([point.k2]), angle)
    return _epbm_transfer_batch(method, z1, z2)[0]


def power_bounded_classification(M: np.ndarray, tol: float = 1e-8) -> str:
    """Classify by spectral radius; near radius 1 additionally power the
    matrix 10^4 times as a defective-eigenvalue surrogate (max-norm must
    stay within 10x its initial value)."""
    try:
        radius = float(np.max(np.abs(np.linalg.eigvals(M))))
    except np.linalg.LinAlgError:
        warnings.warn("eigenvalue computation failed; classifying marginal")
        return "marginal"
    if radius > MARGINAL_LIMIT:
        return "unstable"
    if abs(radius - 1.0) <= tol:
        norm0 = float(np.max(np.abs(M)))
        P = M.copy()
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(10_000):
                P = P @ M
                if not np.max(np.abs(P)) <= 10.0 * norm0:
                    return "unstable"
    return "stable" if radius <= 1.0 + STABLE_TOL else "marginal"


_CLASS_NAMES = np.array(["stable", "marginal", "unstable"])


def _classify(absR: np.ndarray) -> np.ndarray:
    idx = np.where(absR <= 1.0 + STABLE_TOL, 0,
                   np.where(absR <= MARGINAL_LIMIT, 1, 2))
    return _CLASS_NAMES[idx]


@dataclass
class StabilityGrid:
    method: str
    rho: float
    k1_samples: np.ndarray      # (n1,)
    k2_samples: np.ndarray      # (n2,)
    absR: np.ndarray            # (n1, n2) spectral radius / |R|
    classification: np.ndarray  # (n1, n2) of {stable, marginal, unstable}


def region_grid(method: MethodSpec, k1_range: tuple[float, float],
                k2_range: tuple[float, float], resolution: tuple[int, int],
                angle: Optional[RepartitionAngle] = None) -> StabilityGrid:
    """Sample |R^| on a (k1, k2) product grid (vectorized: the whole grid is
    flattened into one diagonal problem and stepped once)."""
    n1, n2 = int(resolution[0]), int(resolution[1])
    if n1 < 1 or n2 < 1:
        raise ValueError("resolution must be positive")
    if k1_range[0] < 0:
        raise ValueError("k1 range must lie in [0, inf)")
    k1 = np.linspace(k1_range[0], k1_range[1], n1)
    k2 = np.linspace(k2_range[0], k2_range[1], n2)
    K1, K2 = (a.ravel() for a in np.meshgrid(k1, k2, indexing="ij"))
    z1, z2 = _split_args(K1, K2, angle)
    with np.errstate(over="ignore", invalid="ignore"):
        if method.family == "epbm5":
            M = _epbm_transfer_batch(method, z1, z2)
            absR = np.max(np.abs(np.linalg.eigvals(M)), axis=1)
        else:
            absR = np.abs(_one_step_R(method, z1, z2))
    absR = absR.reshape(n1, n2)
    return StabilityGrid(method=method.family,
                         rho=angle.rho if angle is not None else 0.0,
                         k1_samples=k1, k2_samples=k2, absR=absR,
                         classification=_classify(absR))


def grid_to_csv(grid: StabilityGrid, path) -> None:
    """k1-major CSV dump: header k1,k2,absR,class; 17 significant digits."""
    lines = ["k1,k2,absR,class"]
    for i, a in enumerate(grid.k1_samples):
        row_abs = grid.absR[i]
        row_cls = grid.classification[i]
        for j, b in enumerate(grid.k2_samples):
            lines.append("%.17g,%.17g,%.17g,%s" % (a, b, row_abs[j], row_cls[j]))
    with open(path, "w", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def column_split_exists(grid: StabilityGrid) -> bool:
    """True when some k1 column's stable set is disconnected along k2
    (stable, then unstable, then stable again) -- the over-partitioning
    split signature."""
    S = grid.classification == "stable"
    stable_above = np.logical_or.accumulate(S[:, ::-1], axis=1)[:, ::-1]
    stable_below = np.logical_or.accumulate(S, axis=1)
    gap = ~S & np.roll(stable_below, 1, axis=1) & np.roll(stable_above, -1, axis=1)
    gap[:, 0] = False
    gap[:, -1] = False
    return bool(gap.any())


def asymptotic_decay(poly_coeffs, k1_values) -> np.ndarray:
    """|integral_0^1 e^{i k (s-1)} p(s) ds| via the integration-by-parts series

        sum_m (-1)^m (p^(m)(1) - e^{-ik} p^(m)(0)) / (ik)^(m+1),

    exact for polynomials.  Decays like 1/k, which is why the explicit
    stage couplings of exponential methods lose a power of k1.
    """
    from numpy.polynomial import polynomial as P
    c = np.atleast_1d(np.asarray(poly_coeffs, dtype=np.float64))
    if c.size == 0 or not np.isfinite(c).all():
        raise ValueError("invalid polynomial coefficients")
    k = np.atleast_1d(np.asarray(k1_values, dtype=np.float64))
    if np.any(k == 0) or not np.isfinite(k).all():
        raise ValueError("k1 values must be finite and nonzero")
    ik = 1j * k
    emk = np.exp(-ik)
    total = np.zeros(k.shape, dtype=np.complex128)
    d = c.copy()
    for m in range(c.size):
        total += (-1.0) ** m * (P.polyval(1.0, d) - emk * P.polyval(0.0, d)) / ik ** (m + 1)
        d = P.polyder(d)
    return np.abs(total)
