"""Open quantum harmonic oscillator model construction.

A multimode oscillator is parameterised by a CCR matrix Theta (real
antisymmetric, nonsingular), an energy matrix R (real symmetric) and a
coupling matrix M (real m x n), plus a time horizon T and a risk
sensitivity theta.  The drift and dispersion matrices of the governing
linear dynamics are

    A = 2 Theta (R + M^T J M),      B = 2 Theta M^T,

with J the canonical antisymmetric structure of the m field channels.
Preservation of the commutation relations ties everything together
through the physical realizability identity

    A Theta + Theta A^T + mho = 0,      mho := B J B^T,

which holds exactly by construction and, for Hurwitz A, makes Theta
recoverable from (A, mho) alone via a continuous Lyapunov solve.  The
same solver yields the stationary one-point covariance P0 of the
invariant Gaussian state from A P0 + P0 A^T + B B^T = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import solve_continuous_lyapunov

from .errors import (
    LyapunovSolveFailed,
    NonFinite,
    NotAntisymmetric,
    NotHurwitz,
    SingularS,
    SingularTheta,
)

# 2x2 antisymmetric unit; J for m channels is J2 kron I_{m/2}.
J2 = np.array([[0.0, 1.0], [-1.0, 0.0]])

ANTISYMMETRY_RTOL = 1e-10
SINGULAR_RCOND = 1e-12     # reciprocal condition number below this counts as singular
HURWITZ_MARGIN = 1e-10     # spectral abscissa must be below -margin
RECOVERY_RTOL = 1e-8


@dataclass(frozen=True, eq=False)
class OscillatorSpec:
    """Physical parameters of a multimode oscillator.

    n and m are the numbers of system variables and field channels, both
    even.  T is the time horizon and theta the risk sensitivity.
    """

    n: int
    m: int
    Theta: np.ndarray
    R: np.ndarray
    M: np.ndarray
    T: float
    theta: float


@dataclass(frozen=True, eq=False)
class SystemMatrices:
    """Derived drift/dispersion matrices with diagnostic residuals.

    pr_residual is the Frobenius norm of A Theta + Theta A^T + mho
    (zero up to rounding for any valid spec).  hurwitz and mho_singular
    are advisory flags; operations that require them hard-fail instead.
    """

    A: np.ndarray
    B: np.ndarray
    mho: np.ndarray
    J: np.ndarray
    pr_residual: float
    hurwitz: bool
    mho_singular: bool


@dataclass(frozen=True, eq=False)
class GaussianStateData:
    """One-point covariance of the invariant Gaussian state."""

    P0: np.ndarray


def canonical_j(m: int) -> np.ndarray:
    """Antisymmetric channel structure J2 kron I_{m/2} for m even."""
    if m % 2 != 0 or m <= 0:
        raise NotAntisymmetric(f"channel count must be even and positive, got {m}")
    return np.kron(J2, np.eye(m // 2))


def reciprocal_cond(X: np.ndarray) -> float:
    """sigma_min / sigma_max; zero for the zero matrix."""
    s = np.linalg.svd(X, compute_uv=False)
    if s[0] == 0.0:
        return 0.0
    return float(s[-1] / s[0])


def is_hurwitz(A: np.ndarray, margin: float = HURWITZ_MARGIN) -> bool:
    return bool(np.max(np.linalg.eigvals(A).real) < -margin)


def validate_spec(spec: OscillatorSpec) -> None:
    """Check shapes, finiteness, antisymmetry of Theta and its nonsingularity."""
    Theta, R, M = np.asarray(spec.Theta), np.asarray(spec.R), np.asarray(spec.M)
    for name, X in (("Theta", Theta), ("R", R), ("M", M)):
        if not np.all(np.isfinite(X)):
            raise NonFinite(f"{name} contains non-finite entries")
    if spec.n % 2 != 0 or spec.m % 2 != 0 or spec.n <= 0 or spec.m <= 0:
        raise NotAntisymmetric(f"n and m must be even positive, got n={spec.n}, m={spec.m}")
    if Theta.shape != (spec.n, spec.n) or R.shape != (spec.n, spec.n):
        raise NotAntisymmetric("Theta and R must be n x n")
    if M.shape != (spec.m, spec.n):
        raise NotAntisymmetric(f"M must be m x n = {spec.m} x {spec.n}, got {M.shape}")
    scale = max(1.0, float(np.linalg.norm(Theta)))
    if np.linalg.norm(Theta + Theta.T) > ANTISYMMETRY_RTOL * scale:
        raise NotAntisymmetric("Theta is not antisymmetric within tolerance")
    if reciprocal_cond(Theta) < SINGULAR_RCOND:
        raise SingularTheta("Theta is singular or numerically rank deficient")


def build_system(spec: OscillatorSpec) -> SystemMatrices:
    """Construct A, B, mho from the spec and compute the realizability residual."""
    validate_spec(spec)
    Theta = np.asarray(spec.Theta, dtype=float)
    R = np.asarray(spec.R, dtype=float)
    M = np.asarray(spec.M, dtype=float)
    J = canonical_j(spec.m)
    A = 2.0 * Theta @ (R + M.T @ J @ M)
    B = 2.0 * Theta @ M.T
    mho = B @ J @ B.T
    pr = float(np.linalg.norm(A @ Theta + Theta @ A.T + mho))
    return SystemMatrices(
        A=A, B=B, mho=mho, J=J,
        pr_residual=pr,
        hurwitz=is_hurwitz(A),
        mho_singular=reciprocal_cond(mho) < SINGULAR_RCOND,
    )


def recover_ccr(A: np.ndarray, mho: np.ndarray) -> np.ndarray:
    """Recover the CCR matrix from (A, mho) for Hurwitz A.

    Solves A X + X A^T + mho = 0, the Lyapunov form of the integral
    of e^{tA} mho e^{tA^T} over [0, inf).  The result is antisymmetrized
    after a consistency check, since the exact solution inherits
    antisymmetry from mho.
    """
    if not is_hurwitz(A):
        raise NotHurwitz("CCR recovery requires a Hurwitz drift matrix")
    try:
        X = solve_continuous_lyapunov(A, -np.asarray(mho, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise LyapunovSolveFailed(str(exc)) from exc
    if not np.all(np.isfinite(X)):
        raise LyapunovSolveFailed("Lyapunov solve returned non-finite entries")
    scale = max(1.0, float(np.linalg.norm(X)))
    if np.linalg.norm(X + X.T) > 1e-6 * scale:
        raise LyapunovSolveFailed("recovered matrix is far from antisymmetric; "
                                  "the Schur form is likely ill-conditioned")
    return 0.5 * (X - X.T)


def solve_state_ale(A: np.ndarray, B: np.ndarray) -> GaussianStateData:
    """Stationary covariance P0 >= 0 solving A P0 + P0 A^T + B B^T = 0."""
    if not is_hurwitz(A):
        raise NotHurwitz("the invariant Gaussian state requires a Hurwitz drift matrix")
    BBt = np.asarray(B, dtype=float) @ np.asarray(B, dtype=float).T
    try:
        X = solve_continuous_lyapunov(A, -BBt)
    except np.linalg.LinAlgError as exc:
        raise LyapunovSolveFailed(str(exc)) from exc
    P0 = 0.5 * (X + X.T)
    lo = float(np.linalg.eigvalsh(P0).min())
    if lo < -1e-10 * max(1.0, float(np.linalg.norm(P0))):
        raise LyapunovSolveFailed(f"state covariance has eigenvalue {lo}, not PSD")
    return GaussianStateData(P0=P0)


def transform_system(spec: OscillatorSpec, S: np.ndarray) -> OscillatorSpec:
    """Coordinate change X -> S X: Theta -> S Theta S^T, R -> S^-T R S^-1, M -> M S^-1.

    The derived matrices then transform by similarity, A -> S A S^-1,
    and B -> S B, leaving the realizability identity intact.
    """
    S = np.asarray(S, dtype=float)
    if S.shape != (spec.n, spec.n):
        raise SingularS(f"S must be {spec.n} x {spec.n}, got {S.shape}")
    if reciprocal_cond(S) < SINGULAR_RCOND:
        raise SingularS("S is singular or numerically rank deficient")
    S_inv = np.linalg.inv(S)
    return replace(
        spec,
        Theta=S @ spec.Theta @ S.T,
        R=S_inv.T @ spec.R @ S_inv,
        M=spec.M @ S_inv,
    )
