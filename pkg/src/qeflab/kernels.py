"""Two-point kernels and the boundary-value-problem matrices.

The commutator structure of the oscillator variables over [0, T] is
carried by the kernel

    Lambda(tau) = e^{tau A} Theta   (tau >= 0),
    Lambda(tau) = Theta e^{-tau A^T} (tau < 0),

which satisfies Lambda(tau) = -Lambda(-tau)^T, and by the stationary
covariance kernel P(tau) = e^{tau A} P0 (tau >= 0), P(-tau) = P(tau)^T.
The integral operator L(f)(s) = int_0^T Lambda(s-t) f(t) dt is skew
self-adjoint; its eigenproblem reduces to a linear two-point boundary
value problem whose companion matrices are assembled here:

    F = [[0, I], [mho A^T mho^-1 A, A - mho A^T mho^-1]],
    U = [A, -I],        V = [I; -Theta A^T Theta^-1],
    D(omega) = F + (i/omega) [[0, 0], [mho, 0]],
    G(T) = U e^{TF} V,  E(omega) = U e^{T D(omega)} V.

G(T) obeys det G(T) = e^{-T tr A} det(-mho Theta^-1), which doubles as a
built-in self-test of the assembly, and the kernel itself is reproduced
by the Green-function formula

    Lambda(s-t) = [I 0] (e^{sF} V G(T)^-1 U e^{(T-t)F}
                          - chi_{[0,s]}(t) e^{(s-t)F}) [0; mho].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy.linalg import expm

from . import quadrature
from .errors import (
    DeterminantIdentityViolated,
    GridMismatch,
    NonFinite,
    NonpositiveOmega,
    SingularG,
    SingularMho,
)
from .model import (
    SINGULAR_RCOND,
    OscillatorSpec,
    SystemMatrices,
    build_system,
    reciprocal_cond,
)
from .quadrature import Grid

DET_IDENTITY_RTOL = 1e-8
# One-norm threshold above which a Pade-13 evaluation starts squaring.
_PADE13_THETA = 5.371920351148152


@dataclass(frozen=True, eq=False)
class MatrixFunctionResult:
    """Matrix exponential value plus the scaling diagnostic."""

    value: np.ndarray
    scaling_squarings: int


def matrix_exp(X: np.ndarray) -> MatrixFunctionResult:
    """Matrix exponential by scaling-and-squaring Pade approximation.

    The scaling_squarings field reports the number of squarings the
    norm of X demands for an order-13 Pade evaluation.
    """
    X = np.asarray(X)
    if not np.all(np.isfinite(X)):
        raise NonFinite("matrix exponential of a non-finite matrix")
    nrm = float(np.linalg.norm(X, 1)) if X.size else 0.0
    squarings = max(0, math.ceil(math.log2(nrm / _PADE13_THETA))) if nrm > _PADE13_THETA else 0
    return MatrixFunctionResult(value=expm(X), scaling_squarings=squarings)


class KernelContext:
    """Immutable bundle of system matrices, quadrature grid and BVP matrices.

    Construction requires nonsingular Theta and mho (full column rank of
    the coupling matrix).  Grid evaluations of the commutator kernel are
    cached lazily; everything else is cheap to recompute.
    """

    def __init__(self, sysm: SystemMatrices, Theta: np.ndarray, grid: Grid):
        n = sysm.A.shape[0]
        if sysm.mho_singular:
            raise SingularMho("the BVP pipeline requires nonsingular mho = B J B^T")
        A, mho = sysm.A, sysm.mho
        self.sys = sysm
        self.Theta = np.asarray(Theta, dtype=float)
        self.grid = grid
        self.n = n
        self.mho_inv = np.linalg.inv(mho)
        self.Theta_inv = np.linalg.inv(self.Theta)
        mAm = mho @ A.T @ self.mho_inv
        self.F = np.block([[np.zeros((n, n)), np.eye(n)], [mAm @ A, A - mAm]])
        self.U = np.hstack([A, -np.eye(n)])
        self.V = np.vstack([np.eye(n), -self.Theta @ A.T @ self.Theta_inv])
        # Exact-algebra self-checks: U F = -mho A^T mho^-1 U and U V = -mho Theta^-1.
        scale = max(1.0, float(np.linalg.norm(self.U @ self.F)))
        self.uf_residual = float(np.linalg.norm(self.U @ self.F + mAm @ self.U)) / scale
        self.uv_residual = float(np.linalg.norm(self.U @ self.V + mho @ self.Theta_inv)) / max(
            1.0, float(np.linalg.norm(mho @ self.Theta_inv)))

    @cached_property
    def lambda_grid(self) -> np.ndarray:
        """Commutator kernel at all node pairs, shape (N, N, n, n)."""
        return kernel_on_grid(self, self.Theta)

    @cached_property
    def hs_total(self) -> float:
        """Squared Hilbert-Schmidt norm of L by quadrature over the grid."""
        w = self.grid.weights
        sq = np.einsum('abij,abij->ab', self.lambda_grid, self.lambda_grid)
        return float(np.einsum('a,b,ab->', w, w, sq))

    @cached_property
    def gram(self) -> np.ndarray:
        """G at the grid horizon, validated by the determinant identity."""
        return green_gram(self)


def make_context(spec: OscillatorSpec, grid: Grid) -> KernelContext:
    """Build the kernel context for a spec, enforcing the full-rank condition."""
    sysm = build_system(spec)
    M = np.asarray(spec.M, dtype=float)
    s = np.linalg.svd(M, compute_uv=False)
    if s.size < spec.n or s[spec.n - 1] < SINGULAR_RCOND * max(1.0, s[0]):
        raise SingularMho("coupling matrix must have full column rank n")
    return KernelContext(sysm, spec.Theta, grid)


def kernel_on_grid(ctx: KernelContext, base: np.ndarray) -> np.ndarray:
    """Evaluate a one-sided-exponential kernel at all grid node pairs.

    For lag tau = s_a - s_b >= 0 the value is e^{tau A} base; for tau < 0
    it is base e^{-tau A^T} = base (e^{|tau| A})^T.  With base = Theta
    this is the commutator kernel (block-antisymmetric by construction);
    with a symmetric base = P0 it is the covariance kernel.
    """
    A = ctx.sys.A
    nodes = ctx.grid.nodes
    d = nodes[:, None] - nodes[None, :]
    Eabs = expm(np.abs(d)[..., None, None] * A)
    pos = Eabs @ base
    neg = base @ np.swapaxes(Eabs, -1, -2)
    mask = (d >= 0.0)[..., None, None]
    return np.where(mask, pos, neg)


def lambda_kernel(ctx: KernelContext, s: float, t: float) -> np.ndarray:
    """Commutator kernel Lambda(s - t)."""
    tau = s - t
    A = ctx.sys.A
    if tau >= 0.0:
        return expm(tau * A) @ ctx.Theta
    return ctx.Theta @ expm(-tau * A.T)


def covariance_kernel(ctx: KernelContext, P0: np.ndarray, s: float, t: float) -> np.ndarray:
    """Stationary covariance kernel P(s - t) for state covariance P0."""
    tau = s - t
    A = ctx.sys.A
    if tau >= 0.0:
        return expm(tau * A) @ P0
    return P0 @ expm(-tau * A.T)


def covariance_on_grid(ctx: KernelContext, P0: np.ndarray) -> np.ndarray:
    """Covariance kernel at all node pairs, shape (N, N, n, n)."""
    return kernel_on_grid(ctx, np.asarray(P0, dtype=float))


def _check_grid_function(ctx: KernelContext, f: np.ndarray) -> np.ndarray:
    f = np.asarray(f)
    if f.shape != (ctx.grid.size, ctx.n):
        raise GridMismatch(
            f"expected grid function of shape ({ctx.grid.size}, {ctx.n}), got {f.shape}")
    return f


def apply_L(ctx: KernelContext, f: np.ndarray) -> np.ndarray:
    """g(s) = int_0^T Lambda(s - t) f(t) dt on the quadrature grid."""
    f = _check_grid_function(ctx, f)
    return np.einsum('abij,b,bj->ai', ctx.lambda_grid, ctx.grid.weights, f)


def apply_L_split(ctx: KernelContext, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One-sided integrals (g_plus, g_minus) with g = g_plus + Theta g_minus.

    g_plus(s) = int_0^s e^{(s-t)A} Theta f(t) dt   (g_plus(0) = 0),
    g_minus(s) = int_s^T e^{(t-s)A^T} f(t) dt      (g_minus(T) = 0).

    Both are propagated panel by panel with variation-of-constants
    recursions, so this route is independent of the dense kernel
    quadrature in apply_L and serves as its consistency check.
    """
    f = _check_grid_function(ctx, f)
    grid = ctx.grid
    A, Theta = ctx.sys.A, ctx.Theta
    q, panels = grid.order, grid.panels
    width = grid.T / panels
    t_loc = grid.nodes[:q] - grid.edges[0]  # local node offsets, same in every panel
    E_pos = expm(t_loc[:, None, None] * A)           # e^{tau A}
    E_neg = expm(-t_loc[:, None, None] * A)          # e^{-tau A}
    E_posT = expm(t_loc[:, None, None] * A.T)        # e^{tau A^T}
    E_negT = expm(-t_loc[:, None, None] * A.T)       # e^{-tau A^T}
    E_width = expm(width * A)
    E_widthT = expm(width * A.T)

    fp = f.reshape(panels, q, ctx.n)
    dtype = np.result_type(f, float)
    g_plus = np.empty_like(fp, dtype=dtype)
    g_minus = np.empty_like(fp, dtype=dtype)

    # Forward sweep: v = e^{-tau A} Theta f, local antiderivative, repropagate.
    edge = np.zeros(ctx.n, dtype=dtype)
    v = np.einsum('qij,pqj->pqi', E_neg, fp @ Theta.T)
    v_flat = v.reshape(panels * q, ctx.n)
    L_loc = quadrature.panel_cumulative(grid, v_flat).reshape(panels, q, ctx.n)
    L_tot = quadrature.panel_totals(grid, v_flat)
    for p in range(panels):
        g_plus[p] = np.einsum('qij,qj->qi', E_pos, edge[None, :] + L_loc[p])
        edge = E_width @ (edge + L_tot[p])

    # Backward sweep: w = e^{tau A^T} f, complementary antiderivative.
    edge = np.zeros(ctx.n, dtype=dtype)
    wv = np.einsum('qij,pqj->pqi', E_posT, fp)
    wv_flat = wv.reshape(panels * q, ctx.n)
    C_loc = quadrature.panel_cumulative(grid, wv_flat).reshape(panels, q, ctx.n)
    C_tot = quadrature.panel_totals(grid, wv_flat)
    for p in range(panels - 1, -1, -1):
        carried = E_widthT @ edge + C_tot[p]
        g_minus[p] = np.einsum('qij,qj->qi', E_negT, carried[None, :] - C_loc[p])
        edge = carried

    return g_plus.reshape(f.shape), g_minus.reshape(f.shape)


class BvpMatrices(NamedTuple):
    D: np.ndarray
    E: np.ndarray


def bvp_matrices(ctx: KernelContext, omega: float) -> BvpMatrices:
    """Frequency-shifted companion matrix D(omega) and terminal matrix E(omega)."""
    if not omega > 0.0:
        raise NonpositiveOmega(f"eigenfrequency candidate must be positive, got {omega}")
    n = ctx.n
    D = ctx.F.astype(complex).copy()
    D[n:, :n] += (1j / omega) * ctx.sys.mho
    E = ctx.U @ expm(ctx.grid.T * D) @ ctx.V
    return BvpMatrices(D=D, E=E)


def green_gram(ctx: KernelContext, T: float | None = None) -> np.ndarray:
    """G(T) = U e^{TF} V, validated against its determinant identity.

    det G(T) must equal e^{-T tr A} det(-mho Theta^-1) to relative
    tolerance; a violation signals a broken F/U/V assembly or a horizon
    the matrix exponential cannot resolve.
    """
    if T is None:
        T = ctx.grid.T
    if T < 0:
        raise GridMismatch(f"horizon must be nonnegative, got {T}")
    G = ctx.U @ expm(T * ctx.F) @ ctx.V
    sign_l, log_l = np.linalg.slogdet(G)
    sign_r, log_r = np.linalg.slogdet(-ctx.sys.mho @ ctx.Theta_inv)
    log_r = log_r - T * float(np.trace(ctx.sys.A))
    rel = abs(sign_l * np.exp(log_l - log_r) - sign_r)
    if not rel <= DET_IDENTITY_RTOL:
        raise DeterminantIdentityViolated(
            f"det G({T}) deviates from e^(-T tr A) det(-mho Theta^-1) by {rel:.3e} relative")
    return G


def green_function(ctx: KernelContext, s: float, t: float) -> np.ndarray:
    """Commutator kernel reconstructed from the Green-function formula.

    Must coincide with lambda_kernel(ctx, s, t); the indicator term
    e^{(s-t)F} enters only for t <= s.
    """
    T = ctx.grid.T
    if not (0.0 <= s <= T and 0.0 <= t <= T):
        raise GridMismatch(f"(s, t) must lie in [0, {T}]^2")
    n = ctx.n
    G = ctx.gram
    if reciprocal_cond(G) < SINGULAR_RCOND:
        raise SingularG("G(T) is numerically singular")
    right = ctx.U @ expm((T - t) * ctx.F)
    X = expm(s * ctx.F) @ ctx.V @ np.linalg.solve(G, right)
    if t <= s:
        X = X - expm((s - t) * ctx.F)
    # [I 0] ... [0; mho] selects the upper-right n x n block times mho.
    return X[:n, n:] @ ctx.sys.mho
