"""Eigenfrequencies and eigenfunctions of the commutator-kernel operator.

The skew self-adjoint integral operator L with kernel Lambda(s - t) has
purely imaginary eigenvalues +- i omega_k.  A positive omega is an
eigenfrequency exactly when det E(omega) = 0 with E(omega) =
U e^{T D(omega)} V, and each kernel vector f(0) of E(omega) propagates
to an eigenfunction f(t) = [I 0] e^{t D(omega)} V f(0).  Writing
f = phi + i psi, normalization ||f|| = 1 forces ||phi||^2 = ||psi||^2
= 1/2 and <phi, psi> = 0, which is what downstream consumers rely on.

Roots are located by sampling |det E| over a frequency band, refined by
golden-section plus Newton polishing on |det E|^2, and accepted when
|det E(omega)| / |det G(T)| <= 1e-8.  A dense Nystrom discretization of
L provides an independent oracle for the same spectrum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize_scalar

from . import quadrature
from .errors import (
    CaptureUnreachable,
    EmptyKernel,
    NoRootsFound,
    NonpositiveOmega,
    RankCollapse,
    RefinementStalled,
)
from .kernels import KernelContext, apply_L, bvp_matrices
from .quadrature import Grid

DET_ACCEPT_RTOL = 1e-8      # |det E| / |det G(T)| at an accepted root
DET_STALL_RTOL = 1e-6       # between accept and this: refinement stalled
KERNEL_SV_RTOL = 1e-8       # singular values below this fraction of sigma_max span ker E
ROOT_MERGE_RTOL = 1e-8
DEFAULT_SAMPLES = 400


@dataclass(frozen=True, eq=False)
class Root:
    """Refined root of det E(omega) with its kernel dimension."""

    omega: float
    det_ratio: float
    multiplicity: int


@dataclass(frozen=True, eq=False)
class EigenPair:
    """One eigenfrequency with its normalized eigenfunction on the grid.

    phi and psi are the real and imaginary parts of f, sampled at the
    quadrature nodes.  bvp_residual is the quadrature-route residual
    ||apply_L(f) - i omega f|| (independent of the shooting propagation);
    boundary_residual is ||E(omega) f0|| for the unit kernel vector.
    """

    omega: float
    f0: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    multiplicity: int
    bvp_residual: float
    boundary_residual: float


@dataclass(frozen=True, eq=False)
class NystromResult:
    """Dense-discretization spectrum of L (the verification oracle)."""

    eigenvalues: np.ndarray   # all eigenvalues of the Hermitian -i K, ascending
    omegas: np.ndarray        # positive eigenvalues, descending
    vectors: np.ndarray       # eigenvector columns matching `eigenvalues`
    grid: Grid


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Retained eigenpairs ordered by descending omega, plus diagnostics."""

    pairs: tuple[EigenPair, ...]
    grid: Grid
    hs_total: float
    hs_captured: float
    capture_fraction: float
    mercer_residual: float
    gram_max_dev: float

    @property
    def omegas(self) -> np.ndarray:
        return np.array([p.omega for p in self.pairs])


def _log_abs_det_E(ctx: KernelContext, omegas: np.ndarray) -> np.ndarray:
    """log |det E(omega)| for a batch of positive frequencies."""
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    if np.any(omegas <= 0.0):
        raise NonpositiveOmega("frequency samples must be positive")
    n = ctx.n
    D = np.broadcast_to(ctx.F.astype(complex), (omegas.size, 2 * n, 2 * n)).copy()
    D[:, n:, :n] += (1j / omegas)[:, None, None] * ctx.sys.mho
    E = ctx.U @ expm(ctx.grid.T * D) @ ctx.V
    return np.linalg.slogdet(E)[1]


def det_ratio(ctx: KernelContext, omega: float) -> float:
    """|det E(omega)| normalized by |det G(T)| (scale-free root criterion)."""
    log_g = np.linalg.slogdet(ctx.gram)[1]
    return float(np.exp(_log_abs_det_E(ctx, np.array([omega]))[0] - log_g))


def _kernel_dimension(ctx: KernelContext, omega: float) -> tuple[int, np.ndarray]:
    """dim ker E(omega) by singular values, plus the kernel vectors."""
    E = bvp_matrices(ctx, omega).E
    _, s, Vh = np.linalg.svd(E)
    kdim = int(np.sum(s < KERNEL_SV_RTOL * s[0]))
    return kdim, Vh[len(s) - kdim:].conj()


def scan_eigenfrequencies(ctx: KernelContext, omega_min: float, omega_max: float,
                          samples: int = DEFAULT_SAMPLES) -> list[Root]:
    """Locate and refine all roots of det E(omega) in [omega_min, omega_max].

    Samples |det E| on a uniform frequency grid, brackets local minima,
    refines each by golden-section then finite-difference Newton steps on
    |det E|^2, and keeps refined points with |det E|/|det G(T)| <= 1e-8.
    Returns roots in descending omega order.
    """
    if not (0.0 < omega_min < omega_max):
        raise NonpositiveOmega(f"need 0 < omega_min < omega_max, got ({omega_min}, {omega_max})")
    if samples < 3:
        raise NonpositiveOmega("need at least 3 scan samples")
    log_g = float(np.linalg.slogdet(ctx.gram)[1])
    ws = np.linspace(omega_min, omega_max, samples)
    logs = _log_abs_det_E(ctx, ws) - log_g

    def ratio_sq(w: float) -> float:
        return float(np.exp(2.0 * (_log_abs_det_E(ctx, np.array([w]))[0] - log_g)))

    roots: list[Root] = []
    interior_min = (logs[1:-1] < logs[:-2]) & (logs[1:-1] <= logs[2:])
    for i in np.flatnonzero(interior_min) + 1:
        bracket = (ws[i - 1], ws[i], ws[i + 1])
        res = minimize_scalar(ratio_sq, bracket=bracket, method='golden',
                              options={'xtol': 1e-12})
        w, fw = float(res.x), float(res.fun)
        # Newton polish on |det E|^2; locally quadratic at a simple root.
        h0 = 1e-5 * max(w, 1.0)
        for _ in range(8):
            if fw <= (0.01 * DET_ACCEPT_RTOL) ** 2:
                break
            h = h0
            fp = (ratio_sq(w + h) - ratio_sq(w - h)) / (2 * h)
            fpp = (ratio_sq(w + h) - 2 * fw + ratio_sq(w - h)) / h ** 2
            if fpp <= 0.0 or not np.isfinite(fp):
                break
            step = -fp / fpp
            w_new = min(max(w + step, ws[i - 1]), ws[i + 1])
            f_new = ratio_sq(w_new)
            if f_new >= fw:
                h0 *= 0.1
                if h0 < 1e-12 * max(w, 1.0):
                    break
                continue
            w, fw = w_new, f_new
        d = np.sqrt(fw)
        if d <= DET_ACCEPT_RTOL:
            roots.append((w, d))
        elif d <= DET_STALL_RTOL:
            raise RefinementStalled(
                f"local minimum near omega={w:.6g} refined only to |det E|/|det G|={d:.3e}")
        # larger minima are not roots; ignore

    if not roots:
        raise NoRootsFound(
            f"no eigenfrequencies with |det E|/|det G(T)| <= {DET_ACCEPT_RTOL} "
            f"in [{omega_min}, {omega_max}]")

    roots.sort()
    merged: list[tuple[float, float]] = []
    for w, d in roots:
        if merged and abs(w - merged[-1][0]) <= ROOT_MERGE_RTOL * max(1.0, w):
            if d < merged[-1][1]:
                merged[-1] = (w, d)
            continue
        merged.append((w, d))

    out = []
    for w, d in merged:
        kdim, _ = _kernel_dimension(ctx, w)
        if kdim == 0:
            continue  # determinant dip without an actual kernel: spurious
        out.append(Root(omega=w, det_ratio=d, multiplicity=kdim))
    if not out:
        raise NoRootsFound("all refined minima were spurious (no kernel vectors)")
    out.sort(key=lambda r: -r.omega)
    return out


def _canonical_phase(f0: np.ndarray) -> complex:
    """Phase factor making the largest-magnitude entry of f0 real positive."""
    k = int(np.argmax(np.abs(f0)))
    z = f0[k]
    if z == 0:
        return 1.0 + 0.0j
    return np.conj(z) / abs(z)


def eigenfunction_from_root(ctx: KernelContext, omega: float) -> list[EigenPair]:
    """Propagate every kernel vector of E(omega) to a normalized eigenpair.

    The initial condition [f(0); f'(0)] = V f(0) satisfies the left
    boundary condition exactly by construction; the terminal condition
    quality is recorded as boundary_residual.  Degenerate kernels are
    orthonormalized before returning.
    """
    kdim, kernel_vecs = _kernel_dimension(ctx, omega)
    if kdim == 0:
        raise EmptyKernel(f"E({omega}) has no numerical kernel; the root is spurious")
    D, E = bvp_matrices(ctx, omega)
    grid = ctx.grid
    prop = expm(grid.nodes[:, None, None] * D) @ ctx.V  # (N, 2n, n)
    pairs = []
    for f0 in kernel_vecs:
        f0 = f0 / np.linalg.norm(f0)
        traj = prop @ f0
        f = traj[:, :ctx.n]
        nrm = quadrature.norm(grid, f)
        f = f / nrm
        phase = _canonical_phase(f0)
        f = f * phase
        f0 = f0 * phase
        bres = float(np.linalg.norm(E @ f0))
        lres = quadrature.norm(grid, apply_L(ctx, f) - 1j * omega * f)
        pairs.append(EigenPair(omega=float(omega), f0=f0, phi=f.real.copy(),
                               psi=f.imag.copy(), multiplicity=kdim,
                               bvp_residual=lres, boundary_residual=bres))
    if kdim > 1:
        pairs = orthonormalize(ctx, pairs)
    return pairs


def orthonormalize(ctx: KernelContext, pairs: list[EigenPair]) -> list[EigenPair]:
    """Modified Gram-Schmidt in the complex L2 inner product.

    Intended for eigenpairs sharing one eigenfrequency; the span is
    preserved and the conjugate-orthogonality <conj f_j, f_k> = 0 is
    inherited from the eigenspace (asserted by tests, not enforced here).
    """
    grid = ctx.grid
    fs = [p.phi + 1j * p.psi for p in pairs]
    f0s = [p.f0.astype(complex) for p in pairs]
    out = []
    for k, p in enumerate(pairs):
        v, v0 = fs[k], f0s[k]
        for q in out:
            c = quadrature.inner(grid, q.phi + 1j * q.psi, v)
            v = v - c * (q.phi + 1j * q.psi)
            v0 = v0 - c * q.f0
        nrm = quadrature.norm(grid, v)
        if nrm < 1e-8:
            raise RankCollapse(
                f"eigenfunction {k} at omega={p.omega:.6g} lies in the span of the others")
        v, v0 = v / nrm, v0 / nrm
        phase = _canonical_phase(v0)
        v, v0 = v * phase, v0 * phase
        lres = quadrature.norm(grid, apply_L(ctx, v) - 1j * p.omega * v)
        E = bvp_matrices(ctx, p.omega).E
        bres = float(np.linalg.norm(E @ v0) / np.linalg.norm(v0))
        out.append(EigenPair(omega=p.omega, f0=v0, phi=v.real.copy(), psi=v.imag.copy(),
                             multiplicity=p.multiplicity, bvp_residual=lres,
                             boundary_residual=bres))
    return out


def nystrom_oracle(ctx: KernelContext) -> NystromResult:
    """Spectrum of the weight-symmetrized dense discretization of L.

    The matrix [sqrt(w_a) Lambda(s_a - s_b) sqrt(w_b)] is real
    block-antisymmetric; multiplying by -i gives a Hermitian matrix
    whose positive eigenvalues estimate the eigenfrequencies.
    """
    grid = ctx.grid
    n, N = ctx.n, grid.size
    sw = np.sqrt(grid.weights)
    K = ctx.lambda_grid * sw[:, None, None, None] * sw[None, :, None, None]
    Kmat = K.transpose(0, 2, 1, 3).reshape(N * n, N * n)
    H = -1j * Kmat
    H = 0.5 * (H + H.conj().T)
    evals, vecs = np.linalg.eigh(H)
    omegas = evals[evals > 0.0][::-1]
    return NystromResult(eigenvalues=evals, omegas=omegas, vectors=vecs, grid=grid)


def nystrom_eigenfunction(ctx: KernelContext, result: NystromResult, index: int) -> np.ndarray:
    """Grid eigenfunction recovered from a Nystrom eigenvector column."""
    sw = np.sqrt(result.grid.weights)
    v = result.vectors[:, index].reshape(result.grid.size, ctx.n)
    return v / sw[:, None]


def stack_hk(basis: SpectralBasis) -> np.ndarray:
    """Coefficient functions h_k = [phi_k psi_k], shape (modes, N, n, 2)."""
    return np.stack([np.stack([p.phi, p.psi], axis=-1) for p in basis.pairs])


def basis_gram(basis: SpectralBasis) -> np.ndarray:
    """All pairwise Gram blocks int h_j^T h_k dt, shape (r, r, 2, 2)."""
    hk = stack_hk(basis)
    w = basis.grid.weights
    return np.einsum('jaip,a,kaiq->jkpq', hk, w, hk)


def _mercer_residual(ctx: KernelContext, pairs: list[EigenPair]) -> float:
    """Mean-square misfit of the truncated kernel expansion over the grid."""
    if not pairs:
        return ctx.hs_total
    hk = np.stack([np.stack([p.phi, p.psi], axis=-1) for p in pairs])
    omegas = np.array([p.omega for p in pairs])
    bj = np.array([[0.0, 1.0], [-1.0, 0.0]])
    approx = 2.0 * np.einsum('k,kaip,pq,kbjq->abij', omegas, hk, bj, hk)
    diff = ctx.lambda_grid - approx
    w = ctx.grid.weights
    sq = np.einsum('abij,abij->ab', diff, diff)
    return float(np.einsum('a,b,ab->', w, w, sq))


def build_basis(ctx: KernelContext, capture_fraction: float = 0.99, *,
                omega_min: float | None = None, omega_max: float | None = None,
                samples: int = DEFAULT_SAMPLES) -> SpectralBasis:
    """Scan the band, retain dominant modes until the HS capture is met.

    Each retained eigenpair contributes 2 omega_k^2 toward hs_captured;
    the default band upper edge uses the Hilbert-Schmidt bound
    omega_1 <= sqrt(hs_total / 2).  The default lower edge stays a factor
    10 below that: deeper tail roots make e^{T D(omega)} so large that
    det E cannot be certified to the acceptance ratio in double
    precision, and their 2 omega^2 weight is negligible.  Raises
    CaptureUnreachable when the band does not hold enough spectrum;
    widen it explicitly in that case.
    """
    if not 0.0 < capture_fraction < 1.0:
        raise NonpositiveOmega(f"capture fraction must be in (0, 1), got {capture_fraction}")
    hs_total = ctx.hs_total
    if omega_max is None:
        omega_max = 1.05 * float(np.sqrt(hs_total / 2.0))
    if omega_min is None:
        omega_min = omega_max / 10.0
    try:
        roots = scan_eigenfrequencies(ctx, omega_min, omega_max, samples)
    except NoRootsFound as exc:
        raise CaptureUnreachable(f"no eigenfrequencies found in the band: {exc}") from exc

    pairs: list[EigenPair] = []
    for root in roots:
        pairs.extend(eigenfunction_from_root(ctx, root.omega))
    pairs.sort(key=lambda p: -p.omega)

    captured = 0.0
    retained: list[EigenPair] = []
    target = capture_fraction * hs_total
    for p in pairs:
        retained.append(p)
        captured += 2.0 * p.omega ** 2
        if captured >= target:
            break
    if captured < target:
        raise CaptureUnreachable(
            f"band [{omega_min:.3g}, {omega_max:.3g}] captures only "
            f"{captured / hs_total:.4f} of the HS norm (target {capture_fraction}); "
            "lower omega_min or raise samples")

    basis = SpectralBasis(
        pairs=tuple(retained), grid=ctx.grid, hs_total=hs_total,
        hs_captured=captured, capture_fraction=capture_fraction,
        mercer_residual=_mercer_residual(ctx, retained),
        gram_max_dev=0.0,
    )
    gram = basis_gram(basis)
    target_gram = 0.5 * np.einsum('jk,pq->jkpq', np.eye(len(retained)), np.eye(2))
    object.__setattr__(basis, 'gram_max_dev', float(np.max(np.abs(gram - target_gram))))
    return basis


def ode_residual(ctx: KernelContext, pair: EigenPair) -> float:
    """Sup-norm residual of the second-order eigen-ODE on the grid.

    Differentiates the sampled eigenfunction with the panel Legendre
    machinery (independent of the shooting propagator) and substitutes
    into f'' + (mho A^T mho^-1 - A) f' - mho A^T mho^-1 A f
    - (i/omega) mho f = 0.
    """
    grid = ctx.grid
    A, mho = ctx.sys.A, ctx.sys.mho
    mAm = mho @ A.T @ ctx.mho_inv
    f = pair.phi + 1j * pair.psi
    fp = quadrature.differentiate(grid, f)
    fpp = quadrature.differentiate(grid, fp)
    resid = (fpp + fp @ (mAm - A).T - f @ (mAm @ A).T
             - (1j / pair.omega) * f @ mho.T)
    return float(np.max(np.abs(resid)))
