"""Monte-Carlo oracle for the quadratic-exponential functional.

Two independent estimators of the same closed-form value are provided.
The Z-route samples the Gaussian surrogate process and averages
exp(-C) * exp((theta/2) * double increment sum of dZ^T P(s-t) dZ); the
N-route samples the stationary Gaussian process with covariance kernel
P(s-t) and averages exp(-C) * exp((theta/2) <N, K N>).

Both routes sample the tail-completed model that matches the spectral
form of K used by the closed-form determinant: the surrogate is drawn as
a Brownian path plus rank-one corrections along the retained modes
(Z = W - sum_k (1 - sqrt(tanhc(theta omega_k))) H_k zeta_k with zeta_k
the mode projections of the same W), and <N, K N> applies K as identity
plus the retained-mode corrections.  A purely truncated surrogate would
estimate a different quantity, low by the trace of the neglected part
of PK, which is not small even when the Hilbert-Schmidt capture is.

Estimation is batched; each batch owns a spawned RNG substream and
results are aggregated in batch order, so estimates are seed-determined
regardless of thread count (set QEFLAB_THREADS to parallelize).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import (
    CovarianceNotPSD,
    GridMismatch,
    NonpositiveOmega,
    OverflowDominated,
    SupercriticalTheta,
)
from .kernels import KernelContext
from .qef import SpectralCache, compute_C, find_critical_theta
from .qkl import Hk_at, QklBasis, build_qkl
from .quadrature import Grid

OVERFLOW_LOG = 700.0
KURTOSIS_LIMIT = 10.0          # excess kurtosis of batch means beyond this flags the run
PSD_CLIP_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class McConfig:
    """Sampling budget and reproducibility knobs.

    batch is the number of batches for the batch-means confidence
    interval; samples must be at least twice that.  increments_per_panel
    refines the increment grid of the Z-route quadratic form inside each
    quadrature panel.
    """

    samples: int
    seed: int
    batch: int = 100
    increments_per_panel: int = 8

    def __post_init__(self):
        if self.samples < 2 * self.batch:
            raise NonpositiveOmega(
                f"need samples >= 2*batch, got {self.samples} < {2 * self.batch}")
        if self.batch < 1 or self.increments_per_panel < 1:
            raise NonpositiveOmega("batch and increments_per_panel must be positive")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise NonpositiveOmega("seed must fit in 64 unsigned bits")


@dataclass(frozen=True, eq=False)
class McEstimate:
    """Batch-means estimate with heavy-tail diagnostics.

    n_eff counts samples that contributed without overflow clipping;
    unreliable marks runs whose variance is not trustworthy (second
    moment of the estimator at or past divergence, or batch means
    failing the kurtosis guard).
    """

    mean: float
    stderr: float
    n_eff: int
    diverged_fraction: float
    unreliable: bool
    kurtosis: float


@dataclass(frozen=True, eq=False)
class QefMcResult:
    """Both estimator routes for one theta, plus the seed that made them."""

    theta: float
    z: McEstimate
    n: McEstimate
    seed: int


def _stationary_blocks(A: np.ndarray, P0: np.ndarray, s: np.ndarray,
                       t: np.ndarray | None = None) -> np.ndarray:
    """Covariance blocks P(s_a - t_b) of the stationary process."""
    t = s if t is None else t
    d = s[:, None] - t[None, :]
    E = expm(np.abs(d)[:, :, None, None] * A)
    pos = E @ P0
    neg = P0 @ np.swapaxes(E, -1, -2)
    return np.where((d >= 0.0)[:, :, None, None], pos, neg)


def _psd_factor(mat: np.ndarray, label: str) -> np.ndarray:
    """Square root of a PSD matrix with tolerance-checked clipping."""
    sym = 0.5 * (mat + mat.T)
    evals, vecs = np.linalg.eigh(sym)
    top = float(evals.max(initial=0.0))
    if evals.min(initial=0.0) < -PSD_CLIP_RTOL * max(top, 1e-300):
        raise CovarianceNotPSD(
            f"{label} eigenvalue {evals.min():.3e} below clip threshold")
    return vecs * np.sqrt(np.clip(evals, 0.0, None))[None, :]


def sample_Z_paths(qkl: QklBasis, cfg: McConfig, ts: np.ndarray | None = None) -> np.ndarray:
    """Paths of the truncated surrogate Z(t) = sum sqrt(tanc_k) H_k(t) zeta_k.

    zeta_k are i.i.d. standard normal pairs per retained mode; Z(0) = 0
    exactly because every H_k(0) = 0.  Evaluated at the grid nodes
    unless explicit times are given; returns (samples, len(ts), n).
    """
    if ts is None:
        H = np.moveaxis(qkl.Hk, 0, 1)
    else:
        H = Hk_at(qkl, np.asarray(ts, dtype=float))
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    zeta = rng.standard_normal((cfg.samples, qkl.hk.shape[0], 2))
    return np.einsum('k,tkip,skp->sti', np.sqrt(qkl.tanc_values), H, zeta)


def sample_N_paths(P0: np.ndarray, A: np.ndarray, grid: Grid, cfg: McConfig) -> np.ndarray:
    """Paths of the stationary Gaussian process with covariance P(s - t).

    Draws through the PSD square root of the node-block covariance;
    returns (samples, N, n).
    """
    n = P0.shape[0]
    blocks = _stationary_blocks(np.asarray(A, dtype=float), np.asarray(P0, dtype=float),
                                grid.nodes)
    mat = blocks.transpose(0, 2, 1, 3).reshape(grid.size * n, grid.size * n)
    factor = _psd_factor(mat, "stationary block covariance")
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    flat = rng.standard_normal((cfg.samples, grid.size * n)) @ factor.T
    return flat.reshape(cfg.samples, grid.size, n)


def _batch_sizes(samples: int, batches: int) -> np.ndarray:
    sizes = np.full(batches, samples // batches, dtype=int)
    sizes[:samples % batches] += 1
    return sizes


class _Estimator:
    """Precomputed geometry for one theta, shared by all batches."""

    def __init__(self, ctx: KernelContext, qkl: QklBasis, P0: np.ndarray, cfg: McConfig):
        grid = ctx.grid
        theta = qkl.theta
        self.theta = theta
        self.cfg = cfg
        cache = SpectralCache(ctx, qkl, P0)
        sr = float(cache.lambdas(theta)[0]) if cache.mu.size else 0.0
        if theta > 0.0 and theta * sr >= 1.0:
            crit = find_critical_theta(cache)
            raise SupercriticalTheta(
                f"theta={theta:.6g} is at or beyond the critical value "
                f"{crit:.6g}; the estimator mean diverges")
        self.variance_finite = 2.0 * theta * sr < 1.0
        self.C = compute_C(qkl.basis, theta)[0]

        # Z-route geometry: uniform increment grid, midpoint kernel
        m = grid.panels * cfg.increments_per_panel
        bounds = np.linspace(0.0, grid.T, m + 1)
        mids = 0.5 * (bounds[:-1] + bounds[1:])
        self.dt = grid.T / m
        self.dH = np.diff(Hk_at(qkl, bounds), axis=0).transpose(1, 0, 2, 3)  # (r, m, n, 2)
        self.Pm = _stationary_blocks(ctx.sys.A, P0, mids)                     # (m, m, n, n)
        self.corr = 1.0 - np.sqrt(qkl.tanc_values)

        # N-route geometry: node-block covariance factor and K action
        blocks = _stationary_blocks(ctx.sys.A, P0, grid.nodes)
        mat = blocks.transpose(0, 2, 1, 3).reshape(grid.size * ctx.n, grid.size * ctx.n)
        self.factor = _psd_factor(mat, "stationary block covariance")
        self.hk = qkl.hk
        self.tanc = qkl.tanc_values
        self.w = grid.weights
        self.shape = (grid.size, ctx.n)
        self.n_inc = m

    def run_batch(self, size: int, seed: np.random.SeedSequence):
        rng = np.random.default_rng(seed)
        theta = self.theta
        n = self.shape[1]

        dW = rng.standard_normal((size, self.n_inc, n)) * np.sqrt(self.dt)
        # project with the same cell integrals dH that the correction term
        # applies; a pointwise-h projection completes to a different covariance
        zeta = np.einsum('kaip,sai->skp', self.dH, dW) / self.dt
        dZ = dW - np.einsum('k,kaip,skp->sai', self.corr, self.dH, zeta)
        q_z = np.einsum('sai,abij,sbj->s', dZ, self.Pm, dZ)

        flat = rng.standard_normal((size, self.shape[0] * n)) @ self.factor.T
        paths = flat.reshape(size, *self.shape)
        base = np.einsum('sai,a,sai->s', paths, self.w, paths)
        proj = np.einsum('kaip,a,sai->skp', self.hk, self.w, paths)
        q_n = base + 2.0 * np.einsum('k,skp->s', self.tanc - 1.0, proj ** 2)

        out = []
        for q in (q_z, q_n):
            expo = -self.C + 0.5 * theta * q
            clipped = int(np.sum(expo > OVERFLOW_LOG))
            out.append((float(np.mean(np.exp(np.minimum(expo, OVERFLOW_LOG)))), clipped))
        return out[0], out[1]


def _aggregate(batch_means: np.ndarray, sizes: np.ndarray, clipped: int,
               variance_finite: bool) -> McEstimate:
    total = int(sizes.sum())
    weights = sizes / total
    mean = float(np.sum(weights * batch_means))
    b = len(batch_means)
    stderr = float(np.sqrt(np.sum(weights ** 2 * (batch_means - mean) ** 2) * b / (b - 1)))
    centered = batch_means - batch_means.mean()
    m2 = float(np.mean(centered ** 2))
    kurt = float(np.mean(centered ** 4) / m2 ** 2 - 3.0) if m2 > 0 else 0.0
    frac = clipped / total
    if frac > 0.01:
        raise OverflowDominated(
            f"{100 * frac:.2f}% of samples overflowed the exponent clip")
    return McEstimate(mean=mean, stderr=stderr, n_eff=total - clipped,
                      diverged_fraction=frac,
                      unreliable=(not variance_finite) or kurt > KURTOSIS_LIMIT,
                      kurtosis=kurt)


def estimate_qef_mc(ctx: KernelContext, qkl: QklBasis, P0: np.ndarray,
                    cfg: McConfig, theta: float | None = None) -> QefMcResult:
    """Both Monte-Carlo routes to the functional at one theta.

    Refuses supercritical theta (the estimator mean would be infinite).
    Deterministic for a fixed seed: batches draw from spawned substreams
    and aggregate in index order, so the thread count never changes the
    result.
    """
    if theta is not None and theta != qkl.theta:
        qkl = build_qkl(qkl.basis, theta)
    if qkl.grid.size != ctx.grid.size or qkl.grid.T != ctx.grid.T:
        raise GridMismatch("qkl basis and kernel context use different grids")
    est = _Estimator(ctx, qkl, P0, cfg)
    sizes = _batch_sizes(cfg.samples, cfg.batch)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.batch)

    results: list = [None] * cfg.batch
    workers = int(os.environ.get("QEFLAB_THREADS", "1") or "1")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=min(workers, cfg.batch)) as pool:
            futures = [pool.submit(est.run_batch, int(sizes[i]), seeds[i])
                       for i in range(cfg.batch)]
            results = [f.result() for f in futures]
    else:
        results = [est.run_batch(int(sizes[i]), seeds[i]) for i in range(cfg.batch)]

    z_means = np.array([r[0][0] for r in results])
    z_clip = sum(r[0][1] for r in results)
    n_means = np.array([r[1][0] for r in results])
    n_clip = sum(r[1][1] for r in results)
    return QefMcResult(
        theta=qkl.theta,
        z=_aggregate(z_means, sizes, z_clip, est.variance_finite),
        n=_aggregate(n_means, sizes, n_clip, est.variance_finite),
        seed=cfg.seed,
    )
