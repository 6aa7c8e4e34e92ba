"""Shared fixtures: the one-mode reference system and seeded random specs.

The reference system (Theta = J2, R = I, M = I, T = 1) has closed-form
system matrices A = 2(J2 - I), B = 2 J2, mho = 4 J2, P0 = I and kernel
Lambda(tau) = e^{-2 tau} (cos(2 tau) I + sin(2 tau) J2) J2 for tau >= 0,
so most oracles below are hand-derivable.  The spectral basis is built
once per session; it is immutable and shared read-only.
"""

import numpy as np
import pytest

from qeflab import kernels, model, quadrature
from qeflab.eigensolver import build_basis

J2 = np.array([[0.0, 1.0], [-1.0, 0.0]])


@pytest.fixture(scope="session")
def osc_spec():
    return model.OscillatorSpec(n=2, m=2, Theta=J2.copy(), R=np.eye(2),
                                M=np.eye(2), T=1.0, theta=0.348)


@pytest.fixture(scope="session")
def grid():
    return quadrature.make_grid(1.0)


@pytest.fixture(scope="session")
def ctx(osc_spec, grid):
    return kernels.make_context(osc_spec, grid)


@pytest.fixture(scope="session")
def state(ctx):
    return model.solve_state_ale(ctx.sys.A, ctx.sys.B)


@pytest.fixture(scope="session")
def basis(ctx):
    return build_basis(ctx, 0.99)


def random_spec(rng, n, m=None, T=1.0):
    """Random valid oscillator spec with moderate matrix norms.

    Theta is S J S^T for a well-conditioned S, normalized to unit
    spectral norm; realizability holds by construction for any such
    spec, Hurwitz stability does not.
    """
    m = n if m is None else m
    while True:
        S = rng.standard_normal((n, n))
        if np.linalg.cond(S) < 20.0:
            break
    Theta = S @ model.canonical_j(n) @ S.T
    Theta /= np.linalg.norm(Theta, 2)
    Q = rng.standard_normal((n, n))
    R = 0.5 * (Q + Q.T) / np.sqrt(n)
    M = rng.standard_normal((m, n)) / np.sqrt(n)
    return model.OscillatorSpec(n=n, m=m, Theta=Theta, R=R, M=M, T=T, theta=0.0)


def random_hurwitz_spec(rng, n, m=None, T=1.0):
    """Random spec redrawn until the drift is Hurwitz.

    A positive definite R plus full-rank field coupling makes the
    rejection rate low; the loop is bounded in practice.
    """
    m = n if m is None else m
    while True:
        cand = random_spec(rng, n, m, T)
        Q = rng.standard_normal((n, n)) / np.sqrt(n)
        cand = model.OscillatorSpec(
            n=n, m=m, Theta=cand.Theta, R=Q.T @ Q + 0.3 * np.eye(n),
            M=cand.M, T=T, theta=0.0)
        if model.is_hurwitz(model.build_system(cand).A):
            return cand
