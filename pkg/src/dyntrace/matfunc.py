"""Matrix-function oracles: Lanczos exponential actions, Chebyshev actions,
and power iteration for spectral scaling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .oracle import MatVecOracle, power_oracle
from .probes import POWER_START, generator

_BREAKDOWN_TOL = 1e-12


@dataclass(frozen=True)
class LanczosDecomposition:
    """Orthonormal Krylov basis and tridiagonal coefficients from one run."""

    basis: np.ndarray  # (n, k) orthonormal columns
    alphas: np.ndarray  # (k,) diagonal of T
    betas: np.ndarray  # (k-1,) off-diagonal of T, nonnegative
    start_norm: float


def lanczos(oracle: MatVecOracle, x: np.ndarray, k: int) -> LanczosDecomposition:
    """Run k Lanczos steps on a symmetric operator, starting from x.

    Full reorthogonalization is applied every step; at the problem sizes this
    package targets it is cheap and it removes ghost directions that would
    otherwise pollute trace estimates.  Iteration stops early on a lucky
    breakdown (beta below 1e-12 relative to the start norm).  k is capped
    at the operator dimension.
    """
    if k < 1:
        raise ValueError(f"need at least one iteration, got {k}")
    x = np.asarray(x, dtype=np.float64)
    n = oracle.dim
    k = min(k, n)
    start_norm = float(np.linalg.norm(x))
    if start_norm == 0.0:
        return LanczosDecomposition(
            basis=np.zeros((n, 1)), alphas=np.zeros(1), betas=np.zeros(0), start_norm=0.0
        )
    V = np.empty((n, k))
    alphas = np.empty(k)
    betas = np.empty(max(k - 1, 0))
    V[:, 0] = x / start_norm
    u = oracle.apply(V[:, 0])
    alphas[0] = float(V[:, 0] @ u)
    steps = 1
    for i in range(1, k):
        r = u - alphas[i - 1] * V[:, i - 1]
        if i > 1:
            r -= betas[i - 2] * V[:, i - 2]
        r -= V[:, :i] @ (V[:, :i].T @ r)
        beta = float(np.linalg.norm(r))
        if not np.isfinite(beta):
            raise FloatingPointError("Lanczos broke down with a non-finite residual")
        if beta < _BREAKDOWN_TOL * max(start_norm, 1.0):
            break
        betas[i - 1] = beta
        V[:, i] = r / beta
        u = oracle.apply(V[:, i])
        alphas[i] = float(V[:, i] @ u)
        steps = i + 1
    return LanczosDecomposition(
        basis=V[:, :steps].copy(),
        alphas=alphas[:steps].copy(),
        betas=betas[: steps - 1].copy(),
        start_norm=start_norm,
    )


def lanczos_expm_apply(oracle: MatVecOracle, x: np.ndarray, k: int) -> np.ndarray:
    """Approximate exp(B) x with k Lanczos iterations on the symmetric oracle B.

    Returns ||x|| * V exp(T) e_1 with exp(T) evaluated by dense
    eigendecomposition of the k x k tridiagonal.  Consumes at most k oracle
    applies (fewer on lucky breakdown).
    """
    dec = lanczos(oracle, x, k)
    if dec.start_norm == 0.0:
        return np.zeros(oracle.dim)
    m = dec.alphas.size
    T = np.diag(dec.alphas)
    if m > 1:
        T += np.diag(dec.betas, 1) + np.diag(dec.betas, -1)
    w, U = np.linalg.eigh(T)
    f_e1 = U @ (np.exp(w) * U[0, :])
    return dec.start_norm * (dec.basis @ f_e1)


def power_iteration(oracle: MatVecOracle, iters: int, seed: int) -> float:
    """Estimate the dominant eigenvalue magnitude of a symmetric operator.

    Runs ``iters`` normalized iterations from a seeded Gaussian start and
    returns the magnitude of the final Rayleigh quotient.  Returns 0 for the
    zero operator.
    """
    if iters < 1:
        raise ValueError(f"need at least one iteration, got {iters}")
    rng = generator(seed, 0, POWER_START)
    b = rng.standard_normal(oracle.dim)
    norm = float(np.linalg.norm(b))
    if norm == 0.0:
        return 0.0
    b /= norm
    estimate = 0.0
    for _ in range(iters):
        y = oracle.apply(b)
        estimate = abs(float(b @ y) / float(b @ b))
        ynorm = float(np.linalg.norm(y))
        if ynorm == 0.0:
            return 0.0
        b = y / ynorm
    return estimate


@dataclass(frozen=True)
class ChebyshevScaling:
    """Spectral scaling H -> H / (margin * lambda_max) for Chebyshev recurrences.

    Power iteration approaches the dominant eigenvalue from below, and the
    recurrence diverges outside [-1, 1], so the estimate is inflated by a
    margin (default 5%) before use.
    """

    lambda_max: float
    margin: float = 1.05

    def __post_init__(self):
        if self.margin < 1.0:
            raise ValueError(f"margin must be at least 1, got {self.margin}")
        if self.lambda_max < 0.0:
            raise ValueError(f"lambda_max must be nonnegative, got {self.lambda_max}")

    @property
    def scale(self) -> float:
        return self.margin * self.lambda_max


def scaling_from_power_iteration(
    oracle: MatVecOracle, iters: int = 50, seed: int = 0, margin: float = 1.05
) -> ChebyshevScaling:
    """Scaling from power iteration on the squared operator.

    Squaring maps both spectral edges to +lambda^2, so the estimate stays
    accurate even when the extreme positive and negative eigenvalues are
    nearly tied, a case where plain power iteration can stall between them.
    Costs 2 base applies per iteration.
    """
    lam_sq = power_iteration(power_oracle(oracle, 2), iters, seed)
    return ChebyshevScaling(lambda_max=float(np.sqrt(lam_sq)), margin=margin)


def chebyshev_actions(
    oracle: MatVecOracle, scaling: ChebyshevScaling, x: np.ndarray, q_max: int
) -> list[np.ndarray]:
    """Actions of the first-kind Chebyshev polynomials of the scaled operator.

    Returns [T_0(H~) x, ..., T_qmax(H~) x] for H~ = H / scale via the three
    term recurrence T_{n+1} = 2 H~ T_n - T_{n-1}.  Consumes exactly q_max
    oracle applies; prior actions are reused, never recomputed.
    """
    if q_max < 0:
        raise ValueError(f"degree must be nonnegative, got {q_max}")
    x = np.asarray(x, dtype=np.float64)
    actions = [x]
    if q_max == 0:
        return actions
    scale = scaling.scale

    def scaled_apply(v):
        if scale == 0.0:
            return np.zeros_like(v)
        return oracle.apply(v) / scale

    actions.append(scaled_apply(x))
    for _ in range(2, q_max + 1):
        actions.append(2.0 * scaled_apply(actions[-1]) - actions[-2])
    return actions


def expm_lanczos_oracle(base: MatVecOracle, k: int = 15) -> MatVecOracle:
    """Wrap exp(B) x, approximated per probe by k-step Lanczos, as an oracle.

    One apply is charged k base multiplications.  Probes are evaluated one at
    a time; each is an independent Lanczos run.
    """
    if k < 1:
        raise ValueError(f"need at least one Lanczos iteration, got {k}")

    def apply_vec(x):
        return lanczos_expm_apply(base, x, k)

    return MatVecOracle(
        dim=base.dim,
        apply_vec=apply_vec,
        matvec_cost=k * base.matvec_cost,
    )


def chebyshev_oracle(
    base: MatVecOracle, scaling: ChebyshevScaling, degree: int
) -> MatVecOracle:
    """Wrap T_degree(H~) x as an oracle costing ``degree`` base multiplications.

    Degree 0 is the identity and needs no oracle; ask for degree >= 1.
    """
    if degree < 1:
        raise ValueError(f"degree must be at least 1, got {degree}")

    def apply_vec(x):
        return chebyshev_actions(base, scaling, x, degree)[degree]

    return MatVecOracle(
        dim=base.dim,
        apply_vec=apply_vec,
        matvec_cost=degree * base.matvec_cost,
    )
