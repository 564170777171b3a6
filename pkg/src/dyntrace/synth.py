"""Synthetic dynamic matrix sequences and exact dense trace references."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np
from numpy.polynomial import chebyshev as npcheb

from .probes import SYNTH, generator

KINDS = ("low_perturb", "high_perturb", "stationary", "lowrank_psd")


@dataclass(frozen=True)
class MatrixSequenceSpec:
    """Recipe for a reproducible additive sequence A_j = A_1 + sum of steps.

    ``kind`` selects the per-step perturbation: tiny random rank-1 updates
    (``low_perturb``), rank-``rank`` positive semidefinite bumps scaled to a
    fraction of ||A_1||_F (``high_perturb`` and ``lowrank_psd``), or none at
    all (``stationary``).
    """

    n: int
    m: int
    kind: str
    seed: int
    rank: int = 25
    psd_scale: float = 0.05
    rank1_scale: float = 5e-5

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"dimension must be at least 2, got {self.n}")
        if self.m < 1:
            raise ValueError(f"need at least one step, got {self.m}")
        if self.kind not in KINDS:
            raise ValueError(f"unknown sequence kind {self.kind!r}; choose from {KINDS}")
        if self.kind in ("high_perturb", "lowrank_psd") and self.rank > self.n:
            raise ValueError(f"rank {self.rank} exceeds dimension {self.n}")


def random_symmetric(n: int, seed: int) -> np.ndarray:
    """Symmetric matrix with uniform eigenvalues on [-1, 1] and a random
    orthogonal eigenbasis from a seeded Gaussian QR."""
    rng = generator(seed, 0, SYNTH)
    lam = rng.uniform(-1.0, 1.0, size=n)
    gauss = rng.standard_normal((n, n))
    Q, _ = np.linalg.qr(gauss)
    A = (Q * lam) @ Q.T
    return (A + A.T) / 2.0


def rank1_perturb(seed: int, step: int, n: int, scale: float = 5e-5) -> np.ndarray:
    """Signed random rank-1 bump: scale * r * g g^T with r = +-1, g Gaussian."""
    rng = generator(seed, step, SYNTH)
    r = 1.0 if rng.integers(0, 2) == 1 else -1.0
    g = rng.standard_normal(n)
    return (scale * r) * np.outer(g, g)


def psd_rank_k_perturb(
    seed: int, step: int, n: int, k: int = 25, fro_norm: float | None = None
) -> np.ndarray:
    """Random rank-k positive semidefinite bump from a Gaussian Gram factor.

    When ``fro_norm`` is given the bump is rescaled to that Frobenius norm;
    the magnitude is a declared knob, not a derived quantity.
    """
    if k > n:
        raise ValueError(f"rank {k} exceeds dimension {n}")
    rng = generator(seed, step, SYNTH)
    G = rng.standard_normal((n, k))
    D = G @ G.T
    if fro_norm is not None:
        D *= fro_norm / float(np.linalg.norm(D, "fro"))
    return D


def sequence_matrices(spec: MatrixSequenceSpec) -> Iterator[np.ndarray]:
    """Yield dense snapshots A_1, ..., A_m; fully determined by the spec."""
    A = random_symmetric(spec.n, spec.seed)
    base_fro = float(np.linalg.norm(A, "fro"))
    yield A.copy()
    for step in range(2, spec.m + 1):
        if spec.kind == "stationary":
            pass
        elif spec.kind == "low_perturb":
            A = A + rank1_perturb(spec.seed, step, spec.n, scale=spec.rank1_scale)
        else:
            A = A + psd_rank_k_perturb(
                spec.seed, step, spec.n, k=spec.rank, fro_norm=spec.psd_scale * base_fro
            )
        yield A.copy()


def exact_trace(matrix: np.ndarray) -> float:
    return float(np.trace(np.asarray(matrix)))


def exact_exp_trace(matrix: np.ndarray) -> float:
    """tr(exp(B)) for symmetric B via dense eigendecomposition."""
    w = np.linalg.eigvalsh(np.asarray(matrix, dtype=np.float64))
    return float(np.sum(np.exp(w)))


def exact_chebyshev_trace(scaled_matrix: np.ndarray, degree: int) -> float:
    """tr(T_degree(H~)) for symmetric H~ via its eigenvalues."""
    if degree < 0:
        raise ValueError(f"degree must be nonnegative, got {degree}")
    w = np.linalg.eigvalsh(np.asarray(scaled_matrix, dtype=np.float64))
    coeffs = np.zeros(degree + 1)
    coeffs[degree] = 1.0
    return float(np.sum(npcheb.chebval(w, coeffs)))
