"""Matrix-vector oracles and matvec accounting.

An oracle is the only way an implicit matrix is touched.  Oracles are pure
snapshots: once constructed they never change, so a dynamic experiment keeps
one oracle value per time step.  The ledger is the single piece of mutable
shared state and counts both base-matrix multiplications (a cubed-adjacency
apply costs 3) and oracle calls (the same apply counts as 1 call).
"""

from __future__ import annotations

import threading
from typing import Callable

import numpy as np


class MatVecOracle:
    """Implicit n x n linear operator exposing x -> Ax.

    ``matvec_cost`` is the number of base-matrix multiplications one apply
    consumes.  ``apply_mat`` evaluates one column per probe and exists so
    dense and sparse backends can batch independent probes; results match the
    per-vector path applied in column order.
    """

    def __init__(
        self,
        dim: int,
        apply_vec: Callable[[np.ndarray], np.ndarray],
        matvec_cost: int = 1,
        apply_mat: Callable[[np.ndarray], np.ndarray] | None = None,
    ):
        if dim < 1:
            raise ValueError(f"oracle dimension must be positive, got {dim}")
        if matvec_cost < 1:
            raise ValueError(f"matvec_cost must be a positive integer, got {matvec_cost}")
        self.dim = int(dim)
        self.matvec_cost = int(matvec_cost)
        self._apply_vec = apply_vec
        self._apply_mat = apply_mat

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Compute A @ x for a single vector."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise ValueError(f"expected vector of shape ({self.dim},), got {x.shape}")
        return self._apply_vec(x)

    def apply_mat(self, X: np.ndarray) -> np.ndarray:
        """Compute A @ X column by column; X has shape (dim, k)."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] != self.dim:
            raise ValueError(f"expected matrix of shape ({self.dim}, k), got {X.shape}")
        if self._apply_mat is not None:
            return self._apply_mat(X)
        return np.column_stack([self._apply_vec(X[:, j]) for j in range(X.shape[1])])


class MatVecLedger:
    """Exact accounting of base multiplications and oracle calls per time step.

    Thread safe: concurrent probe evaluations may record against the same
    step.  Steps are 1-based.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._base: dict[int, int] = {}
        self._calls: dict[int, int] = {}

    def record(self, step: int, calls: int, cost: int) -> None:
        if step < 1:
            raise ValueError(f"steps are 1-based, got {step}")
        with self._lock:
            self._base[step] = self._base.get(step, 0) + calls * cost
            self._calls[step] = self._calls.get(step, 0) + calls

    @property
    def total_base_matvecs(self) -> int:
        return sum(self._base.values())

    @property
    def total_oracle_calls(self) -> int:
        return sum(self._calls.values())

    @property
    def per_step(self) -> tuple[int, ...]:
        """Base multiplications per step, index j-1 holding step j."""
        if not self._base:
            return ()
        last = max(self._base)
        return tuple(self._base.get(j, 0) for j in range(1, last + 1))

    def step_base(self, step: int) -> int:
        return self._base.get(step, 0)

    def step_calls(self, step: int) -> int:
        return self._calls.get(step, 0)


def dense_oracle(matrix: np.ndarray) -> MatVecOracle:
    """Oracle backed by an explicit dense matrix; matvec_cost is 1."""
    A = np.array(matrix, dtype=np.float64, copy=True)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix entries must be finite")
    A.setflags(write=False)
    return MatVecOracle(
        dim=A.shape[0],
        apply_vec=lambda x: A @ x,
        matvec_cost=1,
        apply_mat=lambda X: A @ X,
    )


def power_oracle(base: MatVecOracle, p: int) -> MatVecOracle:
    """Oracle for the p-th power of ``base``; one apply chains p base applies."""
    if p < 1:
        raise ValueError(
            f"power must be a positive integer, got {p}; for p = 0 use an identity oracle"
        )

    def apply_vec(x):
        y = x
        for _ in range(p):
            y = base.apply(y)
        return y

    def apply_mat(X):
        Y = X
        for _ in range(p):
            Y = base.apply_mat(Y)
        return Y

    return MatVecOracle(
        dim=base.dim,
        apply_vec=apply_vec,
        matvec_cost=p * base.matvec_cost,
        apply_mat=apply_mat,
    )


def difference_oracle(prev: MatVecOracle, cur: MatVecOracle) -> MatVecOracle:
    """Oracle for A_cur - A_prev via paired responses; the difference is never
    materialized as a matrix."""
    if prev.dim != cur.dim:
        raise ValueError(f"dimension mismatch: {prev.dim} vs {cur.dim}")
    return MatVecOracle(
        dim=cur.dim,
        apply_vec=lambda x: cur.apply(x) - prev.apply(x),
        matvec_cost=prev.matvec_cost + cur.matvec_cost,
        apply_mat=lambda X: cur.apply_mat(X) - prev.apply_mat(X),
    )


def counted(oracle: MatVecOracle, ledger: MatVecLedger, step: int) -> MatVecOracle:
    """Wrap an oracle so every apply adds ``matvec_cost`` to the ledger at ``step``."""

    def apply_vec(x):
        ledger.record(step, 1, oracle.matvec_cost)
        return oracle.apply(x)

    def apply_mat(X):
        ledger.record(step, X.shape[1], oracle.matvec_cost)
        return oracle.apply_mat(X)

    return MatVecOracle(
        dim=oracle.dim,
        apply_vec=apply_vec,
        matvec_cost=oracle.matvec_cost,
        apply_mat=apply_mat,
    )
