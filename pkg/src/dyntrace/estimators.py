"""Trace estimators: static Hutchinson and Hutch++, plus the dynamic family.

The dynamic estimators maintain a running estimate t_j of tr(A_j) across a
sequence of implicitly accessed matrices.  All of them estimate the trace of
the step difference from paired oracle responses z_i = A_{j-1} g_i and
w_i = A_j g_i on shared probes; the difference matrix itself is never formed.

The damped variants shrink the carried estimate by (1 - gamma) each step and
estimate tr(A_j - (1 - gamma) A_{j-1}) instead of tr(A_j - A_{j-1}).  Damping
trades a slightly larger per-step difference norm against geometric decay of
accumulated error, which is what keeps the variance bounded over long runs.
A tracked variance proxy v_j gives a closed-form per-step choice of gamma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .oracle import MatVecOracle, difference_oracle
from .probes import (
    ESTIMATE,
    RESIDUAL,
    RESIDUAL_DELTA,
    SKETCH,
    SKETCH_DELTA,
    ProbeBatch,
    quadratic_samples,
    rademacher_batch,
)

__all__ = [
    "EstimatorState",
    "HutchPPConfig",
    "HutchPPResult",
    "hutchinson",
    "hutchinson_exact_variance",
    "hutchpp",
    "hutchpp_detailed",
    "norestart_step",
    "deltashift_fixed_step",
    "deltashift_auto_step",
    "deltashift_init",
    "deltashiftpp_init",
    "deltashiftpp_step",
    "restart_run",
    "optimal_gamma",
]


@dataclass
class EstimatorState:
    """Running state of a dynamic estimator.

    ``t`` is the current trace estimate, ``v`` the tracked variance proxy
    (nonnegative by construction), ``step`` the 1-based time index of ``t``.
    ``gamma`` fixes the damping factor; ``None`` selects it per step from the
    variance proxy.  ``gamma_last`` records the damping actually used by the
    most recent step, for reporting.
    """

    t: float
    v: float
    step: int
    seed: int
    ell: int
    ell0: int
    gamma: float | None = None
    gamma_last: float | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.v < 0:
            raise ValueError(f"variance proxy must be nonnegative, got {self.v}")
        if self.gamma is not None and not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"fixed damping factor must lie in [0, 1], got {self.gamma}")


def hutchinson(oracle: MatVecOracle, ell: int, batch: ProbeBatch) -> float:
    """Average of the quadratic forms g_i^T A g_i over ``ell`` probes.

    Unbiased for tr(A) and exact for diagonal matrices under +-1 probes.
    Consumes exactly ``ell`` oracle applies.
    """
    if ell < 1:
        raise ValueError(f"probe count must be positive, got {ell}")
    if batch.count != ell:
        raise ValueError(f"batch holds {batch.count} probes, expected {ell}")
    _, forms = quadratic_samples(oracle, batch)
    return float(np.mean(forms))


def hutchinson_exact_variance(matrix: np.ndarray, ell: int) -> float:
    """Exact variance of the ell-probe Rademacher estimator on a symmetric matrix.

    Equals (2/ell) * (||A||_F^2 - sum_i A_ii^2); zero for diagonal input.
    Test-support routine, requires the dense matrix.
    """
    A = np.asarray(matrix, dtype=np.float64)
    d = np.diag(A)
    return 2.0 / ell * (float(np.sum(A * A)) - float(np.sum(d * d)))


def _paired_responses(oracle_prev, oracle_cur, batch):
    G = batch.vectors
    Z = oracle_prev.apply_mat(G.T).T
    W = oracle_cur.apply_mat(G.T).T
    return Z, W


def _damped_combine(t_prev, G, Z, W, gamma):
    """Combine paired responses into (t_j, mean squared residual norm).

    Computes t_j = (1 - gamma) t_{j-1} + mean_i g_i^T (w_i - (1 - gamma) z_i)
    and the plug-in estimate (1/ell) sum_i ||w_i - (1 - gamma) z_i||^2 of the
    squared Frobenius norm of the damped difference, reusing the same
    responses.  The residual-norm form is nonnegative by construction, unlike
    the expanded second-moment combination it equals on shared probes.
    """
    R = W - (1.0 - gamma) * Z
    forms = np.einsum("ij,ij->i", G, R)
    t = (1.0 - gamma) * t_prev + float(np.mean(forms))
    resid_sq = float(np.mean(np.einsum("ij,ij->i", R, R)))
    return t, resid_sq


def norestart_step(
    state: EstimatorState, oracle_prev: MatVecOracle, oracle_cur: MatVecOracle, ell: int
) -> tuple[EstimatorState, float]:
    """Undamped update t_j = t_{j-1} + h_ell(A_j - A_{j-1}).

    Cheap per step (2 ell applies) but per-step noise accumulates over time.
    """
    step = state.step + 1
    batch = rademacher_batch(state.seed, step, ell, oracle_cur.dim, stream=ESTIMATE)
    Z, W = _paired_responses(oracle_prev, oracle_cur, batch)
    t, _ = _damped_combine(state.t, batch.vectors, Z, W, 0.0)
    new = replace(state, t=t, step=step, gamma_last=None)
    return new, t


def deltashift_fixed_step(
    state: EstimatorState,
    oracle_prev: MatVecOracle,
    oracle_cur: MatVecOracle,
    ell: int,
    gamma: float,
) -> tuple[EstimatorState, float]:
    """Damped update with a caller-chosen damping factor in [0, 1].

    gamma = 0 reduces to the undamped difference update; gamma = 1 discards
    history and returns a fresh Hutchinson estimate of tr(A_j).  Consumes
    2 ell applies.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"damping factor must lie in [0, 1], got {gamma}")
    step = state.step + 1
    batch = rademacher_batch(state.seed, step, ell, oracle_cur.dim, stream=ESTIMATE)
    Z, W = _paired_responses(oracle_prev, oracle_cur, batch)
    t, _ = _damped_combine(state.t, batch.vectors, Z, W, gamma)
    new = replace(state, t=t, step=step, gamma_last=gamma)
    return new, t


def optimal_gamma(C: float, N: float, v_prev: float, ell: int) -> float:
    """Damping factor minimizing the tracked one-step variance bound.

    ``C`` estimates tr(A_{j-1}^T A_j), ``N`` estimates tr(A_{j-1}^T A_{j-1}),
    and ``v_prev`` is the variance proxy carried for t_{j-1}.  The minimizer
    of (1-g)^2 v_prev + (2/ell) (M + (1-g)^2 N - 2 (1-g) C) over g is
    1 - 2C / (ell v_prev + 2N), clamped to [0, 1] because C is a noisy
    estimate.  A zero denominator means there is no usable history, so a
    fresh estimate (g = 1) is the only sound choice.
    """
    if N < 0:
        raise ValueError(f"N must be nonnegative, got {N}")
    if v_prev < 0:
        raise ValueError(f"v_prev must be nonnegative, got {v_prev}")
    denom = ell * v_prev + 2.0 * N
    if denom <= 0.0:
        return 1.0
    return min(1.0, max(0.0, 1.0 - 2.0 * C / denom))


def deltashift_init(oracle_first: MatVecOracle, ell0: int, seed: int) -> EstimatorState:
    """Start a damped run: estimate tr(A_1) and seed the variance proxy.

    t_1 is the ell0-probe Hutchinson estimate; v_1 = (2/ell0) N where
    N = (1/ell0) sum_i ||A_1 g_i||^2 estimates ||A_1||_F^2 from the same
    responses.  Consumes ell0 applies.
    """
    if ell0 < 1:
        raise ValueError(f"ell0 must be positive, got {ell0}")
    batch = rademacher_batch(seed, 1, ell0, oracle_first.dim, stream=ESTIMATE)
    responses, forms = quadratic_samples(oracle_first, batch)
    t1 = float(np.mean(forms))
    N = float(np.mean(np.einsum("ij,ij->i", responses, responses)))
    v1 = 2.0 / ell0 * N
    return EstimatorState(t=t1, v=v1, step=1, seed=seed, ell=ell0, ell0=ell0)


def deltashift_auto_step(
    state: EstimatorState, oracle_prev: MatVecOracle, oracle_cur: MatVecOracle, ell: int
) -> tuple[EstimatorState, float]:
    """Damped update with the per-step damping factor chosen in closed form.

    Draws a fresh probe batch and reuses its 2 ell responses three ways: the
    moment estimates N, M, C that select gamma, the trace update itself, and
    the variance-proxy update
    v_j = (1-gamma)^2 v_{j-1} + (2/ell) * (1/ell) sum_i ||w_i - (1-gamma) z_i||^2.
    """
    step = state.step + 1
    batch = rademacher_batch(state.seed, step, ell, oracle_cur.dim, stream=ESTIMATE)
    Z, W = _paired_responses(oracle_prev, oracle_cur, batch)
    N = float(np.mean(np.einsum("ij,ij->i", Z, Z)))
    C = float(np.mean(np.einsum("ij,ij->i", W, Z)))
    gamma = optimal_gamma(C, N, state.v, ell)
    t, resid_sq = _damped_combine(state.t, batch.vectors, Z, W, gamma)
    v = (1.0 - gamma) ** 2 * state.v + 2.0 / ell * resid_sq
    new = replace(state, t=t, v=v, step=step, gamma_last=gamma)
    return new, t


def restart_run(
    oracles, ell0: int, ell: int, q: int, seed: int = 0
) -> list[float]:
    """Difference tracking with a fresh high-budget estimate every q steps.

    Steps j with j = 1 (mod q) discard history and take an ell0-probe
    Hutchinson estimate; every other step applies the undamped difference
    update with ell probe pairs.  ``oracles`` may be any iterable of per-step
    oracles; only two snapshots are held at a time.
    """
    if q < 1:
        raise ValueError(f"restart period must be positive, got {q}")
    if ell0 < 1 or ell < 1:
        raise ValueError("probe counts must be positive")
    estimates: list[float] = []
    prev_oracle = None
    state = None
    for j, oracle in enumerate(oracles, start=1):
        if j % q == 1 or q == 1 or j == 1:
            batch = rademacher_batch(seed, j, ell0, oracle.dim, stream=ESTIMATE)
            t = hutchinson(oracle, ell0, batch)
            state = EstimatorState(t=t, v=0.0, step=j, seed=seed, ell=ell, ell0=ell0)
        else:
            state, t = norestart_step(state, prev_oracle, oracle, ell)
        estimates.append(state.t)
        prev_oracle = oracle
    return estimates


# ---------------------------------------------------------------------------
# Hutch++ and the low-rank-aware dynamic variant
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HutchPPConfig:
    """Budget split for one Hutch++ call.

    ``ell`` is the total number of oracle applies for the call; ``split``
    gives the fractions planned for the range sketch, the projected trace,
    and the residual probes.  Every planned count must be at least 1, so
    ell >= 3 under the default equal split.
    """

    ell: int
    split: tuple[float, float, float] = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)

    def __post_init__(self):
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {self.split}")
        if any(f <= 0 for f in self.split):
            raise ValueError(f"split fractions must be positive, got {self.split}")
        s, p, r = self.counts()
        if min(s, p, r) < 1:
            raise ValueError(
                f"budget {self.ell} with split {self.split} allocates fewer than "
                "one apply to some phase; need ell >= 3 under the default split"
            )

    def counts(self) -> tuple[int, int, int]:
        """(sketch width, projection budget, residual probes); sums to ell."""
        s = int(self.ell * self.split[0])
        p = int(self.ell * self.split[1])
        return s, p, self.ell - s - p


@dataclass(frozen=True)
class HutchPPResult:
    estimate: float
    residual_fro_sq: float  # estimate of ||A - PA||_F^2, the mass the sketch missed
    matvecs: int  # oracle applies actually consumed (<= configured ell)
    sketch_rank: int


def _orthonormal_range(Y: np.ndarray, max_cols: int) -> np.ndarray:
    """Orthonormal basis for the column space of Y, truncated for stability.

    Columns with singular values below 1e-12 times the largest are dropped,
    and the basis is capped at ``max_cols`` columns.
    """
    if Y.shape[1] == 0:
        return Y
    U, sv, _ = np.linalg.svd(Y, full_matrices=False)
    if sv.size == 0 or sv[0] <= 0.0:
        return Y[:, :0]
    rank = int(np.sum(sv > 1e-12 * sv[0]))
    return U[:, : min(rank, max_cols)]


def _hutchpp_core(oracle, s, p, r, seed, step, sketch_stream, residual_stream, Y=None, S=None):
    """Shared Hutch++ body; sketch responses may be supplied by the caller.

    The residual mass ||A - PA||_F^2 is estimated from sketch quantities
    alone, via the orthogonal split ||A||_F^2 - ||PA||_F^2 with
    mean_i ||A s_i||^2 standing in for ||A||_F^2 and the exact ||AQ||_F^2
    (symmetric A) already at hand from the projection products.  Keeping this
    estimate independent of the residual probes matters: damping factors
    derived from it stay uncorrelated with the residual trace estimate, so
    combinations weighted by them stay unbiased.
    """
    n = oracle.dim
    if S is None:
        S = rademacher_batch(seed, step, s, n, stream=sketch_stream).vectors.T
    if Y is None:
        Y = oracle.apply_mat(S)  # s applies
    Q = _orthonormal_range(Y, max_cols=p)
    k = Q.shape[1]
    if k > 0:
        AQ = oracle.apply_mat(Q)  # k applies
        t_low = float(np.trace(Q.T @ AQ))
        projected_sq = float(np.sum(AQ * AQ))
    else:
        t_low = 0.0
        projected_sq = 0.0
    full_sq = float(np.mean(np.einsum("ij,ij->j", Y, Y)))
    residual_fro_sq = max(0.0, full_sq - projected_sq)
    G = rademacher_batch(seed, step, r, n, stream=residual_stream).vectors.T
    if k > 0:
        Gp = G - Q @ (Q.T @ G)
    else:
        Gp = G
    AGp = oracle.apply_mat(Gp)  # r applies
    forms = np.einsum("ij,ij->j", Gp, AGp)
    estimate = t_low + float(np.mean(forms))
    return HutchPPResult(
        estimate=estimate,
        residual_fro_sq=residual_fro_sq,
        matvecs=s + k + r,
        sketch_rank=k,
    )


def hutchpp_detailed(
    oracle: MatVecOracle,
    config: HutchPPConfig,
    seed: int,
    step: int,
    sketch_stream: int = SKETCH,
    residual_stream: int = RESIDUAL,
) -> HutchPPResult:
    """Low-rank-deflated trace estimate with diagnostics.

    Sketches the range of A with +-1 probes, orthonormalizes the responses
    into Q, takes the exact trace of Q^T A Q, and runs Hutchinson on the
    projected remainder (I - QQ^T) A (I - QQ^T).  The returned
    ``residual_fro_sq`` estimates ||A - QQ^T A||_F^2 from sketch quantities
    at no extra applies.  Unbiased for any square matrix, and exact when the
    sketch width reaches rank(A).
    """
    s, p, r = config.counts()
    return _hutchpp_core(oracle, s, p, r, seed, step, sketch_stream, residual_stream)


def hutchpp(oracle: MatVecOracle, config: HutchPPConfig, seed: int, step: int) -> float:
    return hutchpp_detailed(oracle, config, seed, step).estimate


def deltashiftpp_init(oracle_first: MatVecOracle, ell0: int, seed: int) -> EstimatorState:
    """Start a low-rank-aware damped run with a Hutch++ estimate of tr(A_1)."""
    res = hutchpp_detailed(oracle_first, HutchPPConfig(ell0), seed, 1)
    v1 = 8.0 * res.residual_fro_sq / ell0
    return EstimatorState(t=res.estimate, v=v1, step=1, seed=seed, ell=ell0, ell0=ell0)


def deltashiftpp_step(
    state: EstimatorState,
    oracle_prev: MatVecOracle,
    oracle_cur: MatVecOracle,
    ell: int,
    reuse_sketch: bool = False,
) -> tuple[EstimatorState, float]:
    """Damped update built from two Hutch++ calls per step.

    The budget ``ell`` is split between a call on A_j and a call on the
    difference A_j - A_{j-1} (each gets ell // 2 applies of its own
    operator).  With residual masses K_A and K_D from the two calls and
    per-call variance proxies a = 8 K_A / ell_A and b = v_{j-1} + 8 K_D / ell_D,
    the combination weight gamma = b / (a + b) minimizes
    gamma^2 a + (1-gamma)^2 b, and

        t_j = gamma * hpp(A_j) + (1 - gamma) * (t_{j-1} + hpp(A_j - A_{j-1}))
        v_j = gamma^2 a + (1 - gamma)^2 b.

    When the difference is (nearly) low rank its Hutch++ call is (nearly)
    exact, K_D is tiny, and gamma stays small, so history is reused.

    ``reuse_sketch`` shares the A_j-side sketch products between the two
    calls: the difference call sketches with the same probes and reuses
    A_j S, so it only pays for the A_{j-1} side of its sketch.
    """
    if ell < 6:
        raise ValueError(
            f"need at least 6 applies per step for two Hutch++ calls, got {ell}"
        )
    step = state.step + 1
    ell_a = ell // 2
    ell_d = ell - ell_a
    cfg_a = HutchPPConfig(ell_a)
    cfg_d = HutchPPConfig(ell_d)
    delta = difference_oracle(oracle_prev, oracle_cur)

    s_a, p_a, r_a = cfg_a.counts()
    S_a = rademacher_batch(state.seed, step, s_a, oracle_cur.dim, stream=SKETCH).vectors.T
    Y_a = oracle_cur.apply_mat(S_a)
    res_a = _hutchpp_core(
        oracle_cur, s_a, p_a, r_a, state.seed, step, SKETCH, RESIDUAL, Y=Y_a, S=S_a
    )

    s_d, p_d, r_d = cfg_d.counts()
    if reuse_sketch and s_d <= s_a:
        S_d = S_a[:, :s_d]
        Y_d = Y_a[:, :s_d] - oracle_prev.apply_mat(S_d)
        res_d = _hutchpp_core(
            delta, s_d, p_d, r_d, state.seed, step, SKETCH_DELTA, RESIDUAL_DELTA,
            Y=Y_d, S=S_d,
        )
    else:
        res_d = _hutchpp_core(
            delta, s_d, p_d, r_d, state.seed, step, SKETCH_DELTA, RESIDUAL_DELTA
        )

    a = 8.0 * res_a.residual_fro_sq / ell_a
    b = state.v + 8.0 * res_d.residual_fro_sq / ell_d
    gamma = b / (a + b) if a + b > 0.0 else 1.0
    t = gamma * res_a.estimate + (1.0 - gamma) * (state.t + res_d.estimate)
    v = gamma**2 * a + (1.0 - gamma) ** 2 * b
    new = replace(state, t=t, v=v, step=step, gamma_last=gamma)
    return new, t
