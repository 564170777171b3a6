import numpy as np
import pytest

from dyntrace.matfunc import (
    ChebyshevScaling,
    chebyshev_actions,
    chebyshev_oracle,
    expm_lanczos_oracle,
    lanczos,
    lanczos_expm_apply,
    power_iteration,
    scaling_from_power_iteration,
)
from dyntrace.oracle import MatVecLedger, counted, dense_oracle


def _sym_with_radius(n, seed, radius=1.0):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    A = (A + A.T) / 2.0
    w = np.linalg.eigvalsh(A)
    return A * (radius / max(abs(w[0]), abs(w[-1])))


def _dense_expm(A):
    w, U = np.linalg.eigh(A)
    return (U * np.exp(w)) @ U.T


# ---------------------------------------------------------------------------
# Lanczos
# ---------------------------------------------------------------------------


def test_lanczos_zero_operator_is_identity_action():
    oracle = dense_oracle(np.zeros((5, 5)))
    x = np.arange(1.0, 6.0)
    assert np.allclose(lanczos_expm_apply(oracle, x, 10), x, atol=1e-14)


def test_lanczos_zero_vector():
    oracle = dense_oracle(np.eye(4))
    assert np.array_equal(lanczos_expm_apply(oracle, np.zeros(4), 5), np.zeros(4))


def test_lanczos_diagonal_exponential():
    B = np.diag([0.0, np.log(2.0)])
    oracle = dense_oracle(B)
    e2 = np.array([0.0, 1.0])
    out = lanczos_expm_apply(oracle, e2, 5)
    assert np.max(np.abs(out - 2.0 * e2)) < 1e-10


def test_lanczos_matches_dense_exponential():
    n, k = 100, 15
    B = _sym_with_radius(n, 3, radius=1.0)
    expB = _dense_expm(B)
    oracle = dense_oracle(B)
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(20):
        x = rng.standard_normal(n)
        approx = lanczos_expm_apply(oracle, x, k)
        exact = expB @ x
        worst = max(worst, np.linalg.norm(approx - exact) / np.linalg.norm(exact))
    assert worst <= 1e-8


def test_lanczos_exact_at_full_dimension():
    n = 12
    B = _sym_with_radius(n, 5, radius=2.0)
    expB = _dense_expm(B)
    oracle = dense_oracle(B)
    x = np.random.default_rng(8).standard_normal(n)
    approx = lanczos_expm_apply(oracle, x, n + 10)  # capped at n internally
    assert np.linalg.norm(approx - expB @ x) / np.linalg.norm(expB @ x) <= 1e-8


def test_lanczos_basis_orthonormal():
    B = _sym_with_radius(40, 11, radius=1.0)
    x = np.random.default_rng(2).standard_normal(40)
    dec = lanczos(dense_oracle(B), x, 15)
    gram = dec.basis.T @ dec.basis
    assert np.max(np.abs(gram - np.eye(gram.shape[0]))) < 1e-8
    assert np.all(dec.betas >= 0.0)
    assert np.all(np.isfinite(dec.alphas))


def test_lanczos_rejects_bad_iteration_count():
    with pytest.raises(ValueError):
        lanczos(dense_oracle(np.eye(3)), np.ones(3), 0)


def test_expm_oracle_cost_accounting():
    B = _sym_with_radius(20, 13)
    ledger = MatVecLedger()
    base = counted(dense_oracle(B), ledger, 1)
    oracle = expm_lanczos_oracle(base, k=15)
    assert oracle.matvec_cost == 15
    oracle.apply(np.random.default_rng(0).standard_normal(20))
    assert ledger.total_base_matvecs == 15


# ---------------------------------------------------------------------------
# Power iteration
# ---------------------------------------------------------------------------


def test_power_iteration_diagonal():
    oracle = dense_oracle(np.diag([3.0, 1.0, 0.5]))
    assert abs(power_iteration(oracle, 50, seed=0) - 3.0) < 1e-6


def test_power_iteration_identity_one_step():
    oracle = dense_oracle(np.eye(6))
    assert power_iteration(oracle, 1, seed=1) == 1.0


def test_power_iteration_zero_operator():
    oracle = dense_oracle(np.zeros((4, 4)))
    assert power_iteration(oracle, 10, seed=2) == 0.0


def test_power_iteration_underestimates_dense_eig():
    B = _sym_with_radius(50, 17, radius=2.5)
    lam_true = float(np.max(np.abs(np.linalg.eigvalsh(B))))
    lam_est = power_iteration(dense_oracle(B), 200, seed=3)
    assert lam_est <= lam_true + 1e-9
    assert lam_est >= 0.99 * lam_true


# ---------------------------------------------------------------------------
# Chebyshev actions
# ---------------------------------------------------------------------------


def test_chebyshev_degree_zero_is_input():
    oracle = dense_oracle(np.eye(3))
    scaling = ChebyshevScaling(lambda_max=1.0)
    x = np.array([1.0, -2.0, 0.5])
    actions = chebyshev_actions(oracle, scaling, x, 0)
    assert len(actions) == 1
    assert np.array_equal(actions[0], x)


def test_chebyshev_cosine_property():
    # On a diagonal matrix of cosines (margin 1, exact scale), the action of
    # T_q on a basis vector is cos(q theta) times that vector.
    thetas = np.linspace(0.2, 2.8, 6)
    H = np.diag(np.cos(thetas))
    oracle = dense_oracle(H)
    scaling = ChebyshevScaling(lambda_max=1.0, margin=1.0)
    for i, theta in enumerate(thetas):
        e = np.zeros(6)
        e[i] = 1.0
        actions = chebyshev_actions(oracle, scaling, e, 5)
        for q in range(6):
            assert abs(actions[q][i] - np.cos(q * theta)) < 1e-12


def test_chebyshev_matches_dense_polynomial():
    B = _sym_with_radius(30, 19, radius=0.9)
    scaling = ChebyshevScaling(lambda_max=0.9, margin=1.0)
    Ht = B / scaling.scale
    dense_t3 = 4 * np.linalg.matrix_power(Ht, 3) - 3 * Ht
    x = np.random.default_rng(4).standard_normal(30)
    actions = chebyshev_actions(dense_oracle(B), scaling, x, 3)
    assert np.max(np.abs(actions[3] - dense_t3 @ x)) < 1e-10


def test_chebyshev_actions_cost_is_qmax():
    B = _sym_with_radius(10, 23)
    ledger = MatVecLedger()
    base = counted(dense_oracle(B), ledger, 1)
    scaling = ChebyshevScaling(lambda_max=1.0)
    chebyshev_actions(base, scaling, np.ones(10), 7)
    assert ledger.total_base_matvecs == 7


def test_chebyshev_boundedness_under_scaling():
    n = 30
    B = _sym_with_radius(n, 29, radius=3.0)
    scaling = scaling_from_power_iteration(dense_oracle(B), iters=100, seed=5)
    rng = np.random.default_rng(6)
    for _ in range(5):
        x = rng.standard_normal(n)
        actions = chebyshev_actions(dense_oracle(B), scaling, x, 10)
        for act in actions:
            assert np.linalg.norm(act) <= np.sqrt(n) * np.linalg.norm(x) * (1.0 + 1e-6)


def test_chebyshev_oracle_cost():
    B = _sym_with_radius(8, 31)
    scaling = ChebyshevScaling(lambda_max=1.0)
    oracle = chebyshev_oracle(dense_oracle(B), scaling, 4)
    assert oracle.matvec_cost == 4
    with pytest.raises(ValueError):
        chebyshev_oracle(dense_oracle(B), scaling, 0)


def test_scaling_validation():
    with pytest.raises(ValueError):
        ChebyshevScaling(lambda_max=1.0, margin=0.9)
    with pytest.raises(ValueError):
        ChebyshevScaling(lambda_max=-1.0)
