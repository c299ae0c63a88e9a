from __future__ import annotations

import numpy as np
import pytest

from conftest import random_fused_gram
from oracles import cd_lasso, gaussian_elimination_solve
from ockr.errors import NumericalError, PreconditionError
from ockr.regression import (
    _lars_steps,
    fisher_diagnostics,
    lasso_objective,
    solve_dense,
    solve_lars_path,
)


def kkt_holds(K: np.ndarray, alpha: np.ndarray, delta: float, tol: float = 1e-8) -> bool:
    c = K.T @ (np.ones(K.shape[0]) - K @ alpha)
    for i in range(K.shape[0]):
        if alpha[i] != 0.0:
            if abs(2.0 * c[i] - delta * np.sign(alpha[i])) > tol:
                return False
        elif abs(2.0 * c[i]) > delta + tol:
            return False
    return True


class TestSolveDense:
    def test_scalar(self):
        sol = solve_dense(np.array([[1.0]]))
        assert np.array_equal(sol.alpha, np.array([1.0]))
        assert sol.residual_norm == 0.0

    def test_identity(self):
        sol = solve_dense(np.eye(3))
        np.testing.assert_allclose(sol.alpha, np.ones(3), rtol=0, atol=0)

    def test_matches_gaussian_elimination(self, rng):
        gram, _, _ = random_fused_gram(rng, 8)
        sol = solve_dense(gram)
        expected = gaussian_elimination_solve(gram.values, np.ones(8))
        np.testing.assert_allclose(sol.alpha, expected, rtol=0, atol=1e-9)

    def test_residual_bound(self, rng):
        for n in (3, 10, 25):
            gram, _, _ = random_fused_gram(rng, n)
            sol = solve_dense(gram)
            assert sol.residual_norm <= 1e-6 * np.sqrt(n)

    def test_scale_coherence(self, rng):
        gram, _, _ = random_fused_gram(rng, 6)
        alpha = solve_dense(gram).alpha
        for c in (2.0, -3.5, 0.25):
            scaled = np.linalg.solve(gram.values, c * np.ones(6))
            np.testing.assert_allclose(scaled, c * alpha, rtol=1e-9, atol=1e-12)

    def test_jitter_escalation_on_singular(self):
        row = np.array([1.0, 0.0, 0.0])
        K = np.outer(row, row) + np.diag([0.0, 1.0, 1.0])
        K[0, 1] = K[1, 0] = 1.0  # duplicate-direction rows: exactly singular
        sol = solve_dense(np.array([[1.0, 1.0], [1.0, 1.0]]))
        assert sol.jitter_used > 0.0
        assert np.all(np.isfinite(sol.alpha))

    def test_unrecoverable_failure(self):
        with pytest.raises(NumericalError):
            solve_dense(-np.eye(4))

    def test_non_symmetric_rejected(self):
        K = np.array([[1.0, 0.5], [0.2, 1.0]])
        with pytest.raises(PreconditionError, match="symmetric"):
            solve_dense(K)

    def test_deterministic(self, rng):
        gram, _, _ = random_fused_gram(rng, 9)
        a = solve_dense(gram).alpha
        b = solve_dense(gram).alpha
        assert np.array_equal(a, b)


class TestLarsPath:
    def test_full_target_matches_dense(self, rng):
        for n in (4, 8, 12):
            gram, _, _ = random_fused_gram(rng, n)
            sparse = solve_lars_path(gram, n)
            dense = solve_dense(gram)
            assert np.max(np.abs(sparse.dense(n) - dense.alpha)) <= 1e-6
            assert sparse.delta <= 1e-8

    def test_orthogonal_design_soft_threshold(self):
        sol = solve_lars_path(np.eye(2), 1)
        alpha = sol.dense(2)
        # closed-form orthogonal-design lasso: alpha_i = max(0, 1 - delta/2)
        expected = max(0.0, 1.0 - sol.delta / 2.0)
        np.testing.assert_allclose(alpha[alpha != 0.0], expected)
        assert sol.shortfall == (sol.nnz < 1)

    def test_objective_beats_cd_oracle(self, rng):
        gram, _, _ = random_fused_gram(rng, 10)
        for target in (2, 3, 5):
            sol = solve_lars_path(gram, target)
            alpha = sol.dense(10)
            oracle = cd_lasso(gram.values, sol.delta)
            assert lasso_objective(gram.values, alpha, sol.delta) <= (
                lasso_objective(gram.values, oracle, sol.delta) + 1e-6
            )

    def test_kkt_at_every_target(self, rng):
        gram, _, _ = random_fused_gram(rng, 9)
        for target in range(1, 10):
            sol = solve_lars_path(gram, target)
            assert kkt_holds(gram.values, sol.dense(9), sol.delta)
            assert sol.nnz <= target

    def test_target_bounds(self, rng):
        gram, _, _ = random_fused_gram(rng, 5)
        with pytest.raises(PreconditionError):
            solve_lars_path(gram, 6)
        with pytest.raises(PreconditionError):
            solve_lars_path(gram, 0)

    def test_nnz_counts_stored_nonzeros(self, rng):
        gram, _, _ = random_fused_gram(rng, 8)
        sol = solve_lars_path(gram, 4)
        assert sol.nnz == len(sol.alpha) == np.count_nonzero(sol.dense(8))

    def test_delta_strictly_decreasing_along_path(self, rng):
        for _ in range(20):
            n = int(rng.integers(4, 12))
            gram, _, _ = random_fused_gram(rng, n)
            deltas = [
                2.0 * float(np.max(np.abs(c)))
                for _, _, c in _lars_steps(gram.values, np.ones(n), 0.0)
            ]
            assert all(b < a for a, b in zip(deltas, deltas[1:]))

    def test_deterministic(self, rng):
        gram, _, _ = random_fused_gram(rng, 10)
        a = solve_lars_path(gram, 4)
        b = solve_lars_path(gram, 4)
        assert np.array_equal(a.values, b.values)
        assert np.array_equal(a.indices, b.indices)
        assert a.delta == b.delta

    def test_handles_sign_drops(self, rng):
        # correlated non-kernel designs regularly produce drop events
        seen_drop = False
        for trial in range(60):
            n = int(rng.integers(5, 12))
            a = rng.standard_normal((n, n))
            K = a @ a.T / n + np.eye(n) * 0.3
            K = (np.triu(K, 1) + np.triu(K, 1).T) + np.diag(np.diag(K))
            sizes = [len(act) for _, act, _ in _lars_steps(K, np.ones(n), 0.0)]
            if any(b < a_ for a_, b in zip(sizes, sizes[1:])):
                seen_drop = True
            for target in (2, max(2, n // 2)):
                sol = solve_lars_path(K, target)
                assert kkt_holds(K, sol.dense(n), sol.delta)
        assert seen_drop


class TestFisherDiagnostics:
    def test_dense_solution_is_null_space(self, rng):
        gram, _, _ = random_fused_gram(rng, 15)
        alpha = solve_dense(gram).alpha
        diag = fisher_diagnostics(gram, alpha)
        assert abs(diag.s_w) <= 1e-10
        assert diag.s_b == pytest.approx(1.0, abs=1e-8)
        assert diag.m1 == pytest.approx(1.0, abs=1e-8)

    def test_forced_constant_responses(self):
        diag = fisher_diagnostics(np.eye(3), np.array([2.0, 2.0, 2.0]))
        assert diag.s_w == 0.0
        assert diag.s_b == 4.0
        assert diag.m1 == 2.0

    def test_matches_scalar_loop(self, rng):
        gram, _, _ = random_fused_gram(rng, 7)
        alpha = rng.standard_normal(7)
        diag = fisher_diagnostics(gram, alpha)
        responses = gram.values @ alpha
        m1 = sum(responses) / 7
        s_w = sum((r - m1) ** 2 for r in responses)
        s_b = m1 * m1
        assert diag.m1 == pytest.approx(m1, rel=1e-12)
        assert diag.s_w == pytest.approx(s_w, rel=1e-9, abs=1e-12)
        assert diag.s_b == pytest.approx(s_b, rel=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(PreconditionError):
            fisher_diagnostics(np.eye(3), np.ones(4))
