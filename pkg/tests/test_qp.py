"""Dense active-set QP solver against a brute-force KKT enumeration oracle."""

import itertools

import numpy as np
import pytest

from cfsdmpc.qp import ActiveSetSolver, QpStatus, QuadraticProgram, solve


def brute_force_qp(problem, tol=1e-9):
    """Independent oracle: enumerate active sets, solve each KKT system, and
    return the first point satisfying every KKT condition.

    For a convex QP any KKT point is a global minimizer, so the first valid
    one is the answer; enumeration order (small active sets first) only
    affects speed. Active sets larger than n - p give singular KKT systems
    and are skipped outright.
    """
    Q, q = problem.Q, problem.q
    A = problem.A if problem.A is not None else np.zeros((0, problem.n))
    b = problem.b if problem.b is not None else np.zeros(0)
    E = problem.E if problem.E is not None else np.zeros((0, problem.n))
    f = problem.f if problem.f is not None else np.zeros(0)
    m, n = A.shape[0], problem.n
    for k in range(min(m, n - E.shape[0]) + 1):
        for active in itertools.combinations(range(m), k):
            M = np.vstack([E, A[list(active)]])
            rhs_eq = np.concatenate([f, b[list(active)]])
            KKT = np.block([[Q, M.T], [M, np.zeros((M.shape[0], M.shape[0]))]])
            rhs = np.concatenate([-q, rhs_eq])
            try:
                sol = np.linalg.solve(KKT, rhs)
            except np.linalg.LinAlgError:
                continue
            z = sol[:n]
            nu = sol[n : n + E.shape[0]]
            lam = sol[n + E.shape[0] :]
            # reject garbage from singular KKT systems
            if np.abs(KKT @ sol - rhs).max() > 1e-7:
                continue
            if M.shape[0] and np.abs(M @ z - rhs_eq).max() > 1e-7:
                continue
            stat = Q @ z + q + E.T @ nu + A[list(active)].T @ lam
            if np.abs(stat).max() > 1e-7:
                continue
            if m and np.any(A @ z - b > tol):
                continue
            if lam.size and lam.min() < -tol:
                continue
            obj = 0.5 * z @ Q @ z + q @ z
            return z, obj
    return None


def random_qp(rng, n, m, p):
    M = rng.normal(size=(n, n))
    Q = M @ M.T + (0.5 + rng.uniform()) * np.eye(n)
    q = rng.normal(size=n)
    A = rng.normal(size=(m, n)) if m else None
    # anchor b so the feasible set contains a known point
    x0 = rng.normal(size=n)
    b = A @ x0 + rng.uniform(0.1, 2.0, size=m) if m else None
    E = rng.normal(size=(p, n)) if p else None
    f = E @ x0 if p else None
    return QuadraticProgram(Q, q, A, b, E, f)


class TestExamples:
    def test_scalar_active_bound(self):
        # min 1/2 (z-2)^2  s.t. z <= 1
        prob = QuadraticProgram(np.eye(1), np.array([-2.0]), np.array([[1.0]]), np.array([1.0]))
        sol = solve(prob)
        assert sol.status is QpStatus.OPTIMAL
        assert sol.z[0] == pytest.approx(1.0, abs=1e-9)
        assert sol.objective_value + 2.0 == pytest.approx(0.5, abs=1e-9)  # add dropped const

    def test_symmetric_equality(self):
        prob = QuadraticProgram(
            np.eye(2), np.zeros(2), E=np.array([[1.0, 1.0]]), f=np.array([2.0])
        )
        sol = solve(prob)
        assert sol.status is QpStatus.OPTIMAL
        assert sol.z == pytest.approx(np.array([1.0, 1.0]), abs=1e-9)

    def test_infeasible_detected(self):
        prob = QuadraticProgram(
            np.eye(1),
            np.zeros(1),
            np.array([[1.0], [-1.0]]),
            np.array([-1.0, -1.0]),  # z <= -1 and z >= 1
        )
        assert solve(prob).status is QpStatus.INFEASIBLE


class TestAgainstOracle:
    def test_hundred_random_qps(self):
        rng = np.random.default_rng(42)
        solver = ActiveSetSolver()
        for trial in range(100):
            n = int(rng.integers(1, 11))
            m = int(rng.integers(0, min(21, 2 * n + 5)))
            p = int(rng.integers(0, max(1, n // 2) + 1))
            prob = random_qp(rng, n, m, p)
            got = solver.solve(prob)
            want = brute_force_qp(prob)
            assert want is not None, f"oracle found no KKT point (trial {trial})"
            assert got.status is QpStatus.OPTIMAL, f"trial {trial}: {got.status}"
            assert got.objective_value == pytest.approx(want[1], abs=1e-6)
            assert got.z == pytest.approx(want[0], abs=1e-6)

    def test_kkt_conditions_hold(self):
        rng = np.random.default_rng(5)
        solver = ActiveSetSolver()
        for _ in range(30):
            n = int(rng.integers(2, 9))
            m = int(rng.integers(1, 12))
            prob = random_qp(rng, n, m, 0)
            sol = solver.solve(prob)
            assert sol.status is QpStatus.OPTIMAL
            resid = prob.A @ sol.z - prob.b
            assert resid.max() <= 1e-6  # primal
            lam = sol.ineq_multipliers
            assert lam.min() >= -1e-6  # dual
            assert np.abs(lam * resid).max() <= 1e-5  # complementary slackness
            stat = prob.Q @ sol.z + prob.q + prob.A.T @ lam
            assert np.abs(stat).max() <= 1e-6  # stationarity


class TestDeterminismAndWarmStart:
    def test_bitwise_deterministic(self):
        rng = np.random.default_rng(11)
        prob = random_qp(rng, 6, 8, 1)
        a = ActiveSetSolver().solve(prob)
        b = ActiveSetSolver().solve(prob)
        assert np.array_equal(a.z, b.z)
        assert a.objective_value == b.objective_value
        assert a.active_set == b.active_set

    def test_warm_start_same_minimizer(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            prob = random_qp(rng, 5, 7, 0)
            cold = ActiveSetSolver().solve(prob)
            warm = ActiveSetSolver().solve(prob, warm_start=cold.z, warm_active=cold.active_set)
            assert warm.z == pytest.approx(cold.z, abs=1e-6)
            assert warm.iterations <= cold.iterations


class TestValidation:
    def test_asymmetric_q_rejected(self):
        with pytest.raises(ValueError):
            QuadraticProgram(np.array([[1.0, 0.5], [0.0, 1.0]]), np.zeros(2))

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            QuadraticProgram(np.eye(2), np.zeros(3))
