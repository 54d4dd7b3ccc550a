"""Dense convex QP solver (primal active-set).

Solves  min 1/2 z'Qz + q'z  s.t.  A z <= b,  E z = f  with Q positive
definite (semidefinite Q is regularized). Equality constraints stay in
the working set permanently; inequality constraints enter and leave via
the standard primal active-set pivoting rules. Each step is computed
through a Schur complement on a single Cholesky factorization of Q, so
solves are cheap and bit-for-bit deterministic.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla
from scipy.optimize import linprog

FEAS_TOL = 1e-8
STAT_TOL = 1e-9


class QpStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    MAX_ITERATIONS = "MaxIterations"


@dataclass(frozen=True)
class QuadraticProgram:
    """min 1/2 z'Qz + q'z  s.t.  A z <= b,  E z = f."""

    Q: np.ndarray
    q: np.ndarray
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    E: np.ndarray | None = None
    f: np.ndarray | None = None

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        q = np.asarray(self.q, dtype=float).reshape(-1)
        n = q.shape[0]
        if Q.shape != (n, n):
            raise ValueError("Q/q dimension mismatch")
        if not np.allclose(Q, Q.T, atol=1e-9):
            raise ValueError("Q must be symmetric within 1e-9")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "q", q)
        for mat, vec, mname in (("A", "b", "inequality"), ("E", "f", "equality")):
            M = getattr(self, mat)
            v = getattr(self, vec)
            if M is None:
                M = np.zeros((0, n))
                v = np.zeros(0)
            else:
                M = np.asarray(M, dtype=float).reshape(-1, n)
                v = np.asarray(v, dtype=float).reshape(-1)
                if M.shape[0] != v.shape[0]:
                    raise ValueError(f"{mname} constraint dimension mismatch")
            object.__setattr__(self, mat, M)
            object.__setattr__(self, vec, v)

    @property
    def n(self) -> int:
        return self.q.shape[0]


@dataclass
class QpSolution:
    z: np.ndarray
    objective_value: float
    status: QpStatus
    iterations: int
    active_set: tuple = ()
    ineq_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _dump(problem: QuadraticProgram, path):
    """Write the QP matrices to a plain-text file for offline inspection."""
    with open(path, "w") as fh:
        for name in ("Q", "q", "A", "b", "E", "f"):
            arr = np.atleast_2d(getattr(problem, name))
            fh.write(f"# {name} {arr.shape[0]} {arr.shape[1]}\n")
            for row in arr:
                fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


class ActiveSetSolver:
    """Primal active-set QP solver with a reusable workspace.

    One instance per planner; instances hold no state between solves other
    than an optional working-set warm start, so they are safe to move
    between threads (but not to share concurrently).

    Set ``debug_dump_path`` to write every solved QP to a text file.
    """

    def __init__(self, max_iter: int = 200, feas_tol: float = FEAS_TOL):
        self.max_iter = max_iter
        self.feas_tol = feas_tol
        self.debug_dump_path = None

    # -- feasible starting point ------------------------------------------

    def _phase1(self, problem: QuadraticProgram):
        """Max-margin feasible point via LP; None if the QP is infeasible."""
        n = problem.n
        m = problem.A.shape[0]
        # variables [z; t], maximize t s.t. A z + t <= b, t <= 1, E z = f
        c = np.zeros(n + 1)
        c[-1] = -1.0
        A_ub = np.hstack([problem.A, np.ones((m, 1))]) if m else np.zeros((0, n + 1))
        b_ub = problem.b
        A_eq = np.hstack([problem.E, np.zeros((problem.E.shape[0], 1))]) if problem.E.shape[0] else None
        res = linprog(
            c,
            A_ub=A_ub if m else None,
            b_ub=b_ub if m else None,
            A_eq=A_eq,
            b_eq=problem.f if problem.E.shape[0] else None,
            bounds=[(None, None)] * n + [(None, 1.0)],
            method="highs",
        )
        if not res.success or res.x[-1] < -self.feas_tol:
            return None
        return res.x[:n]

    def _is_feasible(self, problem: QuadraticProgram, z: np.ndarray) -> bool:
        if problem.E.shape[0] and np.max(np.abs(problem.E @ z - problem.f)) > self.feas_tol:
            return False
        if problem.A.shape[0] and np.max(problem.A @ z - problem.b) > self.feas_tol:
            return False
        return True

    # -- main loop ---------------------------------------------------------

    def solve(self, problem: QuadraticProgram, warm_start=None, warm_active=None) -> QpSolution:
        n = problem.n
        Q = problem.Q
        # regularize if the factorization needs it
        try:
            cho = sla.cho_factor(Q, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            cho = sla.cho_factor(Q + 1e-9 * np.eye(n), lower=True, check_finite=False)
        if self.debug_dump_path is not None:
            _dump(problem, self.debug_dump_path)

        A, b = problem.A, problem.b
        E, f = problem.E, problem.f
        m = A.shape[0]
        p = E.shape[0]

        z = None
        if warm_start is not None:
            cand = np.asarray(warm_start, dtype=float).reshape(-1)
            if cand.shape[0] == n and self._is_feasible(problem, cand):
                z = cand.copy()
        if z is None:
            if m == 0 and p == 0:
                z = np.zeros(n)
            else:
                z = self._phase1(problem)
                if z is None:
                    return QpSolution(np.zeros(n), np.inf, QpStatus.INFEASIBLE, 0)

        working = []
        if warm_active:
            resid = A @ z - b if m else np.zeros(0)
            working = [i for i in warm_active if 0 <= i < m and resid[i] > -1e-7]

        def kkt_step(grad, W):
            """p, mu solving min 1/2 p'Qp + grad'p s.t. Ep=0, A_W p=0."""
            M = np.vstack([E, A[W]]) if (p or W) else np.zeros((0, n))
            qinv_g = sla.cho_solve(cho, grad, check_finite=False)
            if M.shape[0] == 0:
                return -qinv_g, np.zeros(0)
            qinv_Mt = sla.cho_solve(cho, M.T, check_finite=False)
            S = M @ qinv_Mt
            rhs = M @ qinv_g
            try:
                mu = np.linalg.solve(S, -rhs)
            except np.linalg.LinAlgError:
                mu = np.linalg.lstsq(S, -rhs, rcond=None)[0]
            step = -(qinv_g + qinv_Mt @ mu)
            return step, mu

        iterations = 0
        while iterations < self.max_iter:
            iterations += 1
            grad = Q @ z + problem.q
            step, mu = kkt_step(grad, working)
            if np.max(np.abs(step), initial=0.0) < STAT_TOL:
                lam = mu[p:]
                if lam.size == 0 or lam.min() >= -STAT_TOL:
                    lam_full = np.zeros(m)
                    for idx, ci in enumerate(working):
                        lam_full[ci] = lam[idx]
                    obj = float(0.5 * z @ Q @ z + problem.q @ z)
                    return QpSolution(z, obj, QpStatus.OPTIMAL, iterations, tuple(working), lam_full)
                working.pop(int(np.argmin(lam)))
                continue
            # line search against inactive constraints
            alpha = 1.0
            blocking = -1
            if m:
                mask = np.ones(m, dtype=bool)
                mask[working] = False
                Ad = A[mask] @ step
                idxs = np.flatnonzero(mask)
                pos = Ad > 1e-12
                if np.any(pos):
                    slacks = b[idxs[pos]] - A[idxs[pos]] @ z
                    ratios = slacks / Ad[pos]
                    jmin = int(np.argmin(ratios))
                    if ratios[jmin] < alpha:
                        alpha = max(ratios[jmin], 0.0)
                        blocking = int(idxs[pos][jmin])
            z = z + alpha * step
            if blocking >= 0:
                working.append(blocking)

        obj = float(0.5 * z @ Q @ z + problem.q @ z)
        return QpSolution(z, obj, QpStatus.MAX_ITERATIONS, iterations, tuple(working))


def solve(problem: QuadraticProgram, warm_start=None, **kwargs) -> QpSolution:
    """One-shot convenience wrapper around ActiveSetSolver."""
    return ActiveSetSolver(**kwargs).solve(problem, warm_start=warm_start)
