"""Block-diagonal complex SDPs with cross-block linear coupling.

    minimize    sum_k Re tr(C_k X_k)
    subject to  sum_k Re tr(M_jk X_k) <= c_j      for each inequality j
                [X_k]_ii = value                   for each pin
                X_k Hermitian PSD

Each Hermitian block is parametrized by n^2 real numbers and its PSD
constraint is imposed through the real 2n x 2n embedding
[[Re X, -Im X], [Im X, Re X]]; the cone program is solved with cvxopt.
"""
from dataclasses import dataclass, field

import numpy as np
from cvxopt import matrix, solvers

from .report import INFEASIBLE, ITERATION_LIMIT, OPTIMAL, SolverReport
from ..errors import InvalidInputError

EMBEDDING = "real-2n embedding"


@dataclass
class SdpInequality:
    """sum_k Re tr(coeffs[k] X_k) <= bound; blocks missing from coeffs contribute 0."""

    coeffs: dict
    bound: float
    label: str = ""


@dataclass
class BlockSdpProblem:
    costs: list
    inequalities: list = field(default_factory=list)
    pins: list = field(default_factory=list)
    # optional positive diagonal scaling per block: X_k = D_k Y_k D_k internally
    scales: list = None

    def __post_init__(self):
        self.costs = [np.asarray(C, dtype=complex) for C in self.costs]
        if not self.costs:
            raise InvalidInputError("at least one block is required")
        n = self.costs[0].shape[0]
        for C in self.costs:
            if C.shape != (n, n):
                raise InvalidInputError("all blocks must share one square size")
            if not np.allclose(C, C.conj().T, atol=1e-9 * (1 + np.abs(C).max())):
                raise InvalidInputError("cost matrices must be Hermitian")
        for ineq in self.inequalities:
            for k, Mk in ineq.coeffs.items():
                Mk = np.asarray(Mk)
                if not 0 <= k < len(self.costs) or Mk.shape != (n, n):
                    raise InvalidInputError(f"bad coefficient block {k} in constraint {ineq.label!r}")
                if not np.allclose(Mk, Mk.conj().T, atol=1e-9 * (1 + np.abs(Mk).max())):
                    raise InvalidInputError(f"coefficient block {k} of {ineq.label!r} is not Hermitian")
        for k, i, _ in self.pins:
            if not (0 <= k < len(self.costs) and 0 <= i < n):
                raise InvalidInputError(f"pin ({k}, {i}) out of range")

    @property
    def n(self):
        return self.costs[0].shape[0]

    @property
    def K(self):
        return len(self.costs)

    def objective(self, X):
        return float(sum(np.real(np.trace(C @ Xk)) for C, Xk in zip(self.costs, X)))

    def lhs(self, X):
        return np.array([sum(np.real(np.trace(np.asarray(Mk) @ X[k])) for k, Mk in ineq.coeffs.items())
                         for ineq in self.inequalities])

    def violations(self, X):
        """Absolute violations: inequalities, pins, and negative eigenvalues."""
        ineq = self.lhs(X) - np.array([q.bound for q in self.inequalities]) if self.inequalities else np.zeros(0)
        pins = np.array([abs(X[k][i, i].real - val) for k, i, val in self.pins]) if self.pins else np.zeros(0)
        eig = np.array([-min(0.0, np.linalg.eigvalsh(Xk).min()) for Xk in X])
        return ineq, pins, eig


def _hermitian_basis(n):
    basis = []
    for i in range(n):
        E = np.zeros((n, n), complex)
        E[i, i] = 1
        basis.append(E)
    for i in range(n):
        for j in range(i + 1, n):
            E = np.zeros((n, n), complex)
            E[i, j] = E[j, i] = 1
            basis.append(E)
            E = np.zeros((n, n), complex)
            E[i, j], E[j, i] = 1j, -1j
            basis.append(E)
    return np.array(basis)


def _embed(X):
    return np.block([[X.real, -X.imag], [X.imag, X.real]])


def _coef(M, basis):
    # Re tr(M B_p) for every basis element
    return np.real(np.einsum("ab,pba->p", M, basis))


def solve_block_sdp(problem: BlockSdpProblem, feas_tol=1e-7, opt_tol=1e-6, max_iter=500):
    """Solve the block SDP. Returns (list of X_k, SolverReport).

    Violations in the report are measured after each inequality row is
    divided by max(|c_j|, max |coefficient|) so they are scale free.
    """
    if feas_tol <= 0 or opt_tol <= 0:
        raise InvalidInputError("tolerances must be positive")
    K, n = problem.K, problem.n
    nv = n * n
    basis = _hermitian_basis(n)
    scales = problem.scales or [np.ones(n)] * K
    D = [np.diag(np.asarray(s, dtype=float)) for s in scales]

    c = np.concatenate([_coef(D[k] @ problem.costs[k] @ D[k], basis) for k in range(K)])
    c_scale = max(np.abs(c).max(), 1e-300)

    rows, bounds, row_scale = [], [], []
    for ineq in problem.inequalities:
        r = np.zeros(K * nv)
        for k, Mk in ineq.coeffs.items():
            r[k * nv:(k + 1) * nv] = _coef(D[k] @ np.asarray(Mk, complex) @ D[k], basis)
        s = max(np.abs(r).max(), abs(ineq.bound), 1e-300)
        rows.append(r / s)
        bounds.append(ineq.bound / s)
        row_scale.append(s)
    row_scale = np.array(row_scale)

    A_rows, b_vals = [], []
    for k, i, val in problem.pins:
        r = np.zeros(K * nv)
        r[k * nv + i] = 1.0
        A_rows.append(r)
        b_vals.append(val / scales[k][i] ** 2)

    Gs, hs = [], []
    for k in range(K):
        G = np.zeros(((2 * n) ** 2, K * nv))
        for p in range(nv):
            G[:, k * nv + p] = -_embed(basis[p]).ravel(order="F")
        Gs.append(matrix(G))
        hs.append(matrix(np.zeros((2 * n, 2 * n))))

    kwargs = dict(Gs=Gs, hs=hs)
    if rows:
        kwargs["Gl"] = matrix(np.array(rows))
        kwargs["hl"] = matrix(np.array(bounds))
    if A_rows:
        kwargs["A"] = matrix(np.array(A_rows))
        kwargs["b"] = matrix(np.array(b_vals))
    options = {"show_progress": False, "maxiters": int(max_iter),
               "abstol": 1e-10, "reltol": 1e-9, "feastol": min(feas_tol, 1e-8) * 0.1}
    sol = solvers.sdp(matrix(c / c_scale), options=options, **kwargs)
    cv_status = sol["status"]

    if sol["x"] is not None:
        y = np.array(sol["x"]).reshape(-1)
    else:
        y = np.zeros(K * nv)
    X = []
    for k in range(K):
        Yk = np.einsum("p,pab->ab", y[k * nv:(k + 1) * nv], basis)
        Xk = D[k] @ Yk @ D[k]
        X.append(0.5 * (Xk + Xk.conj().T))

    ineq_v, pin_v, eig_v = problem.violations(X)
    norm_ineq = ineq_v / row_scale if ineq_v.size else ineq_v
    pin_scale = np.array([max(1.0, abs(val)) for _, _, val in problem.pins]) if problem.pins else np.ones(0)
    eig_scale = np.array([max(1.0, np.abs(Xk).max()) for Xk in X])
    violation = float(max([0.0, *np.maximum(norm_ineq, 0), *(pin_v / pin_scale), *(eig_v / eig_scale)]))

    pobj = sol.get("primal objective")
    dobj = sol.get("dual objective")
    gap = abs(pobj - dobj) if pobj is not None and dobj is not None else float("inf")
    dres = sol.get("dual infeasibility")
    residual = float(max(gap, dres if dres is not None else 0.0))
    report = SolverReport(
        status=OPTIMAL,
        objective=problem.objective(X),
        violation=violation,
        residual=residual,
        iterations=int(sol.get("iterations", 0)),
        solver="cvxopt-sdp, " + EMBEDDING,
        dual_objective=float(dobj * c_scale) if dobj is not None else float("nan"),
        extra={"cvxopt_status": cv_status, "row_scale": row_scale},
    )
    if cv_status == "primal infeasible":
        report.status = INFEASIBLE
        zl = np.array(sol["zl"]).reshape(-1) if sol.get("zl") is not None and rows else np.zeros(0)
        report.constraint_index = int(np.argmax(zl)) if zl.size else None
        report.extra["certificate"] = zl
    elif violation > feas_tol or residual > opt_tol:
        report.status = ITERATION_LIMIT
    return X, report
