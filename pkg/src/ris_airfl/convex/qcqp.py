"""Convex QCQPs whose quadratics all have Hessians of the form xi * I.

Each quadratic is stored in anchored form

    q(x) = const + g . (x - x0) + (xi / 2) ||x - x0||^2 ,   xi >= 0.

Two modes are supported:

* ``"min-q0"``:   minimize q0(x) subject to q_i(x) <= 0
* ``"min-beta"``: minimize beta subject to q_i(x) <= beta and h_j(x) <= 0
  (the h_j are optional hard constraints)

Both are solved with a primal-dual interior-point method on a rescaled
copy of the problem; ``min-q0`` uses ``min-beta`` as its phase I.
"""
from dataclasses import dataclass, field

import numpy as np

from .report import INFEASIBLE, ITERATION_LIMIT, OPTIMAL, SolverReport
from ..errors import InvalidInputError

MIN_Q0 = "min-q0"
MIN_BETA = "min-beta"


@dataclass
class Quadratic:
    g: np.ndarray
    xi: float
    x0: np.ndarray
    const: float = 0.0

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=float).reshape(-1)
        self.x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        self.xi = float(self.xi)
        self.const = float(self.const)
        if self.g.shape != self.x0.shape:
            raise InvalidInputError("gradient and anchor must have the same length")
        if not (np.isfinite(self.xi) and self.xi >= 0):
            raise InvalidInputError(f"curvature must be finite and >= 0, got {self.xi}")
        if not (np.all(np.isfinite(self.g)) and np.all(np.isfinite(self.x0)) and np.isfinite(self.const)):
            raise InvalidInputError("quadratic data must be finite")

    @property
    def n(self):
        return self.g.size

    def __call__(self, x):
        d = np.asarray(x, float) - self.x0
        return self.const + self.g @ d + 0.5 * self.xi * (d @ d)

    def grad(self, x):
        return self.g + self.xi * (np.asarray(x, float) - self.x0)

    def rebased(self, x_ref, sx, scale):
        """Same function in y = (x - x_ref)/sx, divided by ``scale``, anchored at y = 0."""
        return Quadratic(self.grad(x_ref) * sx / scale, self.xi * sx * sx / scale,
                         np.zeros(self.n), self(x_ref) / scale)


@dataclass
class QcqpProblem:
    n: int
    objective: Quadratic = None
    constraints: list = field(default_factory=list)
    mode: str = MIN_Q0
    hard: list = field(default_factory=list)

    def __post_init__(self):
        if self.mode not in (MIN_Q0, MIN_BETA):
            raise InvalidInputError(f"unknown mode {self.mode!r}")
        if self.mode == MIN_Q0 and self.objective is None:
            raise InvalidInputError("min-q0 mode needs an objective")
        if self.mode == MIN_BETA and not self.constraints:
            raise InvalidInputError("min-beta mode needs at least one constraint")
        for q in ([self.objective] if self.objective is not None else []) + self.constraints + self.hard:
            if q.n != self.n:
                raise InvalidInputError(f"quadratic of dimension {q.n} in a problem of dimension {self.n}")

    def max_violation(self, x, beta=None):
        vals = [q(x) - (beta if beta is not None else 0.0) for q in self.constraints]
        vals += [h(x) for h in self.hard]
        return max([0.0, *vals])


def _ipm(z0, f0_grad, f0_hess_diag, funcs, opt_tol, max_iter, lam0=None):
    """Primal-dual interior point for min f0(z) s.t. f_i(z) <= 0.

    ``funcs`` is a list of callables returning (value, gradient, hessian
    diagonal). f0 is linear or quadratic with diagonal Hessian. z0 must
    be strictly feasible.
    """
    z = z0.copy()
    m, N = len(funcs), z0.size
    lam = np.ones(m) if lam0 is None else np.maximum(lam0, 1e-3)
    mu, alpha_ls, beta_ls = 10.0, 0.01, 0.5
    trace = []

    def evaluate(z):
        vals = np.empty(m)
        A = np.empty((m, N))
        Hd = np.empty((m, N))
        for i, fn in enumerate(funcs):
            vals[i], A[i], Hd[i] = fn(z)
        return vals, A, Hd

    def residual(z, lam, t):
        vals, A, _ = evaluate(z)
        r_dual = f0_grad(z) + A.T @ lam
        r_cent = -lam * vals - 1.0 / t
        return np.concatenate([r_dual, r_cent]), vals

    it = 0
    for it in range(1, max_iter + 1):
        vals, A, Hd = evaluate(z)
        eta = -vals @ lam
        t = mu * m / max(eta, 1e-300)
        r_dual = f0_grad(z) + A.T @ lam
        trace.append(float(eta))
        if np.abs(r_dual).max() <= opt_tol and eta <= opt_tol:
            return z, lam, it - 1, True, trace
        H = np.diag(f0_hess_diag(z) + Hd.T @ lam)
        r_cent = -lam * vals - 1.0 / t
        KKT = np.block([[H, A.T], [-lam[:, None] * A, -np.diag(vals)]])
        rhs = -np.concatenate([r_dual, r_cent])
        try:
            step = np.linalg.solve(KKT, rhs)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(KKT, rhs, rcond=None)[0]
        dz, dlam = step[:N], step[N:]
        neg = dlam < 0
        s = min(1.0, np.min(-lam[neg] / dlam[neg])) if np.any(neg) else 1.0
        s *= 0.99
        r_norm = np.linalg.norm(np.concatenate([r_dual, r_cent]))
        while s > 1e-14:
            zn, ln = z + s * dz, lam + s * dlam
            rn, vn = residual(zn, ln, t)
            if np.all(vn < 0) and np.linalg.norm(rn) <= (1 - alpha_ls * s) * r_norm:
                break
            s *= beta_ls
        if s <= 1e-14:
            break
        z, lam = zn, ln
    vals, A, _ = evaluate(z)
    ok = np.abs(f0_grad(z) + A.T @ lam).max() <= opt_tol and -vals @ lam <= opt_tol
    return z, lam, it, bool(ok), trace


def _quad_fn(q):
    def fn(y):
        return q(y), q.grad(y), np.full(y.size, q.xi)
    return fn


def _beta_fn(q):
    # q(y) - beta on z = (y, beta)
    def fn(z):
        y = z[:-1]
        return q(y) - z[-1], np.append(q.grad(y), -1.0), np.append(np.full(y.size, q.xi), 0.0)
    return fn


def _hard_fn(q):
    def fn(z):
        y = z[:-1]
        return q(y), np.append(q.grad(y), 0.0), np.append(np.full(y.size, q.xi), 0.0)
    return fn


def _scale_of(q):
    return max(abs(q.const), np.abs(q.g).max(initial=0.0), 0.5 * q.xi, 1e-300)


def _solve_beta(cons, hard, n, opt_tol, max_iter, y0=None):
    """min beta s.t. cons_i(y) <= beta, hard_j(y) <= 0 on the rescaled problem."""
    y = np.zeros(n) if y0 is None else y0.copy()
    if hard and max(h(y) for h in hard) >= 0:
        # strictly feasible start for the hard constraints
        yh, _, it_h, _, _ = _solve_beta(hard, [], n, opt_tol, max_iter, y)
        if max(h(yh) for h in hard) >= 0:
            return yh, None, None, it_h, False, []
        y = yh
    beta0 = max(q(y) for q in cons) + 1.0
    z0 = np.append(y, beta0)
    funcs = [_beta_fn(q) for q in cons] + [_hard_fn(h) for h in hard]
    grad0 = np.zeros(n + 1)
    grad0[-1] = 1.0
    z, lam, it, ok, trace = _ipm(z0, lambda z: grad0, lambda z: np.zeros(n + 1), funcs, opt_tol, max_iter)
    return z[:-1], z[-1], lam, it, ok, trace


def _kkt_ok(problem, x, lam, beta, feas_tol, opt_tol):
    """KKT test in the same normalized units the solver reports."""
    if lam is None:
        return False
    lam = np.asarray(lam, float)
    cons, hard = problem.constraints, problem.hard
    if lam.size != len(cons) + len(hard) or np.any(lam < -opt_tol):
        return False
    sx = max(1.0, np.abs(x).max(initial=0.0))
    fs = np.array([_scale_of(q.rebased(x, sx, 1.0)) for q in cons + hard])
    if problem.mode == MIN_BETA:
        vals = np.array([q(x) - beta for q in cons] + [h(x) for h in hard])
        ref = fs[:len(cons)].max()
        fs[:len(cons)] = ref
        grad = sum(l * q.grad(x) for l, q in zip(lam, cons + hard))
        simplex = abs(1.0 - lam[:len(cons)].sum())
    else:
        vals = np.array([q(x) for q in cons])
        ref = _scale_of(problem.objective.rebased(x, sx, 1.0))
        grad = problem.objective.grad(x) + sum(l * q.grad(x) for l, q in zip(lam, cons))
        simplex = 0.0
    stat = max(np.abs(grad).max() * sx / ref, simplex)
    comp = np.abs(lam * vals).max(initial=0.0) / ref
    return (vals / fs).max(initial=0.0) <= feas_tol and stat <= opt_tol and comp <= opt_tol


def solve_qcqp(problem: QcqpProblem, feas_tol=1e-7, opt_tol=1e-6, max_iter=500, warm_start=None):
    """Solve the QCQP. Returns (x, beta or None, SolverReport).

    ``warm_start`` is an optional (x, multipliers[, beta]) tuple; if it
    already satisfies the KKT conditions it is returned unchanged. The
    multipliers of a solve are in ``report.extra["multipliers"]``.
    Violations and residuals are reported on the internally rescaled
    problem (each function divided by its own magnitude, or one common
    factor for the min-beta family).
    """
    n = problem.n
    cons, hard = problem.constraints, problem.hard

    if warm_start is not None:
        x_w, lam_w = np.asarray(warm_start[0], float), warm_start[1]
        beta_w = warm_start[2] if len(warm_start) > 2 else (
            max(q(x_w) for q in cons) if problem.mode == MIN_BETA else None)
        if _kkt_ok(problem, x_w, lam_w, beta_w, feas_tol, opt_tol):
            obj = beta_w if problem.mode == MIN_BETA else problem.objective(x_w)
            rep = SolverReport(OPTIMAL, float(obj), problem.max_violation(x_w, beta_w), 0.0, 0,
                               solver="qcqp-ipm (warm start)", extra={"multipliers": np.asarray(lam_w)})
            return x_w, beta_w, rep

    if problem.mode == MIN_Q0 and not cons:
        q0 = problem.objective
        if q0.xi > 0:
            x = q0.x0 - q0.g / q0.xi
        elif np.any(q0.g):
            raise InvalidInputError("unbounded: linear objective with no constraints")
        else:
            x = q0.x0.copy()
        rep = SolverReport(OPTIMAL, float(q0(x)), 0.0, float(np.abs(q0.grad(x)).max()), 0,
                           solver="closed form", extra={"multipliers": np.zeros(0)})
        return x, None, rep

    x_ref = problem.objective.x0 if problem.objective is not None else cons[0].x0
    sx = max(1.0, np.abs(x_ref).max(initial=0.0))
    m_c = len(cons)

    if problem.mode == MIN_BETA:
        common = max(_scale_of(q.rebased(x_ref, sx, 1.0)) for q in cons)
        rc = [q.rebased(x_ref, sx, common) for q in cons]
        hs = np.array([_scale_of(h.rebased(x_ref, sx, 1.0)) for h in hard])
        rh = [h.rebased(x_ref, sx, sc) for h, sc in zip(hard, hs)]
        y, beta_s, lam, it, ok, trace = _solve_beta(rc, rh, n, opt_tol, max_iter)
        x = x_ref + sx * y
        if beta_s is None:
            rep = SolverReport(INFEASIBLE, float("nan"), max(h(y) for h in rh), float("inf"), it,
                               solver="qcqp-ipm", constraint_index=int(np.argmax([h(y) for h in rh])) + m_c)
            return x, None, rep
        beta = max(q(x) for q in cons)
        viol = max([0.0] + [h(y) for h in rh] + [q(y) - beta_s for q in rc])
        vals = np.array([q(y) for q in rc] + [h(y) for h in rh])
        resid = max(np.abs(sum(l * q.grad(y) for l, q in zip(lam, rc + rh))).max(), -(vals[:m_c] - beta_s) @ lam[:m_c] - vals[m_c:] @ lam[m_c:])
        status = OPTIMAL if ok and viol <= feas_tol else ITERATION_LIMIT
        rep = SolverReport(status, float(beta), float(viol), float(resid), it, solver="qcqp-ipm",
                           objective_trace=trace,
                           extra={"multipliers": np.r_[lam[:m_c], lam[m_c:] * common / hs],
                                  "scale": common, "beta_scaled": beta_s})
        return x, float(beta), rep

    # min-q0: phase I on the constraints, then the main solve
    s0 = _scale_of(problem.objective.rebased(x_ref, sx, 1.0))
    q0 = problem.objective.rebased(x_ref, sx, s0)
    cs = np.array([_scale_of(q.rebased(x_ref, sx, 1.0)) for q in cons])
    rc = [q.rebased(x_ref, sx, sc) for q, sc in zip(cons, cs)]
    y = np.zeros(n)
    it1 = 0
    shift = 0.0
    if max(q(y) for q in rc) >= 0:
        y, beta1, _, it1, _, _ = _solve_beta(rc, [], n, opt_tol, max_iter)
        if beta1 >= feas_tol:
            idx = int(np.argmax([q(y) for q in rc]))
            rep = SolverReport(INFEASIBLE, float("nan"), float(beta1), float("inf"), it1,
                               solver="qcqp-ipm phase I", constraint_index=idx,
                               extra={"phase1_beta": float(beta1)})
            return x_ref + sx * y, None, rep
        if beta1 > -feas_tol / 2:
            # nearly empty interior: relax by at most feas_tol
            shift = (beta1 + feas_tol) / 2
    rs = [Quadratic(q.g, q.xi, q.x0, q.const - shift) for q in rc]
    funcs = [_quad_fn(q) for q in rs]
    z, lam, it2, ok, trace = _ipm(y, q0.grad, lambda z: np.full(n, q0.xi), funcs, opt_tol, max_iter)
    x = x_ref + sx * z
    viol = max([0.0] + [q(z) for q in rc])
    resid = max(np.abs(q0.grad(z) + sum(l * q.grad(z) for l, q in zip(lam, rs))).max(),
                -np.array([q(z) for q in rs]) @ lam)
    status = OPTIMAL if ok and viol <= feas_tol else ITERATION_LIMIT
    rep = SolverReport(status, float(problem.objective(x)), float(viol), float(resid), it1 + it2,
                       solver="qcqp-ipm", objective_trace=trace,
                       extra={"multipliers": lam * s0 / cs, "shift": shift})
    return x, None, rep
