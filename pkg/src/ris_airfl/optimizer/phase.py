"""RIS phase-shift subproblem: quadratic-form assembly, analytic curvature
bound, gradients and the SCA loop.

Every function of the phases handled here has the form

    h(v) = sign * (e^H F e + 2 Re{e^H r}) + C,     e = exp(j v),

with F Hermitian. The objective term (label ``"mse"``) has sign +1 and
C = 0, so that adding ``mse_const`` gives the full MSE. SINR and gap
constraints (labels ``("sinr", k)``, ``("gap", k)``) have sign -1 and must
be <= 0. ``("order", k)`` terms keep ||H_k||_F >= ||H_{k+1}||_F so the SIC
order fixed at the start of the run stays valid.
"""
from dataclasses import dataclass, field

import numpy as np

from ..convex.qcqp import MIN_BETA, MIN_Q0, QcqpProblem, Quadratic, solve_qcqp
from ..convex.report import INFEASIBLE, OPTIMAL
from ..errors import InvalidInputError
from .common import make_context


@dataclass
class PhaseTerm:
    label: object
    sign: float
    F: np.ndarray
    r: np.ndarray
    C: float = 0.0

    def value(self, v):
        e = np.exp(1j * np.asarray(v, float))
        return float(self.sign * (np.vdot(e, self.F @ e).real + 2 * np.vdot(e, self.r).real) + self.C)

    def gradient(self, v):
        e = np.exp(1j * np.asarray(v, float))
        return self.sign * 2 * np.real(-1j * e.conj() * (self.F @ e + self.r))

    def hessian(self, v):
        """Closed-form Hessian (used by the verification suite)."""
        e = np.exp(1j * np.asarray(v, float))
        # d^2/dv_m dv_n of e^H F e = 2 Re{conj(e_m) F_mn e_n} - delta_mn 2 Re{conj(e_m)[F e]_m}
        P = 2 * np.real(e.conj()[:, None] * self.F * e[None, :])
        P -= np.diag(2 * np.real(e.conj() * (self.F @ e)))
        P -= np.diag(2 * np.real(e.conj() * self.r))
        return self.sign * P


@dataclass
class PhaseProblemAssembly:
    objective: PhaseTerm
    sinr: list
    gap: list
    order: list = field(default_factory=list)
    mse_const: float = 0.0

    @property
    def M(self):
        return self.objective.F.shape[0]

    @property
    def F(self):
        return {"F0": self.objective.F, "F1": [t.F for t in self.sinr], "F2": [t.F for t in self.gap]}

    @property
    def r(self):
        return {"r0": self.objective.r, "r1": [t.r for t in self.sinr], "r2": [t.r for t in self.gap]}

    @property
    def C(self):
        return {"C1": [t.C for t in self.sinr], "C2": [t.C for t in self.gap]}

    def terms(self, include_order=True):
        out = [self.objective, *self.sinr, *self.gap]
        return out + list(self.order) if include_order else out

    def constraints(self):
        return [*self.sinr, *self.gap, *self.order]

    def term(self, l):
        if l == 0 or l == "mse":
            return self.objective
        for t in self.terms():
            if t.label == l or (isinstance(l, tuple) and t.label == l):
                return t
        raise InvalidInputError(f"no phase term labelled {l!r}")


def _rank_one(w):
    return np.outer(w, w.conj())


def assemble_phase_problem(state, source, config, regime, order_terms=True):
    """Quadratic forms in e = exp(jv) for the MSE, SINR and gap functions."""
    ctx = make_context(source, config, regime)
    ch = ctx.channels
    K, M = config.K, config.M
    if state.v.size != M:
        raise InvalidInputError(f"v has {state.v.size} entries, expected M={M}")
    b, f, a = state.b, state.f, state.a
    gamma, s2 = ctx.gamma, ctx.sigma2
    J = ctx.J(a)

    gb = ch.g @ b
    gf = ch.g @ f
    ra = np.einsum("kmt,kt->km", ch.h_ris, a)
    cb = np.einsum("r,krt,kt->k", b.conj(), ch.h_direct, a) - 1.0   # b^H H_dk a_k - 1
    cf = np.einsum("r,krt,kt->k", f.conj(), ch.h_direct, a)         # f^H H_dk a_k
    wb = gb[None, :] * ra.conj()
    wf = gf[None, :] * ra.conj()

    F0 = sum(_rank_one(wb[k]) for k in range(K))
    r0 = (cb[:, None] * wb).sum(axis=0)
    mse_const = float(np.sum(np.abs(cb) ** 2) + s2 * np.vdot(b, b).real
                      + np.einsum("r,krs,s->", b.conj(), J, b).real)
    objective = PhaseTerm("mse", 1.0, F0, r0, 0.0)

    Ff = [_rank_one(wf[k]) for k in range(K)]
    rf = [cf[k] * wf[k] for k in range(K)]
    pd = np.abs(cf) ** 2
    fJf = float(np.einsum("r,krs,s->", f.conj(), J, f).real)
    fn2 = np.vdot(f, f).real
    sinr, gap = [], []
    for k in range(K):
        tail = range(k + 1, K)
        F1 = Ff[k] - gamma * sum((Ff[j] for j in tail), np.zeros((M, M), complex))
        r1 = rf[k] - gamma * sum((rf[j] for j in tail), np.zeros(M, complex))
        C1 = gamma * (pd[k + 1:].sum() + s2 * fn2 + fJf) - pd[k]
        sinr.append(PhaseTerm(("sinr", k), -1.0, F1, r1, float(C1)))
        if k < K - 1:
            F2 = Ff[k] - sum((Ff[j] for j in tail), np.zeros((M, M), complex))
            r2 = rf[k] - sum((rf[j] for j in tail), np.zeros(M, complex))
            C2 = pd[k + 1:].sum() + ctx.p_gap - pd[k]
            gap.append(PhaseTerm(("gap", k), -1.0, F2, r2, float(C2)))

    order = []
    if order_terms and K > 1:
        GG = ch.g @ ch.g.conj().T
        Fn = [GG * (ch.h_ris[k] @ ch.h_ris[k].conj().T).T for k in range(K)]
        rn = [np.diag(ch.g @ ch.h_direct[k] @ ch.h_ris[k].conj().T) for k in range(K)]
        Cn = [float(np.sum(np.abs(ch.h_direct[k]) ** 2)) for k in range(K)]
        for k in range(K - 1):
            order.append(PhaseTerm(("order", k), 1.0, Fn[k + 1] - Fn[k], rn[k + 1] - rn[k], Cn[k + 1] - Cn[k]))
    return PhaseProblemAssembly(objective, sinr, gap, order, mse_const)


@dataclass
class CurvatureBound:
    xi: np.ndarray
    components: np.ndarray
    labels: list

    def __getitem__(self, label):
        return float(self.xi[self.labels.index(label)])


def curvature_terms(F, r):
    """The three summands of the analytic Hessian bound for one term."""
    F = np.asarray(F, complex)
    r = np.asarray(r, complex)
    if F.size == 0:
        return 0.0, 0.0, 0.0
    row = 2 * np.max(np.abs(F).sum(axis=0) + np.abs(r))
    Fbar = F.T - np.diag(np.diag(F))
    spec = 2 * np.linalg.norm(Fbar, 2)
    diag = 2 * np.max(np.abs(np.diag(F)))
    return float(row), float(spec), float(diag)


def curvature_xi(assembly: PhaseProblemAssembly) -> CurvatureBound:
    terms = assembly.terms()
    comps = np.array([curvature_terms(t.F, t.r) for t in terms]).reshape(len(terms), 3)
    return CurvatureBound(comps.sum(axis=1), comps, [t.label for t in terms])


def phase_gradient(assembly, l, v):
    return assembly.term(l).gradient(v)


def surrogate(term, xi, v_t):
    """Second-order upper model of a phase term around v_t."""
    return Quadratic(term.gradient(v_t), xi, v_t, term.value(v_t))


def sca_phase_shifts(state, source, config, regime, restore=False):
    """SCA on the phases with the analytic curvature bound. Returns (v, reports).

    With ``restore=False`` the MSE surrogate is minimized subject to the
    surrogate constraints; if those are infeasible at an iterate the
    step instead minimizes the largest surrogate SINR/gap violation.
    With ``restore=True`` every step does the latter (used to repair
    infeasible starting points). Order terms are always hard constraints.
    """
    ctx = make_context(source, config, regime)
    if config.M == 0:
        return state.v.copy(), []
    asm = assemble_phase_problem(state, ctx, config, regime)
    bound = curvature_xi(asm)
    xi = dict(zip(bound.labels, bound.xi))
    cons = asm.sinr + asm.gap
    v_t = state.v.copy()
    reports = []

    def worst(v):
        return max([t.value(v) for t in cons], default=-np.inf)

    obj_prev = asm.objective.value(v_t)
    worst_prev = worst(v_t)
    for _ in range(config.T3):
        q_cons = [surrogate(t, xi[t.label], v_t) for t in cons]
        q_ord = [surrogate(t, xi[t.label], v_t) for t in asm.order]
        rep = None
        if not restore:
            q0 = surrogate(asm.objective, xi["mse"], v_t)
            if q0.xi == 0 and not np.any(q0.g):
                break
            x, _, rep = solve_qcqp(QcqpProblem(config.M, q0, q_cons + q_ord, MIN_Q0),
                                   config.feas_tol, config.opt_tol, 500)
            if rep.status == INFEASIBLE:
                rep.extra["fallback"] = "min-beta"
                rep = None
        if rep is None:
            if not q_cons:
                break
            x, _, rep = solve_qcqp(QcqpProblem(config.M, constraints=q_cons, mode=MIN_BETA, hard=q_ord),
                                   config.feas_tol, config.opt_tol, 500)
        reports.append(rep)
        obj_new, worst_new = asm.objective.value(x), worst(x)
        order_ok = all(t.value(x) <= 1e-12 * max(1.0, abs(t.C)) for t in asm.order)
        if restore or worst_prev > 0:
            improved = worst_new <= worst_prev and order_ok
        else:
            improved = (obj_new <= obj_prev + 1e-15 and worst_new <= max(0.0, worst_prev) and order_ok)
        if not improved:
            rep.extra["rejected"] = True
            break
        change = abs(obj_new - obj_prev) if not restore else abs(worst_new - worst_prev)
        v_t, obj_prev, worst_prev = x, obj_new, worst_new
        if change <= config.eps3 * _phase_scale(asm, restore):
            break
    return np.mod(v_t, 2 * np.pi), reports


def _phase_scale(asm, restore):
    # convergence is judged relative to the magnitude of the tracked quantity
    if restore:
        return max(1.0, max(abs(t.C) for t in asm.sinr))
    return max(asm.mse_const, 1e-300)
