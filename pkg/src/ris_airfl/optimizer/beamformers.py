"""Updates of the aggregation beamformer b, transmit beamformers a_k and
recovery beamformer f, each with the other variables held fixed."""
import numpy as np
from scipy.optimize import linprog

from ..convex.qcqp import MIN_BETA, QcqpProblem, Quadratic, solve_qcqp
from ..convex.report import INFEASIBLE, OPTIMAL, SolverReport
from ..convex.sdp import BlockSdpProblem, SdpInequality, solve_block_sdp
from ..errors import DegenerateInputError, InvalidInputError, SubproblemInfeasibleError
from ..metrics import interference_matrices
from .common import constraint_values, make_context


def _mmse(a, H, sigma2_n, extra=None):
    a = np.atleast_2d(np.asarray(a, complex))
    H = np.asarray(H, complex)
    if H.ndim != 3 or a.shape != (H.shape[0], H.shape[2]):
        raise InvalidInputError(f"shape mismatch: a {a.shape}, H {H.shape}")
    Ha = np.einsum("krt,kt->kr", H, a)
    R = Ha.T @ Ha.conj() + sigma2_n * np.eye(H.shape[1])
    if extra is not None:
        R = R + extra
    rhs = Ha.sum(axis=0)
    if not np.any(rhs):
        return np.zeros(H.shape[1], complex)
    try:
        cond = np.linalg.cond(R)
    except np.linalg.LinAlgError:
        cond = np.inf
    if not np.isfinite(cond) or cond > 1e15:
        raise DegenerateInputError("MMSE Gram matrix is singular (zero noise with rank-deficient channels)")
    return np.linalg.solve(R, rhs)


def update_b_perfect(a, H, sigma2_n):
    """b = (sum_k H_k a_k a_k^H H_k^H + sigma2 I)^{-1} sum_k H_k a_k."""
    return _mmse(a, H, sigma2_n)


def update_b_imperfect(a, estimate, sigma2_n, v):
    """MMSE b on the estimated channels with the J_k error covariances added."""
    from ..channel import effective_channel
    Hh = effective_channel(estimate.est, v)
    return _mmse(a, Hh, sigma2_n, interference_matrices(a, estimate).sum(axis=0))


def update_b(state, ctx):
    return _mmse(state.a, ctx.H(state.v), ctx.sigma2, ctx.J(state.a).sum(axis=0) if ctx.robust else None)


# transmit design -------------------------------------------------------------

def lift(a_k):
    return np.append(np.asarray(a_k, complex), 1.0)


def _error_quadratic(vec, k, ctx):
    """D such that vec^H J_k(a) vec = a^H D a (zero under perfect CSI)."""
    Nt = ctx.config.Nt
    if not ctx.robust:
        return np.zeros((Nt, Nt), complex)
    est, em = ctx.estimate.est, ctx.estimate.error_model
    n2 = np.vdot(vec, vec).real
    gv = est.g @ vec
    scal = em.sigma2_d[k] * n2 + est.M * em.sigma2_r[k] * em.sigma2_g * n2 + em.sigma2_r[k] * np.vdot(gv, gv).real
    Hr = est.h_ris[k]
    return scal * np.eye(Nt) + em.sigma2_g * n2 * (Hr.conj().T @ Hr)


def _pad(X):
    n = X.shape[0] + 1
    out = np.zeros((n, n), complex)
    out[:-1, :-1] = X
    return out


def _linearization_vectors(points, K, n):
    us = []
    for p in points:
        p = np.asarray(p, complex)
        if p.ndim == 2:
            w, V = np.linalg.eigh(0.5 * (p + p.conj().T))
            p = V[:, -1]
        if p.shape != (n,):
            raise InvalidInputError(f"linearization point has shape {p.shape}, expected ({n},)")
        us.append(p / max(np.linalg.norm(p), 1e-300))
    if len(us) != K:
        raise InvalidInputError(f"expected {K} linearization points, got {len(us)}")
    return us


def lifted_scale(config):
    """Per-unit scaling of the lifted vector: [a / sqrt(P_max); 1]."""
    return np.append(np.full(config.Nt, np.sqrt(config.p_max)), 1.0)


def assemble_transmit_sdp(state, source, config, regime, linearization_points, alpha=None):
    """Lifted, linearized transmit-beamformer SDP for fixed b, f, v.

    Block k is A_k ~ [a_k; 1][a_k; 1]^H. The rank penalty
    alpha * (tr(A~) - u^H A~ u) acts on the per-unit matrix
    A~ = D^-1 A D^-1 with D = diag(sqrt(P_max) I, 1), so alpha weighs
    against an MSE of order one rather than against P_max.
    ``linearization_points`` are the DC linearization directions, given
    in per-unit coordinates as unit vectors u_k or matrices u_k u_k^H.
    """
    ctx = make_context(source, config, regime)
    K, Nt = config.K, config.Nt
    n = Nt + 1
    if state.a.shape != (K, Nt):
        raise InvalidInputError(f"a has shape {state.a.shape}, expected {(K, Nt)}")
    alpha = config.alpha if alpha is None else alpha
    us = _linearization_vectors(linearization_points, K, n)
    H = ctx.H(state.v)
    b, f = state.b, state.f
    gamma, s2 = ctx.gamma, ctx.sigma2
    scale = lifted_scale(config)
    Dinv = np.diag(1.0 / scale)

    costs, Z2, Zf = [], [], []
    for k in range(K):
        hb = H[k].conj().T @ b
        Z0 = np.zeros((n, n), complex)
        Z0[:Nt, :Nt] = np.outer(hb, hb.conj()) + _error_quadratic(b, k, ctx)
        Z0[:Nt, Nt] = -hb
        Z0[Nt, :Nt] = -hb.conj()
        costs.append(Z0 + alpha * Dinv @ (np.eye(n) - np.outer(us[k], us[k].conj())) @ Dinv)
        hf = H[k].conj().T @ f
        Z2.append(_pad(np.outer(hf, hf.conj())))
        Zf.append(_pad(_error_quadratic(f, k, ctx)))

    ineqs = []
    Z1 = _pad(np.eye(Nt))
    for k in range(K):
        ineqs.append(SdpInequality({k: Z1}, config.p_max, f"power[{k}]"))
    fn2 = s2 * np.vdot(f, f).real
    for k in range(K):
        coeffs = {j: gamma * Zf[j] for j in range(K)} if ctx.robust else {}
        coeffs[k] = coeffs.get(k, 0) - Z2[k]
        for j in range(k + 1, K):
            coeffs[j] = coeffs.get(j, 0) + gamma * Z2[j]
        ineqs.append(SdpInequality(coeffs, -gamma * fn2, f"sinr[{k}]"))
    for k in range(K - 1):
        coeffs = {k: -Z2[k]}
        for j in range(k + 1, K):
            coeffs[j] = Z2[j]
        ineqs.append(SdpInequality(coeffs, -ctx.p_gap, f"gap[{k}]"))
    pins = [(k, Nt, 1.0) for k in range(K)]
    return BlockSdpProblem(costs, ineqs, pins, scales=[scale] * K)


def recover_rank_one(A, Nt):
    """a from the top eigenpair of A, rotated so the lifted last entry is real positive."""
    w, V = np.linalg.eigh(0.5 * (A + A.conj().T))
    abar = np.sqrt(max(w[-1], 0.0)) * V[:, -1]
    last = abar[Nt]
    if abs(last) > 0:
        abar = abar * np.conj(last) / abs(last)
    return abar[:Nt]


def rank_residual(A):
    w = np.linalg.eigvalsh(0.5 * (A + A.conj().T))
    return float(max(np.sum(w) - w[-1], 0.0))


def _mse_given_b(a, ctx, state):
    s = state.copy(a=a)
    return constraint_values(s, ctx)["mse"]


def _feasible_a(a, ctx, state, rel=1e-6):
    from .common import violations
    return violations(state.copy(a=a), ctx, rel)["feasible"]


def dc_transmit_step(state, source, config, regime):
    """DC-programming update of all a_k. Returns (a, rank residual trace, reports).

    The linearization starts at the current a_k, so the current point is
    feasible for every inner SDP. The result is only accepted when it
    keeps the constraints and does not raise the MSE; otherwise the
    current a is returned and the last report notes the rejection.
    """
    ctx = make_context(source, config, regime)
    K, Nt = config.K, config.Nt
    dinv = 1.0 / lifted_scale(config)
    us = [dinv * lift(state.a[k]) for k in range(K)]
    alpha = config.alpha
    residuals, reports = [], []
    last_change = 0
    X = None
    for t in range(max(config.T1, 1)):
        prob = assemble_transmit_sdp(state, ctx, config, regime, us, alpha=alpha)
        X, rep = solve_block_sdp(prob, config.feas_tol, config.opt_tol, 500)
        rep.extra["alpha"] = alpha
        reports.append(rep)
        if rep.status == INFEASIBLE:
            raise SubproblemInfeasibleError(
                f"transmit SDP infeasible (constraint {rep.constraint_index})", rep, rep.constraint_index)
        res = [rank_residual(Xk) for Xk in X]
        residuals.append(res)
        us = [np.linalg.eigh(0.5 * (dinv[:, None] * Xk * dinv[None, :]))[1][:, -1] for Xk in X]
        if max(res) <= config.eps1:
            break
        # stalled: less than a halving over the last five iterations
        if t - last_change >= 5 and max(res) > 0.5 * max(residuals[t - 5]):
            alpha = min(2 * alpha, 1e3)
            last_change = t
    a_new = np.array([recover_rank_one(Xk, Nt) for Xk in X])
    pw = np.sum(np.abs(a_new) ** 2, axis=1)
    over = pw > config.p_max
    a_new[over] *= np.sqrt(config.p_max / pw[over])[:, None]

    old_mse = _mse_given_b(state.a, ctx, state)
    new_mse = _mse_given_b(a_new, ctx, state)
    accepted = _feasible_a(a_new, ctx, state) and new_mse <= old_mse + 1e-12 * max(1.0, old_mse)
    reports[-1].extra.update({"accepted": accepted, "mse_before": old_mse, "mse_after": new_mse})
    if not accepted:
        a_new = state.a.copy()
    return a_new, residuals, reports


def power_allocation(state, ctx):
    """Feasibility-seeking transmit powers along matched-filter directions.

    With f and v fixed, a_k is aligned to H_k^H f and the powers solve an
    LP that maximizes the smallest normalized slack of the SINR and gap
    constraints. Used only to build and repair starting points.
    """
    cfg = ctx.config
    K, P = cfg.K, cfg.p_max
    H = ctx.H(state.v)
    f = state.f
    dirs = np.einsum("krt,r->kt", H.conj(), f)
    norms = np.linalg.norm(dirs, axis=1)
    dirs = np.where(norms[:, None] > 0, dirs / np.maximum(norms, 1e-300)[:, None], state.a / np.maximum(
        np.linalg.norm(state.a, axis=1, keepdims=True), 1e-300))
    c = norms ** 2
    unit = dirs
    jf = np.array([np.vdot(f, M @ f).real for M in interference_matrices(unit, ctx.estimate)]) \
        if ctx.robust else np.zeros(K)
    noise = ctx.sigma2 * np.vdot(f, f).real
    g = ctx.gamma
    # variables: P_1..P_K, t ; maximize t
    A_ub, b_ub = [], []
    s_sinr = max(g * noise, 1e-300)
    for k in range(K):
        row = np.zeros(K + 1)
        row[k] -= c[k]
        row[k + 1:K] += g * c[k + 1:]
        row[:K] += g * jf
        row[K] = s_sinr
        A_ub.append(row)
        b_ub.append(-g * noise)
    for k in range(K - 1):
        row = np.zeros(K + 1)
        row[k] -= c[k]
        row[k + 1:K] += c[k + 1:]
        row[K] = ctx.p_gap
        A_ub.append(row)
        b_ub.append(-ctx.p_gap)
    cost = np.zeros(K + 1)
    cost[K] = -1.0
    bounds = [(0.0, P)] * K + [(None, 1e6)]
    res = linprog(cost, A_ub=np.array(A_ub), b_ub=np.array(b_ub), bounds=bounds, method="highs")
    if res.status != 0:
        powers = np.full(K, P)
    else:
        powers = np.clip(res.x[:K], 0.0, P)
    return np.sqrt(powers)[:, None] * unit


# recovery beamformer ---------------------------------------------------------

def f_matrices(state, ctx):
    """(B1 list of K, B2 list of K-1) for the current a and v."""
    K, Nr = ctx.config.K, ctx.config.Nr
    H = ctx.H(state.v)
    Ha = np.einsum("krt,kt->kr", H, state.a)
    Hbar = np.einsum("kr,ks->krs", Ha, Ha.conj())
    Jsum = ctx.J(state.a).sum(axis=0)
    B1, B2 = [], []
    for k in range(K):
        tail = Hbar[k + 1:].sum(axis=0) if k + 1 < K else np.zeros((Nr, Nr), complex)
        B1.append(ctx.gamma * (tail + ctx.sigma2 * np.eye(Nr) + Jsum) - Hbar[k])
        if k < K - 1:
            B2.append(tail - Hbar[k])
    return B1, B2


def _to_real(z):
    return np.concatenate([z.real, z.imag])


def _to_complex(x):
    n = x.size // 2
    return x[:n] + 1j * x[n:]


def f_surrogate(B, f_t, shift=0.0):
    """Quadratic majorizer of f^H B f + shift anchored at f_t (real coordinates)."""
    Bf = B @ f_t
    omega = float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (B + B.conj().T))))) if B.size else 0.0
    return Quadratic(2 * _to_real(Bf), 2 * omega, _to_real(f_t), np.vdot(f_t, Bf).real + shift)


def f_norm_cap(f_t, ctx):
    floor = ctx.config.f_norm_margin * ctx.p_gap / (ctx.gamma * ctx.sigma2)
    return max(np.vdot(f_t, f_t).real * (1 + 1e-3), floor)


def sca_recovery_f(state, source, config, regime, cap=None):
    """SCA on the recovery beamformer. Returns (f, reports).

    Each iterate solves min beta s.t. the majorized SINR and gap
    constraints are <= beta and ||f||^2 <= cap. beta <= 0 means every
    constraint holds; the cap only fixes the scale of f, to which the SINR
    is invariant.
    """
    ctx = make_context(source, config, regime)
    B1, B2 = f_matrices(state, ctx)
    f_t = state.f.copy()
    if not np.any(f_t):
        raise DegenerateInputError("recovery beamformer must be non-zero to start SCA")
    cap = f_norm_cap(f_t, ctx) if cap is None else cap
    reports = []
    beta_prev = max([np.vdot(f_t, B @ f_t).real for B in B1] +
                    [np.vdot(f_t, B @ f_t).real + ctx.p_gap for B in B2])
    for _ in range(config.T2):
        cons = [f_surrogate(B, f_t) for B in B1] + [f_surrogate(B, f_t, ctx.p_gap) for B in B2]
        xt = _to_real(f_t)
        ball = Quadratic(2 * xt, 2.0, xt, xt @ xt - cap)
        prob = QcqpProblem(xt.size, constraints=cons, mode=MIN_BETA, hard=[ball])
        x, beta, rep = solve_qcqp(prob, config.feas_tol, config.opt_tol, 500)
        f_new = _to_complex(x)
        true_beta = max([np.vdot(f_new, B @ f_new).real for B in B1] +
                        [np.vdot(f_new, B @ f_new).real + ctx.p_gap for B in B2])
        rep.extra["true_beta"] = true_beta
        reports.append(rep)
        if true_beta > beta_prev:
            break
        f_t = f_new
        done = abs(true_beta - beta_prev) <= config.eps2
        beta_prev = true_beta
        if done:
            break
    return f_t, reports
