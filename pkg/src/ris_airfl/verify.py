"""Oracle suite: Monte-Carlo checks of closed-form expectations, the
phase-curvature bound, trace identities, surrogate soundness and
stationarity of the MMSE beamformer."""
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelEstimate, ChannelRealization, calibrate_error_model, effective_channel, sample_estimate
from .config import IMPERFECT, PERFECT, SystemConfig
from .metrics import (BeamformerState, interference_matrices, mse_imperfect, mse_perfect,
                      sinr_imperfect_denominator)
from .optimizer.beamformers import f_matrices, f_surrogate, update_b_imperfect, update_b_perfect
from .optimizer.common import make_context
from .optimizer.phase import assemble_phase_problem, curvature_xi, surrogate

MC_SIGMAS = 3.0


@dataclass
class CheckResult:
    name: str
    passed: bool
    margin: float
    detail: dict = field(default_factory=dict)

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}  margin={self.margin:.4g}"

    def to_dict(self):
        return {"name": self.name, "passed": bool(self.passed), "margin": float(self.margin), **self.detail}


def _cn(rng, shape, var=1.0):
    return np.sqrt(var / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def random_instance(seed, K=3, Nt=2, Nr=4, M=8, sigma2_n=0.5):
    """Unit-scale Gaussian channels and a random state (verification only)."""
    rng = np.random.default_rng(seed)
    ch = ChannelRealization(_cn(rng, (K, Nr, Nt)), _cn(rng, (K, M, Nt)), _cn(rng, (M, Nr)) / np.sqrt(M))
    state = BeamformerState(_cn(rng, Nr) / np.sqrt(Nr), _cn(rng, Nr), _cn(rng, (K, Nt)) / np.sqrt(Nt),
                            rng.uniform(0, 2 * np.pi, M))
    cfg = SystemConfig(K=K, Nt=Nt, Nr=Nr, M=M, p_max=10.0, gamma_min=2.0, p_gap=0.1, p_gap_imperfect=0.1,
                       sigma2_n=sigma2_n)
    return ch, state, cfg


def _z_score(samples, closed):
    se = samples.std(ddof=1) / np.sqrt(samples.size)
    return abs(samples.mean() - closed) / max(se, 1e-300), float(samples.mean()), float(se)


def _mc_check(name, samples, closed):
    z, mean, se = _z_score(samples, closed)
    return CheckResult(name, bool(z <= MC_SIGMAS), MC_SIGMAS - z,
                       {"closed_form": float(closed), "empirical": mean, "std_error": se, "z": float(z)})


def _error_draw(rng, est, em, B):
    """B joint draws of the channel errors (device axis second)."""
    K, Nr, Nt = est.h_direct.shape
    M = est.M
    ed = np.stack([_cn(rng, (B, Nr, Nt), em.sigma2_d[k]) for k in range(K)], axis=1)
    er = np.stack([_cn(rng, (B, M, Nt), em.sigma2_r[k]) for k in range(K)], axis=1)
    eg = _cn(rng, (B, M, Nr), em.sigma2_g)
    return ed, er, eg


def _true_columns(est, errs, a, v):
    """(B, K, Nr): true effective channel times a_k for every error draw."""
    ed, er, eg = errs
    theta = np.exp(1j * v)
    Hd = est.h_direct[None] + ed
    Hr = est.h_ris[None] + er
    G = est.g[None] + eg
    ra = np.einsum("bkmt,kt->bkm", Hr, a) * theta[None, None, :]
    return np.einsum("bkrt,kt->bkr", Hd, a) + np.einsum("bmr,bkm->bkr", G.conj(), ra)


def mc_mse_perfect(seed, n_samples=100_000, batch=20_000):
    ch, st, cfg = random_instance(seed)
    H = effective_channel(ch, st.v)
    rng = np.random.default_rng(seed + 10_000)
    c = np.einsum("r,krt,kt->k", st.b.conj(), H, st.a)
    out = []
    for i in range(0, n_samples, batch):
        B = min(batch, n_samples - i)
        s = _cn(rng, (B, ch.K))
        n = _cn(rng, (B, ch.Nr), cfg.sigma2_n)
        err = s @ c + n @ st.b.conj() - s.sum(axis=1)
        out.append(np.abs(err) ** 2)
    return _mc_check(f"mse-perfect-mc[{seed}]", np.concatenate(out), mse_perfect(st.b, st.a, H, cfg.sigma2_n))


def mc_error_aware_mse(seed, iota, n_samples=100_000, batch=10_000, j_fn=None):
    """Closed-form average MSE under estimation errors against joint sampling
    of symbols, noise and errors. ``j_fn`` swaps in another J_k (mutation tests)."""
    ch, st, cfg = random_instance(seed)
    est = sample_estimate(ch, calibrate_error_model(ch, iota), seed + 1)
    rng = np.random.default_rng(seed + 20_000)
    out = []
    for i in range(0, n_samples, batch):
        B = min(batch, n_samples - i)
        cols = _true_columns(est.est, _error_draw(rng, est.est, est.error_model, B), st.a, st.v)
        c = np.einsum("r,bkr->bk", st.b.conj(), cols)
        s = _cn(rng, (B, ch.K))
        n = _cn(rng, (B, ch.Nr), cfg.sigma2_n)
        err = np.sum((c - 1) * s, axis=1) + n @ st.b.conj()
        out.append(np.abs(err) ** 2)
    if j_fn is None:
        closed = mse_imperfect(st.b, st.a, est, cfg.sigma2_n, st.v)
    else:
        Hh = effective_channel(est.est, st.v)
        J = j_fn(st.a, est)
        closed = mse_perfect(st.b, st.a, Hh, cfg.sigma2_n) + float(np.einsum("r,krs,s->", st.b.conj(), J, st.b).real)
    return _mc_check(f"error-aware-mse-mc[{seed},iota={iota}]", np.concatenate(out), closed)


def mc_sinr_denominator(seed, iota, k=0, n_samples=100_000, batch=10_000, j_fn=None):
    """Average interference-plus-noise power after SIC with estimated channels."""
    ch, st, cfg = random_instance(seed)
    est = sample_estimate(ch, calibrate_error_model(ch, iota), seed + 1)
    Hh = effective_channel(est.est, st.v)
    ch_hat = np.einsum("krt,kt->kr", Hh, st.a)
    rng = np.random.default_rng(seed + 30_000)
    out = []
    for i in range(0, n_samples, batch):
        B = min(batch, n_samples - i)
        cols = _true_columns(est.est, _error_draw(rng, est.est, est.error_model, B), st.a, st.v)
        s = _cn(rng, (B, ch.K))
        n = _cn(rng, (B, ch.Nr), cfg.sigma2_n)
        y = np.einsum("bkr,bk->br", cols, s) + n
        # cancel devices < k and the desired part of device k with the estimated channels
        y = y - np.einsum("kr,bk->br", ch_hat[:k + 1], s[:, :k + 1])
        out.append(np.abs(y @ st.f.conj()) ** 2)
    if j_fn is None:
        closed = sinr_imperfect_denominator(st.f, st.a, est, cfg.sigma2_n, k, st.v)
    else:
        p = np.abs(ch_hat @ st.f.conj()) ** 2
        J = j_fn(st.a, est)
        closed = p[k + 1:].sum() + float(np.einsum("r,krs,s->", st.f.conj(), J, st.f).real) \
            + cfg.sigma2_n * np.vdot(st.f, st.f).real
    return _mc_check(f"sinr-denominator-mc[{seed},iota={iota},k={k}]", np.concatenate(out), closed)


def sign_flipped_interference(a, estimate):
    """Deliberately wrong J_k (the G^H G term enters with a minus sign)."""
    est, em = estimate.est, estimate.error_model
    J = interference_matrices(a, estimate)
    GG = est.g.conj().T @ est.g
    for k in range(est.K):
        J[k] -= 2 * em.sigma2_r[k] * np.vdot(a[k], a[k]).real * GG
    return J


def fd_hessian(fun, v, step=1e-4):
    """Central-difference Hessian of a scalar function."""
    M = v.size
    Hs = np.empty((M, M))
    E = np.eye(M) * step
    for i in range(M):
        for j in range(i, M):
            val = (fun(v + E[i] + E[j]) - fun(v + E[i] - E[j]) - fun(v - E[i] + E[j]) + fun(v - E[i] - E[j]))
            Hs[i, j] = Hs[j, i] = val / (4 * step * step)
    return Hs


def curvature_check(seed, n_v=100, regime=PERFECT, iota=0.1, step=1e-4):
    """Finite-difference Hessian eigenvalues against the analytic bound for
    every term of one random assembly."""
    ch, st, cfg = random_instance(seed, M=6)
    source = ch if regime == PERFECT else sample_estimate(ch, calibrate_error_model(ch, iota), seed + 1)
    asm = assemble_phase_problem(st, source, cfg, regime)
    bound = curvature_xi(asm)
    rng = np.random.default_rng(seed + 40_000)
    worst = np.inf
    violations = 0
    for _ in range(n_v):
        v = rng.uniform(0, 2 * np.pi, cfg.M)
        for term, xi in zip(asm.terms(), bound.xi):
            lam = np.linalg.eigvalsh(fd_hessian(term.value, v, step))[-1]
            tol = max(1e-6, 1e-4 * xi)
            slack = xi + tol - lam
            worst = min(worst, slack / max(xi, 1e-12))
            violations += slack < 0
    return CheckResult(f"curvature-dominance[{seed},{regime}]", violations == 0, worst,
                       {"violations": int(violations), "terms": len(bound.xi), "points": n_v})


def identity_errors(rng, n):
    """Relative errors of the Hadamard and diagonal trace identities.

    tr(A Theta B Theta^H) = e^H (A o B^T) e, and tr(A^H Theta) = vd(A)^H e,
    whose real part equals Re{e^H vd(A)} (the form used inside 2Re{.}).
    """
    A, B = _cn(rng, (n, n)), _cn(rng, (n, n))
    e = np.exp(1j * rng.uniform(0, 2 * np.pi, n))
    T = np.diag(e)
    lhs = np.trace(A @ T @ B @ T.conj().T)
    had = abs(lhs - e.conj() @ (A * B.T) @ e) / (1 + abs(lhs))
    lhs2 = np.trace(A.conj().T @ T)
    dg = np.diag(A)
    diag = abs(lhs2 - dg.conj() @ e) / (1 + abs(lhs2))
    real = abs(lhs2.real - (e.conj() @ dg).real) / (1 + abs(lhs2))
    return had, diag, real


def identities_check(seed, per_size=100, sizes=range(2, 9)):
    rng = np.random.default_rng(seed + 50_000)
    errs = np.array([identity_errors(rng, n) for n in sizes for _ in range(per_size)])
    worst = errs.max(axis=0)
    return CheckResult("trace-identities", bool(np.all(worst <= 1e-10)), float(1e-10 - worst.max()),
                       {"hadamard": float(worst[0]), "diag": float(worst[1]), "diag_real": float(worst[2])})


def phase_surrogate_check(seed, n_samples=1000, regime=PERFECT):
    ch, st, cfg = random_instance(seed, M=6)
    asm = assemble_phase_problem(st, ch, cfg, regime)
    bound = curvature_xi(asm)
    rng = np.random.default_rng(seed + 60_000)
    worst_anchor, worst_major = 0.0, np.inf
    for term, xi in zip(asm.terms(), bound.xi):
        q = surrogate(term, xi, st.v)
        worst_anchor = max(worst_anchor, abs(q(st.v) - term.value(st.v)))
        for _ in range(n_samples // len(bound.xi)):
            x = st.v + rng.normal(scale=rng.choice([0.01, 0.3, 2.0]), size=cfg.M)
            worst_major = min(worst_major, q(x) - term.value(x))
    ok = worst_anchor <= 1e-10 * (1 + abs(asm.mse_const)) and worst_major >= -1e-9
    return CheckResult(f"phase-surrogate[{seed}]", ok, worst_major,
                       {"anchor_error": float(worst_anchor), "min_gap": float(worst_major)})


def f_surrogate_check(seed, n_samples=1000, regime=PERFECT, iota=0.1):
    ch, st, cfg = random_instance(seed)
    source = ch if regime == PERFECT else sample_estimate(ch, calibrate_error_model(ch, iota), seed + 1)
    ctx = make_context(source, cfg, regime)
    rng = np.random.default_rng(seed + 70_000)
    worst_anchor, worst_major = 0.0, np.inf
    B1, B2 = f_matrices(st, ctx)
    for B in B1 + B2:
        q = f_surrogate(B, st.f, 0.0)
        exact = lambda f: float(np.vdot(f, B @ f).real)
        worst_anchor = max(worst_anchor, abs(q(_real(st.f)) - exact(st.f)))
        for _ in range(n_samples // len(B1 + B2)):
            f = st.f + rng.choice([0.01, 1.0, 10.0]) * _cn(rng, cfg.Nr)
            worst_major = min(worst_major, q(_real(f)) - exact(f))
    ok = worst_anchor <= 1e-10 * (1 + np.vdot(st.f, st.f).real) and worst_major >= -1e-9
    return CheckResult(f"f-surrogate[{seed},{regime}]", ok, worst_major,
                       {"anchor_error": float(worst_anchor), "min_gap": float(worst_major)})


def _real(z):
    return np.concatenate([z.real, z.imag])


def _fd_grad_complex(fun, b, step=1e-6):
    g = np.empty(b.size, complex)
    for i in range(b.size):
        e = np.zeros(b.size, complex)
        e[i] = step
        gr = (fun(b + e) - fun(b - e)) / (2 * step)
        gi = (fun(b + 1j * e) - fun(b - 1j * e)) / (2 * step)
        g[i] = gr + 1j * gi
    return g


def b_optimality_check(seed, regime=PERFECT, iota=0.1, n_perturb=1000):
    ch, st, cfg = random_instance(seed)
    if regime == PERFECT:
        H = effective_channel(ch, st.v)
        b = update_b_perfect(st.a, H, cfg.sigma2_n)
        obj = lambda x: mse_perfect(x, st.a, H, cfg.sigma2_n)
    else:
        est = sample_estimate(ch, calibrate_error_model(ch, iota), seed + 1)
        b = update_b_imperfect(st.a, est, cfg.sigma2_n, st.v)
        obj = lambda x: mse_imperfect(x, st.a, est, cfg.sigma2_n, st.v)
    gnorm = float(np.linalg.norm(_fd_grad_complex(obj, b)))
    rng = np.random.default_rng(seed + 80_000)
    f0 = obj(b)
    worst = min(obj(b + rng.choice([1e-4, 1e-2, 1.0]) * _cn(rng, b.size)) - f0 for _ in range(n_perturb))
    return CheckResult(f"b-optimality[{seed},{regime}]", gnorm <= 1e-6 and worst >= 0, min(1e-6 - gnorm, worst),
                       {"grad_norm": gnorm, "min_perturbation_gain": float(worst)})


def phase_gradient_check(seed, step=1e-5):
    ch, st, cfg = random_instance(seed, M=6)
    asm = assemble_phase_problem(st, ch, cfg, PERFECT)
    rng = np.random.default_rng(seed + 90_000)
    v = rng.uniform(0, 2 * np.pi, cfg.M)
    worst = 0.0
    for term in asm.terms():
        fd = np.array([(term.value(v + step * e) - term.value(v - step * e)) / (2 * step) for e in np.eye(cfg.M)])
        worst = max(worst, float(np.max(np.abs(fd - term.gradient(v)))))
    return CheckResult(f"phase-gradient[{seed}]", worst <= 1e-6, 1e-6 - worst, {"max_error": worst})


def assembly_check(seed, n_v=100):
    """MSE from the phase assembly against the metrics module for random v."""
    ch, st, cfg = random_instance(seed, M=6)
    asm = assemble_phase_problem(st, ch, cfg, PERFECT)
    rng = np.random.default_rng(seed + 95_000)
    worst = 0.0
    for _ in range(n_v):
        v = rng.uniform(0, 2 * np.pi, cfg.M)
        ref = mse_perfect(st.b, st.a, effective_channel(ch, v), cfg.sigma2_n)
        worst = max(worst, abs(asm.objective.value(v) + asm.mse_const - ref))
    return CheckResult(f"phase-assembly[{seed}]", worst <= 1e-8, 1e-8 - worst, {"max_error": worst})


def run_suite(seed=0, iota=0.1, instances=3, n_samples=100_000, j_fn=None):
    """Every oracle check. Returns a list of CheckResult."""
    out = []
    for i in range(instances):
        s = seed + i
        out.append(mc_mse_perfect(s, n_samples))
        out.append(mc_error_aware_mse(s, iota, n_samples, j_fn=j_fn))
        out.append(mc_sinr_denominator(s, iota, 0, n_samples, j_fn=j_fn))
        out.append(curvature_check(s, n_v=20))
        out.append(phase_surrogate_check(s))
        out.append(f_surrogate_check(s, regime=PERFECT))
        out.append(f_surrogate_check(s, regime=IMPERFECT, iota=iota))
        out.append(b_optimality_check(s, PERFECT))
        out.append(b_optimality_check(s, IMPERFECT, iota))
        out.append(phase_gradient_check(s))
        out.append(assembly_check(s))
    out.append(identities_check(seed))
    return out
