"""Symbol-level AirComp aggregation, SIC recovery of local models and
federated rounds on a synthetic linear-regression task."""
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelRealization, effective_channel, sample_channels
from .config import PERFECT
from .errors import DegenerateInputError, InfeasibleInstanceError, InvalidInputError
from .metrics import BeamformerState, order_devices, received_gains, sinr_perfect

SCALE_FLOOR = 1e-12


@dataclass
class ModelVector:
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if not np.all(np.isfinite(self.weights)):
            raise InvalidInputError("model weights must be finite")

    @property
    def d(self):
        return self.weights.size


@dataclass
class PreprocessState:
    means: np.ndarray
    scales: np.ndarray
    d: int
    padded: bool
    shared_scale: bool = True

    @property
    def scale(self):
        """Common de-normalization scale used by the aggregator."""
        return float(np.mean(self.scales))


@dataclass
class SicOutcome:
    symbols: np.ndarray
    success: np.ndarray
    order: np.ndarray
    residual_powers: np.ndarray
    sinr: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _weights(m):
    return m.weights if isinstance(m, ModelVector) else np.asarray(m, dtype=float).reshape(-1)


def _pair(x):
    if x.size % 2:
        x = np.append(x, 0.0)
    return x[0::2] + 1j * x[1::2]


def _unpair(s, d):
    x = np.empty(2 * s.size)
    x[0::2], x[1::2] = s.real, s.imag
    return x[:d]


def preprocess(models, shared_scale=True):
    """Center, normalize and pair real weights into complex symbols.

    Each device removes its own mean. With ``shared_scale`` every device
    divides by one common scale (the RMS of the per-device scales), which
    makes the aggregate exactly invertible; otherwise each device is
    normalized to unit symbol power on its own and the aggregator
    de-normalizes with the mean scale.
    """
    W = [_weights(m) for m in models]
    if not W:
        raise InvalidInputError("need at least one model")
    d = W[0].size
    if any(w.size != d for w in W):
        raise InvalidInputError("all models must have the same dimension")
    W = np.array(W)
    means = W.mean(axis=1)
    centered = W - means[:, None]
    n_sym = (d + 1) // 2
    scales = np.sqrt(np.sum(centered ** 2, axis=1) / n_sym)
    scales = np.maximum(scales, SCALE_FLOOR)
    if shared_scale:
        scales = np.full_like(scales, np.sqrt(np.mean(scales ** 2)))
    symbols = np.array([_pair(c / s) for c, s in zip(centered, scales)])
    return symbols, PreprocessState(means, scales, d, bool(d % 2), shared_scale)


def postprocess(aggregate, state: PreprocessState, K):
    """Invert the sum of pre-processed symbols into the model average."""
    aggregate = np.asarray(aggregate, dtype=complex).reshape(-1)
    if aggregate.size != (state.d + 1) // 2:
        raise InvalidInputError(f"aggregate has {aggregate.size} symbols, expected {(state.d + 1) // 2}")
    x = _unpair(aggregate, state.d)
    return ModelVector(state.scale * x / K + np.mean(state.means))


def aircomp_round(symbols, state: BeamformerState, truth: ChannelRealization, sigma2_n, seed,
                  decoder_channels=None, gamma_min=None):
    """One block of AirComp transmissions with MMSE aggregation and scalar SIC.

    ``symbols`` has shape (K, L). Returns (b^H y per slot, SicOutcome). The
    decoder orders and equalizes with ``decoder_channels`` (the true
    channels unless an estimate is supplied); the air uses ``truth``.
    """
    S = np.atleast_2d(np.asarray(symbols, dtype=complex))
    K = S.shape[0]
    if K != state.K:
        raise InvalidInputError(f"{K} symbol streams for {state.K} devices")
    H = effective_channel(truth, state.v)
    Hd = H if decoder_channels is None else effective_channel(decoder_channels, state.v)
    rng = np.random.default_rng(seed)
    L = S.shape[1]
    Nr = H.shape[1]
    x = np.einsum("krt,kt->kr", H, state.a)
    noise = np.sqrt(sigma2_n / 2) * (rng.standard_normal((Nr, L)) + 1j * rng.standard_normal((Nr, L)))
    y = x.T @ S + noise
    s_b = state.b.conj() @ y

    order = order_devices(Hd)
    c_dec = received_gains(state.f, state.a, Hd)
    r = state.f.conj() @ y
    decoded = np.full((K, L), np.nan + 1j * np.nan)
    success = np.zeros(K, dtype=bool)
    residual = []
    Ho = H[order]
    sinr = np.zeros(K)
    for pos, k in enumerate(order):
        try:
            sinr[k] = sinr_perfect(state.f, state.a[order], Ho, sigma2_n, pos)
        except DegenerateInputError:
            sinr[k] = 0.0
    for k in order:
        if c_dec[k] == 0:
            break
        decoded[k] = r / c_dec[k]
        r = r - c_dec[k] * decoded[k]
        residual.append(float(np.mean(np.abs(r) ** 2)))
        success[k] = True if gamma_min is None else bool(sinr[k] >= gamma_min)
    return s_b, SicOutcome(decoded, success, order, np.array(residual), sinr)


# federated learning -------------------------------------------------------------

@dataclass
class RegressionTask:
    w_true: np.ndarray
    X: list
    y: list
    X_test: np.ndarray
    y_test: np.ndarray

    @property
    def K(self):
        return len(self.X)

    def loss(self, w):
        r = self.X_test @ w - self.y_test
        return float(0.5 * np.mean(r ** 2))

    def centralized(self):
        X = np.vstack(self.X)
        y = np.concatenate(self.y)
        return np.linalg.lstsq(X, y, rcond=None)[0]


def make_task(seed, K, d=200, n_samples=500, n_test=2000, noise_std=1.0):
    """Shared ground truth with device-local label noise."""
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(d)
    X = [rng.standard_normal((n_samples, d)) for _ in range(K)]
    y = [Xk @ w + noise_std * rng.standard_normal(n_samples) for Xk in X]
    X_test = rng.standard_normal((n_test, d))
    y_test = X_test @ w + noise_std * rng.standard_normal(n_test)
    return RegressionTask(w, X, y, X_test, y_test)


def local_update(w, X, y, steps=5, lr=0.05):
    for _ in range(steps):
        w = w - lr * X.T @ (X @ w - y) / len(y)
    return w


@dataclass
class FederatedTrace:
    loss: list = field(default_factory=list)
    mse: list = field(default_factory=list)
    centralized_loss: float = float("nan")
    initial_loss: float = float("nan")
    channel_attempts: list = field(default_factory=list)
    final_weights: np.ndarray = None

    def to_rows(self):
        return [{"round": i + 1, "loss": l, "aggregation_mse": m}
                for i, (l, m) in enumerate(zip(self.loss, self.mse))]


def run_federated(task_seed, rounds, provider, config, local_steps=5, lr=0.05, d=200, n_samples=500):
    """FedAvg rounds with AirComp aggregation.

    ``provider(t)`` returns ``None`` for ideal (exact) averaging or a
    ``(BeamformerState, ChannelRealization)`` pair used over the air in
    round t. Each round every device runs local gradient descent from the
    global model, then the models are pre-processed, aggregated and
    post-processed into the next global model.
    """
    if rounds < 1:
        raise InvalidInputError("rounds must be >= 1")
    task = make_task(task_seed, config.K, d, n_samples)
    trace = FederatedTrace(centralized_loss=task.loss(task.centralized()))
    w = np.zeros(d)
    trace.initial_loss = task.loss(w)
    for t in range(rounds):
        local = [local_update(w, task.X[k], task.y[k], local_steps, lr) for k in range(task.K)]
        link = provider(t)
        if link is None:
            w = np.mean(local, axis=0)
            trace.mse.append(0.0)
        else:
            state, truth = link
            symbols, pre = preprocess(local)
            s_b, _ = aircomp_round(symbols, state, truth, config.sigma2_n, seed=(task_seed, t))
            err = s_b - symbols.sum(axis=0)
            trace.mse.append(float(np.mean(np.abs(err) ** 2)))
            w = postprocess(s_b, pre, task.K).weights
        trace.loss.append(task.loss(w))
    trace.final_weights = w
    trace.channel_attempts = list(getattr(provider, "attempts", []))
    return trace


def ideal_provider(t):
    return None


@dataclass
class OptimizedProvider:
    """Fresh fading every round on a fixed geometry, re-optimized each round.

    A round whose fading draw admits no feasible design is deferred to the
    next draw (up to ``max_attempts``); the number of draws used is kept
    in ``attempts``. By default the target-relaxation homotopy is skipped,
    so a draw is only used when the direct repair cycles reach the targets.
    """

    geometry: object
    config: object
    seed: int
    regime: str = PERFECT
    ao_iterations: int = 3
    max_attempts: int = 30
    max_halvings: int = 0
    attempts: list = field(default_factory=list)

    def __call__(self, t):
        from .optimizer import initialize_feasible, run_algorithm
        cfg = self.config.replace(T0=self.ao_iterations)
        for i in range(self.max_attempts):
            sub = int(np.random.SeedSequence([self.seed, t, i]).generate_state(1)[0])
            truth = sample_channels(self.geometry, cfg, sub)
            try:
                state0 = initialize_feasible(truth, cfg, self.regime, sub, max_halvings=self.max_halvings)
            except InfeasibleInstanceError:
                continue
            state, _ = run_algorithm(state0, truth, cfg, self.regime)
            self.attempts.append(i + 1)
            return state, truth
        raise InfeasibleInstanceError(f"round {t}: no feasible channel draw in {self.max_attempts} attempts",
                                      {"round": t})
