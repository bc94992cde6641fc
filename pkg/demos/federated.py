"""Federated regression with ideal and over-the-air aggregation.

Each round the devices take local gradient steps, the models are sent
over the optimized RIS link with fresh fading, and the global model is
rebuilt from the aggregate. Prints held-out loss per round for both.
Usage: python demos/federated.py [rounds]
"""
import sys

from ris_airfl import desk_config, sample_geometry
from ris_airfl.airflsim import OptimizedProvider, ideal_provider, run_federated


def main(rounds=10, seed=0):
    cfg = desk_config()
    ideal = run_federated(seed, rounds, ideal_provider, cfg)
    provider = OptimizedProvider(sample_geometry(cfg.K, seed), cfg, seed)
    air = run_federated(seed, rounds, provider, cfg)
    print(f"centralized optimum loss {ideal.centralized_loss:.4f}, start {ideal.initial_loss:.2f}")
    for t, (li, la, m) in enumerate(zip(ideal.loss, air.loss, air.mse), 1):
        print(f"round {t:3d}  ideal {li:.4f}  over-the-air {la:.4f}  aggregation MSE {m:.2e}")
    print(f"fading draws per round: {provider.attempts}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 10)
