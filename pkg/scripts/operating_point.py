"""Analytic key rates and noise budget at the reference operating point."""

from gmcs.keyrate import MODELS, NoiseBudget, SystemParameters, secure_key_rate


def main() -> None:
    params = SystemParameters()
    budget = NoiseBudget.compose(params.eta, params.G, epsilon_A=0.056, N_el=0.045, N_leak=0.020)
    print(f"chi_vac={budget.chi_vac:.4f} epsilon={budget.epsilon:.4f} chi={budget.chi:.4f}")
    print(f"{'model':<10} {'beta':>6} {'I_AB':>8} {'I_BE':>8} {'rate':>8} {'raw':>8}")
    for model in MODELS:
        for beta in (1.0, params.beta):
            r = secure_key_rate(params, budget, model, beta=beta)
            print(f"{model:<10} {beta:>6.3f} {r.I_AB:>8.4f} {r.I_BE:>8.4f} "
                  f"{r.delta_I:>8.4f} {r.delta_I_raw:>+8.4f}")


if __name__ == "__main__":
    main()
