"""Round-trip z-scores of the estimation pipeline over many seeds.

For an unbiased pipeline with honest standard errors each z-score column has
mean near 0 and standard deviation near 1.
"""

import argparse
from dataclasses import replace

import numpy as np

from gmcs.cli import parse_config, run_simulate


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=100)
    args = ap.parse_args()

    base = parse_config(None)
    z = {k: [] for k in ("eta_G", "chi", "epsilon", "N_Bob")}
    rates = []
    for seed in range(args.seeds):
        cfg = replace(base, scenario=replace(base.scenario, rng_seed=seed))
        _, rep, rs = run_simulate(cfg, None)
        truth = cfg.scenario.budget
        z["eta_G"].append((rep.eta_G - cfg.scenario.params.eta_G) / rep.eta_G_se)
        z["chi"].append((rep.chi - truth.chi) / rep.chi_se)
        z["epsilon"].append((rep.epsilon - truth.epsilon) / rep.epsilon_se)
        z["N_Bob"].append((rep.N_Bob - truth.N_Bob) / rep.N_Bob_se)
        rates.append(next(r.delta_I for r in rs if r.model == "realistic" and r.beta == 0.898))
    for k, v in z.items():
        v = np.asarray(v)
        print(f"z_{k:<8} mean={v.mean():+.3f} sd={v.std(ddof=1):.3f} max|z|={np.abs(v).max():.2f}")
    r = np.asarray(rates)
    print(f"R_realistic(0.898) mean={r.mean():.4f} sd={r.std(ddof=1):.4f}")


if __name__ == "__main__":
    main()
