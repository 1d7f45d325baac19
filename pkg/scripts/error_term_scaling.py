"""Log-log slope of the sampling error ``||A_hat - A||`` against the sample count.

Both the full error and its projection onto the target subspace are measured
at a fixed random basis; the fitted slopes should sit near ``-1/2``.
"""
import csv
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from _common import parse_config, write_json
from noisypower.dense import random_orthonormal_basis
from noisypower.streaming import SpikedCovarianceModel, measure_error_terms


@dataclass
class Config:
    d: int = 50
    lambdas: tuple = (1.0, 0.9)
    sigma: float = 0.5
    p: int = 4
    n_grid: tuple = (200, 2_000, 20_000, 200_000)
    reps: int = 5
    seed: int = 0
    out: str = "results/error_terms"


def run(cfg):
    rng = np.random.default_rng(cfg.seed)
    model = SpikedCovarianceModel.random(cfg.d, cfg.lambdas, cfg.sigma, rng)
    X = random_orthonormal_basis(cfg.d, cfg.p, rng)
    rows = []
    for n in cfg.n_grid:
        terms = np.array([measure_error_terms(model, model.U, X, model.sample(rng, n))
                          for _ in range(cfg.reps)])
        rows.append((n, *np.median(terms, axis=0)))
    ns, full, proj = (np.array(c, dtype=float) for c in zip(*rows))
    slopes = {
        "full": float(np.polyfit(np.log(ns), np.log(full), 1)[0]),
        "projected": float(np.polyfit(np.log(ns), np.log(proj), 1)[0]),
    }
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "error_terms.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["n", "noise_norm", "projected_norm"])
        writer.writerows([int(n), repr(float(g)), repr(float(gu))] for n, g, gu in rows)
    write_json(out / "summary.json", {"config": asdict(cfg), "slopes": slopes})
    print(slopes)
    return slopes


if __name__ == "__main__":
    run(parse_config(Config, __doc__))
