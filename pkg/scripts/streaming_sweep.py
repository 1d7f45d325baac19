"""Median final residual of streaming PCA against the sample budget.

Samples come from a spiked covariance model; the curve is written to
``sweep.csv`` (one row per budget) together with the roundness summary.
"""
import csv
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from _common import parse_config, write_json
from noisypower.streaming import SpikedCovarianceModel, spiked_roundness, sweep_samples


@dataclass
class Config:
    d: int = 100
    lambdas: tuple = (1.0, 0.9)
    sigma: float = 0.5
    p: int = 4
    L: int = 5
    n_grid: tuple = (2_000, 20_000, 200_000)
    seeds: int = 20
    seed: int = 0
    out: str = "results/streaming"


def run(cfg):
    model = SpikedCovarianceModel.random(cfg.d, cfg.lambdas, cfg.sigma, np.random.default_rng(cfg.seed))
    rows = sweep_samples(model, cfg.n_grid, range(cfg.seeds), cfg.p, cfg.L)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["n", "median_residual", "min_residual", "max_residual"])
        for n, median, residuals in rows:
            writer.writerow([n, repr(median), repr(min(residuals)), repr(max(residuals))])
            print(f"n={n:>8d}  median residual {median:.4f}")
    rp = spiked_roundness(model)
    write_json(out / "summary.json", {"config": asdict(cfg), "B": rp.B, "D": model.D})
    return rows


if __name__ == "__main__":
    run(parse_config(Config, __doc__))
