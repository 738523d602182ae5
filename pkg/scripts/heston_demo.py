"""H = 1/2 degeneration: simulated mean of the scalar volatility against the CIR mean.

    python scripts/heston_demo.py [--paths N]
"""

import argparse

import numpy as np

from fwis.fbm import HurstParams, TimeGrid
from fwis.spde import SixParamSpec, eps_fwis_general
from fwis.stats import mean_se
from fwis.volmodel import cir_mean, heston_degenerate

ap = argparse.ArgumentParser()
ap.add_argument("--paths", type=int, default=20_000)
ap.add_argument("--seed", type=int, default=3)
args = ap.parse_args()

v, Q, K, u0, eps = 2.0, 0.3, -1.0, 0.04, 0.01
kappa, theta, sigma = heston_degenerate(v, Q, K)
print(f"kappa={kappa:g} theta={theta:g} sigma={sigma:g}")
spec = SixParamSpec.from_index(HurstParams(0.5, eps), v, [[u0]], [[Q]], [[K]])
obs = np.linspace(0.125, 1.0, 8)
grid = TimeGrid.with_step(1.0, 2**-8)
b = eps_fwis_general(spec, grid, np.random.default_rng(args.seed), args.paths, obs_times=obs)
print(f"{'t':>6} {'MC mean':>10} {'SE':>9} {'CIR mean':>10}")
for j, t in enumerate(obs, start=1):
    m, se = mean_se(b.values[:, j, 0, 0])
    print(f"{t:6.3f} {m:10.6f} {se:9.2e} {cir_mean(kappa, theta, u0, t):10.6f}")
