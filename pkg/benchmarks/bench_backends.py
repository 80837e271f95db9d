"""Throughput comparison of the numba and numpy kernel backends.

Run:  python benchmarks/bench_backends.py [n]

Times the hot kernels (normal CDF, bivariate normal CDF) and one complete
step-3 likelihood evaluation on a synthetic dataset, for each backend.
"""

import sys
import time

import numpy as np

from censdr import likelihood as lik
from censdr import simulate as sim
from censdr._backend import set_backend
from censdr import gauss2d as g2


def timeit(fn, repeats=5):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 200_000
    rng = np.random.default_rng(0)
    x = rng.uniform(-6, 6, n)
    a = rng.uniform(-5, 5, n)
    b = rng.uniform(-5, 5, n)
    r = rng.uniform(-0.99, 0.99, n)

    params = sim.HsmParams(nu=(0.5, 0.8), mu=(0.35, 0.4, 0.6),
                           sigma_u=1.0, sigma_v=1.0, rho=0.5)
    data, _ = sim.simulate_hsm(50_000, params, seed=1)
    eta = (np.array([0.35, 0.4, 0.6]), np.array([-0.3, 0.4, 0.6]),
           np.array([0.5, 0.8]), np.array([0.55]))
    rho = np.array([0.5])
    layout = lik.SortingLayout(r_cols=(0,), r0_cols=(0,))
    cfg = lik.FloorConfig()

    results = {}
    for backend in ("numpy", "numba"):
        set_backend(backend)
        g2.biv_cdf(a[:100], b[:100], r[:100])  # jit warm-up
        results[backend] = {
            "norm_cdf": timeit(lambda: g2.std_cdf(x)),
            "biv_cdf": timeit(lambda: g2.biv_cdf(a, b, r)),
            "step3_loglik(50k rows)": timeit(
                lambda: lik.step3_loglik(rho, eta, data, 0.7, 0.9, cfg, layout=layout)
            ),
        }
    set_backend("numba")

    print(f"n = {n:,} evaluation points (step 3: 50,000 rows)\n")
    print(f"{'kernel':28s} {'numpy':>12s} {'numba':>12s} {'speedup':>9s}")
    for key in results["numpy"]:
        tn = results["numpy"][key]
        tb = results["numba"][key]
        print(f"{key:28s} {tn*1e3:10.2f}ms {tb*1e3:10.2f}ms {tn/tb:8.1f}x")


if __name__ == "__main__":
    main()
