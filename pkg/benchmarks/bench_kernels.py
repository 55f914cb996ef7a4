"""Compare the numba kernels with their numpy twins.

Usage: python3 benchmarks/bench_kernels.py [--repeat 20] [--size desk|full]

Kernel timings call both implementations in-process. The end-to-end line
runs one weighted-CSC solve in a subprocess per backend, toggling
CSC_NO_NUMBA, so it includes everything the solver touches.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from gcsc import _accel

SIZES = {"desk": (20, 256, 3, 33, 2), "full": (100, 512, 3, 65, 2)}

SOLVE_SNIPPET = """
import time, numpy as np
from gcsc.synth_bench import SynthConfig, NoiseSpec, make_dataset
from gcsc.wcsc_niapg import WcscProblem, niapg_solve
from gcsc.csc_core import random_init
N, P, K, M = {N}, {P}, {K}, {M}
d = make_dataset(SynthConfig(N=N, P=P, K=K, M=M), NoiseSpec("gaussian"))
prob = WcscProblem.unweighted(d.noisy, 0.02)
init = random_init(N, K, M, P, np.random.default_rng(0))
niapg_solve(prob, init, max_iter=3)
t = time.perf_counter()
r = niapg_solve(prob, init, tol=1e-12, max_iter=200)
print(time.perf_counter() - t, r.trace[-1])
"""


def best_of(fn, args, repeat):
    fn(*args)  # warm-up / compile
    ts = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        ts.append(time.perf_counter() - t)
    return min(ts)


def kernel_cases(N, P, K, M, G, rng):
    F = P // 2 + 1
    x = rng.standard_normal((N, P))
    xrec = rng.standard_normal((N, P))
    mu = rng.standard_normal((G, P)) * 0.01
    w2 = rng.uniform(0.5, 2.0, (G, N, P))
    var = rng.uniform(0.5, 2.0, (G, P))
    a = rng.standard_normal((N * F, K)) + 1j * rng.standard_normal((N * F, K))
    b = rng.standard_normal((N * F, K)) + 1j * rng.standard_normal((N * F, K))
    Z = rng.standard_normal((N, K, P))
    A = rng.standard_normal((F, K, K)) + 1j * rng.standard_normal((F, K, K)) + 4 * np.eye(K)
    return [
        ("soft_threshold", _accel._soft_threshold_nb, _accel._soft_threshold_np, (Z, 0.3)),
        ("project_rows", _accel._project_rows_nb, _accel._project_rows_np,
         (rng.standard_normal((K, M)),)),
        ("weighted_residual", _accel._weighted_residual_nb, _accel._weighted_residual_np,
         (x, xrec, mu, w2)),
        ("gauss_loglik", _accel._gauss_loglik_nb, _accel._gauss_loglik_np, (x - xrec, mu, var)),
        ("rank1_solve", _accel._rank1_solve_nb, _accel._rank1_solve_np, (a, b, 2.0)),
        ("dense_solve", _accel._dense_solve_nb, _accel._dense_solve_np, (A, b[:F])),
    ]


def end_to_end(N, P, K, M):
    out = {}
    for name, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, CSC_NO_NUMBA=flag)
        code = SOLVE_SNIPPET.format(N=N, P=P, K=K, M=M)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                             text=True, check=True)
        secs, obj = res.stdout.split()
        out[name] = (float(secs), float(obj))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--size", choices=sorted(SIZES), default="desk")
    ap.add_argument("--skip-solve", action="store_true")
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        sys.exit("numba is unavailable (or CSC_NO_NUMBA is set); nothing to compare")

    N, P, K, M, G = SIZES[args.size]
    rng = np.random.default_rng(0)
    print(f"size={args.size} N={N} P={P} K={K} M={M} G={G} repeat={args.repeat}")
    print(f"{'kernel':<20}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}{'max |diff|':>14}")
    for name, nb, npy, a in kernel_cases(N, P, K, M, G, rng):
        t_nb = best_of(nb, a, args.repeat)
        t_np = best_of(npy, a, args.repeat)
        r_nb, r_np = nb(*a), npy(*a)
        if isinstance(r_nb, tuple):
            diff = max(float(np.max(np.abs(np.asarray(u) - np.asarray(v))))
                       for u, v in zip(r_nb, r_np))
        else:
            diff = float(np.max(np.abs(r_nb - r_np)))
        print(f"{name:<20}{t_nb * 1e3:>12.3f}{t_np * 1e3:>12.3f}{t_np / t_nb:>10.2f}{diff:>14.2e}")

    if not args.skip_solve:
        res = end_to_end(N, P, K, M)
        (tn, fn), (tp, fp) = res["numba"], res["numpy"]
        print(f"niapg 200 iters: numba {tn:.3f} s, numpy {tp:.3f} s, speedup {tp / tn:.2f}; "
              f"final F rel diff {abs(fn - fp) / abs(fp):.1e}")


if __name__ == "__main__":
    main()
