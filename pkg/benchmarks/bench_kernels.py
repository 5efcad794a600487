"""Time the compiled auction kernels against the numpy fallback.

Runs each batch kernel on identical inputs through both backends and
prints per-call timings plus the speedup ratio.  The compiled extension
is optional; without it only the fallback column is shown.

    python3 benchmarks/bench_kernels.py --draws 200000 --ads 12
"""

import argparse
import timeit

import numpy as np

from segauction import sampling
from segauction._kernels import _fallback

try:
    from segauction._kernels import _speedups
except ImportError:
    _speedups = None


def make_inputs(draws: int, ads: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    q = rng.uniform(0.05, 1.0, ads)
    b = rng.uniform(0.1, 3.0, ads)
    logw = sampling.log_weights(q, b)
    eps = sampling.gumbel_matrix(np.random.default_rng(seed + 1), draws, ads)
    return logw, b, eps


def bench(fn, repeat: int) -> float:
    """Best-of-repeat seconds for one call."""

    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--draws", type=int, default=200_000)
    parser.add_argument("--ads", type=int, default=12)
    parser.add_argument("--k", type=int, default=3)
    parser.add_argument("--segments", type=int, default=4,
                        help="segments per session for the sequential kernel")
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if args.draws % args.segments:
        parser.error("--draws must be divisible by --segments")

    logw, b, eps = make_inputs(args.draws, args.ads)
    eps_sessions = eps.reshape(args.draws // args.segments, args.segments,
                               args.ads)
    cases = [
        ("argmax_scores", lambda m: lambda: m.argmax_scores(logw, eps)),
        ("single_outcomes", lambda m: lambda: m.single_outcomes(logw, b, eps)),
        ("topk_outcomes",
         lambda m: lambda: m.topk_outcomes(logw, b, eps, args.k)),
        ("session_without_replacement",
         lambda m: lambda: m.session_without_replacement(logw, eps_sessions, b)),
        ("rival_kth_logscore",
         lambda m: lambda: m.rival_kth_logscore(logw, eps, 0, args.k)),
    ]

    print(f"draws={args.draws} ads={args.ads} k={args.k} "
          f"(best of {args.repeat})")
    header = f"{'kernel':30s} {'fallback':>12s}"
    if _speedups is not None:
        header += f" {'compiled':>12s} {'speedup':>9s}"
    print(header)
    for name, make in cases:
        t_fb = bench(make(_fallback), args.repeat)
        row = f"{name:30s} {t_fb * 1e3:9.2f} ms"
        if _speedups is not None:
            t_c = bench(make(_speedups), args.repeat)
            row += f" {t_c * 1e3:9.2f} ms {t_fb / t_c:8.1f}x"
        print(row)
    if _speedups is None:
        print("compiled extension not built; only the fallback was timed")


if __name__ == "__main__":
    main()
