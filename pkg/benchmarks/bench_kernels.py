"""Time the numba kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--steps N] [--repeat R]

Each row reports the best of R runs per backend and checks that both
backends agree on the final state. The numba timing excludes compilation
(one warm-up call first).
"""

import argparse
import time

import numpy as np

from semiclassica import _accel
from semiclassica import chaos as C
from semiclassica import dynamics as D
from semiclassica import model as M


def best_of(fn, repeat):
    out, best = None, float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    s0 = M.shell_state(0.5)
    ics = C.sample_section_ics(1.0, 0.0, 16, seed=0)
    cfg = C.ClassifierConfig(t_total=args.steps * D.DEFAULT_DT / 10)
    cases = {
        "rk4 classical": lambda nb: D.rk4_integrate("classical", s0, D.DEFAULT_DT, args.steps,
                                                   stride=100, use_numba=nb).states[-1],
        "rk4 effective g=0.5": lambda nb: D.rk4_integrate("effective", s0, D.DEFAULT_DT, args.steps,
                                                         gamma=0.5, stride=100, use_numba=nb).states[-1],
        "lyapunov batch x16": lambda nb: C.lyapunov_batch(ics, 0.0, cfg, use_numba=nb),
    }

    print(f"{'case':<24}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}{'max |diff|':>14}")
    for name, fn in cases.items():
        fn(True)
        t_nb, y_nb = best_of(lambda: fn(True), args.repeat)
        t_np, y_np = best_of(lambda: fn(False), args.repeat)
        diff = float(np.max(np.abs(np.asarray(y_nb) - np.asarray(y_np))))
        print(f"{name:<24}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>10.1f}{diff:>14.2e}")


if __name__ == "__main__":
    main()
