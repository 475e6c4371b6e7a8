"""Time the RK4 Lindblad step with the numba kernel and the numpy fallback.

    python3 benchmarks/bench_kernels.py --dims 16 36 64 100 --steps 200
"""
import argparse
import time

import numpy as np

from effmaster import _kernels
from effmaster.lindblad import MasterEquation


def random_problem(d, rng, n_ops=2):
    X = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    ops = [rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)) for _ in range(n_ops)]
    me = MasterEquation(X + X.conj().T, tuple((0.1, C) for C in ops), ((0.05, ops[0], ops[1]),))
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    rho = np.outer(v, v.conj()) / np.vdot(v, v).real
    return me, rho


def best_of(fn, repeat):
    out = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return min(out)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dims", type=int, nargs="+", default=[16, 36, 64, 100])
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    print(f"numba available: {_kernels.NUMBA_AVAILABLE}, enabled: {_kernels.USE_NUMBA}")
    print(f"{'dim':>5} {'numpy [s]':>11} {'numba [s]':>11} {'speedup':>8} {'max diff':>10}")
    for d in args.dims:
        me, rho = random_problem(d, rng)
        parts = _kernels.prepare(*me.split_form())
        h = 0.05 / me.norm_bound()
        ref = _kernels.rk4_advance(rho, *parts, h, args.steps, use_numba=False)
        t_np = best_of(lambda: _kernels.rk4_advance(rho, *parts, h, args.steps, use_numba=False), args.repeat)
        if _kernels.NUMBA_AVAILABLE:
            _kernels.rk4_advance(rho, *parts, h, 1, use_numba=True)  # compile
            out = _kernels.rk4_advance(rho, *parts, h, args.steps, use_numba=True)
            t_nb = best_of(lambda: _kernels.rk4_advance(rho, *parts, h, args.steps, use_numba=True), args.repeat)
            diff = float(np.max(np.abs(out - ref)))
            print(f"{d:>5} {t_np:>11.4f} {t_nb:>11.4f} {t_np / t_nb:>8.2f} {diff:>10.1e}")
        else:
            print(f"{d:>5} {t_np:>11.4f} {'-':>11} {'-':>8} {'-':>10}")


if __name__ == "__main__":
    main()
