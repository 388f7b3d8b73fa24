"""Time the compiled and numpy Volterra steppers on the same inputs.

    python benchmarks/bench_volterra.py [--steps 600 1200 2400] [--repeat 3]
"""

import argparse
import time

import numpy as np
from scipy.linalg import expm

from dmdrate import _backend


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--steps", type=int, nargs="+", default=[600, 1200, 2400])
    ap.add_argument("--harmonics", type=int, default=4)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    names = _backend.available()
    rng = np.random.default_rng(0)
    print(f"backends: {', '.join(names)}")
    print(f"{'kind':<12}{'steps':>7}" + "".join(f"{n + ' [s]':>14}" for n in names)
          + f"{'speedup':>10}{'max diff':>12}")
    for n in args.steps:
        dt = 6.0 / n
        tau = np.arange(n) * dt
        h = args.harmonics
        a = np.exp(-tau)[None, :] * rng.normal(size=(h, 1))
        ai = np.exp(-tau)[None, :] * rng.normal(size=(h, 1))
        cases = {
            "population": lambda pop, _m: pop(a, ai, 0.5 * a, 0.5 * ai, 4.0, dt, 1.0, n),
        }
        K = np.exp(-tau)[:, None, None] * (rng.normal(size=(1, 4, 4)) + 0j)
        E = expm(-1j * dt * rng.normal(size=(4, 4)))
        y0 = np.array([1, 0, 0, 0], dtype=complex)
        cases["matrix"] = lambda _p, mat: mat(K, E, y0, dt, n)
        for kind, call in cases.items():
            times, outs = [], []
            for name in names:
                pop, mat = _backend.get(name)
                t, out = _best(lambda: call(pop, mat), args.repeat)
                times.append(t)
                outs.append(np.asarray(out))
            speed = times[-1] / times[0] if len(times) > 1 else 1.0
            diff = np.abs(outs[0] - outs[-1]).max()
            print(f"{kind:<12}{n:>7}" + "".join(f"{t:>14.4f}" for t in times)
                  + f"{speed:>9.1f}x{diff:>12.2e}")


if __name__ == "__main__":
    main()
