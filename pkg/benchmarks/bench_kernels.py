"""Time the numba and numpy flavours of each hot kernel on the same inputs.

    python benchmarks/bench_kernels.py [--repeat 5] [--seed 0]

The first numba call per kernel compiles (or loads the on-disk cache) and is
reported separately as warm-up.  Outputs of the two backends are compared
before timing, so a speed-up never hides a disagreement.
"""
import argparse
import time

import numpy as np

from forestlab import _accel, kernels


def _inputs(rng):
    B2 = np.array([[1.0, 0.5], [0.0, 0.8660254037844386]])
    B3 = rng.standard_normal((3, 3)) + 2 * np.eye(3)
    A = rng.uniform(-1, 1, (400, 2))
    D = rng.standard_normal((400, 2))
    D /= np.linalg.norm(D, axis=1, keepdims=True)
    b3 = rng.standard_normal(3)
    b3 /= np.linalg.norm(b3)
    P = rng.random((2000, 3))
    S = rng.random((300, 3))
    V = rng.standard_normal((300, 3))
    V3 = rng.standard_normal((200, 3))
    V3[:50, 2] = V3[:50, 0] - 3 * V3[:50, 1]
    return {
        "first_hits (400 rays, honeycomb, eps 0.01)":
            (kernels.first_hits, (B2, np.zeros(2), A, D, 0.01, 1e5)),
        "tube_points (3D tube, l 40)":
            (kernels.tube_points, (B3, rng.random(3), np.zeros(3), b3, 0.5, 40.0)),
        "pair_sup_dist (200k pairs)":
            (kernels.pair_sup_dist, (P, S, V, rng.integers(0, 2000, 200_000),
                                     rng.integers(0, 300, 200_000))),
        "relation_scan (200 rows, H 12)":
            (kernels.relation_scan, (V3, 12, 1e-9)),
    }


def _same(x, y):
    if isinstance(x, tuple):
        return all(_same(a, b) for a, b in zip(x, y))
    x, y = np.asarray(x), np.asarray(y)
    if x.dtype.kind == "f":
        return x.shape == y.shape and np.allclose(x, y, rtol=1e-12, atol=1e-12, equal_nan=True)
    return np.array_equal(x, y)


def _time(fn, args, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    cases = _inputs(np.random.default_rng(args.seed))
    print(f"{'kernel':<44} {'warm-up':>9} {'numba':>10} {'numpy':>10} {'speed-up':>9}")
    prev = _accel.get_backend()
    try:
        for name, (fn, fargs) in cases.items():
            _accel.set_backend("numba")
            t0 = time.perf_counter()
            out_nb = fn(*fargs)
            warm = time.perf_counter() - t0
            t_nb = _time(fn, fargs, args.repeat)
            _accel.set_backend("numpy")
            out_np = fn(*fargs)
            t_np = _time(fn, fargs, args.repeat)
            if not _same(out_nb, out_np):
                raise SystemExit(f"backends disagree on {name}")
            print(f"{name:<44} {warm:>8.3f}s {t_nb * 1e3:>8.2f}ms {t_np * 1e3:>8.2f}ms "
                  f"{t_np / t_nb:>8.1f}x")
    finally:
        _accel.set_backend(prev)


if __name__ == "__main__":
    main()
