"""Timing comparison of the pure-numpy and compiled GMA kernels.

Usage: python benchmarks/bench_gma.py [--repeats 50]
"""
import argparse
import time

import numpy as np

from milbench._kernels import get_backend


def setup(n, d, h, c, seed=0):
    rng = np.random.default_rng(seed)
    scale_v = 1.0 / np.sqrt(d)
    return {
        "V": rng.uniform(-scale_v, scale_v, size=(h, d)),
        "U": rng.uniform(-scale_v, scale_v, size=(h, d)),
        "w": rng.uniform(-1 / np.sqrt(h), 1 / np.sqrt(h), size=h),
        "W_head": rng.uniform(-scale_v, scale_v, size=(c, d)),
        "b_head": np.zeros(c),
        "H": rng.normal(size=(n, d)),
    }


def time_backend(backend, args, target, kind, repeats):
    call = lambda: backend.gma_value_and_grad(
        args["V"], args["U"], args["w"], args["W_head"], args["b_head"],
        args["H"], target, kind)
    call()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        call()
    return (time.perf_counter() - t0) / repeats


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=50)
    opts = parser.parse_args()

    pure = get_backend("pure")
    try:
        comp = get_backend("cython")
    except Exception:
        comp = None
        print("compiled backend unavailable; timing pure only")

    shapes = [(50, 16, 16, 2), (350, 16, 16, 2), (350, 1024, 128, 2),
              (1000, 1536, 128, 4)]
    print(f"{'n':>5} {'d':>5} {'h':>4} {'c':>2} {'pure ms':>9} "
          f"{'cython ms':>10} {'speedup':>8}")
    for n, d, h, c in shapes:
        args = setup(n, d, h, c)
        tp = time_backend(pure, args, 1, pure.KIND_CLASSIFICATION,
                          opts.repeats)
        if comp is None:
            print(f"{n:>5} {d:>5} {h:>4} {c:>2} {tp * 1e3:>9.3f} "
                  f"{'-':>10} {'-':>8}")
            continue
        tc = time_backend(comp, args, 1, comp.KIND_CLASSIFICATION,
                          opts.repeats)
        # agreement check alongside the timing
        rp = pure.gma_value_and_grad(args["V"], args["U"], args["w"],
                                     args["W_head"], args["b_head"],
                                     args["H"], 1, pure.KIND_CLASSIFICATION)
        rc = comp.gma_value_and_grad(args["V"], args["U"], args["w"],
                                     args["W_head"], args["b_head"],
                                     args["H"], 1, comp.KIND_CLASSIFICATION)
        for a, b in zip(rp, rc):
            assert np.allclose(a, b, rtol=1e-9, atol=1e-12)
        print(f"{n:>5} {d:>5} {h:>4} {c:>2} {tp * 1e3:>9.3f} "
              f"{tc * 1e3:>10.3f} {tp / tc:>8.2f}x")


if __name__ == "__main__":
    main()
