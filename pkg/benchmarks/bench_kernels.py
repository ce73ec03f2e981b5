"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--points 2048]

Prints the best-of-``repeat`` time per call for each kernel and backend,
and the speed-up of the compiled core. Both backends are checked to agree
before timing.
"""

import argparse
import timeit

import numpy as np

from thermopinn import _kernels
from thermopinn.nn import init_mlp

try:
    from thermopinn._kernels import _core
except ImportError:
    _core = None


def cases(points, sizes):
    rng = np.random.default_rng(0)
    theta = init_mlp(sizes, 0).flatten()
    X = rng.random((points, 2))
    g = [rng.standard_normal(points) for _ in range(3)]
    n = 99
    tri = (rng.random(n - 1), 4.0 + rng.random(n), rng.random(n - 1), rng.random(n))

    def mlp_value(k):
        return lambda: k.mlp_value(theta, sizes, X)

    def mlp_forward(k):
        return lambda: k.mlp_forward(theta, sizes, X)

    def mlp_backward(k):
        cache = k.mlp_forward(theta, sizes, X)
        return lambda: k.mlp_backward(theta, sizes, cache, *g)

    def thomas(k):
        return lambda: k.thomas(*tri)

    return {"mlp_value": mlp_value, "mlp_forward": mlp_forward, "mlp_backward": mlp_backward, "thomas_n99": thomas}


def best(fn, repeat):
    number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-7)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--points", type=int, default=2048)
    ap.add_argument("--layers", default="2,32,32,32,1")
    args = ap.parse_args()
    sizes = tuple(int(v) for v in args.layers.split(","))
    if _core is None:
        print("compiled core not built; run `python setup.py build_ext --inplace` first")
        return
    print(f"layers={list(sizes)} points={args.points} active backend={_kernels.BACKEND}")
    print(f"{'kernel':<14}{'numpy [ms]':>12}{'cython [ms]':>13}{'speed-up':>10}")
    for name, make in cases(args.points, sizes).items():
        a, b = make(_kernels.fallback)(), make(_core)()
        if isinstance(a, np.ndarray):
            np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)
        else:
            np.testing.assert_allclose(a.uxx, b.uxx, rtol=1e-10, atol=1e-12)
        t_np = best(make(_kernels.fallback), args.repeat)
        t_cy = best(make(_core), args.repeat)
        print(f"{name:<14}{t_np * 1e3:>12.4f}{t_cy * 1e3:>13.4f}{t_np / t_cy:>10.2f}")


if __name__ == "__main__":
    main()
