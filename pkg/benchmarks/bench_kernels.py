"""Time the numba kernels against the pure-numpy fallback.

Each backend runs in its own subprocess because the choice is fixed at import
time by MIDEMO_PURE_NUMPY. Usage::

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

CASES = {
    # name: (channels, height, width) of one trunk feature map
    "block1 313x149 c=1": (1, 313, 149),
    "block3 156x74 c=64": (64, 156, 74),
}


def worker(repeat):
    import numpy as np

    from midemo import _accel
    from midemo.nn.layers import Conv2d, MaxPool2d

    rng = np.random.default_rng(0)
    results = {"backend": _accel.BACKEND}
    for name, (c, h, w) in CASES.items():
        xp = rng.normal(size=(c, h + 2, w + 2)).astype(np.float32)
        cols = _accel.im2col(xp, 3, 3, h, w)
        pooled_in = rng.normal(size=(8, c, h, w)).astype(np.float32)
        out, arg = _accel.maxpool_forward(pooled_in, 2)
        grad = np.ones_like(out)
        conv = Conv2d(c, 16, 3)
        conv.init(rng, np.float32)
        x = rng.normal(size=(2, c, h, w)).astype(np.float32)
        y, cache = conv.forward(x, train=True)
        gy = np.ones_like(y)
        pool = MaxPool2d(2)
        jobs = {
            "im2col": lambda: _accel.im2col(xp, 3, 3, h, w),
            "col2im": lambda: _accel.col2im(cols, c, 3, 3, h, w),
            "maxpool fwd": lambda: _accel.maxpool_forward(pooled_in, 2),
            "maxpool bwd": lambda: _accel.maxpool_backward(grad, arg, 2, h, w),
            "conv fwd+bwd (N=2, 16 out)": lambda: conv.backward(cache, gy),
            "pool layer fwd (N=8)": lambda: pool.forward(pooled_in, train=False),
        }
        for label, fn in jobs.items():
            fn()  # warm-up; triggers JIT compilation on the numba path
            best = min(timeit.repeat(fn, number=1, repeat=repeat))
            results[f"{name} | {label}"] = best
    print(json.dumps(results))


def run_backend(pure_numpy, repeat):
    env = dict(os.environ, MIDEMO_PURE_NUMPY="1" if pure_numpy else "0")
    out = subprocess.run([sys.executable, __file__, "--worker", "--repeat", str(repeat)],
                         env=env, check=True, capture_output=True, text=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json")
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.worker:
        worker(args.repeat)
        return
    fast = run_backend(False, args.repeat)
    ref = run_backend(True, args.repeat)
    print(f"backends: {fast.pop('backend')} vs {ref.pop('backend')}")
    print(f"{'case':<58}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}")
    for key in fast:
        a, b = fast[key] * 1e3, ref[key] * 1e3
        print(f"{key:<58}{a:>10.2f}{b:>10.2f}{b / a:>8.1f}x")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump({"numba": fast, "numpy": ref}, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
