"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 20]
"""
import argparse
import timeit

import numpy as np

from sphereaug.kernels import get_backend


def _cases(rng):
    n, d = 4096, 128
    X = rng.standard_normal((n, d))
    q = np.linalg.qr(rng.standard_normal((d, 2)))[0]
    a = rng.uniform(0, np.pi, n)
    rot = (X, np.tile(q[:, 0], (n, 1)), np.tile(q[:, 1], (n, 1)), np.cos(a), np.sin(a))
    out = {"rotate_rows 4096x128": ("rotate_rows", rot)}
    for p, k in ((20, 3), (40, 5)):
        E = rng.standard_normal((p * k, 16))
        E /= np.linalg.norm(E, axis=1)[:, None]
        y = np.repeat(np.arange(p), k).astype(np.int64)
        out[f"triplet_batch_all {p}x{k}"] = ("triplet_batch_all", (E, y, 0.5))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    backends = {"python": get_backend("python")}
    try:
        backends["cython"] = get_backend("cython")
    except ImportError:
        print("compiled extension not available; timing the python backend only")
    cases = _cases(np.random.default_rng(0))
    print(f"{'kernel':28s}" + "".join(f"{b:>12s}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for label, (fn, inputs) in cases.items():
        times = {}
        for name, mod in backends.items():
            f = getattr(mod, fn)
            times[name] = min(timeit.repeat(lambda: f(*inputs), number=1, repeat=args.repeat))
        row = f"{label:28s}" + "".join(f"{t * 1e3:10.3f}ms" for t in times.values())
        if len(times) > 1:
            row += f"{times['python'] / times['cython']:11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
