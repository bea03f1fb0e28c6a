"""Compare the compiled conv kernels against the pure-numpy fallback.

Run:  python benchmarks/bench_kernels.py
Respects SPANHEAD_KERNELS only insofar as both backends are imported
directly; the env var is irrelevant here.
"""

from __future__ import annotations

import time

import numpy as np

from spanhead.diffmath import _convkernel_py as py_backend

try:
    from spanhead.diffmath import _convkernel as c_backend
except ImportError:
    c_backend = None

CASES = [
    # (L, H, w, F) roughly: small desk case, overfit-run case, full-scale case
    (48, 32, 3, 64),
    (48, 32, 3, 384),
    (128, 64, 5, 256),
    (384, 768, 5, 64),
]
REPEATS = 5


def _time(fn, *args) -> float:
    best = float("inf")
    for _ in range(REPEATS):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench(backend, name: str) -> None:
    print(f"\n{name} backend ({backend.BACKEND_NAME})")
    print(f"{'case':>22} {'forward':>12} {'backward':>12}")
    rng = np.random.default_rng(0)
    for L, H, w, F in CASES:
        lpad = (w - 1) // 2
        xp = rng.standard_normal((L + w - 1, H)).astype(np.float32)
        kern = rng.standard_normal((w, H, F)).astype(np.float32)
        bias = rng.standard_normal(F).astype(np.float32)
        gout = rng.standard_normal((L, F)).astype(np.float32)
        fwd = _time(backend.conv1d_forward, xp, kern, bias)
        bwd = _time(backend.conv1d_backward, xp, kern, gout, True, True)
        label = f"L={L} H={H} w={w} F={F}"
        print(f"{label:>22} {fwd * 1e3:>10.3f}ms {bwd * 1e3:>10.3f}ms")


def main() -> None:
    bench(py_backend, "pure-numpy")
    if c_backend is None:
        print("\ncompiled backend not built; run pip install -e . first")
        return
    bench(c_backend, "compiled")

    # Cross-check agreement on one case so the numbers above mean something.
    rng = np.random.default_rng(1)
    L, H, w, F = 64, 48, 5, 32
    xp = rng.standard_normal((L + w - 1, H)).astype(np.float64)
    kern = rng.standard_normal((w, H, F)).astype(np.float64)
    bias = rng.standard_normal(F).astype(np.float64)
    out_py = py_backend.conv1d_forward(xp, kern, bias)
    out_c = np.asarray(c_backend.conv1d_forward(xp, kern, bias))
    err = np.abs(out_py - out_c).max()
    print(f"\nmax |py - c| forward difference: {err:.3e}")


if __name__ == "__main__":
    main()
