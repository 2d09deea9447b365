"""Compare the numba and numpy kernel backends.

Times each hot kernel on training-scale shapes plus one full
loss-and-gradients step of the default training configuration, printing
a per-kernel table with the speedup ratio. Run from the repository root:

    python3 benchmarks/bench_kernels.py [--repeats 5]

Numbers are medians over the repeat count; the first call per backend is
excluded so numba's compilation time never pollutes a measurement (it is
reported separately).
"""

import argparse
import statistics
import time

import numpy as np

from repdiff.denoiser import DenoiserConfig, build_denoiser
from repdiff.kernels import active_backend, available_backends, set_backend

# training-scale shapes: batch 64 of 32x32 images at width 32
BATCH, SIZE, WIDTH = 64, 32, 32
GROUPS, EPS = 8, 1e-5


def _inputs(rng):
    x = rng.standard_normal((BATCH, SIZE, SIZE, WIDTH)).astype(np.float32)
    w = (rng.standard_normal((3, 3, WIDTH, WIDTH)) * 0.05).astype(np.float32)
    b = np.zeros(WIDTH, dtype=np.float32)
    dy = rng.standard_normal((BATCH, SIZE, SIZE, WIDTH)).astype(np.float32)
    x3 = x.reshape(BATCH, -1, WIDTH)
    gamma = np.ones(WIDTH, dtype=np.float32)
    beta = np.zeros(WIDTH, dtype=np.float32)
    return {"x": x, "w": w, "b": b, "dy": dy, "x3": x3, "gamma": gamma, "beta": beta}


def _kernel_cases(inp):
    from repdiff import kernels

    _, mean, rstd = kernels.groupnorm_fwd(inp["x3"], inp["gamma"], inp["beta"], GROUPS, EPS)
    dy3 = inp["dy"].reshape(BATCH, -1, WIDTH)
    return [
        ("conv3_fwd", lambda: kernels.conv3_fwd(inp["x"], inp["w"], inp["b"])),
        ("conv3_bwd", lambda: kernels.conv3_bwd(inp["dy"], inp["x"], inp["w"])),
        ("groupnorm_fwd", lambda: kernels.groupnorm_fwd(
            inp["x3"], inp["gamma"], inp["beta"], GROUPS, EPS)),
        ("groupnorm_bwd", lambda: kernels.groupnorm_bwd(
            dy3, inp["x3"], inp["gamma"], mean, rstd, GROUPS)),
        ("silu_fwd", lambda: kernels.silu_fwd(inp["x"])),
        ("silu_bwd", lambda: kernels.silu_bwd(inp["dy"], inp["x"])),
    ]


def _train_step_case(rng):
    config = DenoiserConfig(image_channels=3, image_size=SIZE, cond_dim=192,
                            base_width=WIDTH, depth=2, time_embed_dim=64)
    handle = build_denoiser(config, seed=0)
    x = rng.standard_normal((BATCH, SIZE, SIZE, 3)).astype(np.float32)
    t = rng.integers(1, 1000, size=BATCH)
    cond = rng.standard_normal((BATCH, 192))
    eps = rng.standard_normal((BATCH, SIZE, SIZE, 3)).astype(np.float32)
    return lambda: handle.loss_grads(x, t, cond, eps)


def _time(fn, repeats):
    fn()  # warm-up: triggers jit compilation on the numba path
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return statistics.median(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    backends = available_backends()
    if "numba" not in backends:
        print("numba is not installed; only the numpy backend is available")

    results = {}
    compile_time = {}
    for backend in backends:
        set_backend(backend)
        rng = np.random.default_rng(0)
        inp = _inputs(rng)
        cases = _kernel_cases(inp) + [("train_step", _train_step_case(rng))]
        t0 = time.perf_counter()
        cases[0][1]()
        compile_time[backend] = time.perf_counter() - t0
        results[backend] = {name: _time(fn, args.repeats) for name, fn in cases}

    names = list(next(iter(results.values())))
    print(f"\nshapes: batch {BATCH}, {SIZE}x{SIZE}, width {WIDTH}; "
          f"median of {args.repeats} runs")
    header = f"{'kernel':<16}" + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for name in names:
        row = f"{name:<16}"
        for backend in backends:
            row += f"{results[backend][name] * 1e3:>10.2f}ms"
        if len(backends) == 2:
            ratio = results["numpy"][name] / results["numba"][name]
            row += f"{ratio:>9.2f}x"
        print(row)
    for backend in backends:
        print(f"first-call overhead ({backend}): {compile_time[backend]:.2f}s")
    set_backend("auto")
    print(f"active backend restored to {active_backend()!r}")


if __name__ == "__main__":
    main()
