"""Benchmark the compiled kernels against the numpy reference backend.

Times the hash-grid encode (forward/backward), the compositing scan
(forward/backward), the fused elementwise activations, and one full
training-style render+gradient step on the toy configuration.

Usage: python benchmarks/bench_kernels.py [--points 100000] [--repeats 5]
"""

import argparse
import time

import numpy as np

from simplexfield import kernels, tape
from simplexfield.field import LatentCode
from simplexfield.fixtures import orbit_camera
from simplexfield.optim import loss_and_grads
from simplexfield.render import LightSample, RayMarchConfig, generate_rays, render_rays
from simplexfield.toy import toy_params
from simplexfield.training import photometric_loss


def timeit(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_backend(name, n_points, repeats):
    kernels.set_backend(name)
    rng = np.random.default_rng(0)
    params = toy_params(seed=0)
    layout = params.layout
    points = rng.uniform(-0.8, 0.8, size=(n_points, 3)).astype(np.float32)
    tables = params.tables
    dfeat = rng.standard_normal((n_points, layout.output_dim)).astype(np.float32)

    rows = {}
    rows["encode fwd"] = timeit(lambda: kernels.hash_encode_forward(points, tables, layout), repeats)
    rows["encode bwd"] = timeit(lambda: kernels.hash_encode_backward(points, dfeat, layout), repeats)

    r, s = n_points // 32, 32
    tau = rng.uniform(0, 10, size=(r, s)).astype(np.float32)
    rad = rng.uniform(0, 1, size=(r, s, 3)).astype(np.float32)
    deltas = np.full((r, s), 0.05, dtype=np.float32)
    dists = np.cumsum(deltas, axis=1).astype(np.float32)
    bg = np.ones(3, dtype=np.float32)
    rows["composite fwd"] = timeit(
        lambda: kernels.composite_forward(tau, rad, deltas, dists, bg), repeats
    )
    _, _, _, aux = kernels.composite_forward(tau, rad, deltas, dists, bg)
    dcolor = rng.standard_normal((r, 3)).astype(np.float32)
    rows["composite bwd"] = timeit(
        lambda: kernels.composite_backward(aux, dcolor, None, None), repeats
    )

    big = rng.standard_normal(n_points * 8).astype(np.float32)
    rows["softplus"] = timeit(lambda: kernels.softplus(big), repeats)
    rows["sigmoid"] = timeit(lambda: kernels.sigmoid(big), repeats)

    # a full training-style step: render 64x64x16 + photometric grads
    camera = orbit_camera(0.9, 0.2, 2.2, width=64, height=64)
    origins, dirs = generate_rays(camera)
    light = LightSample()
    march = RayMarchConfig(n_samples=16, stratified_jitter=False)
    code = LatentCode([0.5, 0.5])
    color, _, _, _ = render_rays(origins, dirs, code, params, light, march)
    target = np.asarray(tape._val(color))

    def step():
        def build(view, t):
            c, _, _, _ = render_rays(origins, dirs, code, view, light, march)
            return {"photometric": (photometric_loss(c, target), 1.0)}

        loss_and_grads(params, build)

    rows["render+grad step"] = timeit(step, max(2, repeats // 2))
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--points", type=int, default=100_000)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    results = {}
    for name in kernels.available_backends():
        results[name] = bench_backend(name, args.points, args.repeats)

    names = list(results)
    both = "native" in results and "reference" in results
    print(f"\nkernel timings, best of {args.repeats} (points={args.points})\n")
    header = f"{'kernel':<20}" + "".join(f"{n:>14}" for n in names)
    if both:
        header += f"{'native gain':>13}"
    print(header)
    print("-" * len(header))
    for row in results[names[0]]:
        line = f"{row:<20}"
        for n in names:
            line += f"{results[n][row] * 1e3:>12.2f}ms"
        if both:
            line += f"{results['reference'][row] / results['native'][row]:>12.2f}x"
        print(line)


if __name__ == "__main__":
    main()
