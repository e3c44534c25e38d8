#!/usr/bin/env python3
"""Rasterizer kernel benchmark: compiled extension vs pure-NumPy fallback.

Renders the same random scene with both backends — forward and backward —
and reports per-frame timings, the speedup, and the numerical agreement of
the two implementations.

    python3 benchmarks/bench_kernels.py --gaussians 2000 --size 128 \
        --frames 10 --threads 1
"""

from __future__ import annotations

import argparse
from time import perf_counter

import numpy as np

from splat4d.raster import RenderOptions, render_backward, render_with_context
from splat4d.raster.backend import compiled_available
from splat4d.scene_io import init_random_cube
from splat4d.synthetic import ring_camera


def build_inputs(args):
    rng = np.random.default_rng(args.seed)
    scene = init_random_cube(args.gaussians, half_extent=1.2, rng=rng)
    # Spread opacities and colors so the blend stage sees realistic
    # early-termination behavior instead of a uniform gray fog.
    scene.opacity_logits = rng.uniform(-3.0, 2.0, scene.n_gaussians)
    scene.sh = rng.normal(0.0, 0.3, scene.sh.shape)
    scene.quantize_f32()
    cam = ring_camera(0, 8, width=args.size, image_height=args.size)
    times = np.linspace(0.0, 1.0, args.frames)
    return scene, cam, times


def run_backend(scene, cam, times, backend: str, threads: int):
    opts = RenderOptions(backend=backend, threads=threads)
    d_color = np.full((cam.height, cam.width, 3),
                      1.0 / (cam.height * cam.width * 3))

    render_with_context(scene, cam, float(times[0]), (0, 0, 0), opts)  # warmup

    contexts = []
    t0 = perf_counter()
    for t in times:
        out, ctx = render_with_context(scene, cam, float(t), (0, 0, 0), opts)
        contexts.append((out, ctx))
    forward_s = (perf_counter() - t0) / len(times)

    t0 = perf_counter()
    grads = None
    for _, ctx in contexts:
        grads, _, _ = render_backward(scene, cam, ctx, d_color)
    backward_s = (perf_counter() - t0) / len(times)

    return forward_s, backward_s, contexts[0][0].color, grads


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--gaussians", type=int, default=2000)
    parser.add_argument("--size", type=int, default=128,
                        help="square image side in pixels")
    parser.add_argument("--frames", type=int, default=10,
                        help="timesteps rendered per measurement")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads for the compiled backend")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    scene, cam, times = build_inputs(args)
    print(f"scene: {scene.n_gaussians} gaussians, {args.size}x{args.size}, "
          f"{args.frames} frames, threads={args.threads}")

    results = {}
    backends = ["python"] + (["compiled"] if compiled_available() else [])
    if len(backends) == 1:
        print("note: compiled extension not built; timing the fallback only")
    for name in backends:
        threads = args.threads if name == "compiled" else 1
        fwd, bwd, image, grads = run_backend(scene, cam, times, name, threads)
        results[name] = (fwd, bwd, image, grads)
        print(f"{name:>9s}: forward {fwd * 1e3:9.2f} ms/frame   "
              f"backward {bwd * 1e3:9.2f} ms/frame")

    if len(results) == 2:
        py, comp = results["python"], results["compiled"]
        print(f"{'speedup':>9s}: forward {py[0] / comp[0]:8.1f}x          "
              f"backward {py[1] / comp[1]:8.1f}x")
        image_diff = np.abs(py[2] - comp[2]).max()
        grad_diff = max(np.abs(py[3][k] - comp[3][k]).max()
                        for k in py[3])
        print(f"agreement: max |forward diff| {image_diff:.3g}, "
              f"max |gradient diff| {grad_diff:.3g}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
