"""Kernel backend selection: compiled extension if available, NumPy otherwise.

Override with SPLAT4D_BACKEND=compiled|python or per call via the render
options.  Both backends expose forward/backward with the same signature and
agree to floating-point noise; the compiled one additionally parallelizes
over tile chunks when asked for threads.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..errors import Splat4DError
from . import kernels_py

try:
    from . import _kernels
except ImportError:  # pragma: no cover - depends on the build
    _kernels = None


class PythonBackend:
    name = "python"

    @staticmethod
    def forward(width, height, mean2d, conic, avals, payload, boxes,
                background, t_floor, w_clamp, bins=None, threads=1):
        return kernels_py.forward(width, height, mean2d, conic, avals,
                                  payload, boxes, background, t_floor,
                                  w_clamp)

    @staticmethod
    def backward(width, height, mean2d, conic, avals, payload, boxes,
                 background, t_floor, w_clamp, d_out, total, bins=None,
                 threads=1):
        return kernels_py.backward(width, height, mean2d, conic, avals,
                                   payload, boxes, background, t_floor,
                                   w_clamp, d_out, total)


class CompiledBackend:
    name = "compiled"

    @staticmethod
    def _chunks(n_tiles, threads):
        threads = max(1, min(threads, n_tiles)) if n_tiles else 1
        bounds = np.linspace(0, n_tiles, threads + 1).astype(int)
        return [(int(bounds[k]), int(bounds[k + 1]))
                for k in range(threads) if bounds[k] < bounds[k + 1]]

    @staticmethod
    def forward(width, height, mean2d, conic, avals, payload, boxes,
                background, t_floor, w_clamp, bins=None, threads=1):
        if bins is None:
            raise Splat4DError("compiled backend needs tile bins")
        tile_starts, dup_ids, ntx, nty, tile_size = bins
        nc = payload.shape[1]
        out = np.zeros((height, width, nc))
        trans = np.ones((height, width))
        n_tiles = ntx * nty
        chunks = CompiledBackend._chunks(n_tiles, threads)

        def run(rng):
            _kernels.forward_range(rng[0], rng[1], tile_size, ntx, height,
                                   width, tile_starts, dup_ids, mean2d,
                                   conic, avals, payload, boxes, background,
                                   t_floor, w_clamp, out, trans)

        if len(chunks) <= 1:
            for rng in chunks:
                run(rng)
        else:
            with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
                list(pool.map(run, chunks))
        return out, trans

    @staticmethod
    def backward(width, height, mean2d, conic, avals, payload, boxes,
                 background, t_floor, w_clamp, d_out, total, bins=None,
                 threads=1):
        if bins is None:
            raise Splat4DError("compiled backend needs tile bins")
        tile_starts, dup_ids, ntx, nty, tile_size = bins
        m = mean2d.shape[0]
        nc = payload.shape[1]
        n_tiles = ntx * nty
        chunks = CompiledBackend._chunks(n_tiles, threads)

        def alloc():
            return (np.zeros((m, 2)), np.zeros((m, 3)), np.zeros(m),
                    np.zeros((m, nc)), np.zeros(m, dtype=np.int64))

        def run(rng, bufs):
            _kernels.backward_range(rng[0], rng[1], tile_size, ntx, height,
                                    width, tile_starts, dup_ids, mean2d,
                                    conic, avals, payload, boxes, background,
                                    t_floor, w_clamp, d_out, total, *bufs)

        if len(chunks) <= 1:
            bufs = alloc()
            for rng in chunks:
                run(rng, bufs)
            return bufs
        all_bufs = [alloc() for _ in chunks]
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            list(pool.map(lambda rb: run(rb[0], rb[1]),
                          zip(chunks, all_bufs)))
        # Fixed-order reduction keeps results independent of scheduling.
        totals = alloc()
        for bufs in all_bufs:
            for acc, part in zip(totals, bufs):
                acc += part
        return totals


def compiled_available() -> bool:
    return _kernels is not None


def get_backend(name: str | None = None):
    """Resolve a backend by explicit name, env var, or availability."""
    if name is None:
        name = os.environ.get("SPLAT4D_BACKEND")
    if name is None:
        name = "compiled" if compiled_available() else "python"
    if name == "compiled":
        if not compiled_available():
            raise Splat4DError(
                "compiled kernels requested but the extension is not built"
            )
        return CompiledBackend
    if name == "python":
        return PythonBackend
    raise Splat4DError(f"unknown backend {name!r} (use 'compiled' or 'python')")
