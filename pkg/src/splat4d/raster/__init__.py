"""Tile-based software rasterizer for 4D Gaussians.

Submodules: geometry (per-frame splat preparation and the analytic geometry
backward), binning (tile assignment), kernels_py / _kernels (per-pixel
compositing, NumPy and compiled), backend (kernel selection), pipeline
(render / render_flow / oracle_render / cull / render_backward).
"""

from .pipeline import (
    DEFAULT_OPTIONS,
    RenderOptions,
    RenderOutput,
    cull,
    oracle_render,
    render,
    render_backward,
    render_flow,
    render_with_context,
)

__all__ = [
    "DEFAULT_OPTIONS",
    "RenderOptions",
    "RenderOutput",
    "cull",
    "oracle_render",
    "render",
    "render_backward",
    "render_flow",
    "render_with_context",
]
