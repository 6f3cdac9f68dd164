"""Graph-based video prediction.

Thin Python surface over the C++ core: sparse motion-graph construction,
message passing, motion upsampling and multi-flow forward warping.
"""

try:
    from ._core import (
        Model,
        bench_memory,
        build_edges,
        cosine_similarity_rows,
        default_k,
        forward_warp,
        metrics,
        pixel_shuffle,
        pixel_unshuffle,
        render_clip,
    )
except ImportError:  # in-tree use: extension built by CMake, found via sys.path
    from _core import (
        Model,
        bench_memory,
        build_edges,
        cosine_similarity_rows,
        default_k,
        forward_warp,
        metrics,
        pixel_shuffle,
        pixel_unshuffle,
        render_clip,
    )

__all__ = [
    "Model",
    "bench_memory",
    "build_edges",
    "cosine_similarity_rows",
    "default_k",
    "forward_warp",
    "metrics",
    "pixel_shuffle",
    "pixel_unshuffle",
    "render_clip",
]
