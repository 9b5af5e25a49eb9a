"""Two-view adjacency spy plots as binary PPM images (no plotting deps).

View-1 edges are red, view-2 edges blue, overlap purple, background white.
Vertex order is taken as given; matrices above 2000 vertices are
downsampled by bucketing indices so the image never exceeds 2000 pixels.
"""

from __future__ import annotations

import numpy as np

from .graph import SparseSymGraph

MAX_PIXELS = 2000

_RED = (255, 0, 0)
_BLUE = (0, 0, 255)
_PURPLE = (128, 0, 128)


def emit_spy_plot(g: SparseSymGraph, g2: SparseSymGraph, out_path) -> None:
    """Write an s x s P6 image of both adjacency patterns."""
    if g.n != g2.n:
        raise ValueError(f"views disagree on vertex count: {g.n} vs {g2.n}")
    n = g.n
    size = max(1, min(n, MAX_PIXELS))

    def bucket(idx):
        return (idx * size) // max(n, 1)

    in_first = np.zeros((size, size), dtype=bool)
    in_second = np.zeros((size, size), dtype=bool)
    for graph, mask in ((g, in_first), (g2, in_second)):
        pu = bucket(graph.u)
        pv = bucket(graph.v)
        mask[pu, pv] = True
        mask[pv, pu] = True

    image = np.full((size, size, 3), 255, dtype=np.uint8)
    image[in_first & ~in_second] = _RED
    image[in_second & ~in_first] = _BLUE
    image[in_first & in_second] = _PURPLE

    with open(out_path, "wb") as fh:
        fh.write(f"P6\n{size} {size}\n255\n".encode("ascii"))
        fh.write(image.tobytes())
