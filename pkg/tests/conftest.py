import numpy as np
import pytest

from multigcn.graph import SparseSymGraph


def random_graph(n, p, rng, weighted=False):
    """Erdos-Renyi graph; weights uniform in (0.5, 1.5) when weighted."""
    iu, iv = np.triu_indices(n, k=1)
    hit = rng.random(iu.size) < p
    us, vs = iu[hit], iv[hit]
    if weighted:
        ws = rng.uniform(0.5, 1.5, size=us.size)
    else:
        ws = np.ones(us.size)
    return SparseSymGraph(n, zip(us.tolist(), vs.tolist(), ws.tolist()))


def random_orthonormal(n, k, rng):
    q, _ = np.linalg.qr(rng.standard_normal((n, k)))
    return q


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
