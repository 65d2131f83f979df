import numpy as np
import pytest

from jetpart.graph import Graph


def random_graph(rng, n=None, density=None, max_w=5, max_c=1):
    """Small random weighted graph with possibly isolated vertices."""
    n = n or int(rng.integers(2, 65))
    density = density if density is not None else rng.uniform(0.02, 0.3)
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(len(iu)) < density
    u, v = iu[keep], ju[keep]
    w = rng.integers(1, max_w + 1, len(u))
    c = rng.integers(1, max_c + 1, n)
    return Graph.from_edges(n, u, v, w, c)


def brute_cut(g, blocks):
    """Double loop over all arcs, halved."""
    total = 0
    for v in range(g.n):
        for a in range(g.xadj[v], g.xadj[v + 1]):
            if blocks[v] != blocks[g.adjncy[a]]:
                total += int(g.adjwgt[a])
    return total // 2


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[number])
