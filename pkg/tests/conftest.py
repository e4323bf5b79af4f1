import numpy as np
import pytest
from hypothesis import settings

from hypotopo.metric import SparseMetricGraph
from hypotopo.traces import ProblemInstance, ReasoningPath, ReasoningStep

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def make_instance(paths, instance_id="t/0", gold=None):
    """``paths`` is a list of step lists; a step is a text or (text, confidence[, answer])."""
    built = []
    for p, steps in enumerate(paths):
        out = []
        for s in steps:
            if isinstance(s, str):
                out.append(ReasoningStep(s, 0.8))
            else:
                out.append(ReasoningStep(s[0], s[1], s[2] if len(s) > 2 else None))
        built.append(ReasoningPath(f"p{p}", tuple(out)))
    return ProblemInstance(instance_id, "q", tuple(built), gold)


def random_sparse_graph(rng, n_max=7, p_edge=0.7, ties=False):
    n = int(rng.integers(2, n_max + 1))
    edges = {}
    for a in range(n):
        for b in range(a + 1, n):
            if rng.random() < p_edge:
                w = float(rng.integers(1, 5)) / 4 if ties else float(rng.uniform(0.05, 1.0))
                edges[(a, b)] = w
    return SparseMetricGraph(list(range(n)), edges, max(edges.values(), default=0.0))


def square_points():
    return np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def euclidean(points):
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt((diff ** 2).sum(-1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS):
            terminalreporter.write_line(line)
