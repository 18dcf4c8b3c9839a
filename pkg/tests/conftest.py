import numpy as np
import pytest

from kgcep.datagen import ShapeSpec, generate
from kgcep.kg import KnowledgeGraph, parse_triples

TOY = """\
a:P\thasG\tx:G
b:P\thasG\tx:G
c:P\thasG\ty:G
d:P\thasG\ty:G
a:P\tlinks\tb:P
b:P\tlinks\tc:P
"""


@pytest.fixture
def toy_kg():
    """5-entity, 6-triple KG with every triple in LRN and a copy of all in TST."""
    d, tr = parse_triples(TOY)
    return KnowledgeGraph(d, {"LRN": tr})


@pytest.fixture(scope="session")
def small_ontology():
    return generate(ShapeSpec(n_subjects=120, n_partners=24, label_cardinalities=(4, 12, 30),
                              density=1.0, seed=3))


@pytest.fixture(scope="session")
def default_ontology():
    return generate(ShapeSpec(seed=1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import report

    if report.LINES:
        terminalreporter.section("acceptance criteria")
        for line in report.LINES:
            terminalreporter.write_line(line)
