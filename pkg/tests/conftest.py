import numpy as np
import pytest

from phsearch import numerics as nm
from phsearch.model import DEFAULT_TOY, gen_toy_model


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def toy_weights():
    return gen_toy_model(7, DEFAULT_TOY)


@pytest.fixture
def toy_image(rng):
    return rng.uniform(size=(32, 32, 1))


def make_images(seed, count, shape=(32, 32, 1)):
    gen = np.random.default_rng(seed)
    return [gen.uniform(size=shape) for _ in range(count)]


@pytest.fixture
def python_backend():
    previous = nm.set_backend("python")
    yield
    nm.set_backend(previous)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.VERDICTS:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def quadrant_setup(tmp_path_factory):
    """Engineered corpus + model shared by harness/acceptance tests."""
    from phsearch.corpus import (
        SyntheticCorpusSpec,
        build_quadrant_model,
        gen_synthetic_corpus,
    )

    root = tmp_path_factory.mktemp("quadrant")
    spec = SyntheticCorpusSpec(seed=0, db_per_pair=5, query_per_pair=1)
    queries, db = gen_synthetic_corpus(spec, root)
    return {
        "root": root,
        "queries": queries,
        "db": db,
        "weights": build_quadrant_model(),
    }
