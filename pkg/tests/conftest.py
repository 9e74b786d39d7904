import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from harnacklab import corpus, domains  # noqa: E402


@pytest.fixture(scope="session")
def corpus129():
    return corpus.corpus(2, 129)


@pytest.fixture(scope="session")
def corpus257():
    return corpus.corpus(2, 257)


@pytest.fixture(scope="session")
def tilted():
    return corpus.cached("tilted", 2, 129)


@pytest.fixture(scope="session")
def gap():
    return corpus.cached("gap", 2, 129)


@pytest.fixture(scope="session")
def halfspace257():
    return domains.builtin("halfspace", 2, 257)
