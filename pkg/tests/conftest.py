import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fixtures import (  # noqa: E402
    paper_mix_seed_set,
    seed_set,
    shrp2_like_decels,
    shrp2_like_glances,
)


@pytest.fixture(scope="session")
def glances():
    return shrp2_like_glances()


@pytest.fixture(scope="session")
def decels():
    return shrp2_like_decels()


@pytest.fixture(scope="session")
def small_seeds():
    return seed_set(12)


@pytest.fixture(scope="session")
def paper_mix_seeds():
    return paper_mix_seed_set()
