import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(20161016)


@pytest.fixture
def fixtures_dir():
    return Path(__file__).parent / "fixtures"
