import json
from pathlib import Path

import numpy as np
import pytest

ORACLE_PATH = Path(__file__).parent / "oracles" / "frozen_values.json"
DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def oracle():
    return json.loads(ORACLE_PATH.read_text())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def data_dir():
    return DATA_DIR
