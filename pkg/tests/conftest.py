import json
from pathlib import Path

import numpy as np
import pytest

from metricext.nerve import AmbientSpace
from metricext.sjoin import FunctionTable

DATA = Path(__file__).parent / "data"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def golden():
    return json.loads((DATA / "golden_demo.json").read_text())


@pytest.fixture(scope="session")
def demo(golden):
    space = AmbientSpace.from_matrix(golden["ids"], np.array(golden["metric_d"]), golden["subset"])
    p = FunctionTable.from_matrix(golden["subset"], np.array(golden["pseudometric_p"]))
    return space, p
