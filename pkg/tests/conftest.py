import json

import numpy as np
import pytest

from causal_diagrams.cli import bundle_path


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def load_bundle(name: str) -> dict:
    return json.loads(bundle_path(name).read_text())


@pytest.fixture
def bundle():
    return load_bundle
