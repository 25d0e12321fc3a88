from pathlib import Path

import pytest

from hsvi.ingest import generate_rocksample, load_pomdp

from helpers import small_models

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def tiger_path():
    return FIXTURES / "tiger.pomdp"


@pytest.fixture(scope="session")
def tiger(tiger_path):
    return load_pomdp(tiger_path)


@pytest.fixture(scope="session")
def rocksample_2_1():
    return generate_rocksample(2, 1, [(0, 0)], start=(1, 0))


@pytest.fixture(scope="session")
def models(tiger, rocksample_2_1):
    return small_models(tiger, rocksample_2_1)
