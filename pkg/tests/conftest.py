import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from datacube import dataset as ds

SAMPLE_CSV = (
    "id,year,zipcode,glucose,cholesterol\n"
    "p1,2020,92093,98.5,180.0\n"
    "p1,2021,92093,101.0,185.5\n"
    "p2,2020,92101,120.0,210.0\n"
    "p2,2021,92101,115.0,205.0\n"
    "p3,2020,92093,90.0,170.0\n"
)


@pytest.fixture
def sample_csv() -> str:
    return SAMPLE_CSV


@pytest.fixture
def sample_dataset() -> ds.Dataset:
    return ds.parse_csv(SAMPLE_CSV)
