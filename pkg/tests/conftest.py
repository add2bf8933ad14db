import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

DATA = Path(__file__).parent / "data"


@pytest.fixture
def data_dir() -> Path:
    return DATA


@pytest.fixture
def intro_problem():
    from boxsampler.smtlib import parse_problem

    text = (DATA / "intro.smt2").read_text()
    return parse_problem(text)
