import pathlib

import pytest

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixture_dir() -> pathlib.Path:
    if not FIXTURES.is_dir():
        pytest.fail(
            "tests/fixtures is missing; run tests/fixtures/regen_fixtures.py"
        )
    return FIXTURES
