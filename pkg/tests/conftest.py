import pytest

from lppcoal.environment import RngStream


@pytest.fixture
def stream():
    return RngStream(7, ("unit",))
