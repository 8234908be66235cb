import pytest

from serdes_link.core import LinkConfig


@pytest.fixture
def cfg():
    return LinkConfig()
