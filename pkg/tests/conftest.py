import os
import sys

import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))
sys.path.insert(0, os.path.dirname(__file__))

from helpers import small_channel, small_kovasznay  # noqa: E402


@pytest.fixture(scope="session")
def channel():
    """2x2 channel, p = 4, symmetric inflow window"""
    return small_channel()


@pytest.fixture(scope="session")
def kovasznay():
    return small_kovasznay(order=4)
