import sys
from pathlib import Path

# the oracle module lives next to the tests, not inside the package
sys.path.insert(0, str(Path(__file__).parent))

import pytest

from berytus import webapp


@pytest.fixture
def world():
    return webapp.build_world(b"\x10" * 32)


@pytest.fixture
def make_world():
    def _make(seed=b"\x10" * 32, **kwargs):
        return webapp.build_world(seed, **kwargs)

    return _make


@pytest.fixture
def secured(world):
    """World plus a channel that has completed the key exchange."""
    channel = webapp.open_channel(world, e2ee=True)
    return world, channel
