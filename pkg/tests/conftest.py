import copy

import pytest

from ionspam.config import DEFAULTS


@pytest.fixture
def cfg():
    return copy.deepcopy(DEFAULTS)
