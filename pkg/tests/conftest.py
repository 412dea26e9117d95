import pytest

import hwsupport


@pytest.fixture(scope="session")
def features():
    if hwsupport.FEATURES is None:
        pytest.skip("hardware-gated: host cannot execute generated code")
    return hwsupport.FEATURES
