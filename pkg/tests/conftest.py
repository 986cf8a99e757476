import pytest

from hmwphase.physics import DriftModel, Scenario


@pytest.fixture(scope="session")
def baseline():
    return Scenario()


@pytest.fixture(scope="session")
def clean(baseline):
    """No dispersions, no drift."""
    return baseline.defect_free().replace(drift=DriftModel(amplitude=0.0))
