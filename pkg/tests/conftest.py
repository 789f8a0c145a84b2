import numpy as np
import pytest

from gkdvlab.linop import build_corrections


@pytest.fixture(scope="session")
def corr():
    """Reference correction set, built once per session."""
    return build_corrections()


@pytest.fixture(scope="session")
def corr_fine():
    """Doubled-resolution correction set for grid-independence checks."""
    from gkdvlab.grids import symmetric_grid
    return build_corrections(symmetric_grid(40.0, 12801))
