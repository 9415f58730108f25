import numpy as np
import pytest

from airfedsim import rng as rngmod
from airfedsim.nn import ArchSpec, init_model


@pytest.fixture
def seed42_setup():
    """Seed-42 MLP and 8 fixed samples used by the gradient checks."""
    arch = ArchSpec((16, 24, 5), "relu", "cross_entropy")
    model = init_model(arch, rngmod.stream(42, "init"))
    probe = rngmod.stream(42, "probe")
    X = probe.standard_normal((8, 16))
    y = probe.integers(0, 5, 8)
    return arch, model, X, np.asarray(y, dtype=np.int64)
