import numpy as np
import pytest

from psdesign import LightConfig, substream
from psdesign.optimize import random_unit_rows


@pytest.fixture
def rng():
    return substream(20240811, 0)


def well_conditioned_rows(rng: np.random.Generator, m: int, min_sv: float = 0.3) -> np.ndarray:
    """Random unit rows rejected until the smallest singular value is decent."""
    while True:
        rows = random_unit_rows(m, rng)
        if np.linalg.svd(rows, compute_uv=False)[-1] >= min_sv:
            return rows


def well_conditioned_config(rng: np.random.Generator, m: int, min_sv: float = 0.3) -> LightConfig:
    return LightConfig(rows=well_conditioned_rows(rng, m, min_sv))
