import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hrcal.synth import CohortConfig, generate_cohort


@pytest.fixture(scope="session")
def small_cohort():
    """Two short sessions shared across io/signal/activity tests."""
    cfg = CohortConfig(n_participants=2, seed=42, rs_minutes=6,
                       ls_minutes_range=(6.0, 8.0), is_minutes=12.0)
    return generate_cohort(cfg)
