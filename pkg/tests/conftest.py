import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from wfdb_writers import build_synthetic_database  # noqa: E402


@pytest.fixture(scope="session")
def synth_db(tmp_path_factory):
    """A small synthetic two-channel beat database on disk.

    Class counts are deliberately imbalanced (N-dominated) so rebalancing
    is exercised in both directions.
    """
    directory = tmp_path_factory.mktemp("mitbih_synth")
    record_beats = {
        "100": ["N"] * 30 + ["A"] * 8 + ["V"] * 6,
        "101": ["N"] * 25 + ["L"] * 10 + ["V"] * 6,
        "102": ["N"] * 25 + ["R"] * 12 + ["A"] * 8,
        "103": ["N"] * 20 + ["L"] * 8 + ["R"] * 6 + ["V"] * 6,
    }
    truth = build_synthetic_database(directory, record_beats, seed=77)
    return directory, truth
