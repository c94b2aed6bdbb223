import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from helpers import corpus_seeds, make_scene  # noqa: E402

# one line per acceptance criterion, echoed as a scorecard after the run
acceptance_lines: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def scene_a():
    return make_scene(7, size=256)


@pytest.fixture(scope="session")
def scene_b():
    return make_scene(8, size=256)


@pytest.fixture(scope="session")
def corpus_scenes():
    """Eight 512x512 synthetic scenes, kept callable for analytic warps."""
    return [make_scene(s, size=512) for s in corpus_seeds(8)]


@pytest.fixture(scope="session")
def corpus(corpus_scenes):
    """Eight 512x512 synthetic test images."""
    return [sc.image for sc in corpus_scenes]


@pytest.fixture(scope="session")
def rng():
    return np.random.Generator(np.random.Philox(12345))


@pytest.fixture(scope="session")
def session_bank():
    """Moderately sized inverse-kernel bank shared across tests."""
    from gyrodeblur import build_bank

    return build_bank(24, 0.01)
