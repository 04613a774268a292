import pytest

from muse.adapters.mocks import build_mock_registry
from muse.model import UserPrompt
from muse.orchestrator import run_story
from muse.store import RunStore, TickClock


@pytest.fixture
def registry():
    return build_mock_registry(seed=7)


@pytest.fixture(scope="session")
def story(tmp_path_factory):
    """One full three-segment mock run, shared by every read-only test."""
    runs = tmp_path_factory.mktemp("runs")
    registry = build_mock_registry(seed=7, n_segments=3)
    return run_story(
        UserPrompt(text="A courier uncovers a conspiracy in the rain",
                   genre="Thriller"),
        registry,
        runs_dir=runs,
        run_id="shared",
        base_seed=7,
        clock=TickClock(),
    )


@pytest.fixture(scope="session")
def story_store(story):
    return RunStore(story.run_dir)


@pytest.fixture(scope="session")
def silent_story(tmp_path_factory):
    """A run whose script carries no audio at all."""
    runs = tmp_path_factory.mktemp("silent-runs")
    registry = build_mock_registry(seed=5, n_segments=2, silent=True)
    return run_story(
        UserPrompt(text="A lighthouse keeper walks the cliff path"),
        registry,
        runs_dir=runs,
        run_id="silent",
        base_seed=5,
        clock=TickClock(),
    )
