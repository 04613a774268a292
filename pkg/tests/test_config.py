import pytest

from muse.config import ENV_CONFIG, load_config
from muse.loop import DEFAULT_ACCEPTANCE_THRESHOLD, DEFAULT_ITERATION_BUDGET

TOML = """
[loop]
iteration_budget = 3
acceptance_thresholds = {prod = 6.5}

[providers.image_gen]
endpoint = "http://img.internal:9000"
timeout = 5.0
retries = 4

[mock]
seed = 42
n_segments = 2
stubborn = [2]
silent = true
"""


def test_defaults_without_file_or_env():
    config = load_config(env={})
    assert config.loop.iteration_budget == DEFAULT_ITERATION_BUDGET
    assert config.loop.threshold_for("prod") == DEFAULT_ACCEPTANCE_THRESHOLD
    assert config.providers == {}
    assert config.mock.seed == 0
    assert config.mock.silent is False


def test_toml_file_round_trip(tmp_path):
    path = tmp_path / "muse.toml"
    path.write_text(TOML)
    config = load_config(path, env={})
    assert config.loop.iteration_budget == 3
    assert config.loop.threshold_for("prod") == 6.5
    # untouched phases keep the default threshold
    assert config.loop.threshold_for("post") == DEFAULT_ACCEPTANCE_THRESHOLD
    image = config.providers["image_gen"]
    assert image.endpoint == "http://img.internal:9000"
    assert image.timeout == 5.0
    assert image.retries == 4
    assert config.mock.seed == 42
    assert config.mock.n_segments == 2
    assert config.mock.stubborn == (2,)
    assert config.mock.silent is True


def test_env_names_the_config_file(tmp_path):
    path = tmp_path / "muse.toml"
    path.write_text("[mock]\nseed = 9\n")
    config = load_config(env={ENV_CONFIG: str(path)})
    assert config.mock.seed == 9


def test_env_endpoint_overrides_file(tmp_path):
    path = tmp_path / "muse.toml"
    path.write_text(TOML)
    config = load_config(path, env={
        "MUSE_PROVIDER_IMAGE_GEN_ENDPOINT": "http://other:1234",
        "MUSE_PROVIDER_JUDGE_ENDPOINT": "http://judge:8080",
    })
    # override replaces the file endpoint but keeps its other settings
    assert config.providers["image_gen"].endpoint == "http://other:1234"
    assert config.providers["image_gen"].retries == 4
    # an env-only role gets a fresh entry
    assert config.providers["judge"].endpoint == "http://judge:8080"


def test_unknown_provider_role_rejected(tmp_path):
    path = tmp_path / "muse.toml"
    path.write_text("[providers.paintbrush]\nendpoint = \"http://x\"\n")
    with pytest.raises(ValueError, match="unknown provider role"):
        load_config(path, env={})
