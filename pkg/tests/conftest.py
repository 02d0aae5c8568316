import sys

import pytest

from bivgs.datagen import GenerationConfig, generate
from bivgs.trainer import TrainConfig

TINY = GenerationConfig(n_concepts=8, duplicates_per_concept=4, hrl_factor=2, n_validation=24,
                        image_dim=16, latent_dim=4, n_mels=10, frames_hrl=6, frames_lrl=9)


@pytest.fixture(scope="session")
def small_ds():
    """Default-sized synthetic data (200 validation triplets)."""
    return generate(GenerationConfig(), seed=0)


@pytest.fixture(scope="session")
def tiny_ds():
    return generate(TINY, seed=0)


@pytest.fixture
def tiny_cfg():
    return TrainConfig(batch_size=8, steps=12, pretrain_steps=10, embed_dim=6, hidden_dim=8,
                       queue_capacity=16, seed=0)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
