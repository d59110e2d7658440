import sys

import numpy as np
import pytest

from ptrb.numerics import clear_tape
from ptrb.pipeline.config import ModelConfig

MICRO = dict(
    num_groups=4, group_size=4, num_points=32, channel=8, heads=2, encoder_depth=1,
    mamba_depth=1, num_classes=3, embed_hidden=8, proj_hidden=8, proj_dim=8, head_hidden=8,
    state_dim=4, head_dropout=0.0, batch_size=4, epochs=2, warmup_epochs=1, lr=1e-3,
)


def micro_config(**changes):
    return ModelConfig(**{**MICRO, **changes})


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _fresh_tape():
    clear_tape()
    yield
    clear_tape()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
