import numpy as np
import pytest

from spdq.config import EncoderConfig, Hyperparams
from spdq.data import generate_synthetic, split

# lines collected by the acceptance module, echoed once at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def toy_dataset():
    return split(generate_synthetic(4, 120, dims=(12, 8), latent_dim=6, seed=3), seed=3)


@pytest.fixture
def toy_hyper():
    return Hyperparams(M=2, K_d=4, batch_size=16, outer_iters=3, seed=5)


@pytest.fixture
def toy_encoder():
    return EncoderConfig(hidden=(10,), d_s=6, d_p=3)
