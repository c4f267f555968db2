import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from s2vs.augment import AugmentConfig
from s2vs.train import TrainConfig, init_model
from s2vs.video import CorpusSpec, generate_synthetic_corpus

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_corpus():
    return generate_synthetic_corpus(CorpusSpec(num_videos=8, duration_range=(6, 10), motif_count=2, seed=3,
                                                frame_size=(48, 64)))


@pytest.fixture(scope="session")
def small_cfg():
    return TrainConfig(iterations=6, batch_videos=3, lr=1e-3, warmup_iters=2, log_every=1,
                       augment=AugmentConfig(T_B=8, H_B=32))


@pytest.fixture
def small_model(small_corpus, small_cfg):
    return init_model(small_corpus, small_cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    lines = getattr(acceptance, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
