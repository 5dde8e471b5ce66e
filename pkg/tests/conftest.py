import numpy as np
import pytest

from homotl.data import split_target
from homotl.offline import JdaConfig, offline_stage
from homotl.synthetic import SyntheticSpec, gen_synthetic


def pytest_terminal_summary(terminalreporter):
    # PASS/FAIL lines recorded by the acceptance module
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[key])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_task():
    """Two shifted sources and a target split, 6 features, 3 classes."""
    spec = SyntheticSpec(num_sources=2, dim=6, classes=3, per_class_count=40, shift=2.0,
                         rotation=1.0, noise_std=1.0, seed=3, target_size=150,
                         rotation_planes=2)
    sources, target = gen_synthetic(spec)
    split = split_target(target, 0.3, 3)
    art = offline_stage(sources, split.unlabeled, JdaConfig(6, 3, 1.0), 5.0, seed=3)
    return sources, split, art
