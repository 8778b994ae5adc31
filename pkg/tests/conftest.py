import os
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_mlp(rng, max_params=1000, n_out=None, activation=None):
    """A random small MLP spec with Glorot params plus a little noise on the biases."""
    from ltu.diffnum import ModelSpec, init_params

    while True:
        depth = int(rng.integers(1, 4))
        widths = [int(rng.integers(1, 6))] + [int(rng.integers(2, 12)) for _ in range(depth - 1)]
        widths.append(int(rng.integers(2, 6)) if n_out is None else n_out)
        act = activation or str(rng.choice(["tanh", "relu"]))
        spec = ModelSpec(tuple(widths), act)
        if spec.n_params <= max_params:
            break
    params = init_params(spec, rng) + 0.1 * rng.normal(size=spec.n_params)
    return spec, params


@pytest.fixture
def blob_split():
    from ltu.data import gen_blobs, make_split

    ds = gen_blobs(40, 4, 2, 0.2, 0)
    return make_split(ds, 0.1, 0.3, 0, n_test=40)


ACCEPTANCE: list[str] = []


@pytest.fixture
def criterion():
    """Records one pass/fail line per acceptance criterion."""

    def record(n, title, ok, detail):
        line = f"criterion {n} {'PASS' if ok else 'FAIL'}: {title} [{detail}]"
        ACCEPTANCE.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
