import os
from pathlib import Path

import hypothesis
import numpy as np
import pytest

from chaosml.data import generate_blobs, load_iris_bundled, zscore

hypothesis.settings.register_profile("default", deadline=None, max_examples=40)
hypothesis.settings.register_profile("fast", deadline=None, max_examples=8)
hypothesis.settings.register_profile("thorough", deadline=None, max_examples=300)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

REPO = Path(__file__).resolve().parents[1]


@pytest.fixture(scope="session")
def iris():
    return zscore(load_iris_bundled())


@pytest.fixture(scope="session")
def blobs():
    return zscore(generate_blobs((60, 20, 15, 10), n_features=6, separation=1.0, seed=3))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    """Record one acceptance line; the lines are repeated in the terminal summary."""

    def record(label: str, ok: bool | None, detail: str) -> None:
        status = "UNAVAILABLE" if ok is None else ("PASS" if ok else "FAIL")
        line = f"[{status}] {label}: {detail}"
        _CRITERIA.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
