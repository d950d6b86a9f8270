from __future__ import annotations

import numpy as np
import pytest

import flowsteer as fs


@pytest.fixture(scope="session")
def cellular():
    return fs.builtin_field("cellular")


@pytest.fixture(scope="session")
def rotation():
    return fs.builtin_field("rotation")


@pytest.fixture(scope="session")
def unit_constant():
    return fs.builtin_field("constant", c=[1.0, 0.0])


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def write_yaml(path, text):
    path.write_text(text)
    return str(path)
