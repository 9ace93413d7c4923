"""Shared fixtures: recorded-response artifacts, small datasets, a live
guest-runner handle."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
import pytest

from ibl.dataset import CONTINUOUS, Dataset, generate_pseudo, round_features
from ibl.guest import GuestRunner

FIXTURES = Path(__file__).parent / "fixtures"


def response_text(name: str) -> str:
    return (FIXTURES / "responses" / f"{name}.txt").read_text(encoding="utf-8")


def expr_text(name: str) -> str:
    return (FIXTURES / "expr" / f"{name}.txt").read_text(encoding="utf-8")


def feature_names_32() -> tuple[str, ...]:
    """The feature set of the recorded 32-term linear scorer, recovered from
    the artifact itself so tests never drift from it."""
    text = response_text("titanic_linear_sigmoid")
    names = re.findall(r"row\['([A-Za-z_]+)'\]", text)
    return tuple(dict.fromkeys(names))  # dedupe, keep first-seen order


@pytest.fixture(scope="session")
def feat32() -> tuple[str, ...]:
    names = feature_names_32()
    assert len(names) == 32
    return names


@pytest.fixture()
def pseudo_ds() -> Dataset:
    return round_features(generate_pseudo(60, seed=7), 3)


@pytest.fixture()
def tiny_ds() -> Dataset:
    rows = np.array([
        [1.0, -1.0, 2.0, 0.0],
        [0.4, 0.2, 0.0, 0.0],
        [-1.0, -2.0, -3.0, -4.0],
        [0.0, 0.0, 0.0, 0.0],
    ])
    labels = np.array([1, 1, 0, 0])
    return Dataset(("a", "b", "c", "d"), rows, labels, (CONTINUOUS,) * 4)


@pytest.fixture(scope="session")
def runner():
    handle = GuestRunner()
    yield handle
    handle.close()
