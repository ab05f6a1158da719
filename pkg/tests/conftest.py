"""Pytest configuration and fixtures."""

import pytest
import sys
import os

import numpy as np

# Add leebounds directory to path
sys.path.insert(
    0, os.path.abspath(os.path.join(os.path.dirname(__file__), "../leebounds"))
)

from identified_set import HalfspaceRegion
from selection_core import EmbeddedDataset, random_stream


def make_dataset(treated_outcomes, control_outcomes, n_treated=None, n_control=None):
    """
    Dataset with every listed outcome selected and extra unselected units.

    Args:
        treated_outcomes: Rows of selected treated units
        control_outcomes: Rows of selected control units
        n_treated: Total treated units (defaults to the selected count)
        n_control: Total control units (defaults to the selected count)
    """
    treated_outcomes = np.atleast_2d(np.asarray(treated_outcomes, dtype=float))
    control_outcomes = np.atleast_2d(np.asarray(control_outcomes, dtype=float))
    d = treated_outcomes.shape[1]
    n1, n0 = treated_outcomes.shape[0], control_outcomes.shape[0]
    n_treated = n1 if n_treated is None else n_treated
    n_control = n0 if n_control is None else n_control
    outcomes = np.vstack(
        [
            treated_outcomes,
            np.full((n_treated - n1, d), np.nan),
            control_outcomes,
            np.full((n_control - n0, d), np.nan),
        ]
    )
    treated = np.r_[np.ones(n_treated, bool), np.zeros(n_control, bool)]
    selected = np.r_[
        np.ones(n1, bool),
        np.zeros(n_treated - n1, bool),
        np.ones(n0, bool),
        np.zeros(n_control - n0, bool),
    ]
    return EmbeddedDataset(treated, selected, outcomes)


def scalar_dataset(treated_values, control_values, n_treated=None, n_control=None):
    """Scalar version of ``make_dataset`` taking flat value lists."""
    return make_dataset(
        np.asarray(treated_values, dtype=float)[:, None],
        np.asarray(control_values, dtype=float)[:, None],
        n_treated,
        n_control,
    )


def random_dataset(seed, n=200, d=2, retention=(0.9, 0.8)):
    """Gaussian outcomes with random assignment and arm-specific selection."""
    rng = random_stream(seed, 5)
    treated = rng.random(n) < 0.5
    treated[:2] = [True, False]
    selected = rng.random(n) < np.where(treated, retention[0], retention[1])
    selected[:2] = True
    outcomes = rng.standard_normal((n, d))
    outcomes[~selected] = np.nan
    return EmbeddedDataset(treated, selected, outcomes)


@pytest.fixture
def unit_square():
    """The square [-1, 1]^2 written with the four axis half-planes."""
    directions = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
    return HalfspaceRegion(directions, np.ones(4), np.zeros(2))


@pytest.fixture
def lee_dataset():
    """Treated outcomes {1, 2, 3, 4} with 8 treated and 8 control units."""
    return scalar_dataset([1.0, 2.0, 3.0, 4.0], [2.0, 3.0], n_treated=8, n_control=8)


@pytest.fixture
def gaussian_dataset():
    """Two-dimensional Gaussian dataset with roughly 0.89 trimming."""
    return random_dataset(seed=7, n=400, d=2)
