import numpy as np
import pytest

from riskrec.datagen import GenConfig, feature_matrix, generate_portfolio
from riskrec.treatments import (
    assign_levels,
    discretize,
    fit_propensity,
    level_dataset,
    overlap_subset,
)


@pytest.fixture(scope="session")
def small_portfolio():
    return generate_portfolio(GenConfig(n_customers=3000, seed=11))


@pytest.fixture(scope="session")
def level_data(small_portfolio):
    """Overlap dataset for level 6 of the small portfolio."""
    frame, _ = small_portfolio
    dose = frame["observed_dosage"].to_numpy()
    part = discretize(dose, GenConfig().cut_points)
    raw = level_dataset(feature_matrix(frame), assign_levels(dose, part),
                        frame["ep_m6"].to_numpy(), 6)
    return overlap_subset(raw, fit_propensity(raw))


_ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def acceptance_results():
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
