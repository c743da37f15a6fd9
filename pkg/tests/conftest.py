import pathlib

import pytest
from hypothesis import HealthCheck, settings

from gbsde.coeffexpr import load_problem, problem_from_dict

settings.register_profile(
    "ci",
    max_examples=200,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")

PROBLEMS_DIR = pathlib.Path(__file__).resolve().parent.parent / "problems"


@pytest.fixture(scope="session")
def gheat_problem():
    return load_problem(PROBLEMS_DIR / "gheat.json")


@pytest.fixture(scope="session")
def gheat_lower_problem():
    return load_problem(PROBLEMS_DIR / "gheat_lower.json")


@pytest.fixture(scope="session")
def quadratic_problem():
    return load_problem(PROBLEMS_DIR / "quadratic_classical.json")


@pytest.fixture(scope="session")
def obstacle_problem():
    return load_problem(PROBLEMS_DIR / "call_obstacle.json")


def make_problem(**overrides):
    """Small band-heat problem document, overridable per test."""
    doc = {
        "T": 1.0,
        "sigma_low": 0.5,
        "sigma_high": 1.0,
        "b": "0",
        "h": "0",
        "sigma": "1",
        "f": "0",
        "g": "0",
        "phi": "x^2",
        "domain": [-12.0, 12.0],
        "x0": 0.0,
        "bounds": {"L_y": 0.0, "L_z": 0.0, "M_0": 145.0, "N_0": 0.0, "m": 2},
    }
    bounds = dict(doc["bounds"], **overrides.pop("bounds", {}))
    doc.update(overrides)
    doc["bounds"] = bounds
    return problem_from_dict(doc)
