"""Shared fixtures: session-scoped feedback laws for the configurations that
several test modules probe, so each synthesis pipeline runs once."""

import pytest

from fraclqr import LqModel, synthesize


@pytest.fixture(scope="session")
def ref_model():
    """Reference stochastic configuration with a discount rate that clears
    the contraction criterion (2 rho_tilde = 2.702)."""
    return LqModel(
        x0=1.0, b=0.1, c=1.0, sigma=0.5, gamma=1.0, alpha=0.75, delta=0.5, lam=3.0
    )


@pytest.fixture(scope="session")
def ref_law(ref_model):
    return synthesize(ref_model, n=256)


@pytest.fixture(scope="session")
def b0_model():
    """Delay-free drift-free configuration where many identities collapse."""
    return LqModel(
        x0=1.0, b=0.0, c=1.0, sigma=0.5, gamma=1.0, alpha=0.75, delta=0.0, lam=3.0
    )


@pytest.fixture(scope="session")
def b0_law(b0_model):
    return synthesize(b0_model, n=256)
