"""Shared fixtures: algebras, reference forms, seeded sampling helpers."""

from __future__ import annotations

import sys
import time

import numpy as np
import pytest

SUITE_BUDGET_SECONDS = 120.0


def pytest_configure(config):
    config._suite_started = time.perf_counter()


def pytest_sessionfinish(session, exitstatus):
    """Enforce the suite wall-clock budget whenever the gate is in the run."""
    gated = any(
        "test_acceptance" in getattr(item, "nodeid", "")
        for item in getattr(session, "items", [])
    )
    if not gated:
        return
    elapsed = time.perf_counter() - session.config._suite_started
    ok = elapsed < SUITE_BUDGET_SECONDS
    verdict = "PASS" if ok else "FAIL"
    sys.stderr.write(
        f"\nACCEPTANCE 12 {verdict} suite runtime "
        f"({elapsed:.1f}s of {SUITE_BUDGET_SECONDS:.0f}s budget)\n"
    )
    if not ok:
        session.exitstatus = 1

from g2flow import (
    CoclosedState,
    Form,
    G2Structure,
    load_algebra,
    standard_phi,
    standard_psi,
)


@pytest.fixture(scope="session")
def torus():
    return load_algebra("torus")


@pytest.fixture(scope="session")
def ee1():
    return load_algebra("ee1")


@pytest.fixture(scope="session")
def ee2():
    return load_algebra("ee2")


@pytest.fixture(scope="session")
def phi_bar():
    return standard_phi()


@pytest.fixture(scope="session")
def psi_bar():
    return standard_psi()


@pytest.fixture()
def rng():
    return np.random.default_rng(20260823)


def random_spd(rng, scale=0.3):
    """Random symmetric positive-definite 7x7 matrix near the identity."""
    a = rng.standard_normal((7, 7)) * scale
    return np.eye(7) + a @ a.T


def random_positive_phi(rng, scale=0.1):
    """Random positive 3-form: a small perturbation of the reference form."""
    return Form(3, standard_phi().coeffs + scale * rng.standard_normal(35))


def random_form(rng, degree, scale=1.0):
    from g2flow.exterior import DIMS

    return Form(degree, scale * rng.standard_normal(DIMS[degree]))


def coclosed_sample(L, rng, magnitude=0.25, max_halvings=40):
    """Positivity-validated random coclosed 4-form near the reference one.

    Draws a unit direction in the closed-4-form subspace and halves the
    magnitude until Newton recovery from the reference 3-form succeeds.
    """
    from g2flow.errors import PositivityError, RecoveryError
    from g2flow.flows import coclosed_directions

    basis = np.column_stack([f.coeffs for f in coclosed_directions(L)])
    z = rng.standard_normal(basis.shape[1])
    direction = basis @ z
    direction /= np.linalg.norm(direction)
    seed = standard_phi()
    base = standard_psi().coeffs
    scale = magnitude
    for _ in range(max_halvings + 1):
        candidate = Form(4, base + scale * direction)
        try:
            return CoclosedState.from_psi(candidate, seed=seed)
        except (PositivityError, RecoveryError):
            scale *= 0.5
    raise AssertionError("no positive coclosed sample found")
