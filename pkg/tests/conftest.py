"""Shared helpers for the test suite."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from openrg.algebra import BoundaryParams, ChainSpec, EtaExpansion
from openrg.manybody import ModelParams

FIXTURES = Path(__file__).parent / "fixtures"


def cplx(rng: np.random.Generator, size=None):
    return rng.normal(size=size) + 1j * rng.normal(size=size)


def random_chain(rng: np.random.Generator, L: int, eta=None) -> ChainSpec:
    eps = cplx(rng, L) + 2.0 * (np.arange(L) + 1)  # well separated, away from 0 and -eps
    return ChainSpec(tuple(eps), cplx(rng) * 0.5 if eta is None else eta)


def random_boundary(rng: np.random.Generator) -> BoundaryParams:
    v = cplx(rng, 6) * 0.5
    return BoundaryParams(*v)


def random_expansion(rng: np.random.Generator) -> EtaExpansion:
    return EtaExpansion(*(cplx(rng, 9) * 0.5))


def fixture_params(L: int, G: float = 0.8, Gamma: float = 0.3) -> ModelParams:
    return ModelParams(tuple(1 + 0.3 * j for j in range(1, L + 1)), G, Gamma)


def random_params(rng: np.random.Generator, L: int, gamma_min: float = 0.1) -> ModelParams:
    """Well separated ``z`` in [0.5, 3], ``|G|`` in [0.2, 2], ``|Gamma|`` in [gamma_min, 1]."""
    while True:
        z = np.sort(rng.uniform(0.5, 3.0, L))
        if L == 1 or np.min(np.diff(z)) > 0.15:
            break
    G = rng.choice([-1.0, 1.0]) * rng.uniform(0.2, 2.0)
    Gamma = rng.choice([-1.0, 1.0]) * rng.uniform(gamma_min, 1.0)
    return ModelParams(tuple(z), G, Gamma)


def sample_points(rng: np.random.Generator, n: int):
    return [(complex(cplx(rng)), complex(cplx(rng))) for _ in range(n)]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    """Store and print the verdict of one acceptance criterion."""
    ACCEPTANCE[number] = (bool(passed), detail)
    print(f"ACCEPTANCE {number}: {'PASS' if passed else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
