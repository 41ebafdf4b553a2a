from __future__ import annotations

import functools

import pytest

from pbcert import templates
from pbcert.certify import DoaProblem, SafeStabilizationProblem, expand_doa, synthesize_safe_region
from pbcert.cli import ProblemSpec

ACCEPTANCE_LINES: list[str] = []


def example_spec(name: str) -> ProblemSpec:
    return ProblemSpec.from_dict(templates.template(name), source=name)


@functools.lru_cache(maxsize=None)
def synthesized(name: str):
    """Full synthesis plus default verification, shared across test modules."""
    spec = example_spec(name)
    o = spec.options
    if spec.mode == "doa":
        return expand_doa(DoaProblem(spec.field.drift(), spec.V, spec.gamma, o.get("cert_degree")))
    return synthesize_safe_region(SafeStabilizationProblem(spec.field, spec.V, spec.unsafe, spec.gamma,
                                                           o.get("cert_degree")))


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
