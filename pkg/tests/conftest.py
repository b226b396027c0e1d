from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    max_examples=50,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture
def config():
    from unisup.datamodel import load_default_config

    return load_default_config()


@pytest.fixture
def small_corpus():
    """A tiny deterministic corpus shared by integration-flavored tests."""
    from unisup.synthgen import SynthSpec, generate

    spec = SynthSpec(n_queries=6, items_per_query=15, dimension=16, seed=99)
    records, items, queries = generate(spec)
    return records, items, queries
