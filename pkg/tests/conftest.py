"""Shared fixtures: seeded state, tiny ensemble members and small synthetic sets."""

import numpy as np
import pytest

from src.backbones import BackboneSpec
from src.ensemble import MemberSpec, build_member
from src.seeding import DEFAULT_SEED, set_seed
from src.synthetic import generate_synthetic_set


@pytest.fixture(autouse=True)
def root_seed():
    set_seed(DEFAULT_SEED)
    yield DEFAULT_SEED


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_spec():
    return MemberSpec(backbone=BackboneSpec(arch="tiny_test"))


@pytest.fixture
def tiny_members(tiny_spec):
    return [build_member(tiny_spec, f"init/member{i}") for i in range(2)]


@pytest.fixture(scope="session")
def synthetic_frames():
    """12 frames of 32 x 32: 6 bleeding then 6 non-bleeding."""
    return generate_synthetic_set(12, DEFAULT_SEED, size=32)
