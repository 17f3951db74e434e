import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from itemforge.bundle import import_bundle, make_bundle
from itemforge.kernel import Kernel, KernelConfig

from fixtures import fixture_bundle_entries


@pytest.fixture
def kernel(tmp_path):
    return Kernel.create(tmp_path / "store")


@pytest.fixture
def alice(kernel):
    return kernel.agents.add("alice", "alice-pw", ["operator", "designer", "admin"])


@pytest.fixture
def bob(kernel):
    return kernel.agents.add("bob", "bob-pw", ["operator"])


@pytest.fixture
def loaded(kernel, alice):
    """Kernel with the standard fixture bundle imported."""
    import_bundle(kernel, make_bundle(fixture_bundle_entries()), alice.agent_id)
    return kernel


def desc_of(kernel, name: str) -> str:
    return kernel.store.resolve_path(f"/desc/{name}")


@pytest.fixture
def product_desc(loaded):
    return desc_of(loaded, "ProductDesc")


@pytest.fixture
def checked_desc(loaded):
    return desc_of(loaded, "CheckedProductDesc")
