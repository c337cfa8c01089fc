import typing

import pytest

from odoq.config import OdoqConfig, config_provider
from odoq.resolver import ResolverState
from odoq.seal import DEFAULT_SUITE, KeyConfig, ResolverKeyPair, generate_keypair
from odoq.simnet import Sim, TopologySpec, build_topology
from odoq.simnet.report import DEFAULT_ZONE
from odoq.transport import TestPki, generate_test_pki
from odoq.utils.testing import EXAMPLE_ZONE_TEXT, seeded_random
from odoq.zone import ZoneStore, load_zone


@pytest.fixture(scope="function")
def isolated_config() -> typing.Generator[OdoqConfig, None, None]:
    """Default config for the test, changes made through the provider are undone."""
    with config_provider.override(OdoqConfig()) as config:
        yield config


@pytest.fixture(scope="session")
def example_zone_text() -> str:
    return EXAMPLE_ZONE_TEXT


@pytest.fixture(scope="function")
def example_zone(example_zone_text) -> ZoneStore:
    return load_zone(example_zone_text)


@pytest.fixture(scope="function")
def rng():
    return seeded_random(0)


@pytest.fixture(scope="session")
def resolver_keypair() -> ResolverKeyPair:
    return generate_keypair(DEFAULT_SUITE, 0, seeded_random(1))


@pytest.fixture(scope="session")
def key_config(resolver_keypair) -> KeyConfig:
    return resolver_keypair.config


@pytest.fixture(scope="function")
def resolver_state(resolver_keypair, example_zone) -> ResolverState:
    return ResolverState(current=resolver_keypair, zone=example_zone)


@pytest.fixture(scope="session")
def resolver_uri() -> str:
    return "quic://resolver:8853"


@pytest.fixture(scope="function")
def sim() -> Sim:
    """client -- proxy -- resolver (plus a direct client -- resolver link), 10ms
    per hop, serving the default single-record zone."""
    return build_topology(
        TopologySpec.chain(), zone=load_zone("\n".join(DEFAULT_ZONE)), seed=0
    )


@pytest.fixture(scope="session")
def test_pki() -> TestPki:
    return generate_test_pki(["localhost", "127.0.0.1"])
