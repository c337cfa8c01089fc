import pydantic
import pytest

from odoq.config import OdoqConfig, config_provider
from odoq.utils.resource_provider import ResourceProvider, resource_provider


def test_defaults(isolated_config):
    assert isolated_config == OdoqConfig()
    assert config_provider.get().alpn == "odoq/1"
    assert config_provider.get().resolver_port == 8853
    assert config_provider.get().sim_exchange_timeout_ms == 5000


def test_override_with_updates(isolated_config):
    with config_provider.override(exchange_timeout=0.5) as config:
        assert config.exchange_timeout == 0.5
        assert config.connect_timeout == isolated_config.connect_timeout
        assert config_provider.get() is config
    assert config_provider.get() is isolated_config


def test_override_restores_on_error(isolated_config):
    with pytest.raises(RuntimeError):
        with config_provider.override(OdoqConfig(default_ttl=1)):
            raise RuntimeError("boom")
    assert config_provider.get() is isolated_config


def test_override_needs_resource_or_updates_not_both(isolated_config):
    with pytest.raises(ValueError):
        with config_provider.override(OdoqConfig(), default_ttl=1):
            pass


def test_set_and_reset(isolated_config):
    config_provider.set(OdoqConfig(max_relay_slots=3))
    assert config_provider.get().max_relay_slots == 3
    config_provider.reset()
    assert config_provider.get() == OdoqConfig()


def test_config_is_validated():
    with pytest.raises(pydantic.ValidationError):
        OdoqConfig(exchange_timeout=0)
    with pytest.raises(pydantic.ValidationError):
        OdoqConfig(resolver_port=70000)


def test_provider_without_default_factory():
    provider = resource_provider(OdoqConfig)
    with pytest.raises(NotImplementedError):
        provider.get()

    provider.set(OdoqConfig(proxy_port=9000))
    assert provider.get().proxy_port == 9000


def test_field_updates_need_a_pydantic_resource():
    class NumberProvider(ResourceProvider[int]):
        def default_factory(self) -> int:
            return 1

    provider = NumberProvider()
    with provider.override(2) as value:
        assert value == 2
    assert provider.get() == 1
    with pytest.raises(TypeError):
        with provider.override(step=1):
            pass
