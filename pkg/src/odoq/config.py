from pydantic import BaseModel, ConfigDict, Field

from odoq.utils.resource_provider import resource_provider

__all__ = ["OdoqConfig", "config_provider"]


class OdoqConfig(BaseModel):
    """Operational defaults shared by the cores, the transport and the simulator."""

    model_config = ConfigDict(frozen=True)

    alpn: str = "odoq/1"
    exchange_timeout: float = Field(default=5.0, gt=0)
    connect_timeout: float = Field(default=5.0, gt=0)
    idle_timeout: float = Field(default=30.0, gt=0)
    resolver_port: int = Field(default=8853, ge=1, le=65535)
    proxy_port: int = Field(default=8443, ge=1, le=65535)
    max_relay_slots: int = Field(default=4096, ge=1)
    nonce_cache_capacity: int = Field(default=65536, ge=1)
    default_ttl: int = Field(default=300, ge=0, lt=2**31)
    sim_exchange_timeout_ms: int = Field(default=5000, ge=1)


config_provider = resource_provider(
    type_=OdoqConfig,
    default_factory=OdoqConfig,
    doc_str="Provides the active OdoqConfig.",
)
