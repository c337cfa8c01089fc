import typing

import pytest

from odoq.cli.proxy import start_proxy
from odoq.cli.resolver import start_resolver
from odoq.proxy import Proxy, ProxyConfig
from odoq.resolver import ResolverState
from odoq.transport import ChannelPool, EndpointAddr, Listener


class Stack(typing.NamedTuple):
    state: ResolverState
    resolver: Listener
    proxy: Listener
    proxy_core: Proxy


@pytest.fixture(scope="function")
async def odoq_stack(resolver_state, test_pki):
    """A resolver and a proxy on loopback, the proxy allowing only that resolver."""
    loopback = EndpointAddr(host="127.0.0.1", port=0)
    resolver = await start_resolver(resolver_state, loopback, test_pki.identity)
    async with resolver:
        proxy_core = Proxy(ProxyConfig(allowed_resolvers=frozenset({resolver.uri})))
        async with ChannelPool(ca_data=test_pki.ca_pem) as pool:
            proxy = await start_proxy(proxy_core, loopback, test_pki.identity, pool)
            async with proxy:
                yield Stack(resolver_state, resolver, proxy, proxy_core)


@pytest.fixture(scope="function")
def ca_file(test_pki, tmp_path):
    return test_pki.write_ca(tmp_path / "ca.pem")
