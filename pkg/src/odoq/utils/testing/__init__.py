"""Fixture builders shared by the test suite and ad hoc experiments."""

import random
import string

from odoq.resolver import ResolverState
from odoq.seal import DEFAULT_SUITE, RandomSource, generate_keypair
from odoq.zone import load_zone

__all__ = [
    "EXAMPLE_ZONE_TEXT",
    "random_domain",
    "random_domains",
    "resolver_state",
    "seeded_random",
]

EXAMPLE_ZONE_TEXT = """\
# name type address [ttl]
example.com A 10.0.2.5 300
www.example.com A 10.0.2.6 60
www.example.com A 10.0.2.7 60
mail.example.org A 192.0.2.25
"""

_LABEL_CHARS = string.ascii_lowercase + string.digits


def seeded_random(seed: int = 0) -> RandomSource:
    return random.Random(seed).randbytes


def random_domain(rng: random.Random, min_length: int = 10) -> str:
    """A lowercase multi-label name of at least `min_length` characters.

    Long names keep accidental substring matches in blindness checks unlikely.
    """
    labels = []
    while len(".".join(labels)) < min_length or len(labels) < 2:
        size = rng.randint(3, 12)
        labels.append("".join(rng.choice(_LABEL_CHARS) for _ in range(size)))
    return ".".join(labels)


def random_domains(count: int, seed: int = 0, min_length: int = 10) -> list[str]:
    rng = random.Random(seed)
    domains: list[str] = []
    while len(domains) < count:
        domain = random_domain(rng, min_length)
        if domain not in domains:
            domains.append(domain)
    return domains


def resolver_state(
    zone_text: str = EXAMPLE_ZONE_TEXT, seed: int = 0, key_id: int = 0
) -> ResolverState:
    keypair = generate_keypair(DEFAULT_SUITE, key_id, seeded_random(seed))
    return ResolverState(current=keypair, zone=load_zone(zone_text))
