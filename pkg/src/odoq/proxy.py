"""The oblivious relay.

The proxy sees who is asking but only ever handles opaque sealed payloads. Nothing
here imports the seal module: the proxy holds no keys and opens nothing.
"""

import itertools
import logging
import threading
import typing
from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, field_validator

from odoq.config import config_provider
from odoq.envelope import (
    Envelope,
    EnvelopeError,
    MsgType,
    WrongType,
    decode_envelope,
    strip_target,
)

__all__ = [
    "Deny",
    "DenyReason",
    "Drop",
    "Forward",
    "ForwardDecision",
    "Proxy",
    "ProxyConfig",
    "RelayDecision",
    "RelaySlot",
    "RelayToClient",
    "UnknownSlot",
]

logger = logging.getLogger(__name__)


class UnknownSlot(KeyError):
    pass


class DenyReason(str, Enum):
    NOT_ALLOWED = "NotAllowed"
    MALFORMED = "Malformed"
    WRONG_TYPE = "WrongType"
    BUSY = "Busy"
    TIMEOUT = "Timeout"


def _default_max_slots() -> int:
    return config_provider.get().max_relay_slots


class ProxyConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    allowed_resolvers: frozenset[str]
    max_slots: int = Field(default_factory=_default_max_slots, ge=1)

    @field_validator("allowed_resolvers")
    @classmethod
    def _non_empty(cls, value: frozenset[str]) -> frozenset[str]:
        if not value:
            raise ValueError("At least one allowed resolver is required")
        return value


class RelaySlot(BaseModel):
    """Routing state for one client query in flight.

    `client_channel` is whatever handle the driver uses to reach the client back
    (a simulator connection, a QUIC stream); the proxy never looks inside it.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    slot_id: int
    client_channel: typing.Any
    resolver_uri: str
    awaiting_retry: bool = False


class Forward(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    resolver_uri: str
    envelope: Envelope
    slot: RelaySlot


class Deny(BaseModel):
    model_config = ConfigDict(frozen=True)

    reason: DenyReason
    detail: str = ""


class RelayToClient(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    client_channel: typing.Any
    envelope: Envelope
    slot_retired: bool


class Drop(BaseModel):
    model_config = ConfigDict(frozen=True)

    detail: str = ""


ForwardDecision = Forward | Deny
RelayDecision = RelayToClient | Drop


class Proxy:
    """Slot table plus the forwarding and relay decisions around it.

    Safe to call from concurrent drivers, the slot table is the only shared state.
    """

    def __init__(self, config: ProxyConfig):
        self.config = config
        self._slots: dict[int, RelaySlot] = {}
        self._slot_ids = itertools.count(1)
        self._lock = threading.Lock()

    @property
    def live_slots(self) -> int:
        with self._lock:
            return len(self._slots)

    def get_slot(self, slot_id: int) -> RelaySlot:
        with self._lock:
            try:
                return self._slots[slot_id]
            except KeyError:
                raise UnknownSlot(slot_id) from None

    def on_client_query(
        self, e: Envelope | bytes, client_channel: typing.Any
    ) -> ForwardDecision:
        if isinstance(e, bytes):
            try:
                e = decode_envelope(e)
            except EnvelopeError as err:
                return self._deny(DenyReason.MALFORMED, str(err))
        try:
            stripped = strip_target(e)
        except WrongType as err:
            return self._deny(DenyReason.WRONG_TYPE, str(err))

        resolver_uri = e.target_uri
        if resolver_uri not in self.config.allowed_resolvers:
            return self._deny(DenyReason.NOT_ALLOWED, repr(resolver_uri))

        with self._lock:
            slot = self._take_retry_slot(client_channel, resolver_uri)
            if slot is None:
                if len(self._slots) >= self.config.max_slots:
                    slot = None
                else:
                    slot = RelaySlot(
                        slot_id=next(self._slot_ids),
                        client_channel=client_channel,
                        resolver_uri=resolver_uri,
                    )
                    self._slots[slot.slot_id] = slot
        if slot is None:
            return self._deny(DenyReason.BUSY, f"{self.config.max_slots} live slots")

        logger.debug(f"Forwarding slot {slot.slot_id} to {resolver_uri}")
        return Forward(resolver_uri=resolver_uri, envelope=stripped, slot=slot)

    def on_resolver_reply(self, slot_id: int, e: Envelope | bytes) -> RelayDecision:
        """Route a resolver reply back to the client that owns `slot_id`.

        Raises UnknownSlot if the slot was never issued or is already retired.
        """
        with self._lock:
            slot = self._slots.get(slot_id)
            if slot is None:
                raise UnknownSlot(slot_id)
            if isinstance(e, bytes):
                try:
                    e = decode_envelope(e)
                except EnvelopeError as err:
                    del self._slots[slot_id]
                    return self._drop(slot_id, f"undecodable reply: {err}")

            if e.msg_type == MsgType.OBLIVIOUS_RESPONSE:
                del self._slots[slot_id]
                retired = True
            elif e.msg_type == MsgType.KEY_UPDATE:
                # one parked slot per client and resolver, the newest wins
                self._retire_parked(slot.client_channel, slot.resolver_uri)
                self._slots[slot_id] = slot.model_copy(update={"awaiting_retry": True})
                retired = False
            else:
                del self._slots[slot_id]
                return self._drop(slot_id, f"unexpected {e.msg_type.name}")

        logger.debug(f"Relaying {e.msg_type.name} on slot {slot_id}")
        return RelayToClient(
            client_channel=slot.client_channel, envelope=e, slot_retired=retired
        )

    def on_resolver_timeout(self, slot_id: int) -> Deny:
        with self._lock:
            if self._slots.pop(slot_id, None) is None:
                raise UnknownSlot(slot_id)
        return self._deny(DenyReason.TIMEOUT, f"slot {slot_id}")

    def release(self, client_channel: typing.Any) -> int:
        """Retire every slot owned by a client channel that went away."""
        with self._lock:
            gone = [
                slot_id
                for slot_id, slot in self._slots.items()
                if slot.client_channel is client_channel
            ]
            for slot_id in gone:
                del self._slots[slot_id]
        return len(gone)

    def _take_retry_slot(
        self, client_channel: typing.Any, resolver_uri: str
    ) -> RelaySlot | None:
        for slot in self._slots.values():
            if (
                slot.awaiting_retry
                and slot.client_channel is client_channel
                and slot.resolver_uri == resolver_uri
            ):
                slot = slot.model_copy(update={"awaiting_retry": False})
                self._slots[slot.slot_id] = slot
                return slot
        return None

    def _retire_parked(self, client_channel: typing.Any, resolver_uri: str) -> None:
        parked = [
            slot.slot_id
            for slot in self._slots.values()
            if slot.awaiting_retry
            and slot.client_channel is client_channel
            and slot.resolver_uri == resolver_uri
        ]
        for slot_id in parked:
            del self._slots[slot_id]
            logger.debug(f"Retired unused retry slot {slot_id}")

    def _deny(self, reason: DenyReason, detail: str) -> Deny:
        logger.warning(f"Denied query: {reason.value} {detail}")
        return Deny(reason=reason, detail=detail)

    def _drop(self, slot_id: int, detail: str) -> Drop:
        logger.warning(f"Dropped reply on slot {slot_id}: {detail}")
        return Drop(detail=detail)
