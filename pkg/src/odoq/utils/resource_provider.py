import logging
import threading
from contextlib import contextmanager
from typing import Any, Callable, Generator, Generic, Type, TypeVar

from pydantic import BaseModel

__all__ = ["ResourceProvider", "resource_provider"]

logger = logging.getLogger(__name__)


_ResourceType = TypeVar("_ResourceType")


class ResourceProvider(Generic[_ResourceType]):
    """Process wide holder of a single shared resource (e.g. the active config).

    The resource is created lazily by `default_factory` on first `get()`. Access is
    guarded by a lock since the transport servers may call in from worker threads.
    """

    def __init__(self):
        self._resource: _ResourceType | None = None
        self._lock = threading.RLock()

    def get(self) -> _ResourceType:
        with self._lock:
            if self._resource is None:
                self._resource = self.default_factory()
            return self._resource

    def set(self, resource: _ResourceType) -> None:
        with self._lock:
            self._resource = resource

    def reset(self) -> None:
        """Drop the current resource, the next `get()` rebuilds the default."""
        with self._lock:
            self._resource = None

    def default_factory(self) -> _ResourceType:
        raise NotImplementedError(
            f"{self.__class__.__name__} does not implement a default_factory"
        )

    @contextmanager
    def override(
        self,
        resource: _ResourceType | None = None,
        context: str | None = None,
        **updates: Any,
    ) -> Generator[_ResourceType, None, None]:
        """Temporarily swap the resource.

        Either pass a full replacement `resource`, or keyword `updates` which are
        applied to a copy of the current (pydantic model) resource.
        """
        with self._lock:
            initial = self._resource
            if resource is None:
                current = self.get()
                if not isinstance(current, BaseModel):
                    raise TypeError(
                        "Field updates require a pydantic model resource, got "
                        f"{type(current)}"
                    )
                resource = current.model_copy(update=updates)  # type: ignore
            elif updates:
                raise ValueError("Pass either a resource or field updates, not both.")
            logger.debug(f"Overriding resource: {resource!r}, context: {context}")
            self._resource = resource
        try:
            yield resource  # type: ignore
        finally:
            with self._lock:
                logger.debug(f"Restoring resource: {initial!r}, context: {context}")
                self._resource = initial


def resource_provider(
    type_: Type[_ResourceType],
    default_factory: Callable[[], _ResourceType] | None = None,
    doc_str: str = "",
) -> ResourceProvider[_ResourceType]:
    """Functional creation of a ResourceProvider for a specific type.

    Example:

    ```python
    provider = resource_provider(OdoqConfig, default_factory=OdoqConfig)
    with provider.override(exchange_timeout=1.0):
        assert provider.get().exchange_timeout == 1.0
    ```
    """

    class FunctionalResourceProvider(ResourceProvider[type_]):
        __doc__ = doc_str

        def default_factory(self) -> type_:  # type: ignore
            if default_factory is None:
                raise NotImplementedError(
                    f"{self.__class__.__name__} does not implement a default_factory"
                )
            return default_factory()

    return FunctionalResourceProvider()
