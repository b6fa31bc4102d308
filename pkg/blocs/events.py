import logging
from typing import Any, Callable, Dict, List

logger = logging.getLogger(__name__)

__all__ = ["Events"]

class Events:
    """
    A tiny synchronous callback registry.

    Solvers fire "iteration" after every outer iteration (with the
    IterationRecord) and "finished" once they return (with the
    ConvergenceTrace). Callbacks run in registration order, in the solver's
    thread.
    """

    def __init__(self) -> None:
        self._callbacks: Dict[str, List[Callable[..., None]]] = {}

    def register(self, event: str, callback: Callable[..., None]) -> None:
        self._callbacks.setdefault(event, []).append(callback)
        logger.debug(f"{callback!r} listens to {event!r}")

    def fire(self, event: str, *args: Any, **kwargs: Any) -> None:
        for callback in self._callbacks.get(event, []):
            callback(*args, **kwargs)
