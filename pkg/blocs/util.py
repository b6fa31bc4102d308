import asyncio
import datetime
import functools
from typing import Any, Callable

import numpy as np

__all__ = ["asyncify", "relative_change", "step_change", "plural", "format_delta"]

async def asyncify(func: Callable[..., Any], *args: Any, **kwargs: Any) -> Any:
    func_with_args = functools.partial(func, *args, **kwargs)
    loop = asyncio.get_running_loop()
    return await loop.run_in_executor(None, func_with_args)

# Stopping criteria

def relative_change(previous: np.ndarray, current: np.ndarray) -> float:
    """
    The stopping quantity used by all solvers:

    | ||previous||_2 - ||current||_2 | / ||previous||_2

    Note that this is a difference of norms, not the norm of the difference.
    If previous is zero, the absolute norm of current is returned instead.
    """

    norm_previous = float(np.linalg.norm(previous))
    norm_current = float(np.linalg.norm(current))
    if norm_previous == 0:
        return norm_current
    return abs(norm_previous - norm_current) / norm_previous

def step_change(previous: np.ndarray, current: np.ndarray) -> float:
    """
    ||current - previous||_2 / ||previous||_2, logged next to
    relative_change() for diagnostics.
    """

    norm_previous = float(np.linalg.norm(previous))
    if norm_previous == 0:
        return float(np.linalg.norm(current))
    return float(np.linalg.norm(current - previous)) / norm_previous

# Other formatting

def plural(
        number: int,
        if_plural: str = "s",
        if_singular: str = ""
        ) -> str:
    if number in [1, -1]:
        return if_singular
    else:
        return if_plural

def format_delta(delta: datetime.timedelta) -> str:
    seconds = delta.total_seconds()
    negative = seconds < 0
    seconds = abs(seconds)

    minutes = int(seconds // 60)
    seconds -= minutes * 60

    hours = minutes // 60
    minutes -= hours * 60

    text: str

    if hours > 0:
        text = f"{hours}h {minutes}m {seconds:.1f}s"
    elif minutes > 0:
        text = f"{minutes}m {seconds:.1f}s"
    else:
        text = f"{seconds:.2f}s"

    if negative:
        text = "- " + text

    return text
