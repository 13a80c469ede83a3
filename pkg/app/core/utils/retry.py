import logging
from typing import Any, Callable, Optional, Tuple, Type

logger = logging.getLogger(__name__)


def retry(
    exceptions: Tuple[Type[BaseException], ...],
    tries: int = 3,
    on_exhausted: Optional[Callable[[BaseException, int], BaseException]] = None,
):
    """Re-run a callable until it stops raising ``exceptions`` or ``tries`` is spent.

    Attempts run back to back. ``on_exhausted`` may translate the last
    exception into a domain error.
    """
    def decorator(func: Callable[..., Any]):
        def wrapper(*args, **kwargs):
            attempt = 0
            while True:
                try:
                    return func(*args, **kwargs)
                except exceptions as exc:  # type: ignore
                    attempt += 1
                    if attempt >= tries:
                        logger.debug(f"{func.__name__} gave up after {attempt} attempt(s): {exc}")
                        if on_exhausted is not None:
                            raise on_exhausted(exc, attempt) from exc
                        raise
        return wrapper
    return decorator
