# File: skelfit/guard.py
from functools import wraps

from skelfit.config import config
from skelfit.exception import SkelfitException
from skelfit.log import log


def _describe(context_fn, args, kwargs, error) -> str:
    if context_fn is None:
        return str(error)
    try:
        prefix = context_fn(*args, **kwargs)
    except Exception:
        prefix = None
    return f"{prefix}: {error}" if prefix else str(error)


def skelfit_guard(error_cls, context_fn=None):
    """
    Turns stray exceptions of the wrapped function into ``error_cls``.

    Exceptions that are already a ``SkelfitException`` keep their type, so a validation
    failure deep inside a pipeline still surfaces as a validation failure.
    ``context_fn`` receives the call's arguments and returns a prefix for the message,
    typically the file path being processed.
    """
    def decorator(fn):
        @wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except SkelfitException:
                raise
            except Exception as e:
                message = _describe(context_fn, args, kwargs, e)
                log.error(f"{fn.__qualname__}: {message}")
                if config.get_bool("debug", False):
                    log.debug("traceback", exc_info=True)
                raise error_cls(message) from e

        return wrapper
    return decorator
