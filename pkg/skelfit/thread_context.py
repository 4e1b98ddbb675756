# File: skelfit/thread_context.py
"""Per-thread session state. The logger tags every line with the ``run_id`` bound here."""
import threading
from contextlib import contextmanager

_local = threading.local()


def get_context(key, default=None):
    return vars(_local).get(key, default)


@contextmanager
def run_session(run_id, **values):
    """Binds ``run_id`` (and any extra values) for the block, then restores what was bound before"""
    state = vars(_local)
    previous = dict(state)
    state.clear()
    state.update(values, run_id=run_id)
    try:
        yield run_id
    finally:
        state.clear()
        state.update(previous)
