# skelfit/log.py
import logging
import os
import sys
import threading

from .config import config
from .thread_context import get_context

LINE_FORMAT = "[%(asctime)s][%(run_id)s] %(levelname)s: %(message)s"
MAIN_RUN = "MAIN"


def current_run_id() -> str:
    return get_context("run_id") or MAIN_RUN


class RunFormatter(logging.Formatter):
    """Stamps ``run_id`` on every record; colors by level when writing to a terminal"""

    PALETTE = {
        logging.DEBUG: "\033[36m",
        logging.WARNING: "\033[33m",
        logging.ERROR: "\033[31m",
        logging.CRITICAL: "\033[41m",
        "METRIC": "\033[32m",
    }
    RESET = "\033[0m"

    def __init__(self, use_color: bool = False):
        super().__init__(LINE_FORMAT)
        self.use_color = use_color

    def format(self, record):
        record.run_id = getattr(record, "run_id", None) or current_run_id()
        if getattr(record, "is_metric", False):
            record.levelname = "METRIC"
        text = super().format(record)
        if not self.use_color:
            return text
        color = self.PALETTE.get(record.levelname) or self.PALETTE.get(record.levelno)
        return f"{color}{text}{self.RESET}" if color else text


class SkelfitLogger(logging.Logger):
    """
    Positional arguments are joined with spaces instead of %-formatted:
      log.info("loaded", path)
      log.metric("epoch", 12, "total=0.5")
    """

    def _log(self, level, msg, args, exc_info=None, extra=None, stack_info=False, stacklevel=1):
        if args:
            msg = " ".join(str(part) for part in (msg, *args))
        extra = dict(extra or {}, run_id=current_run_id())
        super()._log(level, msg, (), exc_info=exc_info, extra=extra, stack_info=stack_info, stacklevel=stacklevel)

    def metric(self, msg, *args, **kwargs):
        """An optimization progress row, shown with the METRIC level name"""
        kwargs["extra"] = dict(kwargs.get("extra") or {}, is_metric=True)
        self.info(msg, *args, **kwargs)


logging.setLoggerClass(SkelfitLogger)

log = logging.getLogger("skelfit")
log.setLevel(config.get("log_level", "INFO").upper())
log.propagate = False

if not log.handlers:
    _console = logging.StreamHandler(sys.stderr)
    _console.setFormatter(RunFormatter(use_color=sys.stderr.isatty() and not os.getenv("CI")))
    log.addHandler(_console)


class _SameRun(logging.Filter):
    def __init__(self, run_id):
        super().__init__()
        self.run_id = run_id

    def filter(self, record):
        return getattr(record, "run_id", MAIN_RUN) == self.run_id


# batch jobs log from worker threads, one file per run_id
_run_files = {}
_run_files_lock = threading.Lock()


def add_run_file_handler(run_id, log_dir="logs"):
    """Mirrors every record of ``run_id`` into ``<log_dir>/<run_id>.log``"""
    os.makedirs(log_dir, exist_ok=True)
    handler = logging.FileHandler(os.path.join(log_dir, f"{run_id}.log"), mode="w", encoding="utf-8")
    handler.setFormatter(RunFormatter())
    handler.addFilter(_SameRun(run_id))
    with _run_files_lock:
        stale = _run_files.pop(run_id, None)
        if stale is not None:
            log.removeHandler(stale)
            stale.close()
        _run_files[run_id] = handler
        log.addHandler(handler)


def remove_run_file_handler():
    """Closes the log file of the run bound to the calling thread"""
    run_id = get_context("run_id")
    if not run_id:
        return
    with _run_files_lock:
        handler = _run_files.pop(run_id, None)
    if handler is not None:
        log.removeHandler(handler)
        handler.close()
