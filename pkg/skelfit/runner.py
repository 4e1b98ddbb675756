from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import os
import time
import traceback
from typing import Any, Callable, Dict, List, Optional, Tuple

import yaml

from skelfit.guard import skelfit_guard
from skelfit.log import add_run_file_handler, log, remove_run_file_handler
from skelfit.thread_context import run_session
from skelfit.config import config
from skelfit.exception import RunnerException, SchemaException
from skelfit.workbench import pipeline

# kind -> (pipeline function, required options, optional options)
JOB_KINDS: Dict[str, Tuple[Callable, Tuple[str, ...], Tuple[str, ...]]] = {
    "fit": (
        lambda o: pipeline.run_fit(o["shape"], o["obs"], o["out"], config_path=o.get("config")),
        ("shape", "obs", "out"), ("config",),
    ),
    "eval": (
        lambda o: pipeline.evaluate(
            o["pred"], o["gt"], with_scale_search=bool(o.get("scale_search", False)),
            resolution=int(o.get("resolution", 64)), config_path=o.get("config"),
        ),
        ("pred", "gt"), ("scale_search", "resolution", "config"),
    ),
    "reanimate": (
        lambda o: pipeline.run_reanimate(
            o["shape"], o["target"], o["out"], config_path=o.get("config"), playback_dir=o.get("playback"),
        ),
        ("shape", "target", "out"), ("config", "playback"),
    ),
    "synth": (
        lambda o: pipeline.run_synth(o["shape"], o["camera"], o["out"], poses_path=o.get("poses")),
        ("shape", "camera", "out"), ("poses",),
    ),
    "retrieve": (
        lambda o: pipeline.retrieve(o["index"], o["query"], int(o.get("k", 5))),
        ("index", "query"), ("k",),
    ),
}
_COMMON_KEYS = {"kind", "name", "enabled"}


@dataclass
class JobResult:
    name: str
    kind: str
    status: str          # passed | failed | skipped
    duration: float = 0.0
    value: Any = None
    error_message: Optional[str] = None


class Runner:
    def __init__(self, report=None):
        self.report = report

    def _normalized_path(self, target):
        return target.replace('\\', '/').replace('//', '/')

    def _check_entry(self, index, entry):
        if not isinstance(entry, dict):
            raise SchemaException("expected a mapping", field=f"jobs[{index}]")
        kind = entry.get("kind")
        if kind not in JOB_KINDS:
            raise SchemaException(f"unknown kind {kind!r}, expected one of {sorted(JOB_KINDS)}", field=f"jobs[{index}].kind")
        _, required, optional = JOB_KINDS[kind]
        missing = [key for key in required if key not in entry]
        if missing:
            raise SchemaException("missing option", field=f"jobs[{index}].{missing[0]}")
        unknown = sorted(set(entry) - _COMMON_KEYS - set(required) - set(optional))
        if unknown:
            raise SchemaException("unknown option", field=f"jobs[{index}].{unknown[0]}")

    def _resolve(self, entry, project_root):
        """Relative file options resolve against the project root"""
        options = dict(entry)
        for key, value in entry.items():
            if key in _COMMON_KEYS or not isinstance(value, str):
                continue
            options[key] = os.path.join(project_root, self._normalized_path(value))
        return options

    def run_job(self, index, entry, project_root) -> JobResult:
        kind = entry["kind"]
        name = str(entry.get("name") or f"{kind}-{index}")
        if not entry.get("enabled", True):
            log.info(f"Skipping disabled job: {name}")
            return JobResult(name, kind, "skipped")

        with run_session(name, kind=kind):
            add_run_file_handler(name, config.get("log_dir", "logs"))
            start = time.time()
            try:
                log.info(f"Running {kind} job: {name}")
                value = JOB_KINDS[kind][0](self._resolve(entry, project_root))
                return JobResult(name, kind, "passed", time.time() - start, value)
            except Exception as e:
                log.error(f"Job {name} failed: {e}")
                detail = traceback.format_exc() if config.get_bool("debug", False) else str(e)
                return JobResult(name, kind, "failed", time.time() - start, error_message=detail)
            finally:
                remove_run_file_handler()

    @skelfit_guard(RunnerException)
    def run_collection(self, collection_path: str) -> List[JobResult]:
        """
        Run a collection of pipeline jobs defined in a YAML file.

        execution_method: parallel
        max_concurrent_instances: 2
        jobs:
          - kind: synth
            name: tube-obs
            enabled: true
            shape: shapes/tube.json
            camera: cameras/front.json
            out: obs/tube
          - kind: fit
            shape: shapes/tube.json
            obs: obs/tube
            out: fits/tube.json
        """
        if not os.path.exists(collection_path):
            raise FileNotFoundError(f"Collection file not found: {collection_path}")

        project_root = os.getcwd()
        with open(collection_path) as f:
            document = yaml.safe_load(f) or {}
        if not isinstance(document, dict):
            raise SchemaException("expected a mapping", field="collection")
        method = document.get("execution_method", "sequential")
        if method not in ("sequential", "parallel"):
            raise SchemaException(f"unknown execution method {method!r}", field="execution_method")
        max_inst = int(document.get("max_concurrent_instances", 1))
        entries = document.get("jobs") or []
        for index, entry in enumerate(entries):
            self._check_entry(index, entry)
        names = [str(e.get("name") or f"{e['kind']}-{i}") for i, e in enumerate(entries)]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise SchemaException(f"duplicate job name {duplicates[0]!r}", field="jobs")

        if method == "parallel" and max_inst > 1:
            with ThreadPoolExecutor(max_workers=max_inst) as executor:
                futures = [executor.submit(self.run_job, i, e, project_root) for i, e in enumerate(entries)]
                results = [f.result() for f in futures]
        else:
            results = [self.run_job(i, e, project_root) for i, e in enumerate(entries)]

        for result in results:
            self._record(result)
        failed = [r.name for r in results if r.status == "failed"]
        log.info(f"Collection finished: {len(results)} jobs, {len(failed)} failed")
        return results

    def _record(self, result: JobResult):
        if self.report is None:
            return
        self.report.record_job(result.name, result.kind, result.status, result.duration, result.error_message)
        if result.status != "passed":
            return
        if result.kind == "fit":
            self.report.record_history(result.name, result.value.history_rows())
            self.report.record_final(result.name, result.value.final)
        elif result.kind == "eval":
            self.report.record_metrics(result.name, result.value)
