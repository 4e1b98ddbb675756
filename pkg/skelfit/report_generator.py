import csv
import json
import os
import platform
from datetime import datetime
from xml.dom import minidom
from xml.etree.ElementTree import Element, SubElement, tostring

from skelfit.config import config
from skelfit.exception import ReportGenerationException
from skelfit.guard import skelfit_guard
from skelfit.utils import render_template
from skelfit._constant import HISTORY_HEADER, METRIC_HEADER


class ReportGenerator:
    """
    One directory per run under ``base_dir``: result.json, history.csv, junit.xml and report.html.
    Record whatever the run produced, then call ``finalize``.
    """

    @skelfit_guard(ReportGenerationException)
    def __init__(self, base_dir=None, title="skelfit run"):
        base_dir = base_dir or config.get("report_dir", "reports")
        timestamp = self.generate_report_name(datetime.now())
        os.makedirs(base_dir, exist_ok=True)
        run_dir = os.path.join(base_dir, timestamp)
        suffix = 1
        while os.path.exists(run_dir):
            run_dir = os.path.join(base_dir, f"{timestamp}_{suffix}")
            suffix += 1
        self.run_dir = run_dir
        os.makedirs(self.run_dir)

        self.id_run = os.path.basename(run_dir)
        self.title = title
        self.overview_path = os.path.join(self.run_dir, "result.json")
        self.history_path = os.path.join(self.run_dir, "history.csv")
        self.junit_path = os.path.join(self.run_dir, "junit.xml")
        self.html_path = os.path.join(self.run_dir, "report.html")

        self.histories = {}      # {name: [[epoch, total, mask, flow, smooth, symm], ...]}
        self.finals = {}         # {name: {term: value}}
        self.metrics = []        # [{"name": ..., miou, mcham, ...}]
        self.gradcheck_cases = []
        self.jobs = []
        self.overview = {}

    def generate_report_name(self, timestamp):
        return timestamp.strftime("%Y%m%d_%H%M%S")

    @skelfit_guard(ReportGenerationException)
    def record_history(self, name, rows):
        self.histories[name] = [list(row) for row in rows]

    @skelfit_guard(ReportGenerationException)
    def record_final(self, name, breakdown):
        """``breakdown`` is an EnergyBreakdown or a plain {term: value} mapping"""
        values = breakdown.as_dict() if hasattr(breakdown, "as_dict") else dict(breakdown)
        self.finals[name] = {key: float(value) for key, value in values.items()}

    @skelfit_guard(ReportGenerationException)
    def record_metrics(self, name, report):
        self.metrics.append({"name": name, **report.as_dict()})

    @skelfit_guard(ReportGenerationException)
    def record_gradcheck(self, report):
        for case in report.cases:
            self.gradcheck_cases.append({
                "name": case.name,
                "scene": case.scene,
                "term": case.term,
                "variable": case.variable,
                "component": case.component,
                "analytic": case.analytic,
                "numeric": case.numeric,
                "status": "passed" if case.passed else "failed",
            })

    @skelfit_guard(ReportGenerationException)
    def record_job(self, name, kind, status, duration, error_message=None):
        self.jobs.append({
            "name": name,
            "kind": kind,
            "status": status,
            "duration": duration,
            "error_message": error_message,
        })

    @skelfit_guard(ReportGenerationException)
    def record_overview(self, command, duration, start_time, end_time):
        self.overview = {
            "run_id": self.id_run,
            "command": command,
            "host_name": platform.node(),
            "os": platform.system(),
            "duration": duration,
            "start_time": datetime.fromtimestamp(start_time).strftime("%Y-%m-%d %H:%M:%S"),
            "end_time": datetime.fromtimestamp(end_time).strftime("%Y-%m-%d %H:%M:%S"),
            "total_jobs": len(self.jobs),
            "passed": sum(1 for j in self.jobs if j["status"] == "passed"),
            "failed": sum(1 for j in self.jobs if j["status"] == "failed"),
            "skipped": sum(1 for j in self.jobs if j["status"] == "skipped"),
        }

    def results(self):
        return {
            "overview": self.overview,
            "jobs": self.jobs,
            "energy_history": self.histories,
            "final_energy": self.finals,
            "metrics": self.metrics,
            "gradcheck": self.gradcheck_cases,
        }

    @skelfit_guard(ReportGenerationException)
    def save_json(self):
        with open(self.overview_path, "w") as f:
            json.dump(self.results(), f, indent=2)

    @skelfit_guard(ReportGenerationException)
    def save_history_csv(self):
        """Every recorded history, prefixed by its name when several runs share the report"""
        if not self.histories:
            return None
        several = len(self.histories) > 1
        with open(self.history_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow((["name"] if several else []) + HISTORY_HEADER.split(","))
            for name, rows in self.histories.items():
                for row in rows:
                    values = [int(row[0])] + [f"{v:.17g}" for v in row[1:]]
                    writer.writerow(([name] if several else []) + values)
        return self.history_path

    @skelfit_guard(ReportGenerationException)
    def generate_junit_xml(self):
        """Gradient-check cases grouped per scene/term/variable block, then batch jobs"""
        blocks = {}
        for case in self.gradcheck_cases:
            key = f"scene{case['scene']}.{case['term']}.{case['variable']}"
            blocks.setdefault(key, []).append(case)

        total_tests = len(blocks) + len(self.jobs)
        failed_blocks = sum(1 for cases in blocks.values() if any(c["status"] == "failed" for c in cases))
        failed_jobs = sum(1 for j in self.jobs if j["status"] == "failed")
        total_time = self.overview.get("duration", 0)

        testsuites = Element("testsuites")
        testsuites.set("name", self.title)
        testsuites.set("tests", str(total_tests))
        testsuites.set("failures", str(failed_blocks + failed_jobs))
        testsuites.set("errors", "0")
        testsuites.set("time", f"{total_time:.3f}")
        testsuites.set("timestamp", self.overview.get("start_time", ""))

        if blocks:
            suite = SubElement(testsuites, "testsuite")
            suite.set("name", "gradcheck")
            suite.set("tests", str(len(blocks)))
            suite.set("failures", str(failed_blocks))
            for key, cases in blocks.items():
                testcase = SubElement(suite, "testcase")
                testcase.set("name", key)
                testcase.set("classname", "gradcheck")
                failures = [c for c in cases if c["status"] == "failed"]
                if failures:
                    failure = SubElement(testcase, "failure")
                    failure.set("message", f"{len(failures)} of {len(cases)} components disagree")
                    failure.set("type", "GradientMismatch")
                    failure.text = "\n".join(
                        f"{c['component']}: analytic {c['analytic']:.9g} vs numeric {c['numeric']:.9g}" for c in failures
                    )

        if self.jobs:
            suite = SubElement(testsuites, "testsuite")
            suite.set("name", "jobs")
            suite.set("tests", str(len(self.jobs)))
            suite.set("failures", str(failed_jobs))
            for job in self.jobs:
                testcase = SubElement(suite, "testcase")
                testcase.set("name", job["name"])
                testcase.set("classname", job["kind"])
                testcase.set("time", f"{job['duration']:.3f}")
                if job["status"] == "failed":
                    failure = SubElement(testcase, "failure")
                    failure.set("message", f"Job '{job['name']}' failed")
                    failure.set("type", "JobFailure")
                    failure.text = job.get("error_message") or ""
                elif job["status"] == "skipped":
                    SubElement(testcase, "skipped").set("message", "Job disabled")

        xml_string = minidom.parseString(tostring(testsuites, encoding="utf-8")).toprettyxml(indent="  ")
        with open(self.junit_path, "w", encoding="utf-8") as f:
            f.write(xml_string)
        return self.junit_path

    @skelfit_guard(ReportGenerationException)
    def generate_html_report(self):
        context = {
            "title": self.title,
            "overview": self.overview,
            "jobs": self.jobs,
            "histories": self.histories,
            "history_header": HISTORY_HEADER.split(","),
            "finals": self.finals,
            "metrics": self.metrics,
            "metric_header": METRIC_HEADER.split(","),
            "gradcheck": self.gradcheck_cases,
            "gradcheck_failed": sum(1 for c in self.gradcheck_cases if c["status"] == "failed"),
        }
        render_template("report.html.j2", context, self.html_path)
        return self.html_path

    def finalize(self, command="run", duration=0.0, start_time=None, end_time=None):
        now = datetime.now().timestamp()
        if not self.overview:
            self.record_overview(command, duration, start_time or now, end_time or now)
        self.save_json()
        self.save_history_csv()
        self.generate_junit_xml()
        self.generate_html_report()
        return self.run_dir
