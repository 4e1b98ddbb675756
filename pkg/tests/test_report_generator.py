import unittest
import os
import csv
import json
import tempfile
import shutil
from datetime import datetime
from xml.etree import ElementTree as ET

import sys
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from skelfit.metrics import MetricReport
from skelfit.optim.gradcheck import GradcheckCase, GradcheckReport
from skelfit.report_generator import ReportGenerator


class TestReportGeneratorJUnit(unittest.TestCase):
    """JUnit XML for batch jobs and gradient checks"""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()
        self.rg = ReportGenerator(base_dir=self.test_dir)

    def tearDown(self):
        if os.path.exists(self.test_dir):
            shutil.rmtree(self.test_dir)

    def overview(self, duration=4.5):
        self.rg.record_overview(
            command="batch",
            duration=duration,
            start_time=datetime(2026, 3, 2, 10, 0, 0).timestamp(),
            end_time=datetime(2026, 3, 2, 10, 0, 4).timestamp(),
        )

    def test_failed_job(self):
        """A failed job carries a <failure> element with its error message"""
        self.rg.record_job("fit-tube", "fit", "failed", 3.2, error_message="energy diverged in flow")
        self.overview()

        root = ET.parse(self.rg.generate_junit_xml()).getroot()
        self.assertEqual(root.tag, 'testsuites')
        self.assertEqual(root.get('tests'), '1')
        self.assertEqual(root.get('failures'), '1')
        self.assertEqual(root.get('errors'), '0')

        testsuite = root.find('testsuite')
        self.assertEqual(testsuite.get('name'), 'jobs')
        testcase = testsuite.find('testcase')
        self.assertEqual(testcase.get('name'), 'fit-tube')
        self.assertEqual(testcase.get('classname'), 'fit')
        failure = testcase.find('failure')
        self.assertIsNotNone(failure)
        self.assertIn('failed', failure.get('message').lower())
        self.assertEqual(failure.text, 'energy diverged in flow')

    def test_passed_and_skipped_jobs(self):
        self.rg.record_job("synth-tube", "synth", "passed", 1.0)
        self.rg.record_job("eval-tube", "eval", "skipped", 0.0)
        self.overview()

        root = ET.parse(self.rg.generate_junit_xml()).getroot()
        self.assertEqual(root.get('tests'), '2')
        self.assertEqual(root.get('failures'), '0')
        testcases = root.find('testsuite').findall('testcase')
        self.assertIsNone(testcases[0].find('failure'))
        self.assertIsNotNone(testcases[1].find('skipped'))

    def test_gradcheck_blocks(self):
        """Cases group into one testcase per scene, term and variable class"""
        report = GradcheckReport([
            GradcheckCase(0, "mask", "joints", "joints[0,1,2]", 1.0, 1.0),
            GradcheckCase(0, "mask", "joints", "joints[1,0,0]", 2.0, 2.0000001),
            GradcheckCase(0, "flow", "scale", "scale", 1.0, 1.5),
            GradcheckCase(1, "mask", "joints", "joints[0,0,3]", 0.5, 0.5),
        ])
        self.rg.record_gradcheck(report)
        self.overview()

        root = ET.parse(self.rg.generate_junit_xml()).getroot()
        self.assertEqual(root.get('tests'), '3')
        self.assertEqual(root.get('failures'), '1')
        suite = root.find('testsuite')
        self.assertEqual(suite.get('name'), 'gradcheck')
        by_name = {tc.get('name'): tc for tc in suite.findall('testcase')}
        self.assertEqual(sorted(by_name), ['scene0.flow.scale', 'scene0.mask.joints', 'scene1.mask.joints'])
        self.assertIsNone(by_name['scene0.mask.joints'].find('failure'))
        failure = by_name['scene0.flow.scale'].find('failure')
        self.assertEqual(failure.get('message'), '1 of 1 components disagree')

    def test_mixed_suites(self):
        self.rg.record_gradcheck(GradcheckReport([GradcheckCase(0, "symm", "field", "field.w0[0,0]", 1.0, 1.0)]))
        self.rg.record_job("fit-a", "fit", "failed", 2.0)
        self.overview()

        root = ET.parse(self.rg.generate_junit_xml()).getroot()
        self.assertEqual(root.get('tests'), '2')
        self.assertEqual(root.get('failures'), '1')
        self.assertEqual([s.get('name') for s in root.findall('testsuite')], ['gradcheck', 'jobs'])

    def test_empty_report(self):
        self.overview(duration=0.0)
        root = ET.parse(self.rg.generate_junit_xml()).getroot()
        self.assertEqual(root.get('tests'), '0')
        self.assertEqual(root.findall('testsuite'), [])


class TestReportGeneratorFiles(unittest.TestCase):
    """history.csv, result.json and report.html written by finalize"""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()
        self.rg = ReportGenerator(base_dir=self.test_dir, title="skelfit fit")
        self.rows = [[0, 10.0, 4.0, 3.0, 2.0, 1.0], [1, 5.5, 2.0, 1.5, 1.0, 1.0]]

    def tearDown(self):
        if os.path.exists(self.test_dir):
            shutil.rmtree(self.test_dir)

    def read_csv(self):
        with open(self.rg.history_path, newline="") as f:
            return list(csv.reader(f))

    def test_single_history(self):
        self.rg.record_history("tube", self.rows)
        self.rg.save_history_csv()
        rows = self.read_csv()
        self.assertEqual(rows[0], ["epoch", "total", "mask", "flow", "smooth", "symm"])
        self.assertEqual(rows[1], ["0", "10", "4", "3", "2", "1"])
        self.assertEqual(rows[2][1], "5.5")

    def test_several_histories_get_a_name_column(self):
        self.rg.record_history("a", self.rows)
        self.rg.record_history("b", self.rows[:1])
        self.rg.save_history_csv()
        rows = self.read_csv()
        self.assertEqual(rows[0][0], "name")
        self.assertEqual([r[0] for r in rows[1:]], ["a", "a", "b"])

    def test_no_history_no_file(self):
        self.assertIsNone(self.rg.save_history_csv())
        self.assertFalse(os.path.exists(self.rg.history_path))

    def test_finalize_writes_everything(self):
        self.rg.record_history("tube", self.rows)
        self.rg.record_final("tube", {"total": 5.5, "mask": 2.0, "flow": 1.5, "smooth": 1.0, "symm": 1.0})
        self.rg.record_metrics("tube", MetricReport(0.75, 0.01, 0.2, 0.05, 0.003))
        run_dir = self.rg.finalize("fit", duration=1.25)

        self.assertEqual(run_dir, self.rg.run_dir)
        for path in (self.rg.overview_path, self.rg.history_path, self.rg.junit_path, self.rg.html_path):
            self.assertTrue(os.path.isfile(path), path)

        with open(self.rg.overview_path) as f:
            result = json.load(f)
        self.assertEqual(result["overview"]["command"], "fit")
        self.assertEqual(result["overview"]["duration"], 1.25)
        self.assertEqual(result["final_energy"]["tube"]["total"], 5.5)
        self.assertEqual(result["metrics"][0]["miou"], 0.75)
        self.assertEqual(result["energy_history"]["tube"][1][0], 1)

        with open(self.rg.html_path, encoding="utf-8") as f:
            html = f.read()
        self.assertIn("skelfit fit", html)
        self.assertIn("tube", html)

    def test_run_directories_do_not_collide(self):
        other = ReportGenerator(base_dir=self.test_dir)
        self.assertNotEqual(other.run_dir, self.rg.run_dir)
        self.assertTrue(os.path.isdir(other.run_dir))


if __name__ == '__main__':
    unittest.main()
