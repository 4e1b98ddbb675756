import os
import shutil
import sys
import tempfile
import threading
import unittest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from skelfit.log import add_run_file_handler, log, remove_run_file_handler
from skelfit.thread_context import get_context, run_session


class TestRunSession(unittest.TestCase):
    """Per-thread run binding"""

    def test_binding_is_restored(self):
        self.assertIsNone(get_context("run_id"))
        with run_session("outer", kind="fit"):
            with run_session("inner"):
                self.assertEqual(get_context("run_id"), "inner")
                self.assertIsNone(get_context("kind"))
            self.assertEqual(get_context("run_id"), "outer")
            self.assertEqual(get_context("kind"), "fit")
        self.assertIsNone(get_context("run_id"))

    def test_threads_do_not_share_binding(self):
        seen = []
        with run_session("main-thread"):
            worker = threading.Thread(target=lambda: seen.append(get_context("run_id")))
            worker.start()
            worker.join()
        self.assertEqual(seen, [None])


class TestRunLogFiles(unittest.TestCase):
    """One log file per run, holding only that run's lines"""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()

    def tearDown(self):
        if os.path.exists(self.test_dir):
            shutil.rmtree(self.test_dir)

    def read(self, run_id):
        with open(os.path.join(self.test_dir, f"{run_id}.log"), encoding="utf-8") as f:
            return f.read()

    def test_lines_go_to_their_own_run(self):
        for run_id in ("job-a", "job-b"):
            with run_session(run_id):
                add_run_file_handler(run_id, self.test_dir)
        with run_session("job-a"):
            log.info("from", "a")
            log.metric("epoch", 3, "total=1")
        with run_session("job-b"):
            log.warning("from b")
        for run_id in ("job-a", "job-b"):
            with run_session(run_id):
                remove_run_file_handler()

        first = self.read("job-a")
        self.assertIn("[job-a] INFO: from a", first)
        self.assertIn("METRIC: epoch 3 total=1", first)
        self.assertNotIn("from b", first)
        self.assertIn("[job-b] WARNING: from b", self.read("job-b"))

    def test_remove_outside_a_session_is_a_no_op(self):
        remove_run_file_handler()


if __name__ == '__main__':
    unittest.main()
