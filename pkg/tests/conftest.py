"""Shared fixtures: a medium-size clustered dataset reused by the slow tests.

The desk fixture is session-scoped because spherical k-means at C=316 over
100k points dominates the suite's runtime; every consumer treats it as
read-only.
"""

import time

import numpy as np
import pytest

import shardroute as sr

from _synth import clustered_mixture

CRITERION_MARK = "criterion"


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "criterion(num, text): acceptance criterion covered by this test",
    )


class DeskBench:
    """100k x 64 clustered mixture with varying norms, partitioned once."""

    def __init__(self):
        start = time.perf_counter()
        X, Q = clustered_mixture(nq=600)
        self.data = sr.VectorSet(X)
        self.queries = sr.VectorSet(Q)
        self.partitioning = sr.fit_kmeans(
            self.data, C=316, iters=25, seed=0, mode="spherical"
        )
        self.truth_k100 = sr.ground_truth(self.data, self.queries, k=100)
        self.build_seconds = time.perf_counter() - start


@pytest.fixture(scope="session")
def desk():
    return DeskBench()


_criterion_results = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker(CRITERION_MARK)
    if mark is None or report.when != "call":
        return
    num, text = mark.args
    if report.passed:
        status = "PASSED"
    elif report.skipped:
        status = "SKIPPED"
    else:
        status = "FAILED"
    _criterion_results[num] = (status, text)


def pytest_terminal_summary(terminalreporter):
    if not _criterion_results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criterion_results):
        status, text = _criterion_results[num]
        terminalreporter.write_line(f"[criterion {num}] {status} - {text}")
