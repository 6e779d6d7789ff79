import csv
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE_RESULTS = []


@pytest.fixture
def record():
    """Register one acceptance line; printed in the terminal summary."""

    def _record(criterion, passed, detail):
        ACCEPTANCE_RESULTS.append((criterion, bool(passed), detail))

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(ACCEPTANCE_RESULTS, key=lambda r: r[0]):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")


def write_network_csv(path, periods, routes, lam_for_route, seed=0, section_length=0.1, covariates=None):
    """Poisson network CSV: one series per (route, direction) per period."""
    rng = np.random.default_rng(seed)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        cov_names = sorted(covariates or {})
        w.writerow(["route_id", "direction", "milepost", "count", "period"] + cov_names)
        for period in periods:
            for route, direction in routes:
                lam = lam_for_route(route, direction)
                y = rng.poisson(lam)
                for i, c in enumerate(y):
                    covs = [f"{covariates[c_](route, direction, i):.6f}" for c_ in cov_names]
                    w.writerow([route, direction, f"{i * section_length:.3f}", int(c), period] + covs)
    return path


@pytest.fixture
def network_csv(tmp_path):
    def _make(**kw):
        return write_network_csv(tmp_path / kw.pop("name", "net.csv"), **kw)

    return _make
