import sys

import numpy as np
import pytest
import torch

from netgraph_event.ingest import LogPanel

torch.set_num_threads(1)


def make_panel(values, t0=0, interval=300, missing=None):
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None, None]
    num_ticks, n = values.shape[:2]
    if missing is None:
        missing = np.isnan(values).any(axis=2)
    return LogPanel(
        interface_ids=[f"if{i}" for i in range(n)],
        tick_interval_s=interval,
        ticks=t0 + np.arange(num_ticks, dtype=np.int64) * interval,
        values=values,
        missing_mask=np.asarray(missing, dtype=bool),
    )


@pytest.fixture
def panel_factory():
    return make_panel


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
