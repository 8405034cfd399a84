import numpy as np
import pytest

from ilsurrogate.data import CSV_COLUMNS, Dataset

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def write_rows(path, rows, header=CSV_COLUMNS):
    lines = [",".join(header)] + [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


DESIGN = [1.0, 0.15, 0.35, 0.5, 50.0, 4.0, 0.01]


@pytest.fixture
def design():
    return list(DESIGN)


def make_dataset(designs, freqs, il_fn, name="test"):
    rows, labels = [], []
    for d in designs:
        for f in freqs:
            rows.append(list(d) + [f])
            labels.append(il_fn(np.asarray(d), f))
    return Dataset(np.array(rows), np.array(labels), name)


@pytest.fixture(scope="session")
def benchmark_run(tmp_path_factory):
    import time

    from ilsurrogate.pipeline import run_benchmark

    t0 = time.perf_counter()
    run = run_benchmark(tmp_path_factory.mktemp("bench"))
    run["seconds"] = time.perf_counter() - t0
    return run
