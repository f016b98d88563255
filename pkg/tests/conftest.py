from pathlib import Path

import numpy as np
import pytest

from nncodec.inference import load_dataset
from nncodec.model_io import LayerParams, NetworkModel, ParamKind, load_model

FIXTURES = Path(__file__).parent / "fixtures"


def random_layer(rng, name, kind, max_elems=2000):
    if kind is ParamKind.CONV:
        h, w = rng.integers(1, 8, size=2)
        if h == 1 and w == 1:
            h = 3
        cin, cout = rng.integers(1, 9, size=2)
        shape = (h, w, cin, cout)
    elif kind in (ParamKind.DENSE, ParamKind.CONV1X1):
        rows = int(rng.integers(1, 64))
        shape = (rows, int(rng.integers(1, max(2, max_elems // rows))))
    else:
        shape = (int(rng.integers(1, 200)),)
    scale = 10.0 ** rng.uniform(-3, 1)
    return LayerParams(name, kind, rng.normal(0, scale, size=shape).astype(np.float32))


def random_model(rng, n_layers=5, max_elems=2000):
    kinds = list(ParamKind)
    layers = [
        random_layer(rng, f"layer{i}.{kinds[i % len(kinds)].value}", kinds[i % len(kinds)], max_elems)
        for i in range(n_layers)
    ]
    return NetworkModel(layers, rng.bytes(int(rng.integers(0, 40))))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def toy_model():
    return load_model(FIXTURES / "toy.nnm")


@pytest.fixture(scope="session")
def toy_dataset():
    return load_dataset(FIXTURES / "toy.nnd")


_CRITERIA = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        _CRITERIA.append((mark.args[0], status, report.duration))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label, status, secs in sorted(_CRITERIA, key=lambda c: int(c[0].split()[0][1:])):
        terminalreporter.write_line(f"{status}  {label}  ({secs:.1f}s)")
