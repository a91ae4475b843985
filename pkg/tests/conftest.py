import json

import pytest

from infpriv.cli import main


@pytest.fixture(scope="session")
def workspace(tmp_path_factory):
    """Blobs data, a trained MLP and a small alpha sweep config, built via the CLI."""
    root = tmp_path_factory.mktemp("ws")
    assert main(["gen-data", "--classes", "2", "--dim", "8", "--n", "200", "--seed", "7",
                 "--out", str(root / "d.csv")]) == 0
    assert main(["train", "--data", str(root / "d.csv"), "--hidden", "16", "--epochs", "30",
                 "--seed", "1", "--out", str(root / "m.json")]) == 0
    config = {
        "variable": "alpha",
        "values": [0, 0.05, 0.1, 0.2, 0.5],
        "fixed": {"epsilon": 1, "delta": 1e-5},
        "mechanisms": ["gauss-input", "gauss-output", "lap-output"],
        "model": "m.json",
        "dataset": "d.csv",
        "repeats": 15,
        "seed": 3,
    }
    (root / "sweep.json").write_text(json.dumps(config))
    return root


_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title, limit): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "setup":
        # fixture work (data, training) counts toward the criterion's runtime
        item.user_properties.append(("setup", call.duration))
        return
    if report.when != "call":
        return
    number, title, limit = marker.args
    detail = dict(item.user_properties).get("detail", "")
    seconds = call.duration + dict(item.user_properties).get("setup", 0.0)
    _ACCEPTANCE[number] = (title, report.passed, seconds, limit, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, passed, seconds, limit, detail = _ACCEPTANCE[number]
        status = "PASS" if passed else "FAIL"
        line = f"{status}  #{number:<2} {title} ({seconds:.2f} s, limit {limit} s)"
        terminalreporter.write_line(line + (f": {detail}" if detail else ""))
