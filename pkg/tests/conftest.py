import numpy as np
import pytest

from warmfold.data import GraphStats
from warmfold.model import ULTRAGCN, EmbeddingModel


def random_model(n_users=30, n_items=50, rank=8, seed=0, max_degree=20, scale=1.0):
    rng = np.random.default_rng(seed)
    du = rng.integers(1, max_degree, n_users)
    di = rng.integers(0, max_degree, n_items)
    stats = GraphStats.from_degrees(du, di)
    U = scale * rng.standard_normal((n_users, rank))
    V = scale * rng.standard_normal((n_items, rank))
    return EmbeddingModel(ULTRAGCN, U, V, stats, lam=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def write_lines(tmp_path):
    def _write(lines, name="events.csv"):
        p = tmp_path / name
        p.write_text("\n".join(lines) + "\n")
        return p
    return _write


# ---------------------------------------------------------------- acceptance report

_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    detail = dict(item.user_properties).get("detail", "")
    if rep.failed and not detail:
        detail = str(call.excinfo.value).splitlines()[0] if call.excinfo else "failed"
    _ACCEPTANCE[mark.args[0]] = ("PASS" if rep.passed else "FAIL", mark.args[1], detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        status, title, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2} {status}: {title}" + (f" ({detail})" if detail else ""))
