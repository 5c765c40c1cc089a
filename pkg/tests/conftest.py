import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ductile_pf.materials import MaterialParams  # noqa: E402


@pytest.fixture
def steel_like():
    return MaterialParams(E=1.0, nu=0.2, Gc=1.0, ell=0.25, sigma0=0.5, mode="plane_strain")


@pytest.fixture(params=["plane_strain", "plane_stress"])
def mode(request):
    return request.param


TINY_RUN = {
    "name": "tiny",
    "material": {"E": 1.0, "nu": 0.2, "Gc": 1.0, "ell": 0.25, "sigma0": 0.5},
    "mesh": {"kind": "rectangle", "L": 2.0, "H": 1.0, "delta": 0.125, "precrack": 0.5},
    "load": {"kind": "surfing", "t_end": 0.4, "n_steps": 2},
    "output": {"snapshot_every": 1},
}


@pytest.fixture
def tiny_run():
    import copy

    return copy.deepcopy(TINY_RUN)


@pytest.fixture(scope="session")
def service_client(tmp_path_factory):
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

    from ductile_pf.service import create_app

    return TestClient(create_app(tmp_path_factory.mktemp("svc")))


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def report():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
