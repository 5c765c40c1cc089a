import math
import time

import pytest


def _wait(client, path, timeout=120.0):
    t0 = time.time()
    while True:
        job = client.get(path).json()
        if job["state"] in ("ok", "failed"):
            return job
        if time.time() - t0 > timeout:
            raise AssertionError(f"job {path} did not finish")
        time.sleep(0.1)


@pytest.fixture(scope="module")
def finished_run(service_client, tmp_path_factory):
    from conftest import TINY_RUN

    out = tmp_path_factory.mktemp("run") / "tiny"
    r = service_client.post("/runs", json={"config": TINY_RUN, "out_dir": str(out)})
    assert r.status_code == 202
    job = _wait(service_client, f"/runs/{r.json()['id']}")
    assert job["state"] == "ok", job
    return job


def test_health(service_client):
    assert service_client.get("/health").json() == {"status": "ok"}


def test_run_lifecycle(finished_run, service_client):
    assert finished_run["step"] == 2 and finished_run["n_steps"] == 3
    row = finished_run["last_row"]
    assert row["step"] == 2 and row["t"] == pytest.approx(0.4)
    ids = [j["id"] for j in service_client.get("/runs").json()]
    assert finished_run["id"] in ids


def test_run_from_path_and_overrides(service_client, tmp_path, tiny_run):
    import yaml

    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump(tiny_run))
    r = service_client.post("/runs", json={"config_path": str(p), "scheme": "upa", "snapshot_every": 0,
                                           "out_dir": str(tmp_path / "o")})
    job = _wait(service_client, f"/runs/{r.json()['id']}")
    assert job["state"] == "ok"
    assert not list((tmp_path / "o").glob("snapshots/*.npz"))[1:]  # at most the final snapshot
    cfg = yaml.safe_load((tmp_path / "o" / "config.yaml").read_text())
    assert cfg["solver"]["scheme"] == "upa"


def test_failed_run_reports_step(service_client, tmp_path, tiny_run):
    tiny_run["solver"] = {"max_am": 1, "tol_am": 1e-300, "max_halvings": 0}
    r = service_client.post("/runs", json={"config": tiny_run, "out_dir": str(tmp_path / "f")})
    job = _wait(service_client, f"/runs/{r.json()['id']}")
    assert job["state"] == "failed" and job["failed_step"] == 0  # the t_start step is solved too
    assert "step" in job["error"]


@pytest.mark.parametrize("body", [
    {},
    {"config": {"mesh": {"kind": "hexagon"}}},
    {"config": {"material": {"E": -1}}},
    {"config_path": "/nonexistent/c.yaml"},
    {"config": {}, "snapshot_every": -1},
    {"config": {}, "scheme": "bogus"},
])
def test_run_validation(service_client, body):
    assert service_client.post("/runs", json=body).status_code == 422


def test_missing_jobs(service_client):
    assert service_client.get("/runs/r999").status_code == 404
    assert service_client.get("/campaigns/c999").status_code == 404


def test_presets(service_client):
    from ductile_pf.campaigns import PRESETS

    got = service_client.get("/presets").json()
    assert [p["name"] for p in got] == list(PRESETS)
    assert all(p["n_points"] == len(p["points"]) > 0 for p in got)


def test_unknown_campaign(service_client):
    r = service_client.post("/campaigns", json={"name": "nope"})
    assert r.status_code == 422 and "unknown preset" in r.json()["detail"]
    assert service_client.post("/campaigns", json={"name": "ell-sweep", "scale": 0}).status_code == 422


def test_inspect_ledger_nan_as_null(finished_run, service_client):
    r = service_client.post("/inspect/ledger", json={"run_dir": finished_run["out_dir"]})
    assert r.status_code == 200
    d = r.json()
    assert len(d["rows"]) == 3 and "J" in d["columns"]
    for row in d["rows"]:
        assert all(v is None or math.isfinite(v) for v in row)
    assert service_client.post("/inspect/ledger", json={"run_dir": "/nonexistent"}).status_code == 404


def test_inspect_snapshot(finished_run, service_client):
    d = service_client.post("/inspect/snapshot", json={"run_dir": finished_run["out_dir"]}).json()
    assert d["step"] == 2
    assert service_client.post("/inspect/snapshot", json={"run_dir": finished_run["out_dir"], "step": 77}).status_code == 404


def test_kfit_rejects_surfing(finished_run, service_client):
    r = service_client.post("/inspect/kfit", json={"run_dir": finished_run["out_dir"]})
    assert r.status_code == 422 and "notch" in r.json()["detail"]


def test_compare(finished_run, service_client, tmp_path):
    d = finished_run["out_dir"]
    rep = service_client.post("/compare", json={"a": d, "b": d, "csv_out": str(tmp_path / "c.csv")}).json()
    assert rep["peak_J_rel_diff"] == 0.0 and rep["crack_length_diff"] == 0.0
    assert (tmp_path / "c.csv").exists()
    assert service_client.post("/compare", json={"a": d, "b": "/nonexistent"}).status_code == 404
