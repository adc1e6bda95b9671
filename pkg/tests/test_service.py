import json
import socket
import time

import pytest
import requests

from simlab.cli import main as cli_main
from simlab.service import BadDataDir, PortInUse, Service, ServiceConfig
from simlab.storage import Store

from support import FIXTURE_CATALOG


@pytest.fixture
def service(tmp_path):
    """Service over a seeded data dir whose movie task uses the tiny fixture
    catalog (fast experiments)."""
    data_dir = tmp_path / "data"
    svc = Service(ServiceConfig(data_dir=data_dir, port=0, api_token="sesame"))
    # shrink the catalog for test speed: same schema, 3 items
    catalog_path = svc.store.resolve_path("catalogs/movies.tsv")
    catalog_path.write_text(FIXTURE_CATALOG, encoding="utf-8")
    svc.start()
    yield svc
    svc.stop(drain=False)


def _auth():
    return {"Authorization": "Bearer sesame"}


def _submit_body(num_needs=2, seed=7):
    return {
        "task": "movies",
        "agent": {"name": "ref-agent", "version": "1.0"},
        "simulator": {"name": "ref-simulator", "version": "1.0"},
        "num_needs": num_needs,
        "seed": seed,
        "limits": {"max_turns": 8, "call_timeout": 10.0},
        "submitter": "svc-test",
    }


def _wait_done(service, experiment_id, timeout=60):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        doc = requests.get(f"{service.url}/api/experiments/{experiment_id}", timeout=10).json()
        if doc["status"] in ("DONE", "FAILED"):
            return doc
        time.sleep(0.2)
    raise AssertionError("experiment did not reach a terminal state in time")


# ---------------------------------------------------------------------------
# Startup


def test_health(service):
    resp = requests.get(f"{service.url}/api/health", timeout=5)
    assert resp.status_code == 200
    assert resp.json() == {"status": "ok"}


def test_port_in_use(tmp_path):
    blocker = socket.socket()
    blocker.bind(("127.0.0.1", 0))
    port = blocker.getsockname()[1]
    try:
        with pytest.raises(PortInUse):
            Service(ServiceConfig(data_dir=tmp_path / "d", port=port))
    finally:
        blocker.close()


def test_bad_data_dir(tmp_path):
    blocker = tmp_path / "not-a-dir"
    blocker.write_text("file")
    with pytest.raises(BadDataDir):
        Service(ServiceConfig(data_dir=blocker, port=0))


def test_data_dir_is_seeded(service):
    assert service.store.list_task_manifests() == ["movies"]
    names = {(r["name"], r["version"]) for r in service.store.list_system_records()}
    assert ("ref-agent", "1.0") in names
    assert ("ref-simulator", "1.0") in names
    assert ("ref-simulator", "2.0") in names


# ---------------------------------------------------------------------------
# Auth and validation mapping


def test_write_without_token_is_401(service):
    resp = requests.post(f"{service.url}/api/experiments", json=_submit_body(), timeout=5)
    assert resp.status_code == 401
    assert "error" in resp.json()


def test_wrong_token_is_401(service):
    resp = requests.post(
        f"{service.url}/api/experiments", json=_submit_body(),
        headers={"Authorization": "Bearer wrong"}, timeout=5,
    )
    assert resp.status_code == 401


def test_register_duplicate_is_409(service):
    record = {
        "name": "dupe", "version": "1.0", "role": "AGENT", "port": 9001,
        "description": "", "launch": {"process": {"command": "true", "args": [], "env": {}}},
    }
    first = requests.post(f"{service.url}/api/systems", json=record, headers=_auth(), timeout=5)
    assert first.status_code == 201
    second = requests.post(f"{service.url}/api/systems", json=record, headers=_auth(), timeout=5)
    assert second.status_code == 409


def test_register_invalid_launch_is_400(service):
    record = {"name": "broken", "version": "1.0", "role": "AGENT", "port": 1, "launch": {}}
    resp = requests.post(f"{service.url}/api/systems", json=record, headers=_auth(), timeout=5)
    assert resp.status_code == 400


def test_submit_unknown_system_is_400(service):
    body = _submit_body()
    body["agent"]["name"] = "ghost"
    resp = requests.post(f"{service.url}/api/experiments", json=body, headers=_auth(), timeout=5)
    assert resp.status_code == 400


def test_status_unknown_experiment_is_404(service):
    resp = requests.get(f"{service.url}/api/experiments/ghost-0001-abc", timeout=5)
    assert resp.status_code == 404


def test_unknown_task_leaderboard_is_404(service):
    resp = requests.get(f"{service.url}/api/leaderboard/poetry", timeout=5)
    assert resp.status_code == 404


# ---------------------------------------------------------------------------
# End-to-end through the API


def test_submit_status_leaderboard_download(service):
    resp = requests.post(
        f"{service.url}/api/experiments", json=_submit_body(), headers=_auth(), timeout=5
    )
    assert resp.status_code == 201
    experiment_id = resp.json()["experiment_id"]

    queue = requests.get(f"{service.url}/api/queue", timeout=5).json()
    assert experiment_id in queue["queued"] + queue["running"]

    doc = _wait_done(service, experiment_id)
    assert doc["status"] == "DONE"
    assert doc["config"]["num_needs"] == 2

    board = requests.get(f"{service.url}/api/leaderboard/movies", timeout=5).json()
    assert len(board["rows"]) == 1
    row = board["rows"][0]
    assert set(row["metrics"]) == {"success_rate", "fed_understanding", "fed_consistency"}
    assert experiment_id in row["experiment_ids"]

    download = requests.get(
        f"{service.url}/api/experiments/{experiment_id}/results", timeout=5
    )
    assert download.status_code == 200
    assert download.content == service.store.get_results_bytes(experiment_id)


def test_leaderboard_sorting(service):
    store: Store = service.store
    store.put_config("e-a", {"task": "movies"})
    store.put_state("e-a", {"status": "DONE", "progress": 1.0, "timestamps": {}, "failure_reason": None})
    store.put_results("e-a", {
        "experiment_id": "e-a", "task": "movies",
        "agent": {"name": "alpha", "version": "1"}, "simulator": {"name": "s", "version": "1"},
        "metrics": [{"metric_name": "success_rate",
                     "per_conversation": {"c1": 1.0, "c2": 1.0},
                     "aggregate": {"mean": 1.0, "std_dev": 0.0, "count": 2}}],
    })
    store.put_config("e-b", {"task": "movies"})
    store.put_state("e-b", {"status": "DONE", "progress": 1.0, "timestamps": {}, "failure_reason": None})
    store.put_results("e-b", {
        "experiment_id": "e-b", "task": "movies",
        "agent": {"name": "beta", "version": "1"}, "simulator": {"name": "s", "version": "1"},
        "metrics": [{"metric_name": "success_rate",
                     "per_conversation": {"c1": 0.0, "c2": 1.0},
                     "aggregate": {"mean": 0.5, "std_dev": 0.5, "count": 2}}],
    })

    def names(params):
        rows = requests.get(
            f"{service.url}/api/leaderboard/movies", params=params, timeout=5
        ).json()["rows"]
        return [r["agent"]["name"] for r in rows]

    assert names({"sort": "success_rate", "order": "desc"}) == ["alpha", "beta"]
    assert names({"sort": "success_rate", "order": "asc"}) == ["beta", "alpha"]
    assert names({}) == ["alpha", "beta"]  # lexicographic default
    resp = requests.get(
        f"{service.url}/api/leaderboard/movies", params={"order": "sideways"}, timeout=5
    )
    assert resp.status_code == 400


def test_shutdown_fails_running_experiment(tmp_path):
    data_dir = tmp_path / "data"
    svc = Service(ServiceConfig(data_dir=data_dir, port=0, api_token="sesame"))
    svc.store.resolve_path("catalogs/movies.tsv").write_text(FIXTURE_CATALOG, encoding="utf-8")
    svc.start()
    resp = requests.post(
        f"{svc.url}/api/experiments", json=_submit_body(num_needs=50),
        headers=_auth(), timeout=5,
    )
    experiment_id = resp.json()["experiment_id"]
    deadline = time.monotonic() + 30
    while True:
        doc = requests.get(f"{svc.url}/api/experiments/{experiment_id}", timeout=5).json()
        if doc["status"] == "RUNNING":
            break
        assert time.monotonic() < deadline
        time.sleep(0.05)
    svc.stop(drain=False)
    state = Store(data_dir).get_state(experiment_id)
    assert state["status"] == "FAILED"
    assert state["failure_reason"] == "shutdown"
    assert svc.launcher.live_count() == 0
    # artifacts retained
    assert Store(data_dir).get_config(experiment_id)


def test_static_ui_serving(tmp_path):
    ui = tmp_path / "dist"
    ui.mkdir()
    (ui / "index.html").write_text("<html><body>leaderboard</body></html>")
    (ui / "app.js").write_text("console.log('hi')")
    svc = Service(ServiceConfig(data_dir=tmp_path / "data", port=0, api_token="x", ui_dir=ui))
    svc.start()
    try:
        index = requests.get(f"{svc.url}/", timeout=5)
        assert index.status_code == 200
        assert b"leaderboard" in index.content
        js = requests.get(f"{svc.url}/app.js", timeout=5)
        assert js.headers["Content-Type"].startswith("text/javascript")
        fallback = requests.get(f"{svc.url}/some/client/route", timeout=5)
        assert b"leaderboard" in fallback.content
    finally:
        svc.stop()


# ---------------------------------------------------------------------------
# CLI (mirrors the API one-to-one)


def test_cli_round_trip(service, tmp_path, capsys):
    config_path = tmp_path / "exp.json"
    config_path.write_text(json.dumps(_submit_body(num_needs=1)))
    rc = cli_main([
        "submit", "--config", str(config_path),
        "--server", service.url, "--token", "sesame",
    ])
    assert rc == 0
    experiment_id = json.loads(capsys.readouterr().out)["experiment_id"]

    _wait_done(service, experiment_id)

    assert cli_main(["status", experiment_id, "--server", service.url]) == 0
    assert json.loads(capsys.readouterr().out)["status"] == "DONE"

    assert cli_main(["leaderboard", "--task", "movies", "--server", service.url]) == 0
    out = capsys.readouterr().out
    assert "success_rate" in out and "ref-agent@1.0" in out

    out_file = tmp_path / "results.json"
    assert cli_main([
        "download", experiment_id, "--out", str(out_file), "--server", service.url,
    ]) == 0
    assert out_file.read_bytes() == service.store.get_results_bytes(experiment_id)


def test_cli_register_system(service, tmp_path, capsys):
    manifest = tmp_path / "system.json"
    manifest.write_text(json.dumps({
        "name": "cli-agent", "version": "3.0", "role": "AGENT", "port": 9001,
        "description": "registered via cli",
        "launch": {"process": {"command": "true", "args": [], "env": {}}},
    }))
    rc = cli_main([
        "register-system", "--manifest", str(manifest),
        "--server", service.url, "--token", "sesame",
    ])
    assert rc == 0
    assert json.loads(capsys.readouterr().out)["id"] == "cli-agent@3.0"


def test_cli_unauthorized(service, tmp_path, capsys):
    config_path = tmp_path / "exp.json"
    config_path.write_text(json.dumps(_submit_body()))
    rc = cli_main([
        "submit", "--config", str(config_path),
        "--server", service.url, "--token", "nope",
    ])
    assert rc == 1
    assert "401" in capsys.readouterr().err
