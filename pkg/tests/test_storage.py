import json

import pytest

from simlab.storage import CorruptArtifact, NotFound, Store, StorageError
from simlab.tasks import UnknownTask


def _state(status="DONE"):
    return {"status": status, "progress": 1.0, "timestamps": {}, "failure_reason": None}


def _results(experiment_id, agent, simulator, scores):
    return {
        "experiment_id": experiment_id,
        "task": "movies",
        "agent": {"name": agent[0], "version": agent[1]},
        "simulator": {"name": simulator[0], "version": simulator[1]},
        "metrics": [
            {
                "metric_name": "success_rate",
                "per_conversation": {f"{experiment_id}-c{i}": s for i, s in enumerate(scores)},
                "aggregate": {
                    "mean": sum(scores) / len(scores),
                    "std_dev": 0.0,
                    "count": len(scores),
                },
            }
        ],
    }


def _seed_task(store):
    store.put_task_manifest({"name": "movies", "metrics": ["success_rate"], "catalog": "c.tsv"})


def test_config_round_trip(store):
    config = {"experiment_id": "e1", "task": "movies", "num_needs": 5}
    store.put_config("e1", config)
    assert store.get_config("e1") == config


def test_get_unknown_experiment(store):
    with pytest.raises(NotFound):
        store.get_config("nope")


def test_conversation_listing_is_ordered(store):
    for i in (2, 0, 1):
        store.put_conversation("e1", i, {"id": f"c{i}"})
    assert [c["id"] for c in store.list_conversations("e1")] == ["c0", "c1", "c2"]


def test_state_round_trip(store):
    store.put_state("e1", _state("RUNNING"))
    assert store.get_state("e1")["status"] == "RUNNING"


def test_needs_round_trip(store):
    needs = [{"constraints": {"genre": ["Comedy"]}, "requested": ["runtime"], "fulfilled": {}}]
    store.put_needs("e1", needs)
    assert store.get_needs("e1") == needs


def test_results_bytes_equal_stored_artifact(store):
    results = _results("e1", ("a", "1"), ("s", "1"), [1.0, 0.0])
    store.put_results("e1", results)
    raw = store.get_results_bytes("e1")
    assert json.loads(raw) == results
    path = store.resolve_path("experiments/e1/results.json")
    assert raw == path.read_bytes()


def test_system_record_round_trip(store):
    record = {"name": "ref-agent", "version": "1.0", "role": "AGENT", "port": 9001,
              "description": "", "launch": {"process": {"command": "x", "args": [], "env": {}}}}
    store.put_system_record(record)
    assert store.get_system_record("ref-agent", "1.0") == record
    assert store.list_system_records() == [record]


def test_unsafe_names_rejected(store):
    with pytest.raises(StorageError):
        store.get_config("../../etc/passwd")


def test_corrupt_artifact_quarantined(store):
    store.put_results("e1", {"ok": True})
    path = store.resolve_path("experiments/e1/results.json")
    path.write_bytes(b'{"ok": tru')  # truncate mid-token
    with pytest.raises(CorruptArtifact) as exc_info:
        store.get_results("e1")
    quarantined = exc_info.value.quarantined_to
    assert quarantined.exists()
    assert quarantined.read_bytes() == b'{"ok": tru'
    assert not path.exists()
    with pytest.raises(NotFound):
        store.get_results("e1")


def test_no_temp_files_left_behind(store):
    for i in range(10):
        store.put_config(f"e{i}", {"i": i})
    leftovers = [p for p in store.root.rglob("*.tmp-*")]
    assert leftovers == []


def test_experiment_listing_order(store):
    import time

    for name in ("e-one", "e-two", "e-three"):
        store.put_config(name, {})
        time.sleep(0.02)
    assert store.list_experiments() == ["e-one", "e-two", "e-three"]


# ---------------------------------------------------------------------------
# Leaderboard


def test_leaderboard_unknown_task(store):
    with pytest.raises(UnknownTask):
        store.leaderboard_query("nope")


def test_leaderboard_empty(store):
    _seed_task(store)
    assert store.leaderboard_query("movies") == []


def test_leaderboard_two_pairs_two_rows(store):
    _seed_task(store)
    for i, agent in enumerate([("agent-a", "1.0"), ("agent-b", "1.0")]):
        experiment_id = f"e{i}"
        store.put_config(experiment_id, {"task": "movies"})
        store.put_state(experiment_id, _state())
        store.put_results(experiment_id, _results(experiment_id, agent, ("sim", "1.0"), [1.0, 0.0]))
    rows = store.leaderboard_query("movies")
    assert len(rows) == 2
    assert rows[0]["agent"]["name"] == "agent-a"
    assert rows[1]["agent"]["name"] == "agent-b"
    assert rows[0]["metrics"]["success_rate"]["mean"] == pytest.approx(0.5)


def test_leaderboard_pools_repeated_pairs(store):
    _seed_task(store)
    # 10 + 10 conversations with 6 and 8 successes -> 14/20 = 0.7
    runs = [
        ("e0", [1.0] * 6 + [0.0] * 4),
        ("e1", [1.0] * 8 + [0.0] * 2),
    ]
    for experiment_id, scores in runs:
        store.put_config(experiment_id, {"task": "movies"})
        store.put_state(experiment_id, _state())
        store.put_results(
            experiment_id, _results(experiment_id, ("agent-a", "1.0"), ("sim", "1.0"), scores)
        )
    rows = store.leaderboard_query("movies")
    assert len(rows) == 1
    entry = rows[0]["metrics"]["success_rate"]
    assert entry["mean"] == pytest.approx(0.7)
    assert entry["count"] == 20
    assert sorted(rows[0]["experiment_ids"]) == ["e0", "e1"]


def test_leaderboard_ignores_non_done(store):
    _seed_task(store)
    store.put_config("e0", {"task": "movies"})
    store.put_state("e0", _state("FAILED"))
    store.put_results("e0", _results("e0", ("a", "1"), ("s", "1"), [1.0]))
    assert store.leaderboard_query("movies") == []


def test_leaderboard_ignores_other_tasks(store):
    _seed_task(store)
    store.put_config("e0", {"task": "other"})
    store.put_state("e0", _state())
    store.put_results("e0", _results("e0", ("a", "1"), ("s", "1"), [1.0]))
    assert store.leaderboard_query("movies") == []


def test_leaderboard_pooling_equals_recompute(store):
    _seed_task(store)
    import random

    rng = random.Random(13)
    all_scores = []
    for i in range(4):
        scores = [float(rng.random() < 0.6) for _ in range(rng.randint(3, 9))]
        all_scores.extend(scores)
        store.put_config(f"e{i}", {"task": "movies"})
        store.put_state(f"e{i}", _state())
        store.put_results(f"e{i}", _results(f"e{i}", ("a", "1"), ("s", "1"), scores))
    rows = store.leaderboard_query("movies")
    entry = rows[0]["metrics"]["success_rate"]
    assert entry["mean"] == pytest.approx(sum(all_scores) / len(all_scores))
    assert entry["count"] == len(all_scores)
