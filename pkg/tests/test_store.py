import json

import pytest

from synthsearch.errors import ExecutionError, LoadError, ValidationError
from synthsearch.executor import Sample
from synthsearch.metrics import Metric, MetricSet
from synthsearch.prompts import PromptPack
from synthsearch.store import RunStore, normalized_event_lines, replay_tree
from synthsearch.workflow import ModificationRecord, SearchTree

from conftest import make_config, make_evaluator, make_gateway, make_workflow

PACK = PromptPack.load_default()


def init_payload(tree, config=None):
    payload = {"node": tree.get(tree.root).to_dict()}
    if config is not None:
        payload["config"] = config.to_dict()
    return payload


class TestEventLog:
    def test_append_assigns_consecutive_seq(self, tmp_path):
        store = RunStore(tmp_path / "r")
        tree = SearchTree.create_root(make_workflow(), 3.0)
        store.append_event("init", init_payload(tree))
        store.append_event("selected", {"iteration": 1, "node": 0})
        events = store.read_events()
        assert [e["seq"] for e in events] == [1, 2]
        assert [e["kind"] for e in events] == ["init", "selected"]

    def test_reopen_continues_sequence(self, tmp_path):
        tree = SearchTree.create_root(make_workflow(), 3.0)
        RunStore(tmp_path / "r").append_event("init", init_payload(tree))
        store = RunStore(tmp_path / "r")
        event = store.append_event("selected", {"iteration": 1, "node": 0})
        assert event.seq == 2

    def test_after_seq_filter(self, tmp_path):
        store = RunStore(tmp_path / "r")
        tree = SearchTree.create_root(make_workflow(), 3.0)
        store.append_event("init", init_payload(tree))
        store.append_event("selected", {"iteration": 1, "node": 0})
        store.append_event("selected", {"iteration": 2, "node": 0})
        assert [e["seq"] for e in store.read_events(after_seq=1)] == [2, 3]

    def test_unknown_kind_rejected(self, tmp_path):
        store = RunStore(tmp_path / "r")
        with pytest.raises(ValidationError):
            store.append_event("mystery", {})

    def test_missing_required_keys_rejected(self, tmp_path):
        store = RunStore(tmp_path / "r")
        with pytest.raises(ValidationError) as err:
            store.append_event("scored", {"iteration": 1})
        assert "hybrid_reward" in str(err.value)

    def test_seq_gap_detected_on_read(self, tmp_path):
        store = RunStore(tmp_path / "r")
        tree = SearchTree.create_root(make_workflow(), 3.0)
        store.append_event("init", init_payload(tree))
        store.append_event("selected", {"iteration": 1, "node": 0})
        lines = store.events_path.read_text().splitlines()
        store.events_path.write_text(lines[1] + "\n")  # drop seq 1
        with pytest.raises(LoadError) as err:
            RunStore(tmp_path / "r")
        assert "seq gap" in str(err.value)

    def test_corrupt_line_names_position(self, tmp_path):
        store = RunStore(tmp_path / "r")
        tree = SearchTree.create_root(make_workflow(), 3.0)
        store.append_event("init", init_payload(tree))
        with open(store.events_path, "a") as f:
            f.write('{"seq": 2, "kind": "selected", truncated\n')
        with pytest.raises(LoadError) as err:
            store.read_events()
        assert "line 2" in str(err.value)

    def test_normalized_lines_strip_wall_clock(self, tmp_path):
        store = RunStore(tmp_path / "r")
        tree = SearchTree.create_root(make_workflow(), 3.0)
        store.append_event("init", init_payload(tree))
        for line in normalized_event_lines(store.events_path):
            assert "timestamp" not in json.loads(line)


class TestTreeSnapshots:
    def test_round_trip(self, tmp_path):
        store = RunStore(tmp_path / "r")
        tree = SearchTree.create_root(make_workflow(), 3.0)
        child = tree.add_child(tree.root, make_workflow("wf-1"), ModificationRecord(description="m"))
        tree.set_reward(child, 4.0)
        store.save_tree(tree)
        assert store.load_tree().to_dict() == tree.to_dict()

    def test_missing_snapshot(self, tmp_path):
        with pytest.raises(LoadError):
            RunStore(tmp_path / "r").load_tree()

    def test_truncated_snapshot_reports_offset(self, tmp_path):
        store = RunStore(tmp_path / "r")
        store.save_tree(SearchTree.create_root(make_workflow(), 3.0))
        path = tmp_path / "r" / "tree.json"
        path.write_bytes(path.read_bytes()[:40])
        with pytest.raises(LoadError) as err:
            store.load_tree()
        assert "byte offset" in str(err.value)

    def test_metric_set_snapshot_per_iteration(self, tmp_path):
        store = RunStore(tmp_path / "r")
        ms = MetricSet(metrics=[Metric("clarity", "d", "p", "n")])
        store.save_metric_set(4, ms)
        saved = json.loads((tmp_path / "r" / "metrics" / "iter_004.json").read_text())
        assert saved[0]["name"] == "clarity"


class TestReplay:
    def test_replay_matches_snapshot_after_run(self, tmp_path):
        from synthsearch.engine import SearchEngine

        config = make_config(max_iterations=3)
        gateway = make_gateway()
        tree = SearchTree.create_root(make_workflow(), 4.0)
        store = RunStore(tmp_path / "r")
        store.append_event("init", init_payload(tree, config))
        SearchEngine(config, tree, gateway, make_evaluator(config, gateway, PACK), store).run()

        replayed = replay_tree(store.read_events())
        assert replayed.to_dict() == store.load_tree().to_dict()

    def test_replay_without_init_fails(self):
        with pytest.raises(LoadError):
            replay_tree([{"kind": "selected", "payload": {"iteration": 1, "node": 0}}])


def counting_runner(script_behavior=None):
    """A batch runner double; script_behavior maps call index -> exception."""
    calls = {"n": 0}

    def runner(workflow, batch_size, node_id):
        idx = calls["n"]
        calls["n"] += 1
        if script_behavior and idx in script_behavior:
            raise script_behavior[idx]
        return [Sample(payload={"text": f"b{idx}s{i}"}, source_node=node_id, index=i) for i in range(batch_size)]

    return runner, calls


class TestExport:
    def _tree(self):
        return SearchTree.create_root(make_workflow(), 4.0)

    def test_exact_count_across_batches(self, tmp_path):
        store = RunStore(tmp_path / "r")
        runner, calls = counting_runner()
        out = store.export_dataset(self._tree(), 0, count=10, batch_runner=runner, batch_size=5)
        lines = out.read_text().splitlines()
        assert len(lines) == 10
        assert calls["n"] == 2
        for line in lines:
            record = json.loads(line)
            assert record["_meta"]["node"] == 0

    def test_partial_last_batch_truncated(self, tmp_path):
        store = RunStore(tmp_path / "r")
        runner, _ = counting_runner()
        out = store.export_dataset(self._tree(), 0, count=7, batch_runner=runner, batch_size=5)
        assert len(out.read_text().splitlines()) == 7

    def test_manifest_contents(self, tmp_path):
        store = RunStore(tmp_path / "r")
        runner, _ = counting_runner()
        store.export_dataset(self._tree(), 0, count=3, batch_runner=runner, batch_size=3)
        manifest = json.loads((tmp_path / "r" / "export" / "manifest.json").read_text())
        assert manifest["count"] == 3
        assert manifest["node_id"] == 0
        assert len(manifest["workflow_digest"]) == 64

    def test_intermittent_failures_retried(self, tmp_path):
        store = RunStore(tmp_path / "r")
        boom = ExecutionError("flaky")
        runner, calls = counting_runner({0: boom, 1: boom})
        out = store.export_dataset(self._tree(), 0, count=4, batch_runner=runner, batch_size=4)
        assert len(out.read_text().splitlines()) == 4
        assert calls["n"] == 3

    def test_three_consecutive_failures_propagate(self, tmp_path):
        store = RunStore(tmp_path / "r")
        runner, _ = counting_runner({0: ExecutionError("a"), 1: ExecutionError("b"), 2: ExecutionError("c")})
        with pytest.raises(ExecutionError):
            store.export_dataset(self._tree(), 0, count=4, batch_runner=runner, batch_size=4)

    def test_zero_count_rejected(self, tmp_path):
        store = RunStore(tmp_path / "r")
        runner, _ = counting_runner()
        with pytest.raises(ValidationError):
            store.export_dataset(self._tree(), 0, count=0, batch_runner=runner, batch_size=4)

    def test_unevaluated_node_rejected(self, tmp_path):
        tree = self._tree()
        child = tree.add_child(tree.root, make_workflow("wf-1"), ModificationRecord(description="m"))
        runner, _ = counting_runner()
        with pytest.raises(ValidationError):
            RunStore(tmp_path / "r").export_dataset(tree, child, count=4, batch_runner=runner, batch_size=4)
