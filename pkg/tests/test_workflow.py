import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synthsearch.errors import NotFoundError, StateError, ValidationError
from synthsearch.workflow import (
    Experience,
    ModificationRecord,
    PromptSet,
    SearchTree,
    Workflow,
)

from conftest import make_workflow


def mod(desc="tweak prompt"):
    return ModificationRecord(description=desc, kind="prompt-edit")


def exp(source=0, reward=3.0, iteration=1):
    return Experience(modification=mod(), reward=reward, feedback="ok", source_node=source, iteration=iteration)


class TestCreateRoot:
    def test_single_evaluated_node(self):
        tree = SearchTree.create_root(make_workflow(), 3.5)
        assert len(tree.nodes) == 1
        assert tree.get(tree.root).reward == 3.5
        assert tree.iteration_count == 0

    def test_reward_below_scale_rejected(self):
        with pytest.raises(ValidationError):
            SearchTree.create_root(make_workflow(), 0.5)

    def test_scale_boundary(self):
        tree = SearchTree.create_root(make_workflow(), 5.0)
        root = tree.get(tree.root)
        assert root.reward == 5.0
        assert root.children == []


class TestAddChild:
    def test_child_under_root(self):
        tree = SearchTree.create_root(make_workflow(), 3.5)
        child = tree.add_child(tree.root, make_workflow("wf-1"), mod())
        assert len(tree.nodes) == 2
        assert tree.get(child).parent == tree.root
        assert tree.get(child).reward is None
        assert tree.get(child).experiences == []

    def test_unknown_parent(self):
        tree = SearchTree.create_root(make_workflow(), 3.5)
        with pytest.raises(NotFoundError):
            tree.add_child(99, make_workflow("wf-1"), mod())

    def test_ancestors_of_sibling(self):
        tree = SearchTree.create_root(make_workflow(), 3.5)
        children = [tree.add_child(tree.root, make_workflow(f"wf-{i}"), mod()) for i in range(3)]
        assert tree.ancestors(children[1]) == [tree.root]


class TestTopK:
    def _tree_with_rewards(self, rewards):
        tree = SearchTree.create_root(make_workflow(), rewards[0])
        ids = [tree.root]
        for i, r in enumerate(rewards[1:], 1):
            node_id = tree.add_child(tree.root, make_workflow(f"wf-{i}"), mod())
            tree.get(node_id).created_at = f"2026-01-01T00:00:{i:02d}+00:00"
            if r is not None:
                tree.set_reward(node_id, r)
            ids.append(node_id)
        return tree, ids

    def test_descending_with_unset_excluded(self):
        tree, ids = self._tree_with_rewards([4.0, 3.0, 3.0, None])
        assert tree.top_k_evaluated(3) == [ids[0], ids[1], ids[2]]

    def test_fewer_than_k(self):
        tree = SearchTree.create_root(make_workflow(), 4.0)
        assert tree.top_k_evaluated(3) == [tree.root]

    def test_tie_broken_by_creation_time(self):
        tree, ids = self._tree_with_rewards([2.0, 3.0, 3.0])
        assert tree.top_k_evaluated(1) == [ids[1]]

    def test_deterministic_total_order(self):
        tree, _ = self._tree_with_rewards([4.0, 3.0, 3.0, 2.5])
        assert tree.top_k_evaluated(4) == tree.top_k_evaluated(4)


class TestAncestors:
    def test_root_has_none(self):
        tree = SearchTree.create_root(make_workflow(), 3.5)
        assert tree.ancestors(tree.root) == []

    def test_depth_two(self):
        tree = SearchTree.create_root(make_workflow(), 3.5)
        child = tree.add_child(tree.root, make_workflow("wf-1"), mod())
        grandchild = tree.add_child(child, make_workflow("wf-2"), mod())
        assert tree.ancestors(grandchild) == [child, tree.root]

    def test_unknown_id(self):
        tree = SearchTree.create_root(make_workflow(), 3.5)
        with pytest.raises(NotFoundError):
            tree.ancestors(42)


class TestExperiences:
    def test_append(self):
        tree = SearchTree.create_root(make_workflow(), 3.5)
        tree.append_experience(tree.root, exp())
        assert len(tree.get(tree.root).experiences) == 1

    def test_fifo_order(self):
        tree = SearchTree.create_root(make_workflow(), 3.5)
        tree.append_experience(tree.root, exp(reward=2.0))
        tree.append_experience(tree.root, exp(reward=4.0))
        assert [e.reward for e in tree.get(tree.root).experiences] == [2.0, 4.0]

    def test_out_of_scale_reward_rejected(self):
        tree = SearchTree.create_root(make_workflow(), 3.5)
        with pytest.raises(ValidationError):
            tree.append_experience(tree.root, exp(reward=7.0))


class TestRewardImmutability:
    def test_overwrite_rejected(self):
        tree = SearchTree.create_root(make_workflow(), 3.5)
        child = tree.add_child(tree.root, make_workflow("wf-1"), mod())
        tree.set_reward(child, 4.0)
        with pytest.raises(StateError):
            tree.set_reward(child, 4.5)


class TestValidation:
    def test_prompt_set_needs_template(self):
        with pytest.raises(ValidationError):
            PromptSet(templates={}).validate()

    def test_undeclared_placeholder(self):
        ps = PromptSet(templates={"t": "hello {name}"})
        with pytest.raises(ValidationError):
            ps.validate()
        ps.placeholders = {"t": ["name"]}
        ps.validate()

    def test_modification_length_cap(self):
        with pytest.raises(ValidationError):
            ModificationRecord(description="x" * 501).validate()

    def test_empty_script(self):
        wf = make_workflow()
        wf.code.script = ""
        with pytest.raises(ValidationError):
            wf.validate()


@settings(max_examples=50, deadline=None)
@given(parents=st.lists(st.integers(min_value=0, max_value=1000), min_size=0, max_size=40))
def test_tree_property_random_insertions(parents):
    """node_count == edge_count + 1 and ancestors() always reaches the root."""
    tree = SearchTree.create_root(make_workflow(), 3.0)
    ids = [tree.root]
    for i, pick in enumerate(parents):
        parent = ids[pick % len(ids)]
        ids.append(tree.add_child(parent, make_workflow(f"wf-{i + 1}"), mod()))
    edges = sum(len(n.children) for n in tree.nodes.values())
    assert len(tree.nodes) == edges + 1
    for node_id in ids:
        path = tree.ancestors(node_id)
        assert (path[-1] if path else node_id) == tree.root


def test_round_trip_field_by_field():
    tree = SearchTree.create_root(make_workflow(), 3.0)
    a = tree.add_child(tree.root, make_workflow("wf-1"), mod("add verifier"))
    tree.set_reward(a, 4.25)
    tree.append_experience(tree.root, exp(source=a, reward=4.25))
    tree.get(a).eval_detail = {"sample_score": 4.5, "suggestions": "tighten wording"}
    tree.iteration_count = 1

    restored = SearchTree.from_dict(tree.to_dict())
    assert restored.to_dict() == tree.to_dict()


def test_bundle_round_trip(tmp_path):
    from synthsearch.workflow import load_bundle, save_bundle

    wf = make_workflow("wf-bundle")
    save_bundle(wf, tmp_path / "bundle")
    loaded = load_bundle(tmp_path / "bundle")
    assert loaded.id == wf.id
    assert loaded.code.script == wf.code.script
    assert loaded.prompts.templates == wf.prompts.templates
    # canonical JSON: stable bytes for golden comparisons
    first = (tmp_path / "bundle" / "workflow.json").read_bytes()
    save_bundle(wf, tmp_path / "bundle2")
    assert (tmp_path / "bundle2" / "workflow.json").read_bytes() == first
