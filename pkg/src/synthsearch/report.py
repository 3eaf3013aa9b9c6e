"""Run reporting: per-iteration reward trace and tree summary as CSV, with
matching matplotlib figures rendered alongside.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .store import RunStore, replay_tree
from .workflow import SearchTree


def reward_trace_from_events(events: list[dict], top_k: int) -> list[list[float]]:
    """Top-k rewards after each successful iteration, replayed from the log."""
    tree = SearchTree()
    trace: list[list[float]] = []
    prefix: list[dict] = []
    for event in events:
        prefix.append(event)
        if event["kind"] == "backpropagated":
            tree = replay_tree(prefix)
            trace.append([tree.get(i).reward for i in tree.top_k_evaluated(top_k)])
    return trace


def write_report(run_dir: str | Path, out_dir: str | Path | None = None, top_k: int = 3, epsilon: float = 0.05) -> Path:
    """Write reward_trace.csv/.png and tree_summary.csv for a finished run."""
    store = RunStore(run_dir)
    out = Path(out_dir) if out_dir else store.directory / "report"
    out.mkdir(parents=True, exist_ok=True)

    events = store.read_events()
    trace = reward_trace_from_events(events, top_k)

    with open(out / "reward_trace.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["iteration"] + [f"rank_{r + 1}" for r in range(top_k)])
        for it, entry in enumerate(trace, start=1):
            writer.writerow([it] + [f"{v:.6f}" for v in entry] + [""] * (top_k - len(entry)))

    fig, ax = plt.subplots(figsize=(7, 4))
    iterations = range(1, len(trace) + 1)
    for rank in range(top_k):
        ys = [entry[rank] if rank < len(entry) else None for entry in trace]
        xs = [i for i, y in zip(iterations, ys) if y is not None]
        ys = [y for y in ys if y is not None]
        ax.plot(xs, ys, marker="o", markersize=3, label=f"rank {rank + 1}")
    if trace:
        final_best = trace[-1][0]
        ax.axhspan(final_best - epsilon, final_best + epsilon, alpha=0.15, color="gray", label=f"±{epsilon} band")
    ax.set_xlabel("iteration")
    ax.set_ylabel("reward")
    ax.set_ylim(1, 5.1)
    ax.set_title("Top-k reward trace")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(out / "reward_trace.png", dpi=150)
    plt.close(fig)

    tree = store.load_tree()
    with open(out / "tree_summary.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["node", "parent", "reward", "experiences", "modification"])
        for node_id in sorted(tree.nodes):
            node = tree.get(node_id)
            mod = node.workflow.parent_modification
            writer.writerow(
                [
                    node.id,
                    "" if node.parent is None else node.parent,
                    "" if node.reward is None else f"{node.reward:.6f}",
                    len(node.experiences),
                    mod.description if mod else "",
                ]
            )

    _render_tree_figure(tree, out / "tree.png")
    return out


def _render_tree_figure(tree: SearchTree, path: Path) -> None:
    """Simple layered tree drawing: depth on y, siblings spread on x."""
    depths: dict[int, int] = {tree.root: 0}
    order: list[int] = [tree.root]
    for node_id in order:
        for child in tree.get(node_id).children:
            depths[child] = depths[node_id] + 1
            order.append(child)
    by_depth: dict[int, list[int]] = {}
    for node_id, depth in depths.items():
        by_depth.setdefault(depth, []).append(node_id)
    pos = {}
    for depth, ids in by_depth.items():
        for i, node_id in enumerate(sorted(ids)):
            pos[node_id] = (i - (len(ids) - 1) / 2, -depth)

    fig, ax = plt.subplots(figsize=(7, 5))
    for node_id in order:
        node = tree.get(node_id)
        if node.parent is not None:
            x0, y0 = pos[node.parent]
            x1, y1 = pos[node_id]
            ax.plot([x0, x1], [y0, y1], color="lightgray", zorder=1)
    best = tree.best_node() if any(n.reward is not None for n in tree.nodes.values()) else None
    for node_id in order:
        node = tree.get(node_id)
        x, y = pos[node_id]
        color = "tab:orange" if node_id == best else "tab:blue"
        ax.scatter([x], [y], s=240, color=color, zorder=2)
        label = f"{node_id}\n{node.reward:.2f}" if node.reward is not None else f"{node_id}\n-"
        ax.annotate(label, (x, y), ha="center", va="center", fontsize=7, color="white", zorder=3)
    ax.set_axis_off()
    ax.set_title("Search tree (best node highlighted)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
