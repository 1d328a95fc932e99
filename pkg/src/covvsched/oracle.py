"""Cluster node state and the brute-force task grouping oracle.

The inventory maps every node to its current attribute values. Suitability
of a node for a task is decided purely by constraint matching (no capacity
model here), and the suitable-node count buckets tasks into 26 groups:
group 0 for exactly one suitable node, groups 1..25 in configurable
increments. The counting path is a deliberate exhaustive scan; it is the
labeling ground truth everything else is checked against.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Mapping

from .covv import UNSET, FeatureRegistry, TaskConstraintSet, value_satisfies

log = logging.getLogger(__name__)

#: Label for tasks with zero suitable nodes. Excluded from training data.
UNSCHEDULABLE = -1

GROUP_COUNT = 26


@dataclass
class GroupingConfig:
    """Suitable-node bucketing. 500 is the default increment; 360 suits
    cells of roughly 9.4k nodes."""

    increment: int = 500

    def __post_init__(self):
        if self.increment < 1:
            raise ValueError(f"increment must be >= 1, got {self.increment}")


class NodeInventory:
    """Mutable map of node id to attribute values.

    A missing attribute reads as UNSET. Single writer (trace replay order
    defines state); `version` bumps on every mutation so readers can tell
    whether a cached result is stale.
    """

    def __init__(self):
        self.nodes: dict[int, dict[str, str]] = {}
        self.version = 0

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    def value(self, node: int, attribute: str):
        attrs = self.nodes.get(node)
        if attrs is None:
            return UNSET
        return attrs.get(attribute, UNSET)

    def copy(self) -> "NodeInventory":
        snap = NodeInventory()
        snap.nodes = {n: dict(attrs) for n, attrs in self.nodes.items()}
        snap.version = self.version
        return snap


def apply_machine_event(
    inventory: NodeInventory,
    registry: FeatureRegistry,
    node: int,
    attribute: str,
    value: str | None,
) -> None:
    """Set one node attribute, or remove it when value is None.

    Setting registers the concrete value as a registry column; this is the
    source of feature growth during cluster operation. Removing an absent
    attribute is a no-op.
    """
    if value is None:
        attrs = inventory.nodes.get(node)
        if attrs is not None and attribute in attrs:
            del attrs[attribute]
            inventory.version += 1
        return
    inventory.nodes.setdefault(node, {})[attribute] = value
    registry.register(attribute, value)
    inventory.version += 1


def node_satisfies(attributes: Mapping[str, str], task: TaskConstraintSet) -> bool:
    """True iff every constraint holds, reading UNSET for missing attributes."""
    for constraint in task.constraints:
        if not value_satisfies(constraint, attributes.get(constraint.attribute, UNSET)):
            return False
    return True


def count_suitable(inventory: NodeInventory, task: TaskConstraintSet) -> int:
    """Number of nodes satisfying the task. Exhaustive scan over the inventory."""
    n = 0
    for attrs in inventory.nodes.values():
        if node_satisfies(attrs, task):
            n += 1
    return n


def suitable_nodes(inventory: NodeInventory, task: TaskConstraintSet) -> list[int]:
    """Ids of all suitable nodes, ascending."""
    found = [node for node, attrs in inventory.nodes.items() if node_satisfies(attrs, task)]
    found.sort()
    return found


def group_label(count: int, cfg: GroupingConfig) -> int:
    """Bucket a suitable-node count into a group.

    0 nodes is UNSCHEDULABLE, exactly 1 node is group 0, otherwise
    ceil(count / increment) clamped to 25 so group 1 starts right next to
    group 0.
    """
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    if count == 0:
        return UNSCHEDULABLE
    if count == 1:
        return 0
    return min(GROUP_COUNT - 1, -(-count // cfg.increment))


def inventory_to_jsonl(inventory: NodeInventory) -> str:
    """Serialize for test fixtures: one (node, attribute, value) triple per line."""
    lines = []
    for node in sorted(inventory.nodes):
        for attribute in sorted(inventory.nodes[node]):
            lines.append(json.dumps(
                {"node": node, "attr": attribute, "val": inventory.nodes[node][attribute]},
                separators=(",", ":"),
            ))
    return "\n".join(lines) + ("\n" if lines else "")


def inventory_from_jsonl(text: str, registry: FeatureRegistry | None = None) -> NodeInventory:
    """Rebuild an inventory from its fixture form, optionally feeding a registry."""
    inventory = NodeInventory()
    reg = registry if registry is not None else FeatureRegistry()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            node, attribute, value = obj["node"], obj["attr"], obj["val"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ValueError(f"line {lineno}: bad inventory record: {exc}") from None
        apply_machine_event(inventory, reg, node, attribute, value)
    return inventory
