#!/usr/bin/env python3
"""Route single-node tasks past a burst of ordinary work.

Three waves of unconstrained tasks flood the queue; a handful of tasks
pinned to specific machines arrive right behind each wave. Under plain FIFO
they wait out the whole backlog. The analyzer policy classifies arrivals by
predicted suitable-node group and sends group-0 tasks to a high-priority
queue that is always drained first.
"""

import numpy as np

from covvsched import Constraint, GroupingConfig, NodeInventory, Op, TaskConstraintSet
from covvsched.schedsim import OracleClassifier, SchedulerConfig, simulate
from covvsched.trace import MachineEvent, TaskEvent

NODES = 40


def build_events(seed=1):
    rng = np.random.default_rng(seed)
    events = [MachineEvent(0, n, "uid", str(n)) for n in range(NODES)]
    tid = 0
    for wave in range(3):
        base = 1_000 + wave * 150_000
        for _ in range(400):
            events.append(TaskEvent(base, TaskConstraintSet(tid), 20_000))
            tid += 1
        for _ in range(4):
            pin = Constraint("uid", Op.EQ, (str(int(rng.integers(0, NODES))),))
            events.append(TaskEvent(base + 1_000, TaskConstraintSet(tid, (pin,)), 5_000))
            tid += 1
    return sorted(events, key=lambda e: e.time)


def run(policy, classifier=None):
    cfg = SchedulerConfig(policy=policy, dispatch_rate=4, slots_per_node=4)
    return simulate(build_events(), NodeInventory(), classifier, cfg)


fifo = run("fifo")
analyzer = run("co-analyzer", OracleClassifier(GroupingConfig()))

print(f"{'policy':<12} {'placed':>7} {'group-0 mean':>13} {'group-0 p95':>12} {'overall mean':>13}")
for name, result in (("fifo", fifo), ("co-analyzer", analyzer)):
    stats = result.latency_stats()
    g0 = stats["per_group"]["0"]
    print(f"{name:<12} {stats['placed']:>7} {g0['mean']:>13.1f} {g0['p95']:>12.1f} "
          f"{stats['overall']['mean']:>13.1f}")

f = fifo.latency_stats()["per_group"]["0"]["mean"]
c = analyzer.latency_stats()["per_group"]["0"]["mean"]
print(f"\nmean single-node-task wait drops from {f:.1f} to {c:.1f} ticks under the analyzer")
print("(placement counts are identical; routing only reorders the queue)")
