"""End-to-end continuous-learning runs.

Replays a trace in time order. Whenever the feature registry grows and
tasks have accumulated since the previous step, the accumulated window
(merged with a sliding history of recent windows) becomes a dataset
snapshot: it is split, the growing arm extends its carried model and
fine-tunes, the fully-retrain arm trains from scratch, and both arms are
evaluated into step reports. A final step flushes whatever window remains
at end of trace.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .covv import FeatureRegistry
from .evalkit import Split, SplitConfig, StepReport, stratified_split, write_report
from .growing import (
    MODE_FAILED,
    TrainConfig,
    TrainOutcome,
    extend_input_layer,
    train_full,
    train_growing,
)
from .neural import TwoLayerClassifier
from .oracle import GroupingConfig, NodeInventory, apply_machine_event
from .trace import (
    ConfigError,
    MachineEvent,
    SyntheticTraceConfig,
    TaskEvent,
    build_snapshot,
    generate_trace,
    parse_events,
    read_trace,
)

log = logging.getLogger(__name__)

ARM_GROWING = "growing"
ARM_FULLY_RETRAIN = "fully_retrain"
ARMS = (ARM_GROWING, ARM_FULLY_RETRAIN)

REPORT_CSV = "step_reports.csv"
REPORT_JSON = "step_reports.json"
MANIFEST = "manifest.json"


@dataclass
class RunConfig:
    trace: SyntheticTraceConfig | None = None
    trace_path: str | None = None
    grouping: GroupingConfig = field(default_factory=GroupingConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    seed: int = 0
    out_dir: str = "run-output"
    arms: tuple = ARMS
    history_windows: int = 3  # previous windows merged into each snapshot
    bulk_growth_limit: int = 40  # warn when one step adds more features
    split_bulk_growth: bool = False  # grow the model in chunks of <= limit

    def __post_init__(self):
        self.arms = tuple(self.arms)
        for arm in self.arms:
            if arm not in ARMS:
                raise ConfigError(f"unknown arm {arm!r}, expected one of {ARMS}")
        if not self.arms:
            raise ConfigError("at least one arm is required")
        if self.trace is None and self.trace_path is None:
            raise ConfigError("either a synthetic trace config or a trace path is required")
        if self.history_windows < 0:
            raise ConfigError(f"history_windows must be >= 0, got {self.history_windows}")
        if self.bulk_growth_limit < 1:
            raise ConfigError(f"bulk_growth_limit must be >= 1, got {self.bulk_growth_limit}")


def _dataclass_from_dict(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"section {where!r} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {where} config: {exc}") from None


def load_run_config(doc: dict, **overrides) -> RunConfig:
    """Build a RunConfig from a parsed config file plus flag overrides."""
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a JSON object")
    known_sections = {"trace", "grouping", "train", "split", "sched", "run"}
    unknown = sorted(set(doc) - known_sections)
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(unknown)}")
    kwargs = dict(doc.get("run", {}))
    if "trace" in doc:
        kwargs["trace"] = _dataclass_from_dict(SyntheticTraceConfig, doc["trace"], "trace")
    kwargs["grouping"] = _dataclass_from_dict(GroupingConfig, doc.get("grouping", {}), "grouping")
    kwargs["train"] = _dataclass_from_dict(TrainConfig, doc.get("train", {}), "train")
    kwargs["split"] = _dataclass_from_dict(SplitConfig, doc.get("split", {}), "split")
    for key, value in overrides.items():
        if value is not None:
            kwargs[key] = value
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(kwargs) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in run: {', '.join(unknown)}")
    return RunConfig(**kwargs)


def config_digest(cfg: RunConfig) -> str:
    doc = dataclasses.asdict(cfg)
    doc.pop("out_dir", None)  # output location does not shape the results
    canonical = json.dumps(doc, sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class RunResult:
    manifest: dict
    reports: list[StepReport]
    models: dict  # final model per arm

    @property
    def summary(self) -> dict:
        return self.manifest["summary"]


def _slice_split(split: Split, width: int) -> Split:
    return Split(split.X_train[:, :width], split.y_train,
                 split.X_test[:, :width], split.y_test, split.stratified)


class _GrowingArm:
    """Carries one model across steps, extending its input layer each time."""

    def __init__(self, run_cfg: RunConfig):
        self.cfg = run_cfg
        self.model: TwoLayerClassifier | None = None

    def train_step(self, split: Split, snapshot_width: int, step_time: int,
                   train_cfg: TrainConfig) -> TrainOutcome:
        if self.model is None:
            # nothing to transfer yet; the first step trains from scratch
            self.model, outcome = train_full(snapshot_width, split, train_cfg)
            return outcome
        if self.cfg.split_bulk_growth and snapshot_width - self.model.features_count > self.cfg.bulk_growth_limit:
            return self._train_chunked(split, snapshot_width, step_time, train_cfg)
        extended = extend_input_layer(self.model, snapshot_width, step_time=step_time)
        self.model, outcome = train_growing(extended, split, train_cfg)
        return outcome

    def _train_chunked(self, split: Split, snapshot_width: int, step_time: int,
                       train_cfg: TrainConfig) -> TrainOutcome:
        # gradual growth: extend and fine-tune in column chunks, reporting
        # one aggregated outcome for the step
        total_epochs = 0
        max_attempts = 0
        outcome = None
        width = self.model.features_count
        while width < snapshot_width:
            width = min(width + self.cfg.bulk_growth_limit, snapshot_width)
            extended = extend_input_layer(self.model, width, step_time=step_time)
            self.model, outcome = train_growing(extended, _slice_split(split, width), train_cfg)
            total_epochs += outcome.epochs_used
            max_attempts = max(max_attempts, outcome.attempts_used)
        return TrainOutcome(outcome.mode, total_epochs, max_attempts, outcome.accuracy,
                            outcome.group0_f1, outcome.wall_time_s)


def run_simulation(cfg: RunConfig) -> RunResult:
    """Replay, retrain per feature-growth step, and write reports.

    Outputs land in cfg.out_dir: step reports as CSV and JSON plus a
    manifest with the config hash and per-arm summary. Identical configs
    produce byte-identical reports.
    """
    if cfg.trace_path is not None:
        events = read_trace(cfg.trace_path)
    else:
        events = list(parse_events(generate_trace(cfg.trace)))

    registry = FeatureRegistry()
    inventory = NodeInventory()
    window: list = []
    history: deque = deque(maxlen=cfg.history_windows)
    growing_arm = _GrowingArm(cfg)
    reports: list[StepReport] = []
    failed_steps = {arm: 0 for arm in cfg.arms}
    state = {"last_width": 0, "step_index": 0}

    def run_step(step_time: int) -> None:
        step = state["step_index"]
        tasks = [t for past in history for t in past] + window
        snapshot = build_snapshot(tasks, registry, inventory, cfg.grouping, step_time=step_time)
        prev_width = state["last_width"]
        history.append(list(window))
        window.clear()
        state["last_width"] = len(registry)
        state["step_index"] += 1

        added = snapshot.features_count - prev_width
        if prev_width and added > cfg.bulk_growth_limit:
            log.warning("step %d adds %d features at once (limit %d); accuracy may suffer",
                        step, added, cfg.bulk_growth_limit)
        if len(snapshot) < 4:
            log.warning("skipping step %d at t=%d: only %d usable row(s)",
                        step, step_time, len(snapshot))
            return

        split = stratified_split(
            snapshot, dataclasses.replace(cfg.split, seed=cfg.seed + 10_000 + step))
        for arm in cfg.arms:
            if arm == ARM_GROWING:
                train_cfg = dataclasses.replace(cfg.train, seed=cfg.seed + 20_000 + step)
                outcome = growing_arm.train_step(split, snapshot.features_count,
                                                 step_time, train_cfg)
            else:
                train_cfg = dataclasses.replace(cfg.train, seed=cfg.seed + 30_000 + step)
                _, outcome = train_full(snapshot.features_count, split, train_cfg)
            if outcome.mode == MODE_FAILED:
                failed_steps[arm] += 1
                log.warning("step %d arm %s failed after %d attempts; run continues",
                            step, arm, outcome.attempts_used)
            reports.append(StepReport(
                step_time=step_time,
                features_count=snapshot.features_count,
                model=arm,
                epochs=outcome.epochs_used,
                attempts=outcome.attempts_used,
                accuracy=outcome.accuracy,
                group0_f1=outcome.group0_f1,
            ))

    last_time = 0
    i = 0
    while i < len(events):
        # apply one timestamp group; growth plus a pending window marks a step
        t = events[i].time
        group = []
        while i < len(events) and events[i].time == t:
            group.append(events[i])
            i += 1
        for event in group:
            if isinstance(event, MachineEvent):
                apply_machine_event(inventory, registry, event.node, event.attribute, event.value)
        if len(registry) > state["last_width"]:
            if window:
                run_step(step_time=t)
            else:
                # growth with nothing to train on (e.g. bootstrap); the new
                # columns simply fold into the next step
                state["last_width"] = len(registry)
        for event in group:
            if isinstance(event, TaskEvent):
                window.append(event.task)
        last_time = t
    if window:
        run_step(step_time=last_time)

    summary = _summarize(reports, cfg.arms, failed_steps)
    manifest = {
        "config_hash": config_digest(cfg),
        "version": __version__,
        "report_paths": [REPORT_CSV, REPORT_JSON],
        "summary": summary,
    }
    os.makedirs(cfg.out_dir, exist_ok=True)
    write_report(reports, os.path.join(cfg.out_dir, REPORT_CSV), fmt="csv")
    write_report(reports, os.path.join(cfg.out_dir, REPORT_JSON), fmt="json")
    with open(os.path.join(cfg.out_dir, MANIFEST), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")

    models = {}
    if growing_arm.model is not None:
        models[ARM_GROWING] = growing_arm.model
    return RunResult(manifest=manifest, reports=reports, models=models)


def _summarize(reports: list[StepReport], arms, failed_steps: dict) -> dict:
    summary = {}
    for arm in arms:
        rows = [r for r in reports if r.model == arm]
        f1s = [r.group0_f1 for r in rows if r.group0_f1 is not None]
        summary[arm] = {
            "steps": len(rows),
            "mean_accuracy": float(np.mean([r.accuracy for r in rows])) if rows else None,
            "mean_group0_f1": float(np.mean(f1s)) if f1s else None,
            "total_epochs": int(sum(r.epochs for r in rows)),
            "failed_steps": failed_steps.get(arm, 0),
        }
    return summary
