"""Crossed-design orchestration, the append-only run log, and resume."""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

from .ingest import ComplianceLedger, ParseOutcome, parse_response, update_compliance
from .lpn import IncompleteCellError, lpn, score_cell
from .providers import (
    ModelSpec,
    ProviderFatalError,
    SampleFailedError,
    SamplingPolicy,
    effective_temperature,
    make_provider,
    mock_generate,
)
from .scenarios import FRAMES, Frame, Scenario, render_prompt

log = logging.getLogger(__name__)


class PlanMismatchError(RuntimeError):
    """The log on disk belongs to a different plan."""


class RunAborted(RuntimeError):
    """A run-fatal provider error stopped the run; the log is a valid checkpoint."""


@dataclass(frozen=True)
class RunPlan:
    run_id: str
    models: list
    scenarios: list
    policy: SamplingPolicy = field(default_factory=SamplingPolicy)
    frames: tuple = FRAMES
    ablation: str = "none"
    seed: int = 0

    def digest(self) -> str:
        """Hash of everything that affects what is asked and how."""
        canon = {
            "models": [m.to_dict() for m in self.models],
            "prompts": {
                s.id: {f.value: render_prompt(s, f).digest for f in self.frames} for s in self.scenarios
            },
            "frames": [f.value for f in self.frames],
            "policy": {"n_samples": self.policy.n_samples, "temperature": self.policy.temperature},
            "ablation": self.ablation,
            "seed": self.seed,
        }
        return hashlib.sha256(json.dumps(canon, sort_keys=True).encode()).hexdigest()

    def tasks(self):
        """All (model_id, scenario_id, frame, draw) tuples, round-robin across models."""
        per_model = [
            [
                (m.model_id, s.id, f, d)
                for s in self.scenarios
                for d in range(self.policy.n_samples)
                for f in self.frames
            ]
            for m in self.models
        ]
        for batch in itertools.zip_longest(*per_model):
            yield from (t for t in batch if t is not None)


def plan_cardinality(plan_or_models, n_scenarios: int | None = None, n_frames: int = 4,
                     n_samples: int | None = None) -> int:
    if isinstance(plan_or_models, RunPlan):
        p = plan_or_models
        return len(p.models) * len(p.scenarios) * len(p.frames) * p.policy.n_samples
    return int(plan_or_models) * int(n_scenarios) * int(n_frames) * int(n_samples)


@dataclass
class RunRecord:
    run_id: str
    model_id: str
    scenario_id: str
    frame: str
    draw_index: int
    timestamp: str
    temperature_used: float | str
    prompt_hash: str
    raw_response: str
    parse: ParseOutcome
    lpn_action: int | None

    @property
    def key(self) -> tuple:
        return (self.model_id, self.scenario_id, self.frame, self.draw_index)

    def to_json(self) -> str:
        d = {
            "run_id": self.run_id,
            "model_id": self.model_id,
            "scenario_id": self.scenario_id,
            "frame": self.frame,
            "draw_index": self.draw_index,
            "timestamp": self.timestamp,
            "temperature_used": self.temperature_used,
            "prompt_hash": self.prompt_hash,
            "raw_response": self.raw_response,
            "parse": self.parse.to_dict(),
            "lpn_action": self.lpn_action,
        }
        return json.dumps(d, ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> RunRecord:
        d = json.loads(line)
        d["parse"] = ParseOutcome.from_dict(d["parse"], d["raw_response"])
        return cls(**d)


class JsonlSink:
    """Append-only JSON-lines run log ``{run_id}.jsonl`` plus a plan sidecar."""

    def __init__(self, directory, run_id: str):
        self.dir = Path(directory)
        self.run_id = run_id
        self.path = self.dir / f"{run_id}.jsonl"
        self.plan_path = self.dir / f"{run_id}.plan.json"

    def write_plan(self, plan: RunPlan) -> None:
        self.dir.mkdir(parents=True, exist_ok=True)
        meta = {
            "run_id": plan.run_id,
            "plan_digest": plan.digest(),
            "models": [m.model_id for m in plan.models],
            "scenarios": [s.id for s in plan.scenarios],
            "policy": plan.policy.to_dict(),
            "ablation": plan.ablation,
            "seed": plan.seed,
        }
        if self.plan_path.exists():
            old = json.loads(self.plan_path.read_text())
            if old["plan_digest"] != meta["plan_digest"]:
                raise PlanMismatchError(f"{self.plan_path} belongs to a different plan")
            return
        self.plan_path.write_text(json.dumps(meta, indent=2) + "\n")

    def plan_digest(self) -> str | None:
        if not self.plan_path.exists():
            return None
        return json.loads(self.plan_path.read_text())["plan_digest"]

    def read(self) -> list[RunRecord]:
        if not self.path.exists():
            return []
        out = []
        with self.path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    out.append(RunRecord.from_json(line))
                except (ValueError, KeyError, TypeError):
                    log.warning("%s:%d: corrupted record ignored", self.path, lineno)
        return out

    def __enter__(self):
        self.dir.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("a+", encoding="utf-8")
        self._fh.seek(0, 2)
        if self._fh.tell() > 0:
            self._fh.seek(self._fh.tell() - 1)
            if self._fh.read(1) != "\n":
                # seal a torn trailing line so the next record starts cleanly
                self._fh.write("\n")
        return self

    def append(self, record: RunRecord) -> None:
        self._fh.write(record.to_json() + "\n")
        self._fh.flush()

    def __exit__(self, *exc):
        self._fh.close()


class MemorySink:
    def __init__(self, run_id: str = "memory"):
        self.run_id = run_id
        self.records: list[RunRecord] = []
        self._digest = None

    def write_plan(self, plan: RunPlan) -> None:
        d = plan.digest()
        if self._digest is not None and self._digest != d:
            raise PlanMismatchError("sink holds a different plan")
        self._digest = d

    def plan_digest(self):
        return self._digest

    def read(self):
        return list(self.records)

    def __enter__(self):
        return self

    def append(self, record: RunRecord) -> None:
        self.records.append(record)

    def __exit__(self, *exc):
        pass


@dataclass
class RunSummary:
    run_id: str
    attempts: dict = field(default_factory=lambda: defaultdict(int))
    valid: dict = field(default_factory=lambda: defaultdict(int))
    invalid: dict = field(default_factory=lambda: defaultdict(int))
    failures: dict = field(default_factory=lambda: defaultdict(int))
    written: int = 0

    def to_dict(self) -> dict:
        models = sorted(set(self.attempts))
        return {
            "run_id": self.run_id,
            "written": self.written,
            "models": {
                m: {
                    "attempts": self.attempts[m],
                    "valid": self.valid[m],
                    "invalid": self.invalid[m],
                    "failures": self.failures[m],
                }
                for m in models
            },
        }


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def resume(plan: RunPlan, sink) -> list[tuple]:
    """Tuples of ``plan`` not yet present in ``sink``."""
    digest = sink.plan_digest()
    if digest is not None and digest != plan.digest():
        raise PlanMismatchError(f"run {plan.run_id}: log was written under a different plan")
    done = {r.key for r in sink.read() if r.run_id == plan.run_id}
    return [t for t in plan.tasks() if (t[0], t[1], t[2].value, t[3]) not in done]


def execute(plan: RunPlan, providers: dict | None, sink, only: list | None = None) -> RunSummary:
    """Attempt every pending (model, scenario, frame, draw) once and log it.

    Calls run concurrently up to the policy's limit; results are written by
    this thread in plan order.  A run-fatal provider error stops the run
    after everything already returned has been persisted.
    """
    specs = {m.model_id: m for m in plan.models}
    scen = {s.id: s for s in plan.scenarios}
    providers = dict(providers or {})
    for mid, spec in specs.items():
        providers.setdefault(mid, make_provider(spec))
    sink.write_plan(plan)
    pending = resume(plan, sink) if only is None else only
    prompts = {(s, f): render_prompt(scen[s], f) for s in scen for f in plan.frames}
    summary = RunSummary(plan.run_id)

    def call(task):
        mid, sid, frame, draw = task
        try:
            return task, providers[mid].sample(prompts[(sid, frame)], plan.policy, draw), None
        except SampleFailedError as exc:
            return task, "", exc

    fatal = None
    with sink, ThreadPoolExecutor(max_workers=plan.policy.concurrency_limit) as pool:
        results = pool.map(call, pending)
        try:
            for (mid, sid, frame, draw), raw, err in results:
                if err is not None:
                    outcome = ParseOutcome("invalid", "", None, "sample failed", str(err))
                    summary.failures[mid] += 1
                else:
                    outcome = parse_response(raw)
                temp = effective_temperature(specs[mid], plan.policy)
                rec = RunRecord(
                    run_id=plan.run_id,
                    model_id=mid,
                    scenario_id=sid,
                    frame=frame.value,
                    draw_index=draw,
                    timestamp=_now(),
                    temperature_used="provider_default" if temp is None else temp,
                    prompt_hash=prompts[(sid, frame)].digest,
                    raw_response=raw,
                    parse=outcome,
                    lpn_action=lpn(frame, outcome.record.decision) if outcome.valid else None,
                )
                sink.append(rec)
                summary.written += 1
                summary.attempts[mid] += 1
                if outcome.valid:
                    summary.valid[mid] += 1
                else:
                    summary.invalid[mid] += 1
        except ProviderFatalError as exc:
            fatal = exc
            pool.shutdown(wait=True, cancel_futures=True)
    if fatal is not None:
        raise RunAborted(f"run {plan.run_id} aborted: {fatal}; resume to continue") from fatal
    return summary


def temperature_ablation_plan(base: RunPlan, run_id: str | None = None) -> RunPlan:
    """Copy of ``base`` at temperature 0.0, restricted to models that expose it."""
    kept = [m for m in base.models if m.supports_temperature]
    dropped = [m.model_id for m in base.models if not m.supports_temperature]
    if dropped:
        log.warning("temperature ablation drops models without temperature control: %s", ", ".join(dropped))
    return replace(
        base,
        run_id=run_id or f"{base.run_id}-t0",
        models=kept,
        policy=replace(base.policy, temperature=0.0),
        ablation="temperature_zero",
    )


# ---------------------------------------------------------------- aggregation


def ledger_from_records(records) -> ComplianceLedger:
    ledger = ComplianceLedger()
    for r in records:
        update_compliance(ledger, r.model_id, r.parse)
    return ledger


def cells_from_records(records, n_planned: int, models=None):
    """Score every (model, scenario) cell; returns (cells, skipped messages)."""
    groups = defaultdict(list)
    for r in records:
        if models is not None and r.model_id not in models:
            continue
        decision = r.parse.record.decision if r.parse.valid else None
        groups[(r.model_id, r.scenario_id)].append((Frame(r.frame), r.draw_index, decision))
    cells, skipped = [], []
    for (mid, sid), obs in sorted(groups.items()):
        try:
            cells.append(score_cell(mid, sid, obs, n_planned))
        except IncompleteCellError as exc:
            log.warning("%s", exc)
            skipped.append(str(exc))
    return cells, skipped


def verify_prompt_integrity(records, scenarios) -> list[tuple]:
    """Keys of records whose prompt hash does not match a fresh render."""
    by_id = {s.id: s for s in scenarios}
    cache = {}
    bad = []
    for r in records:
        k = (r.scenario_id, r.frame)
        if k not in cache:
            s = by_id.get(r.scenario_id)
            cache[k] = render_prompt(s, Frame(r.frame)).digest if s else None
        if cache[k] != r.prompt_hash:
            bad.append(r.key)
    return bad


def simulate_cells(config, scenarios: list[Scenario], n_samples: int, model_id: str = "mock"):
    """Score one mock model on ``scenarios`` through generate -> parse -> LPN.

    Skips persistence; the data path is the same as :func:`execute`.
    """
    cells = []
    for s in scenarios:
        obs = []
        for f in FRAMES:
            for d in range(n_samples):
                out = parse_response(mock_generate(config, s.id, f, d))
                obs.append((f, d, out.record.decision if out.valid else None))
        cells.append(score_cell(model_id, s.id, obs, n_samples))
    return cells


__all__ = [
    "JsonlSink",
    "MemorySink",
    "ModelSpec",
    "PlanMismatchError",
    "RunAborted",
    "RunPlan",
    "RunRecord",
    "RunSummary",
    "cells_from_records",
    "execute",
    "ledger_from_records",
    "plan_cardinality",
    "resume",
    "simulate_cells",
    "temperature_ablation_plan",
    "verify_prompt_integrity",
]
