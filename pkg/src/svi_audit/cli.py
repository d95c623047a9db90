"""Command-line interface.

Exit codes: 0 success or gate pass, 2 gate fail, 3 run-fatal error,
4 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from .ingest import apply_exclusion_rule
from .lpn import model_svi
from .providers import ModelSpec, ProviderConfigError, SamplingPolicy, build_negation_fragile_mock, load_provider_registry
from .report import GATE_PROFILES, GateConfig, build_report, evaluate_gate, export
from .runner import (
    JsonlSink,
    PlanMismatchError,
    RunAborted,
    RunPlan,
    cells_from_records,
    execute,
    ledger_from_records,
    plan_cardinality,
    temperature_ablation_plan,
)
from .scenarios import ScenarioError, load_scenario_suite
from .stats import wilcoxon_signed_rank

log = logging.getLogger("svi_audit")

EXIT_OK, EXIT_GATE_FAIL, EXIT_FATAL, EXIT_CONFIG = 0, 2, 3, 4


class ConfigError(Exception):
    pass


def _load_yaml(path) -> dict:
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: malformed YAML: {exc}") from None
    return data or {}


def _resolve(base: Path, value):
    if value in (None, "default"):
        return None
    p = Path(value)
    return p if p.is_absolute() else base / p


def load_plan(args) -> tuple[RunPlan, Path]:
    """Build a RunPlan from --plan plus command-line overrides."""
    cfg, base = {}, Path.cwd()
    if args.plan:
        cfg = _load_yaml(args.plan)
        base = Path(args.plan).resolve().parent
    scen_src = args.scenarios or _resolve(base, cfg.get("scenarios"))
    prov_src = args.providers or _resolve(base, cfg.get("providers"))
    if prov_src is None:
        raise ConfigError("a provider registry is required (--providers or 'providers' in the plan)")
    scenarios = load_scenario_suite(scen_src)
    models = load_provider_registry(prov_src)
    wanted = cfg.get("models")
    if wanted:
        by_id = {m.model_id: m for m in models}
        missing = [m for m in wanted if m not in by_id]
        if missing:
            raise ConfigError(f"plan references unknown models: {missing}")
        models = [by_id[m] for m in wanted]
    pol = dict(cfg.get("policy") or {})
    if args.samples is not None:
        pol["n_samples"] = args.samples
    if args.temperature is not None:
        pol["temperature"] = None if args.temperature < 0 else args.temperature
    policy = SamplingPolicy(**pol)
    plan = RunPlan(
        run_id=str(cfg.get("run_id", "run")),
        models=models,
        scenarios=scenarios,
        policy=policy,
        ablation=str(cfg.get("ablation", "none")),
        seed=args.seed if args.seed is not None else int(cfg.get("seed", 0)),
    )
    out = Path(args.out) if args.out else _resolve(base, cfg.get("out", "runs")) or Path("runs")
    return plan, out


def _write_report(records, plan_models, scenarios, out: Path, seed: int, min_compliance: float, n_samples: int):
    ledger = ledger_from_records(records)
    included, excluded = apply_exclusion_rule(ledger, min_compliance)
    if excluded:
        log.warning("excluded for compliance < %.0f%%: %s", min_compliance * 100, ", ".join(sorted(excluded)))
    cells, skipped = cells_from_records(records, n_samples, models=included)
    report = build_report(
        cells,
        ledger,
        plan_models,
        seed=seed,
        scenario_domains={s.id: s.domain for s in scenarios},
        excluded_models=excluded,
        skipped_cells=skipped,
    )
    order = [s.id for s in scenarios]
    export(report, out, "json")
    export(report, out, "csv_bundle", scenario_order=order)
    return report


def _print(obj):
    print(json.dumps(obj, indent=2))


def cmd_run(args) -> int:
    plan, out = load_plan(args)
    log.info("run %s: %d records planned", plan.run_id, plan_cardinality(plan))
    summary = execute(plan, None, JsonlSink(out, plan.run_id))
    _print(summary.to_dict())
    return EXIT_OK


def cmd_report(args) -> int:
    if args.run_log:
        log_path = Path(args.run_log)
        sink = JsonlSink(log_path.parent, log_path.stem)
        meta = json.loads(sink.plan_path.read_text()) if sink.plan_path.exists() else {}
        scenarios = load_scenario_suite(args.scenarios)
        models = load_provider_registry(args.providers) if args.providers else []
        n = args.samples or meta.get("policy", {}).get("n_samples", 30)
        seed = args.seed if args.seed is not None else meta.get("seed", 0)
        out = Path(args.out or log_path.parent / f"{log_path.stem}-report")
    else:
        plan, run_dir = load_plan(args)
        sink = JsonlSink(run_dir, plan.run_id)
        scenarios, models, n, seed = plan.scenarios, plan.models, plan.policy.n_samples, plan.seed
        out = Path(args.out) / f"{plan.run_id}-report" if args.out else run_dir / f"{plan.run_id}-report"
    records = sink.read()
    if not records:
        raise ConfigError(f"no records in {sink.path}")
    report = _write_report(records, models, scenarios, out, seed, args.min_compliance, n)
    g = report.global_summary
    _print({"report_dir": str(out), "n_cells": g["n_cells"], "mean_svi": g["mean_svi"],
            "excluded_models": report.excluded_models})
    return EXIT_OK


def _gate_config(args) -> GateConfig:
    if args.gate_threshold is not None:
        return GateConfig("custom", args.gate_threshold, args.gate_scope)
    return GateConfig(args.gate_profile, None, args.gate_scope)


def cmd_gate(args) -> int:
    gate = _gate_config(args)
    if not args.report:
        raise ConfigError("gate needs --report (report.json written by 'report' or 'simulate')")
    path = Path(args.report)
    if path.is_dir():
        path = path / "report.json"
    try:
        report = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"report not found: {path}") from None
    verdict = evaluate_gate(report, gate)
    _print(verdict.to_dict())
    return verdict.exit_code


def cmd_ablate(args) -> int:
    base, out = load_plan(args)
    plan = temperature_ablation_plan(base)
    if not plan.models:
        print("no temperature-supporting models; ablation plan is empty", file=sys.stderr)
        return EXIT_OK
    execute(plan, None, JsonlSink(out, plan.run_id))
    result = {"ablation_run": plan.run_id, "base_run": base.run_id}
    base_records = JsonlSink(out, base.run_id).read()
    if base_records:
        n = base.policy.n_samples
        b_cells, _ = cells_from_records(base_records, n)
        a_cells, _ = cells_from_records(JsonlSink(out, plan.run_id).read(), n)
        pairs = []
        for m in plan.models:
            bc = [c for c in b_cells if c.model == m.model_id]
            ac = [c for c in a_cells if c.model == m.model_id]
            if bc and ac:
                pairs.append((m.model_id, model_svi(bc), model_svi(ac)))
        if pairs:
            w = wilcoxon_signed_rank([p[1] for p in pairs], [p[2] for p in pairs])
            result.update({
                "models": [{"model_id": m, "svi_base": b, "svi_t0": a} for m, b, a in pairs],
                "mean_svi_base": sum(p[1] for p in pairs) / len(pairs),
                "mean_svi_t0": sum(p[2] for p in pairs) / len(pairs),
                "wilcoxon": w.to_dict(),
            })
    else:
        result["note"] = f"base run {base.run_id} not found in {out}; run it to compare"
    (out / f"{plan.run_id}.ablation.json").write_text(json.dumps(result, indent=2) + "\n")
    _print(result)
    return EXIT_OK


def cmd_simulate(args) -> int:
    scenarios = load_scenario_suite(args.scenarios)
    models = []
    for i, target in enumerate(args.svi_target):
        cfg = build_negation_fragile_mock(target, seed=(args.seed or 0) * 1000 + i, compliance=args.compliance)
        models.append(ModelSpec(f"mock-{i}-svi{target:g}", args.origin, "TINY", "mock", mock=cfg))
    plan = RunPlan(
        run_id=args.run_id,
        models=models,
        scenarios=scenarios,
        policy=SamplingPolicy(n_samples=args.samples or 30, temperature=None),
        seed=args.seed or 0,
    )
    out = Path(args.out or "runs")
    sink = JsonlSink(out, plan.run_id)
    execute(plan, None, sink)
    report = _write_report(sink.read(), models, scenarios, out / f"{plan.run_id}-report", plan.seed,
                           args.min_compliance, plan.policy.n_samples)
    if args.gate_threshold is not None or args.gate_profile_given:
        verdict = evaluate_gate(report, _gate_config(args))
        _print(verdict.to_dict())
        return verdict.exit_code
    _print({"report_dir": str(out / f"{plan.run_id}-report"), "mean_svi": report.global_summary["mean_svi"]})
    return EXIT_OK


def _common(p: argparse.ArgumentParser, plan=True):
    if plan:
        p.add_argument("--plan", help="plan file (YAML)")
        p.add_argument("--providers", help="provider registry (YAML)")
    p.add_argument("--scenarios", help="scenario suite (YAML); default: bundled suite")
    p.add_argument("--seed", type=int)
    p.add_argument("--samples", type=int, help="samples per (model, scenario, frame)")
    p.add_argument("--out", help="output directory")


def _gate_args(p: argparse.ArgumentParser):
    p.add_argument("--gate-threshold", type=float, help="custom threshold; overrides --gate-profile")
    p.add_argument("--gate-profile", choices=sorted(GATE_PROFILES), default="human_in_loop")
    p.add_argument("--gate-scope", choices=["aggregate_svi", "max_scenario_svi"], default="aggregate_svi")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="svi-audit", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    for name, help_ in (("run", "execute a plan"), ("resume", "finish an interrupted run")):
        p = sub.add_parser(name, help=help_)
        _common(p)
        p.add_argument("--temperature", type=float, help="sampling temperature (negative: provider default)")
        p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="aggregate a run log into report.json and CSV exports")
    _common(p)
    p.add_argument("--temperature", type=float, help=argparse.SUPPRESS)
    p.add_argument("--run-log", help="path to {run_id}.jsonl (alternative to --plan)")
    p.add_argument("--min-compliance", type=float, default=0.80)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("gate", help="evaluate the CI/CD gate on a report")
    p.add_argument("--report", help="report.json or the directory containing it")
    _gate_args(p)
    p.set_defaults(func=cmd_gate)

    p = sub.add_parser("ablate-temperature", help="re-run a plan at T=0 and compare with the base run")
    _common(p)
    p.add_argument("--temperature", type=float, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("simulate", help="synthetic audit with negation-fragile mock models")
    _common(p, plan=False)
    p.add_argument("--svi-target", type=float, nargs="+", default=[0.65])
    p.add_argument("--compliance", type=float, default=1.0)
    p.add_argument("--origin", default="OSS", choices=["US_commercial", "CN_commercial", "OSS"])
    p.add_argument("--run-id", default="simulated")
    p.add_argument("--min-compliance", type=float, default=0.80)
    _gate_args(p)
    p.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    raw = sys.argv[1:] if argv is None else list(argv)
    args.gate_profile_given = any(a.startswith("--gate-profile") for a in raw)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except RunAborted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL
    except (ConfigError, ScenarioError, ProviderConfigError, PlanMismatchError, ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
