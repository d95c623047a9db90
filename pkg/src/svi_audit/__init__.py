"""Negation-sensitivity audits for LLM decision endpoints.

Prompts each model with a scenario under four logically related framings,
normalizes answers for polarity, and reports the Syntactic Variation Index
(max minus min endorsement rate across framings) with statistical checks and
a deployment gate.
"""

from ._core import BACKEND
from .ingest import ComplianceLedger, DecisionRecord, ParseOutcome, apply_exclusion_rule, parse_response, update_compliance
from .lpn import CellStats, classify_fragility, endorsement_rates, lpn, model_svi, polarity_swing, score_cell, svi
from .providers import MockModelConfig, ModelSpec, SamplingPolicy, build_negation_fragile_mock, mock_generate
from .report import GateConfig, build_report, evaluate_gate, export
from .runner import RunPlan, execute, plan_cardinality, resume, temperature_ablation_plan
from .scenarios import FRAMES, Frame, Scenario, load_scenario_suite, render_prompt, render_proposal

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "FRAMES",
    "CellStats",
    "ComplianceLedger",
    "DecisionRecord",
    "Frame",
    "GateConfig",
    "MockModelConfig",
    "ModelSpec",
    "ParseOutcome",
    "RunPlan",
    "SamplingPolicy",
    "Scenario",
    "apply_exclusion_rule",
    "build_negation_fragile_mock",
    "build_report",
    "classify_fragility",
    "endorsement_rates",
    "evaluate_gate",
    "execute",
    "export",
    "load_scenario_suite",
    "lpn",
    "mock_generate",
    "model_svi",
    "parse_response",
    "plan_cardinality",
    "polarity_swing",
    "render_prompt",
    "render_proposal",
    "resume",
    "score_cell",
    "svi",
    "temperature_ablation_plan",
    "update_compliance",
]
