"""Decision extraction from raw model output and per-model compliance tracking."""

from __future__ import annotations

import json
import logging
from collections.abc import Iterable
from dataclasses import asdict, dataclass, field
from fractions import Fraction

log = logging.getLogger(__name__)

SCORE_FIELDS = (
    "confidence",
    "adherence_to_laws",
    "adherence_to_social_ethics",
    "objective_positive_consequences",
    "objective_negative_consequences",
)
RECORD_FIELDS = ("decision",) + SCORE_FIELDS + ("reasoning",)
DECISIONS = ("agree", "disagree")

# failure reasons
NO_JSON = "no JSON object found"
MISSING_FIELD = "schema field missing"
BAD_TYPE = "field has wrong type"
OUT_OF_RANGE = "score out of range"
BAD_DECISION = "unrecognized decision token"


@dataclass(frozen=True)
class DecisionRecord:
    decision: str
    confidence: int
    adherence_to_laws: int
    adherence_to_social_ethics: int
    objective_positive_consequences: int
    objective_negative_consequences: int
    reasoning: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False)


@dataclass(frozen=True)
class ParseOutcome:
    status: str  # "valid" | "invalid"
    raw_text: str
    record: DecisionRecord | None = None
    failure_reason: str | None = None
    detail: str | None = None

    @property
    def valid(self) -> bool:
        return self.status == "valid"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "record": asdict(self.record) if self.record else None,
            "failure_reason": self.failure_reason,
            "detail": self.detail,
        }

    @classmethod
    def from_dict(cls, d: dict, raw_text: str) -> ParseOutcome:
        rec = DecisionRecord(**d["record"]) if d.get("record") else None
        return cls(d["status"], raw_text, rec, d.get("failure_reason"), d.get("detail"))


def _invalid(raw, reason, detail=None) -> ParseOutcome:
    return ParseOutcome("invalid", raw, None, reason, detail)


def _json_objects(text: str):
    """Yield every complete top-level JSON object in ``text``, left to right."""
    decoder = json.JSONDecoder()
    i = text.find("{")
    while i != -1:
        try:
            obj, end = decoder.raw_decode(text, i)
        except json.JSONDecodeError:
            i = text.find("{", i + 1)
            continue
        if isinstance(obj, dict):
            yield obj
            i = text.find("{", end)
        else:
            i = text.find("{", i + 1)


def _score(value):
    if isinstance(value, bool):
        return None
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    return None


def parse_response(raw: str) -> ParseOutcome:
    """Extract and validate the first complete JSON object in ``raw``.

    Prose and code fences around the object are tolerated.  Nothing is
    repaired or clamped: truncated JSON, missing fields, out-of-range scores
    and unknown decision tokens all produce an invalid outcome.
    """
    raw = raw if isinstance(raw, str) else ""
    objects = _json_objects(raw)
    obj = next(objects, None)
    if obj is None:
        return _invalid(raw, NO_JSON)
    if next(objects, None) is not None:
        log.warning("response contains more than one JSON object; using the first")

    missing = [f for f in RECORD_FIELDS if f not in obj]
    if missing:
        return _invalid(raw, MISSING_FIELD, ", ".join(missing))

    decision = obj["decision"]
    if not isinstance(decision, str):
        return _invalid(raw, BAD_TYPE, "decision")
    decision = decision.strip().lower()
    if decision not in DECISIONS:
        return _invalid(raw, BAD_DECISION, repr(obj["decision"]))

    scores = {}
    for name in SCORE_FIELDS:
        v = _score(obj[name])
        if v is None:
            return _invalid(raw, BAD_TYPE, name)
        if not 0 <= v <= 100:
            return _invalid(raw, OUT_OF_RANGE, f"{name}={v}")
        scores[name] = v

    reasoning = obj["reasoning"]
    if not isinstance(reasoning, str):
        return _invalid(raw, BAD_TYPE, "reasoning")

    return ParseOutcome("valid", raw, DecisionRecord(decision=decision, reasoning=reasoning, **scores))


@dataclass
class ModelCompliance:
    attempts: int = 0
    valid: int = 0

    @property
    def compliance_rate(self) -> float | None:
        """None until at least one attempt has been recorded."""
        return self.valid / self.attempts if self.attempts else None


@dataclass
class ComplianceLedger:
    models: dict[str, ModelCompliance] = field(default_factory=dict)

    def __getitem__(self, model_id: str) -> ModelCompliance:
        return self.models.setdefault(model_id, ModelCompliance())

    def rate(self, model_id: str) -> float | None:
        m = self.models.get(model_id)
        return m.compliance_rate if m else None

    def merge(self, other: ComplianceLedger) -> ComplianceLedger:
        for mid, c in other.models.items():
            mine = self[mid]
            mine.attempts += c.attempts
            mine.valid += c.valid
        return self

    def to_dict(self) -> dict:
        return {
            mid: {"attempts": c.attempts, "valid": c.valid, "compliance_rate": c.compliance_rate}
            for mid, c in sorted(self.models.items())
        }


def update_compliance(ledger: ComplianceLedger, model: str, outcome: ParseOutcome) -> ComplianceLedger:
    entry = ledger[model]
    entry.attempts += 1
    if outcome.valid:
        entry.valid += 1
    return ledger


def apply_exclusion_rule(
    ledger: ComplianceLedger, threshold: float = 0.80, models: Iterable[str] | None = None
) -> tuple[set[str], set[str]]:
    """Split models into (included, excluded); excluded iff compliance < threshold.

    The comparison is exact (rational), so a model at exactly the threshold
    is included.
    """
    cut = Fraction(str(threshold))
    included, excluded = set(), set()
    for mid in models if models is not None else ledger.models:
        c = ledger.models.get(mid)
        if c is None or c.attempts == 0:
            raise ValueError(f"model {mid!r} has no recorded attempts")
        if Fraction(c.valid, c.attempts) < cut:
            excluded.add(mid)
        else:
            included.add(mid)
    return included, excluded
