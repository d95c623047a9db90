import json
import logging

import pytest
from hypothesis import given
from hypothesis import strategies as st

from parser_corpus import INVALID, WELL_FORMED, WRAPPERS
from reference_values import EXCLUDED_COMPLIANCE, PARSED_RECORDS, TOTAL_RECORDS
from svi_audit.ingest import (
    RECORD_FIELDS,
    ComplianceLedger,
    ModelCompliance,
    ParseOutcome,
    apply_exclusion_rule,
    parse_response,
    update_compliance,
)


@pytest.mark.parametrize("label,raw", WELL_FORMED, ids=[w[0] for w in WELL_FORMED])
def test_well_formed_parses(label, raw):
    out = parse_response(raw)
    assert out.valid, out.failure_reason
    assert out.record.decision in ("agree", "disagree")
    assert out.raw_text == raw


@pytest.mark.parametrize("wrap_label,wrapper", WRAPPERS, ids=[w[0] for w in WRAPPERS])
def test_wrapped_variants_parse_identically(wrap_label, wrapper):
    for _, raw in WELL_FORMED:
        bare = parse_response(raw)
        wrapped = parse_response(wrapper.replace("{}", raw, 1))
        assert wrapped.record == bare.record


@pytest.mark.parametrize("label,raw,reason", INVALID, ids=[i[0] for i in INVALID])
def test_invalid_cases(label, raw, reason):
    out = parse_response(raw)
    assert not out.valid
    assert out.record is None
    assert out.failure_reason == reason
    assert out.raw_text == raw


def test_decision_normalized():
    assert parse_response(WELL_FORMED[2][1]).record.decision == "agree"
    assert parse_response(WELL_FORMED[3][1]).record.decision == "disagree"


def test_no_clamping():
    raw = WELL_FORMED[0][1].replace('"confidence": 80', '"confidence": 150')
    out = parse_response(raw)
    assert out.failure_reason == "score out of range"
    assert out.detail == "confidence=150"


def test_first_of_several_objects(caplog):
    a = WELL_FORMED[0][1]
    b = WELL_FORMED[1][1]
    with caplog.at_level(logging.WARNING):
        out = parse_response(a + "\n" + b)
    assert out.record.decision == "agree"
    assert "more than one" in caplog.text


def test_non_string_input():
    assert parse_response(None).failure_reason == "no JSON object found"


@pytest.mark.parametrize("label,raw", WELL_FORMED)
def test_round_trip_idempotent(label, raw):
    rec = parse_response(raw).record
    again = parse_response(rec.to_json())
    assert again.record == rec
    assert parse_response(again.record.to_json()).record == rec


def test_outcome_dict_round_trip():
    for _, raw, _ in INVALID[:3]:
        out = parse_response(raw)
        assert ParseOutcome.from_dict(out.to_dict(), raw) == out
    out = parse_response(WELL_FORMED[0][1])
    assert ParseOutcome.from_dict(json.loads(json.dumps(out.to_dict())), out.raw_text) == out


score = st.integers(0, 100)


@given(
    decision=st.sampled_from(["agree", "disagree", "Agree", " DISAGREE "]),
    scores=st.lists(score, min_size=5, max_size=5),
    reasoning=st.text(max_size=80),
    prefix=st.text(alphabet=st.characters(blacklist_characters="{}"), max_size=30),
)
def test_any_schema_valid_object_parses(decision, scores, reasoning, prefix):
    obj = dict(zip(RECORD_FIELDS, [decision, *scores, reasoning]))
    out = parse_response(prefix + json.dumps(obj))
    assert out.valid
    assert out.record.decision == decision.strip().lower()
    assert [getattr(out.record, f) for f in RECORD_FIELDS[1:-1]] == scores


# ---------------------------------------------------------------- compliance


def test_compliance_rate_none_before_attempts():
    assert ModelCompliance().compliance_rate is None
    assert ComplianceLedger().rate("m") is None


def test_corpus_compliance_pool():
    ledger = ComplianceLedger()
    ledger.models["pool"] = ModelCompliance(TOTAL_RECORDS, PARSED_RECORDS)
    assert round(ledger.rate("pool") * 100, 2) == 91.52


def test_update_and_merge():
    a = ComplianceLedger()
    for raw in ("{}", WELL_FORMED[0][1], WELL_FORMED[1][1]):
        update_compliance(a, "m", parse_response(raw))
    assert (a["m"].attempts, a["m"].valid) == (3, 2)
    b = ComplianceLedger()
    update_compliance(b, "m", parse_response("nothing"))
    a.merge(b)
    assert (a["m"].attempts, a["m"].valid) == (4, 2)
    assert a.to_dict()["m"]["compliance_rate"] == 0.5


def _ledger(rates, attempts=1680):
    led = ComplianceLedger()
    for name, rate in rates.items():
        led.models[name] = ModelCompliance(attempts, round(rate * attempts))
    return led


def test_published_exclusions():
    rates = {f"excluded_{i}": r for i, r in enumerate(EXCLUDED_COMPLIANCE)}
    rates["kept"] = 0.95
    included, excluded = apply_exclusion_rule(_ledger(rates))
    assert excluded == {"excluded_0", "excluded_1", "excluded_2"}
    assert included == {"kept"}


def test_boundary_included():
    led = ComplianceLedger({"edge": ModelCompliance(1680, 1344), "below": ModelCompliance(1680, 1343)})
    included, excluded = apply_exclusion_rule(led)
    assert included == {"edge"} and excluded == {"below"}


def test_exclusion_requires_attempts():
    with pytest.raises(ValueError, match="no recorded attempts"):
        apply_exclusion_rule(ComplianceLedger({"m": ModelCompliance()}))
    with pytest.raises(ValueError):
        apply_exclusion_rule(ComplianceLedger(), models=["ghost"])


@given(st.integers(1, 500), st.data())
def test_exclusion_monotone(attempts, data):
    lo = data.draw(st.integers(0, attempts))
    hi = data.draw(st.integers(lo, attempts))
    led = ComplianceLedger({"lo": ModelCompliance(attempts, lo), "hi": ModelCompliance(attempts, hi)})
    included, excluded = apply_exclusion_rule(led)
    # a more compliant model is never excluded when a less compliant one is kept
    assert not ("hi" in excluded and "lo" in included)
