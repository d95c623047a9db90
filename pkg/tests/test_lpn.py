import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from reference_values import FRAME_RATES
from svi_audit.lpn import (
    CellStats,
    IncompleteCellError,
    NoDataError,
    UndefinedSwingError,
    cell_from_rates,
    classify_fragility,
    endorsement_rates,
    lpn,
    model_svi,
    polarity_swing,
    score_cell,
    svi,
)
from svi_audit.scenarios import FRAMES, Frame

TRUTH_TABLE = {
    (Frame.F0, "agree"): 1, (Frame.F0, "disagree"): 0,
    (Frame.F1, "agree"): 0, (Frame.F1, "disagree"): 1,
    (Frame.F2, "agree"): 1, (Frame.F2, "disagree"): 0,
    (Frame.F3, "agree"): 0, (Frame.F3, "disagree"): 1,
}


def test_truth_table():
    for (frame, decision), expected in TRUTH_TABLE.items():
        assert lpn(frame, decision) == expected


def test_consistent_endorser_and_rejecter_score_zero():
    endorse = [(f, "agree" if not f.negated else "disagree") for f in FRAMES]
    reject = [(f, "disagree" if not f.negated else "agree") for f in FRAMES]
    assert svi(endorsement_rates(endorse)) == 0
    assert svi(endorsement_rates(reject)) == 0


def test_unknown_decision():
    with pytest.raises(ValueError):
        lpn(Frame.F0, "maybe")


def test_oss_signature_svi():
    rates = dict(zip(FRAMES, FRAME_RATES["OSS"]))
    assert round(svi(rates), 3) == 0.680


def _oracle_svi(bits):
    # independent arithmetic: two draws per frame, endorsement written out by hand
    per_frame = [bits[0:2], bits[2:4], bits[4:6], bits[6:8]]
    rates = [(a + b) / 2 for a, b in per_frame]
    return max(rates) - min(rates)


def test_brute_force_two_sample_cells():
    for bits in itertools.product((0, 1), repeat=8):
        obs = []
        for i, f in enumerate(FRAMES):
            for draw in range(2):
                endorse = bits[2 * i + draw]
                decision = "agree" if endorse != f.negated else "disagree"
                obs.append((f, draw, decision))
        cell = score_cell("m", "s", obs, n_planned=2)
        assert cell.svi == _oracle_svi(bits)


rate = st.floats(0, 1, allow_nan=False)


@given(st.lists(rate, min_size=4, max_size=4))
def test_svi_bounds_and_permutation(values):
    rates = dict(zip(FRAMES, values))
    s = svi(rates)
    assert 0 <= s <= 1
    for perm in itertools.permutations(values):
        assert svi(dict(zip(FRAMES, perm))) == s


@given(st.lists(st.sampled_from(["agree", "disagree"]), min_size=4, max_size=40))
def test_flipping_all_decisions_preserves_svi(decisions):
    cell = [(FRAMES[i % 4], d) for i, d in enumerate(decisions)]
    cell += [(f, "agree") for f in FRAMES]
    flipped = [(f, "disagree" if d == "agree" else "agree") for f, d in cell]
    assert svi(endorsement_rates(cell)) == pytest.approx(svi(endorsement_rates(flipped)), abs=1e-12)


@given(rate)
def test_constant_rates_zero(p):
    assert svi({f: p for f in FRAMES}) == 0


@pytest.mark.parametrize("value,label", [
    (0.0, "robust"), (0.199, "robust"), (0.2, "moderate"), (0.499, "moderate"), (0.5, "high"), (1.0, "high"),
])
def test_fragility_bins(value, label):
    assert classify_fragility(value) == label


def test_fragility_out_of_range():
    with pytest.raises(ValueError):
        classify_fragility(1.2)


def test_swing_examples():
    assert polarity_swing(0.287, 0.967) == pytest.approx(236.9, abs=0.05)
    assert polarity_swing(*FRAME_RATES["US_commercial"][::3]) == pytest.approx(146.4, abs=0.1)
    assert polarity_swing(0.306, 0.491) == pytest.approx(60.5, abs=0.05)
    with pytest.raises(UndefinedSwingError):
        polarity_swing(0.0, 0.5)


def test_missing_decisions_are_excluded():
    obs = [(f, d, "agree") for f in FRAMES for d in range(4)]
    obs[0] = (Frame.F0, 0, None)
    cell = score_cell("m", "s", obs, n_planned=4)
    assert cell.n_per_frame[Frame.F0] == 3
    assert cell.q_blocks == 3


def test_incomplete_cell():
    obs = [(f, d, "agree") for f in FRAMES for d in range(4) if not (f is Frame.F2 and d > 0)]
    with pytest.raises(IncompleteCellError, match="F2=1/4"):
        score_cell("m", "s", obs, n_planned=4)
    with pytest.raises(IncompleteCellError):
        endorsement_rates([(Frame.F0, "agree")])


def test_cochran_attached_to_cell():
    # F3 always endorsed, others never: maximal framing effect
    obs = [(f, d, "agree") for f in FRAMES for d in range(10)]
    cell = score_cell("m", "s", obs, n_planned=10)
    assert cell.svi == 1.0 and cell.fragility == "high"
    assert cell.q_statistic == pytest.approx(30.0)
    assert cell.q_p_value < 1e-5


def test_model_svi_and_cells():
    cells = [cell_from_rates("m", str(i), dict(zip(FRAMES, r))) for i, r in enumerate(FRAME_RATES.values())]
    assert isinstance(cells[0], CellStats)
    assert model_svi(cells) == pytest.approx((0.223 + 0.363 + 0.680) / 3)
    assert cells[2].to_dict()["p_act"]["F3"] == 0.967
    with pytest.raises(NoDataError):
        model_svi([])
