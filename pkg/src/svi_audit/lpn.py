"""Polarity normalization, per-frame endorsement rates and the variation index."""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

from .scenarios import FRAMES, Frame
from .stats import cochran_q

ROBUST_BELOW = 0.2
HIGH_FROM = 0.5
MIN_VALID_SHARE = 0.5


class IncompleteCellError(ValueError):
    """A frame has too few valid decisions for the cell to be scored."""


class UndefinedSwingError(ValueError):
    pass


class NoDataError(ValueError):
    pass


def lpn(frame: Frame, decision: str) -> int:
    """1 when the decision endorses the underlying action, else 0."""
    frame = Frame(frame)
    agree = decision == "agree"
    if decision not in ("agree", "disagree"):
        raise ValueError(f"unknown decision {decision!r}")
    return int(agree != frame.negated)


def endorsement_rates(cell: Iterable[tuple[Frame, str | None]]) -> dict[Frame, float]:
    """Mean endorsement per frame; ``None`` decisions are missing data."""
    hits = {f: 0 for f in FRAMES}
    counts = {f: 0 for f in FRAMES}
    for frame, decision in cell:
        if decision is None:
            continue
        frame = Frame(frame)
        hits[frame] += lpn(frame, decision)
        counts[frame] += 1
    empty = [f.value for f in FRAMES if counts[f] == 0]
    if empty:
        raise IncompleteCellError(f"no valid decisions under {', '.join(empty)}")
    return {f: hits[f] / counts[f] for f in FRAMES}


def svi(rates: Mapping[Frame, float]) -> float:
    missing = [f.value for f in FRAMES if f not in rates]
    if missing:
        raise IncompleteCellError(f"missing frames {', '.join(missing)}")
    values = [rates[f] for f in FRAMES]
    return max(values) - min(values)


def classify_fragility(value: float) -> str:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"SVI {value} outside [0, 1]")
    if value < ROBUST_BELOW:
        return "robust"
    if value < HIGH_FROM:
        return "moderate"
    return "high"


def polarity_swing(p_f0: float, p_f3: float) -> float:
    """Relative change in endorsement from F0 to F3, in percent."""
    if p_f0 <= 0:
        raise UndefinedSwingError("swing undefined when F0 endorsement is zero")
    return (p_f3 - p_f0) / p_f0 * 100.0


@dataclass(frozen=True)
class CellStats:
    model: str
    scenario: str
    n_per_frame: dict
    p_act: dict
    svi: float
    fragility: str
    q_statistic: float | None = None
    q_p_value: float | None = None
    q_blocks: int | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "scenario": self.scenario,
            "n_per_frame": {f.value: self.n_per_frame[f] for f in FRAMES},
            "p_act": {f.value: self.p_act[f] for f in FRAMES},
            "svi": self.svi,
            "fragility": self.fragility,
            "cochran_q": self.q_statistic,
            "cochran_p": self.q_p_value,
            "q_blocks": self.q_blocks,
        }


def cell_from_rates(model: str, scenario: str, rates: Mapping, n: int | Mapping = 30) -> CellStats:
    """CellStats from known rates; used for fixtures and replayed summaries."""
    rates = {Frame(k): float(v) for k, v in rates.items()}
    ns = {f: (n[f] if isinstance(n, Mapping) else n) for f in FRAMES}
    s = svi(rates)
    return CellStats(model, scenario, ns, rates, s, classify_fragility(min(1.0, max(0.0, s))))


def score_cell(
    model: str,
    scenario: str,
    observations: Iterable[tuple[Frame, int, str | None]],
    n_planned: int,
    min_valid_share: float = MIN_VALID_SHARE,
) -> CellStats:
    """Score one (model, scenario) cell from (frame, draw_index, decision) triples.

    Each frame needs at least ``min_valid_share`` of ``n_planned`` valid
    decisions.  Cochran's Q is computed on draws valid in all four frames.
    """
    by_frame: dict[Frame, dict[int, int]] = {f: {} for f in FRAMES}
    for frame, draw, decision in observations:
        if decision is None:
            continue
        frame = Frame(frame)
        by_frame[frame][draw] = lpn(frame, decision)

    short = [
        f"{f.value}={len(by_frame[f])}/{n_planned}"
        for f in FRAMES
        if len(by_frame[f]) == 0 or len(by_frame[f]) < min_valid_share * n_planned
    ]
    if short:
        raise IncompleteCellError(f"cell {model}/{scenario}: too few valid samples ({', '.join(short)})")

    rates = {f: sum(by_frame[f].values()) / len(by_frame[f]) for f in FRAMES}
    value = svi(rates)
    common = sorted(set.intersection(*(set(by_frame[f]) for f in FRAMES)))
    q = p = None
    if len(common) >= 2:
        result = cochran_q([[by_frame[f][d] for f in FRAMES] for d in common])
        q, p = result.statistic, result.p_value
    return CellStats(
        model=model,
        scenario=scenario,
        n_per_frame={f: len(by_frame[f]) for f in FRAMES},
        p_act=rates,
        svi=value,
        fragility=classify_fragility(value),
        q_statistic=q,
        q_p_value=p,
        q_blocks=len(common),
    )


def model_svi(cells: Iterable[CellStats]) -> float:
    values = [c.svi for c in cells]
    if not values:
        raise NoDataError("no complete cells for this model")
    return sum(values) / len(values)
