"""Forecast scoring: Some-risk recall, Highest-risk precision, risk area ratio.

Metrics with a zero denominator are reported as ``None`` rather than 0 so
that empty regions do not drag seasonal averages down.
"""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field

import numpy as np

from .raster_io import MaskGrid, check_same_geometry
from .risk import RiskMap

METRICS = ("srr", "hrp", "rar")


@dataclass(frozen=True)
class EvalReport:
    srr: float | None
    hrp: float | None
    rar: float | None
    some_hits: int = 0
    some_total: int = 0
    highest_hits: int = 0
    highest_total: int = 0
    wet_total: int = 0
    n_valid_pixels: int = 0
    contributors: dict = field(default_factory=dict)

    def to_text(self) -> str:
        lines = []
        for key, value in self.as_dict().items():
            if key == "contributors":
                for metric, n in value.items():
                    lines.append(f"{metric}_contributors: {n}")
                continue
            lines.append(f"{key}: {_fmt(value)}")
        return "\n".join(lines) + "\n"

    def as_dict(self) -> dict:
        return asdict(self)


def _fmt(value) -> str:
    if value is None:
        return "undefined"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def evaluate(risk: RiskMap, truth_wet: MaskGrid, valid: MaskGrid | None = None) -> EvalReport:
    return evaluate_masks(risk.some, risk.highest, truth_wet, valid)


def evaluate_masks(
    some: MaskGrid, highest: MaskGrid, truth_wet: MaskGrid, valid: MaskGrid | None = None
) -> EvalReport:
    """Score a Some and a Highest region; the two need not be nested."""
    check_same_geometry(some, highest, truth_wet)
    if valid is None:
        keep = np.ones(truth_wet.shape, dtype=bool)
    else:
        check_same_geometry(truth_wet, valid)
        keep = valid.values
    truth = truth_wet.values & keep
    some = some.values & keep
    highest = highest.values & keep

    some_hits = int((some & truth).sum())
    highest_hits = int((highest & truth).sum())
    wet_total = int(truth.sum())
    some_total = int(some.sum())
    highest_total = int(highest.sum())
    return EvalReport(
        srr=_ratio(some_hits, wet_total),
        hrp=_ratio(highest_hits, highest_total),
        rar=_ratio(some_total, highest_total),
        some_hits=some_hits,
        some_total=some_total,
        highest_hits=highest_hits,
        highest_total=highest_total,
        wet_total=wet_total,
        n_valid_pixels=int(keep.sum()),
    )


def aggregate(reports, weighting: str = "event") -> EvalReport:
    """Average reports over events.

    ``weighting="event"`` takes the plain mean of each metric over reports
    where it is defined; ``"pixel"`` pools the pixel counts first.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("cannot aggregate an empty list of reports")
    if weighting not in ("event", "pixel"):
        raise ValueError(f"unknown weighting {weighting!r}")

    totals = {
        k: sum(getattr(r, k) for r in reports)
        for k in ("some_hits", "some_total", "highest_hits", "highest_total", "wet_total", "n_valid_pixels")
    }
    contributors = {m: sum(getattr(r, m) is not None for r in reports) for m in METRICS}
    if weighting == "event":
        means = {}
        for m in METRICS:
            vals = [getattr(r, m) for r in reports if getattr(r, m) is not None]
            means[m] = float(np.mean(vals)) if vals else None
    else:
        means = {
            "srr": _ratio(totals["some_hits"], totals["wet_total"]),
            "hrp": _ratio(totals["highest_hits"], totals["highest_total"]),
            "rar": _ratio(totals["some_total"], totals["highest_total"]),
        }
    return EvalReport(**means, **totals, contributors=contributors)


def reports_to_csv(rows) -> str:
    """``rows`` is an iterable of (event name, EvalReport)."""
    buf = io.StringIO()
    fields = ["event", *METRICS, "some_hits", "some_total", "highest_hits", "highest_total", "wet_total", "n_valid_pixels"]
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    for name, rep in rows:
        d = rep.as_dict()
        writer.writerow([name] + [_fmt(d[k]) for k in fields[1:]])
    return buf.getvalue()
