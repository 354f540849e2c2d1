"""Weighted histograms with underflow/overflow and per-bin sum of squared
weights.

Binning: `nbins` uniform bins over [lo, hi). A value v lands in bin
floor((v - lo) / (hi - lo) * nbins); v < lo goes to underflow, v >= hi to
overflow (lower edges inclusive, upper edges exclusive). NaN values are
counted in overflow so that total weight is always conserved. Negative
weights are allowed throughout, so bin contents may be negative; sumw2 is
never negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import ConfigError, LengthMismatch, SpecMismatch, UnknownColumn


@dataclass(frozen=True)
class HistogramSpec:
    variable: str
    nbins: int
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not isinstance(self.nbins, int) or self.nbins < 1:
            raise ConfigError(f"histogram {self.variable!r}: nbins must be a positive integer")
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            raise ConfigError(f"histogram {self.variable!r}: requires finite lo < hi")

    def edges(self) -> list[float]:
        span = self.hi - self.lo
        return [self.lo + i * span / self.nbins for i in range(self.nbins)] + [self.hi]


class Histogram:
    __slots__ = (
        "spec", "contents", "sumw2",
        "underflow", "underflow_sumw2", "overflow", "overflow_sumw2", "n_fills",
    )

    def __init__(self, spec: HistogramSpec):
        self.spec = spec
        self.contents = [0.0] * spec.nbins
        self.sumw2 = [0.0] * spec.nbins
        self.underflow = 0.0
        self.underflow_sumw2 = 0.0
        self.overflow = 0.0
        self.overflow_sumw2 = 0.0
        self.n_fills = 0

    def fill(self, value, weight: float = 1.0) -> None:
        v = float(value)
        w = float(weight)
        self.n_fills += 1
        spec = self.spec
        if v != v:  # NaN
            self.overflow += w
            self.overflow_sumw2 += w * w
        elif v < spec.lo:
            self.underflow += w
            self.underflow_sumw2 += w * w
        elif v >= spec.hi:
            self.overflow += w
            self.overflow_sumw2 += w * w
        else:
            i = int((v - spec.lo) / (spec.hi - spec.lo) * spec.nbins)
            if i >= spec.nbins:  # guard against round-up at the top edge
                i = spec.nbins - 1
            self.contents[i] += w
            self.sumw2[i] += w * w

    def merge(self, other: "Histogram") -> None:
        if other.spec != self.spec:
            raise SpecMismatch(f"cannot merge {other.spec} into {self.spec}")
        for i in range(self.spec.nbins):
            self.contents[i] += other.contents[i]
            self.sumw2[i] += other.sumw2[i]
        self.underflow += other.underflow
        self.underflow_sumw2 += other.underflow_sumw2
        self.overflow += other.overflow
        self.overflow_sumw2 += other.overflow_sumw2
        self.n_fills += other.n_fills

    def total_weight(self) -> float:
        return self.underflow + self.overflow + sum(self.contents)

    def scaled(self, factor: float) -> "Histogram":
        out = Histogram(self.spec)
        out.contents = [c * factor for c in self.contents]
        out.sumw2 = [s * factor * factor for s in self.sumw2]
        out.underflow = self.underflow * factor
        out.underflow_sumw2 = self.underflow_sumw2 * factor * factor
        out.overflow = self.overflow * factor
        out.overflow_sumw2 = self.overflow_sumw2 * factor * factor
        out.n_fills = self.n_fills
        return out

    def to_dict(self) -> dict:
        return {
            "variable": self.spec.variable,
            "nbins": self.spec.nbins,
            "lo": self.spec.lo,
            "hi": self.spec.hi,
            "contents": list(self.contents),
            "sumw2": list(self.sumw2),
            "underflow": self.underflow,
            "underflow_sumw2": self.underflow_sumw2,
            "overflow": self.overflow,
            "overflow_sumw2": self.overflow_sumw2,
            "entries": self.n_fills,
        }

    def __repr__(self) -> str:
        return (
            f"Histogram({self.spec.variable!r}, nbins={self.spec.nbins}, "
            f"total={self.total_weight():g}, entries={self.n_fills})"
        )


def fill_histogram(
    columns: Mapping[str, Sequence],
    spec: HistogramSpec,
    weight_column: str = "weight",
) -> Histogram:
    """Fill one histogram from ntuple columns using per-row weights."""
    if spec.variable not in columns:
        raise UnknownColumn(f"no column {spec.variable!r} for histogram")
    if weight_column not in columns:
        raise UnknownColumn(f"no weight column {weight_column!r}")
    values = columns[spec.variable]
    weights = columns[weight_column]
    if len(values) != len(weights):
        raise LengthMismatch(
            f"column {spec.variable!r} has {len(values)} rows, weights {len(weights)}"
        )
    hist = Histogram(spec)
    fill = hist.fill
    for v, w in zip(values, weights):
        fill(v, w)
    return hist
