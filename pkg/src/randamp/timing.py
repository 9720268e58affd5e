"""Locality-loophole timing budget.

A trial is space-like separated when its duration, measured from the
random-number start event at one node to the readout stop event at the
other, is shorter than the light-travel time between those two events.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field

SPEED_OF_LIGHT_M_PER_NS = 0.299792458

SEGMENT_NAMES = (
    "t_RNG_A", "t_RNG_B",
    "t_latch_A", "t_latch_B",
    "t_delta_A", "t_delta_B",
    "t_delta_AB",
    "t_detection_A", "t_detection_B",
)
TOTAL_NAMES = ("t_protocol_AtoB", "t_protocol_BtoA")

# start node -> segments summed for that direction
_DIRECTIONS = {
    "AtoB": ("t_detection_B", "t_delta_B", "t_delta_AB", "t_latch_A", "t_RNG_A"),
    "BtoA": ("t_detection_A", "t_delta_A", "t_delta_AB", "t_latch_B", "t_RNG_B"),
}
_SANITY_NS = 1e4
_CONSISTENCY_NS = 1e-6


class IncompleteTableError(ValueError):
    pass


@dataclass(frozen=True)
class SegmentTable:
    """Signed segment durations and optional declared totals, in ns."""

    segments: dict[str, float] = field(default_factory=dict)
    totals: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name, v in {**self.segments, **self.totals}.items():
            if name not in SEGMENT_NAMES + TOTAL_NAMES:
                raise ValueError(f"unknown timing quantity {name!r}")
            if not abs(v) < _SANITY_NS:
                raise ValueError(f"{name}={v} ns exceeds the {_SANITY_NS:g} ns sanity bound")

    @classmethod
    def from_mapping(cls, data: dict[str, float]) -> "SegmentTable":
        """Build from keys carrying a mandatory ``_ns`` unit suffix."""
        segments, totals = {}, {}
        for key, v in data.items():
            if not key.endswith("_ns"):
                raise ValueError(f"timing key {key!r} must carry the _ns unit suffix")
            name = key[: -len("_ns")]
            (totals if name in TOTAL_NAMES else segments)[name] = float(v)
        return cls(segments, totals)

    def to_mapping(self) -> dict[str, float]:
        return {f"{k}_ns": v for k, v in {**self.segments, **self.totals}.items()}

    def shifted(self, name: str, delta: float) -> "SegmentTable":
        seg = dict(self.segments)
        seg[name] = seg.get(name, 0.0) + delta
        return SegmentTable(seg, dict(self.totals))


@dataclass(frozen=True)
class DriftTable:
    """Per device: (granularity in ns, relative drift in ps/hr)."""

    devices: dict[str, tuple[float, float]]

    def __post_init__(self) -> None:
        for name, (g, d) in self.devices.items():
            if g <= 0 or d <= 0:
                raise ValueError(f"{name}: granularity and drift must be positive")

    def windows(self) -> dict[str, float]:
        return {name: jitter_free_window(g, d) for name, (g, d) in self.devices.items()}

    def limiting(self) -> tuple[str, float]:
        """Device with the shortest jitter-free window, and that window in hours."""
        return min(self.windows().items(), key=lambda kv: kv[1])


def light_budget(distance_m: float) -> float:
    """Light travel time in ns over ``distance_m`` metres."""
    if not distance_m > 0:
        raise ValueError("distance must be positive")
    return distance_m / SPEED_OF_LIGHT_M_PER_NS


@dataclass(frozen=True)
class DirectionResult:
    direction: str
    duration_ns: float
    segment_sum_ns: float | None
    declared_ns: float | None
    budget_ns: float
    margin_ns: float
    passed: bool
    note: str = ""


@dataclass(frozen=True)
class LocalityReport:
    distance_m: float
    budget_ns: float
    directions: tuple[DirectionResult, ...]

    @property
    def passed(self) -> bool:
        return all(d.passed for d in self.directions)

    @property
    def failed_directions(self) -> list[str]:
        return [d.direction for d in self.directions if not d.passed]

    def margin(self, direction: str) -> float:
        return next(d.margin_ns for d in self.directions if d.direction == direction)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return out


def verify_locality(table: SegmentTable, distance_m: float) -> LocalityReport:
    """Per-direction duration, margin against the light budget, and verdict.

    A declared total takes precedence over the segment sum; when both exist
    and differ the discrepancy is noted rather than resolved, because the
    segment zero-points are convention-dependent.
    """
    budget = light_budget(distance_m)
    results = []
    for direction, names in _DIRECTIONS.items():
        have = all(n in table.segments for n in names)
        seg_sum = math.fsum(table.segments[n] for n in names) if have else None
        declared = table.totals.get(f"t_protocol_{direction}")
        if declared is None and seg_sum is None:
            missing = [n for n in names if n not in table.segments]
            raise IncompleteTableError(f"{direction}: missing {missing} and no declared total")
        duration = declared if declared is not None else seg_sum
        note = ""
        if declared is not None and seg_sum is not None and abs(declared - seg_sum) > _CONSISTENCY_NS:
            note = f"segment sum {seg_sum:.3f} ns differs from declared total {declared:.3f} ns"
        margin = budget - duration
        results.append(
            DirectionResult(direction, duration, seg_sum, declared, budget, margin, margin > 0, note)
        )
    return LocalityReport(distance_m, budget, tuple(results))


def jitter_free_window(granularity_ns: float, drift_ps_per_hr: float) -> float:
    """Hours to drift from mid-granularity to the next edge."""
    if granularity_ns <= 0 or drift_ps_per_hr <= 0:
        raise ValueError("granularity and drift must be positive")
    return (granularity_ns * 1000.0 / 2) / drift_ps_per_hr


def load_timing_config(path: str | os.PathLike) -> tuple[SegmentTable, float, DriftTable | None]:
    """Read ``{"distance_m": ..., "segments": {...}, "drift": {...}}``."""
    with open(path) as fh:
        doc = json.load(fh)
    if "distance_m" not in doc:
        raise ValueError("timing config needs distance_m")
    table = SegmentTable.from_mapping(doc.get("segments", {}))
    drift = None
    if "drift" in doc:
        drift = DriftTable(
            {k: (float(v["granularity_ns"]), float(v["drift_ps_per_hr"])) for k, v in doc["drift"].items()}
        )
    return table, float(doc["distance_m"]), drift


# Measured values of the reference experiment.
REFERENCE_DISTANCE_M = 32.928
REFERENCE_SEGMENTS = SegmentTable(
    segments={
        "t_RNG_A": 17.1, "t_RNG_B": 17.1,
        "t_latch_A": 2.0, "t_latch_B": 7.2,
        "t_delta_A": 5.0, "t_delta_B": 2.0,
        "t_delta_AB": 0.55,
        "t_detection_A": 86.0, "t_detection_B": 94.0,
    },
    totals={"t_protocol_AtoB": 106.65, "t_protocol_BtoA": 106.45},
)
REFERENCE_DRIFT = DriftTable(
    {
        "AWG5014": (1.66, 0.1),
        "FPGA": (8.0, 0.1),
        "AWG70K": (6.4, 0.2),
        "QRNG": (2.0, 16.9),
    }
)
