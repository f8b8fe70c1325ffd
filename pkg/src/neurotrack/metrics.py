"""Evaluation metrics over trial records.

Success rate counts every trial; throughput and time-to-target use hit
trials only. Decoding quality is judged on the first step of each trial,
where the intended velocity (target minus start, per step) is unambiguous.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Ring, SessionConfig, StimulusLayout, hit_test
from .engine import TrialRecord, trial_frame_positions
from .velocity import project

DEFAULT_HOLD_DTS = tuple(i / 10.0 for i in range(11))


def fitts_itr(distance_px: float, size_px: float, time_s: float) -> float:
    """log2((D + S) / S) / T, bits per second; S is the target diameter."""
    if size_px <= 0.0:
        raise ValueError(f"size must be positive, got {size_px}")
    if time_s <= 0.0:
        raise ValueError(f"time must be positive, got {time_s}")
    if distance_px < 0.0:
        raise ValueError(f"distance must be >= 0, got {distance_px}")
    return math.log2((distance_px + size_px) / size_px) / time_s


def intended_velocity(record: TrialRecord) -> np.ndarray:
    """Target minus trial start, px per step."""
    return np.array([record.target.position_px[0] - record.start_px[0],
                     record.target.position_px[1] - record.start_px[1]])


def velocity_errors(record: TrialRecord) -> tuple[float | None, float]:
    """(angular error in degrees, relative vector error) of the first step.

    A zero decoded velocity has no direction: the angular error is
    returned as None and the vector error is exactly 1.
    """
    if not record.steps:
        raise ValueError("record has no steps")
    ivec = intended_velocity(record)
    inorm = float(np.hypot(ivec[0], ivec[1]))
    if inorm == 0.0:
        raise ValueError("intended velocity is zero; errors undefined")
    v = np.array(record.steps[0].velocity)
    vnorm = float(np.hypot(v[0], v[1]))
    vector = float(np.hypot(ivec[0] - v[0], ivec[1] - v[1])) / inorm
    if vnorm == 0.0:
        return None, vector
    cosang = float(np.dot(v, ivec)) / (vnorm * inorm)
    angular = math.degrees(math.acos(min(1.0, max(-1.0, cosang))))
    return angular, vector


def post_hit_hold_rate(records: Sequence[TrialRecord], dt_s: float,
                       config: SessionConfig) -> float:
    """Fraction of hit trials whose cursor still satisfies the hit test
    ``dt_s`` after the first hit (nearest frame)."""
    if dt_s < 0.0:
        raise ValueError("dt_s must be >= 0")
    frame_dt = config.step_seconds / config.frames_per_step
    held = []
    for record in records:
        if record.outcome != "hit":
            continue
        positions = trial_frame_positions(record, config)
        hit_frame = int(round(record.time_to_target_s / frame_dt)) - 1
        frame = hit_frame + int(round(dt_s / frame_dt))
        if frame >= len(positions):
            raise ValueError(
                f"records were not extended {dt_s:.3f} s past the hit"
            )
        held.append(hit_test(positions[frame], record.target))
    if not held:
        raise ValueError("no hit trials in the records")
    return float(np.mean(held))


def _stats(values: Sequence[float]) -> dict:
    vals = np.asarray([v for v in values], dtype=np.float64)
    n = int(vals.size)
    if n == 0:
        return {"mean": None, "sd": None, "n": 0}
    mean = float(vals.mean())
    sd = float(vals.std(ddof=1)) if n > 1 else None
    return {"mean": mean, "sd": sd, "n": n}


@dataclass
class MetricsReport:
    task: str
    n_trials: int
    n_hits: int
    success_rate: float
    fitts_itr_bps: dict
    time_to_target_s: dict
    angular_error_deg: dict
    vector_error: dict
    projection_length: dict
    first_step_skipped: int
    post_hit_hold: dict | None

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "n_trials": self.n_trials,
            "n_hits": self.n_hits,
            "success_rate": self.success_rate,
            "fitts_itr_bps": self.fitts_itr_bps,
            "time_to_target_s": self.time_to_target_s,
            "angular_error_deg": self.angular_error_deg,
            "vector_error": self.vector_error,
            "projection_length": self.projection_length,
            "first_step_skipped": self.first_step_skipped,
            "post_hit_hold": self.post_hit_hold,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["metric", "component", "value"])
        writer.writerow(["task", "", self.task])
        writer.writerow(["n_trials", "", self.n_trials])
        writer.writerow(["n_hits", "", self.n_hits])
        writer.writerow(["success_rate", "", self.success_rate])
        for name, stats in (
            ("fitts_itr_bps", self.fitts_itr_bps),
            ("angular_error_deg", self.angular_error_deg),
            ("vector_error", self.vector_error),
            ("projection_length", self.projection_length),
        ):
            for key, value in stats.items():
                writer.writerow([name, key, "" if value is None else value])
        for split, stats in self.time_to_target_s.items():
            for key, value in stats.items():
                writer.writerow(["time_to_target_s", f"{split}.{key}",
                                 "" if value is None else value])
        writer.writerow(["first_step_skipped", "", self.first_step_skipped])
        if self.post_hit_hold is not None:
            for dt, rate in zip(self.post_hit_hold["dt_s"],
                                self.post_hit_hold["rate"]):
                writer.writerow(["post_hit_hold", f"dt={dt}", rate])
        return buf.getvalue()


def build_metrics(records: Sequence[TrialRecord], config: SessionConfig,
                  hold_dts: Sequence[float] = DEFAULT_HOLD_DTS) -> MetricsReport:
    """Aggregate a set of trial records into a MetricsReport.

    Timeout trials enter the success rate but are excluded from the
    ITR and the time-to-target statistics.
    """
    if not records:
        raise ValueError("no records to aggregate")
    tasks = sorted({r.task for r in records})
    task = tasks[0] if len(tasks) == 1 else "mixed"
    hits = [r for r in records if r.outcome == "hit"]

    itrs = []
    for r in hits:
        ivec = intended_velocity(r)
        distance = float(np.hypot(ivec[0], ivec[1]))
        itrs.append(fitts_itr(distance, 2.0 * r.target.radius_px,
                              r.time_to_target_s))

    times = {
        "overall": _stats([r.time_to_target_s for r in hits]),
        "inner": _stats([r.time_to_target_s for r in hits
                         if r.target.ring == Ring.INNER]),
        "outer": _stats([r.time_to_target_s for r in hits
                         if r.target.ring == Ring.OUTER]),
    }

    angulars: list[float] = []
    vectors: list[float] = []
    skipped = 0
    for r in records:
        if not r.steps:
            continue
        if not np.any(r.steps[0].rho):
            skipped += 1
            continue
        angular, vector = velocity_errors(r)
        vectors.append(vector)
        if angular is not None:
            angulars.append(angular)

    layout = StimulusLayout(config.n_regions)
    lengths = []
    for r in records:
        for step in r.steps:
            p = project(step.rho, layout)
            lengths.append(float(np.hypot(p[0], p[1])))

    hold = None
    if hits:
        try:
            hold = {
                "dt_s": [float(dt) for dt in hold_dts],
                "rate": [post_hit_hold_rate(records, dt, config)
                         for dt in hold_dts],
            }
        except ValueError:
            hold = None

    return MetricsReport(
        task=task,
        n_trials=len(records),
        n_hits=len(hits),
        success_rate=len(hits) / len(records),
        fitts_itr_bps=_stats(itrs),
        time_to_target_s=times,
        angular_error_deg=_stats(angulars),
        vector_error=_stats(vectors),
        projection_length=_stats(lengths),
        first_step_skipped=skipped,
        post_hit_hold=hold,
    )
