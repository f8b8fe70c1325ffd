"""Closed-loop trial execution: training stages, fixed and random tracking
tasks, and the jitter inspection.

A trial advances in 1 s decode steps. Each step simulates an epoch at the
current gaze and cursor, scores it against the templates, decodes a
velocity, and spreads the displacement over display frames with the decay
profile. Hits are detected per frame, so time-to-target has frame
resolution. After a hit the loop can keep recording for a configurable
extension so hold behaviour right after target acquisition is measurable.

Everything here is deterministic in (subject.seed, config.rng_seed): noise
draws are keyed by (task, trial, step), and random-task targets come from
a stream seeded by the config seed and the task code.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (
    Alignment,
    Ring,
    SessionConfig,
    StimulusLayout,
    TargetSpec,
    Vec2,
    hit_test,
    stage1_targets,
    stage2_targets,
)
from .dsp import FilterBankSpec, preprocess
from .stimulus import WnSequence, generate_wn_bank, visual_field_weights
from .synth import SyntheticSubject, simulate_epoch
from .trca import TrcaModel, correlate, train_trca
from .velocity import (
    RegressionSet,
    VelocityWeight,
    decay_profile,
    decode_velocity,
    train_velocity_weight,
)

TASK_CODES = {
    "stage1": 1,
    "stage2": 2,
    "fixed": 3,
    "random": 4,
    "jitter": 5,
    "interactive": 6,
}

TRAINING_REPS = 6
POST_HIT_EXTENSION_S = 1.0
JITTER_DURATION_S = 10.0
JITTER_REPS = 3


@dataclass
class StepRecord:
    """One decode step: scores, the velocity acted on, and where the cursor
    ended up after the step's frames."""

    rho: np.ndarray
    velocity: Vec2
    cursor_px: Vec2

    def to_dict(self) -> dict:
        return {
            "rho": [float(r) for r in self.rho],
            "velocity": [self.velocity[0], self.velocity[1]],
            "cursor_px": [self.cursor_px[0], self.cursor_px[1]],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StepRecord":
        return cls(
            rho=np.asarray(data["rho"], dtype=np.float64),
            velocity=(float(data["velocity"][0]), float(data["velocity"][1])),
            cursor_px=(float(data["cursor_px"][0]), float(data["cursor_px"][1])),
        )


@dataclass
class TrialRecord:
    task: str
    target: TargetSpec
    start_px: Vec2
    steps: list[StepRecord]
    outcome: str  # "hit" | "timeout"
    time_to_target_s: float | None

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "target": self.target.to_dict(),
            "start_px": [self.start_px[0], self.start_px[1]],
            "steps": [s.to_dict() for s in self.steps],
            "outcome": self.outcome,
            "time_to_target_s": self.time_to_target_s,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrialRecord":
        t = data["time_to_target_s"]
        return cls(
            task=data["task"],
            target=TargetSpec.from_dict(data["target"]),
            start_px=(float(data["start_px"][0]), float(data["start_px"][1])),
            steps=[StepRecord.from_dict(s) for s in data["steps"]],
            outcome=data["outcome"],
            time_to_target_s=None if t is None else float(t),
        )


@dataclass
class DecoderBundle:
    """Everything a closed-loop task needs to decode."""

    trca: TrcaModel
    velocity_weight: VelocityWeight
    filter_bank: FilterBankSpec
    wn_bank: list[WnSequence]

    def with_weight(self, weight: VelocityWeight) -> "DecoderBundle":
        return replace(self, velocity_weight=weight)


def session_wn_bank(config: SessionConfig) -> list[WnSequence]:
    """The session's stimulation codes, derived from the config seed."""
    return generate_wn_bank(config.n_regions, config.frames_per_step, config.rng_seed)


def _decode_epoch(subject: SyntheticSubject, gaze_px: Vec2, cursor_px: Vec2,
                  bank: Sequence[WnSequence], config: SessionConfig,
                  spec: FilterBankSpec, step_ids: tuple[int, ...]):
    layout = StimulusLayout(config.n_regions, cursor_px)
    weights = visual_field_weights(gaze_px, cursor_px, layout,
                                   subject.attention_sigma_px)
    raw = simulate_epoch(subject, weights, bank, config.step_seconds,
                         step=step_ids)
    return preprocess(raw, spec, processing_rate_hz=config.sample_rate_hz)


def run_training(subject: SyntheticSubject, config: SessionConfig,
                 filter_bank: FilterBankSpec | None = None,
                 ) -> tuple[TrcaModel, VelocityWeight, RegressionSet]:
    """Stage I template training, then Stage II velocity-weight regression.

    Both stages run open loop: the cursor sits at the screen center and
    no feedback is shown, the subject only fixates the cued target. Each
    target is presented 6 times for one step.
    """
    spec = filter_bank if filter_bank is not None else FilterBankSpec()
    bank = session_wn_bank(config)
    center = (0.0, 0.0)

    trials_by_region: list[list] = [[] for _ in range(config.n_regions)]
    targets1 = stage1_targets(config)
    for rep in range(TRAINING_REPS):
        for i, target in enumerate(targets1):
            trial_idx = rep * len(targets1) + i
            epoch = _decode_epoch(subject, target.position_px, center, bank,
                                  config, spec, (TASK_CODES["stage1"], trial_idx, 0))
            trials_by_region[i].append(epoch)
    model = train_trca(trials_by_region, spec)

    data = RegressionSet()
    targets2 = stage2_targets(config)
    for rep in range(TRAINING_REPS):
        for i, target in enumerate(targets2):
            trial_idx = rep * len(targets2) + i
            epoch = _decode_epoch(subject, target.position_px, center, bank,
                                  config, spec, (TASK_CODES["stage2"], trial_idx, 0))
            rho = correlate(model, epoch, spec)
            intended = np.array(target.position_px) - np.array(center)
            data.add(rho, intended)
    weight = train_velocity_weight(data)
    return model, weight, data


def train_decoder(subject: SyntheticSubject, config: SessionConfig,
                  filter_bank: FilterBankSpec | None = None,
                  ) -> tuple[DecoderBundle, RegressionSet]:
    spec = filter_bank if filter_bank is not None else FilterBankSpec()
    model, weight, data = run_training(subject, config, spec)
    bundle = DecoderBundle(trca=model, velocity_weight=weight,
                           filter_bank=spec, wn_bank=session_wn_bank(config))
    return bundle, data


def _run_trial(subject: SyntheticSubject, models: DecoderBundle,
               config: SessionConfig, task: str, trial_idx: int,
               target: TargetSpec, start_px: Vec2,
               post_hit_extension_s: float = 0.0,
               gaze_noise_px: float = 0.0,
               duration_s: float | None = None) -> tuple[TrialRecord, Vec2]:
    """One closed-loop trial. Returns the record and the chain position
    (cursor at the hit frame, or the final position without a hit).

    ``duration_s`` switches to a fixed-length recording with no hit
    detection (jitter inspection).
    """
    code = TASK_CODES[task]
    frames = config.frames_per_step
    frame_dt = config.step_seconds / frames
    max_speed = config.screen_width_px / 2.0
    if duration_s is None:
        max_steps = int(math.ceil(config.trial_timeout_seconds / config.step_seconds))
        hit_testing = True
    else:
        max_steps = int(round(duration_s / config.step_seconds))
        hit_testing = False
    gaze_rng = None
    if gaze_noise_px > 0.0:
        gaze_rng = np.random.default_rng([config.rng_seed, code, trial_idx, 7])

    x, y = float(start_px[0]), float(start_px[1])
    steps: list[StepRecord] = []
    hit_time: float | None = None
    hit_pos: Vec2 | None = None
    s = 0
    while True:
        if hit_time is None:
            if s >= max_steps:
                break
        elif s * config.step_seconds >= hit_time + post_hit_extension_s:
            break
        gaze = target.position_px
        if gaze_rng is not None:
            jitter = gaze_rng.normal(0.0, gaze_noise_px, size=2)
            gaze = (gaze[0] + jitter[0], gaze[1] + jitter[1])
        epoch = _decode_epoch(subject, gaze, (x, y), models.wn_bank, config,
                              models.filter_bank, (code, trial_idx, s))
        rho = correlate(models.trca, epoch, models.filter_bank)
        v = decode_velocity(rho, models.velocity_weight, max_speed_px=max_speed)
        disp = decay_profile(v, frames)
        for f in range(frames):
            x += float(disp[f, 0])
            y += float(disp[f, 1])
            if hit_testing and hit_time is None and hit_test((x, y), target):
                hit_time = s * config.step_seconds + (f + 1) * frame_dt
                hit_pos = (x, y)
        steps.append(StepRecord(rho=rho, velocity=(float(v[0]), float(v[1])),
                                cursor_px=(x, y)))
        s += 1

    record = TrialRecord(
        task=task,
        target=target,
        start_px=(float(start_px[0]), float(start_px[1])),
        steps=steps,
        outcome="hit" if hit_time is not None else "timeout",
        time_to_target_s=hit_time,
    )
    return record, (hit_pos if hit_pos is not None else (x, y))


def run_fixed_task(subject: SyntheticSubject, models: DecoderBundle,
                   config: SessionConfig, n_blocks: int = 3,
                   post_hit_extension_s: float = POST_HIT_EXTENSION_S,
                   gaze_noise_px: float = 0.0) -> list[TrialRecord]:
    """Blocks of the 32 fixed positions; cursor refreshed to center each
    trial. Recording continues ``post_hit_extension_s`` past each hit."""
    targets = stage2_targets(config)
    records = []
    for block in range(n_blocks):
        for i, target in enumerate(targets):
            trial_idx = block * len(targets) + i
            record, _ = _run_trial(subject, models, config, "fixed", trial_idx,
                                   target, (0.0, 0.0),
                                   post_hit_extension_s=post_hit_extension_s,
                                   gaze_noise_px=gaze_noise_px)
            records.append(record)
    return records


def run_random_task(subject: SyntheticSubject, models: DecoderBundle,
                    config: SessionConfig, n_trials: int = 12,
                    gaze_noise_px: float = 0.0) -> list[TrialRecord]:
    """Chained random-target trials: each trial starts where the previous
    one ended. Targets are uniform over the screen minus a target-radius
    margin and are redrawn if they would spawn already under the cursor."""
    rng = np.random.default_rng([config.rng_seed, TASK_CODES["random"]])
    half_w = config.screen_width_px / 2.0 - config.target_radius_px
    half_h = config.screen_height_px / 2.0 - config.target_radius_px
    records = []
    start: Vec2 = (0.0, 0.0)
    for trial_idx in range(n_trials):
        while True:
            pos = (float(rng.uniform(-half_w, half_w)),
                   float(rng.uniform(-half_h, half_h)))
            target = TargetSpec(position_px=pos, radius_px=config.target_radius_px,
                                ring=Ring.NONE, alignment=Alignment.NONE)
            if not hit_test(start, target):
                break
        record, end = _run_trial(subject, models, config, "random", trial_idx,
                                 target, start, gaze_noise_px=gaze_noise_px)
        records.append(record)
        start = end
    return records


def jitter_targets(config: SessionConfig) -> list[TargetSpec]:
    """A 3x3 grid at quarter-screen offsets, spanning center and
    off-center hold positions."""
    dx = config.screen_width_px / 4.0
    dy = config.screen_height_px / 4.0
    targets = []
    for oy in (-dy, 0.0, dy):
        for ox in (-dx, 0.0, dx):
            targets.append(TargetSpec(position_px=(ox, oy),
                                      radius_px=config.target_radius_px,
                                      ring=Ring.NONE, alignment=Alignment.NONE))
    return targets


@dataclass
class JitterReport:
    """Hold stability: per-frame distance from the hold point, and the
    fraction of traces inside the two reference circles over time."""

    times_s: np.ndarray
    distances_px: np.ndarray  # (n_traces, n_frames)
    filtered_radius_px: float
    raw_radius_px: float
    records: list[TrialRecord] = field(default_factory=list)

    @property
    def n_traces(self) -> int:
        return self.distances_px.shape[0]

    @property
    def within_filtered(self) -> np.ndarray:
        return (self.distances_px <= self.filtered_radius_px).mean(axis=0)

    @property
    def within_raw(self) -> np.ndarray:
        return (self.distances_px <= self.raw_radius_px).mean(axis=0)

    def fraction_at(self, t_s: float) -> tuple[float, float]:
        """(filtered, raw) fractions at the frame closest to ``t_s``."""
        idx = int(np.argmin(np.abs(self.times_s - t_s)))
        return float(self.within_filtered[idx]), float(self.within_raw[idx])

    def to_dict(self) -> dict:
        return {
            "times_s": [float(t) for t in self.times_s],
            "within_filtered": [float(v) for v in self.within_filtered],
            "within_raw": [float(v) for v in self.within_raw],
            "filtered_radius_px": self.filtered_radius_px,
            "raw_radius_px": self.raw_radius_px,
            "n_traces": self.n_traces,
        }


# reference circle sizes, cm: diagonal of the reported x/y extents
JITTER_FILTERED_DIAMETER_CM = math.hypot(1.9, 2.35)
JITTER_RAW_DIAMETER_CM = math.hypot(3.28, 3.78)


def run_jitter_inspection(subject: SyntheticSubject, models: DecoderBundle,
                          config: SessionConfig,
                          duration_s: float = JITTER_DURATION_S,
                          reps: int = JITTER_REPS,
                          gaze_noise_px: float = 0.0) -> JitterReport:
    """Hold the cursor on each of 9 targets for ``duration_s`` and record
    every frame position; the cursor starts on the target."""
    targets = jitter_targets(config)
    records = []
    traces = []
    for t_idx, target in enumerate(targets):
        for rep in range(reps):
            trial_idx = t_idx * reps + rep
            record, _ = _run_trial(subject, models, config, "jitter", trial_idx,
                                   target, target.position_px,
                                   gaze_noise_px=gaze_noise_px,
                                   duration_s=duration_s)
            records.append(record)
            positions = trial_frame_positions(record, config)
            d = np.hypot(positions[:, 0] - target.position_px[0],
                         positions[:, 1] - target.position_px[1])
            traces.append(d)
    n_frames = len(traces[0])
    frame_dt = config.step_seconds / config.frames_per_step
    times = (np.arange(n_frames) + 1) * frame_dt
    return JitterReport(
        times_s=times,
        distances_px=np.stack(traces),
        filtered_radius_px=JITTER_FILTERED_DIAMETER_CM * config.px_per_cm / 2.0,
        raw_radius_px=JITTER_RAW_DIAMETER_CM * config.px_per_cm / 2.0,
        records=records,
    )


def trial_frame_positions(record: TrialRecord, config: SessionConfig) -> np.ndarray:
    """Reconstruct the per-frame cursor path from a record, bit-for-bit.

    The live loop accumulates decay-profile displacements with plain float
    adds; repeating the same operations on the logged velocities yields
    the identical trajectory, so frame-level analysis needs no extra data
    in the log.
    """
    frames = config.frames_per_step
    out = np.empty((len(record.steps) * frames, 2))
    x, y = float(record.start_px[0]), float(record.start_px[1])
    row = 0
    for step in record.steps:
        disp = decay_profile(np.array(step.velocity), frames)
        for f in range(frames):
            x += float(disp[f, 0])
            y += float(disp[f, 1])
            out[row, 0] = x
            out[row, 1] = y
            row += 1
    return out


# ---------------------------------------------------------------------------
# line-delimited JSON trial logs
# ---------------------------------------------------------------------------

def serialize_trial(record: TrialRecord) -> str:
    """Canonical one-line JSON; stable byte-for-byte for a given record."""
    return json.dumps(record.to_dict(), sort_keys=True, separators=(",", ":"))


def parse_trial(line: str) -> TrialRecord:
    return TrialRecord.from_dict(json.loads(line))


def write_trial_log(path: str | Path, records: Sequence[TrialRecord]) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text("".join(serialize_trial(r) + "\n" for r in records))
    tmp.replace(path)


def read_trial_log(path: str | Path) -> list[TrialRecord]:
    lines = Path(path).read_text().splitlines()
    return [parse_trial(line) for line in lines if line.strip()]
