"""Shared domain types, session configuration, and screen/region geometry.

Coordinate convention used everywhere in the engine: the origin is the
geometric center of the screen, +x points right, +y points up, units are
pixels. Conversion to top-left pixel coordinates is a presentation concern
and never happens here.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict, replace
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

Vec2 = tuple[float, float]


class Ring(str, Enum):
    INNER = "inner"
    OUTER = "outer"
    NONE = "none"


class Alignment(str, Enum):
    CENTER = "center"
    CROSS = "cross"
    NONE = "none"


@dataclass(frozen=True)
class SessionConfig:
    """Session-wide geometry, timing, and rate settings.

    ``sample_rate_hz`` is the processing rate the decoding chain runs at;
    ``acquisition_rate_hz`` is the nominal amplifier rate that the
    decimation path in :mod:`neurotrack.dsp` reduces to the processing rate.
    """

    screen_width_px: int = 800
    screen_height_px: int = 800
    n_regions: int = 8
    target_radius_px: float = 40.0
    cursor_radius_px: float = 5.0
    step_seconds: float = 1.0
    trial_timeout_seconds: float = 15.0
    sample_rate_hz: float = 250.0
    acquisition_rate_hz: float = 1000.0
    refresh_rate_hz: float = 60.0
    px_per_cm: float = 32.0
    rng_seed: int = 1

    def __post_init__(self) -> None:
        if self.n_regions < 2:
            raise ValueError(f"n_regions must be >= 2, got {self.n_regions}")
        positive = {
            "screen_width_px": self.screen_width_px,
            "screen_height_px": self.screen_height_px,
            "target_radius_px": self.target_radius_px,
            "cursor_radius_px": self.cursor_radius_px,
            "step_seconds": self.step_seconds,
            "trial_timeout_seconds": self.trial_timeout_seconds,
            "sample_rate_hz": self.sample_rate_hz,
            "acquisition_rate_hz": self.acquisition_rate_hz,
            "refresh_rate_hz": self.refresh_rate_hz,
            "px_per_cm": self.px_per_cm,
        }
        for name, value in positive.items():
            if not value > 0:
                raise ValueError(f"{name} must be strictly positive, got {value}")
        frames = self.step_seconds * self.refresh_rate_hz
        if abs(frames - round(frames)) > 1e-9:
            raise ValueError(
                "step_seconds * refresh_rate_hz must be an integer number of "
                f"frames, got {frames}"
            )

    @property
    def frames_per_step(self) -> int:
        return int(round(self.step_seconds * self.refresh_rate_hz))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SessionConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown SessionConfig keys: {sorted(unknown)}")
        return cls(**data)

    def with_overrides(self, **kwargs) -> "SessionConfig":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class TargetSpec:
    """A circular selection target, position in centered coordinates."""

    position_px: Vec2
    radius_px: float
    ring: Ring = Ring.NONE
    alignment: Alignment = Alignment.NONE

    def to_dict(self) -> dict:
        return {
            "position_px": [self.position_px[0], self.position_px[1]],
            "radius_px": self.radius_px,
            "ring": self.ring.value,
            "alignment": self.alignment.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TargetSpec":
        return cls(
            position_px=(float(data["position_px"][0]), float(data["position_px"][1])),
            radius_px=float(data["radius_px"]),
            ring=Ring(data["ring"]),
            alignment=Alignment(data["alignment"]),
        )


@dataclass(frozen=True)
class StimulusLayout:
    """Radial region geometry around the cursor.

    Region ``i`` is centered on the angle ``2*pi*i / n_regions``
    (counter-clockwise, angle 0 along +x) and spans half a sector to either
    side. The geometry is cursor-relative, so it is invariant under
    translation of the cursor.
    """

    n_regions: int
    cursor_position_px: Vec2 = (0.0, 0.0)

    def __post_init__(self) -> None:
        if self.n_regions < 2:
            raise ValueError("layout needs at least 2 regions")

    @property
    def region_center_angles_rad(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.n_regions) / self.n_regions

    @property
    def region_boundary_angles_rad(self) -> np.ndarray:
        # midpoint between region i and i+1 center lines
        return (2.0 * np.arange(self.n_regions) + 1.0) * np.pi / self.n_regions

    @property
    def unit_vectors(self) -> np.ndarray:
        """(n_regions, 2) unit vectors along each region center line."""
        ang = self.region_center_angles_rad
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)

    def at_cursor(self, cursor_px: Vec2) -> "StimulusLayout":
        return StimulusLayout(self.n_regions, (float(cursor_px[0]), float(cursor_px[1])))

    def region_of(self, point_px: Sequence[float]) -> int:
        """Index of the region containing ``point_px`` (centered coords)."""
        dx = point_px[0] - self.cursor_position_px[0]
        dy = point_px[1] - self.cursor_position_px[1]
        angle = math.atan2(dy, dx) % (2.0 * math.pi)
        sector = 2.0 * math.pi / self.n_regions
        return int(math.floor(angle / sector + 0.5)) % self.n_regions

    def region_of_angles(self, angles_rad: np.ndarray) -> np.ndarray:
        """Vectorized sector lookup for angles measured from the cursor."""
        sector = 2.0 * np.pi / self.n_regions
        wrapped = np.mod(angles_rad, 2.0 * np.pi)
        return (np.floor(wrapped / sector + 0.5).astype(int)) % self.n_regions


@dataclass
class EegEpoch:
    """Multi-channel EEG window, (n_channels, n_samples), values in uV.

    ``stimulus_phase_offset`` is the sample offset of epoch start relative
    to the flicker cycle; the closed loop always cuts epochs on cycle
    boundaries so it is 0 in practice.
    """

    samples: np.ndarray
    sample_rate_hz: float
    stimulus_phase_offset: int = 0

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise ValueError(f"samples must be 2-D (channels, samples), got shape {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("epoch contains non-finite samples")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz


def stage1_targets(config: SessionConfig) -> list[TargetSpec]:
    """Eight training targets on the region center lines at radius w_s/3."""
    layout = StimulusLayout(config.n_regions)
    radius = config.screen_width_px / 3.0
    targets = []
    for ang in layout.region_center_angles_rad:
        targets.append(
            TargetSpec(
                position_px=(radius * math.cos(ang), radius * math.sin(ang)),
                radius_px=config.target_radius_px,
                ring=Ring.OUTER,
                alignment=Alignment.CENTER,
            )
        )
    return targets


def stage2_targets(config: SessionConfig) -> list[TargetSpec]:
    """32 targets: 16 directions (centers + boundaries) x 2 rings.

    Ordered inner ring first, directions in increasing angle; even
    directions lie on region center lines, odd ones on region boundaries.
    """
    n_dir = 2 * config.n_regions
    targets = []
    for ring, dist in (
        (Ring.INNER, config.screen_width_px / 6.0),
        (Ring.OUTER, config.screen_width_px / 3.0),
    ):
        for d in range(n_dir):
            ang = math.pi * d / config.n_regions
            alignment = Alignment.CENTER if d % 2 == 0 else Alignment.CROSS
            targets.append(
                TargetSpec(
                    position_px=(dist * math.cos(ang), dist * math.sin(ang)),
                    radius_px=config.target_radius_px,
                    ring=ring,
                    alignment=alignment,
                )
            )
    return targets


def hit_test(cursor_px: Sequence[float], target: TargetSpec) -> bool:
    """True iff the cursor point lies inside the target disc (boundary inclusive).

    The cursor is treated as a point; its 5 px draw radius plays no role.
    """
    dx = cursor_px[0] - target.position_px[0]
    dy = cursor_px[1] - target.position_px[1]
    if not (math.isfinite(dx) and math.isfinite(dy)):
        raise ValueError("non-finite cursor position")
    return math.hypot(dx, dy) <= target.radius_px


def default_config_path() -> Path:
    return Path(__file__).parent / "data" / "default_config.json"


def load_config(path: str | Path | None = None) -> tuple[SessionConfig, dict]:
    """Load the session JSON document: a SessionConfig plus the raw
    ``filter_bank`` section (parsed by :mod:`neurotrack.dsp`)."""
    p = Path(path) if path is not None else default_config_path()
    doc = json.loads(p.read_text())
    session = SessionConfig.from_dict(doc.get("session", {}))
    return session, doc.get("filter_bank", {})


def save_config(path: str | Path, config: SessionConfig, filter_bank: dict | None = None) -> None:
    doc = {"session": config.to_dict()}
    if filter_bank is not None:
        doc["filter_bank"] = filter_bank
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
